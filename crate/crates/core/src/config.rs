//! Run configuration: one TOML document with defaults for every field.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{GravityModel, MassProperties, MissileModel, ThrusterTable};
use crate::episode::{EngagementConfig, TimingConfig};
use crate::error::{Result, SimError};
use crate::guidance::GuidanceConfig;
use crate::pcm::{AdamConfig, InitConfig};
use crate::scenario::ScenarioConfig;
use crate::seeker::{ScaleFactorConfig, SeekerConfig};
use crate::trainer::TrainConfig;

/// Defaults for the command-line run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Scale-factor case for `train`.
    pub case: u8,
    pub baseline_cases: Vec<u8>,
    pub eval_cases: Vec<u8>,
    pub episodes: usize,
    pub seed: u64,
    /// Zero uses every available core.
    pub workers: usize,
    pub dump_trajectories: usize,
    /// Also run the uncompensated system during `eval` and write the
    /// paired comparison.
    pub paired_baseline: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            case: 3,
            baseline_cases: vec![0, 1, 2, 3, 4, 5, 6],
            eval_cases: vec![1, 2, 3, 4, 5, 6],
            episodes: 500,
            seed: 1,
            workers: 0,
            dump_trajectories: 0,
            paired_baseline: true,
        }
    }
}

/// Airframe and propulsion constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub isp_s: f64,
    pub tau_u_s: f64,
    pub mass: MassProperties,
    pub gravity: GravityModel,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        let m = MissileModel::default();
        PhysicsConfig {
            isp_s: m.isp_s,
            tau_u_s: m.tau_u_s,
            mass: m.props,
            gravity: m.gravity,
        }
    }
}

impl PhysicsConfig {
    pub fn missile(&self) -> MissileModel {
        MissileModel {
            props: self.mass,
            thrusters: ThrusterTable::default(),
            isp_s: self.isp_s,
            tau_u_s: self.tau_u_s,
            gravity: self.gravity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcmConfig {
    pub hidden: usize,
    pub init: InitConfig,
    pub adam: AdamConfig,
}

impl Default for PcmConfig {
    fn default() -> Self {
        PcmConfig {
            hidden: 64,
            init: InitConfig::default(),
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub physics: PhysicsConfig,
    pub seeker: SeekerConfig,
    pub timing: TimingConfig,
    pub scenario: ScenarioConfig,
    pub guidance: GuidanceConfig,
    /// Custom scale-factor bounds replacing the case table.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale_factors: Option<ScaleFactorConfig>,
    pub pcm: PcmConfig,
    pub train: TrainConfig,
}

/// Named starting points for `RunConfig`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 4000 training episodes, with the error head stepped at 1% of the
    /// base learning rate.
    Desk,
    /// 20000 training episodes.
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(SimError::Config(format!("unknown preset {s:?} (expected desk or paper)"))),
        }
    }
}

#[derive(Serialize)]
struct HashedSections<'a> {
    pcm: &'a PcmConfig,
    physics: &'a PhysicsConfig,
    seeker: &'a SeekerConfig,
    guidance: &'a GuidanceConfig,
    timing: &'a TimingConfig,
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        let mut c = RunConfig::default();
        c.train.episodes = match p {
            Preset::Desk => 4000,
            Preset::Paper => 20000,
        };
        c.pcm.adam.learning_rate = 5e-5;
        if p == Preset::Desk {
            c.pcm.adam.eps_head_lr_scale = 0.01;
        }
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            SimError::Config(m) => SimError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.episodes == 0 {
            return Err(SimError::Config("episodes must be at least 1".into()));
        }
        if self.run.eval_cases.is_empty() || self.run.baseline_cases.is_empty() {
            return Err(SimError::Config("case lists must not be empty".into()));
        }
        for &c in self.run.eval_cases.iter().chain(&self.run.baseline_cases).chain([&self.run.case]) {
            ScaleFactorConfig::case(c)?;
        }
        if self.pcm.hidden == 0 {
            return Err(SimError::Config("pcm.hidden must be at least 1".into()));
        }
        let a = &self.pcm.adam;
        if !(a.learning_rate > 0.0
            && a.eps_head_lr_scale >= 0.0
            && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return Err(SimError::Config("adam settings out of range".into()));
        }
        self.train.validate()?;
        self.engagement(self.run.case)?.validate()
    }

    /// Engagement for one case, or for the custom bounds when given.
    pub fn engagement(&self, case: u8) -> Result<EngagementConfig> {
        let scale_factors = match self.scale_factors {
            Some(sf) => sf,
            None => ScaleFactorConfig::case(case)?,
        };
        Ok(EngagementConfig {
            missile: self.physics.missile(),
            seeker: self.seeker,
            scale_factors,
            guidance: self.guidance,
            scenario: self.scenario,
            timing: self.timing,
        })
    }

    /// SHA-256 over the sections that change what a trained estimator sees
    /// or how it is shaped; checkpoints are bound to this value.
    pub fn hash(&self) -> String {
        let sections = HashedSections {
            pcm: &self.pcm,
            physics: &self.physics,
            seeker: &self.seeker,
            guidance: &self.guidance,
            timing: &self.timing,
        };
        let json = serde_json::to_vec(&sections).expect("config sections serialize");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn shipped_default_file_matches_defaults() {
        let c = RunConfig::from_toml(include_str!("../../../configs/default.toml")).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("[run]\ncase = 3\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        assert!(RunConfig::from_toml("[physics]\nisp = 250.0\n").is_err());
    }

    #[test]
    fn partial_files_keep_defaults() {
        let c = RunConfig::from_toml("[physics]\nisp_s = 300.0\n").unwrap();
        assert_eq!(c.physics.isp_s, 300.0);
        assert_eq!(c.physics.tau_u_s, 0.02);
        assert_eq!(c.run.case, 3);
    }

    #[test]
    fn gravity_mode_is_selectable() {
        let c = RunConfig::from_toml("[physics.gravity]\nmode = \"off\"\n").unwrap();
        assert_eq!(c.physics.gravity, GravityModel::Off);
    }

    #[test]
    fn zero_episodes_and_bad_cases_fail_validation() {
        assert!(RunConfig::from_toml("[run]\nepisodes = 0\n").is_err());
        assert!(RunConfig::from_toml("[run]\ncase = 9\n").is_err());
    }

    #[test]
    fn presets() {
        let d = RunConfig::preset(Preset::Desk);
        assert_eq!(d.train.episodes, 4000);
        assert_eq!(d.pcm.adam.eps_head_lr_scale, 0.01);
        let p = RunConfig::preset(Preset::Paper);
        assert_eq!(p.train.episodes, 20000);
        assert_eq!(p.pcm.adam.learning_rate, 5e-5);
        assert_eq!(p.pcm.adam.eps_head_lr_scale, 1.0);
        assert_eq!("paper".parse::<Preset>().unwrap(), Preset::Paper);
    }

    #[test]
    fn hash_tracks_estimator_relevant_sections_only() {
        let base = RunConfig::default();
        let mut other = base.clone();
        other.run.seed = 99;
        other.train.episodes = 10;
        other.scenario.maneuvers = false;
        assert_eq!(base.hash(), other.hash());
        other.seeker.sigma_theta = 2e-3;
        assert_ne!(base.hash(), other.hash());
        assert_eq!(base.hash().len(), 64);
    }

    #[test]
    fn custom_bounds_replace_the_case_table() {
        let text = "[scale_factors]\nangle_dependent = false\nangle_bounds = [0.0, 0.0]\nomega_bounds = [-0.02, 0.02]\n";
        let c = RunConfig::from_toml(text).unwrap();
        let e = c.engagement(1).unwrap();
        assert_eq!(e.scale_factors.omega_bounds, [-0.02, 0.02]);
        assert_eq!(e.scale_factors.case_id, None);
    }
}
