//! Seeded Monte Carlo batches, summary statistics and their CSV forms.
//!
//! Episode `i` of a batch with master seed `s` uses the `i`-th output of a
//! SplitMix64 generator seeded with `s`, independent of the case and of the
//! estimator, so batches that differ only in those are paired episode by
//! episode.

use std::io::Write;

use rayon::prelude::*;

use crate::episode::{run_episode, EngagementConfig, EpisodeOptions, EpisodeOutput, EpisodeRecord, Estimator, TrajectoryRow};
use crate::error::{Result, SimError};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub const HIT50_M: f64 = 0.5;
pub const HIT100_M: f64 = 1.0;

/// SplitMix64 output function.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn episode_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1))))
}

pub fn episode_seeds(master: u64, first: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| episode_seed(master, first + i)).collect()
}

/// Worker pool; zero workers means one per available core.
pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SimError::Config(format!("cannot start worker pool: {e}")))
}

/// Run one episode per seed in parallel; results come back in seed order.
pub fn run_batch<F>(
    cfg: &EngagementConfig,
    estimator: Estimator,
    seeds: &[u64],
    pool: &rayon::ThreadPool,
    options: F,
) -> Result<Vec<EpisodeOutput>>
where
    F: Fn(usize) -> EpisodeOptions + Sync,
{
    pool.install(|| {
        seeds
            .par_iter()
            .enumerate()
            .map(|(index, &seed)| {
                run_episode(cfg, estimator, seed, &options(index)).map_err(|e| SimError::Episode {
                    index,
                    seed,
                    source: Box::new(e),
                })
            })
            .collect()
    })
}

/// Sum after sorting, so the result does not depend on input order.
fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn pct(count: usize, n: usize) -> f64 {
    100.0 * count as f64 / n as f64
}

/// One row of the results table. `fuel_sigma_kg` is the population
/// standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseStats {
    pub case: String,
    pub n: usize,
    pub hit50_pct: f64,
    pub hit100_pct: f64,
    pub fuel_mu_kg: f64,
    pub fuel_sigma_kg: f64,
    pub violation_pct: f64,
    pub mean_miss_m: f64,
    pub median_miss_m: f64,
}

pub fn case_label(case: Option<u8>) -> String {
    case.map_or_else(|| "custom".to_string(), |c| c.to_string())
}

impl CaseStats {
    pub fn from_records(case: &str, records: &[EpisodeRecord]) -> Result<Self> {
        let n = records.len();
        if n == 0 {
            return Err(SimError::Config("statistics need at least one episode".into()));
        }
        let nf = n as f64;
        let fuel: Vec<f64> = records.iter().map(|r| r.fuel_kg).collect();
        let miss: Vec<f64> = records.iter().map(|r| r.miss_m).collect();
        let mu = sorted_sum(fuel.clone()) / nf;
        let var = sorted_sum(fuel.iter().map(|f| (f - mu) * (f - mu)).collect()) / nf;
        Ok(CaseStats {
            case: case.to_string(),
            n,
            hit50_pct: pct(records.iter().filter(|r| r.hit(HIT50_M)).count(), n),
            hit100_pct: pct(records.iter().filter(|r| r.hit(HIT100_M)).count(), n),
            fuel_mu_kg: mu,
            fuel_sigma_kg: var.sqrt(),
            violation_pct: pct(records.iter().filter(|r| r.termination.is_violation()).count(), n),
            mean_miss_m: sorted_sum(miss.clone()) / nf,
            median_miss_m: median(miss),
        })
    }
}

/// Compensated against uncompensated runs of the same seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedStats {
    pub baseline: CaseStats,
    pub compensated: CaseStats,
    /// Hit-50 cm outcome counts: both, compensated only, baseline only.
    pub both_hit50: usize,
    pub compensated_only_hit50: usize,
    pub baseline_only_hit50: usize,
    /// Episodes where compensation reduced the miss distance.
    pub miss_reduced: usize,
}

impl PairedStats {
    pub fn new(case: &str, baseline: &[EpisodeRecord], compensated: &[EpisodeRecord]) -> Result<Self> {
        if baseline.len() != compensated.len() || baseline.iter().zip(compensated).any(|(a, b)| a.seed != b.seed) {
            return Err(SimError::Shape("paired batches must cover the same seeds in the same order".into()));
        }
        let pairs = || baseline.iter().zip(compensated);
        let count = |f: &dyn Fn(&EpisodeRecord, &EpisodeRecord) -> bool| pairs().filter(|(a, b)| f(a, b)).count();
        Ok(PairedStats {
            baseline: CaseStats::from_records(case, baseline)?,
            compensated: CaseStats::from_records(case, compensated)?,
            both_hit50: count(&|a, b| a.hit(HIT50_M) && b.hit(HIT50_M)),
            compensated_only_hit50: count(&|a, b| !a.hit(HIT50_M) && b.hit(HIT50_M)),
            baseline_only_hit50: count(&|a, b| a.hit(HIT50_M) && !b.hit(HIT50_M)),
            miss_reduced: count(&|a, b| b.miss_m < a.miss_m),
        })
    }
}

/// Provenance written as `#` comment lines ahead of every CSV header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvMeta {
    pub config_hash: String,
    pub master_seed: u64,
}

impl CsvMeta {
    pub fn write(&self, w: &mut impl Write, kind: &str) -> Result<()> {
        writeln!(w, "# sfcomp {kind}")?;
        writeln!(w, "# config_hash={}", self.config_hash)?;
        writeln!(w, "# master_seed={}", self.master_seed)?;
        Ok(())
    }
}

pub const RESULTS_HEADER: &str = "case,n,hit50_pct,hit100_pct,fuel_mu_kg,fuel_sigma_kg,violation_pct,mean_miss_m,median_miss_m";

pub fn write_results_csv(w: &mut impl Write, meta: &CsvMeta, rows: &[CaseStats]) -> Result<()> {
    meta.write(w, "results")?;
    writeln!(w, "# fuel_sigma_kg=population standard deviation")?;
    writeln!(w, "{RESULTS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.case, r.n, r.hit50_pct, r.hit100_pct, r.fuel_mu_kg, r.fuel_sigma_kg, r.violation_pct, r.mean_miss_m, r.median_miss_m
        )?;
    }
    Ok(())
}

pub fn write_episodes_csv(w: &mut impl Write, meta: &CsvMeta, records: &[EpisodeRecord]) -> Result<()> {
    meta.write(w, "episodes")?;
    writeln!(w, "index,seed,case,miss_m,fuel_kg,termination,time_s,steps,clamped_steps")?;
    for (i, r) in records.iter().enumerate() {
        writeln!(
            w,
            "{i},{},{},{},{},{},{},{},{}",
            r.seed,
            case_label(r.case_id),
            r.miss_m,
            r.fuel_kg,
            r.termination.as_str(),
            r.time_s,
            r.steps,
            r.clamped_steps
        )?;
    }
    Ok(())
}

pub fn write_paired_csv(w: &mut impl Write, meta: &CsvMeta, rows: &[PairedStats]) -> Result<()> {
    meta.write(w, "paired comparison")?;
    writeln!(
        w,
        "case,n,baseline_hit50_pct,compensated_hit50_pct,baseline_hit100_pct,compensated_hit100_pct,\
baseline_median_miss_m,compensated_median_miss_m,baseline_fuel_mu_kg,compensated_fuel_mu_kg,\
baseline_violation_pct,compensated_violation_pct,both_hit50,compensated_only_hit50,baseline_only_hit50,miss_reduced"
    )?;
    for p in rows {
        let (b, c) = (&p.baseline, &p.compensated);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            b.case,
            b.n,
            b.hit50_pct,
            c.hit50_pct,
            b.hit100_pct,
            c.hit100_pct,
            b.median_miss_m,
            c.median_miss_m,
            b.fuel_mu_kg,
            c.fuel_mu_kg,
            b.violation_pct,
            c.violation_pct,
            p.both_hit50,
            p.compensated_only_hit50,
            p.baseline_only_hit50,
            p.miss_reduced
        )?;
    }
    Ok(())
}

pub const TRAJECTORY_HEADER: &str = "t,theta_u_meas,theta_v_meas,theta_u_stab,theta_v_stab,\
eps_true_0,eps_true_1,eps_true_2,eps_true_3,eps_true_4,\
eps_hat_0,eps_hat_1,eps_hat_2,eps_hat_3,eps_hat_4,omega_x,omega_y,omega_z,fuel_kg,thruster_flags";

/// `thruster_flags` lists one `0`/`1` per thruster in table order.
pub fn write_trajectory_csv(w: &mut impl Write, meta: &CsvMeta, rows: &[TrajectoryRow]) -> Result<()> {
    meta.write(w, "trajectory")?;
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for r in rows {
        write!(w, "{},{},{},{},{}", r.t, r.theta_meas.0, r.theta_meas.1, r.theta_stab.0, r.theta_stab.1)?;
        for x in r.eps_true.iter().chain(&r.eps_hat) {
            write!(w, ",{x}")?;
        }
        let flags: String = r.thrusters.iter().map(|&on| if on { '1' } else { '0' }).collect();
        writeln!(w, ",{},{},{},{},{flags}", r.omega.x, r.omega.y, r.omega.z, r.fuel_kg)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::Termination;
    use crate::scenario::{sample_draw, ScenarioConfig};
    use rand::SeedableRng;

    fn record(seed: u64, miss: f64, fuel: f64, termination: Termination) -> EpisodeRecord {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        EpisodeRecord {
            seed,
            case_id: Some(3),
            miss_m: miss,
            fuel_kg: fuel,
            termination,
            steps: 10,
            time_s: 0.4,
            clamped_steps: 0,
            draw: sample_draw(&ScenarioConfig::default(), &mut rng),
            estimator: None,
        }
    }

    #[test]
    fn splitmix_reference_values() {
        // First outputs of the reference generator seeded with 0.
        assert_eq!(episode_seed(0, 0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(episode_seed(0, 1), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(episode_seed(0, 2), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn seeds_are_distinct_and_prefix_stable() {
        let a = episode_seeds(7, 0, 1000);
        let mut sorted = a.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 1000);
        assert_eq!(episode_seeds(7, 0, 10), a[..10]);
        assert_eq!(episode_seeds(7, 500, 3), a[500..503]);
    }

    #[test]
    fn population_sigma_of_two_episodes() {
        let rs = [record(1, 0.25, 10.0, Termination::Completed), record(2, 0.75, 20.0, Termination::Completed)];
        let s = CaseStats::from_records("3", &rs).unwrap();
        assert_eq!(s.fuel_mu_kg, 15.0);
        assert_eq!(s.fuel_sigma_kg, 5.0);
        assert_eq!(s.hit50_pct, 50.0);
        assert_eq!(s.hit100_pct, 100.0);
        assert_eq!(s.median_miss_m, 0.5);
    }

    #[test]
    fn single_perfect_intercept() {
        let s = CaseStats::from_records("0", &[record(1, 0.0, 3.0, Termination::Completed)]).unwrap();
        assert_eq!((s.hit50_pct, s.hit100_pct, s.fuel_sigma_kg, s.violation_pct), (100.0, 100.0, 0.0, 0.0));
    }

    #[test]
    fn violations_and_thresholds() {
        let rs = [
            record(1, 0.1, 1.0, Termination::FieldOfView),
            record(2, 0.5, 1.0, Termination::Completed),
            record(3, 0.99, 1.0, Termination::Completed),
            record(4, 3.0, 1.0, Termination::RateLimit),
        ];
        let s = CaseStats::from_records("4", &rs).unwrap();
        assert_eq!(s.hit50_pct, 0.0);
        assert_eq!(s.hit100_pct, 50.0);
        assert_eq!(s.violation_pct, 50.0);
        assert!(CaseStats::from_records("4", &[]).is_err());
    }

    #[test]
    fn statistics_ignore_record_order() {
        let rs: Vec<_> = (0..50)
            .map(|i| record(i, 0.013 * i as f64, 1.0 + 0.37 * ((i * 7919) % 13) as f64, Termination::Completed))
            .collect();
        let mut rev = rs.clone();
        rev.reverse();
        assert_eq!(CaseStats::from_records("1", &rs).unwrap(), CaseStats::from_records("1", &rev).unwrap());
    }

    #[test]
    fn paired_counts() {
        let base = [record(1, 0.8, 5.0, Termination::Completed), record(2, 0.3, 5.0, Termination::Completed)];
        let comp = [record(1, 0.2, 4.0, Termination::Completed), record(2, 0.6, 4.0, Termination::Completed)];
        let p = PairedStats::new("3", &base, &comp).unwrap();
        assert_eq!((p.both_hit50, p.compensated_only_hit50, p.baseline_only_hit50, p.miss_reduced), (0, 1, 1, 1));
        assert!(PairedStats::new("3", &base, &comp[..1]).is_err());
    }

    #[test]
    fn results_csv_layout() {
        let s = CaseStats::from_records("3", &[record(1, 0.2, 10.0, Termination::Completed)]).unwrap();
        let meta = CsvMeta {
            config_hash: "abc".into(),
            master_seed: 5,
        };
        let mut out = Vec::new();
        write_results_csv(&mut out, &meta, &[s]).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(lines, [RESULTS_HEADER, "3,1,100,100,10,0,0,0.2,0.2"]);
        assert!(text.contains("# config_hash=abc\n# master_seed=5\n"));
    }
}
