use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use sfcomp::montecarlo::{
    case_label, episode_seeds, write_episodes_csv, write_paired_csv, write_results_csv, write_trajectory_csv,
};
use sfcomp::trainer::{initial_params, write_curve_csv};
use sfcomp::{
    run_batch, thread_pool, CaseStats, Checkpoint, CsvMeta, EpisodeOptions, EpisodeOutput, Estimator, PairedStats, PcmParams,
    Preset, RunConfig, SimError, TrainState,
};
use thiserror::Error;

use crate::{RunArgs, TrainArgs};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: configuration, flags, missing or mismatched checkpoint.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) | SimError::UnknownCase(_) | SimError::Checkpoint(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Preset, then config file, then flags.
fn effective_config(a: &RunArgs) -> Result<RunConfig> {
    let mut c = match (&a.config, &a.preset) {
        (Some(path), None) => RunConfig::load(path)?,
        (None, Some(p)) => RunConfig::preset(p.parse::<Preset>()?),
        (None, None) => RunConfig::default(),
        (Some(_), Some(_)) => return Err(CliError::Validation("--config and --preset are mutually exclusive".into())),
    };
    if let Some(s) = a.seed {
        c.run.seed = s;
    }
    if let Some(w) = a.workers {
        c.run.workers = w;
    }
    if let Some(k) = a.dump_trajectories {
        c.run.dump_trajectories = k;
    }
    if let Some(n) = a.episodes {
        if n == 0 {
            return Err(CliError::Validation("--episodes must be at least 1".into()));
        }
    }
    Ok(c)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn prepare_out(out: &Path, cfg: &RunConfig) -> Result<CsvMeta> {
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    let meta = CsvMeta {
        config_hash: cfg.hash(),
        master_seed: cfg.run.seed,
    };
    let mut w = create(&out.join("config.toml"))?;
    writeln!(w, "# effective configuration")?;
    writeln!(w, "# config_hash={}", meta.config_hash)?;
    writeln!(w, "# master_seed={}", meta.master_seed)?;
    w.write_all(cfg.to_toml()?.as_bytes())?;
    w.flush()?;
    Ok(meta)
}

fn load_checkpoint(path: Option<&PathBuf>, cfg: &RunConfig) -> Result<Checkpoint> {
    let path = path.ok_or_else(|| CliError::Validation("--checkpoint is required".into()))?;
    if !path.exists() {
        return Err(CliError::Validation(format!("checkpoint {} does not exist", path.display())));
    }
    let ck = Checkpoint::load(path)?;
    ck.require_hash(&cfg.hash()).map_err(|e| {
        CliError::Validation(format!(
            "{e}; the checkpoint was trained under different physics, seeker, timing, guidance or estimator settings"
        ))
    })?;
    Ok(ck)
}

struct CaseRun {
    outputs: Vec<EpisodeOutput>,
    elapsed_s: f64,
}

fn run_case(cfg: &RunConfig, case: u8, estimator: Estimator, episodes: usize, dump: usize) -> Result<CaseRun> {
    let eng = cfg.engagement(case)?;
    let pool = thread_pool(cfg.run.workers)?;
    let seeds = episode_seeds(cfg.run.seed, 0, episodes);
    let start = Instant::now();
    let outputs = run_batch(&eng, estimator, &seeds, &pool, |i| EpisodeOptions {
        trajectory: i < dump,
        ..EpisodeOptions::default()
    })?;
    Ok(CaseRun {
        outputs,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

fn dump_trajectories(out: &Path, meta: &CsvMeta, tag: &str, run: &CaseRun) -> Result<()> {
    let dir = out.join("trajectories");
    for (i, o) in run.outputs.iter().enumerate() {
        if let Some(rows) = &o.trajectory {
            fs::create_dir_all(&dir)?;
            let mut w = create(&dir.join(format!("{tag}_ep{i:04}.csv")))?;
            write_trajectory_csv(&mut w, meta, rows)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn write_episodes(out: &Path, meta: &CsvMeta, name: &str, run: &CaseRun) -> Result<()> {
    let records: Vec<_> = run.outputs.iter().map(|o| o.record.clone()).collect();
    let mut w = create(&out.join(name))?;
    write_episodes_csv(&mut w, meta, &records)?;
    w.flush()?;
    Ok(())
}

fn stats(cfg: &RunConfig, case: u8, run: &CaseRun) -> Result<CaseStats> {
    let records: Vec<_> = run.outputs.iter().map(|o| o.record.clone()).collect();
    let label = if cfg.scale_factors.is_some() { case_label(None) } else { case.to_string() };
    Ok(CaseStats::from_records(&label, &records)?)
}

fn report(what: &str, s: &CaseStats, elapsed_s: f64) {
    eprintln!(
        "{what} case {}: n={} hit50={:.1}% hit100={:.1}% fuel={:.2}±{:.2} kg violations={:.1}% median miss={:.3} m ({elapsed_s:.1} s)",
        s.case, s.n, s.hit50_pct, s.hit100_pct, s.fuel_mu_kg, s.fuel_sigma_kg, s.violation_pct, s.median_miss_m
    );
}

fn write_results(out: &Path, meta: &CsvMeta, name: &str, rows: &[CaseStats]) -> Result<()> {
    let mut w = create(&out.join(name))?;
    write_results_csv(&mut w, meta, rows)?;
    w.flush()?;
    Ok(())
}

/// Trajectories come from the first `k` episodes of the first listed case.
fn dump_count(cfg: &RunConfig, index: usize) -> usize {
    if index == 0 {
        cfg.run.dump_trajectories
    } else {
        0
    }
}

pub fn baseline(a: &RunArgs) -> Result<()> {
    let mut cfg = effective_config(a)?;
    if !a.case.is_empty() {
        cfg.run.baseline_cases = a.case.clone();
    }
    if let Some(n) = a.episodes {
        cfg.run.episodes = n;
    }
    cfg.validate()?;
    let meta = prepare_out(&a.out, &cfg)?;
    let mut rows = Vec::new();
    for (i, &case) in cfg.run.baseline_cases.iter().enumerate() {
        let run = run_case(&cfg, case, Estimator::Off, cfg.run.episodes, dump_count(&cfg, i))?;
        let s = stats(&cfg, case, &run)?;
        report("baseline", &s, run.elapsed_s);
        write_episodes(&a.out, &meta, &format!("episodes_baseline_case{case}.csv"), &run)?;
        dump_trajectories(&a.out, &meta, &format!("baseline_case{case}"), &run)?;
        rows.push(s);
    }
    write_results(&a.out, &meta, "results_baseline.csv", &rows)
}

pub fn eval(a: &RunArgs) -> Result<()> {
    let mut cfg = effective_config(a)?;
    if !a.case.is_empty() {
        cfg.run.eval_cases = a.case.clone();
    }
    if let Some(n) = a.episodes {
        cfg.run.episodes = n;
    }
    cfg.validate()?;
    let ck = load_checkpoint(a.checkpoint.as_ref(), &cfg)?;
    let params: PcmParams = ck.params()?;
    let meta = prepare_out(&a.out, &cfg)?;
    let mut rows = Vec::new();
    let mut paired = Vec::new();
    for (i, &case) in cfg.run.eval_cases.iter().enumerate() {
        let run = run_case(&cfg, case, Estimator::Pcm(&params), cfg.run.episodes, dump_count(&cfg, i))?;
        let s = stats(&cfg, case, &run)?;
        report("compensated", &s, run.elapsed_s);
        write_episodes(&a.out, &meta, &format!("episodes_compensated_case{case}.csv"), &run)?;
        dump_trajectories(&a.out, &meta, &format!("compensated_case{case}"), &run)?;
        if cfg.run.paired_baseline {
            let base = run_case(&cfg, case, Estimator::Off, cfg.run.episodes, 0)?;
            report("baseline", &stats(&cfg, case, &base)?, base.elapsed_s);
            write_episodes(&a.out, &meta, &format!("episodes_baseline_case{case}.csv"), &base)?;
            let b: Vec<_> = base.outputs.into_iter().map(|o| o.record).collect();
            let c: Vec<_> = run.outputs.iter().map(|o| o.record.clone()).collect();
            paired.push(PairedStats::new(&s.case, &b, &c)?);
        }
        rows.push(s);
    }
    write_results(&a.out, &meta, "results_compensated.csv", &rows)?;
    if !paired.is_empty() {
        let mut w = create(&a.out.join("paired.csv"))?;
        write_paired_csv(&mut w, &meta, &paired)?;
        w.flush()?;
    }
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = effective_config(&a.run)?;
    match a.run.case.as_slice() {
        [] => {}
        [c] => cfg.run.case = *c,
        _ => return Err(CliError::Validation("train takes a single --case".into())),
    }
    if let Some(n) = a.run.episodes {
        cfg.train.episodes = n;
    }
    cfg.validate()?;
    let mut state = if a.resume {
        let ck = load_checkpoint(a.run.checkpoint.as_ref(), &cfg)?;
        let adam = ck
            .adam_state()?
            .ok_or_else(|| CliError::Validation("checkpoint has no optimizer state to resume from".into()))?;
        TrainState {
            params: ck.params()?,
            adam,
            episodes_done: ck.episodes,
        }
    } else {
        let (params, adam) = initial_params(&cfg.pcm, cfg.run.seed);
        TrainState {
            params,
            adam,
            episodes_done: 0,
        }
    };
    let meta = prepare_out(&a.run.out, &cfg)?;
    let eng = cfg.engagement(cfg.run.case)?;
    let pool = thread_pool(cfg.run.workers)?;
    let start = Instant::now();
    let curve = sfcomp::train(&eng, &cfg.train, &mut state, cfg.run.seed, &pool, |row, m| {
        eprintln!(
            "episode {:>6}: hit50={:5.1}% hit100={:5.1}% L={:.4e} L_o={:.4e} L_eps={:.4e} (zero {:.4e}) omega_err={:.2e} fuel={:.2} kg \
buffer L {:.4e} -> {:.4e} ({} skipped, {:.0} s)",
            row.episode,
            row.window_hit50_pct,
            row.window_hit100_pct,
            row.l,
            row.l_o,
            row.l_eps,
            row.l_eps_zero,
            row.final_omega_err,
            row.mean_fuel_kg,
            m.before.total / m.steps.max(1) as f64,
            m.after.total / m.steps.max(1) as f64,
            m.skipped,
            start.elapsed().as_secs_f64()
        );
    })?;
    let mut w = create(&a.run.out.join("curve.csv"))?;
    write_curve_csv(&mut w, &meta, &curve)?;
    w.flush()?;
    let ck_path = a.run.checkpoint.clone().unwrap_or_else(|| a.run.out.join("checkpoint.json"));
    Checkpoint::new(&state.params, Some(&state.adam), &meta.config_hash, state.episodes_done).save(&ck_path)?;
    eprintln!("checkpoint written to {}", ck_path.display());
    Ok(())
}
