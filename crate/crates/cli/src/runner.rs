//! Runs a validated config and writes its artifacts.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use stalker_core::io::{fmt_real, write_rows};
use stalker_core::opinion_game::Game;
use stalker_core::phi_chain::{generator_gap, hitting_experiment, phi_path, taylor_condition, PhiState};
use stalker_core::rng_paths::{gen_fine_path, sample_skeleton, RngStream};
use stalker_core::stalker::{convergence_experiment, sandwich_check, DriftParams, StalkerTrajectory};
use stalker_core::stats::{
    excess_kurtosis, recurrence_diagnostics, returns, volatility_autocorr, white_noise_band, write_acf_csv,
    SeriesRecord,
};
use thiserror::Error;

use crate::config::{
    ConvergencePlan, ExperimentConfig, GamePlan, GeneratorPlan, Plan, RecurrencePlan, StalkerPlan, StatsPlan,
    StatsSource,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] stalker_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("could not start the worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

struct Output {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>, RunError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        })?;
        self.written.push(path);
        Ok(BufWriter::new(file))
    }
}

/// Writes `manifest.txt` and the experiment's CSV files into the output
/// directory; returns the paths written.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<PathBuf>, RunError> {
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|source| RunError::Io {
        path: dir.clone(),
        source,
    })?;
    let mut out = Output {
        dir,
        written: Vec::new(),
    };
    let manifest = out.dir.join("manifest.txt");
    fs::write(&manifest, config.manifest()).map_err(|source| RunError::Io {
        path: manifest.clone(),
        source,
    })?;
    out.written.push(manifest);

    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.threads).build()?;
    info!("running {} with seed {} on {} threads", config.experiment, config.seed, config.threads);
    pool.install(|| match &config.plan {
        Plan::Stalker(plan) => run_stalker(plan, config.seed, &mut out),
        Plan::Convergence(plan) => run_convergence(plan, config.seed, &mut out),
        Plan::Hitting(spec) => {
            let result = hitting_experiment(spec)?;
            info!(
                "estimate {} ({} lower, {} upper, {} censored)",
                result.estimate, result.lower_first, result.upper_first, result.censored
            );
            result.write_csv(out.create("hitting.csv")?)?;
            Ok(())
        }
        Plan::Generator(plan) => run_generator(plan, config.seed, &mut out),
        Plan::OpinionGame(plan) => run_game(plan, config.seed, &mut out),
        Plan::Stats(plan) => run_stats(plan, config.seed, &mut out),
    })?;
    Ok(out.written)
}

/// Reads, validates and runs a config file.
pub fn run_file(path: &Path, overrides: &crate::config::Overrides) -> Result<Vec<PathBuf>, crate::Error> {
    let text = fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let config = crate::config::load(&text, crate::config::process_env, overrides)?;
    Ok(run_experiment(&config)?)
}

fn run_stalker(plan: &StalkerPlan, seed: u64, out: &mut Output) -> Result<(), RunError> {
    let mut rng = RngStream::new(seed, 0);
    let skeleton = sample_skeleton(plan.eps, plan.horizon, plan.origin, &mut rng)?;
    skeleton.write_csv(out.create("skeleton.csv")?)?;
    let trajectory = StalkerTrajectory::new(skeleton, DriftParams::new(plan.gamma)?, plan.x0, plan.y0);
    trajectory.write_csv(out.create("trajectory.csv")?)?;
    Ok(())
}

fn run_convergence(plan: &ConvergencePlan, seed: u64, out: &mut Output) -> Result<(), RunError> {
    let rows = (0..plan.paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = RngStream::new(seed, p);
            let path = gen_fine_path(plan.t_star, plan.dt, &mut rng)?;
            let report = convergence_experiment(&path, plan.eps, plan.eps_prime, plan.gamma, plan.t_star)?;
            let sandwich = sandwich_check(&path, plan.eps, plan.eps_prime, plan.gamma, plan.t_star)?;
            Ok(vec![
                p.to_string(),
                fmt_real(report.sup_diff),
                fmt_real(report.bound),
                u8::from(report.violation).to_string(),
                fmt_real(sandwich.lower_slack),
                fmt_real(sandwich.upper_slack),
            ])
        })
        .collect::<stalker_core::Result<Vec<_>>>()?;
    write_rows(
        out.create("convergence.csv")?,
        &["path", "sup_diff", "bound", "violation", "lower_slack", "upper_slack"],
        rows,
    )?;
    Ok(())
}

fn run_generator(plan: &GeneratorPlan, seed: u64, out: &mut Output) -> Result<(), RunError> {
    let mut rng = RngStream::new(seed, 0);
    let est = generator_gap(plan.state, plan.eps, plan.gamma, plan.method, plan.samples, &mut rng)?;
    let taylor = taylor_condition(plan.state, plan.gamma);
    write_rows(
        out.create("generator.csv")?,
        &["x", "y", "gamma", "eps", "method", "lg_value", "std_err", "taylor_condition"],
        [vec![
            fmt_real(plan.state.x),
            fmt_real(plan.state.y),
            fmt_real(plan.gamma),
            fmt_real(plan.eps),
            est.method.name().to_string(),
            fmt_real(est.lg_value),
            fmt_real(est.std_err),
            u8::from(taylor).to_string(),
        ]],
    )?;
    Ok(())
}

fn run_game(plan: &GamePlan, seed: u64, out: &mut Output) -> Result<(), RunError> {
    let mut game = Game::new(plan.game.clone(), RngStream::new(seed, 0))?;
    let record = game.run(plan.horizon, &plan.snapshot_steps)?;
    record.write_series(out.create("series.csv")?)?;
    for (step, book) in &record.snapshots {
        book.write_snapshot(out.create(&format!("snapshot_{step}.csv"))?)?;
    }
    Ok(())
}

fn run_stats(plan: &StatsPlan, seed: u64, out: &mut Output) -> Result<(), RunError> {
    match plan.source {
        StatsSource::OpinionGame => {
            let mut game = Game::new(plan.game.clone(), RngStream::new(seed, 0))?;
            let record = game.run(plan.horizon, &[])?;
            let times = record.rows.iter().map(|r| r.step as f64).collect();
            let prices = SeriesRecord::new("price", times, record.prices())?;
            let rets = returns(&prices)?;
            let acf = volatility_autocorr(&rets, plan.window, plan.max_lag)?;
            let windows = rets.len() / plan.window;
            rets.write_csv(out.create("returns.csv")?, "step")?;
            write_acf_csv(out.create("acf.csv")?, &acf)?;
            write_rows(
                out.create("summary.csv")?,
                &["metric", "value"],
                [
                    vec!["returns".to_string(), rets.len().to_string()],
                    vec!["excess_kurtosis".to_string(), fmt_real(excess_kurtosis(rets.values()))],
                    vec!["windows".to_string(), windows.to_string()],
                    vec!["white_noise_band".to_string(), fmt_real(white_noise_band(windows))],
                ],
            )?;
        }
        StatsSource::PhiChain => {
            let rows = recurrence_rows(&plan.recurrence, seed)?;
            write_rows(
                out.create("recurrence.csv")?,
                &["replica", "r", "horizon", "last_exit", "visit_count", "growth_exponent"],
                rows,
            )?;
        }
    }
    Ok(())
}

fn recurrence_rows(plan: &RecurrencePlan, seed: u64) -> Result<Vec<Vec<String>>, RunError> {
    let params = DriftParams::new(plan.gamma)?;
    let start = PhiState::new(plan.start.x, plan.start.y)?;
    let rows = (0..plan.replicas)
        .into_par_iter()
        .map(|rep| {
            let mut rng = RngStream::new(seed, rep);
            let path = phi_path(start, plan.eps, &params, plan.steps, &mut rng);
            let distance = SeriesRecord::indexed("l1", path.iter().map(PhiState::l1).collect());
            let report = recurrence_diagnostics(&distance, plan.r);
            vec![
                rep.to_string(),
                fmt_real(report.r),
                fmt_real(report.horizon),
                fmt_real(report.last_exit),
                report.visit_count.to_string(),
                fmt_real(report.growth_exponent),
            ]
        })
        .collect();
    Ok(rows)
}
