use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use stalker_sim::{load, run_experiment, Experiment, Overrides};

/// Small configs that finish in a few seconds.
pub fn quick_config(experiment: Experiment) -> String {
    let body = match experiment {
        Experiment::Stalker => "gamma=1\neps=0.05\nhorizon=5\nx0=-0.5\ny0=0.5",
        Experiment::Convergence => "paths=8\neps=0.02\neps_prime=0.01\ndt=1e-5",
        Experiment::Hitting => "gamma=0.5\nk=1\neps=0.05\nreplicas=64",
        Experiment::Generator => "method=monte_carlo\nsamples=20000",
        Experiment::OpinionGame => "horizon=20000\nsnapshot_steps=10000",
        Experiment::Stats => "source=phi_chain\nsteps=5000\nreplicas=16\ngamma=0.5",
    };
    format!("experiment={experiment}\nseed=11\n{body}\n")
}

/// Runs `text` into `dir` and returns every CSV written, by file name.
pub fn run_to(text: &str, dir: &Path, threads: usize) -> BTreeMap<String, Vec<u8>> {
    let overrides = Overrides {
        threads: Some(threads),
        output_dir: Some(dir.to_path_buf()),
        ..Overrides::default()
    };
    let config = load(text, |_| None, &overrides).expect("valid config");
    let files = run_experiment(&config).expect("run succeeds");
    files
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(p).unwrap()))
        .collect()
}
