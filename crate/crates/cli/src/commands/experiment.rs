use std::path::PathBuf;

use anyhow::Result;
use pnmm_core::eval::{run_experiment, ExperimentConfig};
use pnmm_core::io::{write_atomic, Manifest};

use crate::bundle::Staging;
use crate::commands::{finish, load_config};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Experiment configuration (TOML with [phantom], [solver], [depict])
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report directory
    #[arg(long)]
    pub out: PathBuf,
    /// Override the number of noise realizations
    #[arg(long)]
    pub realizations: Option<usize>,
    /// Also run DEPICT with each tissue factor as reference
    #[arg(long)]
    pub depict: bool,
}

pub fn run(args: Args, argv: &[String]) -> Result<()> {
    let mut cfg: ExperimentConfig = load_config(args.config.as_deref())?;
    if let Some(n) = args.realizations {
        cfg.n_realizations = n;
    }
    cfg.run_depict |= args.depict;
    cfg.phantom.validate()?;
    let (report, _) = run_experiment(&cfg)?;
    log::info!("experiment finished in {:.1} s", report.runtime_seconds);

    let staging = Staging::new(&args.out)?;
    let dir = staging.path();
    write_atomic(&dir.join("report.csv"), report.summary_csv().as_bytes())?;
    write_atomic(
        &dir.join("realizations.csv"),
        report.realizations_csv().as_bytes(),
    )?;
    write_atomic(&dir.join("table.txt"), report.table().as_bytes())?;
    let json = serde_json::to_vec_pretty(&report)?;
    write_atomic(&dir.join("results.json"), &json)?;
    let manifest = Manifest::new("experiment", argv.to_vec(), &cfg, Some(cfg.base_seed))?;
    finish(staging, manifest)?;
    print!("{}", report.table());
    if report.failures > 0 {
        eprintln!(
            "warning: {} realization(s) failed; see results.json",
            report.failures
        );
    }
    Ok(())
}
