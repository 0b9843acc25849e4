use std::path::PathBuf;

use anyhow::Result;
use pnmm_core::eval::{
    score_estimate, ExperimentReport, FactorMatching, MethodScores, RealizationResult,
    METHOD_INITIAL, METHOD_PNMM,
};
use pnmm_core::io::{read_header, write_atomic, Manifest};
use pnmm_core::solver::Variables;

use crate::bundle::{bundle_exists, read_variables, Staging};
use crate::commands::{finish, usage};

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Matching {
    Identity,
    Optimal,
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Directory written by `unmix` (final estimate, plus `init/`)
    #[arg(long)]
    pub estimates: PathBuf,
    /// Ground-truth bundle (the `truth/` directory written by `phantom`)
    #[arg(long)]
    pub truth: PathBuf,
    /// Report directory
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Matching::Identity)]
    pub matching: Matching,
}

fn check_shapes(est: &Variables, truth: &Variables, which: &str) -> Result<()> {
    let pairs = [
        ("M", est.m.dim(), truth.m.dim()),
        ("A", est.a.dim(), truth.a.dim()),
        ("alpha", est.alpha.dim(), truth.alpha.dim()),
    ];
    for (name, e, t) in pairs {
        if e != t {
            return Err(usage(format!(
                "{which}: {name} has shape {e:?}, ground truth {t:?}"
            )));
        }
    }
    if est.b.len() != truth.b.len() || est.b.iter().zip(&truth.b).any(|(e, t)| e.dim() != t.dim()) {
        return Err(usage(format!(
            "{which}: B shapes differ from the ground truth"
        )));
    }
    Ok(())
}

pub fn run(args: Args, argv: &[String]) -> Result<()> {
    let matching = match args.matching {
        Matching::Identity => FactorMatching::Identity,
        Matching::Optimal => FactorMatching::Optimal,
    };
    let truth = read_variables(&args.truth)?;
    let mut candidates = Vec::new();
    let init_dir = args.estimates.join("init");
    if bundle_exists(&init_dir) {
        candidates.push((METHOD_INITIAL, init_dir));
    }
    if bundle_exists(&args.estimates) {
        candidates.push((METHOD_PNMM, args.estimates.clone()));
    }
    if candidates.is_empty() {
        return Err(usage(format!(
            "no estimates found in {}",
            args.estimates.display()
        )));
    }
    let mut methods = Vec::new();
    let mut scored = Vec::new();
    for (method, dir) in candidates {
        let est = read_variables(&dir)?;
        check_shapes(&est, &truth, method)?;
        scored.push(MethodScores {
            method: method.to_string(),
            scores: score_estimate(&est, &truth, matching)?,
        });
        methods.push(method.to_string());
    }
    let hash = read_header(&args.truth.join("m"))?
        .config_hash
        .unwrap_or_default();
    let realization = RealizationResult {
        seed: read_header(&args.truth.join("m"))?.seed.unwrap_or(0),
        realized_snr_db: f64::NAN,
        methods: scored,
        init_iterations: None,
        pnmm_iterations: None,
        error: None,
    };
    let report = ExperimentReport::from_realizations(hash, methods, vec![realization], 0.0);

    let staging = Staging::new(&args.out)?;
    let dir = staging.path();
    write_atomic(&dir.join("report.csv"), report.summary_csv().as_bytes())?;
    write_atomic(
        &dir.join("scores.csv"),
        report.realizations_csv().as_bytes(),
    )?;
    write_atomic(&dir.join("table.txt"), report.table().as_bytes())?;
    let manifest = Manifest::new("eval", argv.to_vec(), &EvalSettings { matching }, None)?;
    finish(staging, manifest)?;
    print!("{}", report.table());
    Ok(())
}

#[derive(serde::Serialize)]
struct EvalSettings {
    matching: FactorMatching,
}
