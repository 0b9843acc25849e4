use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ndarray::Array2;
use pnmm_core::depict::{depict_bp_map, DepictConfig};
use pnmm_core::io::{
    as_matrix, config_hash, matrix_to_masks, read_image, read_kind, write_atomic, write_matrix,
    ContainerHeader, ContentKind, Manifest,
};
use pnmm_core::model::DynamicImage;
use pnmm_core::solver::{initialization_pass, palm_run, PnmmProblem, SolverConfig, SolverState};
use serde::{Deserialize, Serialize};

use crate::bundle::{write_variables, Geometry, Staging};
use crate::commands::{finish, load_config, usage};

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Pnmm,
    Depict,
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Dynamic image container (path without extension)
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Pnmm)]
    pub method: Method,
    /// Solver configuration (TOML with [solver] and [depict] tables)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Class masks (gray, white, ..., blood); defaults to `classes` next to the input
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Reference TAC container (factor matrix) for DEPICT
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Column of the reference container to use
    #[arg(long, default_value_t = 0)]
    pub reference_column: usize,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Override the outer iteration cap
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Stop after the initialization pass
    #[arg(long)]
    pub init_only: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnmixConfig {
    pub solver: SolverConfig,
    pub depict: DepictConfig,
}

fn geometry(image: &DynamicImage, hash: &str) -> Geometry {
    Geometry {
        dims: image.dims,
        voxel_size_mm: image.voxel_size_mm,
        timeline: image.timeline.clone(),
        config_hash: Some(hash.to_string()),
        seed: None,
    }
}

fn write_trace(path: &Path, state: &SolverState) -> Result<()> {
    let mut buf = Vec::new();
    state.write_trace_csv(&mut buf)?;
    write_atomic(path, &buf)?;
    Ok(())
}

pub fn run(args: Args, argv: &[String]) -> Result<()> {
    let mut cfg: UnmixConfig = load_config(args.config.as_deref())?;
    if let Some(n) = args.max_iters {
        cfg.solver.max_iters = n;
    }
    let image =
        read_image(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    match args.method {
        Method::Pnmm => run_pnmm(&args, &cfg, &image, argv),
        Method::Depict => run_depict(&args, &cfg, &image, argv),
    }
}

fn run_pnmm(args: &Args, cfg: &UnmixConfig, image: &DynamicImage, argv: &[String]) -> Result<()> {
    cfg.solver.validate()?;
    let masks_path = match &args.masks {
        Some(p) => p.clone(),
        None => args.input.with_file_name("classes"),
    };
    let (mh, mv) = read_kind(&masks_path, ContentKind::Mask)
        .with_context(|| format!("reading class masks {}", masks_path.display()))?;
    let masks = matrix_to_masks(&as_matrix(&mh, mv)?);
    if masks.first().map(Vec::len) != Some(image.n_voxels()) {
        return Err(usage(format!(
            "class masks cover {} voxels, image has {}",
            masks.first().map_or(0, Vec::len),
            image.n_voxels()
        )));
    }
    let hash = config_hash(&cfg.solver)?;

    let (start, init_state) = initialization_pass(image, &masks, &cfg.solver)?;

    let main_state = if args.init_only {
        None
    } else {
        let problem = PnmmProblem::from_image(image, start.m.clone(), cfg.solver.clone())?;
        Some(palm_run(&problem, init_state.vars.clone())?)
    };

    let staging = Staging::new(&args.out)?;
    let dir = staging.path();
    let geo = geometry(image, &hash);
    write_variables(&dir.join("init"), &init_state.vars, &geo)?;
    write_trace(&dir.join("init_trace.csv"), &init_state)?;
    if let Some(state) = &main_state {
        write_variables(dir, &state.vars, &geo)?;
        write_trace(&dir.join("trace.csv"), state)?;
    }
    let manifest = Manifest::new("unmix", argv.to_vec(), cfg, None)?;
    finish(staging, manifest)?;
    match &main_state {
        Some(s) => println!(
            "PNMM: {} iterations ({:?}), objective {:.6e}; results in {}",
            s.iterations,
            s.stop,
            s.final_objective(),
            args.out.display()
        ),
        None => println!(
            "initialization: {} iterations; results in {}",
            init_state.iterations,
            args.out.display()
        ),
    }
    Ok(())
}

fn run_depict(args: &Args, cfg: &UnmixConfig, image: &DynamicImage, argv: &[String]) -> Result<()> {
    cfg.depict.validate()?;
    let ref_path = args
        .reference
        .as_ref()
        .ok_or_else(|| usage("--method depict needs --reference <factor-matrix container>"))?;
    let (rh, rv) = read_kind(ref_path, ContentKind::FactorMatrix)
        .with_context(|| format!("reading reference {}", ref_path.display()))?;
    let refs = as_matrix(&rh, rv)?;
    if args.reference_column >= refs.ncols() {
        return Err(usage(format!(
            "reference column {} out of range ({} columns)",
            args.reference_column,
            refs.ncols()
        )));
    }
    let m_ref = refs.column(args.reference_column).to_vec();
    let maps = depict_bp_map(image.data.view(), &m_ref, &image.timeline, &cfg.depict)?;
    if maps.failures > 0 {
        eprintln!(
            "warning: {} voxel fits failed (stored as NaN)",
            maps.failures
        );
    }
    let hash = config_hash(&cfg.depict)?;
    let staging = Staging::new(&args.out)?;
    let dir = staging.path();
    let n = image.n_voxels();
    let header = || {
        ContainerHeader::new(ContentKind::BpMap, vec![1, n])
            .with_grid(image.dims, image.voxel_size_mm)
            .with_provenance(Some(hash.clone()), None)
    };
    write_matrix(
        &dir.join("bp"),
        header(),
        Array2::from_shape_vec((1, n), maps.bp)?.view(),
    )?;
    write_matrix(
        &dir.join("r1"),
        header(),
        Array2::from_shape_vec((1, n), maps.r1)?.view(),
    )?;
    let manifest = Manifest::new("unmix-depict", argv.to_vec(), cfg, None)?;
    finish(staging, manifest)?;
    println!(
        "DEPICT: {} voxels ({} not converged, {} failed); maps in {}",
        n,
        maps.not_converged,
        maps.failures,
        args.out.display()
    );
    Ok(())
}
