use std::path::PathBuf;

use anyhow::Result;
use pnmm_core::io::{
    config_hash, masks_to_matrix, to_toml_string, write_atomic, write_image, write_matrix,
    ContainerHeader, ContentKind, Manifest,
};
use pnmm_core::phantom::{assemble_phantom, PhantomConfig};

use crate::bundle::{factor_labels, write_variables, Geometry, Staging};
use crate::commands::{finish, load_config};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Phantom configuration (TOML); defaults to the scaled phantom
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Noise seed
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Use the full-size grid when no config file is given
    #[arg(long, conflicts_with = "config")]
    pub full_size: bool,
}

#[derive(serde::Serialize)]
struct Summary {
    realized_snr_db: f64,
    truth_pass_iterations: usize,
    n_voxels: usize,
    n_frames: usize,
}

pub fn run(args: Args, argv: &[String]) -> Result<()> {
    let cfg: PhantomConfig = if args.full_size {
        PhantomConfig::full_size()
    } else {
        load_config(args.config.as_deref())?
    };
    cfg.validate()?;
    let hash = config_hash(&cfg)?;
    log::info!("generating phantom {:?} (config {hash})", cfg.grid_dims);
    let truth = assemble_phantom(&cfg, args.seed)?;

    let staging = Staging::new(&args.out)?;
    let dir = staging.path();
    let geo = Geometry {
        dims: truth.dims,
        voxel_size_mm: cfg.voxel_size_mm,
        timeline: truth.timeline.clone(),
        config_hash: Some(hash.clone()),
        seed: Some(args.seed),
    };
    write_image(
        &dir.join("noisy"),
        &truth.noisy_image(),
        Some(hash.clone()),
        Some(args.seed),
    )?;
    write_image(
        &dir.join("noiseless"),
        &truth.noiseless_image(),
        Some(hash.clone()),
        Some(args.seed),
    )?;
    let n = truth.dims.n_voxels();
    let mask_header = |rows: usize, labels: Vec<String>| {
        ContainerHeader::new(ContentKind::Mask, vec![rows, n])
            .with_grid(truth.dims, cfg.voxel_size_mm)
            .with_provenance(Some(hash.clone()), Some(args.seed))
            .with_labels(labels)
    };
    write_matrix(
        &dir.join("classes"),
        mask_header(3, factor_labels(3)),
        masks_to_matrix(&truth.masks.classes()).view(),
    )?;
    let lesions = [
        truth.masks.lesion_gray.clone(),
        truth.masks.lesion_white.clone(),
    ];
    write_matrix(
        &dir.join("lesions"),
        mask_header(2, vec!["gray".into(), "white".into()]),
        masks_to_matrix(&lesions).view(),
    )?;
    let tv = pnmm_core::solver::Variables {
        m: truth.m.clone(),
        a: truth.a.clone(),
        b: truth.b.clone(),
        alpha: truth.alpha.clone(),
    };
    write_variables(&dir.join("truth"), &tv, &geo)?;
    write_atomic(&dir.join("phantom.toml"), to_toml_string(&cfg)?.as_bytes())?;
    let summary = Summary {
        realized_snr_db: truth.realized_snr_db,
        truth_pass_iterations: truth.truth_pass_iterations,
        n_voxels: n,
        n_frames: truth.timeline.len(),
    };
    write_atomic(
        &dir.join("summary.toml"),
        to_toml_string(&summary)?.as_bytes(),
    )?;

    let manifest = Manifest::new("phantom", argv.to_vec(), &cfg, Some(args.seed))?;
    finish(staging, manifest)?;
    println!(
        "phantom written to {} (SNR {:.2} dB, {} voxels, {} frames)",
        args.out.display(),
        truth.realized_snr_db,
        n,
        truth.timeline.len()
    );
    Ok(())
}
