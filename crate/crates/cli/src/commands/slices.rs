use std::path::PathBuf;

use anyhow::{Context, Result};
use pnmm_core::io::{
    extract_slice, read_container, render_ppm, write_atomic, Colormap, Normalization, SliceAxis,
};

use crate::commands::usage;

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmap {
    Gray,
    Hot,
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Volume container (path without extension)
    #[arg(long)]
    pub volume: PathBuf,
    /// Axis normal to the plane: x, y or z
    #[arg(long, default_value = "z")]
    pub axis: SliceAxis,
    /// Plane index along the axis
    #[arg(long)]
    pub index: usize,
    /// Row of the container (frame, factor or map index)
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Fixed display range `lo,hi` instead of min-max scaling
    #[arg(long, value_parser = parse_range)]
    pub range: Option<(f64, f64)>,
    #[arg(long, value_enum, default_value_t = Cmap::Gray)]
    pub colormap: Cmap,
    /// Output PPM file
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

pub fn run(args: Args) -> Result<()> {
    let (header, values) = read_container(&args.volume)
        .with_context(|| format!("reading {}", args.volume.display()))?;
    let dims = header.dims().ok_or_else(|| {
        usage(format!(
            "{} is not stored on a voxel grid",
            args.volume.display()
        ))
    })?;
    let n = dims.n_voxels();
    let rows = values.len() / n;
    if args.frame >= rows {
        return Err(usage(format!(
            "frame {} out of range ({rows} rows)",
            args.frame
        )));
    }
    let slice = extract_slice(
        &values[args.frame * n..(args.frame + 1) * n],
        dims,
        args.axis,
        args.index,
    )?;
    let norm = match args.range {
        Some((lo, hi)) => Normalization::Fixed { lo, hi },
        None => Normalization::MinMax,
    };
    let cmap = match args.colormap {
        Cmap::Gray => Colormap::Gray,
        Cmap::Hot => Colormap::Hot,
    };
    write_atomic(&args.out, &render_ppm(&slice, norm, cmap))?;
    println!(
        "{}x{} slice written to {}",
        slice.width,
        slice.height,
        args.out.display()
    );
    Ok(())
}
