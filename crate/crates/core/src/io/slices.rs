use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GridDims;

/// Axis normal to the extracted plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceAxis {
    X,
    Y,
    Z,
}

impl std::str::FromStr for SliceAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(SliceAxis::X),
            "y" => Ok(SliceAxis::Y),
            "z" => Ok(SliceAxis::Z),
            other => Err(Error::Config(format!(
                "unknown slice axis '{other}' (use x, y or z)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, `height` rows of `width` pixels.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    MinMax,
    Fixed { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Colormap {
    Gray,
    /// Black, red, yellow, white.
    Hot,
}

/// Plane `index` of a single volume (one value per voxel).
pub fn extract_slice(
    volume: &[f64],
    dims: GridDims,
    axis: SliceAxis,
    index: usize,
) -> Result<SliceImage> {
    if volume.len() != dims.n_voxels() {
        return Err(Error::dim("volume", dims.n_voxels(), volume.len()));
    }
    let extent = match axis {
        SliceAxis::X => dims.nx,
        SliceAxis::Y => dims.ny,
        SliceAxis::Z => dims.nz,
    };
    if index >= extent {
        return Err(Error::Config(format!(
            "slice index {index} out of range for axis {axis:?} with {extent} planes"
        )));
    }
    let (width, height) = match axis {
        SliceAxis::X => (dims.ny, dims.nz),
        SliceAxis::Y => (dims.nx, dims.nz),
        SliceAxis::Z => (dims.nx, dims.ny),
    };
    let mut values = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let v = match axis {
                SliceAxis::X => dims.index(index, c, r),
                SliceAxis::Y => dims.index(c, index, r),
                SliceAxis::Z => dims.index(c, r, index),
            };
            values.push(volume[v]);
        }
    }
    Ok(SliceImage {
        width,
        height,
        values,
    })
}

fn intensity(v: f64, lo: f64, hi: f64) -> f64 {
    if !v.is_finite() || !(hi > lo) {
        return 0.0;
    }
    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
}

fn color(t: f64, cmap: Colormap) -> [u8; 3] {
    let q = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    match cmap {
        Colormap::Gray => [q(t); 3],
        Colormap::Hot => [q(3.0 * t), q(3.0 * t - 1.0), q(3.0 * t - 2.0)],
    }
}

/// Binary PPM (P6) encoding of a slice.
pub fn render_ppm(slice: &SliceImage, norm: Normalization, cmap: Colormap) -> Vec<u8> {
    let (lo, hi) = match norm {
        Normalization::Fixed { lo, hi } => (lo, hi),
        Normalization::MinMax => {
            let finite = slice.values.iter().copied().filter(|v| v.is_finite());
            let lo = finite.clone().fold(f64::INFINITY, f64::min);
            let hi = finite.fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
    };
    let mut out = format!("P6\n{} {}\n255\n", slice.width, slice.height).into_bytes();
    out.reserve(3 * slice.values.len());
    for &v in &slice.values {
        // a fixed range with lo == hi maps values at or above it to full scale
        let t = if matches!(norm, Normalization::Fixed { .. }) && hi <= lo {
            if v >= hi {
                1.0
            } else {
                0.0
            }
        } else {
            intensity(v, lo, hi)
        };
        out.extend_from_slice(&color(t, cmap));
    }
    out
}
