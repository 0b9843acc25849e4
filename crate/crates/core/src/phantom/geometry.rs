use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GridDims;

/// Smallest supported extent along any axis.
pub const MIN_GRID_EXTENT: usize = 16;

/// Geometry knobs, in units of the grid extent unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Semi-axes of the white-matter core as fractions of each extent.
    pub white_semi_axes: [f64; 3],
    /// Radius of the vessel cylinder (running along z), in voxels.
    pub vessel_radius: f64,
    /// Vessel centre as fractions of (nx, ny).
    pub vessel_center: [f64; 2],
    /// Radius of each lesion ball, in voxels.
    pub lesion_radius: f64,
    /// Seed for lesion placement.
    pub seed: u64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            white_semi_axes: [0.3, 0.3, 0.3],
            vessel_radius: 2.3,
            vessel_center: [0.5, 0.12],
            lesion_radius: 2.0,
            seed: 7,
        }
    }
}

/// Binary maps of the phantom. Gray, white and blood partition the grid;
/// each lesion map is the union of one ball per delivery-ratio level and is
/// contained in its tissue.
#[derive(Debug, Clone, PartialEq)]
pub struct Masks {
    pub gray: Vec<bool>,
    pub white: Vec<bool>,
    pub blood: Vec<bool>,
    pub lesion_gray: Vec<bool>,
    pub lesion_white: Vec<bool>,
    /// Index into the delivery-ratio levels for each lesion voxel
    /// (`None` outside lesions).
    pub lesion_level: Vec<Option<usize>>,
}

impl Masks {
    /// Class maps in factor order `[gray, white, blood]`.
    pub fn classes(&self) -> [Vec<bool>; 3] {
        [self.gray.clone(), self.white.clone(), self.blood.clone()]
    }

    pub fn lesions(&self) -> [&Vec<bool>; 2] {
        [&self.lesion_gray, &self.lesion_white]
    }
}

fn center(dims: GridDims) -> [f64; 3] {
    [
        (dims.nx as f64 - 1.0) / 2.0,
        (dims.ny as f64 - 1.0) / 2.0,
        (dims.nz as f64 - 1.0) / 2.0,
    ]
}

/// Deterministic layout: white ellipsoid core, a vessel cylinder, gray
/// everywhere else, and `n_levels` lesion balls per tissue placed with a
/// seeded generator.
pub fn generate_geometry(dims: GridDims, cfg: &GeometryConfig, n_levels: usize) -> Result<Masks> {
    if dims.as_array().iter().any(|&n| n < MIN_GRID_EXTENT) {
        return Err(Error::Config(format!(
            "phantom grid {:?} too small; every extent must be >= {MIN_GRID_EXTENT}",
            dims.as_array()
        )));
    }
    let n = dims.n_voxels();
    let c = center(dims);
    let ext = dims.as_array().map(|v| v as f64);
    let semi: Vec<f64> = (0..3).map(|a| cfg.white_semi_axes[a] * ext[a]).collect();
    let vc = [
        cfg.vessel_center[0] * (ext[0] - 1.0),
        cfg.vessel_center[1] * (ext[1] - 1.0),
    ];

    let in_white = |x: f64, y: f64, z: f64| {
        let p = [x, y, z];
        (0..3)
            .map(|a| ((p[a] - c[a]) / semi[a]).powi(2))
            .sum::<f64>()
            <= 1.0
    };
    let in_vessel =
        |x: f64, y: f64| (x - vc[0]).powi(2) + (y - vc[1]).powi(2) <= cfg.vessel_radius.powi(2);

    let mut white = vec![false; n];
    let mut blood = vec![false; n];
    for v in 0..n {
        let (x, y, z) = dims.coords(v);
        let (x, y, z) = (x as f64, y as f64, z as f64);
        if in_vessel(x, y) {
            blood[v] = true;
        } else if in_white(x, y, z) {
            white[v] = true;
        }
    }
    let gray: Vec<bool> = (0..n).map(|v| !white[v] && !blood[v]).collect();
    if white.iter().all(|w| !w) || blood.iter().all(|b| !b) || gray.iter().all(|g| !g) {
        return Err(Error::Config(
            "geometry leaves an empty tissue class".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lesion_level = vec![None; n];
    let mut lesion_tissue = [vec![false; n], vec![false; n]];
    let r = cfg.lesion_radius;
    let reach = r.ceil() as isize;
    for (t, tissue) in [&gray, &white].into_iter().enumerate() {
        let mut placed: Vec<[f64; 3]> = Vec::new();
        for level in 0..n_levels {
            let mut ok = false;
            for _ in 0..10_000 {
                let p = [
                    rng.random_range(0.0..ext[0] - 1.0).round(),
                    rng.random_range(0.0..ext[1] - 1.0).round(),
                    rng.random_range(0.0..ext[2] - 1.0).round(),
                ];
                // ball (with a one-voxel shell) inside the tissue and the grid
                let fits = ball_voxels(dims, p, r + 1.0, reach + 1)
                    .map(|voxels| {
                        voxels
                            .iter()
                            .all(|&v| tissue[v] && lesion_level[v].is_none())
                    })
                    .unwrap_or(false);
                // keep separate components apart
                let apart = placed.iter().all(|q| {
                    (0..3).map(|a| (p[a] - q[a]).powi(2)).sum::<f64>().sqrt() > 2.0 * r + 2.0
                });
                if fits && apart {
                    for v in ball_voxels(dims, p, r, reach).expect("checked above") {
                        lesion_level[v] = Some(level);
                        lesion_tissue[t][v] = true;
                    }
                    placed.push(p);
                    ok = true;
                    break;
                }
            }
            if !ok {
                return Err(Error::Config(format!(
                    "could not place lesion {level} in tissue {t}; enlarge the grid or shrink the lesions"
                )));
            }
        }
    }
    let [lesion_gray, lesion_white] = lesion_tissue;
    Ok(Masks {
        gray,
        white,
        blood,
        lesion_gray,
        lesion_white,
        lesion_level,
    })
}

/// Voxels within `r` of `p`; `None` if the ball leaves the grid.
fn ball_voxels(dims: GridDims, p: [f64; 3], r: f64, reach: isize) -> Option<Vec<usize>> {
    let mut out = Vec::new();
    let ext = dims.as_array();
    for dz in -reach..=reach {
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let d2 = (dx * dx + dy * dy + dz * dz) as f64;
                if d2 > r * r {
                    continue;
                }
                let q = [p[0] as isize + dx, p[1] as isize + dy, p[2] as isize + dz];
                if (0..3).any(|a| q[a] < 0 || q[a] >= ext[a] as isize) {
                    return None;
                }
                out.push(dims.index(q[0] as usize, q[1] as usize, q[2] as usize));
            }
        }
    }
    Some(out)
}

/// Number of 6-connected components of a mask.
pub fn connected_components(dims: GridDims, mask: &[bool]) -> usize {
    let n = dims.n_voxels();
    let mut seen = vec![false; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if !mask[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(v) = stack.pop() {
            let (x, y, z) = dims.coords(v);
            let mut visit = |q: usize| {
                if mask[q] && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(dims.index(x - 1, y, z));
            }
            if x + 1 < dims.nx {
                visit(dims.index(x + 1, y, z));
            }
            if y > 0 {
                visit(dims.index(x, y - 1, z));
            }
            if y + 1 < dims.ny {
                visit(dims.index(x, y + 1, z));
            }
            if z > 0 {
                visit(dims.index(x, y, z - 1));
            }
            if z + 1 < dims.nz {
                visit(dims.index(x, y, z + 1));
            }
        }
    }
    count
}
