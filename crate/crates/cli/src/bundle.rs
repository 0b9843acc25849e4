use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ndarray::{s, Array2};
use pnmm_core::io::{as_matrix, read_kind, write_matrix, ContainerHeader, ContentKind};
use pnmm_core::model::{
    binding_potential_map, delivery_ratio_map, AcquisitionTimeline, GridDims, KineticBounds,
    KineticNonlinearity,
};
use pnmm_core::solver::Variables;

/// Grid and timing metadata attached to every container of a run.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub dims: GridDims,
    pub voxel_size_mm: [f64; 3],
    pub timeline: AcquisitionTimeline,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
}

impl Geometry {
    fn header(&self, kind: ContentKind, shape: Vec<usize>) -> ContainerHeader {
        ContainerHeader::new(kind, shape)
            .with_grid(self.dims, self.voxel_size_mm)
            .with_timeline(&self.timeline)
            .with_provenance(self.config_hash.clone(), self.seed)
    }

    fn plain_header(&self, kind: ContentKind, shape: Vec<usize>) -> ContainerHeader {
        ContainerHeader::new(kind, shape)
            .with_timeline(&self.timeline)
            .with_provenance(self.config_hash.clone(), self.seed)
    }
}

pub fn factor_labels(k: usize) -> Vec<String> {
    let mut labels: Vec<String> = match k {
        3 => vec!["gray".into(), "white".into()],
        _ => (0..k.saturating_sub(1))
            .map(|i| format!("tissue{i}"))
            .collect(),
    };
    labels.push("blood".into());
    labels
}

/// Writes `m`, `a`, `b`, `alpha` plus the derived `r1` and `bp` maps.
pub fn write_variables(dir: &Path, v: &Variables, geo: &Geometry) -> Result<()> {
    let k = v.n_factors();
    let kt = v.n_tissues();
    let n = v.a.ncols();
    let labels = factor_labels(k);
    let tissue_labels = labels[..kt].to_vec();
    write_matrix(
        &dir.join("m"),
        geo.plain_header(ContentKind::FactorMatrix, vec![v.m.nrows(), k])
            .with_labels(labels.clone()),
        v.m.view(),
    )?;
    write_matrix(
        &dir.join("a"),
        geo.header(ContentKind::ProportionMaps, vec![k, n])
            .with_labels(labels),
        v.a.view(),
    )?;
    let mut stacked = Array2::zeros(((v.n_rates() + 1) * kt, n));
    for (i, b) in v.b.iter().enumerate() {
        stacked.slice_mut(s![i * kt..(i + 1) * kt, ..]).assign(b);
    }
    let cheader = ContainerHeader {
        shape: vec![v.n_rates() + 1, kt, n],
        ..geo.header(ContentKind::CoeffMaps, vec![])
    };
    pnmm_core::io::write_container(
        &dir.join("b"),
        &cheader,
        stacked.as_slice().expect("standard layout"),
    )?;
    write_matrix(
        &dir.join("alpha"),
        geo.plain_header(ContentKind::Rates, vec![kt, v.n_rates()])
            .with_labels(tissue_labels.clone()),
        v.alpha.view(),
    )?;
    let (r1, bp) = derived_maps(v)?;
    write_matrix(
        &dir.join("r1"),
        geo.header(ContentKind::BpMap, vec![kt, n])
            .with_labels(tissue_labels.clone()),
        r1.view(),
    )?;
    write_matrix(
        &dir.join("bp"),
        geo.header(ContentKind::BpMap, vec![kt, n])
            .with_labels(tissue_labels),
        bp.view(),
    )?;
    Ok(())
}

pub fn derived_maps(v: &Variables) -> Result<(Array2<f64>, Array2<f64>)> {
    let kin = KineticNonlinearity {
        b: v.b.clone(),
        alpha: v.alpha.clone(),
        bounds: KineticBounds::uniform_b(
            v.n_rates(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            pnmm_core::model::Interval::new(0.0, f64::INFINITY),
        ),
    };
    Ok((delivery_ratio_map(&kin), binding_potential_map(&kin)?))
}

/// Reads a bundle written by [`write_variables`].
pub fn read_variables(dir: &Path) -> Result<Variables> {
    let load = |name: &str, kind: ContentKind| -> Result<(ContainerHeader, Vec<f64>)> {
        let stem = dir.join(name);
        read_kind(&stem, kind).with_context(|| format!("reading {}", stem.display()))
    };
    let (hm, m) = load("m", ContentKind::FactorMatrix)?;
    let (ha, a) = load("a", ContentKind::ProportionMaps)?;
    let (hb, b) = load("b", ContentKind::CoeffMaps)?;
    let (hr, alpha) = load("alpha", ContentKind::Rates)?;
    let m = as_matrix(&hm, m)?;
    let a = as_matrix(&ha, a)?;
    let alpha = as_matrix(&hr, alpha)?;
    if hb.shape.len() != 3 {
        return Err(crate::commands::UsageError(format!(
            "coefficient container in {} must have 3 axes, found {:?}",
            dir.display(),
            hb.shape
        ))
        .into());
    }
    let (nb, kt, n) = (hb.shape[0], hb.shape[1], hb.shape[2]);
    let flat = Array2::from_shape_vec((nb * kt, n), b)?;
    let b = (0..nb)
        .map(|i| flat.slice(s![i * kt..(i + 1) * kt, ..]).to_owned())
        .collect();
    Ok(Variables { m, a, b, alpha })
}

pub fn bundle_exists(dir: &Path) -> bool {
    pnmm_core::io::container_paths(&dir.join("m")).0.exists()
}

/// Output directory that only appears once everything was written: files
/// go to a hidden sibling directory and are moved into place on commit.
pub struct Staging {
    tmp: tempfile::TempDir,
    target: PathBuf,
}

impl Staging {
    pub fn new(target: &Path) -> Result<Self> {
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&parent)
            .with_context(|| format!("creating {}", parent.display()))?;
        let tmp = tempfile::Builder::new()
            .prefix(".pnmm-staging-")
            .tempdir_in(&parent)
            .with_context(|| format!("creating staging directory in {}", parent.display()))?;
        Ok(Self {
            tmp,
            target: target.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        self.tmp.path()
    }

    pub fn commit(self) -> Result<()> {
        move_tree(self.tmp.path(), &self.target)?;
        Ok(())
    }
}

fn move_tree(from: &Path, to: &Path) -> Result<()> {
    std::fs::create_dir_all(to).with_context(|| format!("creating {}", to.display()))?;
    let mut entries: Vec<_> = std::fs::read_dir(from)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let dest = to.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            move_tree(&entry.path(), &dest)?;
        } else {
            std::fs::rename(entry.path(), &dest)
                .with_context(|| format!("moving {}", dest.display()))?;
        }
    }
    Ok(())
}

/// Relative paths of all files under `dir`, sorted.
pub fn list_files(dir: &Path) -> Result<Vec<String>> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            let p = entry.path();
            if entry.file_type()?.is_dir() {
                walk(base, &p, out)?;
            } else {
                let rel = p.strip_prefix(base).expect("inside base");
                out.push(rel.to_string_lossy().replace('\\', "/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}
