use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::{AcquisitionTimeline, DynamicImage, GridDims};

pub const FORMAT_VERSION: u32 = 1;
pub const SIDECAR_EXT: &str = "json";
pub const PAYLOAD_EXT: &str = "f32";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContentKind {
    /// frames x voxels
    DynamicImage,
    /// frames x factors
    FactorMatrix,
    /// factors x voxels
    ProportionMaps,
    /// (V+1) x tissues x voxels
    CoeffMaps,
    /// maps x voxels
    BpMap,
    /// masks x voxels, values 0 or 1
    Mask,
    /// tissues x rates
    Rates,
}

/// Sidecar metadata describing a raw float32 payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContainerHeader {
    pub format_version: u32,
    pub kind: ContentKind,
    /// Payload shape, slowest axis first; the last axis is voxels (x
    /// fastest) for every kind stored on the grid.
    pub shape: Vec<usize>,
    pub grid_dims: Option<[usize; 3]>,
    pub voxel_size_mm: Option<[f64; 3]>,
    pub frame_mid_times: Option<Vec<f64>>,
    pub frame_durations: Option<Vec<f64>>,
    pub dtype: String,
    pub byte_order: String,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    /// Optional names of the leading axis entries (e.g. factor classes).
    #[serde(default)]
    pub labels: Vec<String>,
}

impl ContainerHeader {
    pub fn new(kind: ContentKind, shape: Vec<usize>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind,
            shape,
            grid_dims: None,
            voxel_size_mm: None,
            frame_mid_times: None,
            frame_durations: None,
            dtype: "float32".into(),
            byte_order: "little-endian".into(),
            config_hash: None,
            seed: None,
            labels: Vec::new(),
        }
    }

    pub fn with_grid(mut self, dims: GridDims, voxel_size_mm: [f64; 3]) -> Self {
        self.grid_dims = Some(dims.as_array());
        self.voxel_size_mm = Some(voxel_size_mm);
        self
    }

    pub fn with_timeline(mut self, tl: &AcquisitionTimeline) -> Self {
        self.frame_mid_times = Some(tl.mid_times().to_vec());
        self.frame_durations = Some(tl.durations().to_vec());
        self
    }

    pub fn with_provenance(mut self, config_hash: Option<String>, seed: Option<u64>) -> Self {
        self.config_hash = config_hash;
        self.seed = seed;
        self
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.labels = labels;
        self
    }

    pub fn n_values(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn dims(&self) -> Option<GridDims> {
        self.grid_dims.map(|[x, y, z]| GridDims::new(x, y, z))
    }

    pub fn timeline(&self) -> Result<Option<AcquisitionTimeline>> {
        match (&self.frame_mid_times, &self.frame_durations) {
            (Some(t), Some(d)) => Ok(Some(AcquisitionTimeline::new(t.clone(), d.clone())?)),
            _ => Ok(None),
        }
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let fail = |message: String| Error::Format {
            path: path.to_path_buf(),
            message,
        };
        if self.format_version != FORMAT_VERSION {
            return Err(fail(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        if self.dtype != "float32" || self.byte_order != "little-endian" {
            return Err(fail(format!(
                "unsupported payload encoding {} / {}",
                self.dtype, self.byte_order
            )));
        }
        if self.shape.is_empty() {
            return Err(fail("empty shape".into()));
        }
        if let Some(d) = self.dims() {
            if self.shape.last() != Some(&d.n_voxels()) {
                return Err(fail(format!(
                    "last axis {:?} does not match grid of {} voxels",
                    self.shape.last(),
                    d.n_voxels()
                )));
            }
        }
        Ok(())
    }
}

/// Sidecar and payload paths for a container stem (`dir/name`).
pub fn container_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (
        stem.with_extension(SIDECAR_EXT),
        stem.with_extension(PAYLOAD_EXT),
    )
}

fn encode(values: impl Iterator<Item = f64>, n: usize) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(4 * n);
    for v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    bytes
}

/// Writes `values` (row-major in `header.shape`) as a sidecar/payload pair.
/// Both files are replaced atomically.
pub fn write_container(stem: &Path, header: &ContainerHeader, values: &[f64]) -> Result<()> {
    let (side, payload) = container_paths(stem);
    if values.len() != header.n_values() {
        return Err(Error::dim(
            "container payload",
            header.n_values(),
            values.len(),
        ));
    }
    header.validate(&side)?;
    let bytes = encode(values.iter().copied(), values.len());
    write_atomic(&payload, &bytes)?;
    write_atomic(&side, header_bytes(header)?.as_slice())
}

pub fn header_bytes(header: &ContainerHeader) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(header).map_err(|e| Error::Format {
        path: PathBuf::new(),
        message: e.to_string(),
    })?;
    s.push(b'\n');
    Ok(s)
}

pub fn read_header(stem: &Path) -> Result<ContainerHeader> {
    let (side, _) = container_paths(stem);
    let text = std::fs::read(&side).map_err(|e| Error::io(&side, e))?;
    let header: ContainerHeader = serde_json::from_slice(&text).map_err(|e| Error::Format {
        path: side.clone(),
        message: e.to_string(),
    })?;
    header.validate(&side)?;
    Ok(header)
}

/// Reads a container written by [`write_container`].
pub fn read_container(stem: &Path) -> Result<(ContainerHeader, Vec<f64>)> {
    let header = read_header(stem)?;
    let (_, payload) = container_paths(stem);
    let bytes = std::fs::read(&payload).map_err(|e| Error::io(&payload, e))?;
    if bytes.len() != 4 * header.n_values() {
        return Err(Error::Format {
            path: payload,
            message: format!(
                "payload has {} bytes, header shape {:?} needs {}",
                bytes.len(),
                header.shape,
                4 * header.n_values()
            ),
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((header, values))
}

/// Reads a container and checks its kind.
pub fn read_kind(stem: &Path, kind: ContentKind) -> Result<(ContainerHeader, Vec<f64>)> {
    let (h, v) = read_container(stem)?;
    if h.kind != kind {
        return Err(Error::Format {
            path: container_paths(stem).0,
            message: format!("expected a {kind:?} container, found {:?}", h.kind),
        });
    }
    Ok((h, v))
}

/// 2-D payload as a matrix; leading axes are flattened into rows.
pub fn as_matrix(header: &ContainerHeader, values: Vec<f64>) -> Result<Array2<f64>> {
    let cols = *header.shape.last().expect("validated non-empty");
    let rows = header.n_values() / cols.max(1);
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Format {
        path: PathBuf::new(),
        message: e.to_string(),
    })
}

pub fn write_matrix(stem: &Path, header: ContainerHeader, m: ArrayView2<f64>) -> Result<()> {
    let values: Vec<f64> = m.iter().copied().collect();
    write_container(stem, &header, &values)
}

pub fn write_image(
    stem: &Path,
    image: &DynamicImage,
    config_hash: Option<String>,
    seed: Option<u64>,
) -> Result<()> {
    let header = ContainerHeader::new(
        ContentKind::DynamicImage,
        vec![image.n_frames(), image.n_voxels()],
    )
    .with_grid(image.dims, image.voxel_size_mm)
    .with_timeline(&image.timeline)
    .with_provenance(config_hash, seed);
    write_matrix(stem, header, image.data.view())
}

pub fn read_image(stem: &Path) -> Result<DynamicImage> {
    let (h, v) = read_kind(stem, ContentKind::DynamicImage)?;
    let side = container_paths(stem).0;
    let missing = |what: &str| Error::Format {
        path: side.clone(),
        message: format!("dynamic image header lacks {what}"),
    };
    let dims = h.dims().ok_or_else(|| missing("grid_dims"))?;
    let voxel = h.voxel_size_mm.ok_or_else(|| missing("voxel_size_mm"))?;
    let tl = h.timeline()?.ok_or_else(|| missing("frame timing"))?;
    let data = as_matrix(&h, v)?;
    DynamicImage::new(data, dims, voxel, tl)
}

/// Masks stored as 0/1 rows.
pub fn masks_to_matrix(masks: &[Vec<bool>]) -> Array2<f64> {
    let n = masks.first().map_or(0, Vec::len);
    Array2::from_shape_fn((masks.len(), n), |(k, v)| f64::from(u8::from(masks[k][v])))
}

pub fn matrix_to_masks(m: &Array2<f64>) -> Vec<Vec<bool>> {
    m.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| *v > 0.5).collect())
        .collect()
}
