//! Spatial containers shared by every stage of the pipeline.
//!
//! All voxel data is laid out x-fastest, then y, then z (and time slowest for
//! 4-D series), which is the on-disk NIfTI order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial grid size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims3 {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims3 {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub const fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn linear_index(&self, x: usize, y: usize, z: usize) -> Result<usize> {
        if x >= self.nx || y >= self.ny || z >= self.nz {
            return Err(Error::Index(format!(
                "voxel ({x}, {y}, {z}) outside grid {}x{}x{}",
                self.nx, self.ny, self.nz
            )));
        }
        Ok(x + self.nx * (y + self.ny * z))
    }

    pub fn coordinates(&self, index: usize) -> Result<(usize, usize, usize)> {
        if index >= self.len() {
            return Err(Error::Index(format!("linear index {index} outside grid of {} voxels", self.len())));
        }
        let x = index % self.nx;
        let y = (index / self.nx) % self.ny;
        let z = index / (self.nx * self.ny);
        Ok((x, y, z))
    }

    fn check_positive(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::Dims(format!("grid {self:?} has a zero extent")));
        }
        Ok(())
    }
}

impl std::fmt::Display for Dims3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// One subject's BOLD series: `nt` scans over a 3-D grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume4D {
    dims: Dims3,
    nt: usize,
    voxel_size_mm: [f64; 3],
    tr_seconds: f64,
    data: Vec<f64>,
}

impl Volume4D {
    pub fn new(dims: Dims3, nt: usize, voxel_size_mm: [f64; 3], tr_seconds: f64, data: Vec<f64>) -> Result<Self> {
        dims.check_positive()?;
        if nt == 0 {
            return Err(Error::Dims("volume has zero scans".into()));
        }
        if data.len() != dims.len() * nt {
            return Err(Error::Dims(format!("{} values for a {dims}x{nt} volume", data.len())));
        }
        if !(tr_seconds > 0.0 && tr_seconds.is_finite()) {
            return Err(Error::Validation(format!("repetition time {tr_seconds} must be > 0")));
        }
        if voxel_size_mm.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::Validation(format!("voxel size {voxel_size_mm:?} must be positive")));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite value at element {i}")));
        }
        Ok(Self { dims, nt, voxel_size_mm, tr_seconds, data })
    }

    /// Builds a volume from per-voxel time series (voxel-major input).
    pub fn from_voxel_series(
        dims: Dims3,
        nt: usize,
        voxel_size_mm: [f64; 3],
        tr_seconds: f64,
        series: &[Vec<f64>],
    ) -> Result<Self> {
        if series.len() != dims.len() {
            return Err(Error::Dims(format!("{} series for a grid of {} voxels", series.len(), dims.len())));
        }
        let nvox = dims.len();
        let mut data = vec![0.0; nvox * nt];
        for (v, ts) in series.iter().enumerate() {
            if ts.len() != nt {
                return Err(Error::Dims(format!("voxel {v} has {} scans, expected {nt}", ts.len())));
            }
            for (t, &value) in ts.iter().enumerate() {
                data[v + nvox * t] = value;
            }
        }
        Self::new(dims, nt, voxel_size_mm, tr_seconds, data)
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn voxel_size_mm(&self) -> [f64; 3] {
        self.voxel_size_mm
    }

    pub fn tr_seconds(&self) -> f64 {
        self.tr_seconds
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn value(&self, voxel: usize, scan: usize) -> f64 {
        self.data[voxel + self.dims.len() * scan]
    }

    pub fn voxel_series(&self, voxel: usize) -> Vec<f64> {
        let nvox = self.dims.len();
        (0..self.nt).map(|t| self.data[voxel + nvox * t]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    TmapSpeechGtSilence,
    TmapSilenceGtSpeech,
    Contrast,
    Probability,
    AtlasProbability,
    AtlasLabels,
}

impl MapKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MapKind::TmapSpeechGtSilence => "tmap_speech_gt_silence",
            MapKind::TmapSilenceGtSpeech => "tmap_silence_gt_speech",
            MapKind::Contrast => "contrast",
            MapKind::Probability => "probability",
            MapKind::AtlasProbability => "atlas_probability",
            MapKind::AtlasLabels => "atlas_labels",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            MapKind::TmapSpeechGtSilence,
            MapKind::TmapSilenceGtSpeech,
            MapKind::Contrast,
            MapKind::Probability,
            MapKind::AtlasProbability,
            MapKind::AtlasLabels,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }

    fn is_probability(&self) -> bool {
        matches!(self, MapKind::Probability | MapKind::AtlasProbability)
    }

    fn is_tmap(&self) -> bool {
        matches!(self, MapKind::TmapSpeechGtSilence | MapKind::TmapSilenceGtSpeech)
    }
}

/// A 3-D map with one value per voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarMap {
    dims: Dims3,
    kind: MapKind,
    data: Vec<f64>,
}

impl ScalarMap {
    pub fn new(dims: Dims3, kind: MapKind, data: Vec<f64>) -> Result<Self> {
        dims.check_positive()?;
        if data.len() != dims.len() {
            return Err(Error::Dims(format!("{} values for a {dims} map", data.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite value at voxel {i}")));
        }
        if kind.is_probability() {
            if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Validation(format!(
                    "{} map value {} at voxel {i} outside [0, 1]",
                    kind.as_str(),
                    data[i]
                )));
            }
        }
        if kind.is_tmap() {
            if let Some(i) = data.iter().position(|&v| v < 0.0) {
                return Err(Error::Validation(format!(
                    "{} map has negative value {} at voxel {i}",
                    kind.as_str(),
                    data[i]
                )));
            }
        }
        Ok(Self { dims, kind, data })
    }

    pub fn zeros(dims: Dims3, kind: MapKind) -> Self {
        Self { dims, kind, data: vec![0.0; dims.len()] }
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Reinterprets the map under another kind, re-running that kind's checks.
    pub fn with_kind(self, kind: MapKind) -> Result<Self> {
        Self::new(self.dims, kind, self.data)
    }
}

/// Set of voxels that contribute features, kept in ascending linear order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BrainMask {
    dims: Dims3,
    included: Vec<bool>,
    voxel_index: Vec<usize>,
}

impl BrainMask {
    pub fn from_included(dims: Dims3, included: Vec<bool>) -> Result<Self> {
        if included.len() != dims.len() {
            return Err(Error::Dims(format!("{} flags for a {dims} mask", included.len())));
        }
        let voxel_index = included.iter().enumerate().filter_map(|(i, &inc)| inc.then_some(i)).collect();
        Ok(Self { dims, included, voxel_index })
    }

    pub fn from_indices(dims: Dims3, indices: &[usize]) -> Result<Self> {
        let mut included = vec![false; dims.len()];
        for &i in indices {
            if i >= dims.len() {
                return Err(Error::Index(format!("voxel {i} outside grid {dims}")));
            }
            included[i] = true;
        }
        Self::from_included(dims, included)
    }

    pub fn full(dims: Dims3) -> Self {
        Self { dims, included: vec![true; dims.len()], voxel_index: (0..dims.len()).collect() }
    }

    /// Voxels whose map value is strictly positive.
    pub fn from_map_positive(map: &ScalarMap) -> Self {
        let included = map.data().iter().map(|&v| v > 0.0).collect();
        Self::from_included(map.dims(), included).expect("lengths agree by construction")
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn count(&self) -> usize {
        self.voxel_index.len()
    }

    pub fn is_included(&self, voxel: usize) -> bool {
        self.included.get(voxel).copied().unwrap_or(false)
    }

    pub fn included(&self) -> &[bool] {
        &self.included
    }

    pub fn voxel_index(&self) -> &[usize] {
        &self.voxel_index
    }

    /// Position of a linear voxel index within the feature ordering.
    pub fn position(&self, voxel: usize) -> Option<usize> {
        self.voxel_index.binary_search(&voxel).ok()
    }

    pub fn to_map(&self) -> ScalarMap {
        let data = self.included.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        ScalarMap { dims: self.dims, kind: MapKind::Probability, data }
    }
}

/// Flattens the masked voxels of `map` into a feature vector in mask order.
pub fn extract_features(map: &ScalarMap, mask: &BrainMask) -> Result<Vec<f64>> {
    if map.dims() != mask.dims() {
        return Err(Error::Dims(format!("map {} vs mask {}", map.dims(), mask.dims())));
    }
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(mask.voxel_index().iter().map(|&i| map.data()[i]).collect())
}

/// Inverse of [`extract_features`]: writes `values` back into a zero map.
pub fn scatter_features(values: &[f64], mask: &BrainMask, kind: MapKind) -> Result<ScalarMap> {
    if values.len() != mask.count() {
        return Err(Error::Dims(format!("{} values for a mask of {} voxels", values.len(), mask.count())));
    }
    let mut data = vec![0.0; mask.dims().len()];
    for (&i, &v) in mask.voxel_index().iter().zip(values) {
        data[i] = v;
    }
    ScalarMap::new(mask.dims(), kind, data)
}
