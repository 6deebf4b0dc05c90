//! Voxel grids, label masks and probability maps on a shared lattice
//! description, plus intensity windowing, resampling and tiling.

mod resample;
mod tile;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

pub use resample::{
    normalize_to_standard_space, resample_labels_nearest, resample_trilinear, Resampled, SpatialMapping, Standardized,
};
pub use tile::{stitch, tile, Tile, TileSet, DEFAULT_TILE_DIMS};

/// Voxel counts of the standardized space.
pub const STANDARD_DIMS: [usize; 3] = [512, 512, 512];
/// Spacing of the standardized space: a 334 x 334 x 512 mm box at 512 voxels per axis.
pub const STANDARD_SPACING: [f64; 3] = [334.0 / 512.0, 334.0 / 512.0, 1.0];
/// Spacing every mask is resampled to before skeleton-based metrics.
pub const METRIC_SPACING: [f64; 3] = [0.652, 0.652, 1.0];

/// Default HU window.
pub const HU_WINDOW: (f32, f32) = (-1000.0, 600.0);
pub const AIR_HU: f32 = -1000.0;
pub const AIR_WINDOWED: f32 = 0.0;

/// Lattice description: voxel counts, spacing (mm) and the physical position
/// of the center of voxel (0, 0, 0). Voxels are stored x-fastest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::invalid(format!("dims must be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::invalid(format!("spacing must be > 0, got {spacing:?}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::invalid(format!("origin must be finite, got {origin:?}")));
        }
        Ok(Geometry { dims, spacing, origin })
    }

    /// Unit spacing, zero origin.
    pub fn unit(dims: [usize; 3]) -> Self {
        Geometry { dims, spacing: [1.0; 3], origin: [0.0; 3] }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Index of a signed coordinate, `None` when outside the lattice.
    #[inline]
    pub fn checked_index(&self, c: [isize; 3]) -> Option<usize> {
        if c[0] < 0 || c[1] < 0 || c[2] < 0 {
            return None;
        }
        let (x, y, z) = (c[0] as usize, c[1] as usize, c[2] as usize);
        if x >= self.dims[0] || y >= self.dims[1] || z >= self.dims[2] {
            return None;
        }
        Some(self.index(x, y, z))
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Physical position (mm) of a voxel center.
    pub fn position(&self, c: [usize; 3]) -> [f64; 3] {
        std::array::from_fn(|a| self.origin[a] + c[a] as f64 * self.spacing[a])
    }

    /// Continuous voxel coordinate of a physical point.
    pub fn continuous_index(&self, p: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|a| (p[a] - self.origin[a]) / self.spacing[a])
    }

    /// Physical center of the lattice.
    pub fn center(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.origin[a] + (self.dims[a] as f64 - 1.0) * 0.5 * self.spacing[a])
    }

    /// Physical size covered by the voxel cells.
    pub fn extent(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.dims[a] as f64 * self.spacing[a])
    }

    /// Geometry covering the same cells at a new spacing. The first cell edge
    /// is kept fixed, so a 2x refinement splits every voxel into 2x2x2.
    pub fn with_spacing(&self, spacing: [f64; 3]) -> Result<Geometry> {
        let dims =
            std::array::from_fn(|a| ((self.dims[a] as f64 * self.spacing[a] / spacing[a]).round() as usize).max(1));
        let origin = std::array::from_fn(|a| self.origin[a] - 0.5 * self.spacing[a] + 0.5 * spacing[a]);
        Geometry::new(dims, spacing, origin)
    }

    pub fn ensure_same(&self, other: &Geometry) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GeometryMismatch { left: Box::new(*self), right: Box::new(*other) })
        }
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}x{} @ ({}, {}, {}) mm, origin ({}, {}, {})",
            self.dims[0],
            self.dims[1],
            self.dims[2],
            self.spacing[0],
            self.spacing[1],
            self.spacing[2],
            self.origin[0],
            self.origin[1],
            self.origin[2]
        )
    }
}

/// A scalar field on a [`Geometry`].
#[derive(Clone, Debug, PartialEq)]
pub struct Volume<T> {
    pub geom: Geometry,
    pub data: Vec<T>,
}

/// Intensity volume, HU or windowed to [0, 1].
pub type VoxelGrid = Volume<f32>;
/// Per-voxel label codes, see [`label`].
pub type LabelMask = Volume<u8>;
pub type BinaryMask = Volume<bool>;

impl<T: Clone> Volume<T> {
    pub fn filled(geom: Geometry, value: T) -> Self {
        Volume { data: vec![value; geom.len()], geom }
    }
}

impl<T> Volume<T> {
    pub fn from_vec(geom: Geometry, data: Vec<T>) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(Error::invalid(format!("voxel count {} does not match dims {:?}", data.len(), geom.dims)));
        }
        Ok(Volume { geom, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> &T {
        &self.data[self.geom.index(x, y, z)]
    }

    #[inline]
    pub fn at_mut(&mut self, x: usize, y: usize, z: usize) -> &mut T {
        let i = self.geom.index(x, y, z);
        &mut self.data[i]
    }

    pub fn map<U, F>(&self, f: F) -> Volume<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        Volume { geom: self.geom, data: par::map_slice(&self.data, f) }
    }
}

impl VoxelGrid {
    pub fn min_max(&self) -> (f32, f32) {
        self.data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

impl BinaryMask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.geom.ensure_same(&other.geom)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect();
        Ok(Volume { geom: self.geom, data })
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.geom.ensure_same(&other.geom)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a || b).collect();
        Ok(Volume { geom: self.geom, data })
    }

    pub fn and_not(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.geom.ensure_same(&other.geom)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a && !b).collect();
        Ok(Volume { geom: self.geom, data })
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.geom == other.geom && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Label mask with `code` where set.
    pub fn to_labels(&self, code: u8) -> LabelMask {
        self.map(|&b| if b { code } else { label::BACKGROUND })
    }
}

/// Label codes stored in a [`LabelMask`].
pub mod label {
    pub const BACKGROUND: u8 = 0;
    pub const ARTERY: u8 = 1;
    pub const VEIN: u8 = 2;
}

/// The two vessel classes segmented in parallel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VesselClass {
    Artery,
    Vein,
}

impl VesselClass {
    pub const BOTH: [VesselClass; 2] = [VesselClass::Artery, VesselClass::Vein];

    pub fn code(self) -> u8 {
        match self {
            VesselClass::Artery => label::ARTERY,
            VesselClass::Vein => label::VEIN,
        }
    }

    pub fn other(self) -> VesselClass {
        match self {
            VesselClass::Artery => VesselClass::Vein,
            VesselClass::Vein => VesselClass::Artery,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VesselClass::Artery => "artery",
            VesselClass::Vein => "vein",
        }
    }
}

impl std::str::FromStr for VesselClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "artery" | "a" | "1" => Ok(VesselClass::Artery),
            "vein" | "v" | "2" => Ok(VesselClass::Vein),
            other => Err(Error::invalid(format!("unknown vessel class '{other}'"))),
        }
    }
}

impl LabelMask {
    /// Validates that every code is background, artery or vein.
    pub fn validate_labels(&self) -> Result<()> {
        match self.data.iter().position(|&c| c > label::VEIN) {
            Some(i) => Err(Error::invalid(format!("label code {} at voxel {i} is not one of 0/1/2", self.data[i]))),
            None => Ok(()),
        }
    }

    pub fn class_mask(&self, class: VesselClass) -> BinaryMask {
        let code = class.code();
        self.map(move |&c| c == code)
    }

    /// Any vessel class.
    pub fn vessel_mask(&self) -> BinaryMask {
        self.map(|&c| c != label::BACKGROUND)
    }

    /// Nonzero voxels as a binary mask.
    pub fn nonzero(&self) -> BinaryMask {
        self.vessel_mask()
    }
}

/// Independent per-class soft scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    pub geom: Geometry,
    pub artery: Vec<f32>,
    pub vein: Vec<f32>,
}

impl ProbabilityMap {
    pub fn zeros(geom: Geometry) -> Self {
        ProbabilityMap { geom, artery: vec![0.0; geom.len()], vein: vec![0.0; geom.len()] }
    }

    pub fn new(geom: Geometry, artery: Vec<f32>, vein: Vec<f32>) -> Result<Self> {
        if artery.len() != geom.len() || vein.len() != geom.len() {
            return Err(Error::invalid("probability channel length does not match geometry"));
        }
        Ok(ProbabilityMap { geom, artery, vein })
    }

    /// Hard labels: one when a class channel reaches 1.0.
    pub fn from_labels(mask: &LabelMask) -> Self {
        let artery = par::map_slice(&mask.data, |&c| f32::from(c == label::ARTERY));
        let vein = par::map_slice(&mask.data, |&c| f32::from(c == label::VEIN));
        ProbabilityMap { geom: mask.geom, artery, vein }
    }

    pub fn channel(&self, class: VesselClass) -> &[f32] {
        match class {
            VesselClass::Artery => &self.artery,
            VesselClass::Vein => &self.vein,
        }
    }

    /// First voxel (channel, index, value) outside [0, 1], if any.
    pub fn first_out_of_range(&self) -> Option<(VesselClass, usize, f32)> {
        for class in VesselClass::BOTH {
            if let Some((i, &v)) = self.channel(class).iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Some((class, i, v));
            }
        }
        None
    }

    /// Labels by thresholding at `threshold`; where both channels pass, the
    /// larger score wins and ties go to artery.
    pub fn to_labels(&self, threshold: f32) -> LabelMask {
        let data = par::map_indices(self.geom.len(), |i| {
            let (a, v) = (self.artery[i], self.vein[i]);
            match (a >= threshold, v >= threshold) {
                (false, false) => label::BACKGROUND,
                (true, false) => label::ARTERY,
                (false, true) => label::VEIN,
                (true, true) => {
                    if a >= v {
                        label::ARTERY
                    } else {
                        label::VEIN
                    }
                }
            }
        });
        Volume { geom: self.geom, data }
    }
}

/// Clamps HU into `[lo, hi]` and maps linearly onto [0, 1].
pub fn window_hu(grid: &VoxelGrid, lo: f32, hi: f32) -> Result<VoxelGrid> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::invalid(format!("HU window requires lo < hi, got [{lo}, {hi}]")));
    }
    if let Some(index) = grid.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let width = f64::from(hi) - f64::from(lo);
    Ok(grid.map(|&v| ((f64::from(v) - f64::from(lo)) / width).clamp(0.0, 1.0) as f32))
}
