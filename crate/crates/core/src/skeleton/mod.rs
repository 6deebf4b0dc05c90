//! Curve skeletons, vessel trees and branch-level decomposition.

mod levels;
pub mod thin;
mod tree;

pub use levels::{decompose_levels, generation_level, intrapulmonary_generations, BranchLevels, LEVEL_COUNT};
pub use tree::{
    build_tree, count_bifurcations, Branch, NodeKind, TreeNode, VesselTree, CHORD_STEP, ROOT_HINT_RADIUS,
    SPUR_MIN_VOXELS, SPUR_RADIUS_FACTOR,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::morph::{edt_squared, neighbor, OFFSETS_26};
use crate::volume::{BinaryMask, Geometry, LabelMask, VesselClass};

/// Skeleton voxels (sorted linear indices) on the grid of the source mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub geom: Geometry,
    pub voxels: Vec<usize>,
    /// Distance in mm from each voxel to the nearest background voxel of the
    /// source mask; empty when the mask is not known.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub radius_mm: Vec<f64>,
}

impl Skeleton {
    /// Takes every set voxel as-is, without thinning.
    pub fn from_mask(mask: &BinaryMask) -> Skeleton {
        let voxels = (0..mask.len()).filter(|&i| mask.data[i]).collect();
        Skeleton { geom: mask.geom, voxels, radius_mm: Vec::new() }
    }

    pub fn to_mask(&self) -> BinaryMask {
        thin::indices_to_mask(self.geom, &self.voxels)
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.voxels.binary_search(&idx).is_ok()
    }
}

/// Topology-preserving thinning of a binary mask.
pub fn thin(mask: &BinaryMask) -> Skeleton {
    let voxels = thin::thin_indices(mask);
    let radius_mm = if voxels.is_empty() {
        Vec::new()
    } else {
        let d2 = edt_squared(&mask.map(|&b| !b));
        voxels.iter().map(|&v| d2[v].sqrt()).collect()
    };
    Skeleton { geom: mask.geom, voxels, radius_mm }
}

pub fn extract_skeleton(mask: &LabelMask, class: VesselClass) -> Skeleton {
    thin(&mask.class_mask(class))
}

/// Skeleton length as a voxel count.
pub fn skeleton_length(skel: &Skeleton) -> usize {
    skel.len()
}

/// Skeleton and tree of one class. The root is the first skeleton endpoint
/// inside `prefer`, else the first endpoint, else the first skeleton voxel.
pub fn class_tree(mask: &LabelMask, class: VesselClass, prefer: Option<&BinaryMask>) -> Result<VesselTree> {
    let skel = extract_skeleton(mask, class);
    build_tree(&skel, default_root(&skel, prefer))
}

/// Root voxel used by [`class_tree`]: the first endpoint inside `prefer`,
/// else the first endpoint, else the first voxel (the origin when empty).
pub fn default_root(skel: &Skeleton, prefer: Option<&BinaryMask>) -> [usize; 3] {
    let geom = skel.geom;
    if skel.is_empty() {
        return [0, 0, 0];
    }
    let is_end =
        |i: usize| OFFSETS_26.iter().filter(|&&o| neighbor(&geom, i, o).is_some_and(|j| skel.contains(j))).count() <= 1;
    let ends: Vec<usize> = skel.voxels.iter().copied().filter(|&i| is_end(i)).collect();
    let root = prefer
        .and_then(|p| ends.iter().copied().find(|&i| p.data[i]))
        .or_else(|| ends.first().copied())
        .unwrap_or(skel.voxels[0]);
    geom.coords(root)
}
