//! Four nested branch levels per vessel class.

use super::VesselTree;
use crate::error::{Error, Result};
use crate::morph::edt_squared_with_features;
use crate::par;
use crate::volume::{BinaryMask, LabelMask, Volume};

pub const LEVEL_COUNT: usize = 4;

/// Cumulative level masks `L0 ⊆ L1 ⊆ L2 ⊆ L3`, where `L3` is the whole
/// class mask and `L0` the portion inside the heart.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchLevels {
    pub levels: [BinaryMask; LEVEL_COUNT],
    /// `L0` was taken as the extrapulmonary portion because the heart mask
    /// was empty.
    pub heart_fallback: bool,
}

/// Level (1, 2 or 3) of an intrapulmonary generation: 1–2, 3–5, rest.
pub fn generation_level(generation: u32) -> usize {
    match generation {
        0..=2 => 1,
        3..=5 => 2,
        _ => 3,
    }
}

/// Intrapulmonary generation per branch. Along each root-to-leaf path the
/// first branch whose midpoint lies in the lung gets generation 1 and its
/// descendants count on from there; branches before it are clamped to 1.
pub fn intrapulmonary_generations(tree: &VesselTree, lung: &BinaryMask) -> Vec<u32> {
    let mut entry: Vec<Option<u32>> = vec![None; tree.branches.len()];
    let mut out = vec![1u32; tree.branches.len()];
    // Branches are stored parents-first.
    for b in 0..tree.branches.len() {
        let br = &tree.branches[b];
        let inherited = br.parent.and_then(|p| entry[p]);
        entry[b] = inherited.or_else(|| {
            let [x, y, z] = tree.midpoint(b);
            lung.at(x, y, z).then_some(br.generation)
        });
        out[b] = match entry[b] {
            Some(e) => (br.generation + 1).saturating_sub(e).max(1),
            None => 1,
        };
    }
    out
}

impl BranchLevels {
    /// `ΔL^i = L^i \ L^(i-1)`, with `ΔL^0 = L^0`.
    pub fn delta(&self, i: usize) -> BinaryMask {
        if i == 0 {
            return self.levels[0].clone();
        }
        let (cur, prev) = (&self.levels[i], &self.levels[i - 1]);
        Volume { geom: cur.geom, data: par::map_indices(cur.len(), |k| cur.data[k] && !prev.data[k]) }
    }

    pub fn check_nesting(&self) -> Result<()> {
        for i in 1..LEVEL_COUNT {
            if !self.levels[i - 1].is_subset_of(&self.levels[i]) {
                return Err(Error::invalid(format!("level {} is not contained in level {i}", i - 1)));
            }
        }
        Ok(())
    }

    /// Single-volume encoding: 0 background, 1 for `L0`, `i + 1` for `ΔL^i`.
    pub fn to_codes(&self) -> LabelMask {
        let geom = self.levels[0].geom;
        let data = par::map_indices(geom.len(), |k| {
            (0..LEVEL_COUNT).find(|&i| self.levels[i].data[k]).map_or(0, |i| i as u8 + 1)
        });
        Volume { geom, data }
    }

    pub fn from_codes(codes: &LabelMask) -> Result<BranchLevels> {
        if let Some(k) = codes.data.iter().position(|&c| c as usize > LEVEL_COUNT) {
            return Err(Error::invalid(format!("voxel {k} has level code {}", codes.data[k])));
        }
        let levels = std::array::from_fn(|i| codes.map(|&c| c != 0 && (c as usize) <= i + 1));
        Ok(BranchLevels { levels, heart_fallback: false })
    }

    pub fn full(&self) -> &BinaryMask {
        &self.levels[LEVEL_COUNT - 1]
    }
}

/// Splits `mask` into nested levels. `L0` is the part inside `heart`; every
/// other voxel takes the level of the branch owning its nearest skeleton
/// voxel.
pub fn decompose_levels(
    tree: &VesselTree,
    mask: &BinaryMask,
    lung: &BinaryMask,
    heart: &BinaryMask,
) -> Result<BranchLevels> {
    let geom = mask.geom;
    geom.ensure_same(&lung.geom)?;
    geom.ensure_same(&heart.geom)?;
    geom.ensure_same(&tree.geom)?;

    let heart_fallback = heart.count() == 0;
    let l0: BinaryMask = if heart_fallback { mask.and_not(lung)? } else { mask.and(heart)? };

    let gens = intrapulmonary_generations(tree, lung);
    let level_of_branch: Vec<u8> = gens.iter().map(|&g| generation_level(g) as u8).collect();

    let mut owner = vec![u8::MAX; geom.len()];
    for (b, br) in tree.branches.iter().enumerate() {
        for &v in &br.voxels {
            owner[v] = level_of_branch[b];
        }
        for &v in &tree.nodes[br.child_node].voxels {
            owner[v] = level_of_branch[b];
        }
    }
    for &r in &tree.roots {
        if let Some(b) = tree.branches.iter().position(|br| br.parent_node == r) {
            for &v in &tree.nodes[r].voxels {
                if owner[v] == u8::MAX {
                    owner[v] = level_of_branch[b];
                }
            }
        }
    }
    let features: BinaryMask = Volume { geom, data: owner.iter().map(|&o| o != u8::MAX).collect() };
    let nearest_level: Vec<u8> = if features.count() == 0 {
        vec![1; geom.len()]
    } else {
        let (_, feat) = edt_squared_with_features(&features);
        par::map_slice(&feat, |&f| owner[f])
    };

    let levels: [BinaryMask; LEVEL_COUNT] = std::array::from_fn(|i| {
        let data = par::map_indices(geom.len(), |k| {
            mask.data[k] && (l0.data[k] || (i >= 1 && nearest_level[k] as usize <= i))
        });
        Volume { geom, data }
    });
    let out = BranchLevels { levels, heart_fallback };
    out.check_nesting()?;
    Ok(out)
}
