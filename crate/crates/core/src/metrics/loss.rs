use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morph::edt_squared_with_features;
use crate::par;
use crate::skeleton::{BranchLevels, LEVEL_COUNT};
use crate::volume::{LabelMask, ProbabilityMap, VesselClass};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDiceLoss {
    /// Soft dice term per level region, `ΣPT / Σ(P + T)`.
    pub terms: [f64; LEVEL_COUNT],
    /// `w⁰ = 1`, `wⁱ = V(T⁰) / V(ΔTⁱ)`; zero for skipped levels.
    pub weights: [f64; LEVEL_COUNT],
    /// Voxel counts `V(T⁰)`, `V(ΔT¹)`, `V(ΔT²)`, `V(ΔT³)`.
    pub volumes: [u64; LEVEL_COUNT],
    /// Levels left out because their truth region is empty.
    pub skipped: Vec<usize>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedDiceLoss {
    pub artery: ClassDiceLoss,
    pub vein: ClassDiceLoss,
    pub value: f64,
}

/// Level index of every voxel for one class: each voxel joins the level of
/// its nearest truth voxel. `None` when the class truth is empty.
fn level_regions(levels: &BranchLevels) -> Option<Vec<u8>> {
    let full = levels.full();
    if full.count() == 0 {
        return None;
    }
    let code: Vec<u8> = (0..full.len())
        .map(|i| (0..LEVEL_COUNT).find(|&l| levels.levels[l].data[i]).map_or(u8::MAX, |l| l as u8))
        .collect();
    let (_, feat) = edt_squared_with_features(full);
    Some(par::map_indices(full.len(), |i| code[feat[i]]))
}

fn class_dice(prob: &[f32], levels: &BranchLevels) -> ClassDiceLoss {
    let mut volumes = [0u64; LEVEL_COUNT];
    for l in 0..LEVEL_COUNT {
        volumes[l] = if l == 0 { levels.levels[0].count() as u64 } else { levels.delta(l).count() as u64 };
    }
    let Some(region) = level_regions(levels) else {
        return ClassDiceLoss {
            terms: [0.0; LEVEL_COUNT],
            weights: [0.0; LEVEL_COUNT],
            volumes,
            skipped: (0..LEVEL_COUNT).collect(),
            value: 0.0,
        };
    };
    let full = levels.full();
    let mut num = [0.0f64; LEVEL_COUNT];
    let mut den = [0.0f64; LEVEL_COUNT];
    for i in 0..prob.len() {
        let l = region[i] as usize;
        let p = f64::from(prob[i]);
        let t = if full.data[i] { 1.0 } else { 0.0 };
        num[l] += p * t;
        den[l] += p + t;
    }
    let mut terms = [0.0; LEVEL_COUNT];
    let mut weights = [0.0; LEVEL_COUNT];
    let mut skipped = Vec::new();
    for l in 0..LEVEL_COUNT {
        if volumes[l] == 0 {
            skipped.push(l);
            continue;
        }
        terms[l] = if den[l] > 0.0 { num[l] / den[l] } else { 0.0 };
        weights[l] = if l == 0 { 1.0 } else { volumes[0] as f64 / volumes[l] as f64 };
    }
    let value = -(0..LEVEL_COUNT).map(|l| weights[l] * terms[l]).sum::<f64>();
    ClassDiceLoss { terms, weights, volumes, skipped, value }
}

/// Level-weighted soft dice loss, summed over both classes. Every voxel is
/// scored in the level region of its nearest truth voxel, so false
/// positives count against the nearby level.
pub fn weighted_dice_loss(pred: &ProbabilityMap, levels: [&BranchLevels; 2]) -> Result<WeightedDiceLoss> {
    for lv in levels {
        pred.geom.ensure_same(&lv.full().geom)?;
        lv.check_nesting()?;
    }
    check_probabilities(pred)?;
    let artery = class_dice(pred.channel(VesselClass::Artery), levels[0]);
    let vein = class_dice(pred.channel(VesselClass::Vein), levels[1]);
    let value = artery.value + vein.value;
    Ok(WeightedDiceLoss { artery, vein, value })
}

fn check_probabilities(pred: &ProbabilityMap) -> Result<()> {
    if let Some((class, index, value)) = pred.first_out_of_range() {
        return Err(Error::invalid(format!("{} probability {value} at voxel {index} is outside [0, 1]", class.name())));
    }
    Ok(())
}

/// Soft misclassification: `(Σp_A t_V + Σp_V t_A) / (Σp_A + Σp_V + |T_A| + |T_V|)`.
pub fn overlap_loss(pred: &ProbabilityMap, truth: &LabelMask) -> Result<f64> {
    pred.geom.ensure_same(&truth.geom)?;
    check_probabilities(pred)?;
    let (a, v) = (&pred.artery, &pred.vein);
    let cross = par::sum_f64(a.len(), |i| match truth.data[i] {
        1 => f64::from(v[i]),
        2 => f64::from(a[i]),
        _ => 0.0,
    });
    let denom = par::sum_f64(a.len(), |i| f64::from(a[i]) + f64::from(v[i]))
        + par::count(truth.len(), |i| truth.data[i] != 0) as f64;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(cross / denom)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub dsc: WeightedDiceLoss,
    pub overlap: f64,
    pub total: f64,
}

/// `L_DSC + L_overlap`, with both components kept.
pub fn total_loss(pred: &ProbabilityMap, levels: [&BranchLevels; 2], truth: &LabelMask) -> Result<LossBreakdown> {
    let dsc = weighted_dice_loss(pred, levels)?;
    let overlap = overlap_loss(pred, truth)?;
    let total = dsc.value + overlap;
    Ok(LossBreakdown { dsc, overlap, total })
}
