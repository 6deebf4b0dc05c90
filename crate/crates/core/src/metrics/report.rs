use serde::{Deserialize, Serialize};

use super::{abundance_ratios, dice, hd95, mcs, sensitivity, total_loss, LossBreakdown, SkeletonCounts};
use crate::error::{Error, Result};
use crate::skeleton::BranchLevels;
use crate::volume::{BinaryMask, LabelMask, ProbabilityMap, VesselClass};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAbundanceRatio {
    pub sl_ratio: f64,
    pub bc_ratio: f64,
    pub pred: SkeletonCounts,
    pub truth: SkeletonCounts,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbundanceRatios {
    pub artery: ClassAbundanceRatio,
    pub vein: ClassAbundanceRatio,
    /// Spacing the skeletons were computed at, mm.
    pub spacing: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Compute SL/BC ratios (resampling plus thinning, the slow part).
    pub abundance: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { abundance: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dsc_whole_a: f64,
    pub dsc_whole_v: f64,
    /// Dice outside the in-heart truth (L⁰ of both classes).
    pub dsc_intra_a: f64,
    pub dsc_intra_v: f64,
    /// Vessel-versus-background sensitivity.
    pub sen: f64,
    pub mcs: f64,
    /// Vessel-versus-background HD95; null when either mask is empty.
    pub hd95_mm: Option<f64>,
    pub hd95_a_mm: Option<f64>,
    pub hd95_v_mm: Option<f64>,
    pub bc_ratio_a: Option<f64>,
    pub bc_ratio_v: Option<f64>,
    pub sl_ratio_a: Option<f64>,
    pub sl_ratio_v: Option<f64>,
    pub abundance: Option<AbundanceRatios>,
    pub loss_dsc: f64,
    pub loss_overlap: f64,
    pub loss_total: f64,
    pub losses: LossBreakdown,
    /// Conventions that applied to this particular input.
    pub flags: Vec<String>,
    pub conventions: Vec<String>,
}

pub fn conventions() -> Vec<String> {
    vec![
        "dice of two empty masks = 1".into(),
        "sensitivity with empty truth = 1".into(),
        "mcs with all four sets empty = 0".into(),
        "hd95 = max of the two directed 95th percentiles over face-boundary voxels, linear interpolation between order statistics".into(),
        "intra = voxels outside the in-heart truth of both classes".into(),
        "sl/bc ratios computed on masks resampled (nearest) to 0.652 x 0.652 x 1.00 mm; SL counts skeleton voxels kept after spur pruning".into(),
        "weighted dice: voxels are scored in the level region of their nearest truth voxel; empty truth levels are skipped; no smoothing epsilon".into(),
        "losses from the probability map when given, otherwise from the hard labels".into(),
    ]
}

/// Full metric suite for one case.
pub fn evaluate(
    pred: &LabelMask,
    prob: Option<&ProbabilityMap>,
    truth: &LabelMask,
    levels: [&BranchLevels; 2],
    opts: EvalOptions,
) -> Result<MetricsReport> {
    pred.geom.ensure_same(&truth.geom)?;
    pred.validate_labels()?;
    truth.validate_labels()?;
    for (lv, class) in levels.iter().zip(VesselClass::BOTH) {
        truth.geom.ensure_same(&lv.full().geom)?;
        lv.check_nesting()?;
        if lv.full() != &truth.class_mask(class) {
            return Err(Error::invalid(format!(
                "{} levels do not cover the {} truth mask",
                class.name(),
                class.name()
            )));
        }
    }
    let mut flags = Vec::new();
    let (pa, pv) = (pred.class_mask(VesselClass::Artery), pred.class_mask(VesselClass::Vein));
    let (ta, tv) = (truth.class_mask(VesselClass::Artery), truth.class_mask(VesselClass::Vein));
    for (name, p, t) in [("artery", &pa, &ta), ("vein", &pv, &tv)] {
        if p.count() == 0 && t.count() == 0 {
            flags.push(format!("{name}: prediction and truth both empty, dice = 1"));
        }
    }
    let heart_truth = levels[0].levels[0].or(&levels[1].levels[0])?;
    let outside = |m: &BinaryMask| -> Result<BinaryMask> { m.and_not(&heart_truth) };
    let (pvessel, tvessel) = (pred.vessel_mask(), truth.vessel_mask());
    if tvessel.count() == 0 {
        flags.push("truth empty: sensitivity = 1".into());
    }
    if pvessel.count() == 0 && tvessel.count() == 0 {
        flags.push("all label sets empty: mcs = 0".into());
    }
    let hd = |p: &BinaryMask, t: &BinaryMask, name: &str, flags: &mut Vec<String>| match hd95(p, t) {
        Ok(v) => Some(v),
        Err(_) => {
            flags.push(format!("hd95 ({name}) undefined: empty mask"));
            None
        }
    };
    let hd95_mm = hd(&pvessel, &tvessel, "vessel", &mut flags);
    let hd95_a_mm = hd(&pa, &ta, "artery", &mut flags);
    let hd95_v_mm = hd(&pv, &tv, "vein", &mut flags);

    let abundance = if opts.abundance {
        match abundance_ratios(pred, truth, levels) {
            Ok(r) => Some(r),
            Err(e) => {
                flags.push(format!("abundance ratios undefined: {e}"));
                None
            }
        }
    } else {
        None
    };

    let hard;
    let prob = match prob {
        Some(p) => {
            p.geom.ensure_same(&truth.geom)?;
            p
        }
        None => {
            hard = ProbabilityMap::from_labels(pred);
            &hard
        }
    };
    let losses = total_loss(prob, levels, truth)?;
    for (name, c) in [("artery", &losses.dsc.artery), ("vein", &losses.dsc.vein)] {
        if !c.skipped.is_empty() {
            flags.push(format!("weighted dice ({name}): empty truth levels {:?} skipped", c.skipped));
        }
    }

    Ok(MetricsReport {
        dsc_whole_a: dice(&pa, &ta)?,
        dsc_whole_v: dice(&pv, &tv)?,
        dsc_intra_a: dice(&outside(&pa)?, &outside(&ta)?)?,
        dsc_intra_v: dice(&outside(&pv)?, &outside(&tv)?)?,
        sen: sensitivity(&pvessel, &tvessel)?,
        mcs: mcs(pred, truth)?,
        hd95_mm,
        hd95_a_mm,
        hd95_v_mm,
        bc_ratio_a: abundance.map(|a| a.artery.bc_ratio),
        bc_ratio_v: abundance.map(|a| a.vein.bc_ratio),
        sl_ratio_a: abundance.map(|a| a.artery.sl_ratio),
        sl_ratio_v: abundance.map(|a| a.vein.sl_ratio),
        abundance,
        loss_dsc: losses.dsc.value,
        loss_overlap: losses.overlap,
        loss_total: losses.total,
        losses,
        flags,
        conventions: conventions(),
    })
}
