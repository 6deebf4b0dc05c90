//! Overlap, misclassification and boundary metrics, abundance ratios and
//! the training losses.

mod loss;
mod report;

pub use loss::{overlap_loss, total_loss, weighted_dice_loss, ClassDiceLoss, LossBreakdown, WeightedDiceLoss};
pub use report::{conventions, evaluate, AbundanceRatios, ClassAbundanceRatio, EvalOptions, MetricsReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morph::{edt_squared, face_boundary};
use crate::par;
use crate::skeleton::{class_tree, count_bifurcations, BranchLevels};
use crate::volume::{resample_labels_nearest, BinaryMask, LabelMask, VesselClass, METRIC_SPACING};

fn counts(p: &BinaryMask, t: &BinaryMask) -> Result<(u64, u64, u64)> {
    p.geom.ensure_same(&t.geom)?;
    let both = par::count(p.len(), |i| p.data[i] && t.data[i]);
    Ok((both, p.count() as u64, t.count() as u64))
}

/// `2|P∩T| / (|P| + |T|)`; 1 when both masks are empty.
pub fn dice(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64> {
    let (both, np, nt) = counts(pred, truth)?;
    if np + nt == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (np + nt) as f64)
}

/// `|P∩T| / |T|`; 1 when the truth is empty.
pub fn sensitivity(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64> {
    let (both, _, nt) = counts(pred, truth)?;
    if nt == 0 {
        return Ok(1.0);
    }
    Ok(both as f64 / nt as f64)
}

/// `(|P_A∩T_V| + |P_V∩T_A|) / (|P_A| + |P_V| + |T_A| + |T_V|)`; 0 when all
/// four sets are empty.
pub fn mcs(pred: &LabelMask, truth: &LabelMask) -> Result<f64> {
    pred.geom.ensure_same(&truth.geom)?;
    let cross = par::count(pred.len(), |i| {
        let (p, t) = (pred.data[i], truth.data[i]);
        p != 0 && t != 0 && p != t
    });
    let denom = par::count(pred.len(), |i| pred.data[i] != 0) + par::count(truth.len(), |i| truth.data[i] != 0);
    if denom == 0 {
        return Ok(0.0);
    }
    Ok(cross as f64 / denom as f64)
}

/// Linear interpolation between order statistics of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn directed_distances(from: &BinaryMask, to: &BinaryMask) -> Vec<f64> {
    let d2 = edt_squared(to);
    let mut d: Vec<f64> = (0..from.len()).filter(|&i| from.data[i]).map(|i| d2[i].sqrt()).collect();
    d.sort_by(f64::total_cmp);
    d
}

/// Symmetric 95th-percentile boundary distance in mm: the larger of the two
/// directed percentiles over face-boundary voxels.
pub fn hd95(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64> {
    pred.geom.ensure_same(&truth.geom)?;
    if pred.count() == 0 || truth.count() == 0 {
        return Err(Error::Undefined("hd95: undefined distance for an empty mask".into()));
    }
    let (bp, bt) = (face_boundary(pred), face_boundary(truth));
    let a = percentile(&directed_distances(&bp, &bt), 0.95);
    let b = percentile(&directed_distances(&bt, &bp), 0.95);
    Ok(a.max(b))
}

/// Skeleton length and bifurcation count of one class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonCounts {
    pub skeleton_voxels: usize,
    pub bifurcations: usize,
}

fn skeleton_counts(mask: &LabelMask, class: VesselClass, prefer: &BinaryMask) -> Result<SkeletonCounts> {
    let tree = class_tree(mask, class, Some(prefer))?;
    Ok(SkeletonCounts { skeleton_voxels: tree.voxel_count(), bifurcations: count_bifurcations(&tree) })
}

/// SL and BC ratios of prediction over truth per class, computed after
/// resampling both masks to the metric spacing.
pub fn abundance_ratios(pred: &LabelMask, truth: &LabelMask, levels: [&BranchLevels; 2]) -> Result<AbundanceRatios> {
    pred.geom.ensure_same(&truth.geom)?;
    let target = truth.geom.with_spacing(METRIC_SPACING)?;
    let p = resample_labels_nearest(pred, &target);
    let t = resample_labels_nearest(truth, &target);
    let class = |c: VesselClass, lv: &BranchLevels| -> Result<ClassAbundanceRatio> {
        let root_region = resample_labels_nearest(&lv.levels[0].to_labels(1), &target).nonzero();
        let truth_counts = skeleton_counts(&t, c, &root_region)?;
        if truth_counts.skeleton_voxels == 0 {
            return Err(Error::Undefined(format!("truth skeleton of the {} class is empty", c.name())));
        }
        let pred_counts = skeleton_counts(&p, c, &root_region)?;
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Ok(ClassAbundanceRatio {
            sl_ratio: ratio(pred_counts.skeleton_voxels, truth_counts.skeleton_voxels),
            bc_ratio: ratio(pred_counts.bifurcations, truth_counts.bifurcations),
            pred: pred_counts,
            truth: truth_counts,
        })
    };
    Ok(AbundanceRatios {
        artery: class(VesselClass::Artery, levels[0])?,
        vein: class(VesselClass::Vein, levels[1])?,
        spacing: METRIC_SPACING,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Geometry, Volume};
    use proptest::prelude::*;

    fn mask_from(geom: Geometry, on: impl Fn([usize; 3]) -> bool) -> BinaryMask {
        Volume { geom, data: (0..geom.len()).map(|i| on(geom.coords(i))).collect() }
    }

    #[test]
    fn dice_and_sensitivity_examples() {
        let geom = Geometry::unit([10, 10, 10]);
        let a = mask_from(geom, |c| c[0] < 1);
        let b = mask_from(geom, |c| c[0] >= 9);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
        let empty = mask_from(geom, |_| false);
        assert_eq!(dice(&empty, &empty).unwrap(), 1.0);
        let p = mask_from(geom, |c| c[0] < 1);
        let t = mask_from(geom, |c| c[0] < 1 && c[1] < 5 || c[0] == 1 && c[1] < 5);
        assert_eq!(dice(&p, &t).unwrap(), 0.5);
        let t2 = mask_from(geom, |c| c[0] < 2);
        let p2 = mask_from(geom, |c| c[0] < 1 || c[0] == 1 && c[1] < 5);
        assert_eq!(sensitivity(&p2, &t2).unwrap(), 0.75);
        assert_eq!(sensitivity(&t2, &p2).unwrap(), 1.0);
        assert_eq!(sensitivity(&b, &t2).unwrap(), 0.0);
        assert_eq!(sensitivity(&b, &empty).unwrap(), 1.0);
        let other = mask_from(Geometry::unit([10, 10, 9]), |_| true);
        assert!(matches!(dice(&a, &other), Err(Error::GeometryMismatch { .. })));
    }

    #[test]
    fn mcs_examples() {
        let geom = Geometry::unit([8, 8, 8]);
        let truth: LabelMask = Volume { geom, data: (0..geom.len()).map(|i| [0, 1, 2, 0][i % 4]).collect() };
        let swapped = truth.map(|&l| [0, 2, 1][l as usize]);
        let none: LabelMask = Volume::filled(geom, 0);
        assert_eq!(mcs(&truth, &truth).unwrap(), 0.0);
        assert_eq!(mcs(&swapped, &truth).unwrap(), 0.5);
        assert_eq!(mcs(&none, &truth).unwrap(), 0.0);
        assert_eq!(mcs(&none, &none).unwrap(), 0.0);
    }

    #[test]
    fn hd95_examples() {
        let geom = Geometry::new([40, 40, 40], [1.0, 1.0, 1.0], [0.0; 3]).unwrap();
        let sphere =
            |c: [f64; 3]| mask_from(geom, move |v| (0..3).map(|a| (v[a] as f64 - c[a]).powi(2)).sum::<f64>() <= 100.0);
        let a = sphere([20.0, 20.0, 17.5]);
        let b = sphere([20.0, 20.0, 22.5]);
        assert_eq!(hd95(&a, &a).unwrap(), 0.0);
        let h = hd95(&a, &b).unwrap();
        assert!(h > 0.0 && h <= 5.0, "{h}");
        assert_eq!(h, hd95(&b, &a).unwrap());
        let empty = mask_from(geom, |_| false);
        assert!(hd95(&a, &empty).is_err());

        let g2 = Geometry::new([20, 20, 30], [0.7, 0.7, 2.5], [0.0; 3]).unwrap();
        let slab = |z0: usize| {
            mask_from(g2, move |v| (4..16).contains(&v[0]) && (4..16).contains(&v[1]) && (z0..z0 + 10).contains(&v[2]))
        };
        let k = 3;
        let h = hd95(&slab(5), &slab(5 + k)).unwrap();
        let diag = (0.7f64 * 0.7 * 2.0 + 2.5 * 2.5).sqrt();
        assert!((h - k as f64 * 2.5).abs() <= diag, "{h}");
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[0.0, 10.0], 0.95), 9.5);
        assert_eq!(percentile(&[3.0], 0.95), 3.0);
        let v: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.95), 95.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn metric_ranges_and_symmetry(bits in prop::collection::vec(0u8..3, 6 * 6 * 6), bits2 in prop::collection::vec(0u8..3, 6 * 6 * 6)) {
            let geom = Geometry::unit([6, 6, 6]);
            let p: LabelMask = Volume { geom, data: bits };
            let t: LabelMask = Volume { geom, data: bits2 };
            let (pv, tv) = (p.vessel_mask(), t.vessel_mask());
            let d = dice(&pv, &tv).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, dice(&tv, &pv).unwrap());
            let m = mcs(&p, &t).unwrap();
            prop_assert!((0.0..=1.0).contains(&m));
            prop_assert_eq!(m, mcs(&t, &p).unwrap());
            prop_assert!((0.0..=1.0).contains(&sensitivity(&pv, &tv).unwrap()));
            if pv.count() > 0 && tv.count() > 0 {
                prop_assert_eq!(hd95(&pv, &tv).unwrap(), hd95(&tv, &pv).unwrap());
            }
        }
    }
}
