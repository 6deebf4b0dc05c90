//! Abundance indices, lung volume, regression and rank tests for cohorts.

mod regression;
mod report;
mod wilcoxon;

pub use regression::{ols, Coefficient, RegressionResult};
pub use report::{
    chi_square_median_split, cohort_report, stars, AgeBinSummary, ChiSquareResult, CohortReport, Grouping, IndexReport,
    SexSummary,
};
pub use wilcoxon::{
    rank_sum_exact_p, rank_sum_normal_p, signed_rank_exact_p, signed_rank_normal_p, wilcoxon_rank_sum,
    wilcoxon_signed_rank, TestMethod, TestResult, EXACT_MAX_N,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{class_tree, count_bifurcations};
use crate::volume::{resample_labels_nearest, BinaryMask, LabelMask, VesselClass};

/// One cohort row. Sex is coded male = 1, female = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub sex: u8,
    /// Years.
    pub age: f64,
    /// Liters.
    pub lung_volume: f64,
    /// cm.
    pub slpa: f64,
    pub slpv: f64,
    pub bcpa: f64,
    pub bcpv: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbundanceIndex {
    Slpa,
    Slpv,
    Bcpa,
    Bcpv,
}

impl AbundanceIndex {
    pub const ALL: [AbundanceIndex; 4] =
        [AbundanceIndex::Slpa, AbundanceIndex::Slpv, AbundanceIndex::Bcpa, AbundanceIndex::Bcpv];

    pub fn name(self) -> &'static str {
        match self {
            AbundanceIndex::Slpa => "slpa",
            AbundanceIndex::Slpv => "slpv",
            AbundanceIndex::Bcpa => "bcpa",
            AbundanceIndex::Bcpv => "bcpv",
        }
    }
}

impl SubjectRecord {
    pub fn get(&self, idx: AbundanceIndex) -> f64 {
        match idx {
            AbundanceIndex::Slpa => self.slpa,
            AbundanceIndex::Slpv => self.slpv,
            AbundanceIndex::Bcpa => self.bcpa,
            AbundanceIndex::Bcpv => self.bcpv,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sex > 1 {
            return Err(Error::invalid(format!("{}: sex must be 0 or 1, got {}", self.id, self.sex)));
        }
        if !(self.lung_volume > 0.0) {
            return Err(Error::invalid(format!("{}: lung_volume must be positive", self.id)));
        }
        if !self.age.is_finite() || AbundanceIndex::ALL.iter().any(|&i| !self.get(i).is_finite()) {
            return Err(Error::invalid(format!("{}: non-finite field", self.id)));
        }
        Ok(())
    }
}

/// Lung volume in liters with the intrapulmonary vessels removed.
pub fn lung_volume(lung: &BinaryMask, truth: &LabelMask) -> Result<f64> {
    lung.geom.ensure_same(&truth.geom)?;
    let n = lung.count();
    if n == 0 {
        return Err(Error::invalid("empty lung mask"));
    }
    let vessels = lung.data.iter().zip(&truth.data).filter(|(&l, &t)| l && t != 0).count();
    Ok((n - vessels) as f64 * lung.geom.voxel_volume() * 1e-6)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAbundance {
    /// Skeleton length in cm: kept voxel count times the mean chord step.
    pub skeleton_length_cm: f64,
    /// Skeleton voxel count after spur pruning.
    pub skeleton_voxels: usize,
    pub bifurcations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Abundance {
    pub artery: ClassAbundance,
    pub vein: ClassAbundance,
}

impl Abundance {
    pub fn slpa(&self) -> f64 {
        self.artery.skeleton_length_cm
    }
    pub fn slpv(&self) -> f64 {
        self.vein.skeleton_length_cm
    }
    pub fn bcpa(&self) -> usize {
        self.artery.bifurcations
    }
    pub fn bcpv(&self) -> usize {
        self.vein.bifurcations
    }
}

/// SLPA/SLPV/BCPA/BCPV of a labelled case. With `spacing` the masks are first
/// resampled (nearest neighbour) to that voxel size.
pub fn abundance_indices(truth: &LabelMask, lung: &BinaryMask, spacing: Option<[f64; 3]>) -> Result<Abundance> {
    truth.geom.ensure_same(&lung.geom)?;
    let (truth, lung) = match spacing {
        Some(s) if s != truth.geom.spacing => {
            let target = truth.geom.with_spacing(s)?;
            let t = resample_labels_nearest(truth, &target);
            let l = resample_labels_nearest(&lung.to_labels(1), &target).nonzero();
            (t, l)
        }
        _ => (truth.clone(), lung.clone()),
    };
    let class = |c: VesselClass| -> Result<ClassAbundance> {
        let outside = lung.map(|&l| !l);
        let tree = class_tree(&truth, c, Some(&outside))?;
        let voxels = tree.voxel_count();
        Ok(ClassAbundance {
            skeleton_length_cm: tree.skeleton_length_mm() / 10.0,
            skeleton_voxels: voxels,
            bifurcations: count_bifurcations(&tree),
        })
    };
    Ok(Abundance { artery: class(VesselClass::Artery)?, vein: class(VesselClass::Vein)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Geometry, Volume};

    #[test]
    fn lung_volume_units() {
        let geom = Geometry::unit([100, 100, 100]);
        let lung: BinaryMask = Volume::filled(geom, true);
        let mut truth: LabelMask = Volume::filled(geom, 0);
        assert!((lung_volume(&lung, &truth).unwrap() - 1.0).abs() < 1e-12);
        for v in truth.data.iter_mut().take(50_000) {
            *v = 1;
        }
        assert!((lung_volume(&lung, &truth).unwrap() - 0.95).abs() < 1e-12);
        let empty: BinaryMask = Volume::filled(geom, false);
        assert!(lung_volume(&empty, &truth).is_err());
    }

    #[test]
    fn vessels_outside_lung_do_not_count() {
        let geom = Geometry::new([10, 10, 10], [2.0, 2.0, 2.0], [0.0; 3]).unwrap();
        let mut lung: BinaryMask = Volume::filled(geom, false);
        let mut truth: LabelMask = Volume::filled(geom, 0);
        for i in 0..500 {
            lung.data[i] = true;
            truth.data[i + 500] = 2;
        }
        assert!((lung_volume(&lung, &truth).unwrap() - 500.0 * 8.0 * 1e-6).abs() < 1e-15);
    }

    #[test]
    fn empty_vein_gives_zero_indices() {
        let geom = Geometry::unit([20, 20, 40]);
        let lung: BinaryMask = Volume::filled(geom, true);
        let mut truth: LabelMask = Volume::filled(geom, 0);
        for z in 5..35 {
            for y in 9..12 {
                for x in 9..12 {
                    *truth.at_mut(x, y, z) = 1;
                }
            }
        }
        let ab = abundance_indices(&truth, &lung, None).unwrap();
        assert_eq!((ab.slpv(), ab.bcpv()), (0.0, 0));
        assert_eq!(ab.bcpa(), 0);
        assert!(ab.slpa() > 2.0 && ab.slpa() < 3.5, "{}", ab.slpa());
    }
}
