//! Four-stage segmentation cascade. Each stage sees the CT, its vesselness
//! and the previous stage's probabilities after a fixed smoothing.

mod classical;

pub use classical::{CardinalSeeds, ClassicalParams, ClassicalSegmenter};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{convolve_axis, gaussian_kernel_voxels, Kernel1d};
use crate::par;
use crate::volume::{Geometry, LabelMask, ProbabilityMap, Volume, VoxelGrid};

pub const STAGE_COUNT: usize = 4;

/// Normalised 3×3×3 Gaussian shared by every stage and both classes.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionKernel {
    sigma: f64,
    taps: Kernel1d,
}

impl TransmissionKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid(format!("kernel sigma must be positive, got {sigma}")));
        }
        Ok(TransmissionKernel { sigma, taps: gaussian_kernel_voxels(sigma, 1) })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Weight at offset `(dx, dy, dz)`, each in -1..=1.
    pub fn weight(&self, d: [isize; 3]) -> f64 {
        d.iter().map(|&k| self.taps.taps[(k + 1) as usize]).product()
    }

    /// Convolves one channel, clamping at the grid edge.
    pub fn apply(&self, data: &[f32], dims: [usize; 3]) -> Vec<f32> {
        let mut out = data.to_vec();
        for axis in 0..3 {
            out = convolve_axis(&out, dims, axis, &self.taps);
        }
        // Rounding can leave a constant 1 a hair above 1.
        for v in &mut out {
            *v = v.clamp(0.0, 1.0);
        }
        out
    }
}

impl Default for TransmissionKernel {
    fn default() -> Self {
        TransmissionKernel::new(1.0).expect("unit sigma is valid")
    }
}

/// Smoothed artery and vein channels of the previous stage.
pub fn transmit_prior(prev: &ProbabilityMap, kernel: &TransmissionKernel) -> (VoxelGrid, VoxelGrid) {
    let dims = prev.geom.dims;
    (
        Volume { geom: prev.geom, data: kernel.apply(&prev.artery, dims) },
        Volume { geom: prev.geom, data: kernel.apply(&prev.vein, dims) },
    )
}

/// The four input channels of one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageInput {
    pub ct: VoxelGrid,
    pub vesselness: VoxelGrid,
    pub prior_a: VoxelGrid,
    pub prior_v: VoxelGrid,
    pub stage: usize,
}

impl StageInput {
    pub fn geom(&self) -> Geometry {
        self.ct.geom
    }
}

/// Concatenates the channels. Stage 0 has no predecessor, so its priors
/// are replaced by zeros whatever was supplied.
pub fn assemble_input(
    ct: &VoxelGrid,
    vesselness: &VoxelGrid,
    prior_a: &VoxelGrid,
    prior_v: &VoxelGrid,
    stage: usize,
) -> Result<StageInput> {
    if stage >= STAGE_COUNT {
        return Err(Error::invalid(format!("stage index {stage} outside 0..{STAGE_COUNT}")));
    }
    for g in [&vesselness.geom, &prior_a.geom, &prior_v.geom] {
        ct.geom.ensure_same(g)?;
    }
    let (prior_a, prior_v) = if stage == 0 {
        (Volume::filled(ct.geom, 0.0), Volume::filled(ct.geom, 0.0))
    } else {
        (prior_a.clone(), prior_v.clone())
    };
    Ok(StageInput { ct: ct.clone(), vesselness: vesselness.clone(), prior_a, prior_v, stage })
}

/// What a stage hands back: probabilities, optionally the hard region it
/// accepted, and notes about unusual conditions.
#[derive(Clone, Debug)]
pub struct StageOutput {
    pub probabilities: ProbabilityMap,
    pub accepted: Option<LabelMask>,
    pub flags: Vec<String>,
}

impl From<ProbabilityMap> for StageOutput {
    fn from(probabilities: ProbabilityMap) -> Self {
        StageOutput { probabilities, accepted: None, flags: Vec::new() }
    }
}

/// A per-level segmenter. Implementations must be deterministic.
pub trait StageSegmenter: Sync {
    fn name(&self) -> String;
    fn segment(&self, input: &StageInput) -> Result<StageOutput>;
}

#[derive(Clone, Debug)]
pub struct StageRecord {
    pub stage: usize,
    pub segmenter: String,
    pub output: StageOutput,
}

#[derive(Clone, Debug)]
pub struct CascadeResult {
    pub stages: Vec<StageRecord>,
}

impl CascadeResult {
    pub fn final_map(&self) -> &ProbabilityMap {
        &self.stages[STAGE_COUNT - 1].output.probabilities
    }
}

/// Stage summary for audit files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: usize,
    pub segmenter: String,
    pub accepted_artery: Option<usize>,
    pub accepted_vein: Option<usize>,
    pub flags: Vec<String>,
}

impl StageRecord {
    pub fn summary(&self) -> StageSummary {
        let count = |code: u8| self.output.accepted.as_ref().map(|m| m.data.iter().filter(|&&c| c == code).count());
        StageSummary {
            stage: self.stage,
            segmenter: self.segmenter.clone(),
            accepted_artery: count(1),
            accepted_vein: count(2),
            flags: self.output.flags.clone(),
        }
    }
}

/// Runs stages 0 to 3 in order; stage `i` sees the transmitted output of
/// stage `i - 1`.
pub fn run_cascade(
    ct: &VoxelGrid,
    vesselness: &VoxelGrid,
    segmenters: [&dyn StageSegmenter; STAGE_COUNT],
    kernel: &TransmissionKernel,
) -> Result<CascadeResult> {
    ct.geom.ensure_same(&vesselness.geom)?;
    let mut stages: Vec<StageRecord> = Vec::with_capacity(STAGE_COUNT);
    for (stage, seg) in segmenters.into_iter().enumerate() {
        let (pa, pv) = match stages.last() {
            Some(prev) => transmit_prior(&prev.output.probabilities, kernel),
            None => (Volume::filled(ct.geom, 0.0), Volume::filled(ct.geom, 0.0)),
        };
        let input = assemble_input(ct, vesselness, &pa, &pv, stage)?;
        let output = seg.segment(&input)?;
        output.probabilities.geom.ensure_same(&ct.geom)?;
        if let Some((_, index, value)) = output.probabilities.first_out_of_range() {
            return Err(Error::StageOutOfRange { stage, index, value });
        }
        stages.push(StageRecord { stage, segmenter: seg.name(), output });
    }
    Ok(CascadeResult { stages })
}

/// Maximum of two channels, voxel-wise.
pub(crate) fn channel_max(a: &VoxelGrid, b: &VoxelGrid) -> Vec<f32> {
    par::map_indices(a.len(), |i| a.data[i].max(b.data[i]))
}
