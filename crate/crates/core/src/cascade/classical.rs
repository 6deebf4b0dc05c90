//! Threshold-and-grow stand-in for a learned stage segmenter.
//!
//! Stage `i` seeds where vesselness reaches `tau[i]`, grows geodesically
//! through voxels inside the intensity band of the cardinal vessels, and
//! labels the result by connectivity to the artery and vein cardinal seeds.
//! From stage 1 on, a voxel is only admitted where the transmitted prior
//! reaches `gamma`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{channel_max, StageInput, StageOutput, StageSegmenter, TransmissionKernel, STAGE_COUNT};
use crate::error::{Error, Result};
use crate::morph::{connected_components, neighbor, Connectivity, OFFSETS_6};
use crate::par;
use crate::volume::{label, Geometry, ProbabilityMap, Volume};

/// Voxel indices inside the two cardinal (in-heart) vessels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardinalSeeds {
    pub artery: [usize; 3],
    pub vein: [usize; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicalParams {
    /// Vesselness seed threshold per stage.
    pub tau: [f64; STAGE_COUNT],
    /// Minimum transmitted prior for a voxel to be admitted after stage 0.
    pub gamma: f64,
    /// Per-stage switch for the prior gate (stage 0 is never gated).
    pub gate: [bool; STAGE_COUNT],
    /// Half-width of the admitted intensity band around the cardinal
    /// vessels' median, in windowed units.
    pub band: f32,
    /// Maximum geodesic distance, in 6-connected steps, a region grows from
    /// its seeds. `None` grows through the whole band.
    pub grow_steps: Option<usize>,
    pub kernel_sigma: f64,
    pub seeds: Option<CardinalSeeds>,
}

impl Default for ClassicalParams {
    fn default() -> Self {
        ClassicalParams {
            tau: [0.30, 0.20, 0.12, 0.08],
            gamma: 0.05,
            gate: [true; STAGE_COUNT],
            band: 0.06,
            grow_steps: Some(5),
            kernel_sigma: 1.0,
            seeds: None,
        }
    }
}

impl ClassicalParams {
    pub fn validate(&self) -> Result<()> {
        for (i, &t) in self.tau.iter().enumerate() {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::invalid(format!("tau[{i}] = {t} outside [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma = {} outside [0, 1]", self.gamma)));
        }
        if !(self.band.is_finite() && self.band > 0.0) {
            return Err(Error::invalid(format!("band half-width must be positive, got {}", self.band)));
        }
        TransmissionKernel::new(self.kernel_sigma)?;
        Ok(())
    }

    /// One segmenter per stage, in stage order.
    pub fn segmenters(&self) -> Result<[ClassicalSegmenter; STAGE_COUNT]> {
        self.validate()?;
        let seeds = self.seeds.ok_or_else(|| Error::invalid("the classical backend needs cardinal seeds"))?;
        let kernel = TransmissionKernel::new(self.kernel_sigma)?;
        Ok(std::array::from_fn(|level| ClassicalSegmenter {
            level,
            tau: self.tau[level] as f32,
            gamma: self.gamma as f32,
            gated: self.gate[level],
            band: self.band,
            grow_steps: self.grow_steps,
            seeds,
            kernel: kernel.clone(),
        }))
    }
}

/// The classical segmenter configured for one level.
#[derive(Clone, Debug)]
pub struct ClassicalSegmenter {
    pub level: usize,
    pub tau: f32,
    pub gamma: f32,
    pub gated: bool,
    pub band: f32,
    pub grow_steps: Option<usize>,
    pub seeds: CardinalSeeds,
    pub kernel: TransmissionKernel,
}

fn seed_index(geom: &Geometry, c: [usize; 3], name: &str) -> Result<usize> {
    if (0..3).any(|a| c[a] >= geom.dims[a]) {
        return Err(Error::invalid(format!("{name} cardinal seed {c:?} outside grid {:?}", geom.dims)));
    }
    Ok(geom.index(c[0], c[1], c[2]))
}

/// Median CT over the 3×3×3 neighbourhoods of both seeds.
fn band_centre(input: &StageInput, seeds: &[usize; 2]) -> f32 {
    let geom = input.geom();
    let mut vals: Vec<f32> = Vec::with_capacity(54);
    for &s in seeds {
        vals.push(input.ct.data[s]);
        for &o in &crate::morph::OFFSETS_26 {
            if let Some(j) = neighbor(&geom, s, o) {
                vals.push(input.ct.data[j]);
            }
        }
    }
    vals.sort_by(f32::total_cmp);
    vals[vals.len() / 2]
}

/// Grows `seeds` inside `admitted`, up to `steps` 6-connected steps.
fn grow(geom: &Geometry, seeds: Vec<bool>, admitted: &[bool], steps: Option<usize>) -> Vec<bool> {
    match steps {
        Some(k) => {
            let mut cur = seeds;
            for _ in 0..k {
                let prev = cur;
                cur = par::map_indices(prev.len(), |i| {
                    prev[i] || admitted[i] && OFFSETS_6.iter().any(|&o| neighbor(geom, i, o).is_some_and(|j| prev[j]))
                });
            }
            cur
        }
        None => {
            let mut region = seeds;
            let mut queue: VecDeque<usize> = (0..region.len()).filter(|&i| region[i]).collect();
            while let Some(i) = queue.pop_front() {
                for &o in &OFFSETS_6 {
                    if let Some(j) = neighbor(geom, i, o) {
                        if admitted[j] && !region[j] {
                            region[j] = true;
                            queue.push_back(j);
                        }
                    }
                }
            }
            region
        }
    }
}

/// Labels `region` by geodesic proximity to the cardinal seeds; voxels in
/// components neither seed reaches stay background (0).
fn label_from_seeds(geom: &Geometry, region: &[bool], seeds: [usize; 2]) -> Vec<u8> {
    let mut labels = vec![label::BACKGROUND; region.len()];
    let mut queue = VecDeque::new();
    for (s, code) in seeds.into_iter().zip([label::ARTERY, label::VEIN]) {
        if region[s] && labels[s] == label::BACKGROUND {
            labels[s] = code;
            queue.push_back(s);
        }
    }
    while let Some(i) = queue.pop_front() {
        for &o in &OFFSETS_6 {
            if let Some(j) = neighbor(geom, i, o) {
                if region[j] && labels[j] == label::BACKGROUND {
                    labels[j] = labels[i];
                    queue.push_back(j);
                }
            }
        }
    }
    labels
}

impl ClassicalSegmenter {
    fn admitted(&self, input: &StageInput, centre: f32) -> Vec<bool> {
        let gate = input.stage > 0 && self.gated;
        let prior = if gate { channel_max(&input.prior_a, &input.prior_v) } else { Vec::new() };
        par::map_indices(input.ct.len(), |i| {
            (input.ct.data[i] - centre).abs() <= self.band && (!gate || prior[i] >= self.gamma)
        })
    }
}

impl StageSegmenter for ClassicalSegmenter {
    fn name(&self) -> String {
        format!("classical level {} (tau {}, gate {})", self.level, self.tau, if self.gated { "on" } else { "off" })
    }

    fn segment(&self, input: &StageInput) -> Result<StageOutput> {
        let geom = input.geom();
        let sa = seed_index(&geom, self.seeds.artery, "artery")?;
        let sv = seed_index(&geom, self.seeds.vein, "vein")?;
        let mut flags = Vec::new();
        let centre = band_centre(input, &[sa, sv]);
        let admitted = self.admitted(input, centre);
        let seeds = par::map_indices(geom.len(), |i| admitted[i] && input.vesselness.data[i] >= self.tau);
        if !seeds.iter().any(|&s| s) {
            flags.push("no seeds found".into());
            return Ok(StageOutput {
                probabilities: ProbabilityMap::zeros(geom),
                accepted: Some(Volume::filled(geom, label::BACKGROUND)),
                flags,
            });
        }
        let region = grow(&geom, seeds, &admitted, self.grow_steps);
        for (s, name) in [(sa, "artery"), (sv, "vein")] {
            if !region[s] {
                flags.push(format!("{name} cardinal seed lies outside the grown region"));
            }
        }
        let mut labels = label_from_seeds(&geom, &region, [sa, sv]);

        // Components that no cardinal seed reaches. Stage 0 has no other
        // evidence and drops them; later stages side with the prior.
        let rest = Volume { geom, data: par::map_indices(geom.len(), |i| region[i] && labels[i] == label::BACKGROUND) };
        let (comp, n) = connected_components(&rest, Connectivity::Face6);
        if n > 0 && input.stage > 0 {
            let mut mass = vec![(0.0f64, 0.0f64, 0usize); n + 1];
            for i in 0..geom.len() {
                let c = comp[i] as usize;
                if c != 0 {
                    mass[c].0 += f64::from(input.prior_a.data[i]);
                    mass[c].1 += f64::from(input.prior_v.data[i]);
                    if mass[c].2 == 0 {
                        mass[c].2 = i + 1;
                    }
                }
            }
            let (pa, pv) = (geom.position(self.seeds.artery), geom.position(self.seeds.vein));
            let code: Vec<u8> = mass
                .iter()
                .map(|&(a, v, first)| {
                    if first == 0 {
                        return label::BACKGROUND;
                    }
                    if a > v {
                        return label::ARTERY;
                    }
                    if v > a {
                        return label::VEIN;
                    }
                    let p = geom.position(geom.coords(first - 1));
                    let d = |q: [f64; 3]| (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>();
                    if d(pa) <= d(pv) {
                        label::ARTERY
                    } else {
                        label::VEIN
                    }
                })
                .collect();
            for i in 0..geom.len() {
                if comp[i] != 0 {
                    labels[i] = code[comp[i] as usize];
                }
            }
        } else if n > 0 {
            flags.push(format!("{n} components not connected to a cardinal seed dropped"));
        }

        let dims = geom.dims;
        let a: Vec<f32> = labels.iter().map(|&c| f32::from(c == label::ARTERY)).collect();
        let v: Vec<f32> = labels.iter().map(|&c| f32::from(c == label::VEIN)).collect();
        let probabilities = ProbabilityMap::new(geom, self.kernel.apply(&a, dims), self.kernel.apply(&v, dims))?;
        Ok(StageOutput { probabilities, accepted: Some(Volume { geom, data: labels }), flags })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::assemble_input;
    use crate::volume::{Volume, VoxelGrid};

    const DIMS: [usize; 3] = [40, 24, 16];

    /// Two tubes along x (artery at y = 6, vein at y = 17) and a blob far
    /// from both at the end of the artery row.
    fn scene() -> (VoxelGrid, VoxelGrid, Vec<u8>) {
        let geom = Geometry::unit(DIMS);
        let mut truth = vec![0u8; geom.len()];
        let mut ct = vec![0.1f32; geom.len()];
        let mut ves = vec![0.0f32; geom.len()];
        for i in 0..geom.len() {
            let [x, y, z] = geom.coords(i).map(|c| c as f64);
            let r2 = |yc: f64| (y - yc).powi(2) + (z - 8.0).powi(2);
            let code = if x < 28.0 && r2(6.0) <= 6.5 {
                1
            } else if r2(17.0) <= 6.5 {
                2
            } else if (x - 35.0).powi(2) + r2(6.0) <= 4.5 {
                3
            } else {
                0
            };
            if code != 0 {
                ct[i] = 0.8;
                truth[i] = code;
                let on_axis = r2(if code == 2 { 17.0 } else { 6.0 }) < 1.0;
                ves[i] = if on_axis { 0.9 } else { 0.05 };
            }
        }
        (Volume { geom, data: ct }, Volume { geom, data: ves }, truth)
    }

    fn params() -> ClassicalParams {
        ClassicalParams { seeds: Some(CardinalSeeds { artery: [2, 6, 8], vein: [2, 17, 8] }), ..Default::default() }
    }

    #[test]
    fn uniform_input_gives_empty_maps() {
        let geom = Geometry::unit(DIMS);
        let flat = Volume::filled(geom, 0.5f32);
        let zero = Volume::filled(geom, 0.0f32);
        let seg = &params().segmenters().unwrap()[0];
        let out = seg.segment(&assemble_input(&flat, &zero, &zero, &zero, 0).unwrap()).unwrap();
        assert!(out.probabilities.artery.iter().chain(&out.probabilities.vein).all(|&p| p == 0.0));
        assert!(out.flags.iter().any(|f| f.contains("no seeds")));
    }

    #[test]
    fn stage_zero_labels_by_cardinal_connectivity_and_drops_strays() {
        let (ct, ves, truth) = scene();
        let zero = Volume::filled(ct.geom, 0.0f32);
        let seg = &params().segmenters().unwrap()[0];
        let out = seg.segment(&assemble_input(&ct, &ves, &zero, &zero, 0).unwrap()).unwrap();
        let acc = out.accepted.unwrap();
        for i in 0..acc.len() {
            match truth[i] {
                1 | 2 => assert_eq!(acc.data[i], truth[i], "voxel {:?}", ct.geom.coords(i)),
                _ => assert_eq!(acc.data[i], label::BACKGROUND),
            }
        }
        assert!(out.flags.iter().any(|f| f.contains("dropped")));
        assert!(out.probabilities.first_out_of_range().is_none());
    }

    #[test]
    fn prior_gate_decides_admission_after_stage_zero() {
        let (ct, ves, truth) = scene();
        let geom = ct.geom;
        // Prior around the artery tube only.
        let pa: VoxelGrid = Volume { geom, data: truth.iter().map(|&c| if c == 1 { 0.9 } else { 0.0 }).collect() };
        let pv = Volume::filled(geom, 0.0f32);
        let input = assemble_input(&ct, &ves, &pa, &pv, 3).unwrap();

        let gated = &params().segmenters().unwrap()[3];
        let acc = gated.segment(&input).unwrap().accepted.unwrap();
        assert!((0..acc.len()).all(|i| (acc.data[i] != 0) == (truth[i] == 1)));

        let mut open = params();
        open.gate[3] = false;
        let acc = open.segmenters().unwrap()[3].segment(&input).unwrap().accepted.unwrap();
        for i in 0..acc.len() {
            // Without the gate the stray blob comes back, sided with the
            // nearer cardinal seed since it carries no prior.
            let expected = [0, 1, 2, 1][truth[i] as usize];
            assert_eq!(acc.data[i], expected);
        }
    }

    #[test]
    fn strays_side_with_the_stronger_prior() {
        let (ct, ves, truth) = scene();
        let geom = ct.geom;
        let pv: VoxelGrid = Volume { geom, data: truth.iter().map(|&c| if c == 3 { 0.5 } else { 0.0 }).collect() };
        let pa = Volume { geom, data: truth.iter().map(|&c| if c == 1 { 0.5 } else { 0.0 }).collect() };
        let mut p = params();
        p.gate = [false; STAGE_COUNT];
        let input = assemble_input(&ct, &ves, &pa, &pv, 1).unwrap();
        let acc = p.segmenters().unwrap()[1].segment(&input).unwrap().accepted.unwrap();
        assert!((0..acc.len()).filter(|&i| truth[i] == 3).all(|i| acc.data[i] == label::VEIN));
    }

    #[test]
    fn bounded_growth_stops_short_of_distant_voxels() {
        let geom = Geometry::unit([30, 3, 3]);
        let ct = Volume::filled(geom, 0.8f32);
        let mut ves = Volume::filled(geom, 0.0f32);
        *ves.at_mut(0, 1, 1) = 1.0;
        let zero = Volume::filled(geom, 0.0f32);
        let mut p = ClassicalParams {
            seeds: Some(CardinalSeeds { artery: [0, 1, 1], vein: [29, 1, 1] }),
            ..Default::default()
        };
        let input = assemble_input(&ct, &ves, &zero, &zero, 0).unwrap();
        let acc = p.segmenters().unwrap()[0].segment(&input).unwrap().accepted.unwrap();
        let reach = (0..30).filter(|&x| *acc.at(x, 1, 1) != 0).max().unwrap();
        assert_eq!(reach, 5);
        p.grow_steps = None;
        let acc = p.segmenters().unwrap()[0].segment(&input).unwrap().accepted.unwrap();
        // The whole rod is reached and split between the two seeds.
        assert!(acc.data.iter().all(|&c| c != label::BACKGROUND));
        assert_eq!(*acc.at(0, 0, 0), label::ARTERY);
        assert_eq!(*acc.at(29, 2, 2), label::VEIN);
    }

    #[test]
    fn config_validation() {
        assert!(ClassicalParams::default().segmenters().is_err());
        let mut p = params();
        p.tau[2] = 1.5;
        assert!(p.validate().is_err());
        let p = ClassicalParams {
            seeds: Some(CardinalSeeds { artery: [99, 0, 0], vein: [0, 0, 0] }),
            ..Default::default()
        };
        let (ct, ves, _) = scene();
        let zero = Volume::filled(ct.geom, 0.0f32);
        assert!(p.segmenters().unwrap()[0].segment(&assemble_input(&ct, &ves, &zero, &zero, 0).unwrap()).is_err());
    }
}
