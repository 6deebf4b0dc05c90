//! Synthetic artery/vein phantoms with analytic ground truth.
//!
//! A phantom of depth `G` has a trunk inside the heart that splits into two
//! lung subtrees, `G` bifurcation levels in all: `2^(G+1) - 1` segments and
//! `2^G - 1` junctions per class. The vein tree is the artery tree turned
//! 180° about the vertical axis through the grid centre, so the two classes
//! meet near the midline.

mod cohort;
mod tree;

pub use cohort::{generate_cohort, CohortModel, IndexModel};
pub use tree::{generate_tree, generate_tree_at, GeometricTree, Segment, TreeSpec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::skeleton::{generation_level, BranchLevels, LEVEL_COUNT};
use crate::volume::{label, BinaryMask, Geometry, LabelMask, VesselClass, Volume, VoxelGrid};
use tree::{add, norm, scale, sub};

/// Vessel HU after the contrast-to-non-contrast transform.
pub const NCCT_VESSEL_HU: f32 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Palette {
    pub vessel: f32,
    pub parenchyma: f32,
    pub heart: f32,
    pub air: f32,
}

impl Default for Palette {
    fn default() -> Self {
        Palette { vessel: 300.0, parenchyma: -850.0, heart: 40.0, air: -1000.0 }
    }
}

/// Short vessel-bright tubes in the lung that belong to neither tree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClutterSpec {
    pub count: usize,
    pub radius: f64,
    pub length: f64,
    /// Minimum clearance to any vessel surface, mm.
    pub clearance: f64,
}

impl Default for ClutterSpec {
    fn default() -> Self {
        ClutterSpec { count: 8, radius: 1.5, length: 10.0, clearance: 6.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    /// Bifurcation levels per class.
    pub depth: u32,
    pub root_radius: f64,
    pub radius_decay: f64,
    pub branch_length: f64,
    pub length_decay: f64,
    pub branch_angle: f64,
    pub jitter: f64,
    pub seed: u64,
    pub spacing: [f64; 3],
    /// Closest approach between the artery and vein surfaces, mm. The trunk
    /// offset from the midline is derived from it.
    pub class_gap: f64,
    /// Clearance between the vessels and the grid faces, mm.
    pub margin: f64,
    /// Air shell around the body, mm.
    pub air_shell: f64,
    /// Extra heart radius around the trunks, mm.
    pub heart_margin: f64,
    pub palette: Palette,
    pub clutter: ClutterSpec,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            depth: 5,
            root_radius: 6.5,
            radius_decay: 0.8,
            branch_length: 30.0,
            length_decay: 0.8,
            branch_angle: 40.0,
            jitter: 0.0,
            seed: 7,
            spacing: [1.0; 3],
            class_gap: 2.0,
            margin: 6.0,
            air_shell: 3.0,
            heart_margin: 4.0,
            palette: Palette::default(),
            clutter: ClutterSpec::default(),
        }
    }
}

impl PhantomSpec {
    pub fn tree_spec(&self) -> TreeSpec {
        TreeSpec {
            generations: self.depth + 1,
            root_radius: self.root_radius,
            radius_decay: self.radius_decay,
            branch_length: self.branch_length,
            length_decay: self.length_decay,
            branch_angle: self.branch_angle,
            rng_seed: self.seed,
            jitter: self.jitter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.tree_spec().validate()?;
        if self.spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("phantom spacing must be positive"));
        }
        for (name, v) in [
            ("class_gap", self.class_gap),
            ("margin", self.margin),
            ("air_shell", self.air_shell),
            ("heart_margin", self.heart_margin),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.air_shell >= self.margin {
            return Err(Error::invalid("air_shell must be smaller than margin"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSegment {
    pub generation: u32,
    pub parent: Option<usize>,
    /// 0 for the trunk, otherwise the level of its generation.
    pub level: usize,
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub radius: f64,
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAnalytic {
    pub centerline_length_mm: f64,
    /// Junction nodes of the phantom tree, `2^G - 1`.
    pub bifurcations: usize,
    /// Segments including the trunk, `2^(G+1) - 1`.
    pub segments: usize,
    /// Counts for a bare `G`-generation segment tree without the trunk
    /// split: `2^G - 1` segments and `2^(G-1) - 1` junctions.
    pub segment_tree_segments: usize,
    pub segment_tree_junctions: usize,
    /// Voxel nearest the trunk start.
    pub root_voxel: [usize; 3],
    pub branches: Vec<AnalyticSegment>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analytic {
    pub depth: u32,
    pub artery: ClassAnalytic,
    pub vein: ClassAnalytic,
    /// Distance of each trunk axis from the midline, mm.
    pub trunk_offset: f64,
    /// Physical position of the grid centre.
    pub grid_centre: [f64; 3],
    pub spec: PhantomSpec,
    pub conventions: Vec<String>,
}

impl Analytic {
    pub fn class(&self, class: VesselClass) -> &ClassAnalytic {
        match class {
            VesselClass::Artery => &self.artery,
            VesselClass::Vein => &self.vein,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PhantomCase {
    /// HU.
    pub image: VoxelGrid,
    pub truth: LabelMask,
    pub levels_a: BranchLevels,
    pub levels_v: BranchLevels,
    pub lung: BinaryMask,
    pub heart: BinaryMask,
    pub clutter: BinaryMask,
    /// Generation of the segment owning each vessel voxel, `u8::MAX` elsewhere.
    pub generation: Volume<u8>,
    pub analytic: Analytic,
}

impl PhantomCase {
    pub fn levels(&self, class: VesselClass) -> &BranchLevels {
        match class {
            VesselClass::Artery => &self.levels_a,
            VesselClass::Vein => &self.levels_v,
        }
    }

    /// Level codes of both classes in one volume (classes are disjoint).
    pub fn level_codes(&self) -> LabelMask {
        let a = self.levels_a.to_codes();
        let v = self.levels_v.to_codes();
        Volume { geom: a.geom, data: a.data.iter().zip(&v.data).map(|(&x, &y)| x.max(y)).collect() }
    }

    pub fn root_voxel(&self, class: VesselClass) -> [usize; 3] {
        self.analytic.class(class).root_voxel
    }

    /// Vessel labels of the same trees rasterized with only the segments of
    /// generation `<= max_generation`, so cut ends keep their round caps.
    pub fn truth_up_to_generation(&self, max_generation: u32) -> LabelMask {
        let geom = self.truth.geom;
        let lat = Lattice { geom, centre: self.analytic.grid_centre };
        let keep = |c: &ClassAnalytic| GeometricTree {
            segments: c
                .branches
                .iter()
                .map(|b| Segment {
                    start: b.start,
                    end: b.end,
                    radius: if b.generation <= max_generation { b.radius } else { 0.0 },
                    generation: b.generation,
                    parent: b.parent,
                })
                .collect(),
        };
        let owner = rasterize_trees(&lat, [&keep(&self.analytic.artery), &keep(&self.analytic.vein)]);
        Volume { geom, data: owner.iter().map(|o| o.map_or(label::BACKGROUND, |o| o.class)).collect() }
    }
}

/// Voxel centres relative to the grid centre, exactly antisymmetric under
/// index reflection so that mirrored trees rasterize identically.
struct Lattice {
    geom: Geometry,
    centre: [f64; 3],
}

impl Lattice {
    #[inline]
    fn pos(&self, c: [usize; 3]) -> [f64; 3] {
        std::array::from_fn(|a| {
            let h = (self.geom.dims[a] - 1) as f64 / 2.0;
            (c[a] as f64 - h) * self.geom.spacing[a] + self.centre[a]
        })
    }

    fn voxel_of(&self, p: [f64; 3]) -> [usize; 3] {
        std::array::from_fn(|a| {
            let h = (self.geom.dims[a] - 1) as f64 / 2.0;
            let t = ((p[a] - self.centre[a]) / self.geom.spacing[a] + h).round();
            t.clamp(0.0, (self.geom.dims[a] - 1) as f64) as usize
        })
    }

    /// Inclusive voxel index ranges covering an axis-aligned box.
    fn range(&self, lo: [f64; 3], hi: [f64; 3]) -> [(usize, usize); 3] {
        std::array::from_fn(|a| {
            let h = (self.geom.dims[a] - 1) as f64 / 2.0;
            let s = self.geom.spacing[a];
            let i0 = ((lo[a] - self.centre[a]) / s + h).floor().max(0.0) as usize;
            let i1 = (((hi[a] - self.centre[a]) / s + h).ceil().max(0.0) as usize).min(self.geom.dims[a] - 1);
            (i0, i1)
        })
    }
}

struct Ellipsoid {
    centre: [f64; 3],
    semi: [f64; 3],
}

impl Ellipsoid {
    fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).map(|a| ((p[a] - self.centre[a]) / self.semi[a]).powi(2)).sum::<f64>() <= 1.0
    }
}

/// Per-voxel owner while rasterizing: class, segment and normalized distance.
#[derive(Clone, Copy)]
struct Owner {
    class: u8,
    segment: u32,
    rel: f64,
    dist: f64,
}

fn rasterize_trees(lat: &Lattice, trees: [&GeometricTree; 2]) -> Vec<Option<Owner>> {
    let geom = lat.geom;
    let mut owner: Vec<Option<Owner>> = vec![None; geom.len()];
    for (ci, tree) in trees.iter().enumerate() {
        let class = [label::ARTERY, label::VEIN][ci];
        for (si, seg) in tree.segments.iter().enumerate() {
            if seg.radius <= 0.0 {
                continue;
            }
            let lo = std::array::from_fn(|a| seg.start[a].min(seg.end[a]) - seg.radius);
            let hi = std::array::from_fn(|a| seg.start[a].max(seg.end[a]) + seg.radius);
            let [(x0, x1), (y0, y1), (z0, z1)] = lat.range(lo, hi);
            for z in z0..=z1 {
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let d = seg.distance(lat.pos([x, y, z]));
                        if d > seg.radius {
                            continue;
                        }
                        let cand = Owner { class, segment: si as u32, rel: d / seg.radius, dist: d };
                        let slot = &mut owner[geom.index(x, y, z)];
                        *slot = Some(match *slot {
                            None => cand,
                            Some(cur) if cur.class != class => {
                                if cand.rel < cur.rel {
                                    cand
                                } else {
                                    cur
                                }
                            }
                            Some(cur) => {
                                if cand.dist < cur.dist {
                                    cand
                                } else {
                                    cur
                                }
                            }
                        });
                    }
                }
            }
        }
    }
    owner
}

fn class_analytic(tree: &GeometricTree, lat: &Lattice, depth: u32) -> ClassAnalytic {
    let branches = tree
        .segments
        .iter()
        .map(|s| AnalyticSegment {
            generation: s.generation,
            parent: s.parent,
            level: if s.generation == 0 { 0 } else { generation_level(s.generation) },
            start: s.start,
            end: s.end,
            radius: s.radius,
            length: s.length(),
        })
        .collect();
    ClassAnalytic {
        centerline_length_mm: tree.total_length(),
        bifurcations: tree.junctions(),
        segments: tree.segments.len(),
        segment_tree_segments: (1usize << depth) - 1,
        segment_tree_junctions: depth.checked_sub(1).map_or(0, |d| (1usize << d) - 1),
        root_voxel: lat.voxel_of(tree.segments[0].start),
        branches,
    }
}

/// Builds a phantom from its specification.
pub fn build_phantom(spec: &PhantomSpec) -> Result<PhantomCase> {
    spec.validate()?;
    let ts = spec.tree_spec();
    // Artery trunk at y = -offset growing along +z; the vein is its copy
    // turned 180° about the z axis.
    let centred = generate_tree_at(&ts, [0.0; 3], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0])?;
    let reach = centred.segments.iter().map(|s| s.start[1].max(s.end[1]) + s.radius).fold(f64::NEG_INFINITY, f64::max);
    let offset = reach + 0.5 * spec.class_gap;
    let artery = centred.transformed(|p| [p[0], p[1] - offset, p[2]]);
    let vein = artery.transformed(|p| [-p[0], -p[1], p[2]]);

    let mut half = [0.0f64; 2];
    let (mut zlo, mut zhi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &artery.segments {
        for p in [s.start, s.end] {
            half[0] = half[0].max(p[0].abs() + s.radius);
            half[1] = half[1].max(p[1].abs() + s.radius);
            zlo = zlo.min(p[2] - s.radius);
            zhi = zhi.max(p[2] + s.radius);
        }
    }
    let m = spec.margin;
    let extent = [2.0 * (half[0] + m), 2.0 * (half[1] + m), zhi - zlo + 2.0 * m];
    let dims: [usize; 3] = std::array::from_fn(|a| (extent[a] / spec.spacing[a]).ceil() as usize + 1);
    let centre = [0.0, 0.0, 0.5 * (zlo + zhi)];
    let origin: [f64; 3] = std::array::from_fn(|a| centre[a] - (dims[a] - 1) as f64 / 2.0 * spec.spacing[a]);
    let geom = Geometry::new(dims, spec.spacing, origin)?;
    let lat = Lattice { geom, centre };

    let trunk_len = artery.segments[0].length();
    let heart = Ellipsoid {
        centre: [0.0, 0.0, 0.5 * trunk_len],
        semi: [
            spec.root_radius + spec.heart_margin,
            offset + spec.root_radius + spec.heart_margin,
            0.5 * trunk_len + spec.heart_margin,
        ],
    };
    let shell = spec.air_shell;
    let in_body = |c: [usize; 3]| {
        (0..3).all(|a| {
            let s = spec.spacing[a];
            (c[a] as f64) * s >= shell && ((dims[a] - 1 - c[a]) as f64) * s >= shell
        })
    };

    let heart_data = par::map_indices(geom.len(), |i| {
        let c = geom.coords(i);
        in_body(c) && heart.contains(lat.pos(c))
    });
    let heart_mask: BinaryMask = Volume { geom, data: heart_data };
    let lung_data = par::map_indices(geom.len(), |i| in_body(geom.coords(i)) && !heart_mask.data[i]);
    let lung: BinaryMask = Volume { geom, data: lung_data };

    let owner = rasterize_trees(&lat, [&artery, &vein]);
    let truth: LabelMask =
        Volume { geom, data: owner.iter().map(|o| o.map_or(label::BACKGROUND, |o| o.class)).collect() };

    let clutter_segments = place_clutter(spec, &lat, &[&artery, &vein], &heart, &in_body);
    let clutter_tree = GeometricTree { segments: clutter_segments };
    let empty = GeometricTree { segments: vec![] };
    let clutter_owner = rasterize_trees(&lat, [&clutter_tree, &empty]);
    let clutter: BinaryMask =
        Volume { geom, data: (0..geom.len()).map(|i| clutter_owner[i].is_some() && owner[i].is_none()).collect() };

    let pal = spec.palette;
    let image_data = (0..geom.len())
        .map(|i| {
            if owner[i].is_some() || clutter.data[i] {
                pal.vessel
            } else if heart_mask.data[i] {
                pal.heart
            } else if lung.data[i] {
                pal.parenchyma
            } else {
                pal.air
            }
        })
        .collect();
    let image: VoxelGrid = Volume { geom, data: image_data };

    let levels_for = |class: u8, tree: &GeometricTree| -> BranchLevels {
        let code: Vec<u8> = (0..geom.len())
            .map(|i| match owner[i] {
                Some(o) if o.class == class => {
                    if heart_mask.data[i] {
                        0
                    } else {
                        let g = tree.segments[o.segment as usize].generation;
                        generation_level(g) as u8
                    }
                }
                _ => u8::MAX,
            })
            .collect();
        let levels = std::array::from_fn(|l| Volume {
            geom,
            data: code.iter().map(|&c| c != u8::MAX && (c as usize) <= l).collect(),
        });
        BranchLevels { levels, heart_fallback: false }
    };
    let generation = Volume {
        geom,
        data: owner
            .iter()
            .map(|o| match o {
                Some(o) => {
                    let tree = if o.class == label::ARTERY { &artery } else { &vein };
                    tree.segments[o.segment as usize].generation.min(254) as u8
                }
                None => u8::MAX,
            })
            .collect(),
    };
    let levels_a = levels_for(label::ARTERY, &artery);
    let levels_v = levels_for(label::VEIN, &vein);
    debug_assert!(levels_a.levels.len() == LEVEL_COUNT);

    let analytic = Analytic {
        depth: spec.depth,
        artery: class_analytic(&artery, &lat, spec.depth),
        vein: class_analytic(&vein, &lat, spec.depth),
        trunk_offset: offset,
        grid_centre: centre,
        spec: spec.clone(),
        conventions: vec![
            "depth G: trunk plus two subtrees, 2^G - 1 junctions and 2^(G+1) - 1 segments per class".into(),
            "segment_tree_*: counts for a bare G-generation segment tree".into(),
            "a voxel is vessel iff its centre lies inside a capsule".into(),
            "voxels claimed by both classes go to the smaller distance/radius, ties to artery".into(),
            "level 0 = class mask inside the heart; other voxels take the level of the nearest segment axis".into(),
        ],
    };

    Ok(PhantomCase { image, truth, levels_a, levels_v, lung, heart: heart_mask, clutter, generation, analytic })
}

fn place_clutter(
    spec: &PhantomSpec,
    lat: &Lattice,
    trees: &[&GeometricTree],
    heart: &Ellipsoid,
    in_body: &dyn Fn([usize; 3]) -> bool,
) -> Vec<Segment> {
    let cs = spec.clutter;
    if cs.count == 0 {
        return vec![];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x005e_edc1_u64);
    let dims = lat.geom.dims;
    let lo = lat.pos([0, 0, 0]);
    let hi = lat.pos([dims[0] - 1, dims[1] - 1, dims[2] - 1]);
    let mut placed: Vec<Segment> = Vec::new();
    for _ in 0..20_000 {
        if placed.len() == cs.count {
            break;
        }
        let c: [f64; 3] = std::array::from_fn(|a| rng.random_range(lo[a]..=hi[a]));
        let d = loop {
            let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
            let n = norm(v);
            if n > 0.1 && n <= 1.0 {
                break scale(v, 1.0 / n);
            }
        };
        let seg = Segment {
            start: sub(c, scale(d, cs.length / 2.0)),
            end: add(c, scale(d, cs.length / 2.0)),
            radius: cs.radius,
            generation: 0,
            parent: None,
        };
        let samples: Vec<[f64; 3]> =
            (0..=10).map(|k| add(seg.start, scale(sub(seg.end, seg.start), k as f64 / 10.0))).collect();
        let reach = cs.radius + spec.air_shell + 1.0;
        let fits = samples.iter().all(|&p| {
            let inside = (0..3).all(|a| p[a] - reach >= lo[a] && p[a] + reach <= hi[a]);
            inside && in_body(lat.voxel_of(p)) && !grown(heart, cs.radius + cs.clearance).contains(p)
        });
        let clear = samples.iter().all(|&p| {
            trees
                .iter()
                .flat_map(|t| t.segments.iter())
                .chain(placed.iter())
                .all(|s| s.distance(p) >= s.radius + cs.radius + cs.clearance)
        });
        if fits && clear {
            placed.push(seg);
        }
    }
    placed
}

fn grown(e: &Ellipsoid, by: f64) -> Ellipsoid {
    Ellipsoid { centre: e.centre, semi: e.semi.map(|s| s + by) }
}

/// Remaps vessel voxels to the non-contrast regime. Only voxels of the
/// truth mask change, so the transform is idempotent.
pub fn ctpa_to_ncct(case: &PhantomCase) -> PhantomCase {
    let mut out = case.clone();
    for (v, &t) in out.image.data.iter_mut().zip(&case.truth.data) {
        if t != label::BACKGROUND {
            *v = NCCT_VESSEL_HU;
        }
    }
    out
}
