//! Recursive binary segment trees with exact geometry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    /// Segment generations: 1 gives a single segment.
    pub generations: u32,
    pub root_radius: f64,
    pub radius_decay: f64,
    pub branch_length: f64,
    pub length_decay: f64,
    /// Angle between each child and its parent's direction, degrees.
    pub branch_angle: f64,
    pub rng_seed: u64,
    /// Relative amplitude of the random perturbation of angles and lengths.
    pub jitter: f64,
}

impl Default for TreeSpec {
    fn default() -> Self {
        TreeSpec {
            generations: 6,
            root_radius: 6.5,
            radius_decay: 0.8,
            branch_length: 30.0,
            length_decay: 0.8,
            branch_angle: 40.0,
            rng_seed: 7,
            jitter: 0.0,
        }
    }
}

impl TreeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.generations == 0 || self.generations > 16 {
            return Err(Error::invalid(format!("generations must be in 1..=16, got {}", self.generations)));
        }
        let positive = [
            ("root_radius", self.root_radius),
            ("branch_length", self.branch_length),
            ("branch_angle", self.branch_angle),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("radius_decay", self.radius_decay), ("length_decay", self.length_decay)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(format!("{name} must be in (0, 1), got {v}")));
            }
        }
        if !(0.0..=0.5).contains(&self.jitter) {
            return Err(Error::invalid(format!("jitter must be in [0, 0.5], got {}", self.jitter)));
        }
        Ok(())
    }

    /// Nominal (unjittered) length of a generation-`g` segment.
    pub fn length_at(&self, g: u32) -> f64 {
        self.branch_length * self.length_decay.powi(g as i32)
    }

    pub fn radius_at(&self, g: u32) -> f64 {
        self.root_radius * self.radius_decay.powi(g as i32)
    }

    /// Closed-form total centerline length without jitter.
    pub fn nominal_total_length(&self) -> f64 {
        (0..self.generations).map(|g| 2f64.powi(g as i32) * self.length_at(g)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub radius: f64,
    pub generation: u32,
    pub parent: Option<usize>,
}

impl Segment {
    pub fn length(&self) -> f64 {
        norm(sub(self.end, self.start))
    }

    pub fn midpoint(&self) -> [f64; 3] {
        std::array::from_fn(|k| 0.5 * (self.start[k] + self.end[k]))
    }

    /// Distance from `p` to the segment axis.
    pub fn distance(&self, p: [f64; 3]) -> f64 {
        let d = sub(self.end, self.start);
        let len2 = dot(d, d);
        let w = sub(p, self.start);
        let t = if len2 > 0.0 { (dot(w, d) / len2).clamp(0.0, 1.0) } else { 0.0 };
        norm(sub(w, scale(d, t)))
    }
}

/// Segments in breadth-first order; children of segment `i` follow all
/// segments of its generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricTree {
    pub segments: Vec<Segment>,
}

impl GeometricTree {
    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    pub fn generations(&self) -> u32 {
        self.segments.iter().map(|s| s.generation + 1).max().unwrap_or(0)
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.segments.len()).filter(|&j| self.segments[j].parent == Some(i)).collect()
    }

    /// Segments with children (each one bifurcation).
    pub fn junctions(&self) -> usize {
        (0..self.segments.len()).filter(|&i| !self.children(i).is_empty()).count()
    }

    /// Applies `f` to every point.
    pub fn transformed(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> GeometricTree {
        GeometricTree {
            segments: self.segments.iter().map(|s| Segment { start: f(s.start), end: f(s.end), ..s.clone() }).collect(),
        }
    }
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
pub(crate) fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
pub(crate) fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}
pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}
fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
fn unit(a: [f64; 3]) -> [f64; 3] {
    scale(a, 1.0 / norm(a))
}

/// Grows a binary tree from `origin` along `direction`. The first split
/// lies in the plane orthogonal to `normal`; each later split plane is
/// turned 90° from its parent's.
pub fn generate_tree_at(
    spec: &TreeSpec,
    origin: [f64; 3],
    direction: [f64; 3],
    normal: [f64; 3],
) -> Result<GeometricTree> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let perturb = |rng: &mut ChaCha8Rng| {
        if spec.jitter == 0.0 {
            1.0
        } else {
            1.0 + spec.jitter * rng.random_range(-1.0..=1.0)
        }
    };
    let dir0 = unit(direction);
    let n0 = unit(sub(normal, scale(dir0, dot(normal, dir0))));
    let len0 = spec.length_at(0) * perturb(&mut rng);
    let mut segments = vec![Segment {
        start: origin,
        end: add(origin, scale(dir0, len0)),
        radius: spec.radius_at(0),
        generation: 0,
        parent: None,
    }];
    // Per segment: unit direction and the normal of its next split plane.
    let mut frames = vec![(dir0, n0)];
    let mut level: Vec<usize> = vec![0];
    for g in 1..spec.generations {
        let mut next = Vec::with_capacity(level.len() * 2);
        for &p in &level {
            let (d, n) = frames[p];
            let u = cross(n, d);
            for side in [1.0, -1.0] {
                let theta = spec.branch_angle.to_radians() * perturb(&mut rng);
                let c = unit(add(scale(d, theta.cos()), scale(u, side * theta.sin())));
                let len = spec.length_at(g) * perturb(&mut rng);
                let start = segments[p].end;
                segments.push(Segment {
                    start,
                    end: add(start, scale(c, len)),
                    radius: spec.radius_at(g),
                    generation: g,
                    parent: Some(p),
                });
                frames.push((c, unit(cross(c, n))));
                next.push(segments.len() - 1);
            }
        }
        level = next;
    }
    Ok(GeometricTree { segments })
}

/// Tree rooted at the origin growing along +z, first split in the x-z plane.
pub fn generate_tree(spec: &TreeSpec) -> Result<GeometricTree> {
    generate_tree_at(spec, [0.0; 3], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0])
}
