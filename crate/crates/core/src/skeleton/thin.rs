//! Directional parallel thinning to a 26-connected curve skeleton.
//!
//! Six subiterations per pass, one per face direction. In each, border
//! points of that direction that are simple and not curve endpoints are
//! collected, then removed subfield by subfield with the test repeated
//! against the current image. Thinning stops after six consecutive
//! subiterations remove nothing. The mask is thinned in a canonical
//! axis-aligned orientation so the result follows quarter turns.
//!
//! Neighbourhoods are 27-bit words: bit `(dx+1) + 3(dy+1) + 9(dz+1)` holds
//! the voxel at offset `(dx, dy, dz)`; bit 13 (the centre) is ignored.

use std::sync::OnceLock;

use crate::par;
use crate::volume::{BinaryMask, Geometry, Volume};

pub const CENTRE: u32 = 13;

#[inline]
pub fn bit(dx: isize, dy: isize, dz: isize) -> u32 {
    ((dx + 1) + 3 * (dy + 1) + 9 * (dz + 1)) as u32
}

fn offset_of(b: u32) -> [isize; 3] {
    let b = b as isize;
    [b % 3 - 1, (b / 3) % 3 - 1, b / 9 - 1]
}

struct Tables {
    /// 26-adjacency between neighbourhood positions (centre excluded).
    adj: [u32; 27],
    /// Cells of the centre cube's boundary, each as the set of neighbour
    /// positions whose cubes also contain that cell.
    vertices: [u32; 8],
    edges: [u32; 12],
    faces: [u32; 6],
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let mut adj = [0u32; 27];
        for a in 0..27u32 {
            for b in 0..27u32 {
                if a == b || a == CENTRE || b == CENTRE {
                    continue;
                }
                let (pa, pb) = (offset_of(a), offset_of(b));
                if (0..3).all(|k| (pa[k] - pb[k]).abs() <= 1) {
                    adj[a as usize] |= 1 << b;
                }
            }
        }
        // A cell is identified by a sign vector s in {-1,0,1}^3: zero axes
        // span the cell, non-zero axes fix it on that side of the cube. The
        // voxels sharing it take 0 or s_k on each fixed axis, 0 on spanning axes.
        let sharing = |s: [isize; 3]| -> u32 {
            let choices = |v: isize| if v == 0 { vec![0] } else { vec![0, v] };
            let mut m = 0u32;
            for dz in choices(s[2]) {
                for dy in choices(s[1]) {
                    for dx in choices(s[0]) {
                        if (dx, dy, dz) != (0, 0, 0) {
                            m |= 1 << bit(dx, dy, dz);
                        }
                    }
                }
            }
            m
        };
        let (mut vertices, mut edges, mut faces) = ([0u32; 8], [0u32; 12], [0u32; 6]);
        let (mut nv, mut ne, mut nf) = (0, 0, 0);
        for sz in -1..=1isize {
            for sy in -1..=1isize {
                for sx in -1..=1isize {
                    let s = [sx, sy, sz];
                    match s.iter().filter(|&&v| v != 0).count() {
                        3 => {
                            vertices[nv] = sharing(s);
                            nv += 1;
                        }
                        2 => {
                            edges[ne] = sharing(s);
                            ne += 1;
                        }
                        1 => {
                            faces[nf] = sharing(s);
                            nf += 1;
                        }
                        _ => {}
                    }
                }
            }
        }
        Tables { adj, vertices, edges, faces }
    })
}

/// Number of 26-connected components among the set neighbours.
pub fn object_components(nb: u32) -> u32 {
    let t = tables();
    let mut remaining = nb & !(1 << CENTRE);
    let mut count = 0;
    while remaining != 0 {
        count += 1;
        let mut comp = remaining & remaining.wrapping_neg();
        loop {
            let mut grown = comp;
            let mut bits = comp;
            while bits != 0 {
                let b = bits.trailing_zeros();
                bits &= bits - 1;
                grown |= t.adj[b as usize] & remaining;
            }
            if grown == comp {
                break;
            }
            comp = grown;
        }
        remaining &= !comp;
    }
    count
}

/// Euler characteristic of the part of the centre cube's boundary shared
/// with set neighbours. Removing the centre leaves the object's Euler
/// characteristic unchanged exactly when this equals 1.
pub fn shared_boundary_euler(nb: u32) -> i32 {
    let t = tables();
    let present = |cells: &[u32]| cells.iter().filter(|&&m| nb & m != 0).count() as i32;
    present(&t.vertices) - present(&t.edges) + present(&t.faces)
}

/// Whether the centre can be deleted without changing topology
/// (26-connectivity for the object, 6 for the background).
pub fn is_simple_point(nb: u32) -> bool {
    object_components(nb) == 1 && shared_boundary_euler(nb) == 1
}

/// Face directions in the order the subiterations visit them.
const DIRECTIONS: [[isize; 3]; 6] = [[0, -1, 0], [0, 1, 0], [1, 0, 0], [-1, 0, 0], [0, 0, 1], [0, 0, -1]];

struct Padded {
    dims: [usize; 3],
    img: Vec<u8>,
    off: [isize; 27],
}

impl Padded {
    fn new(size: [usize; 3], points: &[[usize; 3]]) -> Padded {
        let dims = size.map(|n| n + 2);
        let mut img = vec![0u8; dims[0] * dims[1] * dims[2]];
        for &[x, y, z] in points {
            img[(x + 1) + dims[0] * ((y + 1) + dims[1] * (z + 1))] = 1;
        }
        let off = std::array::from_fn(|b| {
            let [dx, dy, dz] = offset_of(b as u32);
            dx + dims[0] as isize * (dy + dims[1] as isize * dz)
        });
        Padded { dims, img, off }
    }

    #[inline]
    fn neighborhood(&self, p: usize) -> u32 {
        let mut nb = 0u32;
        for b in 0..27 {
            if b != CENTRE as usize && self.img[(p as isize + self.off[b]) as usize] != 0 {
                nb |= 1 << b;
            }
        }
        nb
    }

    fn unpad(&self, p: usize) -> [usize; 3] {
        let [px, py, _] = self.dims;
        [p % px - 1, (p / px) % py - 1, p / (px * py) - 1]
    }
}

fn deletable(nb: u32) -> bool {
    nb.count_ones() != 1 && is_simple_point(nb)
}

/// Sequential directional thinning of the points of a `size` grid.
fn thin_points(size: [usize; 3], points: &[[usize; 3]]) -> Vec<[usize; 3]> {
    let mut pad = Padded::new(size, points);
    // Parity subfield of each voxel. Two voxels of one subfield are never
    // 26-adjacent, so a subfield can be decided in parallel and then deleted
    // at once without changing the outcome of any other decision.
    let subfield = |p: usize, pad: &Padded| {
        let [x, y, z] = pad.unpad(p);
        ((x & 1) | (y & 1) << 1 | (z & 1) << 2) as u8
    };
    let mut active: Vec<(usize, u8)> =
        (0..pad.img.len()).filter(|&p| pad.img[p] != 0).map(|p| (p, subfield(p, &pad))).collect();
    let mut unchanged = 0;
    let mut dir = 0;
    while unchanged < 6 {
        let [dx, dy, dz] = DIRECTIONS[dir];
        let step = pad.off[bit(dx, dy, dz) as usize];
        // Candidates come from the image at the start of the pass; within
        // the pass only simplicity is rechecked, subfield by subfield.
        let img = &pad.img;
        let candidate =
            par::map_slice(&active, |&(p, _)| img[(p as isize + step) as usize] == 0 && deletable(pad.neighborhood(p)));
        let mut changed = false;
        for field in 0..8u8 {
            let flags = par::map_indices(active.len(), |k| {
                let (p, f) = active[k];
                f == field && candidate[k] && deletable(pad.neighborhood(p))
            });
            for (&(p, _), flag) in active.iter().zip(flags) {
                if flag {
                    pad.img[p] = 0;
                    changed = true;
                }
            }
        }
        if changed {
            active.retain(|&(p, _)| pad.img[p] != 0);
            unchanged = 0;
        } else {
            unchanged += 1;
        }
        dir = (dir + 1) % 6;
    }
    active.iter().map(|&(p, _)| pad.unpad(p)).collect()
}

/// One of the 24 axis-aligned rotations: output axis `i` reads input axis
/// `perm[i]`, reversed when `flip[i]`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Rotation {
    perm: [usize; 3],
    flip: [bool; 3],
}

impl Rotation {
    fn all() -> Vec<Rotation> {
        const PERMS: [([usize; 3], bool); 6] = [
            ([0, 1, 2], false),
            ([1, 2, 0], false),
            ([2, 0, 1], false),
            ([0, 2, 1], true),
            ([2, 1, 0], true),
            ([1, 0, 2], true),
        ];
        let mut out = Vec::with_capacity(24);
        for (perm, odd) in PERMS {
            for bits in 0..8u8 {
                let flip = [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0];
                if (flip.iter().filter(|&&f| f).count() % 2 == 1) == odd {
                    out.push(Rotation { perm, flip });
                }
            }
        }
        out
    }

    fn dims(&self, size: [usize; 3]) -> [usize; 3] {
        self.perm.map(|a| size[a])
    }

    fn apply(&self, size: [usize; 3], c: [usize; 3]) -> [usize; 3] {
        std::array::from_fn(|i| {
            let a = self.perm[i];
            if self.flip[i] {
                size[a] - 1 - c[a]
            } else {
                c[a]
            }
        })
    }

    fn invert(&self, size: [usize; 3], r: [usize; 3]) -> [usize; 3] {
        let mut c = [0; 3];
        for i in 0..3 {
            let a = self.perm[i];
            c[a] = if self.flip[i] { size[a] - 1 - r[i] } else { r[i] };
        }
        c
    }
}

/// First and second coordinate moments, exact.
fn signature(points: &[[usize; 3]]) -> [u128; 9] {
    let mut s = [0u128; 9];
    for p in points {
        let [x, y, z] = p.map(|v| v as u128);
        for (k, v) in [x, y, z, x * x, y * y, z * z, x * y, x * z, y * z].into_iter().enumerate() {
            s[k] += v;
        }
    }
    s
}

/// Thins `mask` and returns the sorted indices of the remaining voxels.
///
/// The mask is cropped to its bounding box and thinned in the axis-aligned
/// orientation with the smallest moment signature, so the result follows
/// 90° rotations of the input. Orientations that tie are all thinned and
/// the smallest skeleton is kept.
pub(crate) fn thin_indices(mask: &BinaryMask) -> Vec<usize> {
    let geom = mask.geom;
    let on: Vec<[usize; 3]> = (0..mask.len()).filter(|&i| mask.data[i]).map(|i| geom.coords(i)).collect();
    if on.is_empty() {
        return Vec::new();
    }
    let lo: [usize; 3] = std::array::from_fn(|a| on.iter().map(|c| c[a]).min().unwrap());
    let size: [usize; 3] = std::array::from_fn(|a| on.iter().map(|c| c[a]).max().unwrap() - lo[a] + 1);
    let local: Vec<[usize; 3]> = on.iter().map(|c| std::array::from_fn(|a| c[a] - lo[a])).collect();

    let rotations = Rotation::all();
    let sigs: Vec<[u128; 9]> = par::map_slice(&rotations, |r| {
        let pts: Vec<[usize; 3]> = local.iter().map(|&c| r.apply(size, c)).collect();
        signature(&pts)
    });
    let best = sigs.iter().min().unwrap();
    let mut seen: Vec<Vec<[usize; 3]>> = Vec::new();
    let mut kept: Option<Vec<usize>> = None;
    for (r, _) in rotations.iter().zip(&sigs).filter(|(_, s)| *s == best) {
        let mut pts: Vec<[usize; 3]> = local.iter().map(|&c| r.apply(size, c)).collect();
        pts.sort_unstable();
        if seen.contains(&pts) {
            continue;
        }
        let thinned = thin_points(r.dims(size), &pts);
        seen.push(pts);
        let mut idx: Vec<usize> = thinned
            .into_iter()
            .map(|p| {
                let c = r.invert(size, p);
                geom.index(c[0] + lo[0], c[1] + lo[1], c[2] + lo[2])
            })
            .collect();
        idx.sort_unstable();
        if kept.as_ref().is_none_or(|k| (idx.len(), &idx) < (k.len(), k)) {
            kept = Some(idx);
        }
    }
    kept.unwrap_or_default()
}

/// Mask of the given indices.
pub(crate) fn indices_to_mask(geom: Geometry, idx: &[usize]) -> BinaryMask {
    let mut m = Volume::filled(geom, false);
    for &i in idx {
        m.data[i] = true;
    }
    m
}
