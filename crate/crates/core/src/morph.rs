//! Binary morphology: connectivity, Euler characteristic, distance transforms.

use std::collections::VecDeque;

use crate::par;
use crate::volume::{BinaryMask, Geometry, Volume};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    Face6,
    Full26,
}

/// The 26 neighbour offsets in raster order.
pub const OFFSETS_26: [[isize; 3]; 26] = {
    let mut out = [[0isize; 3]; 26];
    let mut n = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if !(dx == 0 && dy == 0 && dz == 0) {
                    out[n] = [dx, dy, dz];
                    n += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

pub const OFFSETS_6: [[isize; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];

pub fn offsets(conn: Connectivity) -> &'static [[isize; 3]] {
    match conn {
        Connectivity::Face6 => &OFFSETS_6,
        Connectivity::Full26 => &OFFSETS_26,
    }
}

/// Neighbour index of `idx` shifted by `off`, if inside the grid.
#[inline]
pub fn neighbor(geom: &Geometry, idx: usize, off: [isize; 3]) -> Option<usize> {
    let c = geom.coords(idx);
    geom.checked_index([c[0] as isize + off[0], c[1] as isize + off[1], c[2] as isize + off[2]])
}

/// Component labels (0 = background, components numbered from 1 in raster
/// order of their first voxel) and the component count.
pub fn connected_components(mask: &BinaryMask, conn: Connectivity) -> (Vec<u32>, usize) {
    let geom = mask.geom;
    let mut labels = vec![0u32; mask.len()];
    let mut count = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask.data[start] || labels[start] != 0 {
            continue;
        }
        count += 1;
        labels[start] = count;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for &off in offsets(conn) {
                if let Some(j) = neighbor(&geom, i, off) {
                    if mask.data[j] && labels[j] == 0 {
                        labels[j] = count;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    (labels, count as usize)
}

/// Euler characteristic of the union of closed unit cubes at set voxels,
/// which is the 26-connected object's χ = components − tunnels + cavities.
pub fn euler_characteristic(mask: &BinaryMask) -> i64 {
    let [nx, ny, nz] = mask.geom.dims;
    let set = |x: isize, y: isize, z: isize| -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < nx
            && (y as usize) < ny
            && (z as usize) < nz
            && mask.data[x as usize + nx * (y as usize + ny * z as usize)]
    };
    // A lattice cell of dimension d is present iff any voxel whose closed
    // cube contains it is set. Cells are enumerated by their lower corner;
    // `span` marks the axes along which the cell extends.
    let mut chi = 0i64;
    for span in 0u8..8 {
        let dim = span.count_ones();
        let sign = if dim % 2 == 0 { 1 } else { -1 };
        let ext = |a: usize| span >> a & 1 == 1;
        let (ex, ey, ez) = (ext(0), ext(1), ext(2));
        let lim = |n: usize, e: bool| if e { n } else { n + 1 };
        let mut cells = 0i64;
        for z in 0..lim(nz, ez) as isize {
            for y in 0..lim(ny, ey) as isize {
                for x in 0..lim(nx, ex) as isize {
                    let xs: &[isize] = if ex { &[0] } else { &[-1, 0] };
                    let ys: &[isize] = if ey { &[0] } else { &[-1, 0] };
                    let zs: &[isize] = if ez { &[0] } else { &[-1, 0] };
                    let present =
                        zs.iter().any(|&dz| ys.iter().any(|&dy| xs.iter().any(|&dx| set(x + dx, y + dy, z + dz))));
                    cells += i64::from(present);
                }
            }
        }
        chi += sign * cells;
    }
    chi
}

/// Set voxels with at least one face neighbour unset or outside the grid.
pub fn face_boundary(mask: &BinaryMask) -> BinaryMask {
    let geom = mask.geom;
    let data = par::map_indices(mask.len(), |i| {
        mask.data[i] && OFFSETS_6.iter().any(|&o| neighbor(&geom, i, o).is_none_or(|j| !mask.data[j]))
    });
    Volume { geom, data }
}

/// Dilation by `steps` applications of the given structuring neighbourhood.
pub fn dilate(mask: &BinaryMask, conn: Connectivity, steps: usize) -> BinaryMask {
    let geom = mask.geom;
    let mut cur = mask.clone();
    for _ in 0..steps {
        let prev = cur;
        let data = par::map_indices(prev.len(), |i| {
            prev.data[i] || offsets(conn).iter().any(|&o| neighbor(&geom, i, o).is_some_and(|j| prev.data[j]))
        });
        cur = Volume { geom, data };
    }
    cur
}

/// Exact Euclidean distance transform in mm to the nearest set voxel,
/// squared, along with the index of that voxel. Grids without set voxels
/// give `f64::INFINITY` and `usize::MAX`.
pub fn edt_squared_with_features(mask: &BinaryMask) -> (Vec<f64>, Vec<usize>) {
    let geom = mask.geom;
    let mut dist: Vec<f64> = mask.data.iter().map(|&b| if b { 0.0 } else { f64::INFINITY }).collect();
    let mut feat: Vec<usize> = (0..mask.len()).map(|i| if mask.data[i] { i } else { usize::MAX }).collect();
    for axis in 0..3 {
        edt_axis(&geom, axis, &mut dist, &mut feat);
    }
    (dist, feat)
}

pub fn edt_squared(mask: &BinaryMask) -> Vec<f64> {
    edt_squared_with_features(mask).0
}

fn edt_axis(geom: &Geometry, axis: usize, dist: &mut [f64], feat: &mut [usize]) {
    let dims = geom.dims;
    let n = dims[axis];
    let s = geom.spacing[axis];
    let stride = [1, dims[0], dims[0] * dims[1]][axis];
    let (o1, o2) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let lines = dims[o1] * dims[o2];
    let starts: Vec<usize> = (0..lines)
        .map(|l| {
            let (a, b) = (l % dims[o1], l / dims[o1]);
            let mut c = [0usize; 3];
            c[o1] = a;
            c[o2] = b;
            geom.index(c[0], c[1], c[2])
        })
        .collect();
    let results = par::map_indices(lines, |l| {
        let base = starts[l];
        let f: Vec<f64> = (0..n).map(|k| dist[base + k * stride]).collect();
        let src: Vec<usize> = (0..n).map(|k| feat[base + k * stride]).collect();
        lower_envelope(&f, &src, s)
    });
    for (l, (d, fs)) in results.into_iter().enumerate() {
        let base = starts[l];
        for k in 0..n {
            dist[base + k * stride] = d[k];
            feat[base + k * stride] = fs[k];
        }
    }
}

/// One-dimensional squared distance transform of sampled function `f` on
/// sites spaced `s` apart (lower envelope of parabolas).
fn lower_envelope(f: &[f64], src: &[usize], s: f64) -> (Vec<f64>, Vec<usize>) {
    let n = f.len();
    let mut v: Vec<usize> = Vec::with_capacity(n);
    let mut z: Vec<f64> = Vec::with_capacity(n + 1);
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let xq = q as f64 * s;
        loop {
            match v.last() {
                None => {
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let xp = p as f64 * s;
                    let cut = ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp));
                    if cut <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        z.push(cut);
                        break;
                    }
                }
            }
        }
        v.push(q);
    }
    if v.is_empty() {
        return (vec![f64::INFINITY; n], vec![usize::MAX; n]);
    }
    let mut out = vec![0.0; n];
    let mut out_src = vec![0usize; n];
    let mut k = 0;
    for p in 0..n {
        let xp = p as f64 * s;
        while k + 1 < v.len() && z[k + 1] < xp {
            k += 1;
        }
        let q = v[k];
        let d = xp - q as f64 * s;
        out[p] = d * d + f[q];
        out_src[p] = src[q];
    }
    (out, out_src)
}
