use serde::{Deserialize, Serialize};

use super::{label, Geometry, LabelMask, Volume, VoxelGrid, STANDARD_DIMS, STANDARD_SPACING};
use crate::error::{Error, Result};
use crate::par;

/// Fractions closer than this to a lattice site are snapped onto it, so
/// sampling at the source lattice reproduces the source exactly.
const SNAP: f64 = 1e-9;

/// How the spatial normalization was realized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialMapping {
    Interpolated,
}

#[derive(Clone, Debug)]
pub struct Resampled {
    pub grid: VoxelGrid,
    /// Axes where the source has a single voxel and sampling degenerated to
    /// nearest-neighbour.
    pub nearest_axes: [bool; 3],
}

#[derive(Clone, Debug)]
pub struct Standardized {
    pub grid: VoxelGrid,
    /// Axes where the input extent exceeded the standard box and was cropped.
    pub cropped_axes: [bool; 3],
    pub mapping: SpatialMapping,
}

#[derive(Clone, Copy)]
enum Outside {
    Clamp,
    Fill(f32),
}

/// Per-axis sampling plan: lower neighbour, upper neighbour, upper weight.
/// `None` marks a site outside the source cells when filling.
type AxisPlan = Vec<Option<(usize, usize, f64)>>;

fn axis_plan(src: &Geometry, dst: &Geometry, axis: usize, outside: Outside) -> AxisPlan {
    let n = src.dims[axis];
    (0..dst.dims[axis])
        .map(|k| {
            let x = dst.origin[axis] + k as f64 * dst.spacing[axis];
            let t = (x - src.origin[axis]) / src.spacing[axis];
            if let Outside::Fill(_) = outside {
                if t < -0.5 - SNAP || t > n as f64 - 0.5 + SNAP {
                    return None;
                }
            }
            let t = t.clamp(0.0, (n - 1) as f64);
            let mut i0 = t.floor() as usize;
            let mut w = t - i0 as f64;
            if w < SNAP {
                w = 0.0;
            } else if w > 1.0 - SNAP {
                i0 += 1;
                w = 0.0;
            }
            let i0 = i0.min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            Some((i0, i1, w))
        })
        .collect()
}

fn sample(grid: &VoxelGrid, target: &Geometry, outside: Outside) -> VoxelGrid {
    let src = grid.geom;
    let plans: [AxisPlan; 3] = std::array::from_fn(|a| axis_plan(&src, target, a, outside));
    let fill = match outside {
        Outside::Fill(v) => v,
        Outside::Clamp => 0.0,
    };
    let [tx, ty, _] = target.dims;
    let mut out = vec![0.0f32; target.len()];
    par::for_each_chunk_mut(&mut out, tx * ty, |z, slab| {
        let Some((z0, z1, wz)) = plans[2][z] else {
            slab.fill(fill);
            return;
        };
        for y in 0..ty {
            let row = &mut slab[y * tx..(y + 1) * tx];
            let Some((y0, y1, wy)) = plans[1][y] else {
                row.fill(fill);
                continue;
            };
            for (x, dst) in row.iter_mut().enumerate() {
                let Some((x0, x1, wx)) = plans[0][x] else {
                    *dst = fill;
                    continue;
                };
                let v = |xi, yi, zi| f64::from(*grid.at(xi, yi, zi));
                if wx == 0.0 && wy == 0.0 && wz == 0.0 {
                    *dst = *grid.at(x0, y0, z0);
                    continue;
                }
                let c00 = v(x0, y0, z0) * (1.0 - wx) + v(x1, y0, z0) * wx;
                let c10 = v(x0, y1, z0) * (1.0 - wx) + v(x1, y1, z0) * wx;
                let c01 = v(x0, y0, z1) * (1.0 - wx) + v(x1, y0, z1) * wx;
                let c11 = v(x0, y1, z1) * (1.0 - wx) + v(x1, y1, z1) * wx;
                let c0 = c00 * (1.0 - wy) + c10 * wy;
                let c1 = c01 * (1.0 - wy) + c11 * wy;
                *dst = (c0 * (1.0 - wz) + c1 * wz) as f32;
            }
        }
    });
    Volume { geom: *target, data: out }
}

/// Trilinear resampling onto `target`, in physical coordinates. Sites beyond
/// the source lattice take the nearest boundary value.
pub fn resample_trilinear(grid: &VoxelGrid, target: &Geometry) -> Resampled {
    let nearest_axes = std::array::from_fn(|a| grid.geom.dims[a] == 1 && target.dims[a] > 0);
    Resampled { grid: sample(grid, target, Outside::Clamp), nearest_axes }
}

/// Places `grid` in the 512^3 standardized space, centered, filling voxels
/// outside the input with `air` (-1000 for HU data, 0 for windowed data).
pub fn normalize_to_standard_space(grid: &VoxelGrid, air: f32) -> Result<Standardized> {
    let src = grid.geom;
    Geometry::new(src.dims, src.spacing, src.origin)
        .map_err(|e| Error::invalid(format!("cannot place volume in physical space: {e}")))?;
    let center = src.center();
    let origin = std::array::from_fn(|a| center[a] - (STANDARD_DIMS[a] as f64 - 1.0) * 0.5 * STANDARD_SPACING[a]);
    let target = Geometry::new(STANDARD_DIMS, STANDARD_SPACING, origin)?;
    let standard_extent = target.extent();
    let cropped_axes = std::array::from_fn(|a| src.extent()[a] > standard_extent[a] + 1e-9);
    Ok(Standardized {
        grid: sample(grid, &target, Outside::Fill(air)),
        cropped_axes,
        mapping: SpatialMapping::Interpolated,
    })
}

/// Nearest-neighbour label resampling; target sites outside the source
/// cells become background.
pub fn resample_labels_nearest(mask: &LabelMask, target: &Geometry) -> LabelMask {
    let src = mask.geom;
    let plan: [Vec<Option<usize>>; 3] = std::array::from_fn(|a| {
        let n = src.dims[a];
        (0..target.dims[a])
            .map(|k| {
                let x = target.origin[a] + k as f64 * target.spacing[a];
                let t = (x - src.origin[a]) / src.spacing[a];
                if t < -0.5 - SNAP || t >= n as f64 - 0.5 {
                    return None;
                }
                Some(((t + 0.5).floor().max(0.0) as usize).min(n - 1))
            })
            .collect()
    });
    let [tx, ty, _] = target.dims;
    let mut out = vec![label::BACKGROUND; target.len()];
    par::for_each_chunk_mut(&mut out, tx * ty, |z, slab| {
        let Some(zs) = plan[2][z] else { return };
        for y in 0..ty {
            let Some(ys) = plan[1][y] else { continue };
            for x in 0..tx {
                if let Some(xs) = plan[0][x] {
                    slab[y * tx + x] = *mask.at(xs, ys, zs);
                }
            }
        }
    });
    Volume { geom: *target, data: out }
}
