//! Multiscale Hessian vesselness and CT noise simulation.

mod noise;

pub use noise::{add_poisson_noise, NoiseParams, MU_WATER_PER_MM, PATH_LENGTH_MM};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{convolve_axis, gaussian_derivative_kernels};
use crate::par;
use crate::volume::{Volume, VoxelGrid};

/// Frangi filter parameters. `c = None` derives the structureness scale
/// from the data: half the largest Hessian Frobenius norm seen at any scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VesselnessParams {
    pub scales: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub c: Option<f64>,
}

impl Default for VesselnessParams {
    fn default() -> Self {
        VesselnessParams { scales: vec![0.5, 1.0, 2.0, 4.0], alpha: 0.5, beta: 0.5, c: None }
    }
}

impl VesselnessParams {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("vesselness scales must be non-empty and positive"));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(c) = self.c {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::invalid(format!("c must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// Per-voxel Hessian eigenvalues sorted by magnitude.
#[derive(Clone, Debug)]
pub struct Eigenvalues {
    pub l1: VoxelGrid,
    pub l2: VoxelGrid,
    pub l3: VoxelGrid,
}

/// Eigenvalues of the symmetric matrix `[xx, yy, zz, xy, xz, yz]`,
/// ordered so that `|l1| <= |l2| <= |l3|`.
pub fn sym3_eigenvalues(h: [f64; 6]) -> [f64; 3] {
    let [a, b, c, d, e, f] = h;
    let p1 = d * d + e * e + f * f;
    let mut ev = if p1 == 0.0 {
        [a, b, c]
    } else {
        let q = (a + b + c) / 3.0;
        let p2 = (a - q).powi(2) + (b - q).powi(2) + (c - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let (ba, bb, bc) = ((a - q) / p, (b - q) / p, (c - q) / p);
        let (bd, be, bf) = (d / p, e / p, f / p);
        let det = ba * (bb * bc - bf * bf) - bd * (bd * bc - bf * be) + be * (bd * bf - bb * be);
        let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
        [e1, 3.0 * q - e1 - e3, e3]
    };
    ev.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    ev
}

fn check_sigma(grid: &VoxelGrid, sigma: f64) -> Result<()> {
    let max_spacing = grid.geom.spacing.iter().cloned().fold(0.0, f64::max);
    if !(sigma.is_finite() && sigma >= max_spacing / 2.0) {
        return Err(Error::invalid(format!("scale {sigma} mm is below half the largest spacing ({max_spacing} mm)")));
    }
    Ok(())
}

/// Scale-normalised Hessian components `[xx, yy, zz, xy, xz, yz]` (times σ²).
fn hessian_components(grid: &VoxelGrid, sigma: f64) -> [Vec<f32>; 6] {
    let dims = grid.geom.dims;
    let [kx, ky, kz] = [0, 1, 2].map(|a| gaussian_derivative_kernels(sigma, grid.geom.spacing[a]));
    let conv = |data: &[f32], axis: usize, k: &crate::filter::Kernel1d| convolve_axis(data, dims, axis, k);

    let z0 = conv(&grid.data, 2, &kz[0]);
    let z1 = conv(&grid.data, 2, &kz[1]);
    let z2 = conv(&grid.data, 2, &kz[2]);
    let y0z0 = conv(&z0, 1, &ky[0]);
    let y1z0 = conv(&z0, 1, &ky[1]);
    let y2z0 = conv(&z0, 1, &ky[2]);
    drop(z0);
    let y0z1 = conv(&z1, 1, &ky[0]);
    let y1z1 = conv(&z1, 1, &ky[1]);
    drop(z1);
    let y0z2 = conv(&z2, 1, &ky[0]);
    drop(z2);

    let s2 = (sigma * sigma) as f32;
    let scaled = |mut v: Vec<f32>| {
        v.iter_mut().for_each(|x| *x *= s2);
        v
    };
    [
        scaled(conv(&y0z0, 0, &kx[2])),
        scaled(conv(&y2z0, 0, &kx[0])),
        scaled(conv(&y0z2, 0, &kx[0])),
        scaled(conv(&y1z0, 0, &kx[1])),
        scaled(conv(&y0z1, 0, &kx[1])),
        scaled(conv(&y1z1, 0, &kx[0])),
    ]
}

fn voxel_hessian(h: &[Vec<f32>; 6], i: usize) -> [f64; 6] {
    [0, 1, 2, 3, 4, 5].map(|k| f64::from(h[k][i]))
}

/// Eigenvalues of the σ-scale, σ²-normalised Gaussian-derivative Hessian.
pub fn hessian_eigenvalues(grid: &VoxelGrid, sigma: f64) -> Result<Eigenvalues> {
    check_sigma(grid, sigma)?;
    let h = hessian_components(grid, sigma);
    let ev = par::map_indices(grid.len(), |i| sym3_eigenvalues(voxel_hessian(&h, i)));
    let field = |k: usize| Volume { geom: grid.geom, data: ev.iter().map(|e| e[k] as f32).collect() };
    Ok(Eigenvalues { l1: field(0), l2: field(1), l3: field(2) })
}

/// The two c-independent Frangi factors for one voxel: the line/plate and
/// blob terms multiplied together. Zero for dark-on-bright structures.
pub fn frangi_shape_factor(l: [f64; 3], alpha: f64, beta: f64) -> f64 {
    let [l1, l2, l3] = l;
    if l2 > 0.0 || l3 > 0.0 || l3 == 0.0 || l2 == 0.0 {
        return 0.0;
    }
    let ra = l2.abs() / l3.abs();
    let rb = l1.abs() / (l2 * l3).abs().sqrt();
    (1.0 - (-ra * ra / (2.0 * alpha * alpha)).exp()) * (-rb * rb / (2.0 * beta * beta)).exp()
}

/// Full single-scale Frangi response.
pub fn frangi_response(l: [f64; 3], alpha: f64, beta: f64, c: f64) -> f64 {
    if c <= 0.0 {
        return 0.0;
    }
    let s2 = l.iter().map(|v| v * v).sum::<f64>();
    frangi_shape_factor(l, alpha, beta) * (1.0 - (-s2 / (2.0 * c * c)).exp())
}

struct ScaleTerms {
    shape: Vec<f32>,
    norm2: Vec<f32>,
}

/// Per-scale terms plus the largest Frobenius norm over all scales.
fn scale_terms(grid: &VoxelGrid, params: &VesselnessParams) -> Result<(Vec<ScaleTerms>, f64)> {
    params.validate()?;
    let mut out = Vec::with_capacity(params.scales.len());
    let mut max_norm = 0.0f64;
    for &sigma in &params.scales {
        check_sigma(grid, sigma)?;
        let h = hessian_components(grid, sigma);
        let pairs = par::map_indices(grid.len(), |i| {
            let l = sym3_eigenvalues(voxel_hessian(&h, i));
            let n2 = l.iter().map(|v| v * v).sum::<f64>();
            (frangi_shape_factor(l, params.alpha, params.beta) as f32, n2 as f32)
        });
        let (shape, norm2): (Vec<f32>, Vec<f32>) = pairs.into_iter().unzip();
        let m = par::max_f64(norm2.len(), |i| f64::from(norm2[i]));
        max_norm = max_norm.max(m.max(0.0).sqrt());
        out.push(ScaleTerms { shape, norm2 });
    }
    Ok((out, max_norm))
}

fn combine(grid: &VoxelGrid, terms: &[ScaleTerms], c: f64) -> VoxelGrid {
    let data = par::map_indices(grid.len(), |i| {
        if c <= 0.0 {
            return 0.0;
        }
        let k = 1.0 / (2.0 * c * c);
        terms
            .iter()
            .map(|t| {
                let shape = f64::from(t.shape[i]);
                if shape == 0.0 {
                    0.0
                } else {
                    shape * (1.0 - (-f64::from(t.norm2[i]) * k).exp())
                }
            })
            .fold(0.0f64, f64::max) as f32
    });
    Volume { geom: grid.geom, data }
}

/// Vesselness with the structureness scale actually used.
#[derive(Clone, Debug)]
pub struct Vesselness {
    pub response: VoxelGrid,
    pub c: f64,
}

/// Maximum over scales of the bright-vessel Frangi response, in [0, 1].
pub fn frangi_vesselness(grid: &VoxelGrid, params: &VesselnessParams) -> Result<Vesselness> {
    let (terms, max_norm) = scale_terms(grid, params)?;
    let c = params.c.unwrap_or(0.5 * max_norm);
    Ok(Vesselness { response: combine(grid, &terms, c), c })
}

/// The two-channel stage input: the windowed CT and its vesselness.
#[derive(Clone, Debug)]
pub struct EnhancedInput {
    pub ct: VoxelGrid,
    pub vesselness: VoxelGrid,
    pub c: f64,
}

pub fn enhance_stack(grid: &VoxelGrid, params: &VesselnessParams) -> Result<EnhancedInput> {
    if let Some(i) = grid.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid(format!("voxel {i} = {} is outside [0, 1]; window the CT first", grid.data[i])));
    }
    let v = frangi_vesselness(grid, params)?;
    Ok(EnhancedInput { ct: grid.clone(), vesselness: v.response, c: v.c })
}

/// Mean squared difference of the filtered volumes. With an automatic `c`
/// both inputs share one scale, taken over both, so the loss is symmetric.
pub fn vessel_consistency_loss(recon: &VoxelGrid, reference: &VoxelGrid, params: &VesselnessParams) -> Result<f64> {
    recon.geom.ensure_same(&reference.geom)?;
    let (ta, ma) = scale_terms(recon, params)?;
    let (tb, mb) = scale_terms(reference, params)?;
    let c = params.c.unwrap_or(0.5 * ma.max(mb));
    let a = combine(recon, &ta, c);
    let b = combine(reference, &tb, c);
    let n = a.len();
    Ok(par::sum_f64(n, |i| {
        let d = f64::from(a.data[i]) - f64::from(b.data[i]);
        d * d
    }) / n as f64)
}
