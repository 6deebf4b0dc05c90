//! Separable 1D convolution along grid axes with clamp-to-edge boundaries.

use crate::par;

/// A 1D kernel centred at index `radius`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel1d {
    pub taps: Vec<f64>,
    /// Derivative kernels are applied to differences `f(i-k) - f(i)`, which
    /// makes their response to a constant exactly zero.
    pub annihilates_constants: bool,
}

impl Kernel1d {
    pub fn radius(&self) -> usize {
        self.taps.len() / 2
    }
}

/// Sampled Gaussian and its first two derivatives along one axis, in mm.
///
/// Each kernel is normalised on its moments so that, on the sampled lattice,
/// the smoother reproduces constants, the first derivative reproduces the
/// slope of a line, and the second derivative the curvature of a parabola.
pub fn gaussian_derivative_kernels(sigma_mm: f64, spacing_mm: f64) -> [Kernel1d; 3] {
    let sv = sigma_mm / spacing_mm;
    let radius = (4.0 * sv).ceil().max(1.0) as isize;
    let xs: Vec<f64> = (-radius..=radius).map(|k| k as f64 * spacing_mm).collect();
    let s2 = sigma_mm * sigma_mm;
    let g: Vec<f64> = xs.iter().map(|x| (-x * x / (2.0 * s2)).exp()).collect();
    let gsum: f64 = g.iter().sum();
    let g0: Vec<f64> = g.iter().map(|v| v / gsum).collect();

    // Convolution output is sum_k f(i - k) d(k), so for f = x the response is
    // -sum_k x_k d(k); choose the sign so the result is +1.
    let d1raw: Vec<f64> = xs.iter().zip(&g).map(|(x, v)| -x * v).collect();
    let m1: f64 = xs.iter().zip(&d1raw).map(|(x, d)| x * d).sum();
    let g1: Vec<f64> = d1raw.iter().map(|d| -d / m1).collect();

    let d2raw: Vec<f64> = xs.iter().zip(&g).map(|(x, v)| (x * x - s2) * v).collect();
    let mean = d2raw.iter().sum::<f64>() / gsum;
    let d2: Vec<f64> = d2raw.iter().zip(&g).map(|(d, v)| d - mean * v).collect();
    let m2: f64 = xs.iter().zip(&d2).map(|(x, d)| 0.5 * x * x * d).sum();
    let g2: Vec<f64> = d2.iter().map(|d| d / m2).collect();

    [
        Kernel1d { taps: g0, annihilates_constants: false },
        Kernel1d { taps: g1, annihilates_constants: true },
        Kernel1d { taps: g2, annihilates_constants: true },
    ]
}

/// Normalised Gaussian of `radius` taps either side, `sigma` in voxels.
pub fn gaussian_kernel_voxels(sigma: f64, radius: usize) -> Kernel1d {
    let r = radius as isize;
    let g: Vec<f64> = (-r..=r).map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = g.iter().sum();
    Kernel1d { taps: g.into_iter().map(|v| v / sum).collect(), annihilates_constants: false }
}

/// Convolves `data` (x-fastest, `dims`) along `axis`.
pub fn convolve_axis(data: &[f32], dims: [usize; 3], axis: usize, kernel: &Kernel1d) -> Vec<f32> {
    let [nx, ny, _] = dims;
    let n_axis = dims[axis] as isize;
    let stride = [1, nx, nx * ny][axis];
    let r = kernel.radius() as isize;
    let taps = &kernel.taps;
    let mut out = vec![0.0f32; data.len()];
    par::for_each_chunk_mut(&mut out, nx * ny, |z, slab| {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                let pos = [x, y, z][axis] as isize;
                let base = i as isize - pos * stride as isize;
                let centre = f64::from(data[i]);
                let mut acc = 0.0f64;
                for (t, &w) in taps.iter().enumerate() {
                    let k = t as isize - r;
                    let j = (pos - k).clamp(0, n_axis - 1);
                    let v = f64::from(data[(base + j * stride as isize) as usize]);
                    acc += if kernel.annihilates_constants { w * (v - centre) } else { w * v };
                }
                slab[x + nx * y] = acc as f32;
            }
        }
    });
    out
}
