//! Poisson transmission noise on HU volumes.
//!
//! Each voxel is treated as a single ray of fixed length through a uniform
//! medium with that voxel's attenuation. The detected photon count is
//! Poisson distributed and converted back to HU.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::volume::{Volume, VoxelGrid};

pub const MU_WATER_PER_MM: f64 = 0.0195;
pub const PATH_LENGTH_MM: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Expected incident photons per ray; lower means noisier.
    pub n0: f64,
    pub seed: u64,
}

/// Returns a noisy copy of `grid` (HU). The generator for voxel `i` is a
/// ChaCha stream keyed by the seed and selected by `i`, so the output does
/// not depend on thread count or traversal order.
pub fn add_poisson_noise(grid: &VoxelGrid, params: &NoiseParams) -> Result<VoxelGrid> {
    let n0 = params.n0;
    if !(n0.is_finite() && n0 > 0.0) {
        return Err(Error::invalid(format!("incident count must be positive, got {n0}")));
    }
    if let Some(index) = grid.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let base = ChaCha8Rng::seed_from_u64(params.seed);
    let floor = 1.0 / n0;
    let data = par::map_indices(grid.len(), |i| {
        let hu = f64::from(grid.data[i]);
        let mu = MU_WATER_PER_MM * (1.0 + hu / 1000.0);
        let lambda = n0 * (-mu * PATH_LENGTH_MM).exp();
        let counts = match Poisson::new(lambda) {
            Ok(dist) => {
                let mut rng = base.clone();
                rng.set_stream(i as u64);
                dist.sample(&mut rng)
            }
            Err(_) => 0.0,
        };
        let t = (counts / n0).max(floor);
        (1000.0 * (-t.ln() / (PATH_LENGTH_MM * MU_WATER_PER_MM) - 1.0)) as f32
    });
    Ok(Volume { geom: grid.geom, data })
}
