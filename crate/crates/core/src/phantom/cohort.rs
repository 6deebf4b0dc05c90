use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{AbundanceIndex, SubjectRecord};

/// Planted linear model for one abundance index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexModel {
    pub intercept: f64,
    pub lung_volume: f64,
    pub sex: f64,
    pub age: f64,
    /// Residual standard deviation.
    #[serde(default)]
    pub noise_sd: f64,
}

impl IndexModel {
    pub fn mean(&self, lung_volume: f64, sex: u8, age: f64) -> f64 {
        self.intercept + self.lung_volume * lung_volume + self.sex * f64::from(sex) + self.age * age
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortModel {
    pub seed: u64,
    pub age_range: (f64, f64),
    /// Lung volume mean and sd in liters, (female, male).
    pub lung_volume_female: (f64, f64),
    pub lung_volume_male: (f64, f64),
    pub slpa: IndexModel,
    pub slpv: IndexModel,
    pub bcpa: IndexModel,
    pub bcpv: IndexModel,
}

impl Default for CohortModel {
    fn default() -> Self {
        CohortModel {
            seed: 7,
            age_range: (30.0, 80.0),
            lung_volume_female: (3.6, 0.5),
            lung_volume_male: (4.8, 0.6),
            slpa: IndexModel { intercept: 6000.0, lung_volume: 1500.0, sex: -918.86, age: -20.0, noise_sd: 400.0 },
            slpv: IndexModel { intercept: 5000.0, lung_volume: 1300.0, sex: -700.0, age: -15.0, noise_sd: 350.0 },
            bcpa: IndexModel { intercept: 900.0, lung_volume: 200.0, sex: -120.0, age: -3.0, noise_sd: 60.0 },
            bcpv: IndexModel { intercept: 800.0, lung_volume: 180.0, sex: -100.0, age: -2.5, noise_sd: 55.0 },
        }
    }
}

impl CohortModel {
    pub fn index(&self, idx: AbundanceIndex) -> &IndexModel {
        match idx {
            AbundanceIndex::Slpa => &self.slpa,
            AbundanceIndex::Slpv => &self.slpv,
            AbundanceIndex::Bcpa => &self.bcpa,
            AbundanceIndex::Bcpv => &self.bcpv,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a0, a1) = self.age_range;
        if !(a0.is_finite() && a1.is_finite() && a0 < a1) {
            return Err(Error::invalid("age_range must be an increasing pair"));
        }
        for (name, (m, s)) in
            [("lung_volume_female", self.lung_volume_female), ("lung_volume_male", self.lung_volume_male)]
        {
            if !(m > 0.0 && s >= 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("{name} needs a positive mean and non-negative sd")));
            }
        }
        for idx in AbundanceIndex::ALL {
            let sd = self.index(idx).noise_sd;
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(Error::invalid(format!("{} noise_sd must be non-negative", idx.name())));
            }
        }
        Ok(())
    }
}

/// Draws `n` subjects from the planted model. Values are not clamped, so
/// the linear model holds exactly when every `noise_sd` is zero.
pub fn generate_cohort(n: usize, model: &CohortModel) -> Result<Vec<SubjectRecord>> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let normal = |(m, s): (f64, f64)| Normal::new(m, s).map_err(|e| Error::invalid(e.to_string()));
    let vol_f = normal(model.lung_volume_female)?;
    let vol_m = normal(model.lung_volume_male)?;
    let mut out = Vec::with_capacity(n);
    for id in 0..n {
        let sex = u8::from(rng.random_bool(0.5));
        let age = rng.random_range(model.age_range.0..model.age_range.1);
        let lung_volume = loop {
            let v = if sex == 1 { vol_m.sample(&mut rng) } else { vol_f.sample(&mut rng) };
            if v > 0.0 {
                break v;
            }
        };
        let mut value = |idx: AbundanceIndex| -> Result<f64> {
            let m = model.index(idx);
            let eps = normal((0.0, m.noise_sd))?.sample(&mut rng);
            Ok(m.mean(lung_volume, sex, age) + eps)
        };
        let slpa = value(AbundanceIndex::Slpa)?;
        let slpv = value(AbundanceIndex::Slpv)?;
        let bcpa = value(AbundanceIndex::Bcpa)?;
        let bcpv = value(AbundanceIndex::Bcpv)?;
        out.push(SubjectRecord { id: format!("s{id:05}"), sex, age, lung_volume, slpa, slpv, bcpa, bcpv });
    }
    Ok(out)
}
