use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::spectral::{Space, VelocityField};

/// Gaussian field with independent coefficients of variance `(j² + k²)^{-s}`.
pub fn random_field<R: Rng + ?Sized>(space: &Space, s: f64, rng: &mut R) -> VelocityField {
    let mut u = space.zero_velocity();
    for (c, m) in u.coeffs_mut().iter_mut().zip(space.velocity_modes()) {
        let z: f64 = rng.sample(StandardNormal);
        let var = ((m.j * m.j + m.k * m.k) as f64).powf(-s);
        *c = z * var.sqrt();
    }
    u
}

/// Seeded sampler: the stream for a given seed is fixed, so any failing sample can be
/// regenerated from the seed printed next to it.
#[derive(Debug)]
pub struct FieldSampler {
    pub seed: u64,
    pub smoothness: f64,
    rng: ChaCha8Rng,
}

impl FieldSampler {
    pub fn new(seed: u64, smoothness: f64) -> Self {
        Self {
            seed,
            smoothness,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn field(&mut self, space: &Space) -> VelocityField {
        random_field(space, self.smoothness, &mut self.rng)
    }

    /// Log-uniform amplitude in `[lo, hi]`.
    pub fn amplitude(&mut self, lo: f64, hi: f64) -> f64 {
        let t: f64 = self.rng.random();
        (lo.ln() + t * (hi.ln() - lo.ln())).exp()
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }
}
