//! Deterministic body force and additive trace-class Wiener noise `Σ g_k dw_k`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Component, Space, VelocityField};

/// One `(j, k, d, amplitude)` entry of a mode list.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeAmplitude {
    pub j: usize,
    pub k: usize,
    pub d: usize,
    pub amplitude: f64,
}

impl ModeAmplitude {
    pub fn new(j: usize, k: usize, d: usize, amplitude: f64) -> Self {
        Self { j, k, d, amplitude }
    }

    pub(crate) fn component(&self) -> Result<Component> {
        Component::from_number(self.d)
            .ok_or_else(|| Error::config(format!("component must be 1 or 2, got {}", self.d)))
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.component()?;
        if self.j == 0 || self.k == 0 {
            return Err(Error::config(format!(
                "mode indices must be positive, got ({}, {})",
                self.j, self.k
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::config("mode amplitude must be finite"));
        }
        Ok(())
    }
}

/// Sum of velocity modes, truncated to the space (the orthogonal projection).
pub(crate) fn field_from_modes(space: &Space, entries: &[ModeAmplitude]) -> Result<VelocityField> {
    let mut u = space.zero_velocity();
    for e in entries {
        e.validate()?;
        if let Some(i) = space.velocity_index(e.component()?, e.j, e.k) {
            u.coeffs_mut()[i] += e.amplitude;
        }
    }
    Ok(u)
}

/// Time-invariant body force.
#[derive(Clone, Debug, PartialEq)]
pub struct DeterministicForce {
    field: VelocityField,
}

impl DeterministicForce {
    pub fn zero(space: &Space) -> Self {
        Self {
            field: space.zero_velocity(),
        }
    }

    pub fn new(field: VelocityField) -> Self {
        Self { field }
    }

    pub fn from_modes(space: &Space, entries: &[ModeAmplitude]) -> Result<Self> {
        field_from_modes(space, entries).map(Self::new)
    }

    pub fn field(&self) -> &VelocityField {
        &self.field
    }

    /// `|f|²`.
    pub fn norm_sq(&self) -> f64 {
        self.field.coeffs().norm_squared()
    }

    pub fn is_zero(&self) -> bool {
        self.field.coeffs().iter().all(|&c| c == 0.0)
    }
}

/// Additive noise `Σ_k g_k dw_k` with time-invariant `g_k` in the Galerkin space.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    n_modes: usize,
    modes: Vec<VelocityField>,
    trace: f64,
}

impl NoiseModel {
    pub fn new(space: &Space, modes: Vec<VelocityField>) -> Result<Self> {
        if modes.len() > space.dim() {
            return Err(Error::config(format!(
                "at most {} noise modes fit the space, got {}",
                space.dim(),
                modes.len()
            )));
        }
        for g in &modes {
            if g.n_modes() != space.n_modes() {
                return Err(Error::DimensionMismatch {
                    expected: space.dim(),
                    got: g.coeffs().len(),
                });
            }
        }
        let trace = modes.iter().map(|g| g.coeffs().norm_squared()).sum();
        Ok(Self {
            n_modes: space.n_modes(),
            modes,
            trace,
        })
    }

    pub fn none(space: &Space) -> Self {
        Self {
            n_modes: space.n_modes(),
            modes: Vec::new(),
            trace: 0.0,
        }
    }

    /// One noise mode `amplitude · e_(d,j,k)` per entry; entries beyond the cutoff are dropped.
    pub fn from_modes(space: &Space, entries: &[ModeAmplitude]) -> Result<Self> {
        let mut modes = Vec::with_capacity(entries.len());
        for e in entries {
            e.validate()?;
            if let Some(i) = space.velocity_index(e.component()?, e.j, e.k) {
                let mut g = space.zero_velocity();
                g.coeffs_mut()[i] = e.amplitude;
                modes.push(g);
            }
        }
        Self::new(space, modes)
    }

    /// Both components of every mode with `j, k ≤ max_mode`, `|g|² ∝ (j² + k²)^{-2}`,
    /// scaled so the covariance trace equals `trace`.
    pub fn low_modes(space: &Space, max_mode: usize, trace: f64) -> Result<Self> {
        Self::from_modes(space, &low_mode_entries(space.n_modes(), max_mode, trace)?)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[VelocityField] {
        &self.modes
    }

    /// `Tr(g²) = Σ_k |g_k|²`.
    pub fn trace(&self) -> f64 {
        self.trace
    }
}

/// Entries of the low-mode noise preset.
pub fn low_mode_entries(n_modes: usize, max_mode: usize, trace: f64) -> Result<Vec<ModeAmplitude>> {
    if !(trace >= 0.0 && trace.is_finite()) {
        return Err(Error::config("noise trace must be finite and non-negative"));
    }
    let m = max_mode.min(n_modes);
    let mut entries = Vec::with_capacity(2 * m * m);
    for d in 1..=2 {
        for j in 1..=m {
            for k in 1..=m {
                let w = ((j * j + k * k) as f64).powi(-2);
                entries.push(ModeAmplitude::new(j, k, d, w));
            }
        }
    }
    let total: f64 = entries.iter().map(|e| e.amplitude).sum();
    for e in &mut entries {
        e.amplitude = if total > 0.0 {
            (e.amplitude * trace / total).sqrt()
        } else {
            0.0
        };
    }
    Ok(entries)
}

/// Noise as written in a configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    None,
    LowModes { max_mode: usize, trace: f64 },
    Modes { modes: Vec<ModeAmplitude> },
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::LowModes {
            max_mode: 2,
            trace: 0.01,
        }
    }
}

impl NoiseSpec {
    pub fn build(&self, space: &Space) -> Result<NoiseModel> {
        match self {
            NoiseSpec::None => Ok(NoiseModel::none(space)),
            NoiseSpec::LowModes { max_mode, trace } => NoiseModel::low_modes(space, *max_mode, *trace),
            NoiseSpec::Modes { modes } => NoiseModel::from_modes(space, modes),
        }
    }
}

/// Body force as written in a configuration file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForceSpec {
    #[default]
    None,
    Modes { modes: Vec<ModeAmplitude> },
}

impl ForceSpec {
    pub fn build(&self, space: &Space) -> Result<DeterministicForce> {
        match self {
            ForceSpec::None => Ok(DeterministicForce::zero(space)),
            ForceSpec::Modes { modes } => DeterministicForce::from_modes(space, modes),
        }
    }
}

pub fn trace_covariance(g: &NoiseModel) -> f64 {
    g.trace()
}

/// Provenance of a Wiener increment: master seed, path index and step index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedPath {
    pub seed: u64,
    pub path: u64,
    pub step: u64,
}

impl SeedPath {
    pub fn new(seed: u64, path: u64, step: u64) -> Self {
        Self { seed, path, step }
    }

    /// Generator positioned at the start of this step's block of the path's stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.path);
        rng.set_word_pos(u128::from(self.step) << 32);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WienerIncrement {
    pub dw: Vec<f64>,
    pub dt: f64,
    pub seed_path: SeedPath,
}

impl WienerIncrement {
    pub fn zero(k: usize, dt: f64, seed_path: SeedPath) -> Self {
        Self {
            dw: vec![0.0; k],
            dt,
            seed_path,
        }
    }
}

/// `ΔW_k ~ N(0, dt)` i.i.d., a pure function of `seed_path` and `K`.
pub fn sample_increment(g: &NoiseModel, dt: f64, seed_path: SeedPath) -> WienerIncrement {
    assert!(dt > 0.0, "time step must be positive");
    let mut rng = seed_path.rng();
    let sd = dt.sqrt();
    let dw = (0..g.len())
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    WienerIncrement { dw, dt, seed_path }
}

/// `Σ_k g_k ΔW_k` as velocity coefficients.
pub fn noise_contribution(g: &NoiseModel, inc: &WienerIncrement) -> Result<VelocityField> {
    if inc.dw.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            got: inc.dw.len(),
        });
    }
    let mut acc = DVector::zeros(2 * g.n_modes * g.n_modes);
    for (gk, &w) in g.modes.iter().zip(&inc.dw) {
        acc.axpy(w, gk.coeffs(), 1.0);
    }
    VelocityField::from_coeffs(g.n_modes, acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> Space {
        Space::new(3).unwrap()
    }

    #[test]
    fn trace_examples() {
        let s = space();
        assert_eq!(trace_covariance(&NoiseModel::none(&s)), 0.0);
        let one = NoiseModel::from_modes(&s, &[ModeAmplitude::new(1, 1, 1, 0.5)]).unwrap();
        assert_eq!(trace_covariance(&one), 0.25);
        let two = NoiseModel::from_modes(
            &s,
            &[
                ModeAmplitude::new(1, 2, 1, 0.1f64.sqrt()),
                ModeAmplitude::new(2, 1, 2, 0.2f64.sqrt()),
            ],
        )
        .unwrap();
        assert!((trace_covariance(&two) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn low_mode_preset_hits_trace() {
        let s = Space::new(8).unwrap();
        let g = NoiseModel::low_modes(&s, 2, 0.01).unwrap();
        assert_eq!(g.len(), 8);
        assert!((g.trace() - 0.01).abs() < 1e-15);
        let a = g.modes()[0].coeffs().norm();
        let b = g.modes()[3].coeffs().norm();
        assert!((a / b - 4.0).abs() < 1e-12);
    }

    #[test]
    fn increments_are_reproducible() {
        let s = space();
        let g = NoiseModel::low_modes(&s, 3, 1.0).unwrap();
        let sp = SeedPath::new(7, 3, 11);
        assert_eq!(sample_increment(&g, 0.01, sp), sample_increment(&g, 0.01, sp));
        let other = sample_increment(&g, 0.01, SeedPath::new(7, 3, 12));
        assert_ne!(sample_increment(&g, 0.01, sp).dw, other.dw);
        let other = sample_increment(&g, 0.01, SeedPath::new(7, 4, 11));
        assert_ne!(sample_increment(&g, 0.01, sp).dw, other.dw);
    }

    #[test]
    fn empty_noise_contributes_nothing() {
        let s = space();
        let g = NoiseModel::none(&s);
        let inc = sample_increment(&g, 0.1, SeedPath::new(1, 0, 0));
        assert!(inc.dw.is_empty());
        assert_eq!(noise_contribution(&g, &inc).unwrap(), s.zero_velocity());
    }

    #[test]
    fn contribution_examples() {
        let s = space();
        let g = NoiseModel::from_modes(&s, &[ModeAmplitude::new(2, 3, 2, 0.7)]).unwrap();
        let sp = SeedPath::new(0, 0, 0);
        let zero = WienerIncrement::zero(1, 0.1, sp);
        assert_eq!(noise_contribution(&g, &zero).unwrap(), s.zero_velocity());
        let unit = WienerIncrement {
            dw: vec![1.0],
            dt: 0.1,
            seed_path: sp,
        };
        assert_eq!(noise_contribution(&g, &unit).unwrap(), g.modes()[0]);
        let bad = WienerIncrement::zero(2, 0.1, sp);
        assert!(matches!(
            noise_contribution(&g, &bad),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn contribution_is_linear() {
        let s = space();
        let g = NoiseModel::low_modes(&s, 3, 2.0).unwrap();
        for step in 0..20 {
            let x = sample_increment(&g, 0.3, SeedPath::new(5, 0, step));
            let y = sample_increment(&g, 0.3, SeedPath::new(5, 1, step));
            let (a, b) = (1.7, -0.4);
            let combo = WienerIncrement {
                dw: x.dw.iter().zip(&y.dw).map(|(p, q)| a * p + b * q).collect(),
                ..x.clone()
            };
            let lhs = noise_contribution(&g, &combo).unwrap();
            let cx = noise_contribution(&g, &x).unwrap();
            let cy = noise_contribution(&g, &y).unwrap();
            let rhs = &(&cx * a) + &(&cy * b);
            assert!((lhs.coeffs() - rhs.coeffs()).amax() < 1e-14);
        }
    }

    #[test]
    fn increment_moments_match_dt() {
        let s = Space::new(2).unwrap();
        let g = NoiseModel::low_modes(&s, 2, 0.01).unwrap();
        let (dt, n) = (1e-3, 100_000u64);
        let k = g.len();
        let mut sum = vec![0.0; k];
        let mut sum_sq = vec![0.0; k];
        let mut sum_4 = vec![0.0; k];
        let (mut e1, mut e2) = (0.0, 0.0);
        for step in 0..n {
            let inc = sample_increment(&g, dt, SeedPath::new(42, 0, step));
            for (i, &w) in inc.dw.iter().enumerate() {
                sum[i] += w;
                sum_sq[i] += w * w;
                sum_4[i] += w.powi(4);
            }
            let c = noise_contribution(&g, &inc).unwrap().coeffs().norm_squared();
            e1 += c;
            e2 += c * c;
        }
        let nf = n as f64;
        for i in 0..k {
            let var = sum_sq[i] / nf;
            let se = ((sum_4[i] / nf - var * var) / nf).sqrt();
            assert!((var - dt).abs() < 3.0 * se, "mode {i}: {var} vs {dt} (se {se})");
            let mean = sum[i] / nf;
            assert!(mean.abs() < 3.0 * (dt / nf).sqrt());
        }
        let mean = e1 / nf;
        let se = ((e2 / nf - mean * mean) / nf).sqrt();
        assert!((mean - g.trace() * dt).abs() < 3.0 * se);
    }
}
