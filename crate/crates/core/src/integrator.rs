//! Semi-implicit Euler–Maruyama time stepping of the coupled Galerkin system and its
//! discrete energy ledger.
//!
//! Each step solves `(I + dt ν S + (dt²/ε) DᵀGD) u⁺ = u − dt B̂(u) − dt ∇p + dt f + Σ g_k ΔW_k`
//! and then sets `p⁺ = p − (dt/ε) Div u⁺`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{Error, Result};
use crate::forcing::{
    field_from_modes, noise_contribution, sample_increment, DeterministicForce, ForceSpec,
    ModeAmplitude, NoiseModel, NoiseSpec, SeedPath, WienerIncrement,
};
use crate::operators::Advection;
use crate::spectral::{gauss_legendre_unit, PressureFamily, PressureField, PressureMode, Space, VelocityField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub nu: f64,
    pub eps: f64,
    pub delta: f64,
    pub n_modes: usize,
    pub dt: f64,
    pub t_final: f64,
    pub moment_p: f64,
    pub quad_order: usize,
    pub seed: u64,
    pub energy_cap: f64,
    /// Include `B̂`; switched off only to test the linear flow.
    pub nonlinear: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            nu: 0.1,
            eps: 0.1,
            delta: 1.0,
            n_modes: 8,
            dt: 1e-3,
            t_final: 0.5,
            moment_p: 4.0,
            quad_order: crate::spectral::default_quad_order(8),
            seed: 42,
            energy_cap: 1e12,
            nonlinear: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("nu", self.nu),
            ("eps", self.eps),
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("energy_cap", self.energy_cap),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::config("delta must be non-negative"));
        }
        if !(self.moment_p >= 2.0 && self.moment_p.is_finite()) {
            return Err(Error::config("moment_p must be at least 2"));
        }
        if self.n_modes == 0 || self.n_modes > crate::spectral::MAX_MODES {
            return Err(Error::config(format!(
                "n_modes must lie in 1..={}",
                crate::spectral::MAX_MODES
            )));
        }
        if self.quad_order < 2 {
            return Err(Error::config("quad_order must be at least 2"));
        }
        if self.dt > self.t_final {
            return Err(Error::config("dt must not exceed t_final"));
        }
        let n = (self.t_final / self.dt).round();
        if ((n * self.dt - self.t_final) / self.t_final).abs() > 1e-9 {
            return Err(Error::config("t_final must be a whole number of steps dt"));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        ((self.t_final / self.dt).round() as usize).max(1)
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }
}

/// Velocity or pressure initial datum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    Zero,
    Modes { modes: Vec<ModeAmplitude> },
    Preset { name: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialSpec {
    pub velocity: FieldSpec,
    pub pressure: FieldSpec,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            velocity: FieldSpec::Preset { name: "low".into() },
            pressure: FieldSpec::Zero,
        }
    }
}

impl InitialSpec {
    pub fn zero() -> Self {
        Self {
            velocity: FieldSpec::Zero,
            pressure: FieldSpec::Zero,
        }
    }
}

pub const VELOCITY_PRESETS: [&str; 2] = ["low", "vortex"];

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub u: VelocityField,
    pub p: PressureField,
    pub t: f64,
}

impl State {
    pub fn zero(space: &Space) -> Self {
        Self {
            u: space.zero_velocity(),
            p: space.zero_pressure(),
            t: 0.0,
        }
    }
}

/// L² projection of a vector field given pointwise, by tensor Gauss–Legendre quadrature.
pub fn project_velocity_fn(
    space: &Space,
    order: usize,
    f: impl Fn(f64, f64) -> [f64; 2],
) -> VelocityField {
    let (x, w) = gauss_legendre_unit(order);
    let n = space.n_modes();
    let mut u = space.zero_velocity();
    let sines: Vec<Vec<f64>> = x
        .iter()
        .map(|&xq| (1..=n).map(|j| (j as f64 * PI * xq).sin()).collect())
        .collect();
    for (a, &xa) in x.iter().enumerate() {
        for (b, &yb) in x.iter().enumerate() {
            let v = f(xa, yb);
            let wq = 2.0 * w[a] * w[b];
            for (i, m) in space.velocity_modes().iter().enumerate() {
                let d = m.component.offset();
                u.coeffs_mut()[i] += wq * v[d] * sines[a][m.j - 1] * sines[b][m.k - 1];
            }
        }
    }
    u
}

fn velocity_preset(space: &Space, name: &str) -> Result<VelocityField> {
    match name {
        "low" => field_from_modes(
            space,
            &[ModeAmplitude::new(1, 1, 1, 0.1), ModeAmplitude::new(2, 1, 2, 0.05)],
        ),
        // Curl of the stream function 0.05 sin²(πx) sin²(πy).
        "vortex" => Ok(project_velocity_fn(space, space.default_quad_order(), |x, y| {
            let (sx, cx, sy, cy) = ((PI * x).sin(), (PI * x).cos(), (PI * y).sin(), (PI * y).cos());
            let a = 0.05 * 2.0 * PI;
            [a * sx * sx * sy * cy, -a * sx * cx * sy * sy]
        })),
        other => Err(Error::config(format!(
            "unknown velocity preset {other:?}, expected one of {VELOCITY_PRESETS:?}"
        ))),
    }
}

/// L² projection of a sum of pressure modes; modes past the cutoff are projected through the Gram.
fn pressure_from_modes(space: &Space, entries: &[ModeAmplitude]) -> Result<PressureField> {
    let mut rhs = DVector::zeros(space.dim());
    for e in entries {
        e.validate()?;
        let family = if e.d == 1 {
            PressureFamily::CosSin
        } else {
            PressureFamily::SinCos
        };
        let ext = PressureMode {
            family,
            j: e.j,
            k: e.k,
        };
        for (i, m) in space.pressure_modes().iter().enumerate() {
            rhs[i] += e.amplitude * m.inner(&ext);
        }
    }
    PressureField::from_coeffs(space.n_modes(), space.gram().cholesky().solve(&rhs))
}

/// Projects the initial data onto the Galerkin space.
pub fn project_initial(space: &Space, spec: &InitialSpec) -> Result<State> {
    let u = match &spec.velocity {
        FieldSpec::Zero => space.zero_velocity(),
        FieldSpec::Modes { modes } => field_from_modes(space, modes)?,
        FieldSpec::Preset { name } => velocity_preset(space, name)?,
    };
    let p = match &spec.pressure {
        FieldSpec::Zero => space.zero_pressure(),
        FieldSpec::Modes { modes } => pressure_from_modes(space, modes)?,
        FieldSpec::Preset { name } => {
            return Err(Error::config(format!("unknown pressure preset {name:?}")))
        }
    };
    Ok(State { u, p, t: 0.0 })
}

/// Per-step terms of `d[|u|² + ε|p|²] + 2ν‖u‖²dt = [2(f,u) + Tr g²]dt + 2Σ(g_k,u)dW_k`,
/// evaluated at the left end point of the step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedgerEntry {
    pub t: f64,
    pub energy_before: f64,
    pub energy: f64,
    pub dissipation_increment: f64,
    pub work_increment: f64,
    pub ito_increment: f64,
    pub martingale_increment: f64,
    pub residual: f64,
}

impl EnergyLedgerEntry {
    pub fn recomputed_residual(&self) -> f64 {
        (self.energy - self.energy_before) + self.dissipation_increment
            - self.work_increment
            - self.ito_increment
            - self.martingale_increment
    }
}

/// Norms recorded at one grid time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub t: f64,
    pub l2_u: f64,
    pub h1_u: f64,
    pub l4_u: f64,
    pub l2_p: f64,
    pub l2_div_u: f64,
    pub energy: f64,
    /// Ledger residual of the step ending at `t`; zero at `t = 0`.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    pub seed: u64,
    pub path: u64,
    pub n_modes: usize,
    pub dt: f64,
    pub rows: Vec<PathRow>,
    pub ledger: Vec<EnergyLedgerEntry>,
    pub final_state: State,
}

type FactorKey = (usize, u64, u64, u64);
type FactorCache = RwLock<HashMap<FactorKey, Arc<Cholesky<f64, Dyn>>>>;

fn factor_cache() -> &'static FactorCache {
    static CACHE: OnceLock<FactorCache> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Cholesky factor of `I + dt ν S + (dt²/ε) DᵀGD`, shared per `(N, ν, ε, dt)`.
pub fn implicit_factor(space: &Space, nu: f64, eps: f64, dt: f64) -> Result<Arc<Cholesky<f64, Dyn>>> {
    let key = (space.n_modes(), nu.to_bits(), eps.to_bits(), dt.to_bits());
    if let Some(f) = factor_cache().read().unwrap().get(&key) {
        return Ok(f.clone());
    }
    let mut cache = factor_cache().write().unwrap();
    if let Some(f) = cache.get(&key) {
        return Ok(f.clone());
    }
    let m = implicit_matrix(space, nu, eps, dt);
    let chol = Cholesky::new(m).ok_or_else(|| {
        Error::Factorization(format!(
            "implicit matrix not positive definite (N = {}, nu = {nu}, eps = {eps}, dt = {dt})",
            space.n_modes()
        ))
    })?;
    let chol = Arc::new(chol);
    cache.insert(key, chol.clone());
    Ok(chol)
}

pub fn implicit_matrix(space: &Space, nu: f64, eps: f64, dt: f64) -> DMatrix<f64> {
    let mut m = space.grad_div() * (dt * dt / eps);
    for i in 0..space.dim() {
        m[(i, i)] += 1.0 + dt * nu * space.stiffness()[i];
    }
    m
}

/// Everything needed to advance paths of one configuration; shared read-only across paths.
#[derive(Clone, Debug)]
pub struct Solver {
    space: Arc<Space>,
    advection: Advection,
    cfg: SolverConfig,
    force: DeterministicForce,
    noise: NoiseModel,
    factor: Arc<Cholesky<f64, Dyn>>,
}

impl Solver {
    pub fn new(
        space: Arc<Space>,
        cfg: SolverConfig,
        force: DeterministicForce,
        noise: NoiseModel,
    ) -> Result<Self> {
        cfg.validate()?;
        if cfg.n_modes != space.n_modes() {
            return Err(Error::DimensionMismatch {
                expected: space.n_modes(),
                got: cfg.n_modes,
            });
        }
        let factor = implicit_factor(&space, cfg.nu, cfg.eps, cfg.dt)?;
        Ok(Self {
            advection: Advection::new(space.n_modes(), cfg.quad_order),
            space,
            cfg,
            force,
            noise,
            factor,
        })
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn shared_space(&self) -> Arc<Space> {
        self.space.clone()
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn force(&self) -> &DeterministicForce {
        &self.force
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn advection(&self) -> &Advection {
        &self.advection
    }

    /// `|u|² + ε|p|²`.
    pub fn energy(&self, s: &State) -> f64 {
        s.u.coeffs().norm_squared() + self.cfg.eps * self.space.pressure_l2_norm(&s.p).powi(2)
    }

    pub fn increment(&self, path: u64, step: u64) -> WienerIncrement {
        sample_increment(&self.noise, self.cfg.dt, SeedPath::new(self.cfg.seed, path, step))
    }

    /// Explicit part of the step: `−dt B̂(u) − dt ∇p + dt f`.
    fn explicit_rhs(&self, s: &State) -> DVector<f64> {
        let dt = self.cfg.dt;
        let mut rhs = s.u.coeffs().clone();
        if self.cfg.nonlinear {
            rhs.axpy(-dt, &self.advection.bhat(&s.u).pairings, 1.0);
        }
        rhs.axpy(-dt, &self.space.pressure_gradient(&s.p), 1.0);
        rhs.axpy(dt, self.force.field().coeffs(), 1.0);
        rhs
    }

    pub fn step(&self, s: &State, inc: &WienerIncrement) -> Result<(State, EnergyLedgerEntry)> {
        let (dt, eps, nu) = (self.cfg.dt, self.cfg.eps, self.cfg.nu);
        if s.t + dt > self.cfg.t_final + 0.5 * dt {
            return Err(Error::config(format!(
                "step from t = {} would pass t_final = {}",
                s.t, self.cfg.t_final
            )));
        }
        let noise = noise_contribution(&self.noise, inc)?;
        let mut rhs = self.explicit_rhs(s);
        rhs += noise.coeffs();
        let u_next = self.factor.solve(&rhs);
        let mut p_next = s.p.coeffs().clone();
        p_next.axpy(
            -dt / eps,
            &u_next.component_mul(self.space.divergence_factors()),
            1.0,
        );
        let next = State {
            u: VelocityField::from_coeffs(self.space.n_modes(), u_next)?,
            p: PressureField::from_coeffs(self.space.n_modes(), p_next)?,
            t: s.t + dt,
        };
        let energy_before = self.energy(s);
        let energy = self.energy(&next);
        let mut entry = EnergyLedgerEntry {
            t: next.t,
            energy_before,
            energy,
            dissipation_increment: 2.0 * nu * s.u.h10_norm_sq() * dt,
            work_increment: 2.0 * self.force.field().dot(&s.u) * dt,
            ito_increment: self.noise.trace() * dt,
            martingale_increment: 2.0 * noise.dot(&s.u),
            residual: 0.0,
        };
        entry.residual = entry.recomputed_residual();
        Ok((next, entry))
    }

    pub fn row(&self, s: &State, residual: f64) -> PathRow {
        PathRow {
            t: s.t,
            l2_u: s.u.l2_norm(),
            h1_u: s.u.h10_norm(),
            l4_u: self.advection.l4_norm(&s.u),
            l2_p: self.space.pressure_l2_norm(&s.p),
            l2_div_u: self.space.pressure_l2_norm(&self.space.divergence(&s.u)),
            energy: self.energy(s),
            residual,
        }
    }

    pub fn check_energy(&self, path: u64, step: usize, energy: f64) -> Result<()> {
        if energy.is_finite() && energy <= self.cfg.energy_cap {
            Ok(())
        } else {
            Err(Error::Diverged {
                seed: self.cfg.seed,
                path,
                step,
                energy,
            })
        }
    }

    /// Runs path `path` from `init`, calling `observe(step, state)` at every grid time.
    pub fn run_path_with(
        &self,
        init: &State,
        path: u64,
        mut observe: impl FnMut(usize, &State),
    ) -> Result<PathRecord> {
        let n = self.cfg.n_steps();
        let mut state = State {
            t: 0.0,
            ..init.clone()
        };
        let mut rows = Vec::with_capacity(n + 1);
        let mut ledger = Vec::with_capacity(n);
        rows.push(self.row(&state, 0.0));
        observe(0, &state);
        for m in 0..n {
            let inc = self.increment(path, m as u64);
            let (mut next, mut entry) = self.step(&state, &inc)?;
            next.t = self.cfg.time(m + 1);
            entry.t = next.t;
            self.check_energy(path, m + 1, entry.energy)?;
            rows.push(self.row(&next, entry.residual));
            ledger.push(entry);
            observe(m + 1, &next);
            state = next;
        }
        Ok(PathRecord {
            seed: self.cfg.seed,
            path,
            n_modes: self.space.n_modes(),
            dt: self.cfg.dt,
            rows,
            ledger,
            final_state: state,
        })
    }

    pub fn run_path(&self, init: &State, path: u64) -> Result<PathRecord> {
        self.run_path_with(init, path, |_, _| {})
    }
}

/// A complete run description: solver parameters and the noise, force and initial data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub solver: SolverConfig,
    pub noise: NoiseSpec,
    pub force: ForceSpec,
    pub initial: InitialSpec,
}

impl Problem {
    pub fn build(&self) -> Result<(Solver, State)> {
        self.solver.validate()?;
        let space = Arc::new(Space::new(self.solver.n_modes)?);
        self.build_on(space)
    }

    pub fn build_on(&self, space: Arc<Space>) -> Result<(Solver, State)> {
        let force = self.force.build(&space)?;
        let noise = self.noise.build(&space)?;
        let init = project_initial(&space, &self.initial)?;
        Ok((Solver::new(space, self.solver.clone(), force, noise)?, init))
    }
}

pub fn run_path(problem: &Problem, path: u64) -> Result<PathRecord> {
    let (solver, init) = problem.build()?;
    solver.run_path(&init, path)
}

/// Largest per-step residual over all runs, and the empirical order of the RMS per-step
/// residual across runs at different `dt`.
pub fn energy_residual(runs: &[(f64, &[EnergyLedgerEntry])]) -> (f64, Option<f64>) {
    let max_abs = runs
        .iter()
        .flat_map(|(_, l)| l.iter().map(|e| e.residual.abs()))
        .fold(0.0, f64::max);
    let points: Vec<(f64, f64)> = runs
        .iter()
        .map(|(dt, l)| {
            let ms = l.iter().map(|e| e.residual * e.residual).sum::<f64>() / l.len().max(1) as f64;
            (*dt, ms.sqrt())
        })
        .collect();
    let usable = points.len() >= 2
        && points
            .iter()
            .all(|&(dt, r)| dt > 0.0 && r > 0.0 && r.is_finite());
    let slope = usable.then(|| log_log_slope(&points));
    (max_abs, slope)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
