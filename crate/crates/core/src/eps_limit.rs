//! The `ε → 0` limit: a Leray-projected reference solver on the same basis and a sweep
//! over decreasing `ε` that compares the compressible runs against it path by path.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::mean_se;
use crate::error::{Error, Result};
use crate::forcing::noise_contribution;
use crate::integrator::{log_log_slope, EnergyLedgerEntry, PathRecord, PathRow, Problem, Solver, State};
use crate::spectral::{Space, VelocityField};

/// Relative threshold below which squared singular values of the divergence map count as zero.
pub const PINV_THRESHOLD: f64 = 1e-12;

/// Orthogonal projection onto the velocity fields whose divergence vanishes.
#[derive(Clone, Debug)]
pub struct LerayProjector {
    n_modes: usize,
    /// Orthonormal basis of the divergence-free subspace, one column per vector.
    kernel: DMatrix<f64>,
}

impl LerayProjector {
    /// Uses `G = Lᵀ diag(δ)` with `LLᵀ` the pressure Gram, so `|Gu| = |Div u|`, and keeps
    /// the right singular vectors of `G` whose `σ²` is at most `PINV_THRESHOLD · σ²_max`.
    pub fn new(space: &Space) -> Self {
        let l = space.gram().factor();
        let g = l.transpose() * DMatrix::from_diagonal(space.divergence_factors());
        let dim = space.dim();
        let svd = g.svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let s_max = svd.singular_values.max();
        let mut cols = Vec::new();
        for (r, &s) in svd.singular_values.iter().enumerate() {
            if s * s <= PINV_THRESHOLD * s_max * s_max {
                cols.push(v_t.row(r).transpose());
            }
        }
        let kernel = if cols.is_empty() {
            DMatrix::zeros(dim, 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        Self {
            n_modes: space.n_modes(),
            kernel,
        }
    }

    /// Dimension of the divergence-free subspace.
    pub fn rank(&self) -> usize {
        self.kernel.ncols()
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn project(&self, u: &VelocityField) -> VelocityField {
        let c = self.kernel.transpose() * u.coeffs();
        VelocityField::from_coeffs(self.n_modes, &self.kernel * c).expect("same space")
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        &self.kernel * self.kernel.transpose()
    }
}

pub fn leray_project(space: &Space, u: &VelocityField) -> VelocityField {
    LerayProjector::new(space).project(u)
}

/// The `ε = 0` system: Galerkin on the divergence-free subspace with the same explicit
/// convection, force and noise as `solver`.
#[derive(Clone, Debug)]
pub struct ReferenceSolver<'a> {
    solver: &'a Solver,
    leray: LerayProjector,
    factor: Option<Cholesky<f64, Dyn>>,
}

impl<'a> ReferenceSolver<'a> {
    pub fn new(solver: &'a Solver) -> Result<Self> {
        let leray = LerayProjector::new(solver.space());
        let cfg = solver.config();
        let v = leray.kernel();
        let factor = if leray.rank() == 0 {
            None
        } else {
            let stiff = DMatrix::from_diagonal(solver.space().stiffness());
            let m = DMatrix::identity(leray.rank(), leray.rank())
                + v.transpose() * stiff * v * (cfg.dt * cfg.nu);
            Some(Cholesky::new(m).ok_or_else(|| {
                Error::Factorization("reference Stokes matrix not positive definite".into())
            })?)
        };
        Ok(Self {
            solver,
            leray,
            factor,
        })
    }

    pub fn projector(&self) -> &LerayProjector {
        &self.leray
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let v = self.leray.kernel();
        match &self.factor {
            Some(f) => v * f.solve(&(v.transpose() * rhs)),
            None => DVector::zeros(rhs.len()),
        }
    }

    /// Runs path `path`, calling `observe(step, u)` at every grid time.
    pub fn run_path_with(
        &self,
        init: &State,
        path: u64,
        mut observe: impl FnMut(usize, &VelocityField),
    ) -> Result<PathRecord> {
        let solver = self.solver;
        let cfg = solver.config();
        let space = solver.space();
        let dt = cfg.dt;
        let ito = solver
            .noise()
            .modes()
            .iter()
            .map(|g| self.leray.project(g).coeffs().norm_squared())
            .sum::<f64>()
            * dt;
        let f = self.leray.project(solver.force().field());
        let mut state = State {
            u: self.leray.project(&init.u),
            p: space.zero_pressure(),
            t: 0.0,
        };
        let n = cfg.n_steps();
        let mut rows = Vec::with_capacity(n + 1);
        let mut ledger = Vec::with_capacity(n);
        rows.push(solver.row(&state, 0.0));
        observe(0, &state.u);
        for m in 0..n {
            let inc = solver.increment(path, m as u64);
            let noise = noise_contribution(solver.noise(), &inc)?;
            let mut rhs = state.u.coeffs().clone();
            if cfg.nonlinear {
                rhs.axpy(-dt, &solver.advection().bhat(&state.u).pairings, 1.0);
            }
            rhs.axpy(dt, f.coeffs(), 1.0);
            rhs += noise.coeffs();
            let u_next = VelocityField::from_coeffs(space.n_modes(), self.solve(&rhs))?;
            let next = State {
                u: u_next,
                p: space.zero_pressure(),
                t: cfg.time(m + 1),
            };
            let mut entry = EnergyLedgerEntry {
                t: next.t,
                energy_before: state.u.coeffs().norm_squared(),
                energy: next.u.coeffs().norm_squared(),
                dissipation_increment: 2.0 * cfg.nu * state.u.h10_norm_sq() * dt,
                work_increment: 2.0 * f.dot(&state.u) * dt,
                ito_increment: ito,
                martingale_increment: 2.0 * self.leray.project(&noise).dot(&state.u),
                residual: 0.0,
            };
            entry.residual = entry.recomputed_residual();
            solver.check_energy(path, m + 1, entry.energy)?;
            rows.push(solver.row(&next, entry.residual));
            ledger.push(entry);
            observe(m + 1, &next.u);
            state = next;
        }
        Ok(PathRecord {
            seed: cfg.seed,
            path,
            n_modes: space.n_modes(),
            dt,
            rows,
            ledger,
            final_state: state,
        })
    }

    pub fn run_path(&self, init: &State, path: u64) -> Result<PathRecord> {
        self.run_path_with(init, path, |_, _| {})
    }
}

pub fn run_incompressible_reference(solver: &Solver, init: &State, path: u64) -> Result<PathRecord> {
    ReferenceSolver::new(solver)?.run_path(init, path)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsSweepPlan {
    pub eps_values: Vec<f64>,
    /// Shared parameters; its `solver.eps` is replaced by each sweep value.
    pub problem: Problem,
    pub paths: usize,
}

impl EpsSweepPlan {
    pub fn default_values() -> Vec<f64> {
        vec![1e-1, 1e-2, 1e-3, 1e-4]
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_values.is_empty() {
            return Err(Error::config("eps_values must not be empty"));
        }
        if self.eps_values.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::config("eps_values must be positive"));
        }
        if self.eps_values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::config("eps_values must be strictly decreasing"));
        }
        if self.paths < 2 {
            return Err(Error::config("at least 2 paths per eps are needed"));
        }
        self.problem.solver.validate()
    }
}

/// A sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub paths: usize,
    pub diverged: usize,
    /// `sup_t E|Div u^ε|²`.
    pub div_sq: Estimate,
    /// `sup_t E|u^ε − u^ref|²`.
    pub diff_sq: Estimate,
    /// `E ∫₀ᵀ ε|p^ε|² dt`.
    pub pressure_energy: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Dimension of the divergence-free subspace used by the reference solver.
    pub reference_rank: usize,
    /// Upper bound on `E ∫₀ᵀ ε|p|² dt` implied by the energy estimate with unit weight rate.
    pub pressure_bound: f64,
    pub div_decreasing: bool,
    pub diff_decreasing: bool,
    pub pressure_bounded: bool,
    pub divergence_ok: bool,
    /// Log-log slopes against `ε`; reported, not asserted.
    pub div_rate: Option<f64>,
    pub diff_rate: Option<f64>,
    pub pass: bool,
}

/// Largest fraction of diverged paths tolerated per `ε`.
pub const MAX_DIVERGED_FRACTION: f64 = 0.1;

struct PathStats {
    div_sq: Vec<f64>,
    diff_sq: Vec<f64>,
    pressure_energy: f64,
}

fn trapezoid(rows: &[PathRow], values: impl Fn(&PathRow) -> f64) -> f64 {
    rows.windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * (values(&w[0]) + values(&w[1])))
        .sum()
}

/// `sup_m` of the per-time sample mean, with the standard error at the maximizing time.
fn sup_mean(series: &[&Vec<f64>]) -> Estimate {
    let n_times = series[0].len();
    let mut best = Estimate {
        mean: f64::NEG_INFINITY,
        se: 0.0,
    };
    for m in 0..n_times {
        let xs: Vec<f64> = series.iter().map(|s| s[m]).collect();
        let (mean, se) = mean_se(&xs);
        if mean > best.mean {
            best = Estimate { mean, se };
        }
    }
    best
}

/// `a` exceeds `b` by more than their combined standard error.
fn clearly_above(a: Estimate, b: Estimate) -> bool {
    a.mean - b.mean > (a.se * a.se + b.se * b.se).sqrt()
}

pub fn epsilon_sweep(plan: &EpsSweepPlan) -> Result<ConvergenceReport> {
    plan.validate()?;
    let space = std::sync::Arc::new(Space::new(plan.problem.solver.n_modes)?);
    let (ref_solver, init) = plan.problem.build_on(space.clone())?;
    let reference = ReferenceSolver::new(&ref_solver)?;
    let references: Vec<Vec<VelocityField>> = (0..plan.paths as u64)
        .into_par_iter()
        .map(|path| {
            let mut traj = Vec::with_capacity(ref_solver.config().n_steps() + 1);
            reference.run_path_with(&init, path, |_, u| traj.push(u.clone()))?;
            Ok(traj)
        })
        .collect::<Result<_>>()?;

    let solvers: Vec<Solver> = plan
        .eps_values
        .iter()
        .map(|&eps| {
            let mut p = plan.problem.clone();
            p.solver.eps = eps;
            p.build_on(space.clone()).map(|(s, _)| s)
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, u64)> = (0..solvers.len())
        .flat_map(|e| (0..plan.paths as u64).map(move |p| (e, p)))
        .collect();
    let results: Vec<Result<PathStats>> = jobs
        .par_iter()
        .map(|&(e, path)| {
            let solver = &solvers[e];
            let eps = solver.config().eps;
            let reference = &references[path as usize];
            let mut diff_sq = Vec::with_capacity(reference.len());
            let rec = solver.run_path_with(&init, path, |m, s| {
                diff_sq.push((&s.u - &reference[m]).coeffs().norm_squared());
            })?;
            Ok(PathStats {
                div_sq: rec.rows.iter().map(|r| r.l2_div_u * r.l2_div_u).collect(),
                pressure_energy: trapezoid(&rec.rows, |r| eps * r.l2_p * r.l2_p),
                diff_sq,
            })
        })
        .collect();

    let mut rows = Vec::with_capacity(solvers.len());
    let mut divergence_ok = true;
    for (e, solver) in solvers.iter().enumerate() {
        let mut ok = Vec::new();
        let mut diverged = 0;
        for r in &results[e * plan.paths..(e + 1) * plan.paths] {
            match r {
                Ok(s) => ok.push(s),
                Err(Error::Diverged { seed, path, step, energy }) => {
                    log::warn!(
                        "eps = {}: path {path} (seed {seed}) diverged at step {step} (energy {energy:e}); excluded",
                        solver.config().eps
                    );
                    diverged += 1;
                }
                Err(other) => return Err(Error::config(other.to_string())),
            }
        }
        if diverged as f64 > MAX_DIVERGED_FRACTION * plan.paths as f64 || ok.len() < 2 {
            divergence_ok = false;
        }
        let (div_sq, diff_sq, pressure_energy) = if ok.is_empty() {
            let nan = Estimate { mean: f64::NAN, se: f64::NAN };
            (nan, nan, nan)
        } else {
            let pe: Vec<f64> = ok.iter().map(|s| s.pressure_energy).collect();
            let (mean, se) = mean_se(&pe);
            (
                sup_mean(&ok.iter().map(|s| &s.div_sq).collect::<Vec<_>>()),
                sup_mean(&ok.iter().map(|s| &s.diff_sq).collect::<Vec<_>>()),
                Estimate { mean, se },
            )
        };
        rows.push(ConvergenceRow {
            eps: solver.config().eps,
            paths: ok.len(),
            diverged,
            div_sq,
            diff_sq,
            pressure_energy,
        });
    }

    // With unit rate the energy estimate gives E[|u|² + ε|p|²](t) ≤ eᵗE₀ + (eᵗ − 1)(|f|² + Tr g²),
    // which dominates ε|p|² and integrates in closed form over [0, T].
    let t = plan.problem.solver.t_final;
    let p0_sq = space.pressure_l2_norm(&init.p).powi(2);
    let e0 = init.u.coeffs().norm_squared() + plan.eps_values[0] * p0_sq;
    let source = ref_solver.force().norm_sq() + ref_solver.noise().trace();
    let pressure_bound = (e0 + source) * t.exp_m1() - source * t;

    let div_decreasing = rows.windows(2).all(|w| clearly_above(w[0].div_sq, w[1].div_sq));
    let diff_decreasing = rows.windows(2).all(|w| w[0].diff_sq.mean > w[1].diff_sq.mean);
    let pressure_bounded = rows
        .iter()
        .all(|r| r.pressure_energy.mean.is_finite() && r.pressure_energy.mean <= pressure_bound);
    let rate = |f: fn(&ConvergenceRow) -> f64| {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps, f(r))).collect();
        (pts.len() >= 2 && pts.iter().all(|&(_, y)| y > 0.0 && y.is_finite()))
            .then(|| log_log_slope(&pts))
    };
    let div_rate = rate(|r| r.div_sq.mean);
    let diff_rate = rate(|r| r.diff_sq.mean);
    Ok(ConvergenceReport {
        reference_rank: reference.projector().rank(),
        pass: div_decreasing && diff_decreasing && pressure_bounded && divergence_ok,
        rows,
        pressure_bound,
        div_decreasing,
        diff_decreasing,
        pressure_bounded,
        divergence_ok,
        div_rate,
        diff_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::NoiseSpec;
    use crate::integrator::{InitialSpec, SolverConfig};
    use crate::operators::random_field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn projection_is_symmetric_and_idempotent() {
        let s = Space::new(4).unwrap();
        let p = LerayProjector::new(&s).matrix();
        assert!((&p - p.transpose()).amax() <= 1e-10);
        assert!((&p * &p - &p).amax() <= 1e-10);
    }

    #[test]
    fn projection_kills_discrete_gradients() {
        let s = Space::new(4).unwrap();
        let leray = LerayProjector::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_field(&s, 1.0, &mut rng);
        let grad = VelocityField::from_coeffs(
            s.n_modes(),
            s.pressure_gradient(&crate::spectral::PressureField::from_coeffs(4, q.into_coeffs()).unwrap()),
        )
        .unwrap();
        assert!(leray.project(&grad).l2_norm() <= 1e-10 * grad.l2_norm());
    }

    #[test]
    fn projected_fields_are_divergence_free() {
        let s = Space::new(3).unwrap();
        let leray = LerayProjector::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let u = random_field(&s, 1.0, &mut rng);
            let pu = leray.project(&u);
            let div = s.pressure_l2_norm(&s.divergence(&pu));
            assert!(div <= 1e-10);
            assert!((&leray.project(&pu) - &pu).l2_norm() <= 1e-12);
        }
    }

    #[test]
    fn divergence_map_has_trivial_kernel() {
        for n in [1, 2, 4, 8] {
            assert_eq!(LerayProjector::new(&Space::new(n).unwrap()).rank(), 0, "N = {n}");
        }
    }

    fn plan(eps_values: Vec<f64>, paths: usize) -> EpsSweepPlan {
        EpsSweepPlan {
            eps_values,
            problem: Problem {
                solver: SolverConfig {
                    n_modes: 4,
                    dt: 2e-3,
                    t_final: 0.1,
                    quad_order: crate::spectral::default_quad_order(4),
                    ..Default::default()
                },
                initial: InitialSpec::zero(),
                ..Default::default()
            },
            paths,
        }
    }

    #[test]
    fn reference_runs_are_reproducible_and_divergence_free() {
        let p = plan(vec![0.1], 2);
        let (solver, init) = p.problem.build().unwrap();
        let a = run_incompressible_reference(&solver, &init, 1).unwrap();
        let b = run_incompressible_reference(&solver, &init, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.rows.iter().all(|r| r.l2_div_u <= 1e-9));
    }

    #[test]
    fn single_value_sweep_has_one_row() {
        let rep = epsilon_sweep(&plan(vec![0.05], 3)).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert!(rep.div_decreasing && rep.diff_decreasing);
    }

    #[test]
    fn unforced_zero_data_stays_at_reference() {
        let mut p = plan(vec![0.1, 0.01], 2);
        p.problem.noise = NoiseSpec::None;
        let rep = epsilon_sweep(&p).unwrap();
        for r in &rep.rows {
            assert_eq!(r.diff_sq.mean, 0.0);
            assert_eq!(r.div_sq.mean, 0.0);
        }
    }

    #[test]
    fn plan_validation() {
        assert!(plan(vec![0.1, 0.1], 3).validate().is_err());
        assert!(plan(vec![], 3).validate().is_err());
        assert!(plan(vec![0.1, -1.0], 3).validate().is_err());
        assert!(plan(vec![0.1, 0.01], 1).validate().is_err());
    }
}
