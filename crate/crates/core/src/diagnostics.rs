//! Monte Carlo checks of the weighted energy and moment bounds, and the pathwise
//! uniqueness estimate with its exponential `L⁴` weight.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{PathRecord, PathRow, Solver, State};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentConfig {
    pub moment_p: f64,
    pub delta: f64,
    pub paths: usize,
    pub confidence_z: f64,
}

impl MomentConfig {
    pub fn new(moment_p: f64, delta: f64, paths: usize) -> Self {
        Self {
            moment_p,
            delta,
            paths,
            confidence_z: 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths < 2 {
            return Err(Error::config("at least 2 paths are needed"));
        }
        if !(self.moment_p >= 2.0 && self.moment_p.is_finite()) {
            return Err(Error::config("moment_p must be at least 2"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::config("delta must be positive"));
        }
        if self.confidence_z.is_nan() || self.confidence_z < 0.0 {
            return Err(Error::config("confidence_z must be non-negative"));
        }
        Ok(())
    }
}

/// Relative allowance for round-off when comparing sample means with exact bounds.
pub const ROUNDING_SLACK: f64 = 1e-12;

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs paths `0..paths` concurrently; results are in path order and any failure aborts.
pub fn run_ensemble(solver: &Solver, init: &State, paths: usize) -> Result<Vec<PathRecord>> {
    (0..paths as u64)
        .into_par_iter()
        .map(|path| solver.run_path(init, path))
        .collect()
}

/// Like [`run_ensemble`] but keeps failed paths as errors.
pub fn run_ensemble_lenient(solver: &Solver, init: &State, paths: usize) -> Vec<Result<PathRecord>> {
    (0..paths as u64)
        .into_par_iter()
        .map(|path| solver.run_path(init, path))
        .collect()
}

/// `pν ∫₀^{t_m} ‖u‖² |u|^{p−2} e^{−δs} ds` at every grid time, by the trapezoidal rule.
pub fn weighted_dissipation(rows: &[PathRow], nu: f64, moment_p: f64, delta: f64) -> Vec<f64> {
    let integrand: Vec<f64> = rows
        .iter()
        .map(|r| r.h1_u * r.h1_u * r.l2_u.powf(moment_p - 2.0) * (-delta * r.t).exp())
        .collect();
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(rows.len());
    out.push(0.0);
    for m in 1..rows.len() {
        let dt = rows[m].t - rows[m - 1].t;
        acc += 0.5 * dt * (integrand[m] + integrand[m - 1]);
        out.push(moment_p * nu * acc);
    }
    out
}

/// `∫₀ᵗ e^{−δs} ds`.
fn discount_integral(delta: f64, t: f64) -> f64 {
    if delta == 0.0 {
        t
    } else {
        -(-delta * t).exp_m1() / delta
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyBoundRow {
    pub t: f64,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    /// `rhs + z·SE − lhs`; non-negative when the bound holds at `t`.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyBoundReport {
    pub delta: f64,
    pub paths: usize,
    pub rows: Vec<EnergyBoundRow>,
    pub min_margin: f64,
    pub pass: bool,
}

/// Per-path value of `(|u(t)|² + ε|p(t)|²)e^{−δt} + 2ν∫₀ᵗ‖u‖²e^{−δs}ds` at each grid time.
pub fn energy_bound_lhs(record: &PathRecord, nu: f64, delta: f64) -> Vec<f64> {
    let diss = weighted_dissipation(&record.rows, nu, 2.0, delta);
    record
        .rows
        .iter()
        .zip(diss)
        .map(|(r, d)| r.energy * (-delta * r.t).exp() + d)
        .collect()
}

/// Compares the sample mean of the weighted energy with
/// `|u₀|² + ε|p₀|² + ∫₀ᵗ [|f|²/δ + Tr g²] e^{−δs} ds` at every grid time.
pub fn mc_energy_bound(
    solver: &Solver,
    init: &State,
    records: &[PathRecord],
    delta: f64,
    confidence_z: f64,
) -> Result<EnergyBoundReport> {
    if records.len() < 2 || delta <= 0.0 {
        return Err(Error::config("energy bound needs delta > 0 and at least 2 paths"));
    }
    let cfg = solver.config();
    let e0 = solver.energy(init);
    let source = solver.force().norm_sq() / delta + solver.noise().trace();
    let per_path: Vec<Vec<f64>> = records
        .iter()
        .map(|r| energy_bound_lhs(r, cfg.nu, delta))
        .collect();
    let n_times = per_path[0].len();
    let mut rows = Vec::with_capacity(n_times);
    for m in 0..n_times {
        let xs: Vec<f64> = per_path.iter().map(|p| p[m]).collect();
        let (lhs, lhs_se) = mean_se(&xs);
        let t = records[0].rows[m].t;
        let rhs = e0 + source * discount_integral(delta, t);
        rows.push(EnergyBoundRow {
            t,
            lhs,
            lhs_se,
            rhs,
            margin: rhs + confidence_z * lhs_se - lhs,
        });
    }
    let min_margin = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok(EnergyBoundReport {
        delta,
        paths: records.len(),
        // Averaging identical values can round the mean a few ulps above them.
        pass: rows.iter().all(|r| r.margin >= -ROUNDING_SLACK * r.rhs),
        min_margin,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub moment_p: f64,
    pub delta: f64,
    pub paths: usize,
    pub lhs: f64,
    pub lhs_se: f64,
    /// `|u₀|^p + ε|p₀|^p`.
    pub initial: f64,
    /// `∫₀ᵀ [|f|^p + (Tr g²)^{p/2}] e^{−δt} dt`.
    pub rhs_without_constant: f64,
    /// `(lhs − initial) / rhs_without_constant`; `None` when the integral vanishes.
    pub implied_c: Option<f64>,
    pub per_path: Vec<f64>,
}

/// Per-path `sup_t (|u|^p + ε|p|^p) e^{−δt}` and the weighted dissipation integral over `[0, T]`.
pub fn moment_terms(record: &PathRecord, nu: f64, eps: f64, moment_p: f64, delta: f64) -> (f64, f64) {
    let sup = record
        .rows
        .iter()
        .map(|r| (r.l2_u.powf(moment_p) + eps * r.l2_p.powf(moment_p)) * (-delta * r.t).exp())
        .fold(f64::NEG_INFINITY, f64::max);
    let diss = weighted_dissipation(&record.rows, nu, moment_p, delta);
    (sup, *diss.last().unwrap())
}

pub fn mc_moment_bound(
    solver: &Solver,
    init: &State,
    records: &[PathRecord],
    mc: &MomentConfig,
) -> Result<MomentReport> {
    mc.validate()?;
    if records.len() < 2 {
        return Err(Error::config("moment bound needs at least 2 paths"));
    }
    let cfg = solver.config();
    let p = mc.moment_p;
    let per_path: Vec<f64> = records
        .iter()
        .map(|r| {
            let (sup, diss) = moment_terms(r, cfg.nu, cfg.eps, p, mc.delta);
            sup + diss
        })
        .collect();
    let (lhs, lhs_se) = mean_se(&per_path);
    let initial = init.u.l2_norm().powf(p)
        + cfg.eps * solver.space().pressure_l2_norm(&init.p).powf(p);
    let source = solver.force().norm_sq().powf(p / 2.0) + solver.noise().trace().powf(p / 2.0);
    let rhs_without_constant = source * discount_integral(mc.delta, cfg.t_final);
    let implied_c = (rhs_without_constant > 0.0).then(|| (lhs - initial) / rhs_without_constant);
    Ok(MomentReport {
        moment_p: p,
        delta: mc.delta,
        paths: records.len(),
        lhs,
        lhs_se,
        initial,
        rhs_without_constant,
        implied_c,
        per_path,
    })
}

/// `r(t) = (27/ν³) ∫₀ᵗ ‖u(s)‖⁴_{L⁴} ds`, accumulated by the trapezoidal rule.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniquenessWeight {
    pub samples: Vec<f64>,
    coefficient: f64,
    last_l4_pow4: f64,
    last_t: f64,
}

impl UniquenessWeight {
    pub fn new(nu: f64, l4_norm_0: f64) -> Self {
        Self {
            samples: vec![0.0],
            coefficient: 27.0 / nu.powi(3),
            last_l4_pow4: l4_norm_0.powi(4),
            last_t: 0.0,
        }
    }

    pub fn push(&mut self, t: f64, l4_norm: f64) {
        let q = l4_norm.powi(4);
        let r = self.current()
            + self.coefficient * 0.5 * (t - self.last_t) * (q + self.last_l4_pow4);
        self.samples.push(r);
        self.last_l4_pow4 = q;
        self.last_t = t;
    }

    pub fn current(&self) -> f64 {
        *self.samples.last().unwrap()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub dt: f64,
    pub times: Vec<f64>,
    pub weight: Vec<f64>,
    pub weighted_diff: Vec<f64>,
    /// Largest step-to-step change of the weighted difference; negative if it decreases throughout.
    pub max_increase: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Runs two paths from `init_a` and `init_b` on the same Wiener increments and tracks
/// `[|u − v|² + ε|p − q|²] e^{−r(t)}` with the weight taken along the first path.
pub fn pathwise_uniqueness_check(
    solver: &Solver,
    init_a: &State,
    init_b: &State,
    path: u64,
    c_check: f64,
) -> Result<UniquenessReport> {
    let cfg = solver.config();
    let space = solver.space();
    let adv = solver.advection();
    let diff = |a: &State, b: &State| {
        let du = &a.u - &b.u;
        let dp = &a.p - &b.p;
        du.coeffs().norm_squared() + cfg.eps * space.pressure_l2_norm(&dp).powi(2)
    };
    let (mut a, mut b) = (init_a.clone(), init_b.clone());
    let mut weight = UniquenessWeight::new(cfg.nu, adv.l4_norm(&a.u));
    let mut times = vec![0.0];
    let mut weighted_diff = vec![diff(&a, &b)];
    for m in 0..cfg.n_steps() {
        let inc = solver.increment(path, m as u64);
        let (mut na, ea) = solver.step(&a, &inc)?;
        let (mut nb, eb) = solver.step(&b, &inc)?;
        let t = cfg.time(m + 1);
        na.t = t;
        nb.t = t;
        solver.check_energy(path, m + 1, ea.energy)?;
        solver.check_energy(path, m + 1, eb.energy)?;
        weight.push(t, adv.l4_norm(&na.u));
        weighted_diff.push(diff(&na, &nb) * (-weight.current()).exp());
        times.push(t);
        a = na;
        b = nb;
    }
    let max_increase = weighted_diff
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let tolerance = c_check * cfg.dt * weighted_diff[0];
    Ok(UniquenessReport {
        dt: cfg.dt,
        times,
        weight: weight.samples,
        pass: max_increase <= tolerance,
        weighted_diff,
        max_increase,
        tolerance,
    })
}

/// `|Div u(t)|` at every recorded time.
pub fn divergence_norm_series(record: &PathRecord) -> Vec<(f64, f64)> {
    record.rows.iter().map(|r| (r.t, r.l2_div_u)).collect()
}
