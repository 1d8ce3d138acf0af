//! Stokes operator, the stabilized convection term and its trilinear form, and the
//! numerical checks of the functional inequalities these operators satisfy.

mod sampling;
mod verify;

pub use sampling::{random_field, FieldSampler};
pub use verify::{run_inequality_suite, CheckKind, InequalitySuite, LedgerRow, SuiteSummary};

use nalgebra::{DMatrix, DVector};
use std::ops::{Add, Sub};

use crate::spectral::{Component, Grid, GridField, Space, VelocityField};

/// Values `⟨F, eᵢ⟩` of a functional against every velocity basis function.
#[derive(Clone, Debug, PartialEq)]
pub struct DualVector {
    pub pairings: DVector<f64>,
}

impl DualVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            pairings: DVector::zeros(dim),
        }
    }

    pub fn len(&self) -> usize {
        self.pairings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairings.is_empty()
    }

    /// `⟨F, u⟩`.
    pub fn pair(&self, u: &VelocityField) -> f64 {
        self.pairings.dot(u.coeffs())
    }
}

impl Add for &DualVector {
    type Output = DualVector;
    fn add(self, rhs: &DualVector) -> DualVector {
        DualVector {
            pairings: &self.pairings + &rhs.pairings,
        }
    }
}

impl Sub for &DualVector {
    type Output = DualVector;
    fn sub(self, rhs: &DualVector) -> DualVector {
        DualVector {
            pairings: &self.pairings - &rhs.pairings,
        }
    }
}

/// `⟨Au, eᵢ⟩ = ν π²(jᵢ² + kᵢ²) uᵢ` for `A = −νΔ`.
pub fn stokes_apply(space: &Space, u: &VelocityField, nu: f64) -> DualVector {
    DualVector {
        pairings: u.coeffs().component_mul(space.stiffness()) * nu,
    }
}

/// Pseudo-spectral evaluator for `b̂` and `B̂` on a fixed collocation grid.
#[derive(Clone, Debug)]
pub struct Advection {
    grid: Grid,
}

impl Advection {
    pub fn new(n_modes: usize, quad_order: usize) -> Self {
        Self {
            grid: Grid::new(n_modes, quad_order),
        }
    }

    pub fn for_space(space: &Space) -> Self {
        Self::new(space.n_modes(), space.default_quad_order())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `b̂(u,v,w) = ½ Σᵢⱼ ∫ [uᵢ ∂ᵢvⱼ wⱼ − uᵢ ∂ᵢwⱼ vⱼ]`.
    pub fn trilinear(&self, u: &VelocityField, v: &VelocityField, w: &VelocityField) -> f64 {
        let (gu, gv, gw) = (
            self.grid.evaluate(u),
            self.grid.evaluate(v),
            self.grid.evaluate(w),
        );
        self.trilinear_grid(&gu, &gv, &gw)
    }

    pub fn trilinear_grid(&self, u: &GridField, v: &GridField, w: &GridField) -> f64 {
        let mut acc = DMatrix::zeros(self.grid.order(), self.grid.order());
        for d in 0..2 {
            acc += u.advect(v, d).component_mul(&w.value[d]);
            acc -= u.advect(w, d).component_mul(&v.value[d]);
        }
        0.5 * self.grid.integrate(&acc)
    }

    /// `B̂(u) = [(u·∇) + ½ Div u] u` as pairings against the basis.
    pub fn bhat(&self, u: &VelocityField) -> DualVector {
        let g = self.grid.evaluate(u);
        self.bhat_pair_grid(&g, &g)
    }

    /// `B̂(u,v)` as pairings: `⟨B̂(u,v), eᵢ⟩ = b̂(u, v, eᵢ)`.
    pub fn bhat_pair(&self, u: &VelocityField, v: &VelocityField) -> DualVector {
        self.bhat_pair_grid(&self.grid.evaluate(u), &self.grid.evaluate(v))
    }

    fn bhat_pair_grid(&self, u: &GridField, v: &GridField) -> DualVector {
        let n = self.grid.n_modes();
        let mut pairings = DVector::zeros(2 * n * n);
        for d in 0..2 {
            let conv = self.grid.project(&u.advect(v, d));
            let flux_x = self.grid.project_dx(&u.value[0].component_mul(&v.value[d]));
            let flux_y = self.grid.project_dy(&u.value[1].component_mul(&v.value[d]));
            let block = (conv - flux_x - flux_y) * 0.5;
            for j in 0..n {
                for k in 0..n {
                    pairings[d * n * n + j * n + k] = block[(j, k)];
                }
            }
        }
        DualVector { pairings }
    }

    pub fn l4_norm(&self, u: &VelocityField) -> f64 {
        self.grid.l4_norm(u)
    }

    /// `‖φψ‖²_{L²}` and `‖φ ∂₁φ‖_{L¹} ‖ψ ∂₂ψ‖_{L¹}` for scalar components `φ = u_a`, `ψ = u_b`.
    pub fn product_inequality(&self, u: &VelocityField, a: usize, b: usize) -> (f64, f64) {
        let g = self.grid.evaluate(u);
        let (phi, psi) = (&g.value[a], &g.value[b]);
        let lhs = self.grid.integrate(&phi.component_mul(psi).map(|x| x * x));
        let l1_phi = self.grid.integrate(&phi.component_mul(&g.dx[a]).map(f64::abs));
        let l1_psi = self.grid.integrate(&psi.component_mul(&g.dy[b]).map(f64::abs));
        (lhs, l1_phi * l1_psi)
    }
}

/// Product of H¹₀ norms, the reference magnitude for round-off tolerances.
pub fn h1_scale(fields: &[&VelocityField]) -> f64 {
    fields.iter().map(|f| f.h10_norm()).product()
}

/// Ladyzhenskaya's inequality `‖φ‖⁴_{L⁴} ≤ 2‖φ‖²_{L²}‖∇φ‖²_{L²}` for each scalar component.
pub fn check_ladyzhenskaya(adv: &Advection, phi: &VelocityField) -> [(f64, f64); 2] {
    let g = adv.grid.evaluate(phi);
    let mut out = [(0.0, 0.0); 2];
    for (d, slot) in out.iter_mut().enumerate() {
        let v = &g.value[d];
        let lhs = adv.grid.integrate(&v.map(|x| x.powi(4)));
        let comp = phi.component(if d == 0 { Component::X } else { Component::Y });
        *slot = (lhs, 2.0 * comp.l2_norm().powi(2) * comp.h10_norm_sq());
    }
    out
}

/// `|⟨B̂(u), w⟩| ≤ 2‖u‖^{3/2}|u|^{1/2}‖w‖_{L⁴}`; returns `(lhs, rhs)`.
pub fn check_bhat_bound(adv: &Advection, u: &VelocityField, w: &VelocityField) -> (f64, f64) {
    let lhs = adv.trilinear(u, u, w).abs();
    let rhs = 2.0 * u.h10_norm().powf(1.5) * u.l2_norm().sqrt() * adv.l4_norm(w);
    (lhs, rhs)
}

/// `|⟨B̂(u) − B̂(v), u − v⟩| ≤ ν/2 ‖u−v‖² + 27/(2ν³) |u−v|² ‖v‖⁴_{L⁴}`; returns `(lhs, rhs)`.
pub fn check_bhat_difference_bound(
    adv: &Advection,
    u: &VelocityField,
    v: &VelocityField,
    nu: f64,
) -> (f64, f64) {
    let w = u - v;
    let lhs = (adv.trilinear(u, u, &w) - adv.trilinear(v, v, &w)).abs();
    let rhs = 0.5 * nu * w.h10_norm_sq()
        + 27.0 / (2.0 * nu.powi(3)) * w.l2_norm().powi(2) * adv.l4_norm(v).powi(4);
    (lhs, rhs)
}

/// Terms of the local monotonicity inequality on an L⁴ ball.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityReport {
    pub margin: f64,
    /// `⟨Aw,w⟩`, `⟨B̂(u)−B̂(v), w⟩`, `(27r⁴/2ν³)|w|²`
    pub lhs_terms: (f64, f64, f64),
    /// `(ν/2)‖w‖²`
    pub rhs: f64,
    pub r: f64,
    pub in_ball: bool,
}

impl MonotonicityReport {
    pub fn recomputed_margin(&self) -> f64 {
        self.lhs_terms.0 + self.lhs_terms.1 + self.lhs_terms.2 - self.rhs
    }
}

pub fn monotonicity_margin(
    space: &Space,
    adv: &Advection,
    u: &VelocityField,
    v: &VelocityField,
    nu: f64,
    r: f64,
) -> MonotonicityReport {
    let w = u - v;
    let aww = stokes_apply(space, &w, nu).pair(&w);
    let diff = (&adv.bhat(u) - &adv.bhat(v)).pair(&w);
    let shift = 27.0 * r.powi(4) / (2.0 * nu.powi(3)) * w.l2_norm().powi(2);
    let rhs = 0.5 * nu * w.h10_norm_sq();
    let lhs_terms = (aww, diff, shift);
    MonotonicityReport {
        margin: aww + diff + shift - rhs,
        lhs_terms,
        rhs,
        r,
        in_ball: adv.l4_norm(v) <= r,
    }
}

/// Residual of `⟨(u·∇)v, w⟩ + ⟨(Div u)w, v⟩ + ⟨(u·∇)w, v⟩ = 0`.
pub fn check_ibp_identity(
    adv: &Advection,
    u: &VelocityField,
    v: &VelocityField,
    w: &VelocityField,
) -> f64 {
    let g = &adv.grid;
    let (gu, gv, gw) = (g.evaluate(u), g.evaluate(v), g.evaluate(w));
    let div = gu.divergence();
    let mut acc = DMatrix::zeros(g.order(), g.order());
    for d in 0..2 {
        acc += gu.advect(&gv, d).component_mul(&gw.value[d]);
        acc += div.component_mul(&gw.value[d]).component_mul(&gv.value[d]);
        acc += gu.advect(&gw, d).component_mul(&gv.value[d]);
    }
    g.integrate(&acc)
}
