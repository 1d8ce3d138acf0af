//! Tensor Gauss-Legendre collocation grid with separable sine transforms.
//!
//! A velocity component with coefficient matrix `C[j][k]` (modes `1..=N`) has grid
//! values `S C Sᵀ`, where `S[q][j] = √2 sin(jπ x_q)`. Test-function projections
//! run the same tables transposed against weighted grid data.

use nalgebra::DMatrix;
use std::f64::consts::{PI, SQRT_2};

use super::gauss::gauss_legendre_unit;
use super::VelocityField;

#[derive(Clone, Debug)]
pub struct Grid {
    n_modes: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `√2 sin(jπx_q)`, Q × N
    sin: DMatrix<f64>,
    /// `d/dx √2 sin(jπx_q) = √2 jπ cos(jπx_q)`, Q × N
    dsin: DMatrix<f64>,
    /// outer product of weights, Q × Q
    weight2: DMatrix<f64>,
}

/// Grid values of a velocity field and its first derivatives, per component.
#[derive(Clone, Debug)]
pub struct GridField {
    pub value: [DMatrix<f64>; 2],
    pub dx: [DMatrix<f64>; 2],
    pub dy: [DMatrix<f64>; 2],
}

impl GridField {
    /// Pointwise divergence `∂₁u₁ + ∂₂u₂`.
    pub fn divergence(&self) -> DMatrix<f64> {
        &self.dx[0] + &self.dy[1]
    }

    /// Pointwise `(u·∇) v_d` where `self` is `u`.
    pub fn advect(&self, v: &GridField, d: usize) -> DMatrix<f64> {
        self.value[0].component_mul(&v.dx[d]) + self.value[1].component_mul(&v.dy[d])
    }
}

impl Grid {
    pub fn new(n_modes: usize, order: usize) -> Self {
        let (nodes, weights) = gauss_legendre_unit(order);
        let sin = DMatrix::from_fn(order, n_modes, |q, j| {
            SQRT_2 * ((j + 1) as f64 * PI * nodes[q]).sin()
        });
        let dsin = DMatrix::from_fn(order, n_modes, |q, j| {
            let w = (j + 1) as f64 * PI;
            SQRT_2 * w * (w * nodes[q]).cos()
        });
        let weight2 = DMatrix::from_fn(order, order, |q, r| weights[q] * weights[r]);
        Self {
            n_modes,
            nodes,
            weights,
            sin,
            dsin,
            weight2,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn component_matrix(&self, u: &VelocityField, d: usize) -> DMatrix<f64> {
        let n = self.n_modes;
        let block = &u.coeffs().as_slice()[d * n * n..(d + 1) * n * n];
        DMatrix::from_row_slice(n, n, block)
    }

    pub fn evaluate(&self, u: &VelocityField) -> GridField {
        assert_eq!(u.n_modes(), self.n_modes, "field/grid mode cutoff mismatch");
        let mut value: [DMatrix<f64>; 2] = Default::default();
        let mut dx: [DMatrix<f64>; 2] = Default::default();
        let mut dy: [DMatrix<f64>; 2] = Default::default();
        for d in 0..2 {
            let c = self.component_matrix(u, d);
            let cs = &c * self.sin.transpose();
            let cds = &c * self.dsin.transpose();
            value[d] = &self.sin * &cs;
            dx[d] = &self.dsin * &cs;
            dy[d] = &self.sin * cds;
        }
        GridField { value, dx, dy }
    }

    /// `∫ f` over the unit square for grid samples `f`.
    pub fn integrate(&self, f: &DMatrix<f64>) -> f64 {
        self.weight2.component_mul(f).sum()
    }

    /// `[∫ f φ_jk]` for scalar test functions `φ_jk = 2 sin(jπx) sin(kπy)`.
    pub fn project(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let fw = self.weight2.component_mul(f);
        self.sin.transpose() * fw * &self.sin
    }

    /// `[∫ f ∂₁φ_jk]`.
    pub fn project_dx(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let fw = self.weight2.component_mul(f);
        self.dsin.transpose() * fw * &self.sin
    }

    /// `[∫ f ∂₂φ_jk]`.
    pub fn project_dy(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let fw = self.weight2.component_mul(f);
        self.sin.transpose() * fw * &self.dsin
    }

    /// `(∫ |u|⁴)^{1/4}` with `|u|` the Euclidean length of the 2-vector.
    pub fn l4_norm(&self, u: &VelocityField) -> f64 {
        let g = self.evaluate(u);
        let sq = g.value[0].component_mul(&g.value[0]) + g.value[1].component_mul(&g.value[1]);
        self.integrate(&sq.component_mul(&sq)).max(0.0).powf(0.25)
    }
}
