//! Brute-force reference integration for tests.
//!
//! Tensor Gauss-Legendre rules here come from the Golub-Welsch eigenvalue method
//! (not the Newton iteration used by the collocation grid), and every field is
//! evaluated point by point from its mode sum with analytic derivatives. Nothing in
//! this module calls the separable transforms in [`crate::spectral`].

use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::spectral::{PressureField, VelocityField};

/// 1-D Gauss-Legendre rule on (0, 1).
#[derive(Clone, Debug)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::config("oracle rule order must be at least 2"));
        }
        let jacobi = DMatrix::from_fn(order, order, |a, b| {
            if a.abs_diff(b) == 1 {
                let k = a.max(b) as f64;
                k / (4.0 * k * k - 1.0).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (0.5 * (eig.eigenvalues[i] + 1.0), v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.nodes.iter().zip(&self.weights).flat_map(move |(&x, &wx)| {
            self.nodes
                .iter()
                .zip(&self.weights)
                .map(move |(&y, &wy)| (x, y, wx * wy))
        })
    }
}

/// Tensor-product quadrature of `f` over the unit square.
pub fn oracle_integrate<F: Fn(f64, f64) -> f64>(f: F, rule: &QuadRule) -> f64 {
    rule.points().map(|(x, y, w)| w * f(x, y)).sum()
}

/// Value and gradient of a velocity field at one point: `[u₁, u₂]`, `[[∂₁u₁, ∂₂u₁], [∂₁u₂, ∂₂u₂]]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct PointJet {
    pub value: [f64; 2],
    pub grad: [[f64; 2]; 2],
}

impl PointJet {
    pub fn divergence(&self) -> f64 {
        self.grad[0][0] + self.grad[1][1]
    }
}

fn mode_of(n: usize, i: usize) -> (usize, usize, usize) {
    let d = i / (n * n);
    let r = i % (n * n);
    (d, r / n + 1, r % n + 1)
}

/// Direct mode-sum evaluation of a velocity field and its gradient.
pub fn velocity_jet(u: &VelocityField, x: f64, y: f64) -> PointJet {
    let n = u.n_modes();
    let mut jet = PointJet::default();
    for (i, &c) in u.coeffs().iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let (d, j, k) = mode_of(n, i);
        let (a, b) = (j as f64 * PI, k as f64 * PI);
        jet.value[d] += c * 2.0 * (a * x).sin() * (b * y).sin();
        jet.grad[d][0] += c * 2.0 * a * (a * x).cos() * (b * y).sin();
        jet.grad[d][1] += c * 2.0 * b * (a * x).sin() * (b * y).cos();
    }
    jet
}

/// Direct evaluation of a pressure field and its gradient: `(p, [∂₁p, ∂₂p])`.
pub fn pressure_jet(p: &PressureField, x: f64, y: f64) -> (f64, [f64; 2]) {
    let n = p.n_modes();
    let mut val = 0.0;
    let mut grad = [0.0; 2];
    for (i, &c) in p.coeffs().iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let (fam, j, k) = mode_of(n, i);
        let (a, b) = (j as f64 * PI, k as f64 * PI);
        if fam == 0 {
            val += c * 2.0 * (a * x).cos() * (b * y).sin();
            grad[0] -= c * 2.0 * a * (a * x).sin() * (b * y).sin();
            grad[1] += c * 2.0 * b * (a * x).cos() * (b * y).cos();
        } else {
            val += c * 2.0 * (a * x).sin() * (b * y).cos();
            grad[0] += c * 2.0 * a * (a * x).cos() * (b * y).cos();
            grad[1] -= c * 2.0 * b * (a * x).sin() * (b * y).sin();
        }
    }
    (val, grad)
}

/// `∫|u|²`.
pub fn oracle_l2_sq(u: &VelocityField, rule: &QuadRule) -> f64 {
    oracle_integrate(
        |x, y| {
            let j = velocity_jet(u, x, y);
            j.value[0] * j.value[0] + j.value[1] * j.value[1]
        },
        rule,
    )
}

/// `∫ ∇u : ∇v`.
pub fn oracle_h1_inner(u: &VelocityField, v: &VelocityField, rule: &QuadRule) -> f64 {
    oracle_integrate(
        |x, y| {
            let a = velocity_jet(u, x, y);
            let b = velocity_jet(v, x, y);
            let mut s = 0.0;
            for d in 0..2 {
                for i in 0..2 {
                    s += a.grad[d][i] * b.grad[d][i];
                }
            }
            s
        },
        rule,
    )
}

/// `∫|u|⁴`.
pub fn oracle_l4_pow4(u: &VelocityField, rule: &QuadRule) -> f64 {
    oracle_integrate(
        |x, y| {
            let j = velocity_jet(u, x, y);
            let s = j.value[0] * j.value[0] + j.value[1] * j.value[1];
            s * s
        },
        rule,
    )
}

/// `∫ p q`.
pub fn oracle_pressure_inner(p: &PressureField, q: &PressureField, rule: &QuadRule) -> f64 {
    oracle_integrate(|x, y| pressure_jet(p, x, y).0 * pressure_jet(q, x, y).0, rule)
}

/// `∫ p Div w`.
pub fn oracle_pressure_div(p: &PressureField, w: &VelocityField, rule: &QuadRule) -> f64 {
    oracle_integrate(
        |x, y| pressure_jet(p, x, y).0 * velocity_jet(w, x, y).divergence(),
        rule,
    )
}

/// `∫ ∇p · w`, differentiating `p` directly.
pub fn oracle_grad_pressure_dot(p: &PressureField, w: &VelocityField, rule: &QuadRule) -> f64 {
    oracle_integrate(
        |x, y| {
            let (_, g) = pressure_jet(p, x, y);
            let v = velocity_jet(w, x, y);
            g[0] * v.value[0] + g[1] * v.value[1]
        },
        rule,
    )
}

/// `∫ (Div u)²`.
pub fn oracle_div_sq(u: &VelocityField, rule: &QuadRule) -> f64 {
    oracle_integrate(
        |x, y| {
            let d = velocity_jet(u, x, y).divergence();
            d * d
        },
        rule,
    )
}

/// `⟨(u·∇)v, w⟩ = Σᵢⱼ ∫ uᵢ ∂ᵢvⱼ wⱼ`.
pub fn oracle_convection(
    u: &VelocityField,
    v: &VelocityField,
    w: &VelocityField,
    rule: &QuadRule,
) -> f64 {
    oracle_integrate(
        |x, y| {
            let (a, b, c) = (velocity_jet(u, x, y), velocity_jet(v, x, y), velocity_jet(w, x, y));
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    s += a.value[i] * b.grad[j][i] * c.value[j];
                }
            }
            s
        },
        rule,
    )
}

/// `⟨(Div u) w, v⟩`.
pub fn oracle_div_weighted(
    u: &VelocityField,
    w: &VelocityField,
    v: &VelocityField,
    rule: &QuadRule,
) -> f64 {
    oracle_integrate(
        |x, y| {
            let (a, b, c) = (velocity_jet(u, x, y), velocity_jet(w, x, y), velocity_jet(v, x, y));
            a.divergence() * (b.value[0] * c.value[0] + b.value[1] * c.value[1])
        },
        rule,
    )
}

/// `b̂(u,v,w) = ½ Σᵢⱼ ∫ [uᵢ ∂ᵢvⱼ wⱼ − uᵢ ∂ᵢwⱼ vⱼ]`, both sums quadrated separately.
pub fn oracle_trilinear(
    u: &VelocityField,
    v: &VelocityField,
    w: &VelocityField,
    rule: &QuadRule,
) -> f64 {
    0.5 * (oracle_convection(u, v, w, rule) - oracle_convection(u, w, v, rule))
}

/// `∫ |φ ∂ᵢφ|` for scalar component `comp` of `u` and derivative direction `dir`.
pub fn oracle_l1_product(u: &VelocityField, comp: usize, dir: usize, rule: &QuadRule) -> f64 {
    oracle_integrate(
        |x, y| {
            let j = velocity_jet(u, x, y);
            (j.value[comp] * j.grad[comp][dir]).abs()
        },
        rule,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_weights_and_exactness() {
        for order in [2usize, 7, 24, 64] {
            let r = QuadRule::new(order).unwrap();
            let s: f64 = r.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-13);
            assert!(r.weights.iter().all(|w| *w > 0.0));
            for deg in 0..(2 * order).min(40) {
                let q: f64 = r
                    .nodes
                    .iter()
                    .zip(&r.weights)
                    .map(|(x, w)| w * x.powi(deg as i32))
                    .sum();
                assert!((q - 1.0 / (deg as f64 + 1.0)).abs() < 1e-13, "order={order} deg={deg}");
            }
        }
        assert!(QuadRule::new(1).is_err());
    }

    #[test]
    fn integrate_examples() {
        let r2 = QuadRule::new(2).unwrap();
        assert!((oracle_integrate(|_, _| 1.0, &r2) - 1.0).abs() < 1e-15);
        assert!((oracle_integrate(|x, y| x * x * y * y, &r2) - 1.0 / 9.0).abs() < 1e-15);
        let r16 = QuadRule::new(16).unwrap();
        let s = oracle_integrate(
            |x, y| ((PI * x).sin() * (PI * y).sin()).powi(2),
            &r16,
        );
        assert!((s - 0.25).abs() < 1e-12);
    }

    #[test]
    fn trilinear_zero_and_swap() {
        let r = QuadRule::new(20).unwrap();
        let n = 2;
        let u = VelocityField::from_vec(n, (0..8).map(|i| (i as f64).cos()).collect()).unwrap();
        let v = VelocityField::from_vec(n, (0..8).map(|i| (i as f64 * 1.3).sin()).collect()).unwrap();
        let w = VelocityField::from_vec(n, (0..8).map(|i| 0.1 * i as f64 - 0.3).collect()).unwrap();
        let z = VelocityField::zeros(n);
        assert_eq!(oracle_trilinear(&z, &v, &w, &r), 0.0);
        assert_eq!(oracle_trilinear(&u, &z, &w, &r), 0.0);
        assert_eq!(oracle_trilinear(&u, &v, &z, &r), 0.0);
        let a = oracle_trilinear(&u, &v, &w, &r);
        let b = oracle_trilinear(&u, &w, &v, &r);
        assert_eq!(a, -b);
    }
}
