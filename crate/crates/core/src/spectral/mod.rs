//! Discrete velocity and pressure spaces on the unit square.
//!
//! Velocity modes are `e = 2 sin(jπx₁) sin(kπx₂) ê_d`, `1 ≤ j, k ≤ N`, which are
//! L²-orthonormal and vanish on the boundary. Pressure modes are the two families
//! `2 cos(jπx₁) sin(kπx₂)` and `2 sin(jπx₁) cos(kπx₂)`; together they span the
//! divergence image of the velocity space but are not mutually orthogonal, so the
//! pressure space carries an explicit Gram matrix.
//!
//! Both enumerations use the same order (component/family, then `j`, then `k`), so
//! the divergence map is diagonal: velocity mode `i` lands on pressure mode `i`.

mod gauss;
mod grid;

pub use gauss::gauss_legendre_unit;
pub use grid::{Grid, GridField};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Default hard cap on the mode cutoff.
pub const MAX_MODES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    X,
    Y,
}

impl Component {
    pub fn offset(self) -> usize {
        match self {
            Component::X => 0,
            Component::Y => 1,
        }
    }

    /// 1-based component number as used in configuration files.
    pub fn from_number(d: usize) -> Option<Self> {
        match d {
            1 => Some(Component::X),
            2 => Some(Component::Y),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PressureFamily {
    /// `2 cos(jπx₁) sin(kπx₂)`, the image of `∂₁` on x-velocity modes.
    CosSin,
    /// `2 sin(jπx₁) cos(kπx₂)`, the image of `∂₂` on y-velocity modes.
    SinCos,
}

/// Index of a velocity basis function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VelocityMode {
    pub component: Component,
    pub j: usize,
    pub k: usize,
}

impl VelocityMode {
    /// Eigenvalue of `-Δ` for this mode.
    pub fn stiffness(&self) -> f64 {
        PI * PI * (self.j * self.j + self.k * self.k) as f64
    }

    /// Factor carrying this mode onto its pressure mode under `Div`.
    pub fn divergence_factor(&self) -> f64 {
        match self.component {
            Component::X => self.j as f64 * PI,
            Component::Y => self.k as f64 * PI,
        }
    }
}

/// Index of a pressure basis function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PressureMode {
    pub family: PressureFamily,
    pub j: usize,
    pub k: usize,
}

impl PressureMode {
    /// L² inner product of two pressure basis functions.
    pub fn inner(&self, other: &PressureMode) -> f64 {
        if self.family == other.family {
            if self.j == other.j && self.k == other.k {
                1.0
            } else {
                0.0
            }
        } else {
            let (c, s) = if self.family == PressureFamily::CosSin {
                (self, other)
            } else {
                (other, self)
            };
            // ∫ 2cos(c.j πx) sin(s.j πx) dx · ∫ 2sin(c.k πy) cos(s.k πy) dy
            cos_sin_integral(c.j, s.j) * cos_sin_integral(s.k, c.k)
        }
    }
}

impl fmt::Display for VelocityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.j, self.k, self.component.offset() + 1)
    }
}

/// `∫₀¹ 2 cos(aπx) sin(bπx) dx` for integers `a ≥ 0`, `b ≥ 1`.
pub fn cos_sin_integral(a: usize, b: usize) -> f64 {
    if (a + b).is_multiple_of(2) {
        return 0.0;
    }
    let (a, b) = (a as f64, b as f64);
    4.0 * b / (PI * (b * b - a * a))
}

/// Gram matrix of the pressure basis with its Cholesky factor.
#[derive(Clone, Debug)]
pub struct PressureGram {
    matrix: DMatrix<f64>,
    cholesky: Cholesky<f64, Dyn>,
}

impl PressureGram {
    fn assemble(modes: &[PressureMode]) -> Result<Self> {
        let dim = modes.len();
        let matrix = DMatrix::from_fn(dim, dim, |a, b| modes[a].inner(&modes[b]));
        let cholesky = Cholesky::new(matrix.clone())
            .ok_or_else(|| Error::Factorization("pressure Gram is not positive definite".into()))?;
        Ok(Self { matrix, cholesky })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.cholesky
    }

    /// Lower-triangular `L` with `Gram = L Lᵀ`.
    pub fn factor(&self) -> DMatrix<f64> {
        self.cholesky.l()
    }

    pub fn inner(&self, p: &DVector<f64>, q: &DVector<f64>) -> f64 {
        p.dot(&(&self.matrix * q))
    }
}

/// The velocity and pressure enumerations for a mode cutoff, with the pressure Gram.
#[derive(Clone, Debug)]
pub struct Space {
    n_modes: usize,
    velocity: Vec<VelocityMode>,
    pressure: Vec<PressureMode>,
    gram: PressureGram,
    stiffness: DVector<f64>,
    div_factor: DVector<f64>,
}

impl Space {
    pub fn new(n_modes: usize) -> Result<Self> {
        Self::with_cap(n_modes, MAX_MODES)
    }

    pub fn with_cap(n_modes: usize, cap: usize) -> Result<Self> {
        if n_modes == 0 || n_modes > cap {
            return Err(Error::config(format!(
                "mode cutoff must lie in 1..={cap}, got {n_modes}"
            )));
        }
        let mut velocity = Vec::with_capacity(2 * n_modes * n_modes);
        let mut pressure = Vec::with_capacity(2 * n_modes * n_modes);
        for (component, family) in [
            (Component::X, PressureFamily::CosSin),
            (Component::Y, PressureFamily::SinCos),
        ] {
            for j in 1..=n_modes {
                for k in 1..=n_modes {
                    velocity.push(VelocityMode { component, j, k });
                    pressure.push(PressureMode { family, j, k });
                }
            }
        }
        let gram = PressureGram::assemble(&pressure)?;
        let stiffness = DVector::from_iterator(velocity.len(), velocity.iter().map(|m| m.stiffness()));
        let div_factor =
            DVector::from_iterator(velocity.len(), velocity.iter().map(|m| m.divergence_factor()));
        Ok(Self {
            n_modes,
            velocity,
            pressure,
            gram,
            stiffness,
            div_factor,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Number of velocity (and pressure) basis functions, `2N²`.
    pub fn dim(&self) -> usize {
        self.velocity.len()
    }

    pub fn velocity_modes(&self) -> &[VelocityMode] {
        &self.velocity
    }

    pub fn pressure_modes(&self) -> &[PressureMode] {
        &self.pressure
    }

    pub fn gram(&self) -> &PressureGram {
        &self.gram
    }

    /// Diagonal of the H¹₀ stiffness form, `π²(j² + k²)`.
    pub fn stiffness(&self) -> &DVector<f64> {
        &self.stiffness
    }

    /// Diagonal of the divergence coefficient map.
    pub fn divergence_factors(&self) -> &DVector<f64> {
        &self.div_factor
    }

    /// Position of a velocity mode in the enumeration, if within the cutoff.
    pub fn velocity_index(&self, component: Component, j: usize, k: usize) -> Option<usize> {
        index_of(self.n_modes, component.offset(), j, k)
    }

    pub fn pressure_index(&self, family: PressureFamily, j: usize, k: usize) -> Option<usize> {
        let f = match family {
            PressureFamily::CosSin => 0,
            PressureFamily::SinCos => 1,
        };
        index_of(self.n_modes, f, j, k)
    }

    pub fn zero_velocity(&self) -> VelocityField {
        VelocityField::zeros(self.n_modes)
    }

    pub fn zero_pressure(&self) -> PressureField {
        PressureField::zeros(self.n_modes)
    }

    pub fn unit_velocity(&self, i: usize) -> VelocityField {
        let mut u = self.zero_velocity();
        u.coeffs[i] = 1.0;
        u
    }

    /// Exact coefficient image of `Div u`.
    pub fn divergence(&self, u: &VelocityField) -> PressureField {
        debug_assert_eq!(u.n_modes, self.n_modes);
        PressureField {
            n_modes: self.n_modes,
            coeffs: u.coeffs.component_mul(&self.div_factor),
        }
    }

    /// `⟨∇p, eᵢ⟩ = -⟨p, Div eᵢ⟩` through the Gram pairing.
    pub fn pressure_gradient_pairing(&self, p: &PressureField, i: usize) -> f64 {
        let row = self.gram.matrix.row(i);
        -self.div_factor[i] * row.dot(&p.coeffs.transpose())
    }

    /// All pairings `⟨∇p, eᵢ⟩` at once.
    pub fn pressure_gradient(&self, p: &PressureField) -> DVector<f64> {
        -(&self.gram.matrix * &p.coeffs).component_mul(&self.div_factor)
    }

    /// The grad-div operator `DᵀGD`, i.e. `⟨Div eᵢ, Div eⱼ⟩`.
    pub fn grad_div(&self) -> DMatrix<f64> {
        let d = &self.div_factor;
        DMatrix::from_fn(self.dim(), self.dim(), |a, b| d[a] * self.gram.matrix[(a, b)] * d[b])
    }

    pub fn pressure_l2_norm(&self, p: &PressureField) -> f64 {
        self.gram.inner(&p.coeffs, &p.coeffs).max(0.0).sqrt()
    }

    /// Default collocation order for quartic and trilinear integrands.
    pub fn default_quad_order(&self) -> usize {
        default_quad_order(self.n_modes)
    }
}

pub fn default_quad_order(n_modes: usize) -> usize {
    4 * n_modes + 8
}

fn index_of(n: usize, block: usize, j: usize, k: usize) -> Option<usize> {
    if (1..=n).contains(&j) && (1..=n).contains(&k) {
        Some(block * n * n + (j - 1) * n + (k - 1))
    } else {
        None
    }
}

/// Coefficient vector over the orthonormal vector sine basis.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    n_modes: usize,
    coeffs: DVector<f64>,
}

impl VelocityField {
    pub fn zeros(n_modes: usize) -> Self {
        Self {
            n_modes,
            coeffs: DVector::zeros(2 * n_modes * n_modes),
        }
    }

    pub fn from_coeffs(n_modes: usize, coeffs: DVector<f64>) -> Result<Self> {
        let expected = 2 * n_modes * n_modes;
        if coeffs.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: coeffs.len(),
            });
        }
        Ok(Self { n_modes, coeffs })
    }

    pub fn from_vec(n_modes: usize, coeffs: Vec<f64>) -> Result<Self> {
        Self::from_coeffs(n_modes, DVector::from_vec(coeffs))
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut DVector<f64> {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> DVector<f64> {
        self.coeffs
    }

    /// `|u|`, the L² norm; Parseval makes this the Euclidean coefficient norm.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.norm()
    }

    /// `‖u‖ = (∫|∇u|²)^{1/2}`, diagonal in the sine basis.
    pub fn h10_norm(&self) -> f64 {
        self.h10_norm_sq().sqrt()
    }

    pub fn h10_norm_sq(&self) -> f64 {
        let n = self.n_modes;
        let mut s = 0.0;
        for (i, c) in self.coeffs.iter().enumerate() {
            let r = i % (n * n);
            let (j, k) = (r / n + 1, r % n + 1);
            s += PI * PI * (j * j + k * k) as f64 * c * c;
        }
        s
    }

    /// `(∫|u|⁴)^{1/4}` by tensor Gauss-Legendre quadrature of the given order.
    pub fn l4_norm(&self, quad_order: usize) -> f64 {
        Grid::new(self.n_modes, quad_order).l4_norm(self)
    }

    /// Restriction of one component, as the field with the other component zeroed.
    pub fn component(&self, c: Component) -> VelocityField {
        let n2 = self.n_modes * self.n_modes;
        let mut out = VelocityField::zeros(self.n_modes);
        let o = c.offset() * n2;
        out.coeffs
            .rows_mut(o, n2)
            .copy_from(&self.coeffs.rows(o, n2));
        out
    }

    pub fn dot(&self, other: &VelocityField) -> f64 {
        self.coeffs.dot(&other.coeffs)
    }

    /// Pointwise evaluation at `points` in `[0,1]²`.
    pub fn synthesize(&self, points: &[(f64, f64)]) -> Vec<[f64; 2]> {
        let n = self.n_modes;
        let c = self.coeffs.as_slice();
        let mut sx = vec![0.0; n];
        let mut sy = vec![0.0; n];
        points
            .iter()
            .map(|&(x, y)| {
                for j in 0..n {
                    sx[j] = 2.0 * ((j + 1) as f64 * PI * x).sin();
                    sy[j] = ((j + 1) as f64 * PI * y).sin();
                }
                let mut out = [0.0; 2];
                for (d, o) in out.iter_mut().enumerate() {
                    let block = &c[d * n * n..(d + 1) * n * n];
                    for j in 0..n {
                        let row = &block[j * n..(j + 1) * n];
                        let inner: f64 = row.iter().zip(&sy).map(|(a, b)| a * b).sum();
                        *o += sx[j] * inner;
                    }
                }
                out
            })
            .collect()
    }
}

/// Coefficient vector over the two pressure families; norms need the [`PressureGram`].
#[derive(Clone, Debug, PartialEq)]
pub struct PressureField {
    n_modes: usize,
    coeffs: DVector<f64>,
}

impl PressureField {
    pub fn zeros(n_modes: usize) -> Self {
        Self {
            n_modes,
            coeffs: DVector::zeros(2 * n_modes * n_modes),
        }
    }

    pub fn from_coeffs(n_modes: usize, coeffs: DVector<f64>) -> Result<Self> {
        let expected = 2 * n_modes * n_modes;
        if coeffs.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: coeffs.len(),
            });
        }
        Ok(Self { n_modes, coeffs })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut DVector<f64> {
        &mut self.coeffs
    }
}

macro_rules! field_arith {
    ($t:ident) => {
        impl Add for &$t {
            type Output = $t;
            fn add(self, rhs: &$t) -> $t {
                debug_assert_eq!(self.n_modes, rhs.n_modes);
                $t {
                    n_modes: self.n_modes,
                    coeffs: &self.coeffs + &rhs.coeffs,
                }
            }
        }

        impl Sub for &$t {
            type Output = $t;
            fn sub(self, rhs: &$t) -> $t {
                debug_assert_eq!(self.n_modes, rhs.n_modes);
                $t {
                    n_modes: self.n_modes,
                    coeffs: &self.coeffs - &rhs.coeffs,
                }
            }
        }

        impl Mul<f64> for &$t {
            type Output = $t;
            fn mul(self, s: f64) -> $t {
                $t {
                    n_modes: self.n_modes,
                    coeffs: &self.coeffs * s,
                }
            }
        }

        impl Neg for &$t {
            type Output = $t;
            fn neg(self) -> $t {
                $t {
                    n_modes: self.n_modes,
                    coeffs: -&self.coeffs,
                }
            }
        }
    };
}

field_arith!(VelocityField);
field_arith!(PressureField);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_sizes() {
        for (n, dim) in [(1usize, 2usize), (2, 8), (4, 32)] {
            let s = Space::new(n).unwrap();
            assert_eq!(s.dim(), dim);
            assert_eq!(s.pressure_modes().len(), dim);
        }
    }

    #[test]
    fn cutoff_bounds_rejected() {
        assert!(matches!(Space::new(0), Err(Error::InvalidConfig(_))));
        assert!(matches!(Space::new(65), Err(Error::InvalidConfig(_))));
        assert!(Space::with_cap(5, 4).is_err());
    }

    #[test]
    fn enumeration_order_is_component_then_j_then_k() {
        let s = Space::new(3).unwrap();
        let m = s.velocity_modes();
        assert_eq!(m[0], VelocityMode { component: Component::X, j: 1, k: 1 });
        assert_eq!(m[1], VelocityMode { component: Component::X, j: 1, k: 2 });
        assert_eq!(m[3], VelocityMode { component: Component::X, j: 2, k: 1 });
        assert_eq!(m[9], VelocityMode { component: Component::Y, j: 1, k: 1 });
        assert_eq!(s.velocity_index(Component::Y, 2, 3), Some(9 + 5));
        assert_eq!(s.velocity_index(Component::Y, 4, 1), None);
    }

    #[test]
    fn gram_diagonal_is_one() {
        let s = Space::new(2).unwrap();
        for i in 0..s.dim() {
            assert_eq!(s.gram().matrix()[(i, i)], 1.0);
        }
    }

    #[test]
    fn gram_cholesky_reconstructs() {
        let s = Space::new(8).unwrap();
        let l = s.gram().factor();
        let g = s.gram().matrix();
        let err = (&l * l.transpose() - g).norm() / g.norm();
        assert!(err <= 1e-12, "{err}");
    }

    #[test]
    fn parseval_example() {
        let mut u = VelocityField::zeros(2);
        u.coeffs_mut()[0] = 3.0;
        u.coeffs_mut()[5] = 4.0;
        assert_eq!(u.l2_norm(), 5.0);
        assert_eq!(VelocityField::zeros(3).l2_norm(), 0.0);
    }

    #[test]
    fn h10_examples() {
        let s = Space::new(3).unwrap();
        let i = s.velocity_index(Component::X, 1, 1).unwrap();
        assert!((s.unit_velocity(i).h10_norm() - PI * 2f64.sqrt()).abs() < 1e-14);
        let i = s.velocity_index(Component::Y, 2, 1).unwrap();
        assert!((s.unit_velocity(i).h10_norm() - PI * 5f64.sqrt()).abs() < 1e-14);
        assert_eq!(s.zero_velocity().h10_norm(), 0.0);
    }

    #[test]
    fn l4_single_mode() {
        let s = Space::new(2).unwrap();
        let u = s.unit_velocity(0);
        let expected = 1.5f64.sqrt();
        assert!((u.l4_norm(s.default_quad_order()) - expected).abs() < 1e-13);
        assert_eq!(s.zero_velocity().l4_norm(16), 0.0);
    }

    #[test]
    fn divergence_maps_x_mode_to_cos_sin() {
        let s = Space::new(3).unwrap();
        let i = s.velocity_index(Component::X, 1, 2).unwrap();
        let p = s.divergence(&s.unit_velocity(i));
        let target = s.pressure_index(PressureFamily::CosSin, 1, 2).unwrap();
        for (a, c) in p.coeffs().iter().enumerate() {
            if a == target {
                assert!((c - PI).abs() < 1e-15);
            } else {
                assert_eq!(*c, 0.0);
            }
        }
        assert_eq!(s.divergence(&s.zero_velocity()), s.zero_pressure());
    }

    #[test]
    fn synthesize_examples() {
        let s = Space::new(3).unwrap();
        let u = s.unit_velocity(0);
        let v = u.synthesize(&[(0.5, 0.5)]);
        assert!((v[0][0] - 2.0).abs() < 1e-15 && v[0][1] == 0.0);
        let mut w = s.zero_velocity();
        for (i, c) in w.coeffs_mut().iter_mut().enumerate() {
            *c = (i as f64 * 0.37).sin();
        }
        for p in w.synthesize(&[(0.0, 0.3), (1.0, 0.7), (0.2, 0.0), (0.9, 1.0)]) {
            assert!(p[0].abs() < 1e-14 && p[1].abs() < 1e-14);
        }
    }

    #[test]
    fn pressure_gradient_zero_and_consistency() {
        let s = Space::new(2).unwrap();
        let zero = s.zero_pressure();
        for i in 0..s.dim() {
            assert_eq!(s.pressure_gradient_pairing(&zero, i), 0.0);
        }
        let mut p = s.zero_pressure();
        for (i, c) in p.coeffs_mut().iter_mut().enumerate() {
            *c = 1.0 / (1.0 + i as f64);
        }
        let all = s.pressure_gradient(&p);
        for i in 0..s.dim() {
            assert!((all[i] - s.pressure_gradient_pairing(&p, i)).abs() < 1e-14);
        }
    }

    #[test]
    fn pressure_gradient_of_divergence_is_grad_div_column() {
        let s = Space::new(3).unwrap();
        let e0 = s.unit_velocity(0);
        let p = s.divergence(&e0);
        let pairing = s.pressure_gradient(&p);
        let gd = s.grad_div();
        for i in 0..s.dim() {
            assert!((pairing[i] + gd[(i, 0)]).abs() < 1e-10);
        }
    }

    #[test]
    fn divergence_is_injective_but_ill_conditioned() {
        // the sine space holds no nonzero divergence-free field, but the two pressure
        // families become nearly dependent as N grows
        let mut last = f64::INFINITY;
        for n in [1usize, 2, 3, 4, 6, 8] {
            let s = Space::new(n).unwrap();
            let eig = s.grad_div().symmetric_eigenvalues();
            let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min > 0.0 && min < last, "n={n} min eigenvalue {min}");
            if n <= 4 {
                assert!(min > 1e-2, "n={n} min eigenvalue {min}");
            }
            last = min;
        }
    }
}
