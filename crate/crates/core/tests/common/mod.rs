#![allow(dead_code)]

use acnavier_core::operators::{random_field, Advection};
use acnavier_core::oracle::{
    oracle_div_sq, oracle_grad_pressure_dot, oracle_h1_inner, oracle_l2_sq, oracle_l4_pow4,
    oracle_pressure_div, oracle_pressure_inner, oracle_trilinear, QuadRule,
};
use acnavier_core::{PressureField, Space, VelocityField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const ORACLE_TOL: f64 = 1e-8;

pub fn random_pressure<R: Rng>(space: &Space, rng: &mut R) -> PressureField {
    let mut p = space.zero_pressure();
    for (c, m) in p.coeffs_mut().iter_mut().zip(space.pressure_modes()) {
        let z: f64 = rng.sample(StandardNormal);
        *c = z / (m.j * m.j + m.k * m.k) as f64;
    }
    p
}

/// Largest scaled disagreement between the spectral evaluation and the quadrature oracle.
#[derive(Clone, Debug, Default)]
pub struct OracleAgreement {
    pub instances: usize,
    pub worst: f64,
    pub worst_quantity: &'static str,
}

impl OracleAgreement {
    fn record(&mut self, quantity: &'static str, spectral: f64, oracle: f64, scale: f64) {
        let err = (spectral - oracle).abs() / scale.max(f64::MIN_POSITIVE);
        assert!(err.is_finite(), "{quantity}: {spectral} vs {oracle}");
        if err > self.worst {
            self.worst = err;
            self.worst_quantity = quantity;
        }
    }

    pub fn pass(&self) -> bool {
        self.worst <= ORACLE_TOL
    }
}

/// Compares norms, the pressure Gram, divergence, the gradient/divergence duality and the
/// trilinear form for `instances` random draws per cutoff. Errors are measured relative to
/// the Cauchy-Schwarz bound of each quantity.
pub fn oracle_agreement(n_values: &[usize], instances: usize, seed: u64) -> OracleAgreement {
    let mut out = OracleAgreement::default();
    for &n in n_values {
        let space = Space::new(n).unwrap();
        let adv = Advection::for_space(&space);
        let rule = QuadRule::new(4 * n + 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ n as u64);
        for _ in 0..instances {
            let u = random_field(&space, 1.0, &mut rng);
            let v = random_field(&space, 1.0, &mut rng);
            let w = random_field(&space, 1.0, &mut rng);
            let p = random_pressure(&space, &mut rng);
            let q = random_pressure(&space, &mut rng);
            one_instance(&mut out, &space, &adv, &rule, [&u, &v, &w], [&p, &q]);
            out.instances += 1;
        }
    }
    out
}

fn one_instance(
    out: &mut OracleAgreement,
    space: &Space,
    adv: &Advection,
    rule: &QuadRule,
    [u, v, w]: [&VelocityField; 3],
    [p, q]: [&PressureField; 2],
) {
    let gram = space.gram();
    let l2 = |f: &VelocityField| f.l2_norm();
    let h1 = |f: &VelocityField| f.h10_norm();
    let pn = |f: &PressureField| space.pressure_l2_norm(f);

    let l2u = l2(u).powi(2);
    out.record("l2_sq", l2u, oracle_l2_sq(u, rule), l2u);
    let h1u = h1(u).powi(2);
    out.record("h1_sq", h1u, oracle_h1_inner(u, u, rule), h1u);
    out.record("h1_inner", u.coeffs().dot(&v.coeffs().component_mul(space.stiffness())), oracle_h1_inner(u, v, rule), h1(u) * h1(v));
    let l4 = adv.l4_norm(u).powi(4);
    out.record("l4_pow4", l4, oracle_l4_pow4(u, rule), l4);

    out.record("pressure_inner", gram.inner(p.coeffs(), q.coeffs()), oracle_pressure_inner(p, q, rule), pn(p) * pn(q));
    let div = space.divergence(u);
    out.record("pressure_div", gram.inner(p.coeffs(), div.coeffs()), oracle_pressure_div(p, u, rule), pn(p) * pn(&div));
    let dsq = pn(&div).powi(2);
    out.record("div_sq", dsq, oracle_div_sq(u, rule), dsq);
    out.record("grad_pressure_dot", space.pressure_gradient(p).dot(w.coeffs()), oracle_grad_pressure_dot(p, w, rule), pn(p) * h1(w));

    let l4n = |f: &VelocityField| adv.l4_norm(f);
    let scale = l4n(u) * (h1(v) * l4n(w) + h1(w) * l4n(v));
    out.record("trilinear", adv.trilinear(u, v, w), oracle_trilinear(u, v, w, rule), scale);
    out.record("bhat_pairing", adv.bhat_pair(u, v).pair(w), oracle_trilinear(u, v, w, rule), scale);
}
