//! GJMS operator, its inverse, the positive part `P^{n,+}` and the conformal Laplacian.

use crate::error::{QcError, Result};
use crate::field::Field;
use crate::model::ManifoldModel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    MeanZero,
    #[default]
    QMeanZero,
}

/// Relative tolerance of the solvability check `∫ f = 0`.
pub const SOLVABILITY_TOL: f64 = 1e-8;
/// Relative tolerance on the Q-average for `pn_inner`.
pub const Q_AVERAGE_TOL: f64 = 1e-10;

pub fn apply_gjms(model: &ManifoldModel, u: &Field) -> Result<Field> {
    model.check_dim(u)?;
    model.field(u.coeffs.component_mul(model.mode_mu()))
}

/// Solve `P^n w = f` on mean-zero data.
pub fn invert_gjms(model: &ManifoldModel, f: &Field, norm: Normalization) -> Result<Field> {
    model.check_dim(f)?;
    let integral = f.coeffs[0] * model.omega.sqrt();
    let tol = SOLVABILITY_TOL * f.l2_norm().max(f64::MIN_POSITIVE);
    if integral.abs() > tol {
        return Err(QcError::Solvability { integral, tol });
    }
    let mu = model.mode_mu();
    let mut c = f.coeffs.clone();
    c[0] = 0.0;
    for i in 1..c.len() {
        if mu[i] == 0.0 {
            return Err(QcError::DegenerateSpectrum { k: model.mode_degree(i) });
        }
        c[i] /= mu[i];
    }
    // Q is constant in every backend, so both normalizations fix c_0 = 0.
    match norm {
        Normalization::MeanZero | Normalization::QMeanZero => {}
    }
    model.field(c)
}

/// `P^{n,+} u = P u − 2 Σ_r μ_r ⟨u, v_r⟩ v_r`.
pub fn pn_plus_apply(model: &ManifoldModel, u: &Field) -> Result<Field> {
    model.check_dim(u)?;
    let mut c = u.coeffs.component_mul(model.mode_mu());
    for &r in &model.negative_modes {
        c[r] -= 2.0 * model.mode_mu()[r] * u.coeffs[r];
    }
    model.field(c)
}

/// `⟨P^{n,+} u, v⟩` on Q-mean-zero fields.
pub fn pn_inner(model: &ManifoldModel, u: &Field, v: &Field) -> Result<f64> {
    model.check_dim(u)?;
    model.check_dim(v)?;
    for w in [u, v] {
        let avg = q_average(model, w);
        if avg.abs() > Q_AVERAGE_TOL * (1.0 + w.l2_norm()) {
            return Err(QcError::NonzeroQAverage(avg));
        }
    }
    Ok(pn_inner_unchecked(model, &u.coeffs, &v.coeffs))
}

/// `Σ_{i≥1} |μ_i| u_i v_i`, ignoring the constant mode.
pub fn pn_inner_unchecked(model: &ManifoldModel, u: &nalgebra::DVector<f64>, v: &nalgebra::DVector<f64>) -> f64 {
    let mu = model.mode_mu();
    (1..u.len()).map(|i| mu[i].abs() * u[i] * v[i]).sum()
}

/// `L_g u = −Δ_g u + ((n−2)/(4(n−1))) R_g u`.
pub fn conformal_laplacian_apply(model: &ManifoldModel, u: &Field) -> Result<Field> {
    model.check_dim(u)?;
    let n = model.n as f64;
    let shift = (n - 2.0) / (4.0 * (n - 1.0)) * model.scalar_curv;
    let c = nalgebra::DVector::from_iterator(
        u.dim(),
        (0..u.dim()).map(|i| {
            let k = model.mode_degree(i) as f64;
            (k * (k + n - 1.0) + shift) * u.coeffs[i]
        }),
    );
    model.field(c)
}

/// `ū_Q = (1/((n−1)! ω_n m)) ∫ Q u`.
pub fn q_average(model: &ManifoldModel, u: &Field) -> f64 {
    model.q_const * u.coeffs[0] * model.omega.sqrt() / model.kappa()
}

/// `⟨u, v⟩_{L²}`.
pub fn l2_inner(u: &Field, v: &Field) -> f64 {
    u.coeffs.dot(&v.coeffs)
}

/// Constants of the equivalence between `pn_inner` and the `(1+k)^n`-weighted
/// coefficient norm on Q-mean-zero fields: `(lower, upper)`.
pub fn norm_equivalence_constants(model: &ManifoldModel) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for k in 1..=model.k_max {
        let r = model.mu(k).abs() / (1.0 + k as f64).powi(model.n as i32);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    fn s4() -> ManifoldModel {
        ManifoldModel::new(&ModelSpec::sphere(4, 30)).unwrap()
    }

    #[test]
    fn examples_sphere() {
        let m = s4();
        let one = m.constant_field(1.0);
        assert!(apply_gjms(&m, &one).unwrap().l2_norm() < 1e-13);
        let y1 = m.zonal_harmonic(1).unwrap();
        let py = apply_gjms(&m, &y1).unwrap();
        assert!((py.coeffs.clone() - y1.coeffs.clone() * 24.0).amax() < 1e-12);
        let inv = invert_gjms(&m, &py, Normalization::default()).unwrap();
        assert!((inv.coeffs - y1.coeffs.clone()).amax() < 1e-14);
        assert!((pn_inner(&m, &y1, &y1).unwrap() - 24.0).abs() < 1e-12);
        let l1 = conformal_laplacian_apply(&m, &one).unwrap();
        assert!((l1.values.iter().map(|v| (v - 2.0).abs()).fold(0.0, f64::max)) < 1e-12);
        let ly = conformal_laplacian_apply(&m, &y1).unwrap();
        assert!((ly.coeffs - y1.coeffs.clone() * 6.0).amax() < 1e-12);
        assert!((q_average(&m, &m.constant_field(3.5)) - 3.5).abs() < 1e-13);
        assert!(q_average(&m, &y1).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let m = s4();
        assert!(matches!(invert_gjms(&m, &m.constant_field(1.0), Normalization::default()), Err(QcError::Solvability { .. })));
        let other = ManifoldModel::new(&ModelSpec::sphere(4, 10)).unwrap();
        assert!(matches!(apply_gjms(&m, &other.zero_field()), Err(QcError::DimensionMismatch { .. })));
        let deg = ManifoldModel::new(&ModelSpec::synthetic(4, 10, vec![(3, 0.0)], 1)).unwrap();
        let y1 = deg.zonal_harmonic(1).unwrap();
        assert!(matches!(invert_gjms(&deg, &y1, Normalization::default()), Err(QcError::DegenerateSpectrum { k: 3 })));
        assert!(matches!(pn_inner(&m, &m.constant_field(1.0), &y1_of(&m)), Err(QcError::NonzeroQAverage(_))));
    }

    fn y1_of(m: &ManifoldModel) -> Field {
        m.zonal_harmonic(1).unwrap()
    }

    proptest::proptest! {
        #[test]
        fn gjms_is_symmetric_and_inverted(c in proptest::collection::vec(-1.0f64..1.0, 31), d in proptest::collection::vec(-1.0f64..1.0, 31)) {
            let m = s4();
            let field = |v: &[f64]| {
                let mut x = nalgebra::DVector::from_column_slice(v);
                // zero Q-average
                x[0] = 0.0;
                m.field(x).unwrap()
            };
            let (u, v) = (field(&c), field(&d));
            let (pu, pv) = (apply_gjms(&m, &u).unwrap(), apply_gjms(&m, &v).unwrap());
            let (uv, vu) = (l2_inner(&pu, &v), l2_inner(&u, &pv));
            proptest::prop_assert!((uv - vu).abs() <= 1e-12 * (1.0 + uv.abs()));
            proptest::prop_assert!(l2_inner(&pu, &u) >= -1e-12);
            let back = invert_gjms(&m, &pu, Normalization::default()).unwrap();
            proptest::prop_assert!((back.coeffs - u.coeffs.clone()).amax() < 1e-12);
        }
    }

    #[test]
    fn synthetic_examples() {
        let m = ManifoldModel::new(&ModelSpec::synthetic(4, 10, vec![(2, -5.0)], 1)).unwrap();
        let y2 = m.zonal_harmonic(2).unwrap();
        let p = apply_gjms(&m, &y2).unwrap();
        assert!((p.coeffs - y2.coeffs.clone() * -5.0).amax() < 1e-13);
        let pp = pn_plus_apply(&m, &y2).unwrap();
        assert!((pp.coeffs - y2.coeffs.clone() * 5.0).amax() < 1e-13);
        let s = s4();
        let y = s.zonal_harmonic(3).unwrap();
        assert_eq!(pn_plus_apply(&s, &y).unwrap(), apply_gjms(&s, &y).unwrap());
    }
}
