//! Band-limited fields: harmonic coefficients together with node values.

use crate::error::{QcError, Result};
use crate::model::ManifoldModel;
use crate::sphere::Point;
use nalgebra::DVector;

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub coeffs: DVector<f64>,
    pub values: DVector<f64>,
}

impl Field {
    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    /// L² norm (the basis is orthonormal).
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.norm()
    }
}

impl ManifoldModel {
    pub fn field(&self, coeffs: DVector<f64>) -> Result<Field> {
        if coeffs.len() != self.n_modes() {
            return Err(QcError::DimensionMismatch { expected: self.n_modes(), got: coeffs.len() });
        }
        let values = &self.synth * &coeffs;
        Ok(Field { coeffs, values })
    }

    pub fn zero_field(&self) -> Field {
        self.field(DVector::zeros(self.n_modes())).expect("sized by model")
    }

    pub fn constant_field(&self, c: f64) -> Field {
        let mut coeffs = DVector::zeros(self.n_modes());
        coeffs[0] = c * self.omega.sqrt();
        self.field(coeffs).expect("sized by model")
    }

    /// Coefficients of node values (Gauss projection).
    pub fn analysis(&self, values: &DVector<f64>) -> Result<DVector<f64>> {
        if values.len() != self.n_nodes() {
            return Err(QcError::DimensionMismatch { expected: self.n_nodes(), got: values.len() });
        }
        let w = values.component_mul(&self.vol);
        Ok(self.synth.tr_mul(&w))
    }

    pub fn field_from_values(&self, values: &DVector<f64>) -> Result<Field> {
        let c = self.analysis(values)?;
        self.field(c)
    }

    /// Field from a function of the point; on a zonal model the function is
    /// sampled along one meridian and must be axisymmetric.
    pub fn field_from_fn<F: Fn(&Point) -> f64>(&self, f: F) -> Field {
        let vals = DVector::from_iterator(self.n_nodes(), (0..self.n_nodes()).map(|i| f(&self.node_point(i))));
        self.field_from_values(&vals).expect("sized by model")
    }

    /// Unit-normalized degree-k zonal harmonic about the model axis.
    pub fn zonal_harmonic(&self, k: usize) -> Result<Field> {
        if k > self.k_max {
            return Err(QcError::Invalid(format!("degree {k} above k_max")));
        }
        let mut c = DVector::zeros(self.n_modes());
        let idx = match &self.basis {
            crate::model::Basis::Zonal(_) => k,
            crate::model::Basis::Full(fb) => fb
                .modes
                .iter()
                .position(|m| m.degree() == k && m.is_zonal())
                .expect("zonal mode present"),
        };
        c[idx] = 1.0;
        self.field(c)
    }

    /// Point evaluation.
    pub fn eval_at(&self, u: &Field, x: &Point) -> f64 {
        let v = self.eval_modes(x);
        v.iter().zip(u.coeffs.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn integrate(&self, values: &DVector<f64>) -> f64 {
        values.dot(&self.vol)
    }

    pub fn check_dim(&self, u: &Field) -> Result<()> {
        if u.dim() != self.n_modes() {
            return Err(QcError::DimensionMismatch { expected: self.n_modes(), got: u.dim() });
        }
        Ok(())
    }
}

impl ManifoldModel {
    /// Field of the zonal function `Σ c_k Z_k(cos d(center, ·))`, truncated at
    /// `k_max`. On a zonal model the center must lie on the axis.
    pub fn zonal_profile_field(&self, center: &Point, coeffs: &[f64]) -> Result<Field> {
        let kk = self.k_max.min(coeffs.len().saturating_sub(1));
        let mut c = DVector::zeros(self.n_modes());
        match &self.basis {
            crate::model::Basis::Zonal(_) => {
                let d = self.axis.dot(center);
                if (d.abs() - 1.0).abs() > 1e-12 {
                    return Err(QcError::Invalid("zonal model needs centers on its axis".into()));
                }
                for k in 0..=kk {
                    c[k] = if d < 0.0 && k % 2 == 1 { -coeffs[k] } else { coeffs[k] };
                }
            }
            crate::model::Basis::Full(fb) => {
                let y = fb.eval_modes(center);
                for (i, mode) in fb.modes.iter().enumerate() {
                    let k = mode.degree();
                    if k <= kk {
                        c[i] = coeffs[k] * (self.omega / self.dim_k(k) as f64).sqrt() * y[i];
                    }
                }
            }
        }
        self.field(c)
    }
}

#[cfg(test)]
mod tests {
    use crate::model::{ManifoldModel, ModelSpec};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_zonal_and_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for spec in [ModelSpec::sphere(4, 60), ModelSpec::sphere(4, 6).full()] {
            let m = ManifoldModel::new(&spec).unwrap();
            let c = DVector::from_fn(m.n_modes(), |_, _| rng.random_range(-1.0..1.0));
            let f = m.field(c.clone()).unwrap();
            let back = m.analysis(&f.values).unwrap();
            assert!((back - c).amax() < 1e-10);
        }
    }

    #[test]
    fn axisymmetric_fields_stay_zonal() {
        let m = ManifoldModel::new(&ModelSpec::sphere(4, 6).full()).unwrap();
        let f = m.field_from_fn(|x| (2.0 * x[4]).sin() + x[4].powi(3));
        for i in 0..m.n_modes() {
            if !m.mode_is_zonal(i) {
                assert!(f.coeffs[i].abs() < 1e-12);
            }
        }
    }
}
