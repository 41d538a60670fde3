//! The prescribed positive function K, axisymmetric about a fixed axis.

use crate::error::{QcError, Result};
use crate::special::{gauss_jacobi, sphere_area, GegenbauerFamily};
use crate::sphere::{north, normalize, Point};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// JSON description of K: either a constant plus unit-normalized zonal
/// harmonics `c_k Y_k`, or a polynomial in `cos θ`, about `axis`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KSpec {
    Harmonics {
        #[serde(default)]
        constant: f64,
        coeffs: Vec<(usize, f64)>,
        #[serde(default)]
        axis: Option<Vec<f64>>,
    },
    ZonalPoly {
        coeffs: Vec<f64>,
        #[serde(default)]
        axis: Option<Vec<f64>>,
    },
}

impl KSpec {
    /// `K = 1 + c Y_1`.
    pub fn one_plus_y1(c: f64) -> Self {
        KSpec::Harmonics { constant: 1.0, coeffs: vec![(1, c)], axis: None }
    }

    pub fn constant(c: f64) -> Self {
        KSpec::ZonalPoly { coeffs: vec![c], axis: None }
    }

    /// Description of `cK`.
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            KSpec::Harmonics { constant, coeffs, axis } => KSpec::Harmonics {
                constant: constant * c,
                coeffs: coeffs.iter().map(|&(k, v)| (k, v * c)).collect(),
                axis: axis.clone(),
            },
            KSpec::ZonalPoly { coeffs, axis } => {
                KSpec::ZonalPoly { coeffs: coeffs.iter().map(|v| v * c).collect(), axis: axis.clone() }
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Profile {
    Harmonic { constant: f64, coeffs: Vec<f64>, fam: GegenbauerFamily, scale: f64 },
    Poly(Vec<f64>),
}

/// `K(x) = p(N · x)`.
#[derive(Debug, Clone)]
pub struct KField {
    pub n: usize,
    pub axis: Point,
    profile: Profile,
    /// `min K` over a fine sample of the profile.
    pub min_value: f64,
    s_nodes: Vec<f64>,
    s_weights: Vec<f64>,
}

impl KField {
    pub fn new(spec: &KSpec, n: usize) -> Result<Self> {
        let (profile, axis) = match spec {
            KSpec::Harmonics { constant, coeffs, axis } => {
                let kmax = coeffs.iter().map(|c| c.0).max().unwrap_or(0);
                let mut c = vec![0.0; kmax + 1];
                for &(k, v) in coeffs {
                    c[k] += v;
                }
                let a = (n as f64 - 2.0) / 2.0;
                let p = Profile::Harmonic {
                    constant: *constant,
                    coeffs: c,
                    fam: GegenbauerFamily::new(a, kmax.max(1)),
                    scale: 1.0 / sphere_area(n - 1).sqrt(),
                };
                (p, axis.clone())
            }
            KSpec::ZonalPoly { coeffs, axis } => {
                if coeffs.is_empty() {
                    return Err(QcError::Invalid("empty polynomial for K".into()));
                }
                (Profile::Poly(coeffs.clone()), axis.clone())
            }
        };
        let axis = match axis {
            None => north(n),
            Some(v) => {
                if v.len() != n + 1 {
                    return Err(QcError::DimensionMismatch { expected: n + 1, got: v.len() });
                }
                let p = DVector::from_vec(v);
                if p.norm() < 1e-12 {
                    return Err(QcError::Invalid("zero axis".into()));
                }
                normalize(p)
            }
        };
        let q = gauss_jacobi(40, (n as f64 - 3.0) / 2.0);
        let mut k = KField { n, axis, profile, min_value: 0.0, s_nodes: q.nodes, s_weights: q.weights };
        let mut mn = f64::INFINITY;
        for i in 0..=4000 {
            let z = -1.0 + 2.0 * i as f64 / 4000.0;
            mn = mn.min(k.p(z).0);
        }
        k.min_value = mn;
        if !mn.is_finite() || mn <= 0.0 {
            return Err(QcError::Invalid(format!("K must be positive; minimum {mn:.6e}")));
        }
        Ok(k)
    }

    /// Profile `p(z)` and its first two derivatives.
    pub fn p(&self, z: f64) -> (f64, f64, f64) {
        match &self.profile {
            Profile::Poly(c) => {
                let (mut v, mut d, mut d2) = (0.0, 0.0, 0.0);
                for ci in c.iter().rev() {
                    d2 = d2 * z + 2.0 * d;
                    d = d * z + v;
                    v = v * z + ci;
                }
                (v, d, d2)
            }
            Profile::Harmonic { constant, coeffs, fam, scale } => {
                let m = fam.kmax + 1;
                let (mut p, mut dp, mut d2p) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
                fam.eval_d2(z, &mut p, &mut dp, &mut d2p);
                let (mut v, mut d, mut d2) = (*constant, 0.0, 0.0);
                for (k, c) in coeffs.iter().enumerate() {
                    v += c * p[k] * scale;
                    d += c * dp[k] * scale;
                    d2 += c * d2p[k] * scale;
                }
                (v, d, d2)
            }
        }
    }

    pub fn value(&self, x: &Point) -> f64 {
        self.p(self.axis.dot(x)).0
    }

    /// Riemannian gradient (ambient tangent vector).
    pub fn grad(&self, x: &Point) -> Point {
        let z = self.axis.dot(x);
        let d = self.p(z).1;
        (&self.axis - x * z) * d
    }

    /// Laplace-Beltrami operator of the round metric.
    pub fn laplacian(&self, x: &Point) -> f64 {
        let z = self.axis.dot(x);
        let (_, d, d2) = self.p(z);
        (1.0 - z * z) * d2 - self.n as f64 * z * d
    }

    /// Sector-0 and sector-1 components of K in the polar frame about `a`:
    /// `K(θ, ω) = K_0(θ) + K_1(θ) (ω · e) + …` with `e` the unit tangent at `a`
    /// towards the K-axis. Returns `(K_0, K_1)`.
    pub fn frame_sectors(&self, a: &Point, theta: f64) -> (f64, f64) {
        let cb = self.axis.dot(a).clamp(-1.0, 1.0);
        let sb = (1.0 - cb * cb).max(0.0).sqrt();
        let (ct, st) = (theta.cos(), theta.sin());
        let n = self.n;
        // normalizing: ∫ (1-s²)^{(n-3)/2} ds = ω_{n-1}/ω_{n-2}
        let mass: f64 = self.s_weights.iter().sum();
        let (mut k0, mut k1) = (0.0, 0.0);
        for (s, w) in self.s_nodes.iter().zip(&self.s_weights) {
            let v = self.p(cb * ct + sb * st * s).0;
            k0 += w * v;
            k1 += w * v * s;
        }
        (k0 / mass, k1 / mass * n as f64)
    }

    /// Unit tangent at `a` in the direction of increasing `N · x`
    /// (`None` on the axis).
    pub fn frame_direction(&self, a: &Point) -> Option<Point> {
        let t = &self.axis - a * self.axis.dot(a);
        let r = t.norm();
        if r < 1e-14 {
            None
        } else {
            Some(t / r)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{exp_coords, tangent_frame};

    #[test]
    fn one_plus_y1_values() {
        let k = KField::new(&KSpec::one_plus_y1(0.3), 4).unwrap();
        let y1n = (5.0 / sphere_area(4)).sqrt();
        assert!((k.value(&north(4)) - (1.0 + 0.3 * y1n)).abs() < 1e-14);
        // Δ x_5 = -4 x_5
        assert!((k.laplacian(&north(4)) + 4.0 * 0.3 * y1n).abs() < 1e-13);
        assert!(KField::new(&KSpec::ZonalPoly { coeffs: vec![0.1, 1.0], axis: None }, 4).is_err());
    }

    #[test]
    fn gradient_and_laplacian_match_differences() {
        let k = KField::new(&KSpec::ZonalPoly { coeffs: vec![2.0, 0.3, -0.4, 0.2], axis: Some(vec![0.1, 0.2, 0.3, 0.4, 0.5]) }, 4)
            .unwrap();
        let a = normalize(DVector::from_vec(vec![0.3, -0.2, 0.5, 0.1, 0.7]));
        let fr = tangent_frame(&a);
        let h = 1e-3;
        let mut lap = 0.0;
        let g = k.grad(&a);
        for i in 0..4 {
            let mut c = vec![0.0; 4];
            c[i] = h;
            let xp = exp_coords(&a, &fr, &c);
            c[i] = -h;
            let xm = exp_coords(&a, &fr, &c);
            let (fp, fm, f0) = (k.value(&xp), k.value(&xm), k.value(&a));
            assert!(((fp - fm) / (2.0 * h) - g.dot(&fr[i])).abs() < 1e-6);
            lap += (fp - 2.0 * f0 + fm) / (h * h);
        }
        assert!((lap - k.laplacian(&a)).abs() < 1e-5);
    }

    #[test]
    fn frame_sectors_reconstruct() {
        let k = KField::new(&KSpec::one_plus_y1(0.3), 4).unwrap();
        let a = normalize(DVector::from_vec(vec![0.6, 0.0, 0.0, 0.0, 0.8]));
        let e = k.frame_direction(&a).unwrap();
        // linear K: K(θ,ω) = K_0 + K_1 (ω·e) exactly
        let th: f64 = 0.7;
        let (k0, k1) = k.frame_sectors(&a, th);
        let fr = tangent_frame(&a);
        for w in [1.0, -1.0] {
            let x = &a * th.cos() + &e * (w * th.sin());
            assert!((k.value(&x) - (k0 + k1 * w)).abs() < 1e-13);
        }
        let perp = fr.iter().find(|f| f.dot(&e).abs() < 0.5).unwrap();
        let perp = normalize(perp - &e * perp.dot(&e));
        let x = &a * th.cos() + &perp * th.sin();
        assert!((k.value(&x) - k0).abs() < 1e-13);
    }
}
