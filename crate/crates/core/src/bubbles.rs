//! Standard bubble, conformal factor `u_a`, truncated and projected bubbles.

use crate::error::{QcError, Result};
use crate::field::Field;
use crate::green::CutoffProfile;
use crate::harmonics::{graded_panels, project_profiles, ZonalSeries};
use crate::model::{Backend, Basis, ManifoldModel};
use crate::special::factorial;
use crate::sphere::{chart_to_point, point_to_chart, tangent_frame, Point};
use nalgebra::DVector;
use std::sync::Arc;

/// Energy fraction of the right-hand side allowed in the top tenth of degrees.
pub const ALIASING_TOL: f64 = 1e-2;

/// `δ_{b,λ}(y) = log(2λ / (1 + λ²|y−b|²))`.
pub fn standard_bubble(b: &[f64], lambda: f64, y: &[f64]) -> f64 {
    let r2: f64 = b.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
    (2.0 * lambda).ln() - (lambda * lambda * r2).ln_1p()
}

/// Exact radial rational function `P(s) / (1+s)^p`, `s = |y|²`, with integer
/// coefficients (`num[i]` multiplies `s^i`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadialRational {
    pub num: Vec<i128>,
    pub pow: u32,
}

impl RadialRational {
    fn trim(mut self) -> Self {
        while self.num.len() > 1 && *self.num.last().unwrap() == 0 {
            self.num.pop();
        }
        self
    }

    /// `d/ds`.
    pub fn deriv(&self) -> Self {
        // (P'(1+s) − pP) / (1+s)^{p+1}
        let p = self.pow as i128;
        let mut out = vec![0i128; self.num.len() + 1];
        for (i, c) in self.num.iter().enumerate().skip(1) {
            let d = c * i as i128;
            out[i - 1] += d;
            out[i] += d;
        }
        for (i, c) in self.num.iter().enumerate() {
            out[i] -= p * c;
        }
        RadialRational { num: out, pow: self.pow + 1 }.trim()
    }

    fn times_s(&self) -> Self {
        let mut v = vec![0i128];
        v.extend_from_slice(&self.num);
        RadialRational { num: v, pow: self.pow }.trim()
    }

    fn scale(&self, k: i128) -> Self {
        RadialRational { num: self.num.iter().map(|c| c * k).collect(), pow: self.pow }.trim()
    }

    fn raise(&self, pow: u32) -> Self {
        let mut num = self.num.clone();
        for _ in self.pow..pow {
            let mut next = vec![0i128; num.len() + 1];
            for (i, c) in num.iter().enumerate() {
                next[i] += c;
                next[i + 1] += c;
            }
            num = next;
        }
        RadialRational { num, pow }.trim()
    }

    fn add(&self, o: &Self) -> Self {
        let p = self.pow.max(o.pow);
        let (a, b) = (self.raise(p), o.raise(p));
        let len = a.num.len().max(b.num.len());
        let num = (0..len)
            .map(|i| a.num.get(i).copied().unwrap_or(0) + b.num.get(i).copied().unwrap_or(0))
            .collect();
        RadialRational { num, pow: p }.trim()
    }

    /// Cancels common factors `(1+s)` by exact synthetic division.
    pub fn reduce(mut self) -> Self {
        loop {
            if self.pow == 0 || self.num.len() < 2 {
                return self;
            }
            // P(−1) = 0 iff (1+s) divides P
            let at_m1: i128 = self.num.iter().enumerate().map(|(i, c)| if i % 2 == 0 { *c } else { -c }).sum();
            if at_m1 != 0 {
                return self;
            }
            let d = self.num.len() - 1;
            let mut q = vec![0i128; d];
            q[d - 1] = self.num[d];
            for i in (1..d).rev() {
                q[i - 1] = self.num[i] - q[i];
            }
            self = RadialRational { num: q, pow: self.pow - 1 }.trim();
        }
    }

    /// Coefficients of the numerator in powers of `w = 1+s`.
    pub fn in_w_basis(&self) -> Vec<i128> {
        // P(s) = P(w − 1)
        let mut out = vec![0i128; self.num.len()];
        for (i, c) in self.num.iter().enumerate() {
            // (w−1)^i
            let mut binom = 1i128;
            for j in 0..=i {
                let sign = if (i - j) % 2 == 0 { 1 } else { -1 };
                out[j] += c * binom * sign;
                binom = binom * (i - j) as i128 / (j + 1) as i128;
            }
        }
        out
    }

    /// Value at s, evaluated in the `w = 1+s` basis (no cancellation for
    /// reduced numerators).
    pub fn eval(&self, s: f64) -> f64 {
        let w = 1.0 + s;
        let cw = self.in_w_basis();
        cw.iter().enumerate().map(|(j, c)| *c as f64 * w.powi(j as i32 - self.pow as i32)).sum()
    }
}

/// Radial Laplacian in `s = r²`: `Δf = 4 s f'' + 2n f'`, given `f'`.
fn laplacian_from_deriv(n: usize, fp: &RadialRational) -> RadialRational {
    fp.deriv().times_s().scale(4).add(&fp.scale(2 * n as i128))
}

/// `(−Δ)^{n/2} δ_{0,1}` as an exact reduced rational function of `s = |y|²`.
pub fn bubble_polyharmonic_symbolic(n: usize) -> RadialRational {
    assert!(n >= 2 && n.is_multiple_of(2));
    // δ = log 2 − log(1+s), δ' = −1/(1+s)
    let dp = RadialRational { num: vec![-1], pow: 1 };
    let mut f = laplacian_from_deriv(n, &dp);
    for _ in 1..n / 2 {
        f = laplacian_from_deriv(n, &f.deriv());
    }
    if (n / 2) % 2 == 1 {
        f = f.scale(-1);
    }
    f.reduce()
}

/// Maximal relative residual of `(−Δ)^{n/2} δ = (n−1)! e^{nδ}` on the radii.
pub fn bubble_radial_residual(n: usize, radii: &[f64]) -> f64 {
    let lhs = bubble_polyharmonic_symbolic(n);
    let c = factorial(n - 1) * 2f64.powi(n as i32);
    radii
        .iter()
        .map(|r| {
            let s = r * r;
            let rhs = c / (1.0 + s).powi(n as i32);
            ((lhs.eval(s) - rhs) / rhs).abs()
        })
        .fold(0.0, f64::max)
}

/// Profile of the conformal factor: `u_a = log(1 + χ_ρ(|y|)²/4)` with
/// `|y| = 2 tan(θ/2)`. Exact flat chart where `χ_ρ` is the identity.
pub fn conformal_factor_profile(cutoff: &CutoffProfile, theta: f64) -> f64 {
    let (d, _, _) = CutoffProfile::chart_distance(theta.min(std::f64::consts::PI - 1e-12));
    let c = cutoff.derivs(d).0;
    (0.25 * c * c).ln_1p()
}

/// Conformally flat chart about a point: stereographic coordinates scaled so
/// that `|y| = 2 tan(θ/2)` and `g_a = e^{2u_a} g = |dy|²` inside the cutoff.
#[derive(Debug, Clone)]
pub struct ConformalChart {
    pub a: Point,
    pub frame: Vec<Point>,
    pub cutoff: CutoffProfile,
}

impl ConformalChart {
    pub fn new(a: &Point, cutoff: CutoffProfile) -> Self {
        ConformalChart { a: a.clone(), frame: tangent_frame(a), cutoff }
    }

    pub fn to_chart(&self, x: &Point) -> Vec<f64> {
        point_to_chart(&self.a, &self.frame, x)
    }

    pub fn to_point(&self, y: &[f64]) -> Point {
        chart_to_point(&self.a, &self.frame, y)
    }

    /// `d_{g_a}(a,x) = |y(x)|`.
    pub fn dist(&self, x: &Point) -> f64 {
        self.to_chart(x).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn u_a(&self, x: &Point) -> f64 {
        conformal_factor_profile(&self.cutoff, crate::sphere::distance(&self.a, x))
    }

    /// `det g_a` in chart coordinates, from a finite-difference Jacobian of
    /// the chart map.
    pub fn metric_det(&self, y: &[f64]) -> f64 {
        let n = y.len();
        let h = 1e-5;
        let x0 = self.to_point(y);
        let e2u = (2.0 * self.u_a(&x0)).exp();
        let cols: Vec<Point> = (0..n)
            .map(|i| {
                let mut yp = y.to_vec();
                let mut ym = y.to_vec();
                yp[i] += h;
                ym[i] -= h;
                (self.to_point(&yp) - self.to_point(&ym)) / (2.0 * h)
            })
            .collect();
        let g = nalgebra::DMatrix::from_fn(n, n, |i, j| e2u * cols[i].dot(&cols[j]));
        g.determinant()
    }
}

fn require_sphere(model: &ManifoldModel, what: &str) -> Result<()> {
    if model.backend != Backend::Sphere {
        return Err(QcError::Unsupported { backend: model.backend.name().into(), what: what.into() });
    }
    Ok(())
}

/// Zonal coefficients (degree ≤ `kmax`) of smooth profiles on uniform-ish panels.
fn smooth_coefficients<F: Fn(f64) -> f64 + Sync>(n: usize, kmax: usize, f: F) -> Vec<f64> {
    let wmax = (6.0 / (kmax as f64 + 1.0)).min(0.02);
    let panels = graded_panels(wmax, 0.0, wmax);
    project_profiles(n, kmax, &panels, 20, 1, |t, o| o[0] = f(t)).pop().unwrap()
}

/// `u_a` as a field, with the chart. Round-sphere backend only.
pub fn conformal_factor(model: &ManifoldModel, a: &Point, cutoff: CutoffProfile) -> Result<(Field, ConformalChart)> {
    require_sphere(model, "conformal normal coordinates")?;
    let c = smooth_coefficients(model.n, model.k_max, |t| conformal_factor_profile(&cutoff, t));
    Ok((model.zonal_profile_field(a, &c)?, ConformalChart::new(a, cutoff)))
}

/// `hatδ_{a,λ}` as a function of the geodesic distance θ.
pub fn hat_delta(lambda: f64, cutoff: &CutoffProfile, theta: f64) -> f64 {
    let (d, _, _) = CutoffProfile::chart_distance(theta.min(std::f64::consts::PI - 1e-12));
    let c = cutoff.derivs(d).0;
    (2.0 * lambda).ln() - (lambda * lambda * c * c).ln_1p()
}

/// `hatδ + u_a` and its λ-derivative at geodesic distance θ.
fn bubble_exponent(lambda: f64, cutoff: &CutoffProfile, theta: f64) -> (f64, f64) {
    let (d, _, _) = CutoffProfile::chart_distance(theta.min(std::f64::consts::PI - 1e-12));
    let c = cutoff.derivs(d).0;
    let l2c2 = lambda * lambda * c * c;
    let e = (2.0 * lambda).ln() - l2c2.ln_1p() + (0.25 * c * c).ln_1p();
    (e, 1.0 / lambda - 2.0 * lambda * c * c / (1.0 + l2c2))
}

/// Truncated bubble as a field (band-limited projection).
pub fn truncated_bubble(model: &ManifoldModel, a: &Point, lambda: f64, cutoff: CutoffProfile) -> Result<Field> {
    if !(lambda > 0.0) {
        return Err(QcError::Invalid(format!("λ = {lambda} must be positive")));
    }
    let c = bubble_coefficients(model.n, model.k_max, lambda, &cutoff, |t| hat_delta(lambda, &cutoff, t));
    model.zonal_profile_field(a, &c)
}

pub(crate) fn bubble_panels(lambda: f64, kmax: usize) -> Vec<(f64, f64)> {
    let wmax = (6.0 / (kmax as f64 + 1.0)).min(0.02);
    graded_panels((0.25 / lambda).min(wmax), 0.25, wmax)
}

fn bubble_coefficients<F: Fn(f64) -> f64 + Sync>(n: usize, kmax: usize, lambda: f64, _c: &CutoffProfile, f: F) -> Vec<f64> {
    project_profiles(n, kmax, &bubble_panels(lambda, kmax), 20, 1, |t, o| o[0] = f(t)).pop().unwrap()
}

/// Zonal profile of the projected bubble `φ_{a,λ}` and of `∂φ/∂λ`, shared
/// by all centers.
#[derive(Debug, Clone)]
pub struct BubbleProfile {
    pub n: usize,
    pub lambda: f64,
    pub cutoff: CutoffProfile,
    /// Coefficients of `φ_{a,λ}` in `Z_k(cos d(a,·))`.
    pub phi: ZonalSeries,
    pub dphi: ZonalSeries,
    /// Coefficients of the right-hand side `(n−1)!ω_n e^{nE}/∫e^{nE}`.
    pub rhs: Vec<f64>,
    /// `∫ e^{n(hatδ+u_a)} dV`.
    pub mass: f64,
    /// Energy fraction of the right-hand side in the top tenth of degrees.
    pub aliasing: f64,
    /// GJMS eigenvalues used, by degree.
    pub mu: Vec<f64>,
}

impl BubbleProfile {
    /// Solves the projection problem at degree `model.k_max`; refuses if
    /// the right-hand side is not resolved.
    pub fn new(model: &ManifoldModel, lambda: f64, cutoff: CutoffProfile) -> Result<Self> {
        let p = Self::unchecked(model, lambda, cutoff)?;
        if p.aliasing > ALIASING_TOL {
            return Err(QcError::Aliasing { fraction: p.aliasing });
        }
        Ok(p)
    }

    pub fn unchecked(model: &ManifoldModel, lambda: f64, cutoff: CutoffProfile) -> Result<Self> {
        Self::unchecked_with_degree(model, lambda, cutoff, model.k_max)
    }

    /// Profile resolved to degree `kmax`, independent of the model's Galerkin
    /// degree (only the spectrum of the model is used); refuses if aliased.
    pub fn with_degree(model: &ManifoldModel, lambda: f64, cutoff: CutoffProfile, kmax: usize) -> Result<Self> {
        let p = Self::unchecked_with_degree(model, lambda, cutoff, kmax)?;
        if p.aliasing > ALIASING_TOL {
            return Err(QcError::Aliasing { fraction: p.aliasing });
        }
        Ok(p)
    }

    pub fn unchecked_with_degree(model: &ManifoldModel, lambda: f64, cutoff: CutoffProfile, kmax: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(QcError::Invalid(format!("λ = {lambda} must be positive")));
        }
        let n = model.n;
        let mu: Vec<f64> = (0..=kmax).map(|k| model.mu(k)).collect();
        if let Some(k) = (1..=kmax).find(|&k| mu[k] == 0.0) {
            return Err(QcError::DegenerateSpectrum { k });
        }
        let nf = n as f64;
        let mut pr = project_profiles(n, kmax, &bubble_panels(lambda, kmax), 20, 2, |t, o| {
            let (e, de) = bubble_exponent(lambda, &cutoff, t);
            let v = (nf * e).exp();
            o[0] = v;
            o[1] = de * v;
        });
        let de = pr.pop().unwrap();
        let ev = pr.pop().unwrap();
        let sq = model.omega.sqrt();
        let mass = ev[0] * sq;
        let dmass = nf * de[0] * sq;
        let k1 = model.kappa1;
        let rhs: Vec<f64> = ev.iter().map(|e| k1 * e / mass).collect();
        let drhs: Vec<f64> = ev.iter().zip(&de).map(|(e, d)| k1 * (nf * d / mass - e * dmass / (mass * mass))).collect();
        let mut phi = vec![0.0; kmax + 1];
        let mut dphi = vec![0.0; kmax + 1];
        for k in 1..=kmax {
            phi[k] = rhs[k] / mu[k];
            dphi[k] = drhs[k] / mu[k];
        }
        let top = ((0.9 * kmax as f64).floor() as usize + 1).max(1);
        let total: f64 = rhs.iter().skip(1).map(|v| v * v).sum();
        let tail: f64 = rhs.iter().skip(top).map(|v| v * v).sum();
        let aliasing = if total > 0.0 { tail / total } else { 0.0 };
        Ok(BubbleProfile {
            n,
            lambda,
            cutoff,
            phi: ZonalSeries::new(n, phi),
            dphi: ZonalSeries::new(n, dphi),
            rhs,
            mass,
            aliasing,
            mu,
        })
    }

    /// `‖φ‖²_{P^n}`.
    pub fn pn_norm2(&self) -> f64 {
        self.phi.coeffs.iter().zip(&self.mu).skip(1).map(|(c, m)| c * c * m.abs()).sum()
    }

    /// `‖∂φ/∂a · e‖²_{P^n}` for a unit tangent vector e: the derivative of a
    /// degree-k zonal harmonic along its pole has squared norm `k(k+n−1)/n`.
    pub fn da_pn_norm2(&self) -> f64 {
        let nf = self.n as f64;
        self.phi
            .coeffs
            .iter()
            .zip(&self.mu)
            .enumerate()
            .skip(1)
            .map(|(k, (c, m))| {
                let kf = k as f64;
                c * c * m.abs() * kf * (kf + nf - 1.0) / nf
            })
            .sum()
    }

    /// Galerkin residual `‖P φ + Q/m − Π(rhs)‖ / ‖rhs‖` in coefficients.
    pub fn galerkin_residual(&self, model: &ManifoldModel) -> f64 {
        let qm = model.q_const / model.m as f64 * model.omega.sqrt();
        let mut r2 = (qm - self.rhs[0]).powi(2);
        for k in 1..self.rhs.len() {
            r2 += (self.mu[k] * self.phi.coeffs[k] - self.rhs[k]).powi(2);
        }
        let nrm: f64 = self.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        r2.sqrt() / nrm
    }
}

/// `φ_{a,λ}` with its λ-derivative and (on a full basis) its derivatives in
/// the directions of `frame`.
#[derive(Debug, Clone)]
pub struct ProjectedBubble {
    pub a: Point,
    pub profile: Arc<BubbleProfile>,
    pub phi: Field,
    pub dphi_dlambda: Field,
    /// Tangent frame at a used for `dphi_da` (full basis only).
    pub frame: Vec<Point>,
    pub dphi_da: Vec<Field>,
}

pub fn project_bubble(model: &ManifoldModel, a: &Point, lambda: f64, cutoff: CutoffProfile) -> Result<ProjectedBubble> {
    let prof = Arc::new(BubbleProfile::new(model, lambda, cutoff)?);
    place_bubble(model, a, prof)
}

/// Places a precomputed profile at the center a.
pub fn place_bubble(model: &ManifoldModel, a: &Point, profile: Arc<BubbleProfile>) -> Result<ProjectedBubble> {
    if a.len() != model.n + 1 {
        return Err(QcError::DimensionMismatch { expected: model.n + 1, got: a.len() });
    }
    let phi = model.zonal_profile_field(a, &profile.phi.coeffs)?;
    let dphi_dlambda = model.zonal_profile_field(a, &profile.dphi.coeffs)?;
    let frame = tangent_frame(a);
    let dphi_da = match &model.basis {
        Basis::Zonal(_) => vec![],
        Basis::Full(fb) => frame
            .iter()
            .map(|e| {
                let dy = fb.eval_modes_deriv(a, e);
                let c = DVector::from_iterator(
                    model.n_modes(),
                    fb.modes.iter().enumerate().map(|(i, md)| {
                        let k = md.degree();
                        profile.phi.coeffs[k] * (model.omega / model.dim_k(k) as f64).sqrt() * dy[i]
                    }),
                );
                model.field(c)
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(ProjectedBubble { a: a.clone(), profile, phi, dphi_dlambda, frame, dphi_da })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::default_rho;
    use crate::model::ModelSpec;
    use crate::sphere::{north, random_point, random_rotation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cut() -> CutoffProfile {
        CutoffProfile::new(default_rho()).unwrap()
    }

    #[test]
    fn standard_bubble_examples() {
        assert!((standard_bubble(&[0.0; 4], 1.0, &[0.0; 4]) - 2f64.ln()).abs() < 1e-15);
        let b = [0.1, -0.2, 0.3, 0.0];
        let top = standard_bubble(&b, 7.0, &b);
        assert!((top - 14f64.ln()).abs() < 1e-14);
        assert!(standard_bubble(&b, 7.0, &[0.1, -0.2, 0.31, 0.0]) < top);
    }

    #[test]
    fn symbolic_polyharmonic_bubble() {
        let r = bubble_polyharmonic_symbolic(4);
        assert_eq!(r, RadialRational { num: vec![96], pow: 4 });
        // n = 6: 5!·2^6 = 7680
        assert_eq!(bubble_polyharmonic_symbolic(6), RadialRational { num: vec![7680], pow: 6 });
        let radii: Vec<f64> = (0..=120).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 120.0)).collect();
        assert!(bubble_radial_residual(4, &radii) < 1e-8);
    }

    #[test]
    fn rational_reduce_is_exact_division() {
        // (1+s)^2 (3 − s) / (1+s)^5 → (3 − s)/(1+s)^3
        let r = RadialRational { num: vec![3, 5, 1, -1], pow: 5 }.reduce();
        assert_eq!(r, RadialRational { num: vec![3, -1], pow: 3 });
    }

    #[test]
    fn conformal_factor_examples() {
        let m = ManifoldModel::new(&ModelSpec::sphere(4, 300)).unwrap();
        let a = north(4);
        let (u, chart) = conformal_factor(&m, &a, cut()).unwrap();
        assert!(chart.u_a(&a).abs() < 1e-15);
        // band-limited projection of a smooth non-analytic profile
        assert!(m.eval_at(&u, &a).abs() < 1e-6, "{}", m.eval_at(&u, &a));
        let x = chart.to_point(&[2.0, 0.0, 0.0, 0.0]);
        assert!((crate::sphere::distance(&a, &x) - std::f64::consts::FRAC_PI_2).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let y: Vec<f64> = (0..4).map(|_| rng.random_range(-0.3..0.3)).collect();
            assert!((chart.metric_det(&y) - 1.0).abs() < 1e-8);
        }
        let syn = ManifoldModel::new(&ModelSpec::synthetic(4, 20, vec![], 1)).unwrap();
        assert!(matches!(conformal_factor(&syn, &a, cut()), Err(QcError::Unsupported { .. })));
    }

    #[test]
    fn truncated_bubble_examples() {
        let c = cut();
        assert!((hat_delta(30.0, &c, 0.0) - 60f64.ln()).abs() < 1e-14);
        let far = (60.0 / (1.0 + 4.0 * 900.0 * c.rho * c.rho)).ln();
        assert!((hat_delta(30.0, &c, 2.5) - far).abs() < 1e-13);
        let th: f64 = 0.3;
        let y = 2.0 * (th / 2.0).tan();
        assert!((hat_delta(30.0, &c, th) - standard_bubble(&[0.0], 30.0, &[y])).abs() < 1e-13);
    }

    #[test]
    fn projected_bubble_properties() {
        let m = ManifoldModel::new(&ModelSpec::sphere(4, 600)).unwrap();
        let b = project_bubble(&m, &north(4), 20.0, cut()).unwrap();
        let qphi = m.integrate(&b.phi.values) * m.q_const;
        assert!(qphi.abs() < 1e-8);
        assert!(b.profile.galerkin_residual(&m) < 1e-8);
        let rhs_int = b.profile.rhs[0] * m.omega.sqrt();
        assert!((rhs_int - m.kappa1).abs() < 1e-10 * m.kappa1);
        // λ-derivative against centered differences
        let h = 1e-3;
        let p = BubbleProfile::new(&m, 20.0 + h, cut()).unwrap();
        let q = BubbleProfile::new(&m, 20.0 - h, cut()).unwrap();
        let fd: Vec<f64> = p.phi.coeffs.iter().zip(&q.phi.coeffs).map(|(x, y)| (x - y) / (2.0 * h)).collect();
        let num: f64 = fd.iter().zip(&b.profile.dphi.coeffs).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.profile.dphi.coeffs.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(num / den < 1e-5, "{}", num / den);
    }

    #[test]
    fn aliasing_is_detected() {
        let m = ManifoldModel::new(&ModelSpec::sphere(4, 40)).unwrap();
        assert!(matches!(BubbleProfile::new(&m, 200.0, cut()), Err(QcError::Aliasing { .. })));
    }

    #[test]
    fn rotation_equivariance_and_center_derivative() {
        let m = ManifoldModel::new(&ModelSpec::sphere(4, 10).full()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let prof = Arc::new(BubbleProfile::unchecked(&m, 1.5, cut()).unwrap());
        for _ in 0..3 {
            let a = random_point(4, &mut rng);
            let r = random_rotation(4, &mut rng);
            let b1 = place_bubble(&m, &a, prof.clone()).unwrap();
            let b2 = place_bubble(&m, &(&r * &a), prof.clone()).unwrap();
            let x = random_point(4, &mut rng);
            assert!((m.eval_at(&b1.phi, &x) - m.eval_at(&b2.phi, &(&r * &x))).abs() < 1e-8);
            // derivative along the first frame direction
            let e = &b1.frame[0];
            let h = 1e-5;
            let ap = crate::sphere::exp_map(&a, &(e * h));
            let am = crate::sphere::exp_map(&a, &(e * -h));
            let fp = place_bubble(&m, &ap, prof.clone()).unwrap();
            let fm = place_bubble(&m, &am, prof.clone()).unwrap();
            let fd = (fp.phi.coeffs - fm.phi.coeffs) / (2.0 * h);
            assert!((fd - &b1.dphi_da[0].coeffs).amax() < 1e-6);
            let n2 = crate::operators::pn_inner_unchecked(&m, &b1.dphi_da[0].coeffs, &b1.dphi_da[0].coeffs);
            assert!((n2 - prof.da_pn_norm2()).abs() < 1e-8 * n2);
        }
    }
}
