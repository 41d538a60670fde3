//! Green's function of `P^n + Q/m`, the cutoff `χ_ρ` and the regular part H.

use crate::error::{QcError, Result};
use crate::field::Field;
use crate::harmonics::{graded_panels, project_profiles, ZonalSeries};
use crate::model::{round_gjms_eigenvalue, Backend, ManifoldModel};
use crate::special::{sphere_area, GegenbauerFamily};
use crate::sphere::{distance, Point};
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

/// Injectivity radius of the unit sphere.
pub const INJ_SPHERE: f64 = PI;
/// Default cutoff radius as a fraction of the injectivity radius.
pub const DEFAULT_RHO_FRACTION: f64 = 0.2;
/// Degree used for the spectral representation of H.
pub const DEFAULT_H_DEGREE: usize = 2048;
/// Relative L² tail of H above `k_max` that triggers a resolution error.
pub const DEFAULT_TAIL_TOL: f64 = 1e-3;

pub fn default_rho() -> f64 {
    DEFAULT_RHO_FRACTION * INJ_SPHERE
}

fn psi(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

/// Smooth monotone step on [0,1] with all derivatives vanishing at both ends:
/// returns `(S, S', S'')`.
fn smooth_step(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let t = 1.0 - s;
    let (a, b) = (psi(s), psi(t));
    let a1 = a / (s * s);
    let a2 = a * (1.0 / s.powi(4) - 2.0 / s.powi(3));
    let b1 = -b / (t * t);
    let b2 = b * (1.0 / t.powi(4) - 2.0 / t.powi(3));
    let den = a + b;
    let num1 = a1 * b - a * b1;
    let s0 = a / den;
    let s1 = num1 / (den * den);
    let s2 = ((a2 * b - a * b2) * den - 2.0 * num1 * (a1 + b1)) / (den * den * den);
    (s0, s1, s2)
}

/// The cutoff `χ_ρ`: identity on `[0,ρ]`, constant `2ρ` beyond `2ρ`, joined by
/// a smooth monotone interpolant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffProfile {
    pub rho: f64,
}

impl CutoffProfile {
    /// Requires `0 < ρ < inj/4`.
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < INJ_SPHERE / 4.0) {
            return Err(QcError::Invalid(format!("cutoff radius {rho} outside (0, inj/4)")));
        }
        Ok(CutoffProfile { rho })
    }

    /// Requires `2η < ρ < inj/4`.
    pub fn with_eta(rho: f64, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && 2.0 * eta < rho) {
            return Err(QcError::Invalid(format!("cutoff radius {rho} must exceed 2η = {}", 2.0 * eta)));
        }
        Self::new(rho)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(QcError::Invalid(format!("cutoff evaluated at negative argument {t}")));
        }
        Ok(self.derivs(t).0)
    }

    /// `(χ, χ', χ'')` for `t ≥ 0`.
    pub fn derivs(&self, t: f64) -> (f64, f64, f64) {
        let r = self.rho;
        if t <= r {
            return (t, 1.0, 0.0);
        }
        if t >= 2.0 * r {
            return (2.0 * r, 0.0, 0.0);
        }
        let s = (t - r) / r;
        let (st, st1, st2) = smooth_step(s);
        let phi = s + st * (1.0 - s);
        let phi1 = 1.0 - st + st1 * (1.0 - s);
        let phi2 = -2.0 * st1 + st2 * (1.0 - s);
        (r * (1.0 + phi), phi1, phi2 / r)
    }

    /// `(t, χ, χ', χ'')` on a uniform grid over `[0, 3ρ]`.
    pub fn tabulate(&self, npts: usize) -> Vec<[f64; 4]> {
        (0..npts)
            .map(|i| {
                let t = 3.0 * self.rho * i as f64 / (npts - 1).max(1) as f64;
                let (c, c1, c2) = self.derivs(t);
                [t, c, c1, c2]
            })
            .collect()
    }

    /// Chart distance `d_{g_a} = 2 tan(θ/2)` and its θ-derivatives.
    pub fn chart_distance(theta: f64) -> (f64, f64, f64) {
        let d = 2.0 * (theta / 2.0).tan();
        let d1 = 1.0 + d * d / 4.0;
        (d, d1, 0.5 * d * d1)
    }

    /// `log(1/χ_ρ²(d_{g_a}))` as a function of the geodesic distance θ,
    /// with its first two θ-derivatives.
    pub fn log_part(&self, theta: f64) -> (f64, f64, f64) {
        let (d, d1, d2) = Self::chart_distance(theta);
        let (c, c1, c2) = self.derivs(d);
        let v = -2.0 * c.ln();
        let g1 = c1 * d1 / c;
        let g2 = (c2 * d1 * d1 + c1 * d2) / c - g1 * g1;
        (v, -2.0 * g1, -2.0 * g2)
    }

    /// Polar angle beyond which the cutoff is constant.
    pub fn plateau_angle(&self) -> f64 {
        2.0 * self.rho.atan()
    }
}

/// The zonal Green's profile `G(θ)` and regular part `H(θ)`, shared by all
/// base points.
#[derive(Debug, Clone)]
pub struct GreenProfile {
    pub n: usize,
    pub cutoff: CutoffProfile,
    /// Spectral G coefficients `g_k = (n−1)!ω_n Z_k(1)/μ_k`, `g_0 = 0`.
    pub g: Vec<f64>,
    /// Log-part coefficients.
    pub logpart: Vec<f64>,
    /// Spectral coefficients of H (for fields and resolution checks).
    pub h: ZonalSeries,
    /// `c` in `G_round = c − log(1 − cos θ)`.
    pub round_const: f64,
    /// `G − G_round`, nonzero only on degrees with edited eigenvalues.
    pub delta: ZonalSeries,
    /// False for the synthetic backend: H is then only "G minus the round log term".
    pub geometric: bool,
}

impl GreenProfile {
    pub fn new(model: &ManifoldModel, cutoff: CutoffProfile) -> Result<Self> {
        Self::with_degree(model, cutoff, DEFAULT_H_DEGREE.max(model.k_max))
    }

    pub fn with_degree(model: &ManifoldModel, cutoff: CutoffProfile, kh: usize) -> Result<Self> {
        let n = model.n;
        for k in 1..=kh {
            if model.mu(k) == 0.0 {
                return Err(QcError::DegenerateSpectrum { k });
            }
        }
        let wn1 = sphere_area(n - 1);
        let scale = 1.0 / wn1.sqrt();
        let fam = GegenbauerFamily::new((n as f64 - 2.0) / 2.0, kh);
        let mut p1 = vec![0.0; kh + 1];
        fam.eval(1.0, &mut p1);
        let mut g = vec![0.0; kh + 1];
        for k in 1..=kh {
            g[k] = model.kappa1 * p1[k] * scale / model.mu(k);
        }
        let logpart = log_part_coefficients(&cutoff, n, kh);
        // On the round sphere G = c − log(1 − cos θ) in every even dimension,
        // so H = (G − G_round) − S with S = logpart + log(1 − cos θ) smooth;
        // this avoids the cancellation in g_k − logpart_k at high degree.
        let smooth = smooth_remainder_coefficients(&cutoff, n, kh);
        let round_const = round_green_constant(n);
        let mut h = vec![round_const * model.omega.sqrt() - smooth[0]; kh + 1];
        let mut delta = vec![0.0; kh + 1];
        for k in 1..=kh {
            let round = model.kappa1 * p1[k] * scale / round_gjms_eigenvalue(n, k);
            if model.mu(k) != round_gjms_eigenvalue(n, k) {
                delta[k] = g[k] - round;
            }
            h[k] = delta[k] - smooth[k];
        }
        let last = delta.iter().rposition(|v| *v != 0.0).unwrap_or(0);
        delta.truncate(last + 1);
        Ok(GreenProfile {
            n,
            cutoff,
            g,
            logpart,
            h: ZonalSeries::new(n, h),
            round_const,
            delta: ZonalSeries::new(n, delta),
            geometric: model.backend == Backend::Sphere,
        })
    }

    pub fn k_high(&self) -> usize {
        self.g.len() - 1
    }

    /// `H(a,a)`.
    pub fn h_diag(&self) -> f64 {
        self.h_value(0.0)
    }

    /// `H` at distance θ, evaluated as `c + (G − G_round) − S` with the smooth
    /// remainder S in closed form.
    pub fn h_value(&self, theta: f64) -> f64 {
        self.h_d2(theta).0
    }

    /// `(H, H_θ, H_θθ)`.
    pub fn h_d2(&self, theta: f64) -> (f64, f64, f64) {
        let (s0, s1, s2) = smooth_remainder(&self.cutoff, theta);
        let (d0, d1, d2) = self.delta.eval_d2(theta);
        (self.round_const + d0 - s0, d1 - s1, d2 - s2)
    }

    /// Round Laplacian of `H(a,·)` at distance θ.
    pub fn h_laplacian(&self, theta: f64) -> f64 {
        let (_, h1, h2) = self.h_d2(theta);
        let nf = self.n as f64;
        if theta < 1e-7 {
            nf * h2
        } else {
            h2 + (nf - 1.0) * h1 / theta.tan()
        }
    }

    /// `G` at geodesic distance θ > 0, with two θ-derivatives.
    pub fn g_d2(&self, theta: f64) -> (f64, f64, f64) {
        let (l, l1, l2) = self.cutoff.log_part(theta);
        let (h, h1, h2) = self.h_d2(theta);
        (l + h, l1 + h1, l2 + h2)
    }

    pub fn g_value(&self, theta: f64) -> f64 {
        self.cutoff.log_part(theta).0 + self.h_value(theta)
    }

    /// Round Laplacian of `G(a,·)` at distance θ ∈ (0, π).
    pub fn g_laplacian(&self, theta: f64) -> f64 {
        let (_, g1, g2) = self.g_d2(theta);
        g2 + (self.n as f64 - 1.0) * g1 / theta.tan()
    }

    /// Truncated spectral sum of G (no log splitting).
    pub fn g_spectral(&self, theta: f64, kmax: usize) -> f64 {
        let s = ZonalSeries::new(self.n, self.g[..=kmax.min(self.k_high())].to_vec());
        s.value(theta)
    }

    /// Relative L² tail of H above degree k.
    pub fn tail_fraction(&self, k: usize) -> f64 {
        self.h.tail_fraction(k)
    }
}

/// `c_n = (1/ω_n) ∫ log(1 − cos θ) dV = log 2 + ψ(a+1) − ψ(2a+2)`,
/// `a = (n−2)/2`.
pub fn round_green_constant(n: usize) -> f64 {
    let a = (n - 2) / 2;
    let harmonic = |m: usize| (1..=m).map(|j| 1.0 / j as f64).sum::<f64>();
    std::f64::consts::LN_2 + harmonic(a) - harmonic(2 * a + 1)
}

/// `S = log(1/χ_ρ²(d)) + log(1 − cos θ)` with two θ-derivatives; smooth on
/// the whole sphere.
pub fn smooth_remainder(cutoff: &CutoffProfile, theta: f64) -> (f64, f64, f64) {
    let half = 0.5 * theta;
    let (d, _, _) = CutoffProfile::chart_distance(theta.min(PI - 1e-15));
    if d <= cutoff.rho {
        let c = half.cos();
        (std::f64::consts::LN_2 + 2.0 * (0.5 * c).ln(), -half.tan(), -0.5 / (c * c))
    } else {
        let (l0, l1, l2) = cutoff.log_part(theta);
        let sh = half.sin();
        (l0 + (2.0 * sh * sh).ln(), l1 + half.cos() / sh, l2 - 0.5 / (sh * sh))
    }
}

fn smooth_remainder_coefficients(cutoff: &CutoffProfile, n: usize, kh: usize) -> Vec<f64> {
    let w = (6.0 / (kh as f64 + 1.0)).min(0.02);
    let panels = graded_panels(w, 0.0, w);
    project_profiles(n, kh, &panels, 20, 1, |th, out| out[0] = smooth_remainder(cutoff, th).0)
        .pop()
        .expect("one profile")
}

/// Zonal coefficients of `log(1/χ_ρ²(2 tan(θ/2)))` up to degree `kh`, by
/// composite Gauss-Legendre quadrature in θ, graded towards the log singularity.
fn log_part_coefficients(cutoff: &CutoffProfile, n: usize, kh: usize) -> Vec<f64> {
    let h = (2.0 / (kh as f64 + 1.0)).min(0.05);
    let mut panels: Vec<(f64, f64)> = Vec::new();
    let mut lo = h;
    for _ in 0..60 {
        panels.push((lo / 2.0, lo));
        lo /= 2.0;
    }
    panels.reverse();
    let npanel = ((PI - h) / h).ceil() as usize;
    let hh = (PI - h) / npanel as f64;
    for i in 0..npanel {
        let a = h + i as f64 * hh;
        panels.push((a, a + hh));
    }
    project_profiles(n, kh, &panels, 16, 1, |th, out| out[0] = cutoff.log_part(th).0)
        .pop()
        .expect("one profile")
}

/// Green's function with base point `a`.
#[derive(Debug, Clone)]
pub struct GreenPair {
    pub a: Point,
    pub profile: Arc<GreenProfile>,
    /// `G(a,·)` truncated at the model `k_max`.
    pub g_field: Field,
    pub h_aa: f64,
    /// Relative tail of H above the model `k_max`.
    pub tail: f64,
}

impl GreenPair {
    pub fn g(&self, x: &Point) -> f64 {
        self.profile.g_value(distance(&self.a, x))
    }

    pub fn h(&self, x: &Point) -> f64 {
        self.profile.h_value(distance(&self.a, x))
    }

    pub fn log_part(&self, x: &Point) -> f64 {
        self.profile.cutoff.log_part(distance(&self.a, x)).0
    }
}

/// Builds `G(a,·)` and `H(a,·)`; fails if H is not resolved by the model band.
pub fn green_pair(model: &ManifoldModel, a: &Point, cutoff: CutoffProfile) -> Result<GreenPair> {
    let profile = Arc::new(GreenProfile::new(model, cutoff)?);
    green_pair_with(model, a, profile, DEFAULT_TAIL_TOL)
}

pub fn green_pair_with(model: &ManifoldModel, a: &Point, profile: Arc<GreenProfile>, tail_tol: f64) -> Result<GreenPair> {
    if a.len() != model.n + 1 {
        return Err(QcError::DimensionMismatch { expected: model.n + 1, got: a.len() });
    }
    for k in 1..=model.k_max {
        if model.mu(k) == 0.0 {
            return Err(QcError::DegenerateSpectrum { k });
        }
    }
    let tail = profile.tail_fraction(model.k_max);
    if tail > tail_tol {
        return Err(QcError::Resolution(format!(
            "regular part tail {tail:.3e} above k_max = {} exceeds {tail_tol:.1e}",
            model.k_max
        )));
    }
    let g_field = model.zonal_profile_field(a, &profile.g)?;
    Ok(GreenPair { a: a.clone(), h_aa: profile.h_diag(), profile, g_field, tail })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeRow {
    pub radius: f64,
    pub sup_h: f64,
    pub grad_h: f64,
}

/// Sup and finite-difference gradient of `H = G − log(1/χ²)` on geodesic
/// circles about the base point, for a zonal `G` given as a function of θ.
pub fn regular_part_probe_fn<F: Fn(f64) -> f64>(
    g: F,
    cutoff: &CutoffProfile,
    radii: &[f64],
    min_radius: f64,
) -> Result<Vec<ProbeRow>> {
    let mut rows = Vec::new();
    for &r in radii {
        if r < min_radius {
            return Err(QcError::Resolution(format!("probe radius {r:.3e} below grid resolution {min_radius:.3e}")));
        }
        if r > cutoff.rho {
            return Err(QcError::Invalid(format!("probe radius {r} exceeds ρ")));
        }
        let hr = |t: f64| g(t) - cutoff.log_part(t).0;
        let dt = 1e-4 * r;
        let grad = (hr(r + dt) - hr(r - dt)) / (2.0 * dt);
        rows.push(ProbeRow { radius: r, sup_h: hr(r).abs(), grad_h: grad.abs() });
    }
    Ok(rows)
}

/// Probe of the pair's regular part; radii below `π/k_max` are rejected.
pub fn regular_part_probe(model: &ManifoldModel, pair: &GreenPair, radii: &[f64]) -> Result<Vec<ProbeRow>> {
    let min_r = PI / model.k_max as f64;
    let p = pair.profile.clone();
    regular_part_probe_fn(|t| p.g_value(t), &p.cutoff, radii, min_r)
}

/// CSV dump of the profile: columns `dist,G,logpart,H`.
pub fn write_profile_csv<W: std::io::Write>(pair: &GreenPair, npts: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dist", "G", "logpart", "H"])?;
    for i in 1..=npts {
        let th = PI * i as f64 / (npts + 1) as f64;
        let l = pair.profile.cutoff.log_part(th).0;
        let h = pair.profile.h_value(th);
        w.write_record([crate::io::fmt(th), crate::io::fmt(l + h), crate::io::fmt(l), crate::io::fmt(h)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;
    use crate::sphere::north;
    use nalgebra::DVector;

    #[test]
    fn cutoff_examples() {
        let c = CutoffProfile::new(0.5).unwrap();
        assert_eq!(c.eval(0.25).unwrap(), 0.25);
        assert_eq!(c.eval(1.5).unwrap(), 1.0);
        let v = c.eval(0.75).unwrap();
        assert!((0.5..=1.0).contains(&v));
        assert!(c.eval(-1e-3).is_err());
        assert!(CutoffProfile::new(1.0).is_err());
        assert!(CutoffProfile::with_eta(0.5, 0.3).is_err());
    }

    #[test]
    fn cutoff_derivatives_consistent() {
        let c = CutoffProfile::new(0.5).unwrap();
        let h = 1e-6;
        for i in 1..200 {
            let t = 0.45 + 0.6 * i as f64 / 200.0;
            let (_, d1, d2) = c.derivs(t);
            let fd1 = (c.derivs(t + h).0 - c.derivs(t - h).0) / (2.0 * h);
            let fd2 = (c.derivs(t + h).1 - c.derivs(t - h).1) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-6, "t={t}");
            assert!((d2 - fd2).abs() < 1e-5, "t={t}");
            assert!(d1 >= 0.0);
        }
    }

    #[test]
    fn sphere_green_matches_closed_log() {
        // round spheres: G = c_n − log(1 − cos θ), c_4 = log 2 − 5/6
        assert!((round_green_constant(4) - (2f64.ln() - 5.0 / 6.0)).abs() < 1e-15);
        for n in [4usize, 6] {
            let model = ManifoldModel::new(&ModelSpec::sphere(n, 60)).unwrap();
            let prof = GreenProfile::with_degree(&model, CutoffProfile::new(default_rho()).unwrap(), 2048).unwrap();
            let c = round_green_constant(n);
            for &th in &[0.3, 1.0, 2.0, 3.0] {
                let exact = -(1.0 - f64::cos(th)).ln() + c;
                let spec = prof.g_spectral(th, 2048);
                assert!((spec - exact).abs() < 1e-5, "n={n} θ={th}: {spec} vs {exact}");
                assert!((prof.g_value(th) - exact).abs() < 1e-12);
                assert!((prof.h.value(th) - prof.h_value(th)).abs() < 1e-10);
            }
        }
        let model = ManifoldModel::new(&ModelSpec::sphere(4, 60)).unwrap();
        let prof = GreenProfile::with_degree(&model, CutoffProfile::new(default_rho()).unwrap(), 1024).unwrap();
        assert!((prof.h_diag() - (2.0 * 2f64.ln() - 5.0 / 6.0)).abs() < 1e-12);
        assert!((prof.h.value(0.0) - prof.h_diag()).abs() < 1e-9);
        let pair = green_pair(&model, &north(4), prof.cutoff).unwrap();
        assert!(pair.tail < DEFAULT_TAIL_TOL);
    }


    fn full6() -> ManifoldModel {
        ManifoldModel::new(&ModelSpec::sphere(4, 6).full()).unwrap()
    }

    #[test]
    fn representation_formula_on_random_fields() {
        use crate::operators::{apply_gjms, q_average};
        use crate::sphere::random_point;
        use rand::{Rng, SeedableRng};
        let m = full6();
        let prof = Arc::new(GreenProfile::with_degree(&m, CutoffProfile::new(default_rho()).unwrap(), 256).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_point(4, &mut rng);
            let pair = green_pair_with(&m, &a, prof.clone(), 1.0).unwrap();
            let psi = m.field(DVector::from_fn(m.n_modes(), |_, _| rng.random_range(-1.0..1.0))).unwrap();
            let p = apply_gjms(&m, &psi).unwrap();
            let lhs = pair.g_field.coeffs.dot(&p.coeffs) / m.kappa1;
            let rhs = m.eval_at(&psi, &a) - q_average(&m, &psi);
            assert!((lhs - rhs).abs() < 1e-6 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
            // ∫ Q G(a,·) = 0
            let qg = m.integrate(&pair.g_field.values) * m.q_const;
            assert!(qg.abs() < 1e-8 * m.q_const * pair.g_field.l2_norm());
        }
    }

    #[test]
    fn symmetry_and_isometry_equivariance() {
        use crate::sphere::{random_point, random_rotation};
        use rand::SeedableRng;
        let m = full6();
        let prof = Arc::new(GreenProfile::with_degree(&m, CutoffProfile::new(default_rho()).unwrap(), 256).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let a = random_point(4, &mut rng);
            let b = random_point(4, &mut rng);
            let pa = green_pair_with(&m, &a, prof.clone(), 1.0).unwrap();
            let pb = green_pair_with(&m, &b, prof.clone(), 1.0).unwrap();
            assert!((m.eval_at(&pa.g_field, &b) - m.eval_at(&pb.g_field, &a)).abs() < 1e-8);
            // antipodal pair: G(a,x) = G(-a,-x)
            let neg = green_pair_with(&m, &(-&a), prof.clone(), 1.0).unwrap();
            let x = random_point(4, &mut rng);
            assert!((m.eval_at(&pa.g_field, &x) - m.eval_at(&neg.g_field, &(-&x))).abs() < 1e-8);
            let r = random_rotation(4, &mut rng);
            let ra = green_pair_with(&m, &(&r * &a), prof.clone(), 1.0).unwrap();
            assert!((m.eval_at(&pa.g_field, &x) - m.eval_at(&ra.g_field, &(&r * &x))).abs() < 1e-8);
            assert!((pa.h(&x) - ra.h(&(&r * &x))).abs() < 1e-12);
        }
    }

    #[test]
    fn regular_part_constant_on_sphere() {
        use crate::sphere::random_point;
        use rand::SeedableRng;
        let m = ManifoldModel::new(&ModelSpec::sphere(4, 60)).unwrap();
        let prof = Arc::new(GreenProfile::new(&m, CutoffProfile::new(default_rho()).unwrap()).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let vals: Vec<f64> = (0..5)
            .map(|_| {
                let a = random_point(4, &mut rng);
                let fb = full6();
                let p = green_pair_with(&fb, &a, prof.clone(), 1.0).unwrap();
                p.h(&a)
            })
            .collect();
        let spread = vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-6);
        assert!(prof.geometric);
    }

    #[test]
    fn log_coefficient_is_two() {
        let m = ManifoldModel::new(&ModelSpec::sphere(4, 60)).unwrap();
        let prof = GreenProfile::new(&m, CutoffProfile::new(default_rho()).unwrap()).unwrap();
        // least-squares slope of the spectral sum against log d on a dyadic range
        let ds: Vec<f64> = (0..5).map(|i| 0.08 / 2f64.powi(i)).collect();
        let xs: Vec<f64> = ds.iter().map(|d| d.ln()).collect();
        let ys: Vec<f64> = ds.iter().map(|&d| prof.g_spectral(d, 2048)).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / 5.0, ys.iter().sum::<f64>() / 5.0);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let slope = sxy / sxx;
        assert!((slope + 2.0).abs() < 0.02, "slope {slope}");
    }

    #[test]
    fn probe_is_stable_and_exact_on_log_plus_one() {
        let m = ManifoldModel::new(&ModelSpec::sphere(4, 60)).unwrap();
        let cut = CutoffProfile::new(default_rho()).unwrap();
        let pair = green_pair(&m, &north(4), cut).unwrap();
        let r = cut.rho;
        let rows = regular_part_probe(&m, &pair, &[r / 2.0, r / 4.0, r / 8.0]).unwrap();
        let sups: Vec<f64> = rows.iter().map(|x| x.sup_h).collect();
        let spread = sups.iter().cloned().fold(f64::MIN, f64::max) - sups.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 5e-2);
        assert!(regular_part_probe(&m, &pair, &[1e-3]).is_err());
        let rows = regular_part_probe_fn(|t| cut.log_part(t).0 + 1.0, &cut, &[r / 2.0, r / 4.0], 0.0).unwrap();
        for row in rows {
            assert!((row.sup_h - 1.0).abs() < 1e-12 && row.grad_h < 1e-8);
        }
    }

    #[test]
    fn under_resolved_model_is_rejected() {
        let m = ManifoldModel::new(&ModelSpec::sphere(4, 8)).unwrap();
        let r = green_pair(&m, &north(4), CutoffProfile::new(default_rho()).unwrap());
        assert!(matches!(r, Err(QcError::Resolution(_))));
    }

    #[test]
    fn synthetic_profile_is_flagged() {
        let m = ManifoldModel::new(&ModelSpec::synthetic(4, 30, vec![(2, -5.0)], 2)).unwrap();
        let p = GreenProfile::with_degree(&m, CutoffProfile::new(default_rho()).unwrap(), 256).unwrap();
        assert!(!p.geometric);
        let deg = ManifoldModel::new(&ModelSpec::synthetic(4, 30, vec![(2, 0.0)], 1)).unwrap();
        assert!(GreenProfile::with_degree(&deg, CutoffProfile::new(default_rho()).unwrap(), 64).is_err());
    }
}
