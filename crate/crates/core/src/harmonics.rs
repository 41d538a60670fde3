//! Orthonormal spherical harmonic bases with matched quadrature.
//!
//! Zonal functions about an axis use the orthonormal Gegenbauer family for
//! the weight `(1-x^2)^{(n-2)/2}`, `x = cos θ`; sector `ℓ` functions are
//! `sin^ℓ θ · q_j(cos θ) · Y_ℓ(ω)` with `q_j` orthonormal for the weight
//! `(1-x^2)^{(n-2)/2+ℓ}`.

use crate::special::{gauss_jacobi, harmonic_dim, sphere_area, GegenbauerFamily, Quadrature};
use crate::sphere::Point;
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

/// Zonal (axisymmetric) basis and quadrature in the polar variable.
#[derive(Debug, Clone)]
pub struct ZonalBasis {
    pub n: usize,
    pub kmax: usize,
    pub fam: GegenbauerFamily,
    /// `x_j = cos θ_j`, ascending.
    pub x: Vec<f64>,
    /// Volume weights: `Σ_j vol_j f(x_j) ≈ ∫_{S^n} f dV` for zonal f.
    pub vol: Vec<f64>,
    /// `Z_k(x_j)`, nodes × degrees.
    pub synth: DMatrix<f64>,
    scale: f64,
}

impl ZonalBasis {
    pub fn new(n: usize, kmax: usize, npts: usize) -> Self {
        let a = (n as f64 - 2.0) / 2.0;
        let q: Quadrature = gauss_jacobi(npts, a);
        let wn1 = sphere_area(n - 1);
        let fam = GegenbauerFamily::new(a, kmax);
        let scale = 1.0 / wn1.sqrt();
        let mut synth = DMatrix::zeros(npts, kmax + 1);
        let mut p = vec![0.0; kmax + 1];
        for (j, x) in q.nodes.iter().enumerate() {
            fam.eval(*x, &mut p);
            for k in 0..=kmax {
                synth[(j, k)] = p[k] * scale;
            }
        }
        let vol = q.weights.iter().map(|w| w * wn1).collect();
        ZonalBasis { n, kmax, fam, x: q.nodes, vol, synth, scale }
    }

    pub fn npts(&self) -> usize {
        self.x.len()
    }

    /// `Z_0..=Z_kmax` at `x = cos θ`.
    pub fn eval_all(&self, x: f64, out: &mut [f64]) {
        self.fam.eval(x, out);
        for v in out.iter_mut() {
            *v *= self.scale;
        }
    }

    /// Values and `d/dx` of all `Z_k`.
    pub fn eval_all_d(&self, x: f64, p: &mut [f64], dp: &mut [f64]) {
        self.fam.eval_d(x, p, dp);
        for (v, d) in p.iter_mut().zip(dp.iter_mut()) {
            *v *= self.scale;
            *d *= self.scale;
        }
    }

    pub fn eval_all_d2(&self, x: f64, p: &mut [f64], dp: &mut [f64], d2p: &mut [f64]) {
        self.fam.eval_d2(x, p, dp, d2p);
        for ((v, d), d2) in p.iter_mut().zip(dp.iter_mut()).zip(d2p.iter_mut()) {
            *v *= self.scale;
            *d *= self.scale;
            *d2 *= self.scale;
        }
    }

    /// `Σ c_k Z_k(x)`.
    pub fn eval(&self, coeffs: &[f64], x: f64) -> f64 {
        let mut p = vec![0.0; self.kmax + 1];
        self.eval_all(x, &mut p);
        coeffs.iter().zip(&p).map(|(c, v)| c * v).sum()
    }

    /// Profile value and θ-derivatives `(f, f_θ, f_θθ)` at polar angle θ.
    pub fn eval_theta_d2(&self, coeffs: &[f64], theta: f64) -> (f64, f64, f64) {
        let k = self.kmax + 1;
        let (mut p, mut dp, mut d2p) = (vec![0.0; k], vec![0.0; k], vec![0.0; k]);
        let (x, s) = (theta.cos(), theta.sin());
        self.eval_all_d2(x, &mut p, &mut dp, &mut d2p);
        let (mut f, mut fx, mut fxx) = (0.0, 0.0, 0.0);
        for (i, c) in coeffs.iter().enumerate() {
            f += c * p[i];
            fx += c * dp[i];
            fxx += c * d2p[i];
        }
        (f, -s * fx, s * s * fxx - x * fx)
    }

    /// Zonal coefficients of the node values `v`.
    pub fn analysis(&self, v: &[f64]) -> DVector<f64> {
        let w = DVector::from_iterator(v.len(), v.iter().zip(&self.vol).map(|(a, b)| a * b));
        self.synth.tr_mul(&w)
    }

    pub fn synthesis(&self, c: &[f64]) -> DVector<f64> {
        let cv = DVector::from_column_slice(c);
        &self.synth * cv
    }

    /// Weighted integral `∫ f dV` of zonal node values.
    pub fn integrate(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.vol).map(|(a, b)| a * b).sum()
    }
}

/// Functions of sector `ℓ` about an axis, tabulated on a zonal quadrature.
///
/// Basis function `j` is `b_j(θ) Y_ℓ(ω)` with `b_j = sin^ℓθ q_j(cos θ)` and
/// `Y_ℓ` unit normalized on S^{n-1}; it has total degree `ℓ + j`.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    pub ell: usize,
    pub fam: GegenbauerFamily,
    /// `b_j(x_i)`, nodes × j.
    pub table: DMatrix<f64>,
}

impl SectorBasis {
    pub fn new(zb: &ZonalBasis, ell: usize) -> Self {
        assert!(ell <= zb.kmax);
        let a = (zb.n as f64 - 2.0) / 2.0 + ell as f64;
        let jmax = zb.kmax - ell;
        let fam = GegenbauerFamily::new(a, jmax);
        let mut table = DMatrix::zeros(zb.npts(), jmax + 1);
        let mut p = vec![0.0; jmax + 1];
        for (i, x) in zb.x.iter().enumerate() {
            fam.eval(*x, &mut p);
            let s = (1.0 - x * x).max(0.0).sqrt().powi(ell as i32);
            for j in 0..=jmax {
                table[(i, j)] = s * p[j];
            }
        }
        SectorBasis { ell, fam, table }
    }

    /// `b_j` at polar angle θ.
    pub fn eval_all(&self, theta: f64, out: &mut [f64]) {
        self.fam.eval(theta.cos(), out);
        let s = theta.sin().powi(self.ell as i32);
        for v in out.iter_mut() {
            *v *= s;
        }
    }

    /// Radial measure weights: the `(1-x^2)^{(n-2)/2} dx` part of the volume,
    /// i.e. zonal volume weights divided by `ω_{n-1}`.
    pub fn radial_weights(zb: &ZonalBasis) -> Vec<f64> {
        let wn1 = sphere_area(zb.n - 1);
        zb.vol.iter().map(|v| v / wn1).collect()
    }
}

/// A real hyperspherical harmonic, labelled by the chain of degrees
/// `k_n ≥ k_{n-1} ≥ … ≥ k_1` and a trigonometric type on the circle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mode {
    /// `[k_n, k_{n-1}, …, k_1]`
    pub chain: Vec<usize>,
    /// 0: constant on S^1, 1: cos, 2: sin
    pub trig: u8,
}

impl Mode {
    pub fn degree(&self) -> usize {
        self.chain[0]
    }

    pub fn is_zonal(&self) -> bool {
        self.chain.len() < 2 || self.chain[1] == 0
    }
}

fn enumerate_chains(levels: usize, deg: usize) -> Vec<(Vec<usize>, u8)> {
    // levels = number of entries in the chain (n for S^n)
    if levels == 1 {
        if deg == 0 {
            return vec![(vec![0], 0)];
        }
        return vec![(vec![deg], 1), (vec![deg], 2)];
    }
    let mut out = Vec::new();
    for l in 0..=deg {
        for (mut sub, t) in enumerate_chains(levels - 1, l) {
            let mut c = vec![deg];
            c.append(&mut sub);
            out.push((c, t));
        }
    }
    out
}

/// Full (non-symmetric) harmonic basis on S^n up to degree `lmax` with a
/// product Gauss quadrature; intended for small `lmax`.
#[derive(Debug, Clone)]
pub struct FullBasis {
    pub n: usize,
    pub lmax: usize,
    pub modes: Vec<Mode>,
    pub points: Vec<Point>,
    pub vol: Vec<f64>,
    pub synth: DMatrix<f64>,
    // families[j-2][l]: weight exponent (j-2)/2 + l, degree up to lmax - l
    families: Vec<Vec<GegenbauerFamily>>,
}

impl FullBasis {
    pub fn new(n: usize, lmax: usize) -> Self {
        assert!(n >= 2);
        let mut modes = Vec::new();
        for k in 0..=lmax {
            for (chain, trig) in enumerate_chains(n, k) {
                modes.push(Mode { chain, trig });
            }
        }
        let families: Vec<Vec<GegenbauerFamily>> = (2..=n)
            .map(|j| {
                (0..=lmax)
                    .map(|l| GegenbauerFamily::new((j as f64 - 2.0) / 2.0 + l as f64, lmax - l))
                    .collect()
            })
            .collect();
        // product quadrature
        let level_rules: Vec<Quadrature> = (2..=n).map(|j| gauss_jacobi(lmax + 1, (j as f64 - 2.0) / 2.0)).collect();
        let nphi = 2 * lmax + 2;
        let mut points = Vec::new();
        let mut vol = Vec::new();
        let mut idx = vec![0usize; n - 1];
        loop {
            // idx[0] ↔ level n, idx[n-2] ↔ level 2
            let mut w = 1.0;
            let mut cosv = vec![0.0; n - 1];
            for (t, &i) in idx.iter().enumerate() {
                let rule = &level_rules[n - 2 - t];
                w *= rule.weights[i];
                cosv[t] = rule.nodes[i];
            }
            for p in 0..nphi {
                let phi = 2.0 * PI * p as f64 / nphi as f64;
                let mut x = DVector::zeros(n + 1);
                let mut r = 1.0;
                for (t, c) in cosv.iter().enumerate() {
                    let j = n - t;
                    x[j] = r * c;
                    r *= (1.0 - c * c).max(0.0).sqrt();
                }
                x[1] = r * phi.sin();
                x[0] = r * phi.cos();
                points.push(x);
                vol.push(w * 2.0 * PI / nphi as f64);
            }
            let mut t = n - 2;
            loop {
                idx[t] += 1;
                if idx[t] <= lmax {
                    break;
                }
                idx[t] = 0;
                if t == 0 {
                    break;
                }
                t -= 1;
            }
            if idx.iter().all(|&i| i == 0) {
                break;
            }
        }
        let mut fb = FullBasis { n, lmax, modes, points, vol, synth: DMatrix::zeros(0, 0), families };
        let mut synth = DMatrix::zeros(fb.points.len(), fb.modes.len());
        for (i, p) in fb.points.iter().enumerate() {
            let v = fb.eval_modes(p);
            for (j, val) in v.iter().enumerate() {
                synth[(i, j)] = *val;
            }
        }
        fb.synth = synth;
        fb
    }

    /// Values of all modes at the point x.
    pub fn eval_modes(&self, x: &Point) -> Vec<f64> {
        let n = self.n;
        let lmax = self.lmax;
        // per level j = n..2: cos θ_j, sin θ_j
        let mut cos_l = vec![1.0; n + 1];
        let mut sin_l = vec![0.0; n + 1];
        let mut r2: f64 = x.iter().map(|v| v * v).sum();
        for j in (2..=n).rev() {
            let r = r2.sqrt();
            let rest = (r2 - x[j] * x[j]).max(0.0);
            if r > 1e-300 {
                cos_l[j] = (x[j] / r).clamp(-1.0, 1.0);
                sin_l[j] = rest.sqrt() / r;
            } else {
                cos_l[j] = 1.0;
                sin_l[j] = 0.0;
            }
            r2 = rest;
        }
        let phi = x[1].atan2(x[0]);
        // tables[j][l][i] = sin^l q^{(j,l)}_i(cos)
        let mut tables: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n - 1);
        for j in 2..=n {
            let mut per_l = Vec::with_capacity(lmax + 1);
            for l in 0..=lmax {
                let fam = &self.families[j - 2][l];
                let mut p = vec![0.0; lmax - l + 1];
                fam.eval(cos_l[j], &mut p);
                let s = sin_l[j].powi(l as i32);
                for v in p.iter_mut() {
                    *v *= s;
                }
                per_l.push(p);
            }
            tables.push(per_l);
        }
        self.modes
            .iter()
            .map(|m| {
                let mut v = 1.0;
                for t in 0..n - 1 {
                    let j = n - t;
                    let k = m.chain[t];
                    let l = m.chain[t + 1];
                    v *= tables[j - 2][l][k - l];
                }
                let l1 = m.chain[n - 1];
                v * match m.trig {
                    0 => 1.0 / (2.0 * PI).sqrt(),
                    1 => (l1 as f64 * phi).cos() / PI.sqrt(),
                    _ => (l1 as f64 * phi).sin() / PI.sqrt(),
                }
            })
            .collect()
    }

    /// Tangential derivative of all modes at `a` along the unit tangent `e`
    /// (sixth order central differences along the great circle).
    pub fn eval_modes_deriv(&self, a: &Point, e: &Point) -> Vec<f64> {
        let h: f64 = 2e-3;
        let coef: [(f64, f64); 3] = [(1.0, 45.0), (2.0, -9.0), (3.0, 1.0)];
        let mut out = vec![0.0; self.modes.len()];
        for (s, c) in coef {
            let t = s * h;
            let xp = a * t.cos() + e * t.sin();
            let xm = a * t.cos() - e * t.sin();
            let vp = self.eval_modes(&xp);
            let vm = self.eval_modes(&xm);
            for i in 0..out.len() {
                out[i] += c * (vp[i] - vm[i]);
            }
        }
        for v in out.iter_mut() {
            *v /= 60.0 * h;
        }
        out
    }

    pub fn dim_check(&self) -> bool {
        let expect: usize = (0..=self.lmax).map(|k| harmonic_dim(self.n, k)).sum();
        expect == self.modes.len()
    }
}


/// A zonal function given by its coefficients in the unit-normalized zonal
/// harmonics `Z_k` about an arbitrary center.
#[derive(Debug, Clone)]
pub struct ZonalSeries {
    pub n: usize,
    pub coeffs: Vec<f64>,
    fam: GegenbauerFamily,
    scale: f64,
}

impl ZonalSeries {
    pub fn new(n: usize, coeffs: Vec<f64>) -> Self {
        let kmax = coeffs.len().saturating_sub(1).max(1);
        let fam = GegenbauerFamily::new((n as f64 - 2.0) / 2.0, kmax);
        ZonalSeries { n, coeffs, fam, scale: 1.0 / sphere_area(n - 1).sqrt() }
    }

    pub fn kmax(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn value(&self, theta: f64) -> f64 {
        let mut p = vec![0.0; self.fam.kmax + 1];
        self.fam.eval(theta.cos(), &mut p);
        self.coeffs.iter().zip(&p).map(|(c, v)| c * v).sum::<f64>() * self.scale
    }

    /// `(f, f_θ, f_θθ)`.
    pub fn eval_d2(&self, theta: f64) -> (f64, f64, f64) {
        let m = self.fam.kmax + 1;
        let (mut p, mut dp, mut d2p) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        let (x, s) = (theta.cos(), theta.sin());
        self.fam.eval_d2(x, &mut p, &mut dp, &mut d2p);
        let (mut f, mut fx, mut fxx) = (0.0, 0.0, 0.0);
        for (i, c) in self.coeffs.iter().enumerate() {
            f += c * p[i];
            fx += c * dp[i];
            fxx += c * d2p[i];
        }
        let sc = self.scale;
        (f * sc, -s * fx * sc, (s * s * fxx - x * fx) * sc)
    }

    /// Laplace-Beltrami of the series at polar angle θ (termwise).
    pub fn laplacian(&self, theta: f64) -> f64 {
        let nf = self.n as f64;
        let mut p = vec![0.0; self.fam.kmax + 1];
        self.fam.eval(theta.cos(), &mut p);
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| -(k as f64) * (k as f64 + nf - 1.0) * c * p[k])
            .sum::<f64>()
            * self.scale
    }

    /// Relative L² energy of the coefficients above degree `k`.
    pub fn tail_fraction(&self, k: usize) -> f64 {
        let total: f64 = self.coeffs.iter().skip(1).map(|c| c * c).sum();
        let tail: f64 = self.coeffs.iter().skip(k + 1).map(|c| c * c).sum();
        if total == 0.0 {
            0.0
        } else {
            (tail / total).sqrt()
        }
    }
}

/// Zonal coefficients `∫ f_j(θ) Z_k(cos θ) dV`, `k ≤ kmax`, of several
/// profiles at once, by composite Gauss-Legendre over the θ-panels.
///
/// `f(θ, out)` fills `out[j] = f_j(θ)`. Panels are processed in fixed chunks
/// and summed in order, so the result does not depend on the thread count.
pub fn project_profiles<F>(n: usize, kmax: usize, panels: &[(f64, f64)], per_panel: usize, nprof: usize, f: F) -> Vec<Vec<f64>>
where
    F: Fn(f64, &mut [f64]) + Sync,
{
    use rayon::prelude::*;
    let wn1 = sphere_area(n - 1);
    let fam = GegenbauerFamily::new((n as f64 - 2.0) / 2.0, kmax.max(1));
    let base = Quadrature::legendre_on(per_panel, 0.0, 1.0);
    let chunks: Vec<Vec<Vec<f64>>> = panels
        .par_chunks(64)
        .map(|chunk| {
            let mut acc = vec![vec![0.0; kmax + 1]; nprof];
            let mut p = vec![0.0; fam.kmax + 1];
            let mut fv = vec![0.0; nprof];
            for &(a, b) in chunk {
                for (x, w) in base.nodes.iter().zip(&base.weights) {
                    let th = a + (b - a) * x;
                    f(th, &mut fv);
                    let wt = w * (b - a) * th.sin().powi(n as i32 - 1);
                    fam.eval(th.cos(), &mut p);
                    for (j, acc_j) in acc.iter_mut().enumerate() {
                        let c = wt * fv[j];
                        if c == 0.0 {
                            continue;
                        }
                        for k in 0..=kmax {
                            acc_j[k] += c * p[k];
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut out = vec![vec![0.0; kmax + 1]; nprof];
    for c in &chunks {
        for j in 0..nprof {
            for k in 0..=kmax {
                out[j][k] += c[j][k];
            }
        }
    }
    let s = wn1.sqrt();
    for o in out.iter_mut() {
        for v in o.iter_mut() {
            *v *= s;
        }
    }
    out
}

/// θ-panels on `[0, π]`: width `w0` near the pole, growing like `grow · θ`,
/// capped at `wmax`.
pub fn graded_panels(w0: f64, grow: f64, wmax: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut a = 0.0;
    while a < PI {
        let w = (grow * a).max(w0).min(wmax);
        let b = (a + w).min(PI);
        if PI - b < 0.25 * w {
            out.push((a, PI));
            break;
        }
        out.push((a, b));
        a = b;
    }
    out
}
