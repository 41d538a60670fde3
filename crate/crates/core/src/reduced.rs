//! The reduced functional `F_K` on `M^m` minus the fat diagonal, its
//! gradient, the indices `L_K`, `l_K`, and the critical-point search.

use crate::error::{QcError, Result};
use crate::green::GreenProfile;
use crate::io::fmt;
use crate::kfield::KField;
use crate::model::ManifoldModel;
use crate::sphere::{direction, distance, exp_coords, random_point, tangent_frame, Point};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

/// Relative tolerance of the gradient identity against chart differences.
pub const GRAD_ID_TOL: f64 = 1e-4;
/// Gradient norm accepted as critical.
pub const CRIT_TOL: f64 = 1e-9;
/// Chart step for Hessians by second differences.
pub const HESS_STEP: f64 = 1e-3 * PI;
/// Eigenvalues below this fraction of the spectral radius count as zero.
pub const DEGENERACY_REL: f64 = 1e-6;
/// Distance under which two critical configurations are merged.
pub const DEDUP_DIST: f64 = 1e-4;

/// Separation parameters: configurations need `min d(a_i,a_j) ≥ 4 C̄ η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Separation {
    pub eta: f64,
    pub c_bar: f64,
}

impl Default for Separation {
    fn default() -> Self {
        Separation { eta: 0.1, c_bar: 1.0 }
    }
}

impl Separation {
    pub fn min_dist(&self) -> f64 {
        4.0 * self.c_bar * self.eta
    }
}

/// Everything `F_K` depends on.
#[derive(Debug, Clone)]
pub struct Reduced {
    pub n: usize,
    pub m: usize,
    pub green: Arc<GreenProfile>,
    pub k: KField,
    pub scalar_curv: f64,
    pub sep: Separation,
    /// Points closer than this to a singular center are refused.
    pub resolution: f64,
}

/// θ-derivative and Laplacian of a zonal profile.
struct Radial {
    d1: f64,
    lap: f64,
}

impl Reduced {
    pub fn new(model: &ManifoldModel, green: Arc<GreenProfile>, k: KField, sep: Separation) -> Result<Self> {
        if k.n != model.n || green.n != model.n {
            return Err(QcError::DimensionMismatch { expected: model.n, got: k.n.min(green.n) });
        }
        Ok(Reduced {
            n: model.n,
            m: model.m,
            green,
            k,
            scalar_curv: model.scalar_curv,
            sep,
            resolution: PI / model.k_max as f64,
        })
    }

    /// Same functional with K replaced by `c K`.
    pub fn with_k(&self, k: KField) -> Self {
        Reduced { k, ..self.clone() }
    }

    pub fn check(&self, a: &[Point]) -> Result<()> {
        if a.len() != self.m {
            return Err(QcError::DimensionMismatch { expected: self.m, got: a.len() });
        }
        for p in a {
            if p.len() != self.n + 1 {
                return Err(QcError::DimensionMismatch { expected: self.n + 1, got: p.len() });
            }
        }
        let d = min_pair_distance(a);
        if d < self.sep.min_dist() {
            return Err(QcError::FatDiagonal { dist: d, min: self.sep.min_dist() });
        }
        Ok(())
    }

    fn h_radial(&self, theta: f64) -> Radial {
        let (_, d1, _) = self.green.h_d2(theta);
        Radial { d1, lap: self.green.h_laplacian(theta) }
    }

    fn g_radial(&self, theta: f64) -> Radial {
        let (_, d1, _) = self.green.g_d2(theta);
        Radial { d1, lap: self.green.g_laplacian(theta) }
    }

    fn check_point(&self, a: &[Point], i: usize, x: &Point) -> Result<()> {
        for (j, aj) in a.iter().enumerate() {
            if j != i {
                let d = distance(aj, x);
                if d < self.resolution {
                    return Err(QcError::Resolution(format!("point within {d:.3e} of the pole of G(a_{j},·)")));
                }
            }
        }
        Ok(())
    }

    /// `log F^A_i(x) = n (H(a_i,x) + Σ_{j≠i} G(a_j,x)) + log K(x)`.
    pub fn log_f_partial(&self, a: &[Point], i: usize, x: &Point) -> Result<f64> {
        self.check_point(a, i, x)?;
        let mut s = self.green.h_value(distance(&a[i], x));
        for (j, aj) in a.iter().enumerate() {
            if j != i {
                s += self.green.g_value(distance(aj, x));
            }
        }
        Ok(self.n as f64 * s + self.k.value(x).ln())
    }

    pub fn f_partial(&self, a: &[Point], i: usize, x: &Point) -> Result<f64> {
        Ok(self.log_f_partial(a, i, x)?.exp())
    }

    /// Gradient (ambient tangent vector) and Laplacian of `log F^A_i` at x.
    fn log_f_partial_d2(&self, a: &[Point], i: usize, x: &Point) -> Result<(Point, f64)> {
        self.check_point(a, i, x)?;
        let nf = self.n as f64;
        let mut grad = DVector::zeros(self.n + 1);
        let mut lap = 0.0;
        for (j, aj) in a.iter().enumerate() {
            let (th, dir) = direction(x, aj);
            let r = if j == i { self.h_radial(th) } else { self.g_radial(th) };
            if let Some(d) = dir {
                // θ(a,·) increases away from a
                grad -= d * (nf * r.d1);
            }
            lap += nf * r.lap;
        }
        let kv = self.k.value(x);
        let kg = self.k.grad(x);
        grad += &kg / kv;
        lap += self.k.laplacian(x) / kv - kg.norm_squared() / (kv * kv);
        Ok((grad, lap))
    }

    /// `(∇F^A_i/F^A_i, ΔF^A_i/F^A_i)` at `a_i`.
    pub fn f_partial_ratios(&self, a: &[Point], i: usize) -> Result<(Point, f64)> {
        let (g, lap) = self.log_f_partial_d2(a, i, &a[i])?;
        let g2 = g.norm_squared();
        Ok((g, lap + g2))
    }

    /// `F_K(A) = Σ_i (H(a_i,a_i) + Σ_{j≠i} G(a_i,a_j) + (2/n) log K(a_i))`.
    pub fn f_reduced(&self, a: &[Point]) -> Result<f64> {
        self.check(a)?;
        Ok(self.f_reduced_unchecked(a))
    }

    /// `(2/n) ∇F^A_i(a_i) / F^A_i(a_i)` for each i.
    pub fn grad_identity(&self, a: &[Point]) -> Result<Vec<Point>> {
        self.check(a)?;
        (0..a.len()).map(|i| Ok(self.log_f_partial_d2(a, i, &a[i])?.0 * (2.0 / self.n as f64))).collect()
    }

    /// Gradient of `F_K` by centered chart differences, in each tangent frame.
    pub fn grad_fd(&self, a: &[Point], h: f64) -> Result<Vec<Vec<f64>>> {
        self.check(a)?;
        let mut out = Vec::with_capacity(a.len());
        for i in 0..a.len() {
            let fr = tangent_frame(&a[i]);
            let mut gi = vec![0.0; self.n];
            for (k, g) in gi.iter_mut().enumerate() {
                let mut c = vec![0.0; self.n];
                let mut b = a.to_vec();
                c[k] = h;
                b[i] = exp_coords(&a[i], &fr, &c);
                let fp = self.f_reduced_unchecked(&b);
                c[k] = -h;
                b[i] = exp_coords(&a[i], &fr, &c);
                let fm = self.f_reduced_unchecked(&b);
                *g = (fp - fm) / (2.0 * h);
            }
            out.push(gi);
        }
        Ok(out)
    }

    fn f_reduced_unchecked(&self, a: &[Point]) -> f64 {
        let h0 = self.green.h_diag();
        let mut s = 0.0;
        for i in 0..a.len() {
            s += h0 + 2.0 / self.n as f64 * self.k.value(&a[i]).ln();
            for j in 0..a.len() {
                if j != i {
                    s += self.green.g_value(distance(&a[i], &a[j]));
                }
            }
        }
        s
    }

    /// Gradient by the identity, cross-checked against chart differences.
    pub fn grad_f_reduced(&self, a: &[Point]) -> Result<Vec<Point>> {
        let g = self.grad_identity(a)?;
        let fd = self.grad_fd(a, 1e-5)?;
        let den = g.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut num = 0.0f64;
        for (i, (gi, fi)) in g.iter().zip(&fd).enumerate() {
            for (k, e) in tangent_frame(&a[i]).iter().enumerate() {
                num = num.max((gi.dot(e) - fi[k]).abs());
            }
        }
        let err = num / den.max(1.0);
        if err > GRAD_ID_TOL {
            return Err(QcError::GradientInconsistency(err));
        }
        Ok(g)
    }

    /// `L_K(A) = −Σ_i F_i^{(6−n)/(2n)} L_g(F_i^{(n−2)/(2n)})(a_i)`, with
    /// `L_g = −Δ + (n−2)/(4(n−1)) R`.
    #[allow(non_snake_case)]
    pub fn index_L(&self, a: &[Point]) -> Result<f64> {
        self.check(a)?;
        let nf = self.n as f64;
        let p = (nf - 2.0) / (2.0 * nf);
        let cr = (nf - 2.0) / (4.0 * (nf - 1.0)) * self.scalar_curv;
        let mut s = 0.0;
        for i in 0..a.len() {
            let e = self.log_f_partial(a, i, &a[i])?;
            let (g, lap) = self.log_f_partial_d2(a, i, &a[i])?;
            // Δ e^{pE} = e^{pE}(pΔE + p²|∇E|²)
            s += (2.0 / nf * e).exp() * (p * lap + p * p * g.norm_squared() - cr);
        }
        Ok(s)
    }

    /// `l_K(A) = Σ_i [Δ_{g_{a_i}} F_i(a_i) / F_i(a_i)^{(n−2)/n} − n/(2(n−1)) R F_i(a_i)^{2/n}]`,
    /// the Laplacian taken by fourth-order differences in the flat chart.
    pub fn index_l(&self, a: &[Point]) -> Result<f64> {
        self.check(a)?;
        let nf = self.n as f64;
        let h = 1e-2;
        let mut s = 0.0;
        for i in 0..a.len() {
            let fr = tangent_frame(&a[i]);
            let f0 = self.f_partial(a, i, &a[i])?;
            let mut lap = 0.0;
            for k in 0..self.n {
                let mut v = [0.0; 5];
                for (t, st) in [-2.0, -1.0, 1.0, 2.0].iter().enumerate() {
                    let mut y = vec![0.0; self.n];
                    y[k] = st * h;
                    let x = crate::sphere::chart_to_point(&a[i], &fr, &y);
                    v[t] = self.f_partial(a, i, &x)?;
                }
                lap += (-v[0] + 16.0 * v[1] - 30.0 * f0 + 16.0 * v[2] - v[3]) / (12.0 * h * h);
            }
            s += lap / f0.powf((nf - 2.0) / nf) - nf / (2.0 * (nf - 1.0)) * self.scalar_curv * f0.powf(2.0 / nf);
        }
        Ok(s)
    }

    /// Points of the product normal chart about A.
    fn chart_config(&self, a: &[Point], frames: &[Vec<Point>], xi: &[f64]) -> Vec<Point> {
        a.iter()
            .enumerate()
            .map(|(i, ai)| exp_coords(ai, &frames[i], &xi[i * self.n..(i + 1) * self.n]))
            .collect()
    }

    /// Hessian of `F_K` by second differences in the product normal chart.
    pub fn hessian(&self, a: &[Point], h: f64) -> Result<DMatrix<f64>> {
        self.check(a)?;
        let d = self.n * a.len();
        let frames: Vec<Vec<Point>> = a.iter().map(tangent_frame).collect();
        let f = |xi: &[f64]| self.f_reduced_unchecked(&self.chart_config(a, &frames, xi));
        let f0 = self.f_reduced_unchecked(a);
        let mut hm = DMatrix::zeros(d, d);
        let mut xi = vec![0.0; d];
        for k in 0..d {
            xi[k] = h;
            let fp = f(&xi);
            xi[k] = -h;
            let fm = f(&xi);
            xi[k] = 0.0;
            hm[(k, k)] = (fp - 2.0 * f0 + fm) / (h * h);
            for l in 0..k {
                let mut v = 0.0;
                for (sk, sl, w) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                    xi[k] = sk * h;
                    xi[l] = sl * h;
                    v += w * f(&xi);
                }
                xi[k] = 0.0;
                xi[l] = 0.0;
                let e = v / (4.0 * h * h);
                hm[(k, l)] = e;
                hm[(l, k)] = e;
            }
        }
        Ok(hm)
    }

    fn grad_coords(&self, a: &[Point], frames: &[Vec<Point>]) -> Result<DVector<f64>> {
        let g = self.grad_identity(a)?;
        Ok(DVector::from_iterator(
            self.n * a.len(),
            g.iter().zip(frames).flat_map(|(gi, fr)| fr.iter().map(move |e| gi.dot(e)).collect::<Vec<_>>()),
        ))
    }

    /// Newton iteration on `∇F_K = 0` from one seed.
    pub fn newton(&self, seed: &[Point], max_iter: usize) -> Result<Vec<Point>> {
        let mut a = seed.to_vec();
        for _ in 0..max_iter {
            self.check(&a)?;
            let frames: Vec<Vec<Point>> = a.iter().map(tangent_frame).collect();
            let g = self.grad_coords(&a, &frames)?;
            if g.norm() < CRIT_TOL {
                return Ok(a);
            }
            let hm = self.hessian(&a, HESS_STEP)?;
            let eig = hm.clone().symmetric_eigen();
            let scale = eig.eigenvalues.amax().max(1e-300);
            // pseudo-inverse Newton step; keeps saddles reachable
            let mut step = DVector::zeros(g.len());
            for (j, lam) in eig.eigenvalues.iter().enumerate() {
                if lam.abs() > 1e-10 * scale {
                    let v = eig.eigenvectors.column(j);
                    step -= v * (v.dot(&g) / lam);
                }
            }
            let sn = step.norm();
            if sn > 0.3 {
                step *= 0.3 / sn;
            }
            if sn == 0.0 {
                break;
            }
            a = self.chart_config(&a, &frames, step.as_slice());
        }
        let frames: Vec<Vec<Point>> = a.iter().map(tangent_frame).collect();
        let g = self.grad_coords(&a, &frames)?;
        if g.norm() < CRIT_TOL {
            Ok(a)
        } else {
            Err(QcError::Convergence(format!("Newton stalled at gradient norm {:.3e}", g.norm())))
        }
    }

    /// Fully classified critical configuration.
    pub fn classify(&self, a: &[Point]) -> Result<CritConfig> {
        let g = self.grad_f_reduced(a)?;
        let gradnorm = g.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
        let hm = self.hessian(a, HESS_STEP)?;
        let mut eig: Vec<f64> = hm.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let radius = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let thr = DEGENERACY_REL * radius;
        let morse = eig.iter().filter(|v| **v < -thr).count();
        let degenerate = radius == 0.0 || eig.iter().any(|v| v.abs() <= thr);
        let big_l = self.index_L(a)?;
        let small_l = self.index_l(a)?;
        Ok(CritConfig {
            points: canonical_order(a).iter().map(|p| p.iter().copied().collect()).collect(),
            f: self.f_reduced(a)?,
            gradnorm,
            hessian_eigs: eig,
            morse,
            degenerate,
            big_l,
            small_l,
            i_inf: ((self.n + 1) * self.m) as i64 - 1 - morse as i64,
            in_f_inf: big_l < 0.0,
        })
    }

    /// Newton from every seed, then deduplication of unordered tuples.
    pub fn find_critical_points(&self, seeds: &[Vec<Point>]) -> CritSearch {
        let outcomes: Vec<std::result::Result<Vec<Point>, String>> =
            seeds.par_iter().map(|s| self.newton(s, 60).map_err(|e| e.to_string())).collect();
        let mut found: Vec<Vec<Point>> = Vec::new();
        let mut failures = Vec::new();
        for (k, o) in outcomes.into_iter().enumerate() {
            match o {
                Ok(a) => {
                    if !found.iter().any(|b| config_distance(b, &a) < DEDUP_DIST) {
                        found.push(a);
                    }
                }
                Err(e) => failures.push(SeedFailure { seed: k, reason: e }),
            }
        }
        let mut configs = Vec::new();
        for a in found {
            match self.classify(&a) {
                Ok(c) => configs.push(c),
                Err(e) => failures.push(SeedFailure { seed: usize::MAX, reason: e.to_string() }),
            }
        }
        configs.sort_by(|x, y| {
            x.f.partial_cmp(&y.f).unwrap().then_with(|| {
                let fx: Vec<f64> = x.points.concat();
                let fy: Vec<f64> = y.points.concat();
                fx.partial_cmp(&fy).unwrap()
            })
        });
        CritSearch { configs, failures }
    }

    /// Seeds: all off-diagonal tuples of the K-axis poles plus random restarts.
    pub fn default_seeds<R: Rng>(&self, per_factor: usize, rng: &mut R) -> Vec<Vec<Point>> {
        let poles = [self.k.axis.clone(), -self.k.axis.clone()];
        let mut seeds = Vec::new();
        for mask in 0..(1usize << self.m) {
            let a: Vec<Point> = (0..self.m).map(|i| poles[(mask >> i) & 1].clone()).collect();
            if min_pair_distance(&a) >= self.sep.min_dist() {
                seeds.push(a);
            }
        }
        let mut tries = 0;
        let want = seeds.len() + per_factor * self.m;
        while seeds.len() < want && tries < 100 * want {
            tries += 1;
            let a: Vec<Point> = (0..self.m).map(|_| random_point(self.n, rng)).collect();
            if min_pair_distance(&a) >= 2.0 * self.sep.min_dist() {
                seeds.push(a);
            }
        }
        seeds
    }
}

pub fn min_pair_distance(a: &[Point]) -> f64 {
    let mut d = f64::INFINITY;
    for i in 0..a.len() {
        for j in 0..i {
            d = d.min(distance(&a[i], &a[j]));
        }
    }
    d
}

fn lex_cmp(x: &Point, y: &Point) -> std::cmp::Ordering {
    x.iter().partial_cmp(y.iter()).unwrap()
}

pub fn canonical_order(a: &[Point]) -> Vec<Point> {
    let mut v = a.to_vec();
    v.sort_by(lex_cmp);
    v
}

/// Distance between unordered tuples: min over matchings of the max
/// pointwise geodesic distance.
pub fn config_distance(a: &[Point], b: &[Point]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut idx: Vec<usize> = (0..b.len()).collect();
    let mut best = f64::INFINITY;
    permute(&mut idx, 0, &mut |p| {
        let d = a.iter().zip(p).map(|(x, &j)| distance(x, &b[j])).fold(0.0, f64::max);
        best = best.min(d);
    });
    best
}

fn permute(idx: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == idx.len() {
        f(idx);
        return;
    }
    for i in k..idx.len() {
        idx.swap(k, i);
        permute(idx, k + 1, f);
        idx.swap(k, i);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CritConfig {
    /// Points in lexicographic order.
    pub points: Vec<Vec<f64>>,
    pub f: f64,
    pub gradnorm: f64,
    pub hessian_eigs: Vec<f64>,
    pub morse: usize,
    pub degenerate: bool,
    #[serde(rename = "L_K")]
    pub big_l: f64,
    #[serde(rename = "l_K")]
    pub small_l: f64,
    pub i_inf: i64,
    pub in_f_inf: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedFailure {
    pub seed: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CritSearch {
    pub configs: Vec<CritConfig>,
    pub failures: Vec<SeedFailure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NdReport {
    pub nd0: bool,
    pub nd_minus: bool,
    pub nd_plus: bool,
    pub nd: bool,
    /// True when the list was empty and all predicates hold vacuously.
    pub vacuous: bool,
}

/// The nondegeneracy predicates; `threshold` is the smallest |L_K| counted
/// as nonzero.
pub fn nd_predicates(list: &[CritConfig], threshold: f64) -> NdReport {
    if list.is_empty() {
        log::warn!("empty critical set: nondegeneracy holds vacuously");
    }
    let nd0 = list.iter().all(|c| c.big_l.abs() > threshold);
    NdReport {
        nd0,
        nd_minus: list.iter().all(|c| c.big_l < -threshold),
        nd_plus: list.iter().all(|c| c.big_l > threshold),
        nd: nd0 && list.iter().all(|c| !c.degenerate),
        vacuous: list.is_empty(),
    }
}

/// CSV with columns `a_coords,F,gradnorm,morse,L_K,l_K,i_inf,in_Finf`;
/// coordinates of all points joined by `;`.
pub fn write_crit_csv<W: std::io::Write>(list: &[CritConfig], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["a_coords", "F", "gradnorm", "morse", "L_K", "l_K", "i_inf", "in_Finf"])?;
    for c in list {
        let coords: Vec<String> = c.points.iter().flatten().map(|v| fmt(*v)).collect();
        w.write_record([
            coords.join(";"),
            fmt(c.f),
            fmt(c.gradnorm),
            c.morse.to_string(),
            fmt(c.big_l),
            fmt(c.small_l),
            c.i_inf.to_string(),
            c.in_f_inf.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Independent one-dimensional evaluation of `L_K` for m = 1 at the poles of
/// a zonal K: `log F` is radial there, so `Δ log F = n (log F)''(0)` with the
/// second derivative taken by differences along a meridian.
#[allow(non_snake_case)]
pub fn zonal_pole_L(green: &GreenProfile, k: &KField, scalar_curv: f64, south: bool) -> f64 {
    let n = green.n;
    let nf = n as f64;
    let sgn = if south { -1.0 } else { 1.0 };
    let e = |t: f64| nf * green.h_value(t) + k.p(sgn * t.cos()).0.ln();
    let h = 1e-2;
    let d2 = (-e(2.0 * h) + 16.0 * e(h) - 30.0 * e(0.0) + 16.0 * e(-h) - e(-2.0 * h)) / (12.0 * h * h);
    let p = (nf - 2.0) / (2.0 * nf);
    let cr = (nf - 2.0) / (4.0 * (nf - 1.0)) * scalar_curv;
    (2.0 / nf * e(0.0)).exp() * (p * nf * d2 - cr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::{default_rho, CutoffProfile};
    use crate::kfield::KSpec;
    use crate::model::ModelSpec;
    use crate::sphere::{north, south};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn sphere() -> &'static (ManifoldModel, Arc<GreenProfile>) {
        static S: OnceLock<(ManifoldModel, Arc<GreenProfile>)> = OnceLock::new();
        S.get_or_init(|| {
            let m = ManifoldModel::new(&ModelSpec::sphere(4, 60)).unwrap();
            let g = Arc::new(GreenProfile::new(&m, CutoffProfile::new(default_rho()).unwrap()).unwrap());
            (m, g)
        })
    }

    fn synthetic2() -> &'static (ManifoldModel, Arc<GreenProfile>) {
        static S: OnceLock<(ManifoldModel, Arc<GreenProfile>)> = OnceLock::new();
        S.get_or_init(|| {
            let m = ManifoldModel::new(&ModelSpec::synthetic(4, 60, vec![], 2)).unwrap();
            let g = Arc::new(GreenProfile::new(&m, CutoffProfile::new(default_rho()).unwrap()).unwrap());
            (m, g)
        })
    }

    fn reduced(ctx: &(ManifoldModel, Arc<GreenProfile>), k: &KSpec) -> Reduced {
        Reduced::new(&ctx.0, ctx.1.clone(), KField::new(k, 4).unwrap(), Separation::default()).unwrap()
    }

    fn random_config(r: &Reduced, rng: &mut ChaCha8Rng) -> Vec<Point> {
        loop {
            let a: Vec<Point> = (0..r.m).map(|_| random_point(r.n, rng)).collect();
            if min_pair_distance(&a) > 2.0 * r.sep.min_dist() {
                return a;
            }
        }
    }

    #[test]
    fn constant_k_single_point() {
        let r = reduced(sphere(), &KSpec::constant(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<f64> = (0..10).map(|_| r.f_reduced(&random_config(&r, &mut rng)).unwrap()).collect();
        let spread = vals.iter().fold(f64::MIN, |m, v| m.max(*v)) - vals.iter().fold(f64::MAX, |m, v| m.min(*v));
        assert!(spread < 1e-8);
        assert!((vals[0] - r.green.h_diag()).abs() < 1e-12);
        let a = vec![north(4)];
        let f = r.f_partial(&a, 0, &a[0]).unwrap();
        assert!((f - (4.0 * r.green.h_diag()).exp()).abs() < 1e-12 * f);
        let g = r.grad_f_reduced(&a).unwrap();
        assert!(g[0].norm() < 1e-12);
    }

    #[test]
    fn scaling_k() {
        let spec = KSpec::one_plus_y1(0.3);
        let r = reduced(sphere(), &spec);
        let c = 2.7;
        let rc = r.with_k(KField::new(&spec.scaled(c), 4).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_config(&r, &mut rng);
        let x = random_point(4, &mut rng);
        let (f, fc) = (r.f_partial(&a, 0, &x).unwrap(), rc.f_partial(&a, 0, &x).unwrap());
        assert!((fc - c * f).abs() < 1e-13 * fc);
        let shift = rc.f_reduced(&a).unwrap() - r.f_reduced(&a).unwrap();
        assert!((shift - 0.5 * c.ln()).abs() < 1e-13);
        let (g, gc) = (r.grad_identity(&a).unwrap(), rc.grad_identity(&a).unwrap());
        assert!((&g[0] - &gc[0]).amax() < 1e-14);
        // the indices carry the weight F^{2/n}
        let (l, lc) = (r.index_L(&a).unwrap(), rc.index_L(&a).unwrap());
        assert!((lc - c.sqrt() * l).abs() < 1e-12 * lc.abs());
    }

    #[test]
    fn gradient_identity_random_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r1 = reduced(sphere(), &KSpec::ZonalPoly { coeffs: vec![2.0, 0.5, -0.3, 0.2], axis: Some(vec![0.2, -0.1, 0.4, 0.3, 0.8]) });
        let r2 = reduced(synthetic2(), &KSpec::one_plus_y1(0.3));
        for r in [&r1, &r2] {
            for _ in 0..10 {
                let a = random_config(r, &mut rng);
                r.grad_f_reduced(&a).unwrap();
            }
        }
    }

    #[test]
    fn two_point_compositional_and_symmetric() {
        let (_, prof) = synthetic2();
        let r = reduced(synthetic2(), &KSpec::one_plus_y1(0.3));
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_config(&r, &mut rng);
        // G from the plain spectral sum, without the log splitting
        let g21 = prof.g_spectral(distance(&a[1], &a[0]), prof.k_high());
        let want = (4.0 * (prof.h_diag() + g21)).exp() * r.k.value(&a[0]);
        let got = r.f_partial(&a, 0, &a[0]).unwrap();
        assert!((got - want).abs() < 1e-3 * want, "{got} {want}");
        let b = vec![a[1].clone(), a[0].clone()];
        assert_eq!(r.f_reduced(&a).unwrap(), r.f_reduced(&b).unwrap());
        assert!((r.index_L(&a).unwrap() - r.index_L(&b).unwrap()).abs() < 1e-12);
        assert!(matches!(r.f_reduced(&[a[0].clone(), a[0].clone()]), Err(QcError::FatDiagonal { .. })));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]

        #[test]
        fn relabeling_and_scaling_k(seed in proptest::prelude::any::<u64>(), c in 0.2f64..20.0) {
            let r = reduced(synthetic2(), &KSpec::one_plus_y1(0.3));
            let a = random_config(&r, &mut ChaCha8Rng::seed_from_u64(seed));
            let b: Vec<Point> = a.iter().rev().cloned().collect();
            let (fa, fb) = (r.f_reduced(&a).unwrap(), r.f_reduced(&b).unwrap());
            proptest::prop_assert!((fa - fb).abs() <= 1e-12 * fa.abs().max(1.0));
            let (ga, gb) = (r.grad_f_reduced(&a).unwrap(), r.grad_f_reduced(&b).unwrap());
            proptest::prop_assert!((&ga[0] - &gb[1]).amax() < 1e-10 && (&ga[1] - &gb[0]).amax() < 1e-10);
            // K -> cK shifts F_K by m (2/n) log c and leaves the gradient alone
            let rc = r.with_k(KField::new(&KSpec::one_plus_y1(0.3).scaled(c), 4).unwrap());
            let shift = rc.f_reduced(&a).unwrap() - fa;
            proptest::prop_assert!((shift - 2.0 * 2.0 / 4.0 * c.ln()).abs() < 1e-10, "shift {}", shift);
            let gc = rc.grad_f_reduced(&a).unwrap();
            proptest::prop_assert!(gc.iter().zip(&ga).all(|(x, y)| (x - y).amax() < 1e-10));
        }
    }

    #[test]
    fn poles_are_the_critical_points() {
        let r = reduced(sphere(), &KSpec::one_plus_y1(0.3));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seeds = r.default_seeds(16, &mut rng);
        let res = r.find_critical_points(&seeds);
        assert_eq!(res.configs.len(), 2, "{:?}", res.configs);
        let (lo, hi) = (&res.configs[0], &res.configs[1]);
        let pt = |c: &CritConfig| DVector::from_vec(c.points[0].clone());
        assert!(distance(&pt(lo), &south(4)) < 1e-9 && distance(&pt(hi), &north(4)) < 1e-9);
        assert_eq!((lo.morse, hi.morse), (0, 4));
        assert_eq!((lo.i_inf, hi.i_inf), (4, 0));
        for (c, s) in [(lo, true), (hi, false)] {
            assert!(c.gradnorm < CRIT_TOL);
            assert!((c.small_l - 4.0 * c.big_l).abs() < 1e-3 * c.small_l.abs(), "{} {}", c.small_l, c.big_l);
            let oracle = zonal_pole_L(&r.green, &r.k, r.scalar_curv, s);
            assert!((oracle - c.big_l).abs() < 1e-6 * oracle.abs(), "{oracle} {}", c.big_l);
        }
        // invariance of the critical set under K -> cK
        let rc = r.with_k(KField::new(&KSpec::one_plus_y1(0.3).scaled(5.0), 4).unwrap());
        let resc = rc.find_critical_points(&seeds);
        assert_eq!(resc.configs.len(), 2);
        for (x, y) in res.configs.iter().zip(&resc.configs) {
            assert_eq!(x.points, y.points);
            assert_eq!(x.morse, y.morse);
        }
        let mut buf = Vec::new();
        write_crit_csv(&res.configs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn two_point_search_ignores_seed_order() {
        let r = reduced(synthetic2(), &KSpec::one_plus_y1(0.3));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let seeds = r.default_seeds(6, &mut rng);
        let swapped: Vec<Vec<Point>> = seeds.iter().rev().map(|s| s.iter().rev().cloned().collect()).collect();
        let a = r.find_critical_points(&seeds);
        let b = r.find_critical_points(&swapped);
        assert!(!a.configs.is_empty());
        assert_eq!(a.configs.len(), b.configs.len());
        for (x, y) in a.configs.iter().zip(&b.configs) {
            assert!((x.f - y.f).abs() < 1e-9);
            assert!(x.small_l.is_finite());
        }
    }

    fn cfg(big_l: f64, degenerate: bool) -> CritConfig {
        CritConfig {
            points: vec![],
            f: 0.0,
            gradnorm: 0.0,
            hessian_eigs: vec![],
            morse: 0,
            degenerate,
            big_l,
            small_l: 4.0 * big_l,
            i_inf: 0,
            in_f_inf: big_l < 0.0,
        }
    }

    #[test]
    fn nondegeneracy_predicates() {
        let r = nd_predicates(&[cfg(1.0, false), cfg(2.0, false)], 1e-8);
        assert!(r.nd_plus && !r.nd_minus && r.nd0 && r.nd);
        let r = nd_predicates(&[cfg(1.0, false), cfg(1e-12, false)], 1e-8);
        assert!(!r.nd0 && !r.nd);
        let r = nd_predicates(&[cfg(-1.0, true)], 1e-8);
        assert!(r.nd0 && r.nd_minus && !r.nd);
        assert!(nd_predicates(&[], 1e-8).vacuous);
    }
}
