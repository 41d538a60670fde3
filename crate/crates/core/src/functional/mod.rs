//! The functional `J_t`, its derivatives, the bubble parameters `τ_i, γ_i`,
//! the second-order split around an ansatz, and the expansion harness.

mod expansion;

pub use expansion::*;

use crate::bubbles::ProjectedBubble;
use crate::error::{QcError, Result};
use crate::field::Field;
use crate::harmonics::SectorBasis;
use crate::kfield::KField;
use crate::model::{Basis, ManifoldModel};
use crate::operators::pn_inner_unchecked;
use crate::reduced::Reduced;
use crate::special::{beta_fn, sphere_area};
use crate::sphere::{distance, Point};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Exponent shift `n max u` above which a warning is logged.
pub const SHIFT_WARN: f64 = 700.0;
/// Tolerance on the orthogonality conditions for `quadratic_split`.
pub const ORTHO_TOL: f64 = 1e-6;

/// `J_t(u) = ⟨Pu,u⟩ + 2t∫Qu − t(2κ/n) log ∫K e^{nu}` on the Galerkin space,
/// integrals by the model quadrature.
#[derive(Debug, Clone)]
pub struct Functional<'a> {
    pub model: &'a ManifoldModel,
    pub t: f64,
    kvals: DVector<f64>,
}

/// Normalized weights `K e^{nu} dV / ∫K e^{nu}` at the nodes, and `log ∫K e^{nu}`.
#[derive(Debug, Clone)]
pub struct Weights {
    pub p: DVector<f64>,
    pub log_d: f64,
}

impl<'a> Functional<'a> {
    pub fn new(model: &'a ManifoldModel, k: &KField, t: f64) -> Result<Self> {
        if k.n != model.n {
            return Err(QcError::DimensionMismatch { expected: model.n, got: k.n });
        }
        if !t.is_finite() {
            return Err(QcError::Invalid(format!("t = {t} is not finite")));
        }
        if model.is_zonal() && (k.axis.dot(&model.axis).abs() - 1.0).abs() > 1e-12 {
            return Err(QcError::Invalid("K must be axisymmetric about the model axis on a zonal model".into()));
        }
        let kvals = DVector::from_iterator(model.n_nodes(), (0..model.n_nodes()).map(|i| k.value(&model.node_point(i))));
        Ok(Functional { model, t, kvals })
    }

    /// On a zonal model, `J_t` restricted to axisymmetric fields for a `K`
    /// whose axis differs from the model axis: `K` is replaced by its
    /// average over the orbits of the model axis, which leaves `J_t` and all
    /// its derivatives along axisymmetric fields unchanged.
    pub fn orbit_averaged(model: &'a ManifoldModel, k: &KField, t: f64) -> Result<Self> {
        if !model.is_zonal() {
            return Self::new(model, k, t);
        }
        if k.n != model.n {
            return Err(QcError::DimensionMismatch { expected: model.n, got: k.n });
        }
        let kvals = DVector::from_iterator(
            model.n_nodes(),
            (0..model.n_nodes()).map(|i| {
                let c = model.axis.dot(&model.node_point(i)).clamp(-1.0, 1.0);
                k.frame_sectors(&model.axis, c.acos()).0
            }),
        );
        Ok(Functional { model, t, kvals })
    }

    pub fn with_t(&self, t: f64) -> Self {
        Functional { model: self.model, t, kvals: self.kvals.clone() }
    }

    pub fn kappa(&self) -> f64 {
        self.model.kappa()
    }

    pub fn weights(&self, u: &Field) -> Result<Weights> {
        self.model.check_dim(u)?;
        let nf = self.model.n as f64;
        let top = u.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(QcError::Overflow("non-finite field value".into()));
        }
        if nf * top > SHIFT_WARN {
            log::warn!("exponent shift {:.1} exceeds {SHIFT_WARN}", nf * top);
        }
        let mut p = DVector::from_iterator(
            u.values.len(),
            u.values.iter().zip(self.kvals.iter()).zip(self.model.vol.iter()).map(|((v, k), w)| w * k * (nf * (v - top)).exp()),
        );
        let s = p.sum();
        if !(s > 0.0 && s.is_finite()) {
            return Err(QcError::Overflow(format!("∫K e^(nu) evaluated to {s:e}")));
        }
        p /= s;
        Ok(Weights { p, log_d: s.ln() + nf * top })
    }

    /// `log ∫ K e^{nu} dV`.
    pub fn log_mass(&self, u: &Field) -> Result<f64> {
        Ok(self.weights(u)?.log_d)
    }

    fn q_coeff(&self) -> f64 {
        self.model.q_const * self.model.omega.sqrt()
    }

    pub fn eval(&self, u: &Field) -> Result<f64> {
        let w = self.weights(u)?;
        let pu: f64 = u.coeffs.iter().zip(self.model.mode_mu().iter()).map(|(c, m)| m * c * c).sum();
        let nf = self.model.n as f64;
        Ok(pu + 2.0 * self.t * self.q_coeff() * u.coeffs[0] - self.t * 2.0 * self.kappa() / nf * w.log_d)
    }

    /// `J_t(z + w) − J_t(z)`, evaluated without subtracting two large values.
    pub fn increment(&self, z: &Field, w: &Field) -> Result<f64> {
        self.model.check_dim(w)?;
        let wt = self.weights(z)?;
        let nf = self.model.n as f64;
        let mu = self.model.mode_mu();
        let quad: f64 = (0..z.dim()).map(|i| mu[i] * w.coeffs[i] * (2.0 * z.coeffs[i] + w.coeffs[i])).sum();
        let s: f64 = wt.p.iter().zip(w.values.iter()).map(|(p, x)| p * (nf * x).exp_m1()).sum();
        Ok(quad + 2.0 * self.t * self.q_coeff() * w.coeffs[0] - self.t * 2.0 * self.kappa() / nf * s.ln_1p())
    }

    /// Exact directional derivative `dJ_t(u)[h]`.
    pub fn deriv(&self, u: &Field, h: &Field) -> Result<f64> {
        self.model.check_dim(h)?;
        let w = self.weights(u)?;
        let mu = self.model.mode_mu();
        let puh: f64 = (0..u.dim()).map(|i| mu[i] * u.coeffs[i] * h.coeffs[i]).sum();
        Ok(2.0 * puh + 2.0 * self.t * self.q_coeff() * h.coeffs[0] - 2.0 * self.t * self.kappa() * w.p.dot(&h.values))
    }

    /// `dJ_t(u)[e_i]` for every basis mode.
    pub fn gradient(&self, u: &Field) -> Result<DVector<f64>> {
        let w = self.weights(u)?;
        Ok(self.gradient_with(u, &w))
    }

    pub fn gradient_with(&self, u: &Field, w: &Weights) -> DVector<f64> {
        let mut g = u.coeffs.component_mul(self.model.mode_mu()) * 2.0;
        g -= self.model.synth.tr_mul(&w.p) * (2.0 * self.t * self.kappa());
        g[0] += 2.0 * self.t * self.q_coeff();
        g
    }

    /// `d²J_t(u)[h, ·]` as a coefficient vector.
    pub fn hessian_apply(&self, u: &Field, h: &Field) -> Result<DVector<f64>> {
        self.model.check_dim(h)?;
        let w = self.weights(u)?;
        let nf = self.model.n as f64;
        let c = 2.0 * self.t * self.kappa() * nf;
        let mean = w.p.dot(&h.values);
        let ph = w.p.component_mul(&h.values);
        let mut out = h.coeffs.component_mul(self.model.mode_mu()) * 2.0;
        out -= (self.model.synth.tr_mul(&ph) - self.model.synth.tr_mul(&w.p) * mean) * c;
        Ok(out)
    }

    /// `d²J_t(u)[h, ·]` for a coefficient vector `h`, with the weights of `u`.
    pub fn hessian_apply_with(&self, w: &Weights, h: &DVector<f64>) -> DVector<f64> {
        let nf = self.model.n as f64;
        let c = 2.0 * self.t * self.kappa() * nf;
        let s = &self.model.synth;
        let hv = s * h;
        let mean = w.p.dot(&hv);
        let mut out = h.component_mul(self.model.mode_mu()) * 2.0;
        out -= (s.tr_mul(&w.p.component_mul(&hv)) - s.tr_mul(&w.p) * mean) * c;
        out
    }

    /// Dense Hessian in the mode basis.
    pub fn hessian_with(&self, w: &Weights) -> DMatrix<f64> {
        let nf = self.model.n as f64;
        let c = 2.0 * self.t * self.kappa() * nf;
        let s = &self.model.synth;
        let mut ws = s.clone();
        for (i, mut row) in ws.row_iter_mut().enumerate() {
            row *= w.p[i];
        }
        let g = s.tr_mul(&w.p);
        let mut h = s.tr_mul(&ws) - &g * g.transpose();
        h *= -c;
        for i in 0..h.nrows() {
            h[(i, i)] += 2.0 * self.model.mode_mu()[i];
        }
        h
    }

    pub fn hessian(&self, u: &Field) -> Result<DMatrix<f64>> {
        let w = self.weights(u)?;
        Ok(self.hessian_with(&w))
    }
}

/// Bubble parameters `(ᾱ, A, λ̄, β̄)`; `β` is indexed like the negative modes
/// of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleConfig {
    pub alpha: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
}

impl BubbleConfig {
    pub fn single(a: &Point, lambda: f64) -> Self {
        BubbleConfig { alpha: vec![1.0], a: vec![a.iter().cloned().collect()], lambda: vec![lambda], beta: vec![] }
    }

    pub fn points(&self) -> Vec<Point> {
        self.a.iter().map(|p| DVector::from_vec(p.clone())).collect()
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn validate(&self, model: &ManifoldModel) -> Result<()> {
        let m = self.alpha.len();
        if self.a.len() != m || self.lambda.len() != m {
            return Err(QcError::Invalid("alpha, a and lambda must have equal lengths".into()));
        }
        if self.beta.len() != model.mbar() {
            return Err(QcError::DimensionMismatch { expected: model.mbar(), got: self.beta.len() });
        }
        for p in &self.a {
            if p.len() != model.n + 1 {
                return Err(QcError::DimensionMismatch { expected: model.n + 1, got: p.len() });
            }
        }
        if self.lambda.iter().any(|l| !(*l > 0.0)) {
            return Err(QcError::Invalid("λ must be positive".into()));
        }
        Ok(())
    }
}

/// `Σ α_i φ_{a_i,λ_i} + Σ β_r (v_r − v̄_r)` as a field.
pub fn ansatz_field(model: &ManifoldModel, config: &BubbleConfig, bubbles: &[ProjectedBubble]) -> Result<Field> {
    config.validate(model)?;
    if bubbles.len() != config.len() {
        return Err(QcError::Invalid("one projected bubble per center required".into()));
    }
    let mut c = DVector::zeros(model.n_modes());
    for (b, al) in bubbles.iter().zip(&config.alpha) {
        c += &b.phi.coeffs * *al;
    }
    for (r, &idx) in model.negative_modes.iter().enumerate() {
        c[idx] += config.beta[r];
    }
    model.field(c)
}

/// `c^n = ∫_{ℝⁿ} (1+|y|²)^{−nα} dy = ω_{n−1} B(n/2, nα − n/2) / 2`.
pub fn bubble_integral(n: usize, alpha: f64) -> Result<f64> {
    let nf = n as f64;
    if !(nf * alpha > nf / 2.0) {
        return Err(QcError::Invalid(format!("∫(1+|y|²)^(-nα) diverges for α = {alpha}")));
    }
    Ok(sphere_area(n - 1) * beta_fn(nf / 2.0, nf * alpha - nf / 2.0) / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauGamma {
    pub tau: Vec<f64>,
    pub gamma: Vec<f64>,
    pub c_n: Vec<f64>,
    /// `F^A_i(a_i)`.
    pub f: Vec<f64>,
    /// `G_i(a_i)`.
    pub g: Vec<f64>,
    pub d: f64,
}

/// `τ_i = 1 − t m γ_i / D` with `γ_i = c_i λ_i^{2nα_i−n} F^A_i(a_i) G_i(a_i)`;
/// `log_d = log ∫K e^{n(Σα_iφ_i + Σβ_r v_r)}` is computed by the caller.
pub fn tau_gamma(model: &ManifoldModel, reduced: &Reduced, t: f64, config: &BubbleConfig, log_d: f64) -> Result<TauGamma> {
    config.validate(model)?;
    if config.len() != model.m {
        return Err(QcError::Invalid(format!("{} bubbles for resonance m = {}", config.len(), model.m)));
    }
    let a = config.points();
    let nf = model.n as f64;
    let q = nf / (2.0 * (nf - 2.0));
    let green = &reduced.green;
    let (h_aa, lap_h) = (green.h_diag(), green.h_laplacian(0.0));
    let vr: Vec<Vec<f64>> = a
        .iter()
        .map(|p| {
            let y = model.eval_modes(p);
            model.negative_modes.iter().map(|&i| y[i]).collect()
        })
        .collect();
    let mut out = TauGamma { tau: vec![], gamma: vec![], c_n: vec![], f: vec![], g: vec![], d: log_d.exp() };
    for i in 0..a.len() {
        let (al, la) = (config.alpha[i], config.lambda[i]);
        let mut lg = nf * (al - 1.0) * h_aa + q * al / (la * la) * lap_h;
        for j in 0..a.len() {
            if j != i {
                let dij = distance(&a[j], &a[i]);
                let (aj, lj) = (config.alpha[j], config.lambda[j]);
                lg += nf * (aj - 1.0) * green.g_value(dij) + q * aj / (lj * lj) * green.g_laplacian(dij);
            }
        }
        lg += nf * config.beta.iter().zip(&vr[i]).map(|(b, v)| b * v).sum::<f64>();
        let c = bubble_integral(model.n, al)?;
        let lf = reduced.log_f_partial(&a, i, &a[i])?;
        let log_gamma = c.ln() + (2.0 * nf * al - nf) * la.ln() + lf + lg;
        let gamma = log_gamma.exp();
        out.tau.push(1.0 - t * model.m as f64 * (log_gamma - log_d).exp());
        out.gamma.push(gamma);
        out.c_n.push(c);
        out.f.push(lf.exp());
        out.g.push(lg.exp());
    }
    Ok(out)
}

/// Linear and quadratic parts of `J_t(z + w) − J_t(z)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticSplit {
    /// `f_l(w) = 2tκ ∫K e^{nz} w / ∫K e^{nz}`.
    pub f: f64,
    /// `Q_l(w) = ‖w‖²_{P^n} − ntκ ∫K e^{nz} w² / ∫K e^{nz}`.
    pub q: f64,
    /// `ntκ (∫K e^{nz} w / ∫K e^{nz})²`, the remaining exact second-order term.
    pub mean_sq: f64,
    /// Largest orthogonality residual, relative to `‖w‖`.
    pub ortho: f64,
}

/// Orthogonality directions for the remainder `w` around a zonal ansatz on
/// a zonal model: `Q`, `φ_i`, `∂_λφ_i` in `P^n`, and `v_r` in `L²`.
/// (`∂_aφ_i` is not zonal, so zonal fields are orthogonal to it.)
fn ortho_residual(model: &ManifoldModel, bubbles: &[ProjectedBubble], w: &Field) -> f64 {
    let nw = pn_inner_unchecked(model, &w.coeffs, &w.coeffs).sqrt().max(f64::MIN_POSITIVE);
    let mut r: f64 = w.coeffs[0].abs() * model.mode_mu().amax().sqrt() / nw;
    for b in bubbles {
        for d in [&b.phi, &b.dphi_dlambda] {
            let nd = pn_inner_unchecked(model, &d.coeffs, &d.coeffs).sqrt();
            r = r.max((pn_inner_unchecked(model, &d.coeffs, &w.coeffs) / (nd * nw)).abs());
        }
        for d in &b.dphi_da {
            let nd = pn_inner_unchecked(model, &d.coeffs, &d.coeffs).sqrt();
            r = r.max((pn_inner_unchecked(model, &d.coeffs, &w.coeffs) / (nd * nw)).abs());
        }
    }
    for &i in &model.negative_modes {
        r = r.max((w.coeffs[i] * model.mode_mu()[i].abs().sqrt() / nw).abs());
    }
    r
}

pub fn quadratic_split(func: &Functional, z: &Field, bubbles: &[ProjectedBubble], w: &Field) -> Result<QuadraticSplit> {
    let model = func.model;
    model.check_dim(w)?;
    let nw2 = pn_inner_unchecked(model, &w.coeffs, &w.coeffs);
    if nw2 == 0.0 && w.coeffs[0] == 0.0 {
        return Ok(QuadraticSplit { f: 0.0, q: 0.0, mean_sq: 0.0, ortho: 0.0 });
    }
    let ortho = ortho_residual(model, bubbles, w);
    if ortho > ORTHO_TOL {
        return Err(QcError::Orthogonality(ortho));
    }
    let wt = func.weights(z)?;
    let tk = func.t * func.kappa();
    let nf = model.n as f64;
    let mean = wt.p.dot(&w.values);
    let sq = wt.p.dot(&w.values.component_mul(&w.values));
    Ok(QuadraticSplit { f: 2.0 * tk * mean, q: nw2 - nf * tk * sq, mean_sq: nf * tk * mean * mean, ortho })
}

/// Minimum of `Q_l(w) / ‖w‖²_{P^n}` in one angular sector about the bubble
/// center.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorMin {
    pub ell: usize,
    pub min_quotient: f64,
    pub constraints: usize,
}

/// Minimum Rayleigh quotient of `Q_l` on the discretized `E_{A,λ}` for a
/// single bubble at the pole of a zonal model with zonal `K`: the weight
/// `K e^{nz}` is zonal about the center, so `Q_l` splits into angular
/// sectors `ℓ = 0..=max_sector` and each is solved exactly.
pub fn min_rayleigh_quotient(func: &Functional, z: &Field, bubble: &ProjectedBubble, max_sector: usize) -> Result<Vec<SectorMin>> {
    let model = func.model;
    let zb = match &model.basis {
        Basis::Zonal(zb) => zb,
        Basis::Full(_) => return Err(QcError::Unsupported { backend: "full-basis".into(), what: "sector decomposition".into() }),
    };
    if (bubble.a.dot(&model.axis).abs() - 1.0).abs() > 1e-12 {
        return Err(QcError::Invalid("the bubble must sit on the model axis".into()));
    }
    let wt = func.weights(z)?;
    let nf = model.n as f64;
    let c = nf * func.t * func.kappa();
    let rw = SectorBasis::radial_weights(zb);
    let wn1 = sphere_area(model.n - 1);
    // w.p = vol K e^{nz}/D, and vol = ω_{n−1} × radial weight
    let dens: Vec<f64> = wt.p.iter().map(|p| p / wn1).collect();
    let south = bubble.a.dot(&model.axis) < 0.0;
    let mut out = Vec::new();
    for ell in 0..=max_sector.min(model.k_max) {
        let sb = SectorBasis::new(zb, ell);
        let nj = sb.table.ncols();
        // P-weights of degree ℓ+j; the constant mode is pinned by ⟨Q, w⟩ = 0
        let mu: Vec<f64> = (0..nj).map(|j| model.mu(ell + j).abs()).collect();
        let idx: Vec<usize> = (0..nj).filter(|&j| mu[j] > 0.0).collect();
        let ni = idx.len();
        let mut cons: Vec<DVector<f64>> = Vec::new();
        if ell == 0 {
            for d in [&bubble.phi, &bubble.dphi_dlambda] {
                cons.push(DVector::from_iterator(ni, idx.iter().map(|&j| d.coeffs[j] * mu[j])));
            }
            for &i in &model.negative_modes {
                cons.push(DVector::from_iterator(ni, idx.iter().map(|&j| if j == model.mode_degree(i) { 1.0 } else { 0.0 })));
            }
        }
        if ell == 1 {
            // ∂_aφ = −f'(θ)(ω·e); sector coefficients by quadrature
            let prof = &bubble.profile.phi;
            let mut v = DVector::<f64>::zeros(nj);
            for (i, x) in zb.x.iter().enumerate() {
                let mut th = x.clamp(-1.0, 1.0).acos();
                if south {
                    th = std::f64::consts::PI - th;
                }
                let fp = prof.eval_d2(th).1;
                for j in 0..nj {
                    v[j] += rw[i] * fp * sb.table[(i, j)];
                }
            }
            cons.push(DVector::from_iterator(ni, idx.iter().map(|&j| v[j] * mu[j])));
        }
        let mut m = DMatrix::<f64>::zeros(ni, ni);
        for i in 0..zb.npts() {
            let di = dens[i];
            if di == 0.0 {
                continue;
            }
            for (a, &j) in idx.iter().enumerate() {
                let x = di * sb.table[(i, j)];
                for (b, &k) in idx.iter().enumerate().skip(a) {
                    m[(a, b)] += x * sb.table[(i, k)];
                }
            }
        }
        // Q in the scaled variable y = sqrt(μ) x: I − c μ^{-1/2} M μ^{-1/2}
        let mut qm = DMatrix::<f64>::zeros(ni, ni);
        for a in 0..ni {
            for b in a..ni {
                let v = -c * m[(a, b)] / (mu[idx[a]] * mu[idx[b]]).sqrt() + if a == b { 1.0 } else { 0.0 };
                qm[(a, b)] = v;
                qm[(b, a)] = v;
            }
        }
        // constraints ⟨g, x⟩ = 0 become ⟨g/sqrt(μ), y⟩ = 0
        let mut basis: Vec<DVector<f64>> = Vec::new();
        for g in &cons {
            let mut v = DVector::from_iterator(ni, (0..ni).map(|a| g[a] / mu[idx[a]].sqrt()));
            for _ in 0..2 {
                for b in &basis {
                    let p = b.dot(&v);
                    v -= b * p;
                }
            }
            let nv = v.norm();
            if nv > 1e-14 {
                basis.push(v / nv);
            }
        }
        let nc = basis.len();
        let mut proj = DMatrix::<f64>::identity(ni, ni);
        for b in &basis {
            proj -= b * b.transpose();
        }
        // constrained directions are pushed far above the spectrum
        let shift = 1e3 * (1.0 + qm.amax());
        let red = &proj * &qm * &proj + (DMatrix::<f64>::identity(ni, ni) - &proj) * shift;
        let eig = SymmetricEigen::new(red);
        let min = eig.eigenvalues.min();
        out.push(SectorMin { ell, min_quotient: min, constraints: nc });
    }
    Ok(out)
}

/// Random smooth direction of unit `P^n` norm, `P^n`-orthogonal to the
/// bubble and its λ-derivative.
pub fn orthogonal_direction<R: rand::Rng>(model: &ManifoldModel, b: &ProjectedBubble, rng: &mut R) -> Field {
    let mut c = DVector::from_iterator(model.n_modes(), (0..model.n_modes()).map(|i| rng.random_range(-1.0..1.0) / (1.0 + i as f64).powi(3)));
    c[0] = 0.0;
    let mut basis: Vec<DVector<f64>> = vec![];
    for d in [&b.phi.coeffs, &b.dphi_dlambda.coeffs] {
        let mut v = d.clone();
        v[0] = 0.0;
        for e in &basis {
            let p = pn_inner_unchecked(model, e, &v);
            v -= e * p;
        }
        let nv = pn_inner_unchecked(model, &v, &v).sqrt();
        basis.push(v / nv);
    }
    for _ in 0..2 {
        for e in &basis {
            let p = pn_inner_unchecked(model, e, &c);
            c -= e * p;
        }
    }
    let nc = pn_inner_unchecked(model, &c, &c).sqrt();
    model.field(c / nc).expect("dimension matches the model")
}

/// `|J(z + εw) − J(z) + f(εw) − Q(εw)| / ε³` for each ε.
pub fn taylor_ratios(func: &Functional, z: &Field, b: &ProjectedBubble, dir: &Field, eps: &[f64]) -> Result<Vec<f64>> {
    eps.iter()
        .map(|&e| {
            let w = func.model.field(&dir.coeffs * e)?;
            let sp = quadratic_split(func, z, std::slice::from_ref(b), &w)?;
            Ok((func.increment(z, &w)? + sp.f - sp.q).abs() / e.powi(3))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubbles::project_bubble;
    use crate::green::{default_rho, CutoffProfile, GreenProfile};
    use crate::kfield::KSpec;
    use crate::model::ModelSpec;
    use crate::reduced::Separation;
    use crate::sphere::north;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn setup(kmax: usize) -> (ManifoldModel, KField) {
        let model = ManifoldModel::new(&ModelSpec::sphere(4, kmax)).unwrap();
        let k = KField::new(&KSpec::one_plus_y1(0.3), 4).unwrap();
        (model, k)
    }

    fn cutoff() -> CutoffProfile {
        CutoffProfile::new(default_rho()).unwrap()
    }

    fn random_field(model: &ManifoldModel, rng: &mut ChaCha8Rng, scale: f64) -> Field {
        let c = DVector::from_iterator(model.n_modes(), (0..model.n_modes()).map(|i| scale * rng.random_range(-1.0..1.0) / (1.0 + i as f64)));
        model.field(c).unwrap()
    }

    #[test]
    fn translation_invariance_and_resonance() {
        let (model, k) = setup(20);
        let f = Functional::new(&model, &k, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_field(&model, &mut rng, 0.5);
        let one = model.constant_field(1.0);
        let shifted = model.field(&u.coeffs + &one.coeffs * 3.0).unwrap();
        assert_relative_eq!(f.eval(&u).unwrap(), f.eval(&shifted).unwrap(), epsilon = 1e-10);
        assert!(f.deriv(&u, &one).unwrap().abs() < 1e-10);
    }

    #[test]
    fn doubling_k_shifts_j() {
        let (model, k) = setup(20);
        let k2 = KField::new(&KSpec::one_plus_y1(0.3).scaled(2.0), 4).unwrap();
        let t = 0.6;
        let (f1, f2) = (Functional::new(&model, &k, t).unwrap(), Functional::new(&model, &k2, t).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_field(&model, &mut rng, 0.5);
        let shift = -t * 2.0 * model.kappa() / 4.0 * 2f64.ln();
        assert_relative_eq!(f2.eval(&u).unwrap() - f1.eval(&u).unwrap(), shift, epsilon = 1e-10);
    }

    #[test]
    fn derivative_and_hessian_match_finite_differences() {
        let (model, k) = setup(16);
        let f = Functional::new(&model, &k, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_field(&model, &mut rng, 0.5);
        let hess = f.hessian(&u).unwrap();
        for _ in 0..5 {
            let h = random_field(&model, &mut rng, 1.0);
            let s = 1e-4;
            let up = model.field(&u.coeffs + &h.coeffs * s).unwrap();
            let um = model.field(&u.coeffs - &h.coeffs * s).unwrap();
            let fd = (f.eval(&up).unwrap() - f.eval(&um).unwrap()) / (2.0 * s);
            let d = f.deriv(&u, &h).unwrap();
            assert!((fd - d).abs() <= 1e-6 * d.abs().max(1.0), "dJ {d} vs fd {fd}");
            let g = f.gradient(&u).unwrap();
            assert_relative_eq!(g.dot(&h.coeffs), d, epsilon = 1e-9 * d.abs().max(1.0));
            let hv = f.hessian_apply(&u, &h).unwrap();
            let fd2 = (f.gradient(&up).unwrap() - f.gradient(&um).unwrap()) / (2.0 * s);
            assert!((&hv - &fd2).amax() < 1e-5 * hv.amax().max(1.0));
            assert!((&hess * &h.coeffs - &hv).amax() < 1e-9 * hv.amax().max(1.0));
        }
    }

    #[test]
    fn increment_matches_evaluation() {
        let (model, k) = setup(16);
        let f = Functional::new(&model, &k, 0.9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = random_field(&model, &mut rng, 0.5);
        let w = random_field(&model, &mut rng, 0.3);
        let zw = model.field(&z.coeffs + &w.coeffs).unwrap();
        let direct = f.eval(&zw).unwrap() - f.eval(&z).unwrap();
        assert_relative_eq!(f.increment(&z, &w).unwrap(), direct, epsilon = 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn bubble_integral_closed_form() {
        assert_relative_eq!(bubble_integral(4, 1.0).unwrap(), PI * PI / 6.0, max_relative = 1e-13);
        // n = 2: ∫(1+|y|²)^{-2} = π
        assert_relative_eq!(bubble_integral(2, 1.0).unwrap(), PI, max_relative = 1e-13);
        assert!(bubble_integral(4, 0.5).is_err());
    }

    #[test]
    fn g_factor_specializes() {
        let (model, _) = setup(20);
        let green = Arc::new(GreenProfile::new(&model, cutoff()).unwrap());
        let one = KField::new(&KSpec::constant(1.0), 4).unwrap();
        let red = Reduced::new(&model, green.clone(), one, Separation::default()).unwrap();
        let a = north(4);
        for (al, la) in [(1.0, 30.0), (1.01, 50.0)] {
            let mut cfg = BubbleConfig::single(&a, la);
            cfg.alpha[0] = al;
            let tg = tau_gamma(&model, &red, 1.0, &cfg, 0.0).unwrap();
            let q = 4.0 / (2.0 * 2.0);
            let want = (q * al / (la * la) * green.h_laplacian(0.0) + 4.0 * (al - 1.0) * green.h_diag()).exp();
            assert_relative_eq!(tg.g[0], want, max_relative = 1e-12);
            assert_relative_eq!(tg.c_n[0], bubble_integral(4, al).unwrap(), max_relative = 1e-14);
        }
    }

    #[test]
    fn tau_is_small_for_an_exact_bubble_at_t_one() {
        let (model, k) = setup(400);
        let green = Arc::new(GreenProfile::new(&model, cutoff()).unwrap());
        let red = Reduced::new(&model, green, k.clone(), Separation::default()).unwrap();
        let f = Functional::new(&model, &k, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for la in [10.0, 20.0] {
            let b = project_bubble(&model, &north(4), la, cutoff()).unwrap();
            let log_d = f.log_mass(&b.phi).unwrap();
            let tau = tau_gamma(&model, &red, 1.0, &BubbleConfig::single(&north(4), la), log_d).unwrap().tau[0];
            assert!(la * la * tau.abs() < 5.0, "λ²τ = {}", la * la * tau);
            assert!(tau.abs() < prev);
            prev = tau.abs();
        }
    }

    #[test]
    fn plane_pairings_match_the_galerkin_functional() {
        let (model, k) = setup(400);
        let f = Functional::new(&model, &k, 0.95).unwrap();
        for a in [north(4), crate::sphere::south(4)] {
            let b = project_bubble(&model, &a, 20.0, cutoff()).unwrap();
            let pa = PlaneAnsatz { model: &model, k: &k, profile: &b.profile, a: a.clone(), alpha: 1.0, beta: 0.0, ell: 1, t: 0.95 };
            let p = pa.pairings().unwrap();
            assert_relative_eq!(p.j, f.eval(&b.phi).unwrap(), max_relative = 1e-8);
            assert_relative_eq!(p.alpha, f.deriv(&b.phi, &b.phi).unwrap(), max_relative = 1e-7, epsilon = 1e-7);
            let dl = model.field(&b.dphi_dlambda.coeffs * 20.0).unwrap();
            assert_relative_eq!(p.lambda, f.deriv(&b.phi, &dl).unwrap(), max_relative = 1e-6, epsilon = 1e-6);
        }
    }

    fn plane<'a>(model: &'a ManifoldModel, k: &'a KField, prof: &'a BubbleProfile, th: f64, al: f64, be: f64) -> PlaneAnsatz<'a> {
        PlaneAnsatz { model, k, profile: prof, a: meridian_point(model, th), alpha: al, beta: be, ell: 1, t: 1.0 }
    }

    use crate::bubbles::BubbleProfile;

    #[test]
    fn plane_pairings_are_derivatives_of_j() {
        let model = ManifoldModel::new(&ModelSpec::synthetic(4, 40, vec![(1, -120.0)], 1)).unwrap();
        let k = KField::new(&KSpec::one_plus_y1(0.3), 4).unwrap();
        let lam = 15.0;
        let deg = (16.0 * lam) as usize;
        let prof = BubbleProfile::with_degree(&model, lam, cutoff(), deg).unwrap();
        let (th, al, be) = (0.9, 1.002, 0.01);
        let p = plane(&model, &k, &prof, th, al, be).pairings().unwrap();
        let j = |th: f64, al: f64, be: f64, prof: &BubbleProfile| plane(&model, &k, prof, th, al, be).pairings().unwrap().j;
        let h = 1e-5;
        let fa = (j(th, al + h, be, &prof) - j(th, al - h, be, &prof)) / (2.0 * h);
        assert_relative_eq!(p.alpha, fa, max_relative = 1e-5, epsilon = 1e-4);
        let fb = (j(th, al, be + h, &prof) - j(th, al, be - h, &prof)) / (2.0 * h);
        assert_relative_eq!(p.beta, fb, max_relative = 1e-5, epsilon = 1e-4);
        // moving a towards the axis decreases θ; u moves by α times the pairing direction
        let ht = 1e-5;
        let ft = -(j(th + ht, al, be, &prof) - j(th - ht, al, be, &prof)) / (2.0 * ht) / lam;
        assert_relative_eq!(al * p.a, ft, max_relative = 1e-4, epsilon = 1e-5);
        let hl = 1e-3 * lam;
        let pp = BubbleProfile::with_degree(&model, lam + hl, cutoff(), deg).unwrap();
        let pm = BubbleProfile::with_degree(&model, lam - hl, cutoff(), deg).unwrap();
        let fl = lam * (j(th, al, be, &pp) - j(th, al, be, &pm)) / (2.0 * hl);
        assert_relative_eq!(al * p.lambda, fl, max_relative = 1e-4, epsilon = 1e-4);
    }

    /// Zonal field orthogonal to the constant, `φ` and `∂_λφ` in `P^n`.
    #[test]
    fn quadratic_split_zero_and_taylor_decay() {
        let (model, k) = setup(160);
        let f = Functional::new(&model, &k, 1.0).unwrap();
        let b = project_bubble(&model, &north(4), 20.0, cutoff()).unwrap();
        let z = b.phi.clone();
        let zero = model.zero_field();
        let s0 = quadratic_split(&f, &z, std::slice::from_ref(&b), &zero).unwrap();
        assert_eq!((s0.f, s0.q), (0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w1 = orthogonal_direction(&model, &b, &mut rng);
        let mut ratios = vec![];
        for eps in [1e-2, 1e-3, 1e-4] {
            let w = model.field(&w1.coeffs * eps).unwrap();
            let sp = quadratic_split(&f, &z, std::slice::from_ref(&b), &w).unwrap();
            let r = f.increment(&z, &w).unwrap() + sp.f - sp.q;
            assert!(sp.mean_sq < 1e-3 * eps.powi(3));
            ratios.push(r.abs() / eps.powi(3));
        }
        assert!(ratios[1] < 2.0 * ratios[0] && ratios[2] < 2.0 * ratios[1], "{ratios:?}");
        // a non-orthogonal direction is refused
        assert!(quadratic_split(&f, &z, std::slice::from_ref(&b), &b.phi).is_err());
    }

    #[test]
    fn rayleigh_quotient_positive_on_constrained_space() {
        let (model, k) = setup(240);
        let f = Functional::new(&model, &k, 1.0).unwrap();
        let b = project_bubble(&model, &north(4), 20.0, cutoff()).unwrap();
        let mins = min_rayleigh_quotient(&f, &b.phi, &b, 4).unwrap();
        assert!(mins.iter().all(|s| s.min_quotient > 0.0), "{mins:?}");
        assert_eq!(mins[0].constraints, 2);
        assert_eq!(mins[1].constraints, 1);
    }
}
