//! Bubble parameters of a field: the best fit of `u − ū` by
//! `Σ α_i φ_{a_i,λ_i} + Σ β_r (v_r − v̄_r)` in the `P^n` norm, and membership
//! in the neighbourhoods of critical points at infinity.

use crate::bubbles::{place_bubble, BubbleProfile, ProjectedBubble};
use crate::error::{QcError, Result};
use crate::field::Field;
use crate::functional::{ansatz_field, tau_gamma, BubbleConfig, Functional};
use crate::green::CutoffProfile;
use crate::model::ManifoldModel;
use crate::operators::pn_inner_unchecked;
use crate::reduced::Reduced;
use crate::sphere::{distance, exp_coords, Point};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Tolerance on the first-order conditions of the fit.
pub const FIT_ORTHO_TOL: f64 = 1e-6;

/// Constants of `V(m, ε, η)`, `V_deep` and `V_deep(A⁰)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeighborhoodSpec {
    pub m: usize,
    pub eps: f64,
    pub eta: f64,
    /// `Λ` in `2/Λ ≤ λ_i/λ_j ≤ Λ/2`.
    pub lambda_ratio: f64,
    /// `C̄` in `d(a_i, a_j) ≥ 4C̄η`.
    pub c_bar: f64,
    /// Constant of `V_deep`.
    pub c0: f64,
    /// Center-pinning constant of `V_deep(A⁰)`.
    pub c0_tilde: f64,
    /// Constant in the `O(Σ 1/λ_i)` bound defining `V`.
    pub c_v: f64,
    /// Bound `R` on `|β_r|`.
    pub beta_max: f64,
}

impl Default for NeighborhoodSpec {
    fn default() -> Self {
        NeighborhoodSpec { m: 1, eps: 0.05, eta: 0.1, lambda_ratio: 10.0, c_bar: 1.0, c0: 1e3, c0_tilde: 10.0, c_v: 10.0, beta_max: 1.0 }
    }
}

impl NeighborhoodSpec {
    pub fn validate(&self, cutoff: &CutoffProfile) -> Result<()> {
        if self.m == 0 {
            return Err(QcError::Invalid("m must be at least 1".into()));
        }
        if !(self.eta > 0.0 && 2.0 * self.eta < cutoff.rho) {
            return Err(QcError::Invalid(format!("need 0 < 2η < ρ, got η = {}, ρ = {}", self.eta, cutoff.rho)));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(QcError::Invalid(format!("ε = {} must lie in (0, 1)", self.eps)));
        }
        if !(self.lambda_ratio > 2.0 && self.c_bar > 0.0 && self.c0 > 0.0 && self.c0_tilde > 0.0 && self.c_v > 0.0 && self.beta_max > 0.0) {
            return Err(QcError::Invalid("neighbourhood constants must be positive (Λ > 2)".into()));
        }
        Ok(())
    }

    fn min_separation(&self) -> f64 {
        4.0 * self.c_bar * self.eta
    }
}

/// Result of the projection onto the ansatz family.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub config: BubbleConfig,
    pub bubbles: Vec<ProjectedBubble>,
    /// `u − ū − ansatz`.
    pub w: Field,
    pub w_norm: f64,
    /// Largest first-order residual `|⟨w, X⟩_{P^n}| / (‖w‖ ‖X‖)` over the
    /// parameter directions.
    pub ortho: f64,
    /// Box constraints of `B_{ε,η}` that were active at the end.
    pub boundary: Vec<String>,
    pub iterations: usize,
}

struct Params {
    alpha: Vec<f64>,
    a: Vec<Point>,
    lambda: Vec<f64>,
    beta: Vec<f64>,
}

impl Params {
    fn config(&self) -> BubbleConfig {
        BubbleConfig {
            alpha: self.alpha.clone(),
            a: self.a.iter().map(|p| p.iter().cloned().collect()).collect(),
            lambda: self.lambda.clone(),
            beta: self.beta.clone(),
        }
    }
}

struct Fitter<'a> {
    model: &'a ManifoldModel,
    cutoff: &'a CutoffProfile,
    spec: &'a NeighborhoodSpec,
    target: DVector<f64>,
    weight: DVector<f64>,
    /// Tangent dimensions per center (0 on a zonal model).
    tdim: usize,
}

impl Fitter<'_> {
    fn bubbles(&self, p: &Params) -> Result<Vec<ProjectedBubble>> {
        p.a.iter()
            .zip(&p.lambda)
            .map(|(a, &l)| {
                let prof = Arc::new(BubbleProfile::new(self.model, l, *self.cutoff)?);
                place_bubble(self.model, a, prof)
            })
            .collect()
    }

    fn residual(&self, p: &Params, b: &[ProjectedBubble]) -> Result<DVector<f64>> {
        let f = ansatz_field(self.model, &p.config(), b)?;
        let mut r = &self.target - f.coeffs;
        r[0] = 0.0;
        Ok(r)
    }

    fn objective(&self, r: &DVector<f64>) -> f64 {
        r.iter().zip(self.weight.iter()).map(|(x, w)| w * x * x).sum()
    }

    /// Jacobian columns of the ansatz in the order α, log λ, tangent moves of
    /// a, β.
    fn jacobian(&self, p: &Params, b: &[ProjectedBubble]) -> Vec<DVector<f64>> {
        let mut cols = vec![];
        for (i, bi) in b.iter().enumerate() {
            cols.push(bi.phi.coeffs.clone());
            cols.push(&bi.dphi_dlambda.coeffs * (p.alpha[i] * p.lambda[i]));
            for d in bi.dphi_da.iter().take(self.tdim) {
                cols.push(&d.coeffs * p.alpha[i]);
            }
        }
        for &idx in &self.model.negative_modes {
            let mut e = DVector::zeros(self.model.n_modes());
            e[idx] = 1.0;
            cols.push(e);
        }
        cols.iter_mut().for_each(|c| c[0] = 0.0);
        cols
    }

    fn step(&self, p: &Params, b: &[ProjectedBubble], delta: &DVector<f64>, s: f64) -> (Params, Vec<String>) {
        let m = p.alpha.len();
        let per = 2 + self.tdim;
        let mut q = Params { alpha: vec![], a: vec![], lambda: vec![], beta: vec![] };
        let mut hits = vec![];
        for i in 0..m {
            let al = p.alpha[i] + s * delta[per * i];
            let la = p.lambda[i] * (s * delta[per * i + 1]).exp();
            let (alc, lac) = (al.clamp(1.0 - self.spec.eps, 1.0 + self.spec.eps), la.max(1.0 / self.spec.eps));
            if alc != al {
                hits.push(format!("alpha[{i}]"));
            }
            if lac != la {
                hits.push(format!("lambda[{i}]"));
            }
            q.alpha.push(alc);
            q.lambda.push(lac);
            if self.tdim > 0 {
                let coords: Vec<f64> = (0..self.tdim).map(|k| s * delta[per * i + 2 + k]).collect();
                q.a.push(exp_coords(&p.a[i], &b[i].frame, &coords));
            } else {
                q.a.push(p.a[i].clone());
            }
        }
        for (r, be) in p.beta.iter().enumerate() {
            let v = be + s * delta[per * m + r];
            let vc = v.clamp(-self.spec.beta_max, self.spec.beta_max);
            if vc != v {
                hits.push(format!("beta[{r}]"));
            }
            q.beta.push(vc);
        }
        for i in 0..m {
            for j in 0..i {
                if distance(&q.a[i], &q.a[j]) < self.spec.min_separation() {
                    hits.push(format!("distance[{j},{i}]"));
                }
            }
        }
        (q, hits)
    }
}

/// Peaks of `u` used to start the fit: the two poles on a zonal model, the
/// highest well-separated nodes otherwise. Centers come in decreasing order
/// of `u`.
pub fn initial_guess(model: &ManifoldModel, cutoff: &CutoffProfile, u: &Field, spec: &NeighborhoodSpec) -> Result<BubbleConfig> {
    model.check_dim(u)?;
    let mean = u.coeffs[0] / model.omega.sqrt();
    let mut cand: Vec<(f64, Point)> = if model.is_zonal() {
        let (np, sp) = (model.axis.clone(), -&model.axis);
        vec![(model.eval_at(u, &np), np), (model.eval_at(u, &sp), sp)]
    } else {
        (0..model.n_nodes()).map(|i| (u.values[i], model.node_point(i))).collect()
    };
    cand.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut picked: Vec<(f64, Point)> = vec![];
    for c in cand {
        if picked.len() == spec.m {
            break;
        }
        if picked.iter().all(|p| distance(&p.1, &c.1) >= spec.min_separation()) {
            picked.push(c);
        }
    }
    if picked.len() != spec.m {
        return Err(QcError::Invalid(format!("found {} separated peaks, need {}", picked.len(), spec.m)));
    }
    // the profile peak is log λ + O(1): fixed-point correction with probe profiles
    let mut lambda = vec![];
    for (v, _) in &picked {
        let mut l = (0.5 * (v - mean).exp()).max(1.0 / spec.eps);
        for _ in 0..4 {
            let prof = BubbleProfile::unchecked(model, l, *cutoff)?;
            l = (l * (v - mean - prof.phi.value(0.0)).exp()).max(1.0 / spec.eps);
        }
        lambda.push(l);
    }
    Ok(BubbleConfig {
        alpha: vec![1.0; spec.m],
        a: picked.iter().map(|p| p.1.iter().cloned().collect()).collect(),
        lambda,
        beta: vec![0.0; model.mbar()],
    })
}

/// Minimizes `‖u − ū − Σα_iφ_{a_i,λ_i} − Σβ_r(v_r − v̄_r)‖_{P^n}` over
/// `B_{ε,η}` by projected Gauss–Newton from `init` (or the peaks of `u`).
/// On a zonal model the centers stay on the axis.
pub fn fit_bubbles(
    model: &ManifoldModel,
    cutoff: &CutoffProfile,
    u: &Field,
    spec: &NeighborhoodSpec,
    init: Option<&BubbleConfig>,
) -> Result<FitResult> {
    spec.validate(cutoff)?;
    model.check_dim(u)?;
    let init = match init {
        Some(c) => c.clone(),
        None => initial_guess(model, cutoff, u, spec)?,
    };
    init.validate(model)?;
    if init.len() != spec.m {
        return Err(QcError::Invalid(format!("{} initial centers for m = {}", init.len(), spec.m)));
    }
    let fitter = Fitter {
        model,
        cutoff,
        spec,
        target: u.coeffs.clone(),
        weight: model.mode_mu().map(f64::abs),
        tdim: if model.is_zonal() { 0 } else { model.n },
    };
    let mut p = Params { alpha: init.alpha.clone(), a: init.points(), lambda: init.lambda.clone(), beta: init.beta.clone() };
    let mut b = fitter.bubbles(&p)?;
    let mut r = fitter.residual(&p, &b)?;
    let mut obj = fitter.objective(&r);
    let scale = fitter.objective(&{
        let mut t = u.coeffs.clone();
        t[0] = 0.0;
        t
    });
    let mut boundary = vec![];
    let mut iterations = 0;
    for it in 0..60 {
        iterations = it + 1;
        let cols = fitter.jacobian(&p, &b);
        let k = cols.len();
        let wj: Vec<DVector<f64>> = cols.iter().map(|c| c.component_mul(&fitter.weight)).collect();
        let a = DMatrix::from_fn(k, k, |i, j| wj[i].dot(&cols[j]));
        let g = DVector::from_iterator(k, wj.iter().map(|c| c.dot(&r)));
        // scale to unit diagonal before solving
        let d = DVector::from_iterator(k, (0..k).map(|i| a[(i, i)].sqrt().max(1e-300)));
        let an = DMatrix::from_fn(k, k, |i, j| a[(i, j)] / (d[i] * d[j]));
        let gn = DVector::from_iterator(k, (0..k).map(|i| g[i] / d[i]));
        let sol = an.svd(true, true).solve(&gn, 1e-14).map_err(|e| QcError::Convergence(e.to_string()))?;
        let delta = DVector::from_iterator(k, (0..k).map(|i| sol[i] / d[i]));
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let (q, hits) = fitter.step(&p, &b, &delta, s);
            let bq = fitter.bubbles(&q)?;
            let rq = fitter.residual(&q, &bq)?;
            let oq = fitter.objective(&rq);
            if oq <= obj {
                p = q;
                b = bq;
                r = rq;
                boundary = hits;
                accepted = oq < obj;
                obj = oq;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            // objective flat to rounding: accept the full step if it shrinks the normal-equation residual
            let (q, hits) = fitter.step(&p, &b, &delta, 1.0);
            let bq = fitter.bubbles(&q)?;
            let rq = fitter.residual(&q, &bq)?;
            let oq = fitter.objective(&rq);
            let gq = fitter.jacobian(&q, &bq).iter().map(|c| c.component_mul(&fitter.weight).dot(&rq) / d[0].max(1e-300)).collect::<Vec<_>>();
            let gnew = gq.iter().zip(d.iter()).map(|(x, di)| (x * d[0] / di).powi(2)).sum::<f64>().sqrt();
            if oq <= obj * (1.0 + 1e-10) && gnew < 0.5 * gn.norm() {
                p = q;
                b = bq;
                r = rq;
                boundary = hits;
                obj = oq;
                s = 1.0;
                accepted = true;
            }
        }
        let small = delta.amax() * s < 1e-13 || obj <= 1e-30 * scale.max(1e-300);
        if !accepted || small {
            break;
        }
    }
    let config = p.config();
    let mut wc = r;
    wc[0] = 0.0;
    let w = model.field(wc)?;
    let w_norm = pn_inner_unchecked(model, &w.coeffs, &w.coeffs).sqrt();
    let cols = fitter.jacobian(&p, &b);
    let unorm = scale.sqrt();
    let ortho = if w_norm <= 1e-12 * unorm.max(1e-300) {
        0.0
    } else {
        cols.iter()
            .map(|c| {
                let nc = pn_inner_unchecked(model, c, c).sqrt();
                (pn_inner_unchecked(model, c, &w.coeffs) / (nc * w_norm)).abs()
            })
            .fold(0.0, f64::max)
    };
    if boundary.is_empty() && ortho > FIT_ORTHO_TOL {
        return Err(QcError::Orthogonality(ortho));
    }
    Ok(FitResult { config, bubbles: b, w, w_norm, ortho, boundary, iterations })
}

/// Membership report with every defining margin (positive means satisfied).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Membership {
    pub in_v: bool,
    pub in_v_deep: bool,
    pub in_v_deep_at: Option<bool>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub alpha: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    pub w_norm: f64,
    pub tau: Vec<f64>,
    pub margins: BTreeMap<String, f64>,
}

/// Dual `W^{n/2,2}` norm of the gradient: `(Σ_{μ_i ≠ 0} g_i² / |μ_i|)^{1/2}`.
pub fn gradient_dual_norm(model: &ManifoldModel, g: &DVector<f64>) -> f64 {
    g.iter().zip(model.mode_mu().iter()).filter(|(_, m)| **m != 0.0).map(|(x, m)| x * x / m.abs()).sum::<f64>().sqrt()
}

/// Evaluates the inequalities of `V(m,ε,η)`, `V_deep` and, with `a0`,
/// `V_deep(A⁰)` at the fitted parameters. `K` is taken from `reduced`; on a
/// zonal model with a tilted `K` the orbit average is used, which is exact
/// for the axisymmetric fields involved.
pub fn membership(
    model: &ManifoldModel,
    reduced: &Reduced,
    t: f64,
    u: &Field,
    spec: &NeighborhoodSpec,
    fit: &FitResult,
    a0: Option<&[Point]>,
) -> Result<Membership> {
    let cfg = &fit.config;
    let m = cfg.len();
    let lam = &cfg.lambda;
    let inv: f64 = lam.iter().map(|l| 1.0 / l).sum();
    let inv2: f64 = lam.iter().map(|l| 1.0 / (l * l)).sum();
    let func = Functional::orbit_averaged(model, &reduced.k, t)?;
    let mut margins = BTreeMap::new();

    // V(m, ε, η)
    let mut plain = u.coeffs.clone();
    plain[0] = 0.0;
    for b in &fit.bubbles {
        plain -= &b.phi.coeffs;
    }
    let dist_norm = pn_inner_unchecked(model, &plain, &plain).sqrt();
    let grad = gradient_dual_norm(model, &func.gradient(u)?);
    margins.insert("v_norm".into(), spec.c_v * inv - dist_norm - grad);
    let lmin = lam.iter().cloned().fold(f64::INFINITY, f64::min);
    let lmax = lam.iter().cloned().fold(0.0, f64::max);
    margins.insert("v_lambda_min".into(), lmin * spec.eps - 1.0);
    margins.insert("v_lambda_ratio".into(), spec.lambda_ratio / 2.0 - lmax / lmin);
    let pts = cfg.points();
    let mut dmin = f64::INFINITY;
    for i in 0..m {
        for j in 0..i {
            dmin = dmin.min(distance(&pts[i], &pts[j]));
        }
    }
    if m > 1 {
        margins.insert("v_separation".into(), dmin - spec.min_separation());
    }
    let in_v = margins.values().all(|v| *v >= 0.0);

    // V_deep
    let bubble_part = ansatz_field(model, cfg, &fit.bubbles)?;
    let log_d = func.log_mass(&bubble_part)?;
    let tg = tau_gamma(model, reduced, t, cfg, log_d)?;
    let mut grad_term = 0.0;
    for i in 0..m {
        let (g, _) = reduced.f_partial_ratios(&pts, i)?;
        grad_term += g.norm() / lam[i];
    }
    let alpha_term: f64 = cfg.alpha.iter().map(|a| (a - 1.0).abs()).sum();
    let tau_term: f64 = tg.tau.iter().map(|x| x.abs()).sum();
    let lhs = grad_term + alpha_term + tau_term + inv2;
    margins.insert("deep".into(), spec.c0 * inv2 - lhs);
    margins.insert("deep_grad_term".into(), grad_term);
    margins.insert("deep_tau_term".into(), tau_term);
    let in_v_deep = in_v && spec.c0 * inv2 - lhs >= 0.0;

    // V_deep(A⁰): best matching of fitted centers to A⁰
    let in_v_deep_at = match a0 {
        None => None,
        Some(a0) => {
            if a0.len() != m {
                return Err(QcError::DimensionMismatch { expected: m, got: a0.len() });
            }
            let best = permutations(m)
                .into_iter()
                .map(|perm| (0..m).map(|i| spec.c0_tilde / lam[i] - distance(&pts[i], &a0[perm[i]])).fold(f64::INFINITY, f64::min))
                .fold(f64::NEG_INFINITY, f64::max);
            margins.insert("deep_at".into(), best);
            Some(in_v_deep && best >= 0.0)
        }
    };
    Ok(Membership {
        in_v,
        in_v_deep,
        in_v_deep_at,
        diagnostics: Diagnostics {
            alpha: cfg.alpha.clone(),
            a: cfg.a.clone(),
            lambda: cfg.lambda.clone(),
            beta: cfg.beta.clone(),
            w_norm: fit.w_norm,
            tau: tg.tau,
            margins,
        },
    })
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = vec![];
    for p in permutations(m - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, m - 1);
            out.push(q);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubbles::project_bubble;
    use crate::green::{default_rho, GreenProfile};
    use crate::kfield::{KField, KSpec};
    use crate::model::ModelSpec;
    use crate::reduced::Separation;
    use crate::sphere::{normalize, north, south};

    fn cutoff() -> CutoffProfile {
        CutoffProfile::new(default_rho()).unwrap()
    }

    fn bubble_field(model: &ManifoldModel, cfg: &BubbleConfig) -> Field {
        let b: Vec<_> = cfg.points().iter().zip(&cfg.lambda).map(|(a, &l)| project_bubble(model, a, l, cutoff()).unwrap()).collect();
        ansatz_field(model, cfg, &b).unwrap()
    }

    #[test]
    fn recovers_an_exact_bubble() {
        let model = ManifoldModel::new(&ModelSpec::sphere(4, 200)).unwrap();
        for (a, lam) in [(north(4), 20.0), (south(4), 27.0)] {
            let cfg = BubbleConfig::single(&a, lam);
            let mut u = bubble_field(&model, &cfg);
            u = model.field(&u.coeffs + model.constant_field(0.7).coeffs).unwrap();
            let fit = fit_bubbles(&model, &cutoff(), &u, &NeighborhoodSpec::default(), None).unwrap();
            let c = &fit.config;
            assert!((c.alpha[0] - 1.0).abs() < 1e-8, "{c:?}");
            assert!((c.lambda[0] / lam - 1.0).abs() < 1e-6, "{c:?}");
            assert!(distance(&c.points()[0], &a) < 1e-6);
            assert!(fit.w_norm < 1e-8, "{}", fit.w_norm);
            assert!(fit.boundary.is_empty());
        }
    }

    #[test]
    fn recovers_an_off_node_center_on_the_full_basis() {
        let model = ManifoldModel::new(&ModelSpec::sphere(4, 12).full()).unwrap();
        let spec = NeighborhoodSpec { eps: 0.7, ..Default::default() };
        let a = normalize(DVector::from_vec(vec![0.3, -0.2, 0.5, 0.1, 0.7]));
        let mut cfg = BubbleConfig::single(&a, 1.6);
        cfg.alpha[0] = 1.1;
        let u = bubble_field(&model, &cfg);
        let fit = fit_bubbles(&model, &cutoff(), &u, &spec, None).unwrap();
        let c = &fit.config;
        assert!((c.alpha[0] - 1.1).abs() < 1e-8, "{c:?}");
        assert!((c.lambda[0] / 1.6 - 1.0).abs() < 1e-6, "{c:?}");
        assert!(distance(&c.points()[0], &a) < 1e-6);
        assert!(fit.w_norm < 1e-8);
    }

    fn two_bubble_setup() -> (ManifoldModel, BubbleConfig, Field) {
        let model = ManifoldModel::new(&ModelSpec::synthetic(4, 200, vec![(2, -60.0)], 2)).unwrap();
        let cfg = BubbleConfig {
            alpha: vec![1.01, 0.995],
            a: vec![north(4).iter().cloned().collect(), south(4).iter().cloned().collect()],
            lambda: vec![20.0, 26.0],
            beta: vec![0.03],
        };
        let u = bubble_field(&model, &cfg);
        (model, cfg, u)
    }

    #[test]
    fn two_bubbles_are_fitted_up_to_permutation() {
        let (model, cfg, u) = two_bubble_setup();
        let spec = NeighborhoodSpec { m: 2, ..Default::default() };
        let init = initial_guess(&model, &cutoff(), &u, &spec).unwrap();
        let mut swapped = init.clone();
        swapped.alpha.reverse();
        swapped.a.reverse();
        swapped.lambda.reverse();
        let f1 = fit_bubbles(&model, &cutoff(), &u, &spec, Some(&init)).unwrap();
        let f2 = fit_bubbles(&model, &cutoff(), &u, &spec, Some(&swapped)).unwrap();
        let key = |c: &BubbleConfig| {
            let mut v: Vec<(f64, f64, f64)> = (0..2).map(|i| (c.a[i][4], c.alpha[i], c.lambda[i])).collect();
            v.sort_by(|x, y| x.0.total_cmp(&y.0));
            v
        };
        let (k0, k1, k2) = (key(&cfg), key(&f1.config), key(&f2.config));
        for i in 0..2 {
            for (x, y) in [(k0[i], k1[i]), (k1[i], k2[i])] {
                assert!((x.0 - y.0).abs() < 1e-12 && (x.1 - y.1).abs() < 1e-6 && (x.2 / y.2 - 1.0).abs() < 1e-6, "{k0:?} {k1:?} {k2:?}");
            }
        }
        assert!((f1.config.beta[0] - 0.03).abs() < 1e-8);
        assert!(f1.w_norm < 1e-8);
    }

    #[test]
    fn projection_is_non_expansive() {
        let model = ManifoldModel::new(&ModelSpec::sphere(4, 200)).unwrap();
        let cfg = BubbleConfig::single(&north(4), 25.0);
        let u0 = bubble_field(&model, &cfg);
        // smooth zonal perturbation of unit P-norm
        let mut c = DVector::from_iterator(model.n_modes(), (0..model.n_modes()).map(|k| if k == 0 { 0.0 } else { (0.7 * k as f64).sin() / (k as f64).powi(4) }));
        let nc = pn_inner_unchecked(&model, &c, &c).sqrt();
        c /= nc;
        for delta in [1e-2, 1e-3] {
            let u = model.field(&u0.coeffs + &c * delta).unwrap();
            let fit = fit_bubbles(&model, &cutoff(), &u, &NeighborhoodSpec::default(), None).unwrap();
            assert!(fit.w_norm <= 1.1 * delta, "{} vs {delta}", fit.w_norm);
            assert!(fit.ortho < FIT_ORTHO_TOL);
        }
    }

    #[test]
    fn regular_part_tail_gives_w_of_order_one_over_lambda() {
        let model = ManifoldModel::new(&ModelSpec::sphere(4, 320)).unwrap();
        let pair = crate::green::green_pair(&model, &north(4), cutoff()).unwrap();
        let h = model.field_from_fn(|x| pair.h(x));
        let mut cs = vec![];
        for lam in [20.0, 40.0] {
            let u0 = bubble_field(&model, &BubbleConfig::single(&north(4), lam));
            let u = model.field(&u0.coeffs + &h.coeffs * (0.5 / lam)).unwrap();
            let fit = fit_bubbles(&model, &cutoff(), &u, &NeighborhoodSpec::default(), None).unwrap();
            cs.push(fit.w_norm * lam);
        }
        // ‖w‖ = C/λ with C at most the size of the perturbation
        let hn = pn_inner_unchecked(&model, &h.coeffs, &h.coeffs).sqrt();
        assert!(cs.iter().all(|c| *c > 0.0 && *c <= 0.5 * hn * 1.1), "C = {cs:?}, ‖H‖ = {hn}");
        assert!((cs[1] / cs[0] - 1.0).abs() < 0.05, "C = {cs:?}");
    }

    fn reduced_for(model: &ManifoldModel, k: KSpec) -> Reduced {
        let green = Arc::new(GreenProfile::new(model, cutoff()).unwrap());
        Reduced::new(model, green, KField::new(&k, 4).unwrap(), Separation::default()).unwrap()
    }

    #[test]
    fn membership_at_a_critical_point() {
        let model = ManifoldModel::new(&ModelSpec::sphere(4, 1000)).unwrap();
        let red = reduced_for(&model, KSpec::one_plus_y1(0.3));
        let u = bubble_field(&model, &BubbleConfig::single(&north(4), 100.0));
        let spec = NeighborhoodSpec::default();
        let fit = fit_bubbles(&model, &cutoff(), &u, &spec, None).unwrap();
        let mem = membership(&model, &red, 1.0, &u, &spec, &fit, Some(&[north(4)])).unwrap();
        assert!(mem.in_v && mem.in_v_deep, "{:?}", mem.diagnostics);
        assert_eq!(mem.in_v_deep_at, Some(true));
        let other = membership(&model, &red, 1.0, &u, &spec, &fit, Some(&[south(4)])).unwrap();
        assert_eq!(other.in_v_deep_at, Some(false));
    }

    #[test]
    fn membership_away_from_critical_points() {
        let model = ManifoldModel::new(&ModelSpec::sphere(4, 1000)).unwrap();
        // K tilted so that the bubble center is not critical for F
        let k = KSpec::Harmonics { constant: 1.0, coeffs: vec![(1, 0.6)], axis: Some(vec![0.0, 0.0, 0.0, 1.0, 1.0]) };
        let red = reduced_for(&model, k);
        let (g, _) = red.f_partial_ratios(&[north(4)], 0).unwrap();
        assert!(g.norm() >= 0.1, "|∇F/F| = {}", g.norm());
        let u = bubble_field(&model, &BubbleConfig::single(&north(4), 100.0));
        let spec = NeighborhoodSpec { c0: 10.0, ..Default::default() };
        let fit = fit_bubbles(&model, &cutoff(), &u, &spec, None).unwrap();
        let mem = membership(&model, &red, 1.0, &u, &spec, &fit, None).unwrap();
        assert!(mem.in_v && !mem.in_v_deep, "{:?}", mem.diagnostics);
    }
}
