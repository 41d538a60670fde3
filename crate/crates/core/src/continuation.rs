//! Solutions of `∇J_t = 0` for `t < 1`, the branch `t ↑ 1`, and the
//! bubbling-rate fit along it.

use crate::bubbles::BubbleProfile;
use crate::error::{QcError, Result};
use crate::field::Field;
use crate::fit::linear_fit;
use crate::functional::{Functional, Weights};
use crate::model::ManifoldModel;
use crate::operators::pn_inner_unchecked;
use crate::parametrize::{fit_bubbles, gradient_dual_norm, membership, NeighborhoodSpec};
use crate::reduced::Reduced;
use crate::sphere::{distance, Point};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Relative gradient tolerance of an accepted solution.
pub const GRAD_TOL: f64 = 1e-10;
/// Damped Newton failures tolerated in one solve.
pub const MAX_DAMPED: usize = 50;
/// Bubble fitting starts once `max u − ū > log(2 λ)` for this λ.
pub const BUBBLE_THRESHOLD_LAMBDA: f64 = 20.0;
/// Degrees per unit λ below which the Galerkin solution stops resolving
/// the bubble; the branch halts at `λ = k_max / RESOLVE_RATIO`.
pub const RESOLVE_RATIO: f64 = 16.0;

/// The λ at which a branch stops: `lambda_stop`, capped by resolution.
pub fn effective_lambda_stop(model: &ManifoldModel, lambda_stop: f64) -> f64 {
    lambda_stop.min(model.k_max as f64 / RESOLVE_RATIO)
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: Field,
    /// Dual-norm gradient.
    pub grad_norm: f64,
    pub j: f64,
    pub iterations: usize,
    pub damped: usize,
}

/// Gradient tolerance `10⁻¹⁰ (1 + ‖u‖_{P^n})`.
pub fn grad_tolerance(model: &ManifoldModel, u: &Field) -> f64 {
    GRAD_TOL * (1.0 + pn_inner_unchecked(model, &u.coeffs, &u.coeffs).sqrt())
}

enum Cg {
    Done(DVector<f64>),
    NegativeCurvature,
}

/// Preconditioned CG for `(H + ν M) x = b` with `M = diag(2|μ|)` on the
/// modes with `μ ≠ 0`.
fn pcg(func: &Functional, w: &Weights, b: &DVector<f64>, nu: f64, rtol: f64) -> Cg {
    let mu = func.model.mode_mu();
    let prec: DVector<f64> = mu.map(|m| 2.0 * m.abs());
    let active = |v: &mut DVector<f64>| {
        for (x, p) in v.iter_mut().zip(prec.iter()) {
            if *p == 0.0 {
                *x = 0.0;
            }
        }
    };
    let apply = |x: &DVector<f64>| {
        let mut y = func.hessian_apply_with(w, x) + x.component_mul(&prec) * nu;
        active(&mut y);
        y
    };
    let minv = |r: &DVector<f64>| DVector::from_iterator(r.len(), r.iter().zip(prec.iter()).map(|(x, p)| if *p == 0.0 { 0.0 } else { x / p }));
    let mut x = DVector::zeros(b.len());
    let mut r = b.clone();
    active(&mut r);
    let mut z = minv(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let r0 = rz.sqrt();
    if r0 == 0.0 {
        return Cg::Done(x);
    }
    for _ in 0..4 * b.len().max(50) {
        let hp = apply(&p);
        let php = p.dot(&hp);
        if php <= 0.0 {
            return Cg::NegativeCurvature;
        }
        let a = rz / php;
        x += &p * a;
        r -= &hp * a;
        z = minv(&r);
        let rz1 = r.dot(&z);
        if rz1.sqrt() <= rtol * r0 {
            break;
        }
        p = &z + &p * (rz1 / rz);
        rz = rz1;
    }
    Cg::Done(x)
}

/// Newton iterations on the Galerkin system `dJ_t = 0` with an Armijo line
/// search on `J_t`; Levenberg damping is engaged on negative curvature or a
/// failed line search.
pub fn solve_at_t(func: &Functional, init: &Field) -> Result<Solution> {
    let model = func.model;
    if !(func.t > 0.0 && func.t < 1.0) {
        return Err(QcError::Invalid(format!("t = {} must lie in (0, 1)", func.t)));
    }
    model.check_dim(init)?;
    let mut u = init.clone();
    let mut damped = 0;
    let mut nu: f64 = 0.0;
    for it in 0..200 {
        let w = func.weights(&u)?;
        let g = func.gradient_with(&u, &w);
        let gn = gradient_dual_norm(model, &g);
        let tol = grad_tolerance(model, &u);
        if gn < tol {
            let j = func.eval(&u)?;
            return Ok(Solution { u, grad_norm: gn, j, iterations: it, damped });
        }
        let rtol = (gn / tol * 1e-14).clamp(1e-13, 1e-4);
        let delta = match pcg(func, &w, &(-&g), nu, rtol) {
            Cg::Done(d) => d,
            Cg::NegativeCurvature => {
                damped += 1;
                nu = (4.0 * nu).max(1e-4);
                if damped > MAX_DAMPED {
                    break;
                }
                continue;
            }
        };
        let slope = g.dot(&delta);
        let mut s = 1.0;
        let mut moved = false;
        while s > 1e-12 {
            let step = model.field(&delta * s)?;
            let inc = func.increment(&u, &step)?;
            if inc.is_finite() && inc <= 1e-4 * s * slope {
                u = model.field(&u.coeffs + &step.coeffs)?;
                moved = true;
                break;
            }
            s *= 0.5;
        }
        if !moved {
            damped += 1;
            nu = (4.0 * nu).max(1e-4);
            if damped > MAX_DAMPED {
                break;
            }
        } else if s == 1.0 {
            nu *= 0.1;
            if nu < 1e-10 {
                nu = 0.0;
            }
        }
    }
    Err(QcError::Convergence(format!("Newton at t = {} did not reach the gradient tolerance ({damped} damped steps)", func.t)))
}

/// Continuation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
    /// Geometric spacing in `1 − t` instead of uniform spacing in `t`.
    #[serde(default = "yes")]
    pub refine_near_1: bool,
}

fn yes() -> bool {
    true
}

impl Schedule {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(0.0 < self.t0 && self.t0 < self.t1 && self.t1 < 1.0 && self.steps >= 2) {
            return Err(QcError::Invalid("schedule needs 0 < t0 < t1 < 1 and at least two steps".into()));
        }
        let k = (self.steps - 1) as f64;
        Ok((0..self.steps)
            .map(|i| {
                let s = i as f64 / k;
                if self.refine_near_1 {
                    1.0 - (1.0 - self.t0) * ((1.0 - self.t1) / (1.0 - self.t0)).powf(s)
                } else {
                    self.t0 + (self.t1 - self.t0) * s
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub schedule: Schedule,
    #[serde(default = "default_lambda_stop")]
    pub lambda_stop: f64,
    #[serde(default)]
    pub neighborhood: NeighborhoodSpec,
}

fn default_lambda_stop() -> f64 {
    1e3
}

/// One accepted solve. Bubble columns are NaN before the bubble regime.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchRow {
    pub t: f64,
    pub max_u: f64,
    pub mean_u: f64,
    pub lambda: f64,
    pub alpha: f64,
    /// Polar angle of the fitted center from the model axis.
    pub a_theta: f64,
    pub tau: f64,
    pub j: f64,
    pub grad_norm: f64,
    /// `(1 − t) λ² F(a)^{(n−2)/n}`.
    pub y_lambda_form: f64,
    /// Same with `λ` replaced by the peak-height scale `λ_u`.
    pub y_maxu_form: f64,
    pub w_norm: f64,
    pub in_v: bool,
    pub in_v_deep: bool,
}

impl BranchRow {
    pub const HEADER: [&'static str; 9] = ["t", "max_u", "lambda", "a_theta", "tau", "J", "grad_norm", "y_lambda_form", "y_maxu_form"];

    pub fn csv_values(&self) -> Vec<f64> {
        vec![self.t, self.max_u, self.lambda, self.a_theta, self.tau, self.j, self.grad_norm, self.y_lambda_form, self.y_maxu_form]
    }

    pub fn has_bubble(&self) -> bool {
        self.lambda.is_finite()
    }
}

#[derive(Debug, Clone)]
pub struct BranchRecord {
    pub rows: Vec<BranchRow>,
    /// Solution coefficients per row.
    pub snapshots: Vec<DVector<f64>>,
    /// Why the branch ended before the schedule did.
    pub stopped: Option<String>,
}

fn peak(model: &ManifoldModel, u: &Field) -> (f64, Point) {
    let mut best = (f64::NEG_INFINITY, model.axis.clone());
    let mut cands = vec![model.axis.clone(), -&model.axis];
    if !model.is_zonal() {
        cands.extend((0..model.n_nodes()).map(|i| model.node_point(i)));
    }
    for p in cands {
        let v = model.eval_at(u, &p);
        if v > best.0 {
            best = (v, p);
        }
    }
    best
}

/// Warm-started solves along the schedule. Once `u` peaks above the bubble
/// threshold, each solution is fitted by one bubble and the next solve
/// starts from the previous solution with its bubble rescaled to the λ
/// predicted by `(1 − t) λ² ≈ const`.
pub fn continue_branch(func: &Functional, reduced: &Reduced, spec: &BranchSpec) -> Result<BranchRecord> {
    let model = func.model;
    let ts = spec.schedule.values()?;
    let cutoff = reduced.green.cutoff;
    let nf = model.n as f64;
    let mut rows = vec![];
    let mut snaps = vec![];
    let mut u = model.zero_field();
    let mut prev: Option<(f64, f64, f64)> = None; // (t, λ, α)
    let mut stopped = None;
    let lambda_stop = effective_lambda_stop(model, spec.lambda_stop);
    for &t in &ts {
        let ft = func.with_t(t);
        let init = match prev {
            Some((tp, lp, ap)) => {
                let ln = lp * ((1.0 - tp) / (1.0 - t)).sqrt();
                let (_, a) = peak(model, &u);
                match (BubbleProfile::new(model, lp, cutoff), BubbleProfile::new(model, ln, cutoff)) {
                    (Ok(p0), Ok(p1)) => {
                        let b0 = model.zonal_profile_field(&a, &p0.phi.coeffs)?;
                        let b1 = model.zonal_profile_field(&a, &p1.phi.coeffs)?;
                        model.field(&u.coeffs + (&b1.coeffs - &b0.coeffs) * ap)?
                    }
                    _ => u.clone(),
                }
            }
            None => u.clone(),
        };
        let sol = match solve_at_t(&ft, &init) {
            Ok(s) => s,
            Err(e) => {
                stopped = Some(format!("solver failure at t = {t}: {e}"));
                break;
            }
        };
        u = sol.u;
        let (max_u, _) = peak(model, &u);
        let mean_u = u.coeffs[0] / model.omega.sqrt();
        let mut row = BranchRow {
            t,
            max_u,
            mean_u,
            lambda: f64::NAN,
            alpha: f64::NAN,
            a_theta: f64::NAN,
            tau: f64::NAN,
            j: sol.j,
            grad_norm: sol.grad_norm,
            y_lambda_form: f64::NAN,
            y_maxu_form: f64::NAN,
            w_norm: f64::NAN,
            in_v: false,
            in_v_deep: false,
        };
        if max_u - mean_u > (2.0 * BUBBLE_THRESHOLD_LAMBDA).ln() {
            let mut nb = spec.neighborhood.clone();
            nb.m = 1;
            match fit_bubbles(model, &cutoff, &u, &nb, None) {
                Ok(fit) if !fit.boundary.is_empty() => log::debug!("t = {t}: bubble fit on the boundary {:?}", fit.boundary),
                Ok(fit) => {
                    let c = &fit.config;
                    let (lam, al) = (c.lambda[0], c.alpha[0]);
                    let center = &c.points()[0];
                    row.lambda = lam;
                    row.alpha = al;
                    row.a_theta = distance(&model.axis, center);
                    row.w_norm = fit.w_norm;
                    let f = reduced.f_partial(std::slice::from_ref(center), 0, center)?;
                    let fp = f.powf((nf - 2.0) / nf);
                    row.y_lambda_form = (1.0 - t) * lam * lam * fp;
                    // λ_u: the λ of a pure bubble with the peak height of u
                    let lu = lam * (max_u - mean_u - fit.bubbles[0].profile.phi.value(0.0)).exp();
                    row.y_maxu_form = (1.0 - t) * lu * lu * fp;
                    if let Ok(mem) = membership(model, reduced, t, &u, &nb, &fit, None) {
                        row.tau = mem.diagnostics.tau[0];
                        row.in_v = mem.in_v;
                        row.in_v_deep = mem.in_v_deep;
                    }
                    prev = Some((t, lam, al));
                }
                Err(e) => log::warn!("bubble fit failed at t = {t}: {e}"),
            }
        }
        log::info!("t = {t:.10} max u = {max_u:.4} λ = {:.3} |∇J| = {:.2e} newton = {}", row.lambda, row.grad_norm, sol.iterations);
        let done = row.lambda > lambda_stop;
        rows.push(row);
        snaps.push(u.coeffs.clone());
        if done {
            stopped = Some(format!("λ exceeded λ_stop = {lambda_stop}"));
            break;
        }
    }
    Ok(BranchRecord { rows, snapshots: snaps, stopped })
}

pub fn write_branch_csv(record: &BranchRecord, path: &std::path::Path) -> Result<()> {
    let rows: Vec<Vec<f64>> = record.rows.iter().map(|r| r.csv_values()).collect();
    crate::io::write_csv(path, &BranchRow::HEADER, &rows)
}

/// Outcome of the bubbling-rate fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub rows_used: usize,
    pub rows_last_decade: usize,
    /// `l_K` at the limiting critical point.
    pub l_k: f64,
    pub sign_ok: bool,
    /// Distance of the last fitted center from the critical point.
    pub center_distance: f64,
    /// Limits of the two forms (fit `y = y_∞ + b/λ` over the last decade).
    pub y_inf: f64,
    pub y_inf_maxu: f64,
    pub c_bar_hat: f64,
    pub c_bar_maxu: f64,
    /// `(max − min)/|mean|` of `y` over the last decade.
    pub spread: f64,
    pub spread_maxu: f64,
    /// `|c̄_u / c̄ − 1|`.
    pub form_mismatch: f64,
    /// Exponent p in `|y − y_∞| ∝ λ^p`.
    pub trend_exponent: f64,
}

/// Fits `(1 − t) λ² F^{(n−2)/n} → c̄ (−l_K(A))` over the rows with λ > 20;
/// the stabilization window is the last decade of `1 − t`.
pub fn fit_bubbling_rate(record: &BranchRecord, reduced: &Reduced, crit: &Point) -> Result<RateReport> {
    let rows: Vec<&BranchRow> = record.rows.iter().filter(|r| r.has_bubble() && r.lambda > BUBBLE_THRESHOLD_LAMBDA).collect();
    if rows.len() < 10 {
        return Err(QcError::InsufficientData(format!("{} bubble rows, need 10", rows.len())));
    }
    let last = rows.last().unwrap();
    let s_last = 1.0 - last.t;
    let window: Vec<&BranchRow> = rows.iter().copied().filter(|r| 1.0 - r.t <= 10.0 * s_last * (1.0 + 1e-12)).collect();
    if window.len() < 3 {
        return Err(QcError::InsufficientData("fewer than 3 rows in the last decade of 1 − t".into()));
    }
    let l_k = reduced.index_l(std::slice::from_ref(crit))?;
    let spread = crate::fit::relative_spread(&window.iter().map(|r| r.y_lambda_form).collect::<Vec<_>>());
    let spread_maxu = crate::fit::relative_spread(&window.iter().map(|r| r.y_maxu_form).collect::<Vec<_>>());
    let (_, y_inf) = linear_fit(&window.iter().map(|r| (1.0 / r.lambda, r.y_lambda_form)).collect::<Vec<_>>())?;
    let (_, y_inf_maxu) = linear_fit(&window.iter().map(|r| (1.0 / r.lambda, r.y_maxu_form)).collect::<Vec<_>>())?;
    let dev: Vec<(f64, f64)> =
        rows.iter().filter(|r| (r.y_lambda_form - y_inf).abs() > 0.0).map(|r| (r.lambda.ln(), (r.y_lambda_form - y_inf).abs().ln())).collect();
    let trend_exponent = if dev.len() >= 2 { linear_fit(&dev)?.0 } else { f64::NAN };
    let c_bar_hat = y_inf / (-l_k);
    let c_bar_maxu = y_inf_maxu / (-l_k);
    let center = DVector::from_vec(
        record.rows.iter().rev().find(|r| r.has_bubble()).map(|r| polar_point(reduced, r.a_theta)).unwrap_or_else(|| crit.iter().cloned().collect()),
    );
    Ok(RateReport {
        rows_used: rows.len(),
        rows_last_decade: window.len(),
        l_k,
        sign_ok: l_k < 0.0 && rows.iter().all(|r| r.t < 1.0 && r.y_lambda_form > 0.0),
        center_distance: distance(&center, crit),
        y_inf,
        y_inf_maxu,
        c_bar_hat,
        c_bar_maxu,
        spread,
        spread_maxu,
        form_mismatch: (c_bar_maxu / c_bar_hat - 1.0).abs(),
        trend_exponent,
    })
}

/// Point on the fixed meridian at polar angle θ (centers of zonal branches).
fn polar_point(reduced: &Reduced, theta: f64) -> Vec<f64> {
    let mut p = vec![0.0; reduced.n + 1];
    p[reduced.n] = theta.cos();
    p[0] = theta.sin();
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::{default_rho, CutoffProfile, GreenProfile};
    use crate::kfield::{KField, KSpec};
    use crate::model::ModelSpec;
    use crate::reduced::Separation;
    use crate::sphere::north;
    use std::sync::Arc;

    fn setup(k_max: usize, k: KSpec) -> (ManifoldModel, KField) {
        let model = ManifoldModel::new(&ModelSpec::sphere(4, k_max)).unwrap();
        (model, KField::new(&k, 4).unwrap())
    }

    #[test]
    fn constant_k_gives_the_zero_solution() {
        let (model, k) = setup(40, KSpec::constant(1.0));
        let f = Functional::new(&model, &k, 0.7).unwrap();
        let mut c = DVector::zeros(model.n_modes());
        c[1] = 0.3;
        c[3] = -0.1;
        let sol = solve_at_t(&f, &model.field(c).unwrap()).unwrap();
        let nonconst = sol.u.coeffs.rows(1, model.n_modes() - 1).amax();
        assert!(nonconst < 1e-9, "{nonconst}");
    }

    #[test]
    fn newton_converges_at_half_from_zero() {
        let (model, k) = setup(80, KSpec::one_plus_y1(0.3));
        let f = Functional::new(&model, &k, 0.5).unwrap();
        let sol = solve_at_t(&f, &model.zero_field()).unwrap();
        assert!(sol.iterations <= 15, "{} iterations", sol.iterations);
        assert!(sol.grad_norm < grad_tolerance(&model, &sol.u));
        // the solution is a local minimum: positive curvature along random directions
        let w = f.weights(&sol.u).unwrap();
        for s in 1..5 {
            let mut h = DVector::from_fn(model.n_modes(), |i, _| (((i * 31 + s * 17) % 13) as f64 - 6.0) / (1.0 + i as f64));
            h[0] = 0.0;
            assert!(h.dot(&f.hessian_apply_with(&w, &h)) > 0.0);
        }
    }

    #[test]
    fn rejects_t_outside_the_open_interval() {
        let (model, k) = setup(20, KSpec::one_plus_y1(0.3));
        for t in [0.0, 1.0] {
            let f = Functional::new(&model, &k, t).unwrap();
            assert!(solve_at_t(&f, &model.zero_field()).is_err());
        }
    }

    #[test]
    fn schedule_spacing() {
        let s = Schedule { t0: 0.5, t1: 1.0 - 1e-6, steps: 7, refine_near_1: true };
        let v = s.values().unwrap();
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[6] - (1.0 - 1e-6)).abs() < 1e-15);
        let r: Vec<f64> = v.windows(2).map(|w| (1.0 - w[1]) / (1.0 - w[0])).collect();
        assert!(r.iter().all(|x| (x / r[0] - 1.0).abs() < 1e-9));
        assert!(Schedule { t0: 0.5, t1: 1.0, steps: 3, refine_near_1: false }.values().is_err());
    }

    #[test]
    fn short_branch_blows_up_at_the_negative_pole() {
        let (model, k) = setup(560, KSpec::one_plus_y1(0.3));
        let green = Arc::new(GreenProfile::new(&model, CutoffProfile::new(default_rho()).unwrap()).unwrap());
        let red = Reduced::new(&model, green, k.clone(), Separation::default()).unwrap();
        let f = Functional::new(&model, &k, 0.5).unwrap();
        let spec = BranchSpec { schedule: Schedule { t0: 0.5, t1: 1.0 - 1e-6, steps: 50, refine_near_1: true }, lambda_stop: 1e3, neighborhood: Default::default() };
        let rec = continue_branch(&f, &red, &spec).unwrap();
        assert!(rec.stopped.as_deref().unwrap_or("").contains("λ_stop"), "{:?}", rec.stopped);
        let last = rec.rows.last().unwrap();
        assert!(last.a_theta < 1e-6 && last.lambda > 20.0);
        assert!(rec.rows.iter().all(|r| r.grad_norm.is_finite()));
        assert!(red.index_l(&[north(4)]).unwrap() < 0.0);
        let ys: Vec<f64> = rec.rows.iter().filter(|r| r.has_bubble()).map(|r| r.y_lambda_form).collect();
        assert!(ys.len() >= 3 && crate::fit::relative_spread(&ys) < 0.05, "{ys:?}");
    }
}
