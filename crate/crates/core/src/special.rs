//! Special functions, orthonormal Gegenbauer families and Gauss quadrature.

use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

/// Volume of the unit sphere S^n.
pub fn sphere_area(n: usize) -> f64 {
    let h = (n as f64 + 1.0) / 2.0;
    2.0 * (h * PI.ln() - ln_gamma(h)).exp()
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Dimension of the space of degree-k spherical harmonics on S^n.
pub fn harmonic_dim(n: usize, k: usize) -> usize {
    let a = binomial(k + n, n);
    let b = if k >= 2 { binomial(k + n - 2, n) } else { 0.0 };
    (a - b).round() as usize
}

/// `∫_{-1}^{1} (1-x^2)^a dx`.
pub fn jacobi_mass(a: f64) -> f64 {
    (0.5 * PI.ln() + ln_gamma(a + 1.0) - ln_gamma(a + 1.5)).exp()
}

/// Euler beta function.
pub fn beta_fn(x: f64, y: f64) -> f64 {
    (ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y)).exp()
}

/// Orthonormal polynomials for the weight `(1-x^2)^a` on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GegenbauerFamily {
    pub a: f64,
    pub kmax: usize,
    p0: f64,
    // b[k] = sqrt(beta_k), k >= 1
    b: Vec<f64>,
}

impl GegenbauerFamily {
    pub fn new(a: f64, kmax: usize) -> Self {
        let mut b = vec![0.0; kmax + 2];
        for (k, bk) in b.iter_mut().enumerate().skip(1) {
            let kf = k as f64;
            let beta = kf * (kf + 2.0 * a) / ((2.0 * kf + 2.0 * a + 1.0) * (2.0 * kf + 2.0 * a - 1.0));
            *bk = beta.sqrt();
        }
        GegenbauerFamily { a, kmax, p0: 1.0 / jacobi_mass(a).sqrt(), b }
    }

    /// Values `p_0..=p_kmax` at x.
    pub fn eval(&self, x: f64, p: &mut [f64]) {
        let k = self.kmax;
        p[0] = self.p0;
        if k == 0 {
            return;
        }
        p[1] = x * p[0] / self.b[1];
        for j in 1..k {
            p[j + 1] = (x * p[j] - self.b[j] * p[j - 1]) / self.b[j + 1];
        }
    }

    /// Values and first derivatives.
    pub fn eval_d(&self, x: f64, p: &mut [f64], dp: &mut [f64]) {
        let k = self.kmax;
        p[0] = self.p0;
        dp[0] = 0.0;
        if k == 0 {
            return;
        }
        p[1] = x * p[0] / self.b[1];
        dp[1] = p[0] / self.b[1];
        for j in 1..k {
            p[j + 1] = (x * p[j] - self.b[j] * p[j - 1]) / self.b[j + 1];
            dp[j + 1] = (p[j] + x * dp[j] - self.b[j] * dp[j - 1]) / self.b[j + 1];
        }
    }

    /// Values, first and second derivatives.
    pub fn eval_d2(&self, x: f64, p: &mut [f64], dp: &mut [f64], d2p: &mut [f64]) {
        let k = self.kmax;
        p[0] = self.p0;
        dp[0] = 0.0;
        d2p[0] = 0.0;
        if k == 0 {
            return;
        }
        p[1] = x * p[0] / self.b[1];
        dp[1] = p[0] / self.b[1];
        d2p[1] = 0.0;
        for j in 1..k {
            p[j + 1] = (x * p[j] - self.b[j] * p[j - 1]) / self.b[j + 1];
            dp[j + 1] = (p[j] + x * dp[j] - self.b[j] * dp[j - 1]) / self.b[j + 1];
            d2p[j + 1] = (2.0 * dp[j] + x * d2p[j] - self.b[j] * d2p[j - 1]) / self.b[j + 1];
        }
    }

    /// Sum of `c_k p_k(x)`.
    pub fn sum(&self, coeffs: &[f64], x: f64) -> f64 {
        let mut p = vec![0.0; self.kmax + 1];
        self.eval(x, &mut p);
        coeffs.iter().zip(&p).map(|(c, v)| c * v).sum()
    }
}

/// Nodes and weights of a one dimensional quadrature rule.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Gauss-Legendre rule mapped to `[lo, hi]`.
    pub fn legendre_on(npts: usize, lo: f64, hi: f64) -> Quadrature {
        let q = gauss_jacobi(npts, 0.0);
        let h = 0.5 * (hi - lo);
        let c = 0.5 * (hi + lo);
        Quadrature {
            nodes: q.nodes.iter().map(|x| c + h * x).collect(),
            weights: q.weights.iter().map(|w| w * h).collect(),
        }
    }
}

/// Gauss rule for the weight `(1-x^2)^a` with `npts` nodes, ascending.
///
/// Newton iteration in the angle variable from asymptotic guesses; the weights
/// are Christoffel numbers.
pub fn gauss_jacobi(npts: usize, a: f64) -> Quadrature {
    assert!(npts >= 1);
    assert!(a > -1.0);
    let fam = GegenbauerFamily::new(a, npts);
    let nf = npts as f64;
    let mut p = vec![0.0; npts + 1];
    let mut dp = vec![0.0; npts + 1];
    let mut nodes = Vec::with_capacity(npts);
    let mut weights = Vec::with_capacity(npts);
    for i in 0..npts {
        let mut th = PI * (4.0 * i as f64 + 2.0 * a + 3.0) / (4.0 * nf + 4.0 * a + 2.0);
        for _ in 0..100 {
            let x = th.cos();
            fam.eval_d(x, &mut p, &mut dp);
            let f = p[npts];
            let df = -th.sin() * dp[npts];
            let step = f / df;
            th -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let x = th.cos();
        fam.eval(x, &mut p);
        let s: f64 = p[..npts].iter().map(|v| v * v).sum();
        nodes.push(x);
        weights.push(1.0 / s);
    }
    nodes.reverse();
    weights.reverse();
    Quadrature { nodes, weights }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_area_values() {
        assert!((sphere_area(1) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_area(2) - 4.0 * PI).abs() < 1e-13);
        assert!((sphere_area(4) - 8.0 * PI * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn harmonic_dims() {
        assert_eq!(harmonic_dim(2, 3), 7);
        assert_eq!(harmonic_dim(4, 0), 1);
        assert_eq!(harmonic_dim(4, 1), 5);
        assert_eq!(harmonic_dim(4, 2), 14);
    }

    #[test]
    fn gauss_jacobi_integrates_moments() {
        for &a in &[0.0, 0.5, 1.0, 2.0] {
            for &npts in &[3usize, 10, 57, 400] {
                let q = gauss_jacobi(npts, a);
                for m in (0..(2 * npts).min(40)).step_by(2) {
                    let num: f64 = q.nodes.iter().zip(&q.weights).map(|(x, w)| w * x.powi(m as i32)).sum();
                    // ∫ x^m (1-x^2)^a = B((m+1)/2, a+1)
                    let exact = beta_fn((m as f64 + 1.0) / 2.0, a + 1.0);
                    assert!((num - exact).abs() < 1e-12 * exact.max(1.0), "a={a} n={npts} m={m}: {num} vs {exact}");
                }
                for w in q.nodes.windows(2) {
                    assert!(w[1] > w[0]);
                }
            }
        }
    }

    #[test]
    fn large_rule_is_orthonormal() {
        let npts = 3000;
        let q = gauss_jacobi(npts, 1.0);
        let fam = GegenbauerFamily::new(1.0, 2000);
        let mut p = vec![0.0; 2001];
        let (mut s0, mut s1, mut s01) = (0.0, 0.0, 0.0);
        for (x, w) in q.nodes.iter().zip(&q.weights) {
            fam.eval(*x, &mut p);
            s0 += w * p[2000] * p[2000];
            s1 += w * p[1999] * p[1999];
            s01 += w * p[2000] * p[1998];
        }
        assert!((s0 - 1.0).abs() < 1e-11);
        assert!((s1 - 1.0).abs() < 1e-11);
        assert!(s01.abs() < 1e-11);
    }
}
