//! Spectral model of (S^n, g) with the GJMS operator diagonal in spherical harmonics.

use crate::error::{QcError, Result};
use crate::harmonics::{FullBasis, ZonalBasis};
use crate::special::{factorial, harmonic_dim, sphere_area};
use crate::sphere::{north, Point};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Sphere,
    Synthetic,
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Sphere => "sphere",
            Backend::Synthetic => "synthetic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    #[default]
    Zonal,
    Full,
}

fn default_m() -> usize {
    1
}

/// JSON description of a model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub backend: Backend,
    pub n: usize,
    pub k_max: usize,
    #[serde(default)]
    pub spectrum_overrides: Vec<(usize, f64)>,
    #[serde(default = "default_m")]
    pub resonance_m: usize,
    #[serde(default)]
    pub basis: BasisKind,
    /// Euler characteristic reported by a synthetic model (sphere: 2).
    #[serde(default)]
    pub euler_char: Option<f64>,
    /// Quadrature oversampling factor for the zonal path.
    #[serde(default)]
    pub oversample: Option<f64>,
}

impl ModelSpec {
    pub fn sphere(n: usize, k_max: usize) -> Self {
        ModelSpec {
            backend: Backend::Sphere,
            n,
            k_max,
            spectrum_overrides: vec![],
            resonance_m: 1,
            basis: BasisKind::Zonal,
            euler_char: None,
            oversample: None,
        }
    }

    pub fn full(mut self) -> Self {
        self.basis = BasisKind::Full;
        self
    }

    pub fn synthetic(n: usize, k_max: usize, overrides: Vec<(usize, f64)>, m: usize) -> Self {
        ModelSpec {
            backend: Backend::Synthetic,
            n,
            k_max,
            spectrum_overrides: overrides,
            resonance_m: m,
            basis: BasisKind::Zonal,
            euler_char: None,
            oversample: None,
        }
    }
}

/// Eigenvalue of the round-sphere GJMS operator on degree-k harmonics:
/// the product of the shifted Laplacian factors.
pub fn round_gjms_eigenvalue(n: usize, k: usize) -> f64 {
    let kf = k as f64;
    let nf = n as f64;
    (0..n / 2).map(|j| (kf + j as f64) * (kf + nf - 1.0 - j as f64)).product()
}

#[derive(Debug, Clone)]
pub enum Basis {
    Zonal(ZonalBasis),
    Full(FullBasis),
}

/// Immutable spectral model.
#[derive(Debug, Clone)]
pub struct ManifoldModel {
    pub n: usize,
    pub k_max: usize,
    pub backend: Backend,
    pub m: usize,
    pub euler_char: f64,
    /// `ω_n`
    pub omega: f64,
    /// `(n-1)! ω_n`
    pub kappa1: f64,
    /// Constant Q-curvature `(n-1)! m` (volume of the model is `ω_n`).
    pub q_const: f64,
    /// Scalar curvature `n(n-1)`.
    pub scalar_curv: f64,
    pub basis: Basis,
    /// Symmetry axis of the zonal basis.
    pub axis: Point,
    overrides: Vec<(usize, f64)>,
    mode_degree: Vec<usize>,
    mode_mu: DVector<f64>,
    /// Node volume weights.
    pub vol: DVector<f64>,
    /// Mode values at nodes, nodes × modes.
    pub synth: DMatrix<f64>,
    /// Indices of modes with negative eigenvalue, by increasing eigenvalue.
    pub negative_modes: Vec<usize>,
}

impl ManifoldModel {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let n = spec.n;
        if n < 4 || !n.is_multiple_of(2) {
            return Err(QcError::Invalid(format!("dimension n = {n} must be even and at least 4")));
        }
        if spec.k_max < 1 {
            return Err(QcError::Invalid("k_max must be at least 1".into()));
        }
        if spec.resonance_m < 1 {
            return Err(QcError::Invalid("resonance_m must be at least 1".into()));
        }
        if spec.backend == Backend::Sphere {
            if !spec.spectrum_overrides.is_empty() {
                return Err(QcError::Invalid("sphere backend does not accept spectrum overrides".into()));
            }
            if spec.resonance_m != 1 {
                return Err(QcError::Invalid("the round sphere has m = 1".into()));
            }
        }
        for &(k, mu) in &spec.spectrum_overrides {
            if k == 0 && mu != 0.0 {
                return Err(QcError::Invalid("the kernel must contain the constants (μ_0 = 0)".into()));
            }
            if !mu.is_finite() {
                return Err(QcError::Invalid(format!("non-finite eigenvalue override at degree {k}")));
            }
        }
        let omega = sphere_area(n);
        let kappa1 = factorial(n - 1) * omega;
        let axis = north(n);
        let (basis, mode_degree, vol, synth) = match spec.basis {
            BasisKind::Zonal => {
                let os = spec.oversample.unwrap_or(1.5).max(1.0);
                let npts = ((os * (spec.k_max + 1) as f64).ceil() as usize).max(spec.k_max + 2);
                let zb = ZonalBasis::new(n, spec.k_max, npts);
                let deg = (0..=spec.k_max).collect();
                let vol = DVector::from_vec(zb.vol.clone());
                let synth = zb.synth.clone();
                (Basis::Zonal(zb), deg, vol, synth)
            }
            BasisKind::Full => {
                if spec.k_max > 12 {
                    return Err(QcError::Invalid("full basis is limited to k_max <= 12".into()));
                }
                let fb = FullBasis::new(n, spec.k_max);
                let deg = fb.modes.iter().map(|m| m.degree()).collect();
                let vol = DVector::from_vec(fb.vol.clone());
                let synth = fb.synth.clone();
                (Basis::Full(fb), deg, vol, synth)
            }
        };
        let mut model = ManifoldModel {
            n,
            k_max: spec.k_max,
            backend: spec.backend,
            m: spec.resonance_m,
            euler_char: spec.euler_char.unwrap_or(2.0),
            omega,
            kappa1,
            q_const: factorial(n - 1) * spec.resonance_m as f64,
            scalar_curv: (n * (n - 1)) as f64,
            basis,
            axis,
            overrides: spec.spectrum_overrides.clone(),
            mode_degree,
            mode_mu: DVector::zeros(0),
            vol,
            synth,
            negative_modes: vec![],
        };
        model.mode_mu = DVector::from_iterator(model.mode_degree.len(), model.mode_degree.iter().map(|&k| model.mu(k)));
        let mut neg: Vec<usize> = (0..model.n_modes()).filter(|&i| model.mode_mu[i] < 0.0).collect();
        neg.sort_by(|&i, &j| model.mode_mu[i].partial_cmp(&model.mode_mu[j]).unwrap().then(i.cmp(&j)));
        model.negative_modes = neg;
        Ok(model)
    }

    /// GJMS eigenvalue on degree k (any k, overrides applied).
    pub fn mu(&self, k: usize) -> f64 {
        if let Some(&(_, v)) = self.overrides.iter().rev().find(|(kk, _)| *kk == k) {
            return v;
        }
        round_gjms_eigenvalue(self.n, k)
    }

    /// Eigenvalue per degree up to `k_max`.
    pub fn spectrum(&self) -> Vec<f64> {
        (0..=self.k_max).map(|k| self.mu(k)).collect()
    }

    pub fn n_modes(&self) -> usize {
        self.mode_degree.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.vol.len()
    }

    pub fn mode_degree(&self, i: usize) -> usize {
        self.mode_degree[i]
    }

    pub fn mode_mu(&self) -> &DVector<f64> {
        &self.mode_mu
    }

    /// Number of negative eigenvalues counted with multiplicity (`m̄`).
    pub fn mbar(&self) -> usize {
        self.negative_modes.len()
    }

    /// Total Q-curvature `(n-1)! m ω_n`.
    pub fn kappa(&self) -> f64 {
        self.kappa1 * self.m as f64
    }

    pub fn is_zonal(&self) -> bool {
        matches!(self.basis, Basis::Zonal(_))
    }

    pub fn zonal(&self) -> Option<&ZonalBasis> {
        match &self.basis {
            Basis::Zonal(z) => Some(z),
            Basis::Full(_) => None,
        }
    }

    /// Whether mode i is axisymmetric about the model axis.
    pub fn mode_is_zonal(&self, i: usize) -> bool {
        match &self.basis {
            Basis::Zonal(_) => true,
            Basis::Full(fb) => fb.modes[i].is_zonal(),
        }
    }

    /// Values of all basis modes at the point x.
    pub fn eval_modes(&self, x: &Point) -> Vec<f64> {
        match &self.basis {
            Basis::Zonal(zb) => {
                let mut p = vec![0.0; zb.kmax + 1];
                zb.eval_all(self.axis.dot(x).clamp(-1.0, 1.0), &mut p);
                p
            }
            Basis::Full(fb) => fb.eval_modes(x),
        }
    }

    /// Position of node i on the sphere (zonal: a representative on the
    /// meridian through the first tangent direction).
    pub fn node_point(&self, i: usize) -> Point {
        match &self.basis {
            Basis::Zonal(zb) => {
                let c = zb.x[i];
                let s = (1.0 - c * c).max(0.0).sqrt();
                let mut p = DVector::zeros(self.n + 1);
                p[self.n] = c;
                p[0] = s;
                p
            }
            Basis::Full(fb) => fb.points[i].clone(),
        }
    }

    /// `∫ Q dV`.
    pub fn total_q(&self) -> f64 {
        let ones = DVector::from_element(self.n_nodes(), self.q_const);
        ones.dot(&self.vol)
    }

    /// Eigenvalue-count check for the synthetic backend: `μ_1 ≤ … ≤ μ_m̄ < 0`.
    pub fn negative_eigenvalues(&self) -> Vec<f64> {
        self.negative_modes.iter().map(|&i| self.mode_mu[i]).collect()
    }

    /// Spectral resolution check for a field with sharp features of width `1/scale`.
    pub fn require_kmax(&self, needed: f64, what: &str) -> Result<()> {
        if (self.k_max as f64) < needed {
            return Err(QcError::Resolution(format!(
                "{what} needs k_max >= {:.0}, model has {}",
                needed.ceil(),
                self.k_max
            )));
        }
        Ok(())
    }

    /// Harmonic multiplicity of degree k on S^n.
    pub fn dim_k(&self, k: usize) -> usize {
        harmonic_dim(self.n, k)
    }
}
