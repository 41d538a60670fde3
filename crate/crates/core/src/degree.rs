//! Leray–Schauder degree from the Morse data at infinity.

use crate::error::{QcError, Result};
use serde::{Deserialize, Serialize};

/// How the critical list enumerates configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// Each configuration once, as `find_critical_points` reports them.
    #[default]
    Unordered,
    /// Every ordering of every configuration; the sum is divided by `m!`.
    Ordered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CritEntry {
    pub i_inf: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegreeInput {
    pub m: u32,
    #[serde(default)]
    pub mbar: u32,
    #[serde(rename = "chiM", default = "chi_sphere")]
    pub chi_m: i64,
    #[serde(default = "four")]
    pub n: u32,
    #[serde(default)]
    pub crit: Vec<CritEntry>,
    #[serde(default)]
    pub convention: Convention,
}

fn chi_sphere() -> i64 {
    2
}

fn four() -> u32 {
    4
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DegreeReport {
    pub d_m: i64,
    /// `χ(J^L, J^{−L}) − Σ (−1)^{m̄ + i_∞} / m!`.
    pub chi_sublevel_form: i64,
    /// `1 − χ(A_{m−1,m̄})`.
    pub chi_barycenter: i64,
}

fn sign(k: i64) -> i128 {
    if k.rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

fn factorial(k: u32) -> Result<i128> {
    (1..=k as i128).try_fold(1i128, |a, b| a.checked_mul(b)).ok_or_else(|| QcError::Overflow(format!("{k}!")))
}

fn to_i64(v: i128) -> Result<i64> {
    i64::try_from(v).map_err(|_| QcError::Overflow(format!("{v} does not fit in 64 bits")))
}

/// `1 − χ(A_{m−1,m̄})`: `(−1)^{m̄}` for `m = 1` and
/// `(−1)^{m̄} Π_{i=1}^{m−1}(i − χ(M)) / (m−1)!` otherwise.
pub fn chi_barycenter(m: u32, mbar: u32, chi_m: i64) -> Result<i64> {
    if m == 0 {
        return Err(QcError::Invalid("m must be at least 1".into()));
    }
    let mut prod: i128 = 1;
    for i in 1..m as i128 {
        prod = prod.checked_mul(i - chi_m as i128).ok_or_else(|| QcError::Overflow("barycenter product".into()))?;
    }
    let f = factorial(m - 1)?;
    if prod % f != 0 {
        return Err(QcError::Convention(format!("product {prod} is not divisible by ({})!", m - 1)));
    }
    to_i64(sign(mbar as i64) * prod / f)
}

impl DegreeInput {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(QcError::Invalid("m must be at least 1".into()));
        }
        if self.n < 4 || self.n % 2 == 1 {
            return Err(QcError::Invalid(format!("n = {} must be even and at least 4", self.n)));
        }
        // Morse index of F_K lies in [0, n m]
        let lo = self.m as i64 - 1;
        let hi = (self.n as i64 + 1) * self.m as i64 - 1;
        if let Some(e) = self.crit.iter().find(|e| e.i_inf < lo || e.i_inf > hi) {
            return Err(QcError::Invalid(format!("i_inf = {} outside [{lo}, {hi}]", e.i_inf)));
        }
        Ok(())
    }

    /// `Σ (−1)^{i_∞}` and the normalizer it is divided by.
    fn weighted_sum(&self) -> Result<(i128, i128)> {
        let s: i128 = self.crit.iter().map(|e| sign(e.i_inf)).sum();
        let div = match self.convention {
            Convention::Unordered => 1,
            Convention::Ordered => factorial(self.m)?,
        };
        if s % div != 0 {
            return Err(QcError::Convention(format!("ordered sum {s} is not divisible by {}!; the list is not closed under permutations", self.m)));
        }
        Ok((s, div))
    }
}

/// Degree `d_m` in both displayed forms; errors if they disagree or if a
/// non-integer would arise.
pub fn leray_schauder_degree(input: &DegreeInput) -> Result<DegreeReport> {
    input.validate()?;
    let (s, div) = input.weighted_sum()?;
    let bary = chi_barycenter(input.m, input.mbar, input.chi_m)? as i128;
    let sm = sign(input.mbar as i64);
    // (−1)^{m̄} (B − S/m!) with B = Π(i − χ)/(m−1)!
    let unsigned_b = sm * bary;
    let d1 = sm * (unsigned_b - s / div);
    // χ(J^L, J^{−L}) − Σ (−1)^{m̄ + i_∞} / m!, with χ(J^L, J^{−L}) = 1 − χ(A_{m−1,m̄})
    let s2: i128 = input.crit.iter().map(|e| sign(input.mbar as i64 + e.i_inf)).sum();
    let d2 = bary - s2 / div;
    if d1 != d2 {
        return Err(QcError::Convention(format!("the two forms of the degree disagree: {d1} vs {d2}")));
    }
    Ok(DegreeReport { d_m: to_i64(d1)?, chi_sublevel_form: to_i64(d2)?, chi_barycenter: to_i64(bary)? })
}

/// Expands an unordered critical list to its ordered symmetrization.
pub fn symmetrize(input: &DegreeInput) -> Result<DegreeInput> {
    let f = factorial(input.m)? as usize;
    let crit = input.crit.iter().flat_map(|e| std::iter::repeat_n(*e, f)).collect();
    Ok(DegreeInput { crit, convention: Convention::Ordered, ..input.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn input(m: u32, mbar: u32, chi_m: i64, i: &[i64]) -> DegreeInput {
        DegreeInput { m, mbar, chi_m, n: 4, crit: i.iter().map(|&i_inf| CritEntry { i_inf }).collect(), convention: Convention::Unordered }
    }

    #[test]
    fn barycenter_examples() {
        assert_eq!(chi_barycenter(1, 0, 2).unwrap(), 1);
        assert_eq!(chi_barycenter(1, 1, 2).unwrap(), -1);
        assert_eq!(chi_barycenter(2, 0, 2).unwrap(), -1);
        assert_eq!(chi_barycenter(3, 1, 0).unwrap(), -1);
        assert!(chi_barycenter(0, 0, 2).is_err());
    }

    #[test]
    fn degree_examples() {
        assert_eq!(leray_schauder_degree(&input(1, 0, 2, &[])).unwrap().d_m, 1);
        assert_eq!(leray_schauder_degree(&input(1, 0, 2, &[2])).unwrap().d_m, 0);
        assert_eq!(leray_schauder_degree(&input(1, 0, 2, &[3])).unwrap().d_m, 2);
        let r = leray_schauder_degree(&input(2, 0, 2, &[])).unwrap();
        assert_eq!((r.d_m, r.chi_barycenter), (-1, -1));
    }

    #[test]
    fn json_shape() {
        let d: DegreeInput = serde_json::from_str(r#"{"m":1,"mbar":0,"crit":[]}"#).unwrap();
        assert_eq!(d.chi_m, 2);
        let out = serde_json::to_value(leray_schauder_degree(&d).unwrap()).unwrap();
        assert_eq!(out["d_m"], 1);
        assert!(serde_json::from_str::<DegreeInput>(r#"{"m":1,"bogus":0}"#).is_err());
    }

    #[test]
    fn legal_index_range() {
        // i_inf ∈ [m − 1, (n+1)m − 1]
        assert!(leray_schauder_degree(&input(1, 0, 2, &[5])).is_err());
        assert!(leray_schauder_degree(&input(2, 0, 2, &[0])).is_err());
        assert!(leray_schauder_degree(&input(2, 0, 2, &[9])).is_ok());
    }

    #[test]
    fn ordered_list_must_be_symmetric() {
        let mut d = input(2, 0, 2, &[3]);
        d.convention = Convention::Ordered;
        assert!(matches!(leray_schauder_degree(&d), Err(QcError::Convention(_))));
    }

    fn arb_input() -> impl Strategy<Value = DegreeInput> {
        (1u32..6, 0u32..4, -6i64..7, prop::sample::select(vec![4u32, 6, 8])).prop_flat_map(|(m, mbar, chi_m, n)| {
            let lo = m as i64 - 1;
            let hi = (n as i64 + 1) * m as i64 - 1;
            prop::collection::vec(lo..=hi, 0..8).prop_map(move |is| DegreeInput {
                m,
                mbar,
                chi_m,
                n,
                crit: is.into_iter().map(|i_inf| CritEntry { i_inf }).collect(),
                convention: Convention::Unordered,
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn forms_agree_and_conventions_reconcile(d in arb_input()) {
            let r = leray_schauder_degree(&d).unwrap();
            prop_assert_eq!(r.d_m, r.chi_sublevel_form);
            let o = leray_schauder_degree(&symmetrize(&d).unwrap()).unwrap();
            prop_assert_eq!(o, r);
        }

        #[test]
        fn flipping_mbar_negates_the_empty_degree(m in 1u32..8, mbar in 0u32..5, chi_m in -6i64..7) {
            let a = leray_schauder_degree(&input(m, mbar, chi_m, &[])).unwrap().d_m;
            let b = leray_schauder_degree(&input(m, mbar + 1, chi_m, &[])).unwrap().d_m;
            prop_assert_eq!(a, -b);
        }
    }
}
