//! Projection dictionaries (multivariate monomials) and the Fourier test family.
//!
//! # Monomial column order
//!
//! A freshly built [`MonomialBasis`] lists exponent tuples by total degree,
//! and within a degree in descending lexicographic order of the tuple, so for
//! three variables at max degree one the columns are
//! `1, u1, u2, u3, u1u2, u1u3, u2u3, u1u2u3`.
//!
//! [`MonomialBasis::extend`] never reorders: tuples of the old basis keep their
//! index (with a zero exponent appended for the new variable) and the tuples
//! involving the new variable follow, again in (degree, descending lex) order.
//! An extended basis therefore differs in column order from a fresh basis of
//! the same size; the exponent table is what gets serialized.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", content = "degree", rename_all = "snake_case")]
pub enum DegreePolicy {
    /// Sum of exponents at most `R`.
    Total(u32),
    /// Every exponent at most `R`.
    Max(u32),
}

impl DegreePolicy {
    fn admits(&self, tuple: &[u32]) -> bool {
        match *self {
            DegreePolicy::Total(r) => tuple.iter().sum::<u32>() <= r,
            DegreePolicy::Max(r) => tuple.iter().all(|&e| e <= r),
        }
    }

    /// Number of tuples over `nvars` variables, or `None` on overflow.
    pub fn count(&self, nvars: usize) -> Option<usize> {
        match *self {
            DegreePolicy::Total(r) => {
                // C(d + R, R)
                let r = r as u128;
                let mut c: u128 = 1;
                for i in 1..=r {
                    c = c.checked_mul(nvars as u128 + i)? / i;
                }
                usize::try_from(c).ok()
            }
            DegreePolicy::Max(r) => (r as usize + 1).checked_pow(u32::try_from(nvars).ok()?),
        }
    }

    fn max_exponent(&self) -> u32 {
        match *self {
            DegreePolicy::Total(r) | DegreePolicy::Max(r) => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMonomialBasis")]
pub struct MonomialBasis {
    nvars: usize,
    policy: DegreePolicy,
    exponents: Vec<Vec<u32>>,
}

#[derive(Deserialize)]
struct RawMonomialBasis {
    nvars: usize,
    policy: DegreePolicy,
    exponents: Vec<Vec<u32>>,
}

impl TryFrom<RawMonomialBasis> for MonomialBasis {
    type Error = Error;

    fn try_from(raw: RawMonomialBasis) -> Result<Self> {
        MonomialBasis::from_exponents(raw.nvars, raw.policy, raw.exponents)
    }
}

fn degree_lex(a: &[u32], b: &[u32]) -> std::cmp::Ordering {
    let da: u32 = a.iter().sum();
    let db: u32 = b.iter().sum();
    da.cmp(&db).then_with(|| b.cmp(a))
}

/// All tuples of length `nvars` admitted by `policy`, filtered by `keep`.
fn enumerate(nvars: usize, policy: DegreePolicy, keep: impl Fn(&[u32]) -> bool) -> Vec<Vec<u32>> {
    let cap = policy.max_exponent();
    let mut out = Vec::new();
    let mut tuple = vec![0u32; nvars];
    fn rec(
        pos: usize,
        tuple: &mut Vec<u32>,
        cap: u32,
        policy: DegreePolicy,
        keep: &dyn Fn(&[u32]) -> bool,
        out: &mut Vec<Vec<u32>>,
    ) {
        if pos == tuple.len() {
            if keep(tuple) {
                out.push(tuple.clone());
            }
            return;
        }
        for e in 0..=cap {
            tuple[pos] = e;
            if !policy.admits(&tuple[..=pos]) {
                break;
            }
            rec(pos + 1, tuple, cap, policy, keep, out);
        }
        tuple[pos] = 0;
    }
    rec(0, &mut tuple, cap, policy, &keep, &mut out);
    out.sort_by(|a, b| degree_lex(a, b));
    out
}

impl MonomialBasis {
    pub fn new(nvars: usize, policy: DegreePolicy) -> Result<Self> {
        if nvars == 0 {
            return Err(argument("monomial basis needs at least one variable"));
        }
        if policy.count(nvars).is_none() {
            return Err(argument("monomial basis size overflows"));
        }
        let exponents = enumerate(nvars, policy, |_| true);
        Ok(Self {
            nvars,
            policy,
            exponents,
        })
    }

    /// Rebuilds a basis from a stored exponent table, checking that it is a
    /// complete, duplicate-free set for the policy.
    pub fn from_exponents(
        nvars: usize,
        policy: DegreePolicy,
        exponents: Vec<Vec<u32>>,
    ) -> Result<Self> {
        if nvars == 0 {
            return Err(argument("monomial basis needs at least one variable"));
        }
        let expected = policy
            .count(nvars)
            .ok_or_else(|| argument("monomial basis size overflows"))?;
        if exponents.len() != expected {
            return Err(argument(format!(
                "exponent table has {} rows, policy requires {expected}",
                exponents.len()
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(exponents.len());
        for t in &exponents {
            if t.len() != nvars || !policy.admits(t) {
                return Err(argument(format!("exponent tuple {t:?} not admitted")));
            }
            if !seen.insert(t.clone()) {
                return Err(argument(format!("duplicate exponent tuple {t:?}")));
            }
        }
        Ok(Self {
            nvars,
            policy,
            exponents,
        })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn policy(&self) -> DegreePolicy {
        self.policy
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Basis over `new_dim = nvars + 1` variables that keeps every existing
    /// column index. Returns the extended basis; the number of appended
    /// columns is `extended.len() - self.len()`.
    pub fn extend(&self, new_dim: usize) -> Result<Self> {
        if new_dim != self.nvars + 1 {
            return Err(argument(format!(
                "basis over {} variables can only be extended to {}, got {new_dim}",
                self.nvars,
                self.nvars + 1
            )));
        }
        if self.policy.count(new_dim).is_none() {
            return Err(argument("monomial basis size overflows"));
        }
        let mut exponents: Vec<Vec<u32>> = self
            .exponents
            .iter()
            .map(|t| {
                let mut t = t.clone();
                t.push(0);
                t
            })
            .collect();
        exponents.extend(enumerate(new_dim, self.policy, |t| t[new_dim - 1] > 0));
        Ok(Self {
            nvars: new_dim,
            policy: self.policy,
            exponents,
        })
    }

    /// Writes `[phi_1(state), .., phi_J(state)]` into `out`.
    pub fn eval_into(&self, state: &[f64], out: &mut [f64]) -> Result<()> {
        if state.len() != self.nvars {
            return Err(argument(format!(
                "state has {} entries, basis expects {}",
                state.len(),
                self.nvars
            )));
        }
        if out.len() != self.len() {
            return Err(argument("output buffer length differs from basis size"));
        }
        for (slot, tuple) in out.iter_mut().zip(&self.exponents) {
            let mut v = 1.0;
            for (&x, &e) in state.iter().zip(tuple) {
                if e > 0 {
                    v *= x.powi(e as i32);
                }
            }
            *slot = v;
        }
        Ok(())
    }

    pub fn eval(&self, state: &[f64]) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.len());
        self.eval_into(state, out.as_mut_slice())?;
        Ok(out)
    }

    /// Human-readable column label such as `u1*u3^2`; the constant is `1`.
    pub fn label(&self, column: usize) -> String {
        let parts: Vec<String> = self.exponents[column]
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, &e)| match e {
                1 => format!("u{}", i + 1),
                _ => format!("u{}^{e}", i + 1),
            })
            .collect();
        if parts.is_empty() {
            "1".to_string()
        } else {
            parts.join("*")
        }
    }

    /// Column index of the monomial with the given exponents, if present.
    pub fn index_of(&self, tuple: &[u32]) -> Option<usize> {
        self.exponents.iter().position(|t| t.as_slice() == tuple)
    }
}

/// `{sqrt(2/T) sin(2 pi k t/T)} ∪ {sqrt(2/T) cos(2 pi k t/T)} ∪ {1/sqrt(T)}`,
/// `k = 1..=half_count`, in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierTestBasis {
    half_count: usize,
    horizon: f64,
}

impl FourierTestBasis {
    /// Relative slack allowed when evaluating just past either end of `[0, T]`.
    const EDGE_SLACK: f64 = 1e-9;

    pub fn new(half_count: usize, horizon: f64) -> Result<Self> {
        if half_count == 0 {
            return Err(argument("Fourier test basis needs at least one frequency"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(argument(format!(
                "test interval length must be positive, got {horizon}"
            )));
        }
        Ok(Self {
            half_count,
            horizon,
        })
    }

    pub fn half_count(&self) -> usize {
        self.half_count
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `K = 2 * half_count + 1`
    pub fn len(&self) -> usize {
        2 * self.half_count + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Writes values and time derivatives of all members at `t`.
    pub fn eval_into(&self, t: f64, values: &mut [f64], derivs: &mut [f64]) -> Result<()> {
        let slack = Self::EDGE_SLACK * self.horizon;
        if !(t >= -slack && t <= self.horizon + slack) {
            return Err(argument(format!(
                "t = {t} lies outside the test interval [0, {}]",
                self.horizon
            )));
        }
        let k_total = self.len();
        if values.len() != k_total || derivs.len() != k_total {
            return Err(argument(
                "output buffers must have one slot per test function",
            ));
        }
        let kt = self.half_count;
        let amp = (2.0 / self.horizon).sqrt();
        let base = 2.0 * PI / self.horizon;
        for k in 1..=kt {
            let omega = base * k as f64;
            let (s, c) = (omega * t).sin_cos();
            values[k - 1] = amp * s;
            derivs[k - 1] = amp * omega * c;
            values[kt + k - 1] = amp * c;
            derivs[kt + k - 1] = -amp * omega * s;
        }
        values[2 * kt] = 1.0 / self.horizon.sqrt();
        derivs[2 * kt] = 0.0;
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<(DVector<f64>, DVector<f64>)> {
        let mut v = DVector::zeros(self.len());
        let mut d = DVector::zeros(self.len());
        self.eval_into(t, v.as_mut_slice(), d.as_mut_slice())?;
        Ok((v, d))
    }
}
