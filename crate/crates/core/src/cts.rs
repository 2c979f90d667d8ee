//! Correct test sequences: the exact oracle, one-sided randomized zero tests
//! on grids, Monte Carlo density estimates, and the length conditions and
//! bound formulas as numeric evaluators.
//!
//! Randomness: every run derives its generator from a root seed with
//! [`trial_rng`], a `ChaCha8Rng` seeded with the root seed whose stream number
//! is the trial index.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divfree::{IdentityTarget, C_EFF};
use crate::field::FieldElement;
use crate::network::{net_eval, Instantiation, NetworkError, NodeValue};
use crate::polynomial::{GridSpec, SparsePoly};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CtsError {
    #[error("compiled denominators vanished on {draws} draws; rejection budget exhausted")]
    RejectionBudgetExceeded { draws: usize },
    #[error("nonsense input: {0}")]
    NonsenseInput(String),
    #[error("target and grid disagree: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Generator for trial `trial` under `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Uniform point of the grid.
pub fn sample_grid_point<R: Rng + ?Sized>(grid: &GridSpec, axis: &[FieldElement], rng: &mut R) -> Vec<FieldElement> {
    (0..grid.num_vars()).map(|_| axis[rng.random_range(0..axis.len())].clone()).collect()
}

/// True iff every member of `family` vanishing on all of `sequence` lies in
/// `sigma`.
pub fn cts_oracle(sequence: &[Vec<FieldElement>], family: &[SparsePoly], sigma: &[SparsePoly]) -> bool {
    family.iter().all(|f| {
        let vanishes = sequence.iter().all(|x| f.eval(x).map(|v| v.is_zero()).unwrap_or(false));
        !vanishes || sigma.contains(f)
    })
}

/// What a randomized zero test evaluates.
#[derive(Debug, Clone, Copy)]
pub enum ZeroTestTarget<'a> {
    Poly(&'a SparsePoly),
    /// An identity target under a fixed compiled instantiation; points where
    /// a compiled denominator vanishes are rejected.
    Network { target: &'a IdentityTarget, inst: &'a Instantiation },
}

impl ZeroTestTarget<'_> {
    pub fn degree_bound(&self) -> u128 {
        match self {
            ZeroTestTarget::Poly(p) => p.total_degree().max(0) as u128,
            ZeroTestTarget::Network { target, .. } => target.degree_bound,
        }
    }

    fn check(&self, grid: &GridSpec) -> Result<(), CtsError> {
        let (field, n) = match self {
            ZeroTestTarget::Poly(p) => (p.field(), p.num_vars()),
            ZeroTestTarget::Network { target, .. } => (target.network.field(), target.network.num_inputs()),
        };
        if field != grid.field() || n != grid.num_vars() {
            return Err(CtsError::Mismatch(format!(
                "target over {field} in {n} variables, grid over {} in {}",
                grid.field(),
                grid.num_vars()
            )));
        }
        Ok(())
    }

    /// `None` when the point must be rejected.
    fn eval(&self, x: &[FieldElement]) -> Result<Option<FieldElement>, CtsError> {
        match self {
            ZeroTestTarget::Poly(p) => Ok(Some(p.eval(x).map_err(|e| CtsError::Mismatch(e.to_string()))?)),
            ZeroTestTarget::Network { target, inst } => {
                let t = net_eval(&target.network, inst, x)?;
                let dens_ok = target
                    .denominators
                    .iter()
                    .all(|d| matches!(t.value(*d), NodeValue::Defined(v) if !v.is_zero()));
                if !dens_ok {
                    return Ok(None);
                }
                match &t.outputs()[0] {
                    NodeValue::Defined(v) => Ok(Some(v.clone())),
                    NodeValue::Undefined(n) => Err(NetworkError::BadActivation(format!("compiled target undefined at {n}")).into()),
                }
            }
        }
    }
}

/// Grid and sequence length for a randomized test.
#[derive(Debug, Clone)]
pub struct CtsPlan {
    pub grid: GridSpec,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "witness")]
pub enum Verdict {
    CertifiedNonzero(Vec<FieldElement>),
    AllZero,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CtsReport {
    pub verdict: Verdict,
    #[serde(rename = "M")]
    pub length: usize,
    pub delta: u64,
    pub points_used: usize,
    pub draws: usize,
    pub degree_bound: u128,
    /// `(D/delta)^M` when `D < delta`.
    pub false_zero_bound: Option<f64>,
}

/// Evaluate the target at `plan.length` uniform grid points; stop at the
/// first nonzero value. Rejected points are redrawn, at most `100 * M` draws.
pub fn randomized_zero_test_rng<R: Rng + ?Sized>(
    target: ZeroTestTarget<'_>,
    plan: &CtsPlan,
    rng: &mut R,
) -> Result<CtsReport, CtsError> {
    if plan.length == 0 {
        return Err(CtsError::NonsenseInput("M must be at least 1".into()));
    }
    target.check(&plan.grid)?;
    let axis = plan.grid.axis();
    let budget = 100 * plan.length;
    let (mut used, mut draws) = (0, 0);
    let mut verdict = Verdict::AllZero;
    while used < plan.length {
        if draws == budget {
            return Err(CtsError::RejectionBudgetExceeded { draws });
        }
        draws += 1;
        let x = sample_grid_point(&plan.grid, &axis, rng);
        let Some(v) = target.eval(&x)? else { continue };
        used += 1;
        if !v.is_zero() {
            verdict = Verdict::CertifiedNonzero(x);
            break;
        }
    }
    let degree_bound = target.degree_bound();
    let delta = plan.grid.side();
    let false_zero_bound =
        (degree_bound < delta as u128).then(|| (degree_bound as f64 / delta as f64).powi(plan.length as i32));
    Ok(CtsReport { verdict, length: plan.length, delta, points_used: used, draws, degree_bound, false_zero_bound })
}

pub fn randomized_zero_test(target: ZeroTestTarget<'_>, plan: &CtsPlan, seed: u64) -> Result<CtsReport, CtsError> {
    randomized_zero_test_rng(target, plan, &mut trial_rng(seed, 0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FalseZeroReport {
    pub trials: u64,
    pub all_zero_count: u64,
    pub frequency: f64,
    pub false_zero_bound: Option<f64>,
}

/// Repeat the test `trials` times (trial `t` uses `trial_rng(seed, t)`) and
/// count `all_zero` verdicts.
pub fn all_zero_frequency(target: ZeroTestTarget<'_>, plan: &CtsPlan, seed: u64, trials: u64) -> Result<FalseZeroReport, CtsError> {
    let reports: Vec<CtsReport> = (0..trials)
        .into_par_iter()
        .map(|t| randomized_zero_test_rng(target, plan, &mut trial_rng(seed, t)))
        .collect::<Result<_, _>>()?;
    let all_zero_count = reports.iter().filter(|r| r.verdict == Verdict::AllZero).count() as u64;
    Ok(FalseZeroReport {
        trials,
        all_zero_count,
        frequency: all_zero_count as f64 / trials.max(1) as f64,
        false_zero_bound: reports.first().and_then(|r| r.false_zero_bound),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityReport {
    pub trials: u64,
    pub length: usize,
    pub cts_count: u64,
    pub cts_frequency: f64,
    /// `1 - 1/(deg_lci * e^dim)`; informational only.
    pub density_bound: f64,
}

/// Fraction of random length-`length` sequences that are correct test
/// sequences for `family` with respect to `{0}`. Trial `t` draws points from
/// `trial_rng(seed, t)`, so a longer sequence extends the shorter one and the
/// frequency is nondecreasing in `length` for a fixed seed.
pub fn cts_density_estimate(
    family: &[SparsePoly],
    grid: &GridSpec,
    length: usize,
    trials: u64,
    seed: u64,
    deg_lci: f64,
    dim: f64,
) -> Result<DensityReport, CtsError> {
    if trials == 0 {
        return Err(CtsError::NonsenseInput("trials must be at least 1".into()));
    }
    if let Some(f) = family.iter().find(|f| f.field() != grid.field() || f.num_vars() != grid.num_vars()) {
        return Err(CtsError::Mismatch(format!("family member {f} does not match the grid")));
    }
    let nonzero: Vec<&SparsePoly> = family.iter().filter(|f| !f.is_zero()).collect();
    let axis = grid.axis();
    let cts_count: u64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let seq: Vec<Vec<FieldElement>> = (0..length).map(|_| sample_grid_point(grid, &axis, &mut rng)).collect();
            let ok = nonzero.iter().all(|f| seq.iter().any(|x| !f.eval_unchecked(x).is_zero()));
            ok as u64
        })
        .sum();
    Ok(DensityReport {
        trials,
        length,
        cts_count,
        cts_frequency: cts_count as f64 / trials as f64,
        density_bound: 1.0 - 1.0 / (deg_lci * dim.exp()),
    })
}

/// Named numeric inputs for [`cts_condition_eval`] and [`bound_formula`].
/// Unused fields are ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormulaInputs {
    /// `deg_lci` of the parameter set (Omega or Lambda).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deg_lci: Option<f64>,
    /// `deg_lci(Gamma)` of the second parameter set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deg_lci2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<f64>,
    /// Activation or polynomial degree.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    /// Sequence length (Thm. length condition) or network size.
    #[serde(rename = "L")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(rename = "S")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub space: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(rename = "M")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_len: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Number of points (growth, Sauer).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    /// Degree `D` of a variety (Pham bound).
    #[serde(rename = "D")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub big_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d1: Option<f64>,
    /// Node depth `i`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i: Option<f64>,
}

fn need(v: Option<f64>, name: &str) -> Result<f64, CtsError> {
    v.ok_or_else(|| CtsError::NonsenseInput(format!("missing input {name}")))
}

fn positive(v: Option<f64>, name: &str) -> Result<f64, CtsError> {
    let x = need(v, name)?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(CtsError::NonsenseInput(format!("{name} must be positive, got {x}")))
    }
}

fn ln_pos(x: f64, what: &str) -> Result<f64, CtsError> {
    if x > 0.0 {
        Ok(x.ln())
    } else {
        Err(CtsError::NonsenseInput(format!("log of non-positive {what} = {x}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    /// `64(1 + (1 + ln deg)/dim + ln(L(d+1))) < L/dim`.
    Thm411,
    /// `M >= 6LS` and the `ln(delta)` lower bound for one network.
    Cor59,
    /// `M >= 12LS` and the `ln(delta)` lower bound for a pair.
    Cor510,
}

impl std::str::FromStr for Condition {
    type Err = CtsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "thm411" => Ok(Condition::Thm411),
            "cor59" => Ok(Condition::Cor59),
            "cor510" => Ok(Condition::Cor510),
            _ => Err(CtsError::NonsenseInput(format!("unknown condition {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: Condition,
    /// `None` when the quantity being tested (L, M or delta) was not given.
    pub satisfied: Option<bool>,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    /// Smallest sequence length (thm411) or `M` (cor59/cor510) that works.
    pub minimal_length: Option<u64>,
    /// Smallest integer `delta` meeting the `ln(delta)` bound.
    pub minimal_delta: Option<u64>,
    pub log_delta_threshold: Option<f64>,
    pub inputs: FormulaInputs,
}

fn thm411_sides(deg: f64, dim: f64, d: f64, l: f64) -> (f64, f64) {
    (64.0 * (1.0 + (1.0 + deg.ln()) / dim + (l * (d + 1.0)).ln()), l / dim)
}

/// Evaluate a length condition with natural logarithms.
pub fn cts_condition_eval(which: Condition, inputs: &FormulaInputs) -> Result<ConditionReport, CtsError> {
    let mut rep = ConditionReport {
        condition: which,
        satisfied: None,
        lhs: None,
        rhs: None,
        minimal_length: None,
        minimal_delta: None,
        log_delta_threshold: None,
        inputs: inputs.clone(),
    };
    match which {
        Condition::Thm411 => {
            let deg = positive(inputs.deg_lci, "deg_lci")?;
            let dim = positive(inputs.dim, "dim")?;
            let d = positive(inputs.d, "d")?;
            let holds = |l: u64| {
                let (a, b) = thm411_sides(deg, dim, d, l as f64);
                a < b
            };
            // Fails for every L <= 64 dim; increasing in L beyond that.
            let mut lo = (64.0 * dim).floor() as u64;
            let mut hi = lo.max(1);
            while !holds(hi) {
                hi = hi.checked_mul(2).ok_or_else(|| CtsError::NonsenseInput("no L satisfies".into()))?;
            }
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if holds(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            rep.minimal_length = Some(hi);
            if let Some(l) = inputs.length {
                let l = positive(Some(l), "L")?;
                let (a, b) = thm411_sides(deg, dim, d, l);
                rep.lhs = Some(a);
                rep.rhs = Some(b);
                rep.satisfied = Some(a < b);
            }
        }
        Condition::Cor59 | Condition::Cor510 => {
            let pair = which == Condition::Cor510;
            let l = positive(inputs.length, "L")?;
            let s_sp = positive(inputs.space, "S")?;
            let factor = if pair { 12.0 } else { 6.0 };
            let m_min = (factor * l * s_sp).ceil();
            rep.minimal_length = Some(m_min as u64);
            let mut parts = Vec::new();
            if let Some(m) = inputs.m_len {
                rep.lhs = Some(m);
                rep.rhs = Some(m_min);
                parts.push(m >= m_min);
            }
            if let (Some(d), Some(ell), Some(s), Some(t), Some(deg)) =
                (inputs.d, inputs.ell, inputs.s, inputs.t, inputs.deg_lci)
            {
                let c = inputs.c.unwrap_or(C_EFF as f64);
                let ds = d * s_sp;
                let (k1, k2) = if pair { (4.0, 8.0) } else { (2.0, 4.0) };
                let deg_all = if pair { deg * need(inputs.deg_lci2, "deg_lci2")? } else { deg };
                let first = 2.0 * (1.0 + ln_pos(k1 * ds.powf(ell) + 1.0, "degree term")?);
                let second = 2.0
                    * t
                    * (ln_pos(deg_all, "deg_lci")? / positive(Some(s), "s")?
                        + ln_pos(k2 * ds.powf(c * ell) - k2, "parameterization degree")?);
                let thr = first.max(second);
                rep.log_delta_threshold = Some(thr);
                rep.minimal_delta = Some(thr.exp().ceil().max(1.0) as u64);
                if let Some(delta) = inputs.delta {
                    parts.push(ln_pos(delta, "delta")? >= thr);
                }
            }
            if !parts.is_empty() {
                rep.satisfied = Some(parts.iter().all(|&b| b));
            }
        }
    }
    Ok(rep)
}

/// Bound formulas evaluated on caller-supplied statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Formula {
    /// Cells: `deg_lci (1 + grad)^dim`.
    Cells,
    /// Boolean algebra size: `2^(deg_lci (1 + grad)^dim)`.
    Algebra,
    /// Growth of distinguished open sets: `deg_lci (1 + m(d+1))^dim`.
    Growth,
    /// Sauer-Shelah-Perles: `sum_{i <= s} C(m, i)`.
    Sauer,
    /// VC/Krull: `s/(log2 s + k) - log2(deg_lci)/(log2 s + k)` against `dim`.
    Krull,
    /// Pham intersection: `D * d1^k`.
    Pham,
    /// Node degrees: `d^i` in the inputs, `d^(i+1) - 2` in the parameters.
    Degrees,
    /// `deg_lci(Lambda) (d^(l+1) - 2)^dim`.
    Image,
    /// Density lower bound `1 - 1/(deg_lci e^dim)`.
    Density,
    /// Success probability for one network or a pair.
    Prob59,
    Prob510,
}

impl std::str::FromStr for Formula {
    type Err = CtsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "cells" => Formula::Cells,
            "algebra" => Formula::Algebra,
            "growth" => Formula::Growth,
            "sauer" => Formula::Sauer,
            "krull" => Formula::Krull,
            "pham" => Formula::Pham,
            "degrees" => Formula::Degrees,
            "image" => Formula::Image,
            "density" => Formula::Density,
            "prob59" => Formula::Prob59,
            "prob510" => Formula::Prob510,
            _ => return Err(CtsError::NonsenseInput(format!("unknown formula {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub formula: Formula,
    pub values: BTreeMap<String, f64>,
    /// For inequality checks (Krull), whether it holds.
    pub holds: Option<bool>,
    pub inputs: FormulaInputs,
}

/// Binomial sum `sum_{i <= s} C(m, i)` in floating point.
pub fn sauer_bound(m: u64, s: u64) -> f64 {
    let mut total = 0.0;
    let mut c = 1.0;
    for i in 0..=s.min(m) {
        if i > 0 {
            c = c * (m - i + 1) as f64 / i as f64;
        }
        total += c;
    }
    total
}

/// Left side of the VC/Krull inequality; `0` when `s = 0`.
pub fn krull_lhs(s: f64, k: f64, deg_lci: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let den = s.log2() + k;
    s / den - deg_lci.log2() / den
}

pub fn bound_formula(which: Formula, x: &FormulaInputs) -> Result<BoundReport, CtsError> {
    let mut values = BTreeMap::new();
    let mut holds = None;
    match which {
        Formula::Cells | Formula::Algebra => {
            let b = positive(x.deg_lci, "deg_lci")? * (1.0 + need(x.grad, "grad")?).powf(need(x.dim, "dim")?);
            values.insert("cells".into(), b);
            if which == Formula::Algebra {
                values.insert("log2_algebra".into(), b);
            }
        }
        Formula::Growth => {
            let b = positive(x.deg_lci, "deg_lci")? * (1.0 + need(x.m, "m")? * (need(x.d, "d")? + 1.0)).powf(need(x.dim, "dim")?);
            values.insert("growth".into(), b);
        }
        Formula::Sauer => {
            values.insert("sauer".into(), sauer_bound(need(x.m, "m")? as u64, need(x.s, "s")? as u64));
        }
        Formula::Krull => {
            let s = need(x.s, "s")?;
            let k = match x.k {
                Some(k) => k,
                None => 1.0 + positive(x.grad, "grad")?.log2(),
            };
            let lhs = krull_lhs(s, k, positive(x.deg_lci, "deg_lci")?);
            let dim = need(x.dim, "dim")?;
            values.insert("lhs".into(), lhs);
            values.insert("k".into(), k);
            values.insert("dim".into(), dim);
            holds = Some(lhs <= dim);
        }
        Formula::Pham => {
            values.insert("pham".into(), positive(x.big_d, "D")? * positive(x.d1, "d1")?.powf(need(x.k, "k")?));
        }
        Formula::Degrees => {
            let d = positive(x.d, "d")?;
            let i = need(x.i, "i")?;
            values.insert("input_degree".into(), d.powf(i));
            values.insert("parameter_degree".into(), d.powf(i + 1.0) - 2.0);
        }
        Formula::Image => {
            let d = positive(x.d, "d")?;
            let b = positive(x.deg_lci, "deg_lci")? * (d.powf(need(x.ell, "ell")? + 1.0) - 2.0).powf(need(x.dim, "dim")?);
            values.insert("image_degree".into(), b);
        }
        Formula::Density => {
            values.insert(
                "probability".into(),
                1.0 - 1.0 / (positive(x.deg_lci, "deg_lci")? * need(x.dim, "dim")?.exp()),
            );
        }
        Formula::Prob59 | Formula::Prob510 => {
            let k = if which == Formula::Prob59 { 4.0 } else { 8.0 };
            let ds = positive(x.d, "d")? * positive(x.space, "S")?;
            let c = x.c.unwrap_or(C_EFF as f64);
            let s = need(x.s, "s")?;
            let inner = ln_pos(k * ds.powf(c * need(x.ell, "ell")?) - k, "parameterization degree")?;
            let p = 1.0 - 1.0 / (positive(x.deg_lci, "deg_lci")? * (s * (inner + 1.0)).exp());
            values.insert("probability".into(), p);
        }
    }
    Ok(BoundReport { formula: which, values, holds, inputs: x.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;
    use crate::polynomial::{zero_oracle, Domain};

    fn f5() -> Field {
        Field::prime(5).unwrap()
    }

    fn p(field: Field, n: usize, s: &str) -> SparsePoly {
        SparsePoly::parse(field, n, s).unwrap()
    }

    #[test]
    fn oracle_examples() {
        let k = f5();
        let family = vec![p(k, 1, "x1"), p(k, 1, "x1 - 1"), SparsePoly::zero(k, 1)];
        let sigma = vec![SparsePoly::zero(k, 1)];
        assert!(cts_oracle(&[vec![k.from_u64(2)]], &family, &sigma));
        assert!(!cts_oracle(&[vec![k.from_u64(0)]], &family, &sigma));
        assert!(cts_oracle(&[vec![k.from_u64(0)]], &[], &sigma));
    }

    #[test]
    fn zero_poly_is_always_all_zero() {
        let k = Field::prime(7).unwrap();
        let z = SparsePoly::zero(k, 2);
        let plan = CtsPlan { grid: GridSpec::new(k, 2, 5).unwrap(), length: 4 };
        for seed in 0..50 {
            let r = randomized_zero_test(ZeroTestTarget::Poly(&z), &plan, seed).unwrap();
            assert_eq!(r.verdict, Verdict::AllZero);
            assert_eq!(r.points_used, 4);
        }
    }

    #[test]
    fn witness_is_a_nonzero_point() {
        let k = Field::prime(7).unwrap();
        let f = p(k, 2, "x1*x2 - 1");
        let plan = CtsPlan { grid: GridSpec::new(k, 2, 5).unwrap(), length: 6 };
        for seed in 0..50 {
            if let Verdict::CertifiedNonzero(w) = randomized_zero_test(ZeroTestTarget::Poly(&f), &plan, seed).unwrap().verdict {
                assert!(!f.eval(&w).unwrap().is_zero());
            }
        }
    }

    #[test]
    fn false_zero_rate_for_x_minus_one() {
        let k = Field::prime(7).unwrap();
        let f = p(k, 1, "x1 - 1");
        let plan = CtsPlan { grid: GridSpec::new(k, 1, 5).unwrap(), length: 3 };
        let r = all_zero_frequency(ZeroTestTarget::Poly(&f), &plan, 11, 10_000).unwrap();
        assert_eq!(r.false_zero_bound, Some(0.008000000000000002));
        assert!(r.frequency <= 0.012, "frequency {}", r.frequency);
    }

    #[test]
    fn same_seed_same_report() {
        let k = Field::prime(7).unwrap();
        let f = p(k, 2, "x1 + x2");
        let plan = CtsPlan { grid: GridSpec::new(k, 2, 7).unwrap(), length: 2 };
        let a = randomized_zero_test(ZeroTestTarget::Poly(&f), &plan, 99).unwrap();
        let b = randomized_zero_test(ZeroTestTarget::Poly(&f), &plan, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_sided_on_zero_functions() {
        // x^5 - x is zero as a function on F_5.
        let k = f5();
        let f = p(k, 1, "x1^5 - x1");
        assert!(zero_oracle(&f, &Domain::Full, 100).unwrap().is_identically_zero_on_domain);
        let plan = CtsPlan { grid: GridSpec::new(k, 1, 5).unwrap(), length: 5 };
        for seed in 0..100 {
            assert_eq!(randomized_zero_test(ZeroTestTarget::Poly(&f), &plan, seed).unwrap().verdict, Verdict::AllZero);
        }
    }

    #[test]
    fn thm411_examples() {
        let x = FormulaInputs { deg_lci: Some(1.0), dim: Some(2.0), d: Some(1.0), length: Some(1200.0), ..Default::default() };
        let r = cts_condition_eval(Condition::Thm411, &x).unwrap();
        assert_eq!(r.satisfied, Some(true));
        assert!((r.lhs.unwrap() - 594.1).abs() < 0.05);
        let y = FormulaInputs { length: Some(1150.0), ..x.clone() };
        let r2 = cts_condition_eval(Condition::Thm411, &y).unwrap();
        assert_eq!(r2.satisfied, Some(false));
        assert!((r2.lhs.unwrap() - 591.4).abs() < 0.05);
        let l = r.minimal_length.unwrap();
        assert!((1150..=1200).contains(&l));
        let at = |l: u64| cts_condition_eval(Condition::Thm411, &FormulaInputs { length: Some(l as f64), ..x.clone() }).unwrap().satisfied;
        assert_eq!(at(l), Some(true));
        assert_eq!(at(l - 1), Some(false));
    }

    #[test]
    fn m_thresholds() {
        let x = FormulaInputs { length: Some(4.0), space: Some(2.0), ..Default::default() };
        assert_eq!(cts_condition_eval(Condition::Cor59, &x).unwrap().minimal_length, Some(48));
        assert_eq!(cts_condition_eval(Condition::Cor510, &x).unwrap().minimal_length, Some(96));
        let with_m = FormulaInputs { m_len: Some(47.0), ..x };
        assert_eq!(cts_condition_eval(Condition::Cor59, &with_m).unwrap().satisfied, Some(false));
    }

    #[test]
    fn delta_threshold() {
        let x = FormulaInputs {
            length: Some(1.0),
            space: Some(2.0),
            d: Some(1.0),
            ell: Some(1.0),
            s: Some(2.0),
            t: Some(1.0),
            deg_lci: Some(1.0),
            c: Some(1.0),
            ..Default::default()
        };
        // max{2(1 + ln 5), 2(0 + ln 4)} = 2 + 2 ln 5
        let r = cts_condition_eval(Condition::Cor59, &x).unwrap();
        assert!((r.log_delta_threshold.unwrap() - (2.0 + 2.0 * 5f64.ln())).abs() < 1e-12);
        assert_eq!(r.minimal_delta, Some((2.0 + 2.0 * 5f64.ln()).exp().ceil() as u64));
        let bad = FormulaInputs { d: Some(1.0), space: Some(1.0), ..x };
        assert!(matches!(cts_condition_eval(Condition::Cor59, &bad), Err(CtsError::NonsenseInput(_))));
    }

    #[test]
    fn nonsense_rejected() {
        let x = FormulaInputs { deg_lci: Some(1.0), dim: Some(0.0), d: Some(1.0), ..Default::default() };
        assert!(matches!(cts_condition_eval(Condition::Thm411, &x), Err(CtsError::NonsenseInput(_))));
    }

    #[test]
    fn density_examples() {
        let k = Field::prime(11).unwrap();
        let grid = GridSpec::new(k, 1, 11).unwrap();
        let mut family = Vec::new();
        for a in 0..11 {
            for b in 0..11 {
                family.push(p(k, 1, &format!("{a}*x1 + {b}")));
            }
        }
        let f2 = cts_density_estimate(&family, &grid, 2, 500, 5, 1.0, 2.0).unwrap();
        let f6 = cts_density_estimate(&family, &grid, 6, 500, 5, 1.0, 2.0).unwrap();
        assert!(f6.cts_frequency >= f2.cts_frequency);
        let zero = cts_density_estimate(&[SparsePoly::zero(k, 1)], &grid, 3, 100, 1, 1.0, 1.0).unwrap();
        assert_eq!(zero.cts_frequency, 1.0);
        let vanishing = GridSpec::new(k, 1, 4).unwrap();
        let h = vanishing.axis_equation(0);
        let r = cts_density_estimate(&[h], &vanishing, 5, 100, 1, 1.0, 1.0).unwrap();
        assert_eq!(r.cts_frequency, 0.0);
    }

    #[test]
    fn bound_formulas() {
        let x = FormulaInputs { deg_lci: Some(1.0), grad: Some(2.0), dim: Some(2.0), ..Default::default() };
        assert_eq!(bound_formula(Formula::Cells, &x).unwrap().values["cells"], 9.0);
        assert_eq!(sauer_bound(5, 2), 16.0);
        assert_eq!(sauer_bound(3, 5), 8.0);
        let g = FormulaInputs { deg_lci: Some(1.0), m: Some(3.0), d: Some(1.0), dim: Some(2.0), ..Default::default() };
        assert_eq!(bound_formula(Formula::Growth, &g).unwrap().values["growth"], 49.0);
        let kr = FormulaInputs { s: Some(2.0), grad: Some(2.0), deg_lci: Some(1.0), dim: Some(2.0), ..Default::default() };
        let r = bound_formula(Formula::Krull, &kr).unwrap();
        assert!((r.values["lhs"] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.holds, Some(true));
        let ph = FormulaInputs { big_d: Some(1.0), d1: Some(3.0), k: Some(1.0), ..Default::default() };
        assert_eq!(bound_formula(Formula::Pham, &ph).unwrap().values["pham"], 3.0);
    }
}
