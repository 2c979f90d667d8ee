//! Sparse multivariate polynomials over a [`Field`], brute-force zero
//! counting on finite domains, and dense univariate helpers.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rayon::prelude::*;
use thiserror::Error;

use crate::field::{Field, FieldElement, FieldError};

/// Default cap on the number of points a brute-force enumeration may visit.
pub const DEFAULT_POINT_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("arity mismatch: expected {expected} variables, found {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("enumeration needs {needed} points, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },
    #[error("the full affine space over {0} cannot be enumerated")]
    Unenumerable(Field),
    #[error("polynomial parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

/// Exponent vector, one entry per variable.
pub type Monomial = Vec<u32>;

/// A polynomial in `num_vars` variables, stored as a map from exponent vector
/// to nonzero coefficient. The zero polynomial has no terms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SparsePoly {
    field: Field,
    num_vars: usize,
    terms: BTreeMap<Monomial, FieldElement>,
}

impl SparsePoly {
    pub fn zero(field: Field, num_vars: usize) -> Self {
        SparsePoly { field, num_vars, terms: BTreeMap::new() }
    }

    pub fn constant(field: Field, num_vars: usize, c: FieldElement) -> Self {
        let mut p = Self::zero(field, num_vars);
        p.add_term(vec![0; num_vars], c);
        p
    }

    pub fn one(field: Field, num_vars: usize) -> Self {
        Self::constant(field, num_vars, field.one())
    }

    /// The variable `X_{index+1}` (0-based `index`).
    pub fn var(field: Field, num_vars: usize, index: usize) -> Self {
        assert!(index < num_vars, "variable index {index} out of range for {num_vars} variables");
        let mut e = vec![0; num_vars];
        e[index] = 1;
        let mut p = Self::zero(field, num_vars);
        p.add_term(e, field.one());
        p
    }

    /// Build from `(exponents, coefficient)` pairs; repeated monomials are summed
    /// and zero coefficients dropped.
    pub fn from_terms(
        field: Field,
        num_vars: usize,
        terms: impl IntoIterator<Item = (Monomial, FieldElement)>,
    ) -> Result<Self, PolyError> {
        let mut p = Self::zero(field, num_vars);
        for (e, c) in terms {
            if e.len() != num_vars {
                return Err(PolyError::ArityMismatch { expected: num_vars, found: e.len() });
            }
            if c.field() != field {
                return Err(FieldError::MixedField { left: field, right: c.field() }.into());
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    fn add_term(&mut self, e: Monomial, c: FieldElement) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get() + &c;
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &FieldElement)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, e: &[u32]) -> FieldElement {
        self.terms.get(e).cloned().unwrap_or_else(|| self.field.zero())
    }

    /// Total degree; `-1` for the zero polynomial.
    pub fn total_degree(&self) -> i64 {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&x| x as i64).sum::<i64>())
            .max()
            .unwrap_or(-1)
    }

    fn compatible(&self, rhs: &Self) -> Result<(), PolyError> {
        if self.num_vars != rhs.num_vars {
            return Err(PolyError::ArityMismatch { expected: self.num_vars, found: rhs.num_vars });
        }
        if self.field != rhs.field {
            return Err(FieldError::MixedField { left: self.field, right: rhs.field }.into());
        }
        Ok(())
    }

    pub fn checked_add(&self, rhs: &Self) -> Result<Self, PolyError> {
        self.compatible(rhs)?;
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn checked_sub(&self, rhs: &Self) -> Result<Self, PolyError> {
        self.compatible(rhs)?;
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), -c);
        }
        Ok(out)
    }

    pub fn checked_mul(&self, rhs: &Self) -> Result<Self, PolyError> {
        self.compatible(rhs)?;
        let mut acc: std::collections::HashMap<Monomial, FieldElement> = Default::default();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e: Monomial = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                let c = ca * cb;
                match acc.get_mut(&e) {
                    Some(v) => *v = &*v + &c,
                    None => {
                        acc.insert(e, c);
                    }
                }
            }
        }
        let terms = acc.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        Ok(SparsePoly { field: self.field, num_vars: self.num_vars, terms })
    }

    pub fn scale(&self, c: &FieldElement) -> Self {
        if c.is_zero() {
            return Self::zero(self.field, self.num_vars);
        }
        let terms = self.terms.iter().map(|(e, v)| (e.clone(), v * c)).collect();
        SparsePoly { field: self.field, num_vars: self.num_vars, terms }
    }

    pub fn pow(&self, mut k: u32) -> Self {
        let mut base = self.clone();
        let mut acc = Self::one(self.field, self.num_vars);
        while k > 0 {
            if k & 1 == 1 {
                acc = &acc * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// Substitution homomorphism `f(point)`.
    pub fn eval(&self, point: &[FieldElement]) -> Result<FieldElement, PolyError> {
        if point.len() != self.num_vars {
            return Err(PolyError::ArityMismatch { expected: self.num_vars, found: point.len() });
        }
        if let Some(x) = point.iter().find(|x| x.field() != self.field) {
            return Err(FieldError::MixedField { left: self.field, right: x.field() }.into());
        }
        Ok(self.eval_unchecked(point))
    }

    pub(crate) fn eval_unchecked(&self, point: &[FieldElement]) -> FieldElement {
        let mut acc = self.field.zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (x, &k) in point.iter().zip(e) {
                if k > 0 {
                    t = &t * &x.pow(k as u64);
                }
            }
            acc = &acc + &t;
        }
        acc
    }

    /// Parse the text format `3*x1^2*x2 - 1/2*x3 + 5`. Variables are `x1..xn`.
    pub fn parse(field: Field, num_vars: usize, text: &str) -> Result<Self, PolyError> {
        Parser { field, num_vars, src: text.as_bytes(), pos: 0 }.poly()
    }

    /// Terms in printing order: descending total degree, then descending
    /// exponent vectors.
    fn sorted_terms(&self) -> Vec<(&Monomial, &FieldElement)> {
        let mut v: Vec<_> = self.terms.iter().collect();
        v.sort_by(|(a, _), (b, _)| {
            let da: u64 = a.iter().map(|&x| x as u64).sum();
            let db: u64 = b.iter().map(|&x| x as u64).sum();
            db.cmp(&da).then_with(|| b.cmp(a))
        });
        v
    }
}

impl fmt::Display for SparsePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.sorted_terms().into_iter().enumerate() {
            let txt = c.to_string();
            let (neg, mag) = match txt.strip_prefix('-') {
                Some(m) => (true, m.to_string()),
                None => (false, txt),
            };
            match (i, neg) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let vars: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(j, &k)| if k == 1 { format!("x{}", j + 1) } else { format!("x{}^{}", j + 1, k) })
                .collect();
            if vars.is_empty() {
                write!(f, "{mag}")?;
            } else if mag == "1" {
                write!(f, "{}", vars.join("*"))?;
            } else {
                write!(f, "{mag}*{}", vars.join("*"))?;
            }
        }
        Ok(())
    }
}

macro_rules! poly_binop {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl $trait<&SparsePoly> for &SparsePoly {
            type Output = SparsePoly;
            fn $method(self, rhs: &SparsePoly) -> SparsePoly {
                self.$checked(rhs).unwrap_or_else(|e| panic!("{}", e))
            }
        }
        impl $trait<SparsePoly> for SparsePoly {
            type Output = SparsePoly;
            fn $method(self, rhs: SparsePoly) -> SparsePoly {
                (&self).$method(&rhs)
            }
        }
    };
}

poly_binop!(Add, add, checked_add);
poly_binop!(Sub, sub, checked_sub);
poly_binop!(Mul, mul, checked_mul);

impl Neg for &SparsePoly {
    type Output = SparsePoly;
    fn neg(self) -> SparsePoly {
        let terms = self.terms.iter().map(|(e, c)| (e.clone(), -c)).collect();
        SparsePoly { field: self.field, num_vars: self.num_vars, terms }
    }
}

struct Parser<'a> {
    field: Field,
    num_vars: usize,
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, PolyError> {
        Err(PolyError::Parse { pos: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn digits(&mut self) -> Result<&str, PolyError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected digits");
        }
        Ok(std::str::from_utf8(&self.src[start..self.pos]).unwrap())
    }

    fn poly(mut self) -> Result<SparsePoly, PolyError> {
        let mut out = SparsePoly::zero(self.field, self.num_vars);
        let mut first = true;
        loop {
            let sign = match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    false
                }
                Some(b'-') => {
                    self.pos += 1;
                    true
                }
                None if first => return self.err("empty polynomial"),
                None => break,
                Some(_) if first => false,
                Some(c) => return self.err(format!("unexpected {:?}", c as char)),
            };
            first = false;
            let (e, c) = self.term()?;
            out.add_term(e, if sign { -c } else { c });
        }
        Ok(out)
    }

    fn term(&mut self) -> Result<(Monomial, FieldElement), PolyError> {
        let mut e = vec![0u32; self.num_vars];
        let mut c = self.field.one();
        loop {
            match self.peek() {
                Some(b'x' | b'X') => {
                    self.pos += 1;
                    let idx: usize = self.digits()?.parse().map_err(|_| PolyError::Parse {
                        pos: self.pos,
                        msg: "bad variable index".into(),
                    })?;
                    if idx == 0 || idx > self.num_vars {
                        return self.err(format!("variable x{idx} outside x1..x{}", self.num_vars));
                    }
                    let mut k = 1u32;
                    if self.peek() == Some(b'^') {
                        self.pos += 1;
                        k = self.digits()?.parse().map_err(|_| PolyError::Parse {
                            pos: self.pos,
                            msg: "bad exponent".into(),
                        })?;
                    }
                    e[idx - 1] += k;
                }
                Some(b'0'..=b'9') => {
                    let mut txt = self.digits()?.to_string();
                    if self.peek() == Some(b'/') {
                        self.pos += 1;
                        txt.push('/');
                        txt.push_str(self.digits()?);
                    }
                    let v = self.field.parse(&txt)?;
                    c = &c * &v;
                }
                _ => return self.err("expected a number or a variable"),
            }
            if self.peek() == Some(b'*') {
                self.pos += 1;
            } else {
                return Ok((e, c));
            }
        }
    }
}

/// An axis-aligned grid `S^n` where `S` holds the first `side` canonical field
/// elements. It is the zero set of `h_i = prod_{a in S} (X_i - a)`, each of
/// degree `side`, so its degree is `side^n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    field: Field,
    num_vars: usize,
    side: u64,
}

impl GridSpec {
    pub fn new(field: Field, num_vars: usize, side: u64) -> Result<Self, PolyError> {
        if side == 0 {
            return Err(PolyError::Parse { pos: 0, msg: "grid side must be positive".into() });
        }
        if let Some(p) = field.order() {
            if side > p {
                return Err(PolyError::BudgetExceeded { needed: side as u128, budget: p });
            }
        }
        Ok(GridSpec { field, num_vars, side })
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn side(&self) -> u64 {
        self.side
    }

    pub fn axis(&self) -> Vec<FieldElement> {
        (0..self.side).map(|k| self.field.element_at(k)).collect()
    }

    pub fn cardinality(&self) -> u128 {
        (self.side as u128).pow(self.num_vars as u32)
    }

    /// The defining equation `h_i` of the grid along axis `i`.
    pub fn axis_equation(&self, i: usize) -> SparsePoly {
        let x = SparsePoly::var(self.field, self.num_vars, i);
        self.axis().iter().fold(SparsePoly::one(self.field, self.num_vars), |acc, a| {
            let c = SparsePoly::constant(self.field, self.num_vars, a.clone());
            &acc * &(&x - &c)
        })
    }
}

/// Domain for brute-force enumeration.
#[derive(Debug, Clone)]
pub enum Domain {
    /// All of `F_p^n`.
    Full,
    Grid(GridSpec),
}

/// Enumerate the lexicographic product `axis^n`, calling `visit` on each point.
/// Returns early when `visit` returns `false`.
pub fn for_each_point(axis: &[FieldElement], n: usize, mut visit: impl FnMut(&[FieldElement]) -> bool) {
    if axis.is_empty() && n > 0 {
        return;
    }
    let mut idx = vec![0usize; n];
    let mut point: Vec<FieldElement> = (0..n).map(|_| axis[0].clone()).collect();
    loop {
        if !visit(&point) {
            return;
        }
        let mut k = n;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axis.len() {
                point[k] = axis[idx[k]].clone();
                break;
            }
            idx[k] = 0;
            point[k] = axis[0].clone();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZeroReport {
    pub is_identically_zero_on_domain: bool,
    pub zero_count: u64,
    pub domain_size: u64,
    /// First point (lexicographically) where the polynomial is nonzero.
    pub witness: Option<Vec<FieldElement>>,
    /// For grid domains with `0 <= total_degree < side`: the bound
    /// `total_degree * side^(n-1)` on the zero count and whether it held.
    pub grid_bound: Option<(u64, bool)>,
}

/// Count the zeros of `f` on `domain` by exhaustive evaluation.
pub fn zero_oracle(f: &SparsePoly, domain: &Domain, budget: u64) -> Result<ZeroReport, PolyError> {
    let n = f.num_vars();
    let axis = match domain {
        Domain::Full => {
            let p = f.field().order().ok_or(PolyError::Unenumerable(f.field()))?;
            (0..p).map(|k| f.field().element_at(k)).collect::<Vec<_>>()
        }
        Domain::Grid(g) => {
            if g.num_vars() != n {
                return Err(PolyError::ArityMismatch { expected: n, found: g.num_vars() });
            }
            if g.field() != f.field() {
                return Err(FieldError::MixedField { left: f.field(), right: g.field() }.into());
            }
            g.axis()
        }
    };
    let size = (axis.len() as u128).pow(n as u32);
    if size > budget as u128 {
        return Err(PolyError::BudgetExceeded { needed: size, budget });
    }

    // Partition on the first coordinate; chunks stay in lexicographic order.
    let (zero_count, witness) = if n == 0 {
        let v = f.eval_unchecked(&[]);
        if v.is_zero() { (1, None) } else { (0, Some(vec![])) }
    } else {
        let chunks: Vec<(u64, Option<Vec<FieldElement>>)> = axis
            .par_iter()
            .map(|x0| {
                let mut zeros = 0u64;
                let mut wit = None;
                for_each_point(&axis, n - 1, |rest| {
                    let mut pt = Vec::with_capacity(n);
                    pt.push(x0.clone());
                    pt.extend_from_slice(rest);
                    if f.eval_unchecked(&pt).is_zero() {
                        zeros += 1;
                    } else if wit.is_none() {
                        wit = Some(pt);
                    }
                    true
                });
                (zeros, wit)
            })
            .collect();
        let zeros = chunks.iter().map(|c| c.0).sum();
        let wit = chunks.into_iter().find_map(|c| c.1);
        (zeros, wit)
    };

    let grid_bound = match domain {
        Domain::Grid(g) => {
            let deg = f.total_degree();
            (deg >= 0 && (deg as u64) < g.side()).then(|| {
                let bound = deg as u64 * g.side().pow(n.saturating_sub(1) as u32);
                (bound, zero_count <= bound)
            })
        }
        Domain::Full => None,
    };
    Ok(ZeroReport {
        is_identically_zero_on_domain: witness.is_none(),
        zero_count,
        domain_size: size as u64,
        witness,
        grid_bound,
    })
}

/// Dense univariate polynomial, coefficients low to high, trailing zeros
/// trimmed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniPoly {
    field: Field,
    coeffs: Vec<FieldElement>,
}

impl UniPoly {
    pub fn new(field: Field, mut coeffs: Vec<FieldElement>) -> Result<Self, PolyError> {
        if let Some(c) = coeffs.iter().find(|c| c.field() != field) {
            return Err(FieldError::MixedField { left: field, right: c.field() }.into());
        }
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Ok(UniPoly { field, coeffs })
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn coeffs(&self) -> &[FieldElement] {
        &self.coeffs
    }

    /// Coefficient of `t^k`, zero past the degree.
    pub fn coeff(&self, k: usize) -> FieldElement {
        self.coeffs.get(k).cloned().unwrap_or_else(|| self.field.zero())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, `-1` for zero.
    pub fn degree(&self) -> i64 {
        self.coeffs.len() as i64 - 1
    }

    pub fn eval(&self, t: &FieldElement) -> FieldElement {
        self.coeffs.iter().rev().fold(self.field.zero(), |acc, c| &(&acc * t) + c)
    }

    fn rem(&self, divisor: &UniPoly) -> UniPoly {
        let mut r = self.coeffs.clone();
        let dl = divisor.coeffs.len();
        let lead_inv = divisor.coeffs[dl - 1].inv().expect("trimmed divisor has nonzero lead");
        while r.len() >= dl {
            let q = &r[r.len() - 1] * &lead_inv;
            let shift = r.len() - dl;
            for (i, dc) in divisor.coeffs.iter().enumerate() {
                r[shift + i] = &r[shift + i] - &(&q * dc);
            }
            while r.last().is_some_and(|c| c.is_zero()) {
                r.pop();
            }
        }
        UniPoly { field: self.field, coeffs: r }
    }

    /// Monic greatest common divisor by the Euclidean algorithm.
    pub fn gcd(&self, other: &UniPoly) -> UniPoly {
        let (mut a, mut b) = (self.clone(), other.clone());
        while !b.is_zero() {
            let r = a.rem(&b);
            a = b;
            b = r;
        }
        if let Some(lead) = a.coeffs.last().cloned() {
            let inv = lead.inv().expect("nonzero lead");
            a.coeffs.iter_mut().for_each(|c| *c = &*c * &inv);
        }
        a
    }
}
