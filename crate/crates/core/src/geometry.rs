//! Brute-force checks of the combinatorial bounds over finite prime fields:
//! cell counts of a family of constructible sets, growth functions and
//! VC-dimension of distinguished-open-set classifiers, and Pham-system
//! intersection counts.
//!
//! Degrees, dimensions and generating degrees are declared inputs carrying a
//! free-text provenance. All counts are of `F_p`-rational points, which never
//! exceed the corresponding counts over the algebraic closure, so every
//! `count <= bound` check here is one-sided safe.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cts::{krull_lhs, sauer_bound};
use crate::field::{Field, FieldElement, FieldError};
use crate::polynomial::{for_each_point, PolyError, SparsePoly, DEFAULT_POINT_BUDGET};

pub const SEMANTICS: &str = "F_p-rational points; nonempty counts under-approximate the algebraic closure";

/// Cap on truth-table evaluations in the Boolean algebra check.
pub const ALGEBRA_BUDGET: u64 = 100_000_000;

/// Default cap on `sum_j C(|pool|, j) 2^j |family|` for [`vcdim_search`].
pub const DEFAULT_VC_BUDGET: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("enumeration needs {needed} steps, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },
    #[error("matrix has rank {rank}, expected {k}")]
    DegenerateSystem { rank: usize, k: usize },
    #[error("invalid Pham system: {0}")]
    InvalidSystem(String),
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Constructible set built from equations and inequations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SetExpr {
    All,
    Empty,
    /// `V(f)`
    Zero(SparsePoly),
    /// `D(f)`
    NonZero(SparsePoly),
    And(Vec<SetExpr>),
    Or(Vec<SetExpr>),
    Not(Box<SetExpr>),
}

impl SetExpr {
    pub fn contains(&self, x: &[FieldElement]) -> bool {
        match self {
            SetExpr::All => true,
            SetExpr::Empty => false,
            SetExpr::Zero(f) => f.eval_unchecked(x).is_zero(),
            SetExpr::NonZero(f) => !f.eval_unchecked(x).is_zero(),
            SetExpr::And(v) => v.iter().all(|e| e.contains(x)),
            SetExpr::Or(v) => v.iter().any(|e| e.contains(x)),
            SetExpr::Not(e) => !e.contains(x),
        }
    }

    fn check(&self, field: Field, n: usize) -> Result<(), GeometryError> {
        match self {
            SetExpr::All | SetExpr::Empty => Ok(()),
            SetExpr::Zero(f) | SetExpr::NonZero(f) => {
                if f.field() != field || f.num_vars() != n {
                    Err(GeometryError::Mismatch(format!("{f} is not over {field} in {n} variables")))
                } else {
                    Ok(())
                }
            }
            SetExpr::And(v) | SetExpr::Or(v) => v.iter().try_for_each(|e| e.check(field, n)),
            SetExpr::Not(e) => e.check(field, n),
        }
    }
}

/// On-disk form of [`SetExpr`]: `"all"`, `"empty"`, `{"zero": "x1 - 1"}`,
/// `{"nonzero": ...}`, `{"and": [...]}`, `{"or": [...]}`, `{"not": ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetFile {
    All,
    Empty,
    Zero(String),
    NonZero(String),
    And(Vec<SetFile>),
    Or(Vec<SetFile>),
    Not(Box<SetFile>),
}

impl SetFile {
    pub fn into_expr(self, field: Field, n: usize) -> Result<SetExpr, GeometryError> {
        Ok(match self {
            SetFile::All => SetExpr::All,
            SetFile::Empty => SetExpr::Empty,
            SetFile::Zero(s) => SetExpr::Zero(SparsePoly::parse(field, n, &s)?),
            SetFile::NonZero(s) => SetExpr::NonZero(SparsePoly::parse(field, n, &s)?),
            SetFile::And(v) => SetExpr::And(v.into_iter().map(|e| e.into_expr(field, n)).collect::<Result<_, _>>()?),
            SetFile::Or(v) => SetExpr::Or(v.into_iter().map(|e| e.into_expr(field, n)).collect::<Result<_, _>>()?),
            SetFile::Not(e) => SetExpr::Not(Box::new(e.into_expr(field, n)?)),
        })
    }
}

/// A constructible subset of `A^n` with declared dimension and lci-degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstructibleDesc {
    field: Field,
    n: usize,
    set: SetExpr,
    pub dim: u32,
    pub deg_lci: u64,
    pub provenance: String,
}

impl ConstructibleDesc {
    pub fn new(field: Field, n: usize, set: SetExpr, dim: u32, deg_lci: u64, provenance: impl Into<String>) -> Result<Self, GeometryError> {
        set.check(field, n)?;
        if dim as usize > n {
            return Err(GeometryError::Mismatch(format!("declared dimension {dim} exceeds ambient {n}")));
        }
        Ok(ConstructibleDesc { field, n, set, dim, deg_lci, provenance: provenance.into() })
    }

    /// `A^n` itself: dimension `n`, degree 1.
    pub fn affine_space(field: Field, n: usize) -> Self {
        ConstructibleDesc { field, n, set: SetExpr::All, dim: n as u32, deg_lci: 1, provenance: "affine space".into() }
    }

    /// `V(f)` for a square-free `f`; degree `deg f`, dimension `n - 1`.
    pub fn hypersurface(f: SparsePoly, provenance: impl Into<String>) -> Result<Self, GeometryError> {
        let (field, n) = (f.field(), f.num_vars());
        let deg = f.total_degree();
        if deg < 1 || n == 0 {
            return Err(GeometryError::Mismatch(format!("{f} does not define a hypersurface")));
        }
        Self::new(field, n, SetExpr::Zero(f), n as u32 - 1, deg as u64, provenance)
    }

    /// The image of `V(xz + y^2 - 1)` under `(x, y, z) -> (x, y)`:
    /// `D(x)` together with the points `(0, 1)` and `(0, -1)`. Dimension 2,
    /// lci-degree 3.
    pub fn la_croix_de_berny(field: Field) -> Self {
        let x = SparsePoly::var(field, 2, 0);
        let y2m1 = SparsePoly::parse(field, 2, "x2^2 - 1").expect("static polynomial");
        let set = SetExpr::Or(vec![SetExpr::NonZero(x.clone()), SetExpr::And(vec![SetExpr::Zero(x), SetExpr::Zero(y2m1)])]);
        ConstructibleDesc {
            field,
            n: 2,
            set,
            dim: 2,
            deg_lci: 3,
            provenance: "projection of xz + y^2 - 1 = 0; open plane piece of degree 1 plus two points".into(),
        }
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn ambient(&self) -> usize {
        self.n
    }

    pub fn set(&self) -> &SetExpr {
        &self.set
    }

    pub fn contains(&self, x: &[FieldElement]) -> bool {
        self.set.contains(x)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstructibleFile {
    pub set: SetFile,
    pub dim: u32,
    pub deg_lci: u64,
    #[serde(default)]
    pub provenance: String,
}

impl ConstructibleFile {
    pub fn into_desc(self, field: Field, n: usize) -> Result<ConstructibleDesc, GeometryError> {
        ConstructibleDesc::new(field, n, self.set.into_expr(field, n)?, self.dim, self.deg_lci, self.provenance)
    }
}

fn full_axis(field: Field) -> Result<Vec<FieldElement>, GeometryError> {
    let p = field.order().ok_or(PolyError::Unenumerable(field))?;
    Ok((0..p).map(|k| field.element_at(k)).collect())
}

fn check_budget(needed: u128, budget: u64) -> Result<(), GeometryError> {
    if needed > budget as u128 {
        Err(GeometryError::BudgetExceeded { needed, budget })
    } else {
        Ok(())
    }
}

/// Fold over `F_p^n` in lexicographic order, split across threads on the
/// first coordinate. Partial results are merged left to right.
fn scan_points<A: Send>(
    field: Field,
    n: usize,
    budget: u64,
    init: impl Fn() -> A + Sync,
    visit: impl Fn(&mut A, &[FieldElement]) + Sync,
    merge: impl Fn(A, A) -> A,
) -> Result<A, GeometryError> {
    let axis = full_axis(field)?;
    check_budget((axis.len() as u128).pow(n as u32), budget)?;
    if n == 0 {
        let mut a = init();
        visit(&mut a, &[]);
        return Ok(a);
    }
    let parts: Vec<A> = axis
        .par_iter()
        .map(|x0| {
            let mut acc = init();
            let mut pt = Vec::with_capacity(n);
            for_each_point(&axis, n - 1, |rest| {
                pt.clear();
                pt.push(x0.clone());
                pt.extend_from_slice(rest);
                visit(&mut acc, &pt);
                true
            });
            acc
        })
        .collect();
    Ok(parts.into_iter().reduce(merge).unwrap_or_else(init))
}

fn pow_u128(base: u128, exp: u32) -> u128 {
    base.checked_pow(exp).unwrap_or(u128::MAX)
}

/// `deg_lci (1 + grad)^dim`, saturating.
pub fn cell_bound(deg_lci: u64, grad: u64, dim: u32) -> u128 {
    (deg_lci as u128).saturating_mul(pow_u128(1 + grad as u128, dim))
}

pub struct CellExperiment {
    pub c: ConstructibleDesc,
    pub h: Vec<SetExpr>,
    /// Sum of degrees of a closed family generating every member of `h`.
    pub grad_upper: u64,
}

impl CellExperiment {
    pub fn new(c: ConstructibleDesc, h: Vec<SetExpr>, grad_upper: u64) -> Result<Self, GeometryError> {
        for e in &h {
            e.check(c.field, c.n)?;
        }
        Ok(CellExperiment { c, h, grad_upper })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFile {
    pub field: Field,
    pub n: usize,
    pub c: ConstructibleFile,
    pub h: Vec<SetFile>,
    pub grad_upper: u64,
    #[serde(default)]
    pub budget: Option<u64>,
}

impl CellFile {
    pub fn into_experiment(self) -> Result<CellExperiment, GeometryError> {
        let c = self.c.into_desc(self.field, self.n)?;
        let h = self.h.into_iter().map(|e| e.into_expr(self.field, self.n)).collect::<Result<_, _>>()?;
        CellExperiment::new(c, h, self.grad_upper)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CellInfo {
    pub size: u64,
    pub first_point: Vec<FieldElement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AlgebraCheck {
    /// Distinct subsets of `C` obtained from all Boolean combinations of `H`.
    pub size: u64,
    pub log2_bound: u128,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CellReport {
    pub field: Field,
    pub n: usize,
    pub points_in_c: u64,
    pub nonempty_cell_count: u64,
    /// Keyed by sign vector: character `i` is `1` when the cell lies in `H_i`.
    pub cell_sizes: BTreeMap<String, CellInfo>,
    pub partition_ok: bool,
    pub bound: u128,
    pub within_bound: bool,
    /// Boolean algebra size check, run when `|H| <= 4`.
    pub algebra: Option<AlgebraCheck>,
    pub declared_dim: u32,
    pub declared_deg_lci: u64,
    pub grad_upper: u64,
    pub provenance: String,
    pub semantics: &'static str,
}

fn sign_key(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// Assign every point of `C` its sign vector with respect to `H` and count
/// the distinct vectors.
pub fn cells_enumerate(exp: &CellExperiment, budget: u64) -> Result<CellReport, GeometryError> {
    let (field, n) = (exp.c.field, exp.c.n);
    let cells: BTreeMap<String, CellInfo> = scan_points(
        field,
        n,
        budget,
        BTreeMap::new,
        |acc: &mut BTreeMap<String, CellInfo>, x| {
            if !exp.c.contains(x) {
                return;
            }
            let bits: Vec<bool> = exp.h.iter().map(|e| e.contains(x)).collect();
            acc.entry(sign_key(&bits)).or_insert_with(|| CellInfo { size: 0, first_point: x.to_vec() }).size += 1;
        },
        |mut a, b| {
            for (k, v) in b {
                a.entry(k).and_modify(|c| c.size += v.size).or_insert(v);
            }
            a
        },
    )?;

    // Second pass: each cell as the intersection of members and complements
    // must contain exactly the points it was assigned, and every point of C
    // must lie in exactly one cell.
    let keys: Vec<Vec<bool>> = cells.keys().map(|k| k.chars().map(|c| c == '1').collect()).collect();
    let (points_in_c, per_cell, stray) = scan_points(
        field,
        n,
        budget,
        || (0u64, vec![0u64; keys.len()], 0u64),
        |acc, x| {
            let in_c = exp.c.contains(x);
            let hits: Vec<usize> = keys
                .iter()
                .enumerate()
                .filter(|(_, bits)| bits.iter().zip(&exp.h).all(|(&b, e)| e.contains(x) == b))
                .map(|(i, _)| i)
                .collect();
            if in_c {
                acc.0 += 1;
                if hits.len() == 1 {
                    acc.1[hits[0]] += 1;
                } else {
                    acc.2 += 1;
                }
            }
        },
        |mut a, b| {
            a.0 += b.0;
            a.1.iter_mut().zip(b.1).for_each(|(x, y)| *x += y);
            a.2 += b.2;
            a
        },
    )?;
    let sizes_match = cells.values().zip(&per_cell).all(|(c, &m)| c.size == m);
    let total: u64 = cells.values().map(|c| c.size).sum();
    let partition_ok = stray == 0 && sizes_match && total == points_in_c;

    let nonempty = cells.len() as u64;
    let bound = cell_bound(exp.c.deg_lci, exp.grad_upper, exp.c.dim);
    let algebra = if exp.h.len() <= 4 {
        let size = boolean_algebra_size(exp, budget)?;
        Some(AlgebraCheck { size, log2_bound: bound, ok: (size.ilog2() as u128) <= bound })
    } else {
        None
    };
    Ok(CellReport {
        field,
        n,
        points_in_c,
        nonempty_cell_count: nonempty,
        cell_sizes: cells,
        partition_ok,
        bound,
        within_bound: nonempty as u128 <= bound,
        algebra,
        declared_dim: exp.c.dim,
        declared_deg_lci: exp.c.deg_lci,
        grad_upper: exp.grad_upper,
        provenance: exp.c.provenance.clone(),
        semantics: SEMANTICS,
    })
}

/// Count distinct subsets of `C` of the form `{x in C : phi(h_1(x), ..)}` over
/// all `2^(2^|H|)` Boolean functions `phi`.
fn boolean_algebra_size(exp: &CellExperiment, budget: u64) -> Result<u64, GeometryError> {
    let k = exp.h.len();
    let points: Vec<usize> = scan_points(
        exp.c.field,
        exp.c.n,
        budget,
        Vec::new,
        |acc: &mut Vec<usize>, x| {
            if exp.c.contains(x) {
                acc.push(exp.h.iter().enumerate().map(|(i, e)| (e.contains(x) as usize) << i).sum());
            }
        },
        |mut a, b| {
            a.extend(b);
            a
        },
    )?;
    let tables = 1u64 << (1u32 << k);
    check_budget(tables as u128 * points.len().max(1) as u128, ALGEBRA_BUDGET)?;
    let words = points.len().div_ceil(64).max(1);
    let distinct: HashSet<Vec<u64>> = (0..tables)
        .into_par_iter()
        .map(|phi| {
            let mut bits = vec![0u64; words];
            for (j, &sig) in points.iter().enumerate() {
                if phi >> sig & 1 == 1 {
                    bits[j / 64] |= 1 << (j % 64);
                }
            }
            bits
        })
        .collect();
    Ok(distinct.len() as u64)
}

/// A parameterized family of classifiers `x -> [f_a(x) != 0]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifierFamily {
    field: Field,
    n: usize,
    members: Vec<SparsePoly>,
    pub degree: u32,
    pub omega_dim: u32,
    pub omega_deg_lci: u64,
    pub provenance: String,
}

fn monomials(n: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; n];
    fn rec(i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for e in (0..=left).rev() {
            cur[i] = e;
            rec(i + 1, left - e, cur, out);
        }
        cur[i] = 0;
    }
    rec(0, degree, &mut cur, &mut out);
    out
}

impl ClassifierFamily {
    /// Every polynomial of total degree at most `degree` whose coefficients
    /// are among the first `side` field elements. The parameter set is
    /// declared as affine space of the coefficient dimension, degree 1.
    pub fn coefficient_box(field: Field, n: usize, degree: u32, side: u64, budget: u64) -> Result<Self, GeometryError> {
        let mons = monomials(n, degree);
        let count = pow_u128(side as u128, mons.len() as u32);
        check_budget(count, budget)?;
        let axis: Vec<FieldElement> = (0..side).map(|k| field.element_at(k)).collect();
        let mut members = Vec::with_capacity(count as usize);
        for_each_point(&axis, mons.len(), |coeffs| {
            let terms = mons.iter().cloned().zip(coeffs.iter().cloned()).collect::<Vec<_>>();
            members.push(SparsePoly::from_terms(field, n, terms).expect("monomials match arity"));
            true
        });
        Ok(ClassifierFamily {
            field,
            n,
            members,
            degree,
            omega_dim: mons.len() as u32,
            omega_deg_lci: 1,
            provenance: format!("coefficient space of degree <= {degree} polynomials in {n} variables"),
        })
    }

    pub fn enumerated(
        members: Vec<SparsePoly>,
        omega_dim: u32,
        omega_deg_lci: u64,
        provenance: impl Into<String>,
    ) -> Result<Self, GeometryError> {
        let first = members.first().ok_or_else(|| GeometryError::Mismatch("empty family".into()))?;
        let (field, n) = (first.field(), first.num_vars());
        if let Some(f) = members.iter().find(|f| f.field() != field || f.num_vars() != n) {
            return Err(GeometryError::Mismatch(format!("member {f} differs in field or arity")));
        }
        let degree = members.iter().map(|f| f.total_degree().max(0) as u32).max().unwrap_or(0);
        Ok(ClassifierFamily { field, n, members, degree, omega_dim, omega_deg_lci, provenance: provenance.into() })
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn members(&self) -> &[SparsePoly] {
        &self.members
    }

    pub fn classify(&self, member: usize, x: &[FieldElement]) -> bool {
        !self.members[member].eval_unchecked(x).is_zero()
    }

    fn check_points(&self, points: &[Vec<FieldElement>]) -> Result<(), GeometryError> {
        for x in points {
            if x.len() != self.n || x.iter().any(|c| c.field() != self.field) {
                return Err(GeometryError::Mismatch(format!("point of length {} is not in {}^{}", x.len(), self.field, self.n)));
            }
        }
        Ok(())
    }

    /// Bit `i` of entry `j` is the label of `points[i]` under member `j`.
    fn masks(&self, points: &[Vec<FieldElement>]) -> Vec<u64> {
        assert!(points.len() <= 64);
        self.members
            .par_iter()
            .map(|f| points.iter().enumerate().fold(0u64, |m, (i, x)| m | ((!f.eval_unchecked(x).is_zero() as u64) << i)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilySource {
    Box { degree: u32, side: u64 },
    Members { members: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyFile {
    pub field: Field,
    pub n: usize,
    pub family: FamilySource,
    /// Declared for `members`; defaults to the coefficient count for `box`.
    #[serde(default)]
    pub dim: Option<u32>,
    #[serde(default)]
    pub deg_lci: Option<u64>,
    #[serde(default)]
    pub provenance: Option<String>,
}

impl FamilyFile {
    pub fn into_family(self, budget: u64) -> Result<ClassifierFamily, GeometryError> {
        let mut fam = match self.family {
            FamilySource::Box { degree, side } => ClassifierFamily::coefficient_box(self.field, self.n, degree, side, budget)?,
            FamilySource::Members { members } => {
                let polys = members.iter().map(|s| SparsePoly::parse(self.field, self.n, s)).collect::<Result<Vec<_>, _>>()?;
                let dim = self.dim.ok_or_else(|| GeometryError::Mismatch("enumerated family needs a declared dim".into()))?;
                let deg = self.deg_lci.ok_or_else(|| GeometryError::Mismatch("enumerated family needs a declared deg_lci".into()))?;
                ClassifierFamily::enumerated(polys, dim, deg, "")?
            }
        };
        if let Some(d) = self.dim {
            fam.omega_dim = d;
        }
        if let Some(d) = self.deg_lci {
            fam.omega_deg_lci = d;
        }
        if let Some(p) = self.provenance {
            fam.provenance = p;
        }
        Ok(fam)
    }
}

pub const MAX_GROWTH_POINTS: usize = 24;

/// `deg_lci(Omega) (1 + m(d+1))^dim(Omega)`, saturating.
pub fn growth_bound(deg_lci: u64, m: usize, d: u32, dim: u32) -> u128 {
    (deg_lci as u128).saturating_mul(pow_u128(1 + m as u128 * (d as u128 + 1), dim))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GrowthReport {
    pub m: usize,
    pub count: u64,
    pub bound: u128,
    pub within_bound: bool,
    pub semantics: &'static str,
}

/// Number of distinct label patterns the family induces on `points`.
pub fn growth_measure(family: &ClassifierFamily, points: &[Vec<FieldElement>]) -> Result<GrowthReport, GeometryError> {
    check_budget(points.len() as u128, MAX_GROWTH_POINTS as u64)?;
    family.check_points(points)?;
    let count = family.masks(points).into_iter().collect::<HashSet<u64>>().len() as u64;
    let bound = growth_bound(family.omega_deg_lci, points.len(), family.degree, family.omega_dim);
    Ok(GrowthReport { m: points.len(), count, bound, within_bound: count as u128 <= bound, semantics: SEMANTICS })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Realizer {
    /// Character `i` is the label of witness point `i`.
    pub pattern: String,
    pub member: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KrullCheck {
    pub s: u64,
    pub k: f64,
    pub lhs: f64,
    pub dim: u32,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SauerRow {
    pub m: usize,
    pub samples: usize,
    pub max_growth: u64,
    pub bound: u64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SauerCheck {
    pub vc_upper: u64,
    pub rows: Vec<SauerRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VcReport {
    pub pool_size: usize,
    pub s_max: usize,
    pub vc_lower_bound: u64,
    pub shattered_witness: Vec<Vec<FieldElement>>,
    pub realizers: Vec<Realizer>,
    /// All `2^s` patterns on the witness re-realized by direct evaluation.
    pub reverified: bool,
    pub sauer: Option<SauerCheck>,
    pub sauer_ok: Option<bool>,
    pub krull: KrullCheck,
    pub krull_ok: bool,
}

/// Sauer check parameters: point sets of each size in `sizes` are drawn
/// uniformly without replacement from `F_p^n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SauerOptions {
    pub vc_upper: u64,
    pub sizes: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
}

fn combinations(u: usize, j: usize) -> Vec<u64> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..j).collect();
    if j > u {
        return out;
    }
    loop {
        out.push(idx.iter().fold(0u64, |m, &i| m | 1 << i));
        let mut i = j;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] < u - j + i {
                idx[i] += 1;
                for t in i + 1..j {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
    }
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

fn decode_point(field: Field, n: usize, p: u64, mut idx: u64) -> Vec<FieldElement> {
    let mut x = vec![field.zero(); n];
    for c in x.iter_mut().rev() {
        *c = field.element_at(idx % p);
        idx /= p;
    }
    x
}

/// Largest `j <= s_max` such that some `j`-subset of `pool` is shattered,
/// scanning subsets in lexicographic index order; the first shattered
/// subset of the largest size is the witness.
pub fn vcdim_search(
    family: &ClassifierFamily,
    pool: &[Vec<FieldElement>],
    s_max: usize,
    sauer: Option<&SauerOptions>,
    budget: u64,
) -> Result<VcReport, GeometryError> {
    family.check_points(pool)?;
    check_budget(pool.len() as u128, 64)?;
    let work: u128 = (0..=s_max.min(pool.len()))
        .map(|j| binomial(pool.len() as u64, j as u64).saturating_mul(1u128 << j.min(100)).saturating_mul(family.members.len() as u128))
        .fold(0u128, |a, b| a.saturating_add(b));
    check_budget(work, budget)?;

    let masks: Vec<u64> = family.masks(pool).into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    let mut best = 0u64;
    for j in 0..=s_max.min(pool.len()) {
        let combos = combinations(pool.len(), j);
        let hit = combos.par_iter().position_first(|&sub| {
            let seen: HashSet<u64> = masks.iter().map(|m| m & sub).collect();
            seen.len() == 1usize << j
        });
        match hit {
            Some(i) => best = combos[i],
            None => break,
        }
    }
    let witness: Vec<Vec<FieldElement>> = (0..pool.len()).filter(|i| best >> i & 1 == 1).map(|i| pool[i].clone()).collect();
    let s = witness.len();

    let realizers: Vec<Option<Realizer>> = (0..1u64 << s)
        .into_par_iter()
        .map(|pat| {
            let want = |i: usize| pat >> i & 1 == 1;
            family.members.iter().enumerate().find(|(idx, _)| (0..s).all(|i| family.classify(*idx, &witness[i]) == want(i))).map(
                |(_, f)| Realizer { pattern: (0..s).map(|i| if want(i) { '1' } else { '0' }).collect(), member: f.to_string() },
            )
        })
        .collect();
    let reverified = realizers.iter().all(Option::is_some);
    let realizers: Vec<Realizer> = realizers.into_iter().flatten().collect();

    let sauer = match sauer {
        Some(opts) => Some(sauer_check(family, opts)?),
        None => None,
    };
    let sauer_ok = sauer.as_ref().map(|c| c.rows.iter().all(|r| r.ok));

    let k = 1.0 + (family.degree as f64 + 1.0).log2();
    let lhs = krull_lhs(s as f64, k, family.omega_deg_lci as f64);
    let krull_ok = lhs <= family.omega_dim as f64;
    Ok(VcReport {
        pool_size: pool.len(),
        s_max,
        vc_lower_bound: s as u64,
        shattered_witness: witness,
        realizers,
        reverified,
        sauer,
        sauer_ok,
        krull: KrullCheck { s: s as u64, k, lhs, dim: family.omega_dim, ok: krull_ok },
        krull_ok,
    })
}

/// Measure the growth on random point sets and compare with the
/// Sauer-Shelah-Perles sum for the declared VC upper bound.
pub fn sauer_check(family: &ClassifierFamily, opts: &SauerOptions) -> Result<SauerCheck, GeometryError> {
    let p = family.field.order().ok_or(PolyError::Unenumerable(family.field))?;
    let space = (p as u128).pow(family.n as u32);
    let mut rows = Vec::new();
    for (row, &m) in opts.sizes.iter().enumerate() {
        if m as u128 > space || m > MAX_GROWTH_POINTS {
            return Err(GeometryError::Mismatch(format!("cannot draw {m} distinct points from {space}")));
        }
        let mut max_growth = 0;
        for t in 0..opts.samples {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(((row as u64) << 32) | t as u64);
            let idx = rand::seq::index::sample(&mut rng, space as usize, m);
            let pts: Vec<Vec<FieldElement>> = idx.iter().map(|i| decode_point(family.field, family.n, p, i as u64)).collect();
            max_growth = max_growth.max(growth_measure(family, &pts)?.count);
        }
        let bound = sauer_bound(m as u64, opts.vc_upper) as u64;
        rows.push(SauerRow { m, samples: opts.samples, max_growth, bound, ok: max_growth <= bound });
    }
    Ok(SauerCheck { vc_upper: opts.vc_upper, rows })
}

/// Rank over the field by Gaussian elimination.
pub fn rank(rows: &[Vec<FieldElement>]) -> Result<usize, GeometryError> {
    let mut a: Vec<Vec<FieldElement>> = rows.to_vec();
    let cols = a.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(piv) = (r..a.len()).find(|&i| !a[i][c].is_zero()) else { continue };
        a.swap(r, piv);
        let inv = a[r][c].inv()?;
        for i in 0..a.len() {
            if i != r && !a[i][c].is_zero() {
                let factor = a[i][c].checked_mul(&inv)?;
                for j in c..cols {
                    let sub = factor.checked_mul(&a[r][j])?;
                    a[i][j] = a[i][j].checked_sub(&sub)?;
                }
            }
        }
        r += 1;
    }
    Ok(r)
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// `f_i = sum_j a_ij X_j^{d_j}` for a `k x m` matrix, replicated over
/// `replication` disjoint blocks of `m` variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhamSystem {
    field: Field,
    matrix: Vec<Vec<FieldElement>>,
    degrees: Vec<u32>,
    replication: usize,
}

impl PhamSystem {
    pub fn new(field: Field, matrix: Vec<Vec<FieldElement>>, degrees: Vec<u32>, replication: usize) -> Result<Self, GeometryError> {
        let k = matrix.len();
        let m = degrees.len();
        if k == 0 || replication == 0 {
            return Err(GeometryError::InvalidSystem("need at least one row and one block".into()));
        }
        if let Some(row) = matrix.iter().find(|r| r.len() != m) {
            return Err(GeometryError::InvalidSystem(format!("row of length {} for {m} degrees", row.len())));
        }
        if matrix.iter().flatten().any(|a| a.field() != field) {
            return Err(GeometryError::Mismatch(format!("matrix entries not in {field}")));
        }
        let r = rank(&matrix)?;
        if r < k {
            return Err(GeometryError::DegenerateSystem { rank: r, k });
        }
        if m <= k {
            return Err(GeometryError::InvalidSystem(format!("need more variables than equations, got m = {m}, k = {k}")));
        }
        if degrees.windows(2).any(|w| w[0] <= w[1]) {
            return Err(GeometryError::InvalidSystem(format!("degrees {degrees:?} are not strictly decreasing")));
        }
        for i in 0..m {
            for j in i + 1..m {
                if gcd(degrees[i], degrees[j]) != 1 {
                    return Err(GeometryError::InvalidSystem(format!("degrees {} and {} share a factor", degrees[i], degrees[j])));
                }
            }
        }
        Ok(PhamSystem { field, matrix, degrees, replication })
    }

    pub fn k(&self) -> usize {
        self.matrix.len()
    }

    pub fn ambient(&self) -> usize {
        self.degrees.len() * self.replication
    }

    pub fn max_degree(&self) -> u32 {
        self.degrees[0]
    }

    /// The `k * replication` equations of `U^{n/m}`.
    pub fn equations(&self) -> Vec<SparsePoly> {
        let (m, n) = (self.degrees.len(), self.ambient());
        let mut out = Vec::new();
        for row in &self.matrix {
            for block in 0..self.replication {
                let terms = (0..m).map(|j| {
                    let mut e = vec![0u32; n];
                    e[block * m + j] = self.degrees[j];
                    (e, row[j].clone())
                });
                out.push(SparsePoly::from_terms(self.field, n, terms.collect::<Vec<_>>()).expect("arity matches"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhamReport {
    pub q: u64,
    pub n: usize,
    pub k: usize,
    pub d1: u32,
    pub declared_degree: u64,
    pub points_on_v: u64,
    pub intersection_count: u64,
    pub bound: u128,
    pub within_bound: bool,
    /// Lexicographically first point of `V` where the supplied polynomial
    /// does not vanish.
    pub witness_nonvanishing: Option<Vec<FieldElement>>,
    pub semantics: &'static str,
}

/// Count `V ∩ U^{n/m}` over `F_q` and look for a point of `V` avoiding `f`.
pub fn pham_evasive_check(
    sys: &PhamSystem,
    v: &ConstructibleDesc,
    f: Option<&SparsePoly>,
    budget: u64,
) -> Result<PhamReport, GeometryError> {
    let n = sys.ambient();
    if v.field != sys.field || v.n != n {
        return Err(GeometryError::Mismatch(format!("V lives in {}^{}, system in {}^{n}", v.field, v.n, sys.field)));
    }
    if v.dim as usize != sys.k() {
        return Err(GeometryError::InvalidSystem(format!("V has declared dimension {}, system has k = {}", v.dim, sys.k())));
    }
    if sys.degrees.iter().any(|&d| d as u64 <= v.deg_lci) {
        return Err(GeometryError::InvalidSystem(format!("degrees {:?} must all exceed D = {}", sys.degrees, v.deg_lci)));
    }
    if let Some(f) = f {
        if f.field() != sys.field || f.num_vars() != n {
            return Err(GeometryError::Mismatch(format!("{f} is not over {}^{n}", sys.field)));
        }
    }
    let eqs = sys.equations();
    let (on_v, count, witness) = scan_points(
        sys.field,
        n,
        budget,
        || (0u64, 0u64, None::<Vec<FieldElement>>),
        |acc, x| {
            if !v.contains(x) {
                return;
            }
            acc.0 += 1;
            if eqs.iter().all(|e| e.eval_unchecked(x).is_zero()) {
                acc.1 += 1;
            }
            if acc.2.is_none() && f.is_some_and(|f| !f.eval_unchecked(x).is_zero()) {
                acc.2 = Some(x.to_vec());
            }
        },
        |a, b| (a.0 + b.0, a.1 + b.1, a.2.or(b.2)),
    )?;
    let bound = (v.deg_lci as u128).saturating_mul(pow_u128(sys.max_degree() as u128, sys.k() as u32));
    Ok(PhamReport {
        q: sys.field.order().unwrap_or(0),
        n,
        k: sys.k(),
        d1: sys.max_degree(),
        declared_degree: v.deg_lci,
        points_on_v: on_v,
        intersection_count: count,
        bound,
        within_bound: count as u128 <= bound,
        witness_nonvanishing: witness,
        semantics: SEMANTICS,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhamFile {
    pub field: Field,
    pub matrix: Vec<Vec<String>>,
    pub degrees: Vec<u32>,
    #[serde(default = "one")]
    pub replication: usize,
    pub v: ConstructibleFile,
    #[serde(default)]
    pub f: Option<String>,
    #[serde(default)]
    pub budget: Option<u64>,
}

fn one() -> usize {
    1
}

impl PhamFile {
    pub fn parts(&self) -> Result<(PhamSystem, ConstructibleDesc, Option<SparsePoly>), GeometryError> {
        let matrix = self
            .matrix
            .iter()
            .map(|r| r.iter().map(|a| self.field.parse(a)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let sys = PhamSystem::new(self.field, matrix, self.degrees.clone(), self.replication)?;
        let n = sys.ambient();
        let v = self.v.clone().into_desc(self.field, n)?;
        let f = self.f.as_deref().map(|s| SparsePoly::parse(self.field, n, s)).transpose()?;
        Ok((sys, v, f))
    }

    pub fn budget(&self) -> u64 {
        self.budget.unwrap_or(DEFAULT_POINT_BUDGET)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp(p: u64) -> Field {
        Field::prime(p).unwrap()
    }

    fn poly(k: Field, n: usize, s: &str) -> SparsePoly {
        SparsePoly::parse(k, n, s).unwrap()
    }

    fn pt(k: Field, xs: &[u64]) -> Vec<FieldElement> {
        xs.iter().map(|&x| k.from_u64(x)).collect()
    }

    #[test]
    fn two_axes_give_four_cells() {
        let k = fp(5);
        let h = vec![SetExpr::Zero(poly(k, 2, "x1")), SetExpr::Zero(poly(k, 2, "x2"))];
        let exp = CellExperiment::new(ConstructibleDesc::affine_space(k, 2), h, 2).unwrap();
        let r = cells_enumerate(&exp, 1000).unwrap();
        assert_eq!(r.nonempty_cell_count, 4);
        assert_eq!(r.bound, 9);
        assert!(r.partition_ok && r.within_bound);
        assert_eq!(r.cell_sizes["11"].size, 1);
        assert_eq!(r.cell_sizes["10"].size, 4);
        assert_eq!(r.cell_sizes["00"].size, 16);
        assert_eq!(r.algebra.as_ref().unwrap().size, 16);
    }

    #[test]
    fn empty_family_single_cell() {
        let k = fp(5);
        let exp = CellExperiment::new(ConstructibleDesc::affine_space(k, 2), vec![], 0).unwrap();
        let r = cells_enumerate(&exp, 1000).unwrap();
        assert_eq!((r.nonempty_cell_count, r.bound), (1, 1));
        assert_eq!(r.algebra.unwrap().size, 2);
    }

    #[test]
    fn la_croix_de_berny_points() {
        // Oracle: 6 * 7 points with x != 0, plus (0, 1) and (0, 6).
        let k = fp(7);
        let c = ConstructibleDesc::la_croix_de_berny(k);
        let exp = CellExperiment::new(c, vec![SetExpr::Zero(poly(k, 2, "x2"))], 1).unwrap();
        let r = cells_enumerate(&exp, 1000).unwrap();
        assert_eq!(r.points_in_c, 44);
        assert_eq!(r.nonempty_cell_count, 2);
        assert_eq!(r.cell_sizes["1"].size, 6);
        assert_eq!(r.bound, 12);
        assert!(r.partition_ok);
    }

    #[test]
    fn algebra_matches_closure() {
        // Oracle: closure of {C, H_i} under complement and pairwise union.
        let k = fp(3);
        let h = vec![
            SetExpr::Zero(poly(k, 2, "x1")),
            SetExpr::NonZero(poly(k, 2, "x1 + x2")),
            SetExpr::Zero(poly(k, 2, "x2^2 - 1")),
        ];
        let exp = CellExperiment::new(ConstructibleDesc::affine_space(k, 2), h.clone(), 4).unwrap();
        let r = cells_enumerate(&exp, 1000).unwrap();
        let mut pts = Vec::new();
        for_each_point(&full_axis(k).unwrap(), 2, |x| {
            pts.push(x.to_vec());
            true
        });
        let full: u32 = (1 << pts.len()) - 1;
        let mut sets: BTreeSet<u32> = h
            .iter()
            .map(|e| pts.iter().enumerate().filter(|(_, x)| e.contains(x)).fold(0, |m, (i, _)| m | 1 << i))
            .collect();
        sets.insert(full);
        loop {
            let cur: Vec<u32> = sets.iter().copied().collect();
            let before = sets.len();
            for &a in &cur {
                sets.insert(full & !a);
                for &b in &cur {
                    sets.insert(a | b);
                }
            }
            if sets.len() == before {
                break;
            }
        }
        assert_eq!(r.algebra.unwrap().size, sets.len() as u64);
        assert_eq!(sets.len() as u64, 1 << r.nonempty_cell_count);
    }

    #[test]
    fn budget_is_enforced() {
        let k = fp(7);
        let exp = CellExperiment::new(ConstructibleDesc::affine_space(k, 3), vec![], 0).unwrap();
        assert!(matches!(cells_enumerate(&exp, 100), Err(GeometryError::BudgetExceeded { needed: 343, .. })));
    }

    fn lines_f11() -> ClassifierFamily {
        ClassifierFamily::coefficient_box(fp(11), 1, 1, 11, 1000).unwrap()
    }

    #[test]
    fn growth_of_lines() {
        let fam = lines_f11();
        assert_eq!(fam.members().len(), 121);
        assert_eq!((fam.omega_dim, fam.omega_deg_lci), (2, 1));
        let k = fp(11);
        let x: Vec<_> = (1..=3).map(|i| pt(k, &[i])).collect();
        let r = growth_measure(&fam, &x).unwrap();
        assert_eq!((r.count, r.bound), (5, 49));
        assert_eq!(growth_measure(&fam, &[]).unwrap().count, 1);
        let constant = ClassifierFamily::enumerated(vec![SparsePoly::one(k, 1)], 0, 1, "point").unwrap();
        assert_eq!(growth_measure(&constant, &x).unwrap().count, 1);
    }

    #[test]
    fn vc_of_lines() {
        let fam = lines_f11();
        let k = fp(11);
        let pool: Vec<_> = (0..5).map(|i| pt(k, &[i])).collect();
        let opts = SauerOptions { vc_upper: 2, sizes: (3..=8).collect(), samples: 4, seed: 3 };
        let r = vcdim_search(&fam, &pool, 4, Some(&opts), DEFAULT_VC_BUDGET).unwrap();
        assert_eq!(r.vc_lower_bound, 2);
        assert_eq!(r.shattered_witness, vec![pt(k, &[0]), pt(k, &[1])]);
        assert!(r.reverified);
        assert_eq!(r.realizers.len(), 4);
        assert_eq!(r.sauer_ok, Some(true));
        assert!(r.krull_ok);
        assert!((r.krull.lhs - 2.0 / 3.0).abs() < 1e-12);
        for row in &r.sauer.unwrap().rows {
            assert_eq!(row.max_growth, row.m as u64 + 2);
        }
    }

    #[test]
    fn vc_of_constant() {
        let k = fp(11);
        let fam = ClassifierFamily::enumerated(vec![SparsePoly::one(k, 1)], 0, 1, "point").unwrap();
        let pool: Vec<_> = (0..3).map(|i| pt(k, &[i])).collect();
        let r = vcdim_search(&fam, &pool, 3, None, DEFAULT_VC_BUDGET).unwrap();
        assert_eq!(r.vc_lower_bound, 0);
        assert_eq!(r.sauer_ok, None);
        assert!(r.krull_ok);
    }

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(combinations(4, 2), vec![0b0011, 0b0101, 0b1001, 0b0110, 0b1010, 0b1100]);
        assert_eq!(combinations(3, 0), vec![0]);
        assert!(combinations(2, 3).is_empty());
    }

    #[test]
    fn pham_line_fixture() {
        let k = fp(7);
        let sys = PhamSystem::new(k, vec![pt(k, &[1, 1])], vec![3, 2], 1).unwrap();
        assert_eq!(sys.equations()[0].to_string(), "x1^3 + x2^2");
        let v = ConstructibleDesc::hypersurface(poly(k, 2, "x2 - x1"), "line").unwrap();
        let r = pham_evasive_check(&sys, &v, Some(&poly(k, 2, "x2")), 1000).unwrap();
        // Oracle: x^3 + x^2 = x^2 (x + 1) vanishes at x = 0 and x = 6.
        assert_eq!(r.points_on_v, 7);
        assert_eq!(r.intersection_count, 2);
        assert_eq!(r.bound, 3);
        assert!(r.within_bound);
        assert_eq!(r.witness_nonvanishing, Some(pt(k, &[1, 1])));
    }

    #[test]
    fn pham_witness_on_vertical_line() {
        let k = fp(7);
        let sys = PhamSystem::new(k, vec![pt(k, &[1, 1])], vec![3, 2], 1).unwrap();
        let v = ConstructibleDesc::hypersurface(poly(k, 2, "x1 - 1"), "line").unwrap();
        let r = pham_evasive_check(&sys, &v, Some(&poly(k, 2, "x2")), 1000).unwrap();
        assert_eq!(r.witness_nonvanishing, Some(pt(k, &[1, 1])));
        let none = pham_evasive_check(&sys, &v, Some(&poly(k, 2, "x1 - 1")), 1000).unwrap();
        assert_eq!(none.witness_nonvanishing, None);
    }

    #[test]
    fn pham_validation() {
        let k = fp(7);
        let twice = vec![pt(k, &[1, 2, 3]), pt(k, &[1, 2, 3])];
        assert!(matches!(
            PhamSystem::new(k, twice, vec![5, 3, 2], 1),
            Err(GeometryError::DegenerateSystem { rank: 1, k: 2 })
        ));
        assert!(PhamSystem::new(k, vec![pt(k, &[1, 1])], vec![4, 2], 1).is_err());
        assert!(PhamSystem::new(k, vec![pt(k, &[1, 1])], vec![2, 3], 1).is_err());
        assert!(PhamSystem::new(k, vec![pt(k, &[1, 1]), pt(k, &[0, 1])], vec![3, 2], 1).is_err());
        let sys = PhamSystem::new(k, vec![pt(k, &[1, 1])], vec![3, 2], 1).unwrap();
        let conic = ConstructibleDesc::hypersurface(poly(k, 2, "x1^2 + x2^2 - 1"), "conic").unwrap();
        assert!(matches!(pham_evasive_check(&sys, &conic, None, 1000), Err(GeometryError::InvalidSystem(_))));
    }

    #[test]
    fn rank_examples() {
        let k = fp(5);
        assert_eq!(rank(&[pt(k, &[1, 2]), pt(k, &[2, 4])]).unwrap(), 1);
        assert_eq!(rank(&[pt(k, &[1, 2]), pt(k, &[2, 3])]).unwrap(), 2);
        assert_eq!(rank(&[pt(k, &[0, 0])]).unwrap(), 0);
    }

    #[test]
    fn set_file_round_trip() {
        let text = r#"{"or": [{"nonzero": "x1"}, {"and": [{"zero": "x1"}, {"zero": "x2^2 - 1"}]}]}"#;
        let f: SetFile = serde_json::from_str(text).unwrap();
        let k = fp(7);
        let e = f.into_expr(k, 2).unwrap();
        assert_eq!(&e, ConstructibleDesc::la_croix_de_berny(k).set());
        let all: SetFile = serde_json::from_str("\"all\"").unwrap();
        assert_eq!(all, SetFile::All);
    }
}
