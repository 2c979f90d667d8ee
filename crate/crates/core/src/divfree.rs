//! Division elimination: compile a network with rational activation
//! `phi = p/q` into a squaring network that computes, for every node, a
//! numerator/denominator pair.
//!
//! For a node with fan-in values `P_i/Q_i` and parameters `a_i`,
//! `S = sum a_i P_i prod_{j != i} Q_j` and `Y = prod Q_j`, so the affine
//! combination is `S/Y` and
//!
//! ```text
//! P = sum_k b_k Y^(d-k) S^k,    Q = sum_k c_k Y^(d-k) S^k
//! ```
//!
//! Products are realized with `xy = ((x+y)^2 - x^2 - y^2)/2`. Linear
//! combinations feeding a square are folded into its edge weights, so a
//! product costs one layer; `S` and `Y` come from a balanced fraction-sum
//! tree, so a node costs `O(log M + log d)` layers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Field, FieldElement};
use crate::network::{
    Activation, Edge, Instantiation, NetStats, NetworkBuilder, NetworkError, NetworkFile, NetworkSpec, NodeId,
    OrderedMap,
};

/// Effective constant for the structural bounds
/// `depth' <= C * l * (ceil(log2 d) + ceil(log2 S) + 1)` and
/// `size' <= C * L * (d + S)`: the ceiling of the largest measured ratio over
/// random corpora (l <= 4, L <= 12, S <= 4, d <= 3), frozen here. Networks
/// where every node has the maximal fan-in can exceed it slightly; `Metrics`
/// reports the ratios either way.
pub const C_EFF: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DivFreeError {
    #[error("characteristic 2: the product gadget needs 1/2")]
    CharacteristicTwo,
    #[error("activation is not rational")]
    NotRationalActivation,
    #[error("networks disagree on input count: {0} vs {1}")]
    ArityMismatch(usize, usize),
    #[error("networks live over different fields: {0} vs {1}")]
    MixedField(Field, Field),
    #[error("identity targets take one or two networks, got {0}")]
    BadTargetCount(usize),
    #[error("identity targets need single-output networks, got {0} outputs")]
    MultipleOutputs(usize),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("json: {0}")]
    Json(String),
}

/// Where a compiled edge weight comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tie {
    Const(FieldElement),
    /// Parameter `edge` of source network number `net`.
    Source { net: usize, edge: Edge },
}

/// Squaring-network builder that tracks where every weight comes from.
#[derive(Debug, Clone)]
pub struct Circuit {
    field: Field,
    num_inputs: usize,
    layers: Vec<Vec<(Vec<(NodeId, Tie)>, bool)>>,
}

impl Circuit {
    pub fn new(field: Field, num_inputs: usize) -> Result<Self, DivFreeError> {
        if field.characteristic() == 2 {
            return Err(DivFreeError::CharacteristicTwo);
        }
        Ok(Circuit { field, num_inputs, layers: vec![Vec::new()] })
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn add(&mut self, depth: usize, fan_in: Vec<(NodeId, Tie)>, linear: bool) -> NodeId {
        assert!(depth >= 1);
        debug_assert!(fan_in.iter().all(|(p, _)| p.depth < depth));
        while self.layers.len() <= depth {
            self.layers.push(Vec::new());
        }
        self.layers[depth].push((fan_in, linear));
        NodeId::new(depth, self.layers[depth].len())
    }

    fn konst(&self, v: FieldElement) -> Tie {
        Tie::Const(v)
    }

    /// Build the network. Outputs shallower than the top layer are copied up
    /// by one linear relay node each.
    pub fn finish(mut self, outputs: &[NodeId]) -> Result<(NetworkSpec, BTreeMap<Edge, Tie>, Vec<NodeId>), DivFreeError> {
        let top = self.depth().max(1);
        let one = self.field.one();
        let outs: Vec<NodeId> = outputs
            .iter()
            .map(|&o| if o.depth == top { o } else { self.add(top, vec![(o, Tie::Const(one.clone()))], true) })
            .collect();
        let mut b = NetworkBuilder::new(self.field, self.num_inputs, Activation::Square);
        let mut ties = BTreeMap::new();
        for (d, layer) in self.layers.into_iter().enumerate().skip(1) {
            for (f, lin) in layer {
                let parents: Vec<NodeId> = f.iter().map(|(p, _)| *p).collect();
                let id = b.add(d, parents, lin);
                for (parent, tie) in f {
                    ties.insert(Edge { child: id, parent }, tie);
                }
            }
        }
        Ok((b.build(outs.clone())?, ties, outs))
    }
}

/// Resolve ties against source instantiations.
pub fn instantiate_ties(spec: &NetworkSpec, ties: &BTreeMap<Edge, Tie>, sources: &[&Instantiation]) -> Instantiation {
    Instantiation::from_fn(spec, |e| match &ties[&e] {
        Tie::Const(v) => v.clone(),
        Tie::Source { net, edge } => sources[*net]
            .get(edge)
            .unwrap_or_else(|| panic!("source instantiation {net} lacks edge {edge}"))
            .clone(),
    })
}

/// Append the product gadget on `left`, `right`: three squares
/// `(L+R)^2, L^2, R^2` one layer above the deeper source and one linear node
/// computing `((L+R)^2 - L^2 - R^2)/2` above them. Returns the linear node.
pub fn gadget_product(c: &mut Circuit, left: NodeId, right: NodeId) -> Result<NodeId, DivFreeError> {
    let f = c.field;
    let half = f.from_u64(2).inv().map_err(|_| DivFreeError::CharacteristicTwo)?;
    let d = left.depth.max(right.depth) + 1;
    let one = || Tie::Const(f.one());
    let sum = if left == right {
        c.add(d, vec![(left, Tie::Const(f.from_u64(2)))], false)
    } else {
        c.add(d, vec![(left, one()), (right, one())], false)
    };
    let l2 = c.add(d, vec![(left, one())], false);
    let r2 = c.add(d, vec![(right, one())], false);
    Ok(c.add(
        d + 1,
        vec![(sum, Tie::Const(half.clone())), (l2, Tie::Const(-&half)), (r2, Tie::Const(-&half))],
        true,
    ))
}

/// A standalone network computing `left * right` with the gadget, plus its
/// (all-constant) instantiation.
pub fn gadget_network(
    field: Field,
    num_inputs: usize,
    left: NodeId,
    right: NodeId,
) -> Result<(NetworkSpec, Instantiation), DivFreeError> {
    let mut c = Circuit::new(field, num_inputs)?;
    let out = gadget_product(&mut c, left, right)?;
    let (spec, ties, _) = c.finish(&[out])?;
    let inst = instantiate_ties(&spec, &ties, &[]);
    Ok((spec, inst))
}

/// Affine form over compiled wires; `(0,0)` carries the constant term.
type Lin = BTreeMap<NodeId, FieldElement>;

fn lin_depth(v: &Lin) -> usize {
    v.keys().map(|k| k.depth).max().unwrap_or(0)
}

fn is_const(v: &Lin) -> bool {
    v.keys().all(|k| *k == NodeId::ONE)
}

fn const_part(v: &Lin, f: Field) -> FieldElement {
    v.get(&NodeId::ONE).cloned().unwrap_or_else(|| f.zero())
}

fn wire(w: NodeId, f: Field) -> Lin {
    BTreeMap::from([(w, f.one())])
}

fn lin_const(c: FieldElement) -> Lin {
    let mut v = Lin::new();
    if !c.is_zero() {
        v.insert(NodeId::ONE, c);
    }
    v
}

fn lin_axpy(acc: &mut Lin, a: &FieldElement, x: &Lin) {
    for (k, c) in x {
        let t = a * c;
        let s = match acc.get(k) {
            Some(old) => old + &t,
            None => t,
        };
        if s.is_zero() {
            acc.remove(k);
        } else {
            acc.insert(*k, s);
        }
    }
}

fn lin_scale(a: &FieldElement, x: &Lin) -> Lin {
    let mut out = Lin::new();
    lin_axpy(&mut out, a, x);
    out
}

/// Order in which a node's fan-in enters the fraction-sum tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FanInOrder {
    #[default]
    Natural,
    Reversed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CompileOptions {
    pub fan_in_order: FanInOrder,
}

struct Compiler {
    c: Circuit,
    half: FieldElement,
    squares: BTreeMap<Vec<(NodeId, FieldElement)>, NodeId>,
}

impl Compiler {
    fn new(field: Field, num_inputs: usize) -> Result<Self, DivFreeError> {
        let c = Circuit::new(field, num_inputs)?;
        let half = field.from_u64(2).inv().map_err(|_| DivFreeError::CharacteristicTwo)?;
        Ok(Compiler { c, half, squares: BTreeMap::new() })
    }

    fn f(&self) -> Field {
        self.c.field
    }

    /// `v^2`, sharing one square node among all scalar multiples of `v`.
    fn square(&mut self, v: &Lin) -> Lin {
        let f = self.f();
        if is_const(v) {
            let c = const_part(v, f);
            return lin_const(&c * &c);
        }
        let lead = v.values().next().expect("nonconstant form has a term").clone();
        let inv = lead.inv().expect("stored coefficients are nonzero");
        let monic = lin_scale(&inv, v);
        let key: Vec<(NodeId, FieldElement)> = monic.iter().map(|(k, c)| (*k, c.clone())).collect();
        let node = match self.squares.get(&key) {
            Some(&n) => n,
            None => {
                let fan = monic.iter().map(|(k, c)| (*k, self.c.konst(c.clone()))).collect();
                let n = self.c.add(lin_depth(&monic) + 1, fan, false);
                self.squares.insert(key, n);
                n
            }
        };
        BTreeMap::from([(node, &lead * &lead)])
    }

    fn product(&mut self, a: &Lin, b: &Lin) -> Lin {
        let f = self.f();
        if is_const(a) {
            return lin_scale(&const_part(a, f), b);
        }
        if is_const(b) {
            return lin_scale(&const_part(b, f), a);
        }
        if a == b {
            return self.square(a);
        }
        let mut sum = a.clone();
        lin_axpy(&mut sum, &f.one(), b);
        let s = self.square(&sum);
        let sa = self.square(a);
        let sb = self.square(b);
        let h = self.half.clone();
        let mut out = lin_scale(&h, &s);
        lin_axpy(&mut out, &-&h, &sa);
        lin_axpy(&mut out, &-&h, &sb);
        out
    }

    /// `v^k` by repeated squaring; `cache[k]` holds computed powers.
    fn power(&mut self, cache: &mut BTreeMap<u32, Lin>, k: u32) -> Lin {
        if let Some(v) = cache.get(&k) {
            return v.clone();
        }
        let out = if k.is_power_of_two() {
            let h = self.power(cache, k / 2);
            self.square(&h)
        } else {
            let h = 1 << (31 - k.leading_zeros());
            let x = self.power(cache, h);
            let y = self.power(cache, k - h);
            self.product(&x, &y)
        };
        cache.insert(k, out.clone());
        out
    }

    /// A node holding `v`; a bare unit wire is reused as is.
    fn materialize(&mut self, v: &Lin) -> NodeId {
        if v.len() == 1 {
            let (k, c) = v.iter().next().unwrap();
            if c.is_one() {
                return *k;
            }
        }
        let fan = v.iter().map(|(k, c)| (*k, self.c.konst(c.clone()))).collect();
        self.c.add(lin_depth(v) + 1, fan, true)
    }

    /// Fraction sum of `leaves = [(num, den)]` as one `(num, den)`.
    fn fraction_sum(&mut self, leaves: &[(Lin, Lin)]) -> (Lin, Lin) {
        match leaves.len() {
            0 => (Lin::new(), lin_const(self.f().one())),
            1 => leaves[0].clone(),
            n => {
                let (nl, dl) = self.fraction_sum(&leaves[..n / 2]);
                let (nr, dr) = self.fraction_sum(&leaves[n / 2..]);
                let mut num = self.product(&nl, &dr);
                let cross = self.product(&nr, &dl);
                lin_axpy(&mut num, &self.f().one(), &cross);
                let den = self.product(&dl, &dr);
                (num, den)
            }
        }
    }

    /// Compile source network `net` into the shared circuit; returns the
    /// numerator and denominator node of every source node.
    fn compile(
        &mut self,
        spec: &NetworkSpec,
        net: usize,
        opts: CompileOptions,
    ) -> Result<BTreeMap<NodeId, (NodeId, NodeId)>, DivFreeError> {
        let (num, den) = match spec.activation() {
            Activation::Rational { num, den } => (num.clone(), den.clone()),
            _ => return Err(DivFreeError::NotRationalActivation),
        };
        let f = self.f();
        let d = spec.activation().degree();
        let mut pairing = BTreeMap::new();
        pairing.insert(NodeId::ONE, (NodeId::ONE, NodeId::ONE));
        for j in 1..=spec.num_inputs() {
            pairing.insert(NodeId::input(j), (NodeId::input(j), NodeId::ONE));
        }
        for id in spec.nodes() {
            let mut parents: Vec<NodeId> = spec.fan_in(id).to_vec();
            if opts.fan_in_order == FanInOrder::Reversed {
                parents.reverse();
            }
            let mut leaves = Vec::with_capacity(parents.len());
            for p in parents {
                let (pn, pd) = pairing[&p];
                let tie = Tie::Source { net, edge: Edge { child: id, parent: p } };
                let leaf = self.c.add(pn.depth + 1, vec![(pn, tie)], true);
                let q = if pd == NodeId::ONE { lin_const(f.one()) } else { wire(pd, f) };
                leaves.push((wire(leaf, f), q));
            }
            let (s, y) = self.fraction_sum(&leaves);
            let mut spow = BTreeMap::from([(0, lin_const(f.one())), (1, s)]);
            let mut ypow = BTreeMap::from([(0, lin_const(f.one())), (1, y)]);
            let mut p_lin = Lin::new();
            let mut q_lin = Lin::new();
            for k in 0..=d {
                let (b, c) = (num.coeff(k as usize), den.coeff(k as usize));
                if b.is_zero() && c.is_zero() {
                    continue;
                }
                let sk = self.power(&mut spow, k);
                let yk = self.power(&mut ypow, d - k);
                let t = self.product(&yk, &sk);
                lin_axpy(&mut p_lin, &b, &t);
                lin_axpy(&mut q_lin, &c, &t);
            }
            let pn = self.materialize(&p_lin);
            let qn = self.materialize(&q_lin);
            pairing.insert(id, (pn, qn));
        }
        Ok(pairing)
    }
}

/// Size and depth of a compiled network against the structural bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub size: usize,
    pub depth: usize,
    pub space: usize,
    pub edges: usize,
    pub source_size: usize,
    pub source_depth: usize,
    pub source_space: usize,
    pub activation_degree: u32,
    /// `depth' / (l * (ceil(log2 d) + ceil(log2 S) + 1))`.
    pub depth_ratio: f64,
    /// `size' / (L * (d + S))`.
    pub size_ratio: f64,
    pub c_eff: u32,
    pub within_bounds: bool,
}

fn ceil_log2(x: u64) -> u64 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros() as u64
    }
}

impl Metrics {
    fn new(src: &NetStats, d: u32, out: &NetStats) -> Self {
        let s = src.space.max(1) as u64;
        let depth_core = src.depth as u64 * (ceil_log2(d as u64) + ceil_log2(s) + 1);
        let size_core = src.size as u64 * (d as u64 + s);
        let depth_ratio = out.depth as f64 / depth_core.max(1) as f64;
        let size_ratio = out.size as f64 / size_core.max(1) as f64;
        let c = C_EFF as u64;
        Metrics {
            size: out.size,
            depth: out.depth,
            space: out.space,
            edges: out.edges,
            source_size: src.size,
            source_depth: src.depth,
            source_space: src.space,
            activation_degree: d,
            depth_ratio,
            size_ratio,
            c_eff: C_EFF,
            within_bounds: out.depth as u64 <= c * depth_core && out.size as u64 <= c * size_core,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DivFreeResult {
    pub compiled: NetworkSpec,
    /// Source node -> (numerator node, denominator node). Inputs pair with
    /// the constant node as denominator; source outputs map to the compiled
    /// outputs.
    pub pairing: BTreeMap<NodeId, (NodeId, NodeId)>,
    pub ties: BTreeMap<Edge, Tie>,
    pub metrics: Metrics,
}

pub fn compile_divfree(spec: &NetworkSpec) -> Result<DivFreeResult, DivFreeError> {
    compile_divfree_with(spec, CompileOptions::default())
}

pub fn compile_divfree_with(spec: &NetworkSpec, opts: CompileOptions) -> Result<DivFreeResult, DivFreeError> {
    let mut comp = Compiler::new(spec.field(), spec.num_inputs())?;
    let mut pairing = comp.compile(spec, 0, opts)?;
    let outs: Vec<NodeId> = spec.outputs().iter().flat_map(|o| [pairing[o].0, pairing[o].1]).collect();
    let (compiled, ties, relayed) = comp.c.finish(&outs)?;
    for (o, pair) in spec.outputs().iter().zip(relayed.chunks(2)) {
        pairing.insert(*o, (pair[0], pair[1]));
    }
    let metrics = Metrics::new(&spec.stats(), spec.activation().degree(), &compiled.stats());
    Ok(DivFreeResult { compiled, pairing, ties, metrics })
}

#[derive(Serialize, Deserialize)]
struct CompiledFile {
    #[serde(flatten)]
    network: NetworkFile,
    pairing: OrderedMap<NodeId, [NodeId; 2]>,
    constants: OrderedMap<Edge, String>,
    tied: OrderedMap<Edge, Edge>,
    metrics: Metrics,
}

impl DivFreeResult {
    /// Compiled instantiation: source parameters on tied edges, constants
    /// elsewhere.
    pub fn instantiate(&self, source: &Instantiation) -> Instantiation {
        instantiate_ties(&self.compiled, &self.ties, &[source])
    }

    pub fn to_json(&self) -> String {
        let mut constants = Vec::new();
        let mut tied = Vec::new();
        for (e, t) in &self.ties {
            match t {
                Tie::Const(v) => constants.push((*e, v.to_string())),
                Tie::Source { edge, .. } => tied.push((*e, *edge)),
            }
        }
        let file = CompiledFile {
            network: self.compiled.to_file(),
            pairing: OrderedMap(self.pairing.iter().map(|(k, (a, b))| (*k, [*a, *b])).collect()),
            constants: OrderedMap(constants),
            tied: OrderedMap(tied),
            metrics: self.metrics.clone(),
        };
        serde_json::to_string_pretty(&file).expect("compiled network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DivFreeError> {
        let file: CompiledFile = serde_json::from_str(text).map_err(|e| DivFreeError::Json(e.to_string()))?;
        let field = file.network.field;
        let compiled = file.network.into_spec()?;
        let mut ties = BTreeMap::new();
        for (e, v) in file.constants.0 {
            ties.insert(e, Tie::Const(field.parse(&v).map_err(NetworkError::from)?));
        }
        for (e, src) in file.tied.0 {
            ties.insert(e, Tie::Source { net: 0, edge: src });
        }
        if let Some(e) = compiled.edges().into_iter().find(|e| !ties.contains_key(e)) {
            return Err(NetworkError::MissingParam(e).into());
        }
        let pairing = file.pairing.0.into_iter().map(|(k, [a, b])| (k, (a, b))).collect();
        Ok(DivFreeResult { compiled, pairing, ties, metrics: file.metrics })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    /// `num * den` of one network.
    Single,
    /// `(n1 d2 - n2 d1) * d1 d2` of two networks.
    Pair,
}

/// Squaring network with one output whose vanishing (where the compiled
/// denominators do not vanish) encodes a rational identity.
#[derive(Debug, Clone)]
pub struct IdentityTarget {
    pub network: NetworkSpec,
    pub ties: BTreeMap<Edge, Tie>,
    pub kind: TargetKind,
    /// Input-degree bound `2 (dS)^l` (single) or `4 (dS)^l` (pair).
    pub degree_bound: u128,
    /// Compiled denominators of the source outputs.
    pub denominators: Vec<NodeId>,
}

impl IdentityTarget {
    /// One instantiation per source network, in order.
    pub fn instantiate(&self, sources: &[&Instantiation]) -> Instantiation {
        instantiate_ties(&self.network, &self.ties, sources)
    }
}

/// Build the identity target for one network (`num * den`) or two networks
/// (`(n1 d2 - n2 d1) d1 d2`).
pub fn compile_identity_targets(specs: &[(&NetworkSpec, CompileOptions)]) -> Result<IdentityTarget, DivFreeError> {
    if specs.is_empty() || specs.len() > 2 {
        return Err(DivFreeError::BadTargetCount(specs.len()));
    }
    let first = specs[0].0;
    for (s, _) in specs {
        if s.field() != first.field() {
            return Err(DivFreeError::MixedField(first.field(), s.field()));
        }
        if s.num_inputs() != first.num_inputs() {
            return Err(DivFreeError::ArityMismatch(first.num_inputs(), s.num_inputs()));
        }
        if s.outputs().len() != 1 {
            return Err(DivFreeError::MultipleOutputs(s.outputs().len()));
        }
    }
    let f = first.field();
    let mut comp = Compiler::new(f, first.num_inputs())?;
    let mut pairs = Vec::new();
    for (net, (s, o)) in specs.iter().enumerate() {
        let p = comp.compile(s, net, *o)?;
        pairs.push(p[&s.outputs()[0]]);
    }
    let w = |n: NodeId| wire(n, f);
    let (target, kind) = if pairs.len() == 1 {
        let (n, d) = pairs[0];
        (comp.product(&w(n), &w(d)), TargetKind::Single)
    } else {
        let ((n1, d1), (n2, d2)) = (pairs[0], pairs[1]);
        let mut cross = comp.product(&w(n1), &w(d2));
        let t = comp.product(&w(n2), &w(d1));
        lin_axpy(&mut cross, &-&f.one(), &t);
        let dd = comp.product(&w(d1), &w(d2));
        (comp.product(&cross, &dd), TargetKind::Pair)
    };
    let out = comp.materialize(&target);
    // A bare input or constant wire cannot be an output; wrap it.
    let out = if out.depth == 0 { comp.c.add(1, vec![(out, Tie::Const(f.one()))], true) } else { out };
    let (network, ties, _) = comp.c.finish(&[out])?;
    let degree_bound = specs
        .iter()
        .map(|(s, _)| {
            let st = s.stats();
            let ds = s.activation().degree() as u128 * st.space.max(1) as u128;
            ds.saturating_pow(st.depth as u32)
        })
        .max()
        .unwrap_or(1)
        .saturating_mul(if kind == TargetKind::Single { 2 } else { 4 });
    Ok(IdentityTarget {
        network,
        ties,
        kind,
        degree_bound,
        denominators: pairs.iter().map(|p| p.1).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{net_eval, NodeValue};
    use crate::polynomial::UniPoly;

    fn uni(field: Field, cs: &[i64]) -> UniPoly {
        UniPoly::new(field, cs.iter().map(|&c| field.from_i64(c)).collect()).unwrap()
    }

    fn frac(field: Field) -> Activation {
        Activation::rational(uni(field, &[0, 1]), uni(field, &[1, 1])).unwrap()
    }

    fn inst(spec: &NetworkSpec, vals: &[i64]) -> Instantiation {
        let f = spec.field();
        let mut it = vals.iter();
        Instantiation::from_fn(spec, |_| f.from_i64(*it.next().expect("enough values")))
    }

    fn single(field: Field) -> NetworkSpec {
        let mut b = NetworkBuilder::new(field, 1, frac(field));
        let v = b.add(1, vec![NodeId::ONE, NodeId::input(1)], false);
        b.build(vec![v]).unwrap()
    }

    fn pair_values(r: &DivFreeResult, src: &Instantiation, x: i64) -> (FieldElement, FieldElement) {
        let f = r.compiled.field();
        let t = net_eval(&r.compiled, &r.instantiate(src), &[f.from_i64(x)]).unwrap();
        let v = t.output_values().unwrap();
        (v[0].clone(), v[1].clone())
    }

    #[test]
    fn gadget_small_values() {
        let f = Field::prime(7).unwrap();
        let (spec, i) = gadget_network(f, 2, NodeId::input(1), NodeId::input(2)).unwrap();
        let s = spec.stats();
        assert_eq!((s.size, s.depth), (4, 2));
        let t = net_eval(&spec, &i, &[f.from_u64(3), f.from_u64(4)]).unwrap();
        assert_eq!(t.output_values().unwrap(), vec![f.from_u64(5)]);
    }

    #[test]
    fn gadget_self_product() {
        let q = Field::rationals();
        let (spec, i) = gadget_network(q, 1, NodeId::input(1), NodeId::input(1)).unwrap();
        for x in -5..=5 {
            let t = net_eval(&spec, &i, &[q.from_i64(x)]).unwrap();
            assert_eq!(t.output_values().unwrap(), vec![q.from_i64(x * x)]);
        }
    }

    #[test]
    fn characteristic_two_rejected() {
        let f2 = Field::prime(2).unwrap();
        assert_eq!(
            gadget_network(f2, 2, NodeId::input(1), NodeId::input(2)).unwrap_err(),
            DivFreeError::CharacteristicTwo
        );
        let act = Activation::rational(uni(f2, &[0, 1]), uni(f2, &[1, 1])).unwrap();
        let mut b = NetworkBuilder::new(f2, 1, act);
        let v = b.add(1, vec![NodeId::input(1)], false);
        let spec = b.build(vec![v]).unwrap();
        assert_eq!(compile_divfree(&spec).unwrap_err(), DivFreeError::CharacteristicTwo);
    }

    #[test]
    fn polynomial_activation_rejected() {
        let q = Field::rationals();
        let mut b = NetworkBuilder::new(q, 1, Activation::Square);
        let v = b.add(1, vec![NodeId::input(1)], false);
        let spec = b.build(vec![v]).unwrap();
        assert_eq!(compile_divfree(&spec).unwrap_err(), DivFreeError::NotRationalActivation);
    }

    #[test]
    fn single_node_pair() {
        let q = Field::rationals();
        let spec = single(q);
        let r = compile_divfree(&spec).unwrap();
        assert_eq!(r.compiled.activation(), &Activation::Square);
        assert_eq!(pair_values(&r, &inst(&spec, &[1, 2]), 3), (q.from_i64(7), q.from_i64(8)));
    }

    #[test]
    fn two_level_chain_pair() {
        let q = Field::rationals();
        let mut b = NetworkBuilder::new(q, 1, frac(q));
        let v = b.add(1, vec![NodeId::ONE, NodeId::input(1)], false);
        let w = b.add(2, vec![v], false);
        let spec = b.build(vec![w]).unwrap();
        let r = compile_divfree(&spec).unwrap();
        assert_eq!(pair_values(&r, &inst(&spec, &[1, 2, 1]), 3), (q.from_i64(7), q.from_i64(15)));
    }

    #[test]
    fn reciprocal_pair() {
        let q = Field::rationals();
        let act = Activation::rational(uni(q, &[1]), uni(q, &[0, 1])).unwrap();
        let mut b = NetworkBuilder::new(q, 1, act);
        let v = b.add(1, vec![NodeId::input(1)], false);
        let spec = b.build(vec![v]).unwrap();
        let r = compile_divfree(&spec).unwrap();
        assert_eq!(pair_values(&r, &inst(&spec, &[5]), 3), (q.one(), q.from_i64(15)));
    }

    #[test]
    fn pole_makes_denominator_vanish() {
        let q = Field::rationals();
        let spec = single(q);
        let src = inst(&spec, &[1, 2]);
        let t = net_eval(&spec, &src, &[q.from_i64(-1)]).unwrap();
        assert_eq!(t.outputs()[0], NodeValue::Undefined(NodeId::new(1, 1)));
        let r = compile_divfree(&spec).unwrap();
        let (_, den) = pair_values(&r, &src, -1);
        assert!(den.is_zero());
    }

    #[test]
    fn json_round_trip() {
        let f = Field::prime(101).unwrap();
        let r = compile_divfree(&single(f)).unwrap();
        let text = r.to_json();
        for key in ["\"pairing\"", "\"metrics\"", "\"constants\"", "\"tied\""] {
            assert!(text.contains(key), "{key} missing");
        }
        let back = DivFreeResult::from_json(&text).unwrap();
        assert_eq!(back.compiled, r.compiled);
        assert_eq!(back.ties, r.ties);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn single_target_value() {
        let q = Field::rationals();
        let spec = single(q);
        let t = compile_identity_targets(&[(&spec, CompileOptions::default())]).unwrap();
        assert_eq!(t.kind, TargetKind::Single);
        assert_eq!(t.degree_bound, 2 * 2);
        let i = t.instantiate(&[&inst(&spec, &[1, 2])]);
        let v = net_eval(&t.network, &i, &[q.from_i64(3)]).unwrap();
        assert_eq!(v.output_values().unwrap(), vec![q.from_i64(56)]);
    }

    #[test]
    fn pair_target_cross_difference() {
        let q = Field::rationals();
        let a = single(q);
        // X/(X+1) from (0, 1); (X+1)/(X+2) from (1, 1).
        let (ia, ib) = (inst(&a, &[0, 1]), inst(&a, &[1, 1]));
        let rev = CompileOptions { fan_in_order: FanInOrder::Reversed };
        let t = compile_identity_targets(&[(&a, CompileOptions::default()), (&a, rev)]).unwrap();
        assert_eq!(t.kind, TargetKind::Pair);
        let v = net_eval(&t.network, &t.instantiate(&[&ia, &ib]), &[q.one()]).unwrap();
        assert_eq!(v.output_values().unwrap(), vec![q.from_i64(-6)]);
        let v = net_eval(&t.network, &t.instantiate(&[&ia, &ia]), &[q.from_i64(4)]).unwrap();
        assert!(v.output_values().unwrap()[0].is_zero());
    }

    #[test]
    fn target_input_mismatch() {
        let q = Field::rationals();
        let a = single(q);
        let mut b = NetworkBuilder::new(q, 2, frac(q));
        let v = b.add(1, vec![NodeId::input(2)], false);
        let two = b.build(vec![v]).unwrap();
        let o = CompileOptions::default();
        assert_eq!(compile_identity_targets(&[(&a, o), (&two, o)]).unwrap_err(), DivFreeError::ArityMismatch(1, 2));
        let f7 = single(Field::prime(7).unwrap());
        assert!(matches!(compile_identity_targets(&[(&a, o), (&f7, o)]), Err(DivFreeError::MixedField(..))));
        assert_eq!(compile_identity_targets(&[]).unwrap_err(), DivFreeError::BadTargetCount(0));
    }
}
