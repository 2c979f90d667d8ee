//! Layered neural networks over a field: syntax, JSON format, instantiation,
//! recursive evaluation and polynomial expansion.
//!
//! Node `(0,0)` is the constant 1 and `(0,j)` is the input `X_j`. Nodes of
//! depth `i >= 1` are numbered `1..=L_i` and read only from nodes of depth
//! `< i`. Every non-input node applies the network's activation to the affine
//! combination of its fan-in, except nodes marked *linear*, which output the
//! combination itself.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::field::{Field, FieldElement, FieldError};
use crate::polynomial::{PolyError, SparsePoly, UniPoly};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error("layer 0 must have width {expected} (constant plus inputs), found {found}")]
    LayerMismatch { expected: usize, found: usize },
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("edge {child}<-{parent} points at a node that does not exist")]
    DanglingEdge { child: NodeId, parent: NodeId },
    #[error("fan-in of {child} contains {parent}, which is not strictly shallower")]
    BadFanInDepth { child: NodeId, parent: NodeId },
    #[error("edge {child}<-{parent} listed twice")]
    DuplicateEdge { child: NodeId, parent: NodeId },
    #[error("network has no outputs")]
    EmptyOutputs,
    #[error("output {node} is not at the top depth {depth}")]
    OutputDepth { node: NodeId, depth: usize },
    #[error("invalid activation: {0}")]
    BadActivation(String),
    #[error("missing parameter for edge {0}")]
    MissingParam(Edge),
    #[error("parameter given for non-edge {0}")]
    ExtraParam(Edge),
    #[error("expected {expected} input values, found {found}")]
    InputArity { expected: usize, found: usize },
    #[error("rational activations cannot be expanded as polynomials; compile the network first")]
    RationalActivationNotExpandable,
    #[error("expansion budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("malformed identifier {0:?}")]
    BadId(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("json: {0}")]
    Json(String),
}

/// Node address `(depth, index)`, written `depth.index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub depth: usize,
    pub index: usize,
}

impl NodeId {
    pub const ONE: NodeId = NodeId { depth: 0, index: 0 };

    pub fn new(depth: usize, index: usize) -> Self {
        NodeId { depth, index }
    }

    pub fn input(j: usize) -> Self {
        NodeId { depth: 0, index: j }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.depth, self.index)
    }
}

impl FromStr for NodeId {
    type Err = NetworkError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || NetworkError::BadId(s.to_string());
        let (d, i) = s.split_once('.').ok_or_else(bad)?;
        Ok(NodeId { depth: d.parse().map_err(|_| bad())?, index: i.parse().map_err(|_| bad())? })
    }
}

/// A parameter edge `child <- parent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub child: NodeId,
    pub parent: NodeId,
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}<-{}", self.child, self.parent)
    }
}

impl FromStr for Edge {
    type Err = NetworkError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (c, p) = s.split_once("<-").ok_or_else(|| NetworkError::BadId(s.to_string()))?;
        Ok(Edge { child: c.trim().parse()?, parent: p.trim().parse()? })
    }
}

macro_rules! string_serde {
    ($t:ty, $what:literal) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }
        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(|_| serde::de::Error::custom(format!(concat!("bad ", $what, " {:?}"), s)))
            }
        }
    };
}

string_serde!(NodeId, "node id");
string_serde!(Edge, "edge key");

/// The activation shared by all non-linear nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Activation {
    Square,
    Polynomial(UniPoly),
    Rational { num: UniPoly, den: UniPoly },
}

impl Activation {
    pub fn polynomial(p: UniPoly) -> Result<Self, NetworkError> {
        if p.degree() < 1 {
            return Err(NetworkError::BadActivation("polynomial activation must have degree >= 1".into()));
        }
        Ok(Activation::Polynomial(p))
    }

    /// `p/q` with `q != 0`, `gcd(p, q) = 1` and `max(deg p, deg q) >= 1`.
    pub fn rational(num: UniPoly, den: UniPoly) -> Result<Self, NetworkError> {
        if num.field() != den.field() {
            return Err(FieldError::MixedField { left: num.field(), right: den.field() }.into());
        }
        if den.is_zero() {
            return Err(NetworkError::BadActivation("denominator is identically zero".into()));
        }
        if num.degree().max(den.degree()) < 1 {
            return Err(NetworkError::BadActivation("activation degree must be >= 1".into()));
        }
        if num.gcd(&den).degree() > 0 {
            return Err(NetworkError::BadActivation("numerator and denominator are not coprime".into()));
        }
        Ok(Activation::Rational { num, den })
    }

    /// `d = max(deg p, deg q)`; 2 for the square.
    pub fn degree(&self) -> u32 {
        match self {
            Activation::Square => 2,
            Activation::Polynomial(p) => p.degree() as u32,
            Activation::Rational { num, den } => num.degree().max(den.degree()) as u32,
        }
    }

    pub fn is_rational(&self) -> bool {
        matches!(self, Activation::Rational { .. })
    }

    /// `None` when the denominator vanishes at `t`.
    pub fn apply(&self, t: &FieldElement) -> Option<FieldElement> {
        match self {
            Activation::Square => Some(t * t),
            Activation::Polynomial(p) => Some(p.eval(t)),
            Activation::Rational { num, den } => {
                let q = den.eval(t);
                if q.is_zero() {
                    None
                } else {
                    Some(&num.eval(t) / &q)
                }
            }
        }
    }

    fn field(&self) -> Option<Field> {
        match self {
            Activation::Square => None,
            Activation::Polynomial(p) => Some(p.field()),
            Activation::Rational { num, .. } => Some(num.field()),
        }
    }

    fn apply_poly(&self, t: &SparsePoly) -> Result<SparsePoly, NetworkError> {
        match self {
            Activation::Square => Ok(t * t),
            Activation::Polynomial(p) => {
                let (field, n) = (t.field(), t.num_vars());
                Ok(p.coeffs().iter().rev().fold(SparsePoly::zero(field, n), |acc, c| {
                    &(&acc * t) + &SparsePoly::constant(field, n, c.clone())
                }))
            }
            Activation::Rational { .. } => Err(NetworkError::RationalActivationNotExpandable),
        }
    }
}

/// Network syntax. Immutable once validated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    field: Field,
    num_inputs: usize,
    activation: Activation,
    layers: Vec<usize>,
    fan_in: BTreeMap<NodeId, Vec<NodeId>>,
    outputs: Vec<NodeId>,
    linear: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NetStats {
    /// `L`, number of non-input nodes.
    pub size: usize,
    /// `S`, largest fan-in.
    pub space: usize,
    /// `l`, number of layers above the inputs.
    pub depth: usize,
    /// `N`, number of parameter edges.
    pub edges: usize,
    pub widths: Vec<usize>,
}

impl NetworkSpec {
    /// Validate and build. Nodes at depth `>= 1` absent from `fan_in` have an
    /// empty fan-in.
    pub fn new(
        field: Field,
        num_inputs: usize,
        activation: Activation,
        layers: Vec<usize>,
        fan_in: BTreeMap<NodeId, Vec<NodeId>>,
        outputs: Vec<NodeId>,
        linear: BTreeSet<NodeId>,
    ) -> Result<Self, NetworkError> {
        if let Some(f) = activation.field() {
            if f != field {
                return Err(FieldError::MixedField { left: field, right: f }.into());
            }
        }
        let found = layers.first().copied().unwrap_or(0);
        if found != num_inputs + 1 {
            return Err(NetworkError::LayerMismatch { expected: num_inputs + 1, found });
        }
        let spec = NetworkSpec { field, num_inputs, activation, layers, fan_in, outputs, linear };
        for (&child, parents) in &spec.fan_in {
            if child.depth == 0 || !spec.contains(child) {
                return Err(NetworkError::UnknownNode(child));
            }
            let mut seen = BTreeSet::new();
            for &parent in parents {
                if !spec.contains(parent) {
                    return Err(NetworkError::DanglingEdge { child, parent });
                }
                if parent.depth >= child.depth {
                    return Err(NetworkError::BadFanInDepth { child, parent });
                }
                if !seen.insert(parent) {
                    return Err(NetworkError::DuplicateEdge { child, parent });
                }
            }
        }
        for &node in &spec.linear {
            if node.depth == 0 || !spec.contains(node) {
                return Err(NetworkError::UnknownNode(node));
            }
        }
        if spec.outputs.is_empty() {
            return Err(NetworkError::EmptyOutputs);
        }
        let top = spec.depth();
        for &node in &spec.outputs {
            if !spec.contains(node) {
                return Err(NetworkError::UnknownNode(node));
            }
            if node.depth != top {
                return Err(NetworkError::OutputDepth { node, depth: top });
            }
        }
        Ok(spec)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        match self.layers.get(id.depth) {
            Some(&w) if id.depth == 0 => id.index < w,
            Some(&w) => id.index >= 1 && id.index <= w,
            None => false,
        }
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn outputs(&self) -> &[NodeId] {
        &self.outputs
    }

    pub fn is_linear(&self, id: NodeId) -> bool {
        self.linear.contains(&id)
    }

    pub fn linear_nodes(&self) -> &BTreeSet<NodeId> {
        &self.linear
    }

    pub fn fan_in(&self, id: NodeId) -> &[NodeId] {
        self.fan_in.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All non-input nodes in `(depth, index)` order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.layers
            .iter()
            .enumerate()
            .skip(1)
            .flat_map(|(d, &w)| (1..=w).map(move |i| NodeId::new(d, i)))
    }

    /// All parameter edges in `(child, parent)` order.
    pub fn edges(&self) -> Vec<Edge> {
        let mut v: Vec<Edge> = self
            .fan_in
            .iter()
            .flat_map(|(&child, ps)| ps.iter().map(move |&parent| Edge { child, parent }))
            .collect();
        v.sort();
        v
    }

    pub fn stats(&self) -> NetStats {
        NetStats {
            size: self.layers[1..].iter().sum(),
            space: self.fan_in.values().map(Vec::len).max().unwrap_or(0),
            depth: self.depth(),
            edges: self.fan_in.values().map(Vec::len).sum(),
            widths: self.layers.clone(),
        }
    }

    fn slot(&self, id: NodeId) -> usize {
        if id.depth == 0 {
            id.index
        } else {
            id.index - 1
        }
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let file: NetworkFile = serde_json::from_str(text).map_err(|e| NetworkError::Json(e.to_string()))?;
        file.into_spec()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("network serializes")
    }

    pub fn to_file(&self) -> NetworkFile {
        let coeffs = |p: &UniPoly| p.coeffs().iter().map(|c| c.to_string()).collect();
        NetworkFile {
            field: self.field,
            num_inputs: self.num_inputs,
            activation: match &self.activation {
                Activation::Square => ActivationFile::Square,
                Activation::Polynomial(p) => ActivationFile::Polynomial { coeffs: coeffs(p) },
                Activation::Rational { num, den } => ActivationFile::Rational { num: coeffs(num), den: coeffs(den) },
            },
            layers: self.layers.clone(),
            fan_in: OrderedMap(self.fan_in.iter().map(|(k, v)| (*k, v.clone())).collect()),
            outputs: self.outputs.clone(),
            linear: self.linear.iter().copied().collect(),
        }
    }
}

/// A JSON object whose keys are written in the stored order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderedMap<K, V>(pub Vec<(K, V)>);

impl<K: Serialize, V: Serialize> Serialize for OrderedMap<K, V> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

impl<'de, K: Deserialize<'de>, V: Deserialize<'de>> Deserialize<'de> for OrderedMap<K, V> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V2<K, V>(std::marker::PhantomData<(K, V)>);
        impl<'de, K: Deserialize<'de>, V: Deserialize<'de>> Visitor<'de> for V2<K, V> {
            type Value = OrderedMap<K, V>;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut a: A) -> Result<Self::Value, A::Error> {
                let mut v = Vec::new();
                while let Some(e) = a.next_entry()? {
                    v.push(e);
                }
                Ok(OrderedMap(v))
            }
        }
        d.deserialize_map(V2(std::marker::PhantomData))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ActivationFile {
    Square,
    Polynomial { coeffs: Vec<String> },
    Rational { num: Vec<String>, den: Vec<String> },
}

/// On-disk network format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub field: Field,
    pub num_inputs: usize,
    pub activation: ActivationFile,
    pub layers: Vec<usize>,
    pub fan_in: OrderedMap<NodeId, Vec<NodeId>>,
    pub outputs: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub linear: Vec<NodeId>,
}

impl NetworkFile {
    pub fn into_spec(self) -> Result<NetworkSpec, NetworkError> {
        let field = self.field;
        let uni = |cs: &[String]| -> Result<UniPoly, NetworkError> {
            let v = cs.iter().map(|c| field.parse(c)).collect::<Result<Vec<_>, _>>()?;
            Ok(UniPoly::new(field, v)?)
        };
        let activation = match &self.activation {
            ActivationFile::Square => Activation::Square,
            ActivationFile::Polynomial { coeffs } => Activation::polynomial(uni(coeffs)?)?,
            ActivationFile::Rational { num, den } => Activation::rational(uni(num)?, uni(den)?)?,
        };
        let mut fan_in = BTreeMap::new();
        for (k, v) in self.fan_in.0 {
            if fan_in.insert(k, v).is_some() {
                return Err(NetworkError::BadId(format!("fan_in key {k} repeated")));
            }
        }
        NetworkSpec::new(
            field,
            self.num_inputs,
            activation,
            self.layers,
            fan_in,
            self.outputs,
            self.linear.into_iter().collect(),
        )
    }
}

/// Incremental construction of a network, layer by layer.
#[derive(Debug, Clone)]
pub struct NetworkBuilder {
    field: Field,
    num_inputs: usize,
    activation: Activation,
    layers: Vec<Vec<(Vec<NodeId>, bool)>>,
}

impl NetworkBuilder {
    pub fn new(field: Field, num_inputs: usize, activation: Activation) -> Self {
        NetworkBuilder { field, num_inputs, activation, layers: vec![Vec::new()] }
    }

    /// Append a node at `depth` and return its id.
    pub fn add(&mut self, depth: usize, fan_in: Vec<NodeId>, linear: bool) -> NodeId {
        assert!(depth >= 1, "depth-0 nodes are fixed");
        while self.layers.len() <= depth {
            self.layers.push(Vec::new());
        }
        self.layers[depth].push((fan_in, linear));
        NodeId::new(depth, self.layers[depth].len())
    }

    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn build(self, outputs: Vec<NodeId>) -> Result<NetworkSpec, NetworkError> {
        let mut widths = vec![self.num_inputs + 1];
        let mut fan_in = BTreeMap::new();
        let mut linear = BTreeSet::new();
        for (d, layer) in self.layers.into_iter().enumerate().skip(1) {
            widths.push(layer.len());
            for (i, (f, lin)) in layer.into_iter().enumerate() {
                let id = NodeId::new(d, i + 1);
                if lin {
                    linear.insert(id);
                }
                if !f.is_empty() {
                    fan_in.insert(id, f);
                }
            }
        }
        NetworkSpec::new(self.field, self.num_inputs, self.activation, widths, fan_in, outputs, linear)
    }
}

/// Parameter values, one per edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instantiation {
    params: BTreeMap<Edge, FieldElement>,
}

#[derive(Serialize, Deserialize)]
struct InstantiationFile {
    params: OrderedMap<Edge, String>,
}

impl Instantiation {
    /// Check that `params` covers exactly the edges of `spec`.
    pub fn new(spec: &NetworkSpec, params: BTreeMap<Edge, FieldElement>) -> Result<Self, NetworkError> {
        let edges: BTreeSet<Edge> = spec.edges().into_iter().collect();
        for (e, v) in &params {
            if !edges.contains(e) {
                return Err(NetworkError::ExtraParam(*e));
            }
            if v.field() != spec.field() {
                return Err(FieldError::MixedField { left: spec.field(), right: v.field() }.into());
            }
        }
        if let Some(e) = edges.iter().find(|e| !params.contains_key(e)) {
            return Err(NetworkError::MissingParam(*e));
        }
        Ok(Instantiation { params })
    }

    pub fn from_fn(spec: &NetworkSpec, mut f: impl FnMut(Edge) -> FieldElement) -> Self {
        Instantiation { params: spec.edges().into_iter().map(|e| (e, f(e))).collect() }
    }

    /// Independent uniform values (see [`Field::sample`]).
    pub fn random<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Self {
        let field = spec.field();
        Self::from_fn(spec, |_| field.sample(rng))
    }

    pub fn get(&self, e: &Edge) -> Option<&FieldElement> {
        self.params.get(e)
    }

    pub fn params(&self) -> &BTreeMap<Edge, FieldElement> {
        &self.params
    }

    pub fn weight(&self, child: NodeId, parent: NodeId) -> &FieldElement {
        &self.params[&Edge { child, parent }]
    }

    pub fn from_json(spec: &NetworkSpec, text: &str) -> Result<Self, NetworkError> {
        let file: InstantiationFile = serde_json::from_str(text).map_err(|e| NetworkError::Json(e.to_string()))?;
        let mut params = BTreeMap::new();
        for (e, v) in file.params.0 {
            params.insert(e, spec.field().parse(&v)?);
        }
        Self::new(spec, params)
    }

    pub fn to_json(&self) -> String {
        let file = InstantiationFile {
            params: OrderedMap(self.params.iter().map(|(e, v)| (*e, v.to_string())).collect()),
        };
        serde_json::to_string_pretty(&file).expect("instantiation serializes")
    }
}

/// Value of one node: a field element, or undefined because of the recorded
/// node whose denominator vanished.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeValue {
    Defined(FieldElement),
    Undefined(NodeId),
}

impl NodeValue {
    pub fn defined(&self) -> Option<&FieldElement> {
        match self {
            NodeValue::Defined(v) => Some(v),
            NodeValue::Undefined(_) => None,
        }
    }
}

impl fmt::Display for NodeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeValue::Defined(v) => write!(f, "{v}"),
            NodeValue::Undefined(n) => write!(f, "undefined@{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalTrace {
    values: Vec<Vec<NodeValue>>,
    outputs: Vec<NodeValue>,
}

impl EvalTrace {
    pub fn value(&self, id: NodeId) -> &NodeValue {
        let slot = if id.depth == 0 { id.index } else { id.index - 1 };
        &self.values[id.depth][slot]
    }

    pub fn outputs(&self) -> &[NodeValue] {
        &self.outputs
    }

    /// Output values if every output is defined.
    pub fn output_values(&self) -> Option<Vec<FieldElement>> {
        self.outputs.iter().map(|v| v.defined().cloned()).collect()
    }

    /// Least node (in `(depth, index)` order) whose own denominator vanished.
    pub fn first_undefined(&self) -> Option<NodeId> {
        self.values.iter().flatten().find_map(|v| match v {
            NodeValue::Undefined(n) => Some(*n),
            NodeValue::Defined(_) => None,
        })
    }

    pub fn all_defined(&self) -> bool {
        self.first_undefined().is_none()
    }
}

fn check_inputs(spec: &NetworkSpec, inst: &Instantiation, point: &[FieldElement]) -> Result<(), NetworkError> {
    if point.len() != spec.num_inputs() {
        return Err(NetworkError::InputArity { expected: spec.num_inputs(), found: point.len() });
    }
    if let Some(x) = point.iter().find(|x| x.field() != spec.field()) {
        return Err(FieldError::MixedField { left: spec.field(), right: x.field() }.into());
    }
    if let Some(e) = spec.edges().into_iter().find(|e| inst.get(e).is_none()) {
        return Err(NetworkError::MissingParam(e));
    }
    Ok(())
}

/// Evaluate every node at `point`. A node is undefined iff a fan-in value is
/// undefined or the activation denominator vanishes on its affine
/// combination; the recorded culprit is the least such node reachable.
pub fn net_eval(spec: &NetworkSpec, inst: &Instantiation, point: &[FieldElement]) -> Result<EvalTrace, NetworkError> {
    check_inputs(spec, inst, point)?;
    let field = spec.field();
    let mut values: Vec<Vec<NodeValue>> = Vec::with_capacity(spec.layers.len());
    let mut l0 = vec![NodeValue::Defined(field.one())];
    l0.extend(point.iter().cloned().map(NodeValue::Defined));
    values.push(l0);
    for (d, &w) in spec.layers.iter().enumerate().skip(1) {
        let mut layer = Vec::with_capacity(w);
        for i in 1..=w {
            let id = NodeId::new(d, i);
            let mut acc = field.zero();
            let mut culprit: Option<NodeId> = None;
            for &p in spec.fan_in(id) {
                match &values[p.depth][spec.slot(p)] {
                    NodeValue::Defined(v) => acc = &acc + &(inst.weight(id, p) * v),
                    NodeValue::Undefined(c) => culprit = Some(culprit.map_or(*c, |x| x.min(*c))),
                }
            }
            let v = match culprit {
                Some(c) => NodeValue::Undefined(c),
                None if spec.is_linear(id) => NodeValue::Defined(acc),
                None => match spec.activation.apply(&acc) {
                    Some(v) => NodeValue::Defined(v),
                    None => NodeValue::Undefined(id),
                },
            };
            layer.push(v);
        }
        values.push(layer);
    }
    let outputs = spec.outputs.iter().map(|o| values[o.depth][spec.slot(*o)].clone()).collect();
    Ok(EvalTrace { values, outputs })
}

/// [`net_eval`] over many points in parallel; results follow input order.
pub fn net_eval_batch(
    spec: &NetworkSpec,
    inst: &Instantiation,
    points: &[Vec<FieldElement>],
) -> Result<Vec<EvalTrace>, NetworkError> {
    points.par_iter().map(|x| net_eval(spec, inst, x)).collect()
}

/// Limits on symbolic expansion in the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpandBudget {
    pub max_edges: usize,
    /// Cap on `d^(l+1)`.
    pub max_degree: u64,
}

impl Default for ExpandBudget {
    fn default() -> Self {
        ExpandBudget { max_edges: 12, max_degree: 64 }
    }
}

/// Expand every node as a polynomial in `X_1..X_n` for a fixed instantiation.
pub fn expand_inputs(spec: &NetworkSpec, inst: &Instantiation) -> Result<BTreeMap<NodeId, SparsePoly>, NetworkError> {
    if spec.activation.is_rational() {
        return Err(NetworkError::RationalActivationNotExpandable);
    }
    let (field, n) = (spec.field(), spec.num_inputs());
    let mut polys: BTreeMap<NodeId, SparsePoly> = BTreeMap::new();
    polys.insert(NodeId::ONE, SparsePoly::one(field, n));
    for j in 1..=n {
        polys.insert(NodeId::input(j), SparsePoly::var(field, n, j - 1));
    }
    for id in spec.nodes() {
        let mut acc = SparsePoly::zero(field, n);
        for &p in spec.fan_in(id) {
            let w = inst.get(&Edge { child: id, parent: p }).ok_or(NetworkError::MissingParam(Edge { child: id, parent: p }))?;
            acc = &acc + &polys[&p].scale(w);
        }
        let v = if spec.is_linear(id) { acc } else { spec.activation.apply_poly(&acc)? };
        polys.insert(id, v);
    }
    Ok(polys)
}

/// One polynomial in `X_1..X_n` per output, in output order.
pub fn net_expand(spec: &NetworkSpec, inst: &Instantiation) -> Result<Vec<SparsePoly>, NetworkError> {
    let all = expand_inputs(spec, inst)?;
    Ok(spec.outputs.iter().map(|o| all[o].clone()).collect())
}

/// Symbolic expansion: each node's polynomial grouped by input monomial
/// `X^theta`, with coefficients `Q^(theta)` in the edge variables.
#[derive(Debug, Clone)]
pub struct ParamExpansion {
    /// Edge variable order; edge `k` is variable `x{k+1}` of every coefficient.
    pub edges: Vec<Edge>,
    pub nodes: BTreeMap<NodeId, BTreeMap<Vec<u32>, SparsePoly>>,
}

impl ParamExpansion {
    /// Largest total degree among the coefficients of `id`.
    pub fn param_degree(&self, id: NodeId) -> i64 {
        self.nodes[&id].values().map(SparsePoly::total_degree).max().unwrap_or(-1)
    }
}

pub fn expand_parameters(spec: &NetworkSpec, budget: ExpandBudget) -> Result<ParamExpansion, NetworkError> {
    if spec.activation.is_rational() {
        return Err(NetworkError::RationalActivationNotExpandable);
    }
    let edges = spec.edges();
    let nedges = edges.len();
    if nedges > budget.max_edges {
        return Err(NetworkError::BudgetExceeded(format!("{nedges} edges > {}", budget.max_edges)));
    }
    let d = spec.activation.degree() as u64;
    let deg = d.checked_pow(spec.depth() as u32 + 1).unwrap_or(u64::MAX);
    if deg > budget.max_degree {
        return Err(NetworkError::BudgetExceeded(format!("d^(l+1) = {deg} > {}", budget.max_degree)));
    }
    let (field, n) = (spec.field(), spec.num_inputs());
    let nv = nedges + n;
    let edge_var: BTreeMap<Edge, usize> = edges.iter().enumerate().map(|(k, e)| (*e, k)).collect();
    let mut polys: BTreeMap<NodeId, SparsePoly> = BTreeMap::new();
    polys.insert(NodeId::ONE, SparsePoly::one(field, nv));
    for j in 1..=n {
        polys.insert(NodeId::input(j), SparsePoly::var(field, nv, nedges + j - 1));
    }
    for id in spec.nodes() {
        let mut acc = SparsePoly::zero(field, nv);
        for &p in spec.fan_in(id) {
            let a = SparsePoly::var(field, nv, edge_var[&Edge { child: id, parent: p }]);
            acc = &acc + &(&a * &polys[&p]);
        }
        let v = if spec.is_linear(id) { acc } else { spec.activation.apply_poly(&acc)? };
        polys.insert(id, v);
    }
    let mut nodes = BTreeMap::new();
    for id in spec.nodes() {
        let mut groups: BTreeMap<Vec<u32>, Vec<(Vec<u32>, FieldElement)>> = BTreeMap::new();
        for (e, c) in polys[&id].terms() {
            groups.entry(e[nedges..].to_vec()).or_default().push((e[..nedges].to_vec(), c.clone()));
        }
        let coeffs = groups
            .into_iter()
            .map(|(theta, ts)| Ok((theta, SparsePoly::from_terms(field, nedges, ts)?)))
            .collect::<Result<BTreeMap<_, _>, PolyError>>()?;
        nodes.insert(id, coeffs);
    }
    Ok(ParamExpansion { edges, nodes })
}

/// Shape of a random network.
#[derive(Debug, Clone, Copy)]
pub struct RandomShape {
    pub num_inputs: usize,
    pub depth: usize,
    pub max_width: usize,
    pub max_fan_in: usize,
}

/// Random layered network. Every node of depth `i` reads at least one node of
/// depth `i-1`; all top-layer nodes are outputs.
pub fn random_network<R: Rng + ?Sized>(
    field: Field,
    activation: Activation,
    shape: RandomShape,
    rng: &mut R,
) -> Result<NetworkSpec, NetworkError> {
    assert!(shape.depth >= 1 && shape.max_width >= 1 && shape.max_fan_in >= 1);
    let mut b = NetworkBuilder::new(field, shape.num_inputs, activation);
    let mut pool: Vec<NodeId> = (0..=shape.num_inputs).map(NodeId::input).collect();
    let mut prev = pool.clone();
    for d in 1..=shape.depth {
        let w = rng.random_range(1..=shape.max_width);
        let mut layer = Vec::with_capacity(w);
        for _ in 0..w {
            let anchor = prev[rng.random_range(0..prev.len())];
            let others: Vec<NodeId> = pool.iter().copied().filter(|&x| x != anchor).collect();
            let k = rng.random_range(1..=shape.max_fan_in.min(others.len() + 1));
            let mut f = vec![anchor];
            f.extend(sample(rng, others.len(), k - 1).into_iter().map(|i| others[i]));
            f.sort();
            layer.push(b.add(d, f, false));
        }
        pool.extend(layer.iter().copied());
        prev = layer;
    }
    b.build(prev)
}

/// Random coprime `p/q` with `max(deg p, deg q) = d` for `d` uniform in
/// `1..=max_degree`.
pub fn random_rational_activation<R: Rng + ?Sized>(field: Field, max_degree: u32, rng: &mut R) -> Activation {
    loop {
        let d = rng.random_range(1..=max_degree) as usize;
        let dp = rng.random_range(0..=d);
        let dq = if dp == d { rng.random_range(0..=d) } else { d };
        let poly = |deg: usize, rng: &mut R| {
            let mut c: Vec<FieldElement> = (0..=deg).map(|_| field.sample(rng)).collect();
            if c[deg].is_zero() {
                c[deg] = field.one();
            }
            UniPoly::new(field, c).expect("same field")
        };
        let p = poly(dp, rng);
        let q = poly(dq, rng);
        if let Ok(a) = Activation::rational(p, q) {
            return a;
        }
    }
}
