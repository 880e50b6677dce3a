use std::collections::{HashMap, HashSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Image;
use crate::error::{Error, Result};

/// Input node ids: x, y, bias.
pub const INPUT_X: u32 = 0;
pub const INPUT_Y: u32 = 1;
pub const INPUT_BIAS: u32 = 2;
const NUM_INPUTS: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sine,
    Sigmoid,
    Gaussian,
    Linear,
}

impl Activation {
    pub const ALL: [Activation; 4] = [Activation::Sine, Activation::Sigmoid, Activation::Gaussian, Activation::Linear];

    pub fn apply(self, x: f64, p: &ActivationParams) -> f64 {
        match self {
            Activation::Sine => (x * p.sine_frequency).sin(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Gaussian => (-x * x * p.gaussian_sharpness).exp(),
            Activation::Linear => x.clamp(-p.linear_clamp, p.linear_clamp),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Shape constants of the hidden-node activations. Stored in the genome so
/// rendering depends on nothing else.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActivationParams {
    pub sine_frequency: f64,
    pub gaussian_sharpness: f64,
    pub linear_clamp: f64,
}

impl Default for ActivationParams {
    fn default() -> Self {
        ActivationParams { sine_frequency: std::f64::consts::PI, gaussian_sharpness: 2.0, linear_clamp: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CppnConfig {
    /// New connection weights are uniform on ±this.
    pub init_weight_range: f64,
    /// Weights are clamped to ±this after perturbation.
    pub weight_limit: f64,
    pub p_perturb_weights: f64,
    /// Per-connection probability once weight perturbation fires.
    pub p_perturb_each: f64,
    pub perturb_sigma: f64,
    pub p_add_connection: f64,
    pub p_add_node: f64,
    pub p_swap_activation: f64,
    /// Random (source, target) draws before add-connection gives up.
    pub add_connection_attempts: usize,
    pub activation: ActivationParams,
}

impl Default for CppnConfig {
    fn default() -> Self {
        CppnConfig {
            init_weight_range: 3.0,
            weight_limit: 3.0,
            p_perturb_weights: 0.8,
            p_perturb_each: 0.1,
            perturb_sigma: 0.5,
            p_add_connection: 0.09,
            p_add_node: 0.05,
            p_swap_activation: 0.05,
            add_connection_attempts: 32,
            activation: ActivationParams::default(),
        }
    }
}

impl CppnConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_perturb_weights", self.p_perturb_weights),
            ("p_perturb_each", self.p_perturb_each),
            ("p_add_connection", self.p_add_connection),
            ("p_add_node", self.p_add_node),
            ("p_swap_activation", self.p_swap_activation),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Range(format!("{name} = {p} is not a probability")));
            }
        }
        if !(self.init_weight_range > 0.0 && self.weight_limit > 0.0 && self.perturb_sigma >= 0.0) {
            return Err(Error::Range("weight ranges must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Input,
    Output,
    Hidden,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u32,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub source: u32,
    pub target: u32,
    pub weight: f64,
    pub enabled: bool,
    pub innovation: u64,
}

/// Feed-forward CPPN. Outputs are squashed with a sigmoid onto [0, 255].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CppnGenome {
    channels: usize,
    nodes: Vec<Node>,
    connections: Vec<Connection>,
    next_node: u32,
    next_innovation: u64,
    activation: ActivationParams,
}

#[derive(Deserialize)]
struct CppnFile {
    channels: usize,
    nodes: Vec<Node>,
    connections: Vec<Connection>,
    next_node: u32,
    next_innovation: u64,
    #[serde(default)]
    activation: ActivationParams,
}

impl<'de> Deserialize<'de> for CppnGenome {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = CppnFile::deserialize(d)?;
        let g = CppnGenome {
            channels: f.channels,
            nodes: f.nodes,
            connections: f.connections,
            next_node: f.next_node,
            next_innovation: f.next_innovation,
            activation: f.activation,
        };
        g.validate().map_err(serde::de::Error::custom)?;
        Ok(g)
    }
}

impl CppnGenome {
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn connections(&self) -> &[Connection] {
        &self.connections
    }

    pub fn hidden_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Hidden).count()
    }

    pub fn output_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Output).map(|n| n.id)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }

    /// Build a genome from explicit parts, checking every structural invariant.
    pub fn from_parts(
        channels: usize,
        hidden: &[(u32, Activation)],
        connections: Vec<Connection>,
        activation: ActivationParams,
    ) -> Result<Self> {
        let mut nodes = base_nodes(channels);
        nodes.extend(hidden.iter().map(|&(id, a)| Node { id, kind: NodeKind::Hidden, activation: Some(a) }));
        let next_node = nodes.iter().map(|n| n.id + 1).max().unwrap_or(0);
        let next_innovation = connections.iter().map(|c| c.innovation + 1).max().unwrap_or(0);
        let g = CppnGenome { channels, nodes, connections, next_node, next_innovation, activation };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Format(format!("invalid CPPN genome: {m}")));
        if self.channels != 1 && self.channels != 3 {
            return bad(format!("{} output channels", self.channels));
        }
        let mut kinds = HashMap::new();
        for n in &self.nodes {
            if kinds.insert(n.id, n.kind).is_some() {
                return bad(format!("duplicate node id {}", n.id));
            }
            if n.id >= self.next_node {
                return bad(format!("node id {} not below next_node {}", n.id, self.next_node));
            }
            if (n.kind == NodeKind::Hidden) != n.activation.is_some() {
                return bad(format!("node {} activation does not match its kind", n.id));
            }
        }
        let expected = base_nodes(self.channels);
        for e in &expected {
            if kinds.get(&e.id) != Some(&e.kind) {
                return bad(format!("node {} should be {:?}", e.id, e.kind));
            }
        }
        let fixed = expected.len();
        if self.nodes.iter().filter(|n| n.kind != NodeKind::Hidden).count() != fixed {
            return bad("unexpected input or output nodes".into());
        }
        let mut innovations = HashSet::new();
        let mut pairs = HashSet::new();
        for c in &self.connections {
            match (kinds.get(&c.source), kinds.get(&c.target)) {
                (Some(s), Some(t)) if *s != NodeKind::Output && *t != NodeKind::Input => {}
                _ => return bad(format!("connection {}→{} has an invalid endpoint", c.source, c.target)),
            }
            if !innovations.insert(c.innovation) || c.innovation >= self.next_innovation {
                return bad(format!("innovation {} reused or ahead of the counter", c.innovation));
            }
            if !pairs.insert((c.source, c.target)) {
                return bad(format!("duplicate connection {}→{}", c.source, c.target));
            }
            if !c.weight.is_finite() {
                return bad(format!("non-finite weight on {}→{}", c.source, c.target));
            }
        }
        if self.topological_order().is_none() {
            return bad("connection graph has a cycle".into());
        }
        Ok(())
    }

    /// Node indices in evaluation order, or None if the graph has a cycle.
    /// Disabled connections count as edges so re-enabling one can never
    /// introduce a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let index: HashMap<u32, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let mut indegree = vec![0usize; self.nodes.len()];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for c in &self.connections {
            let (s, t) = (index[&c.source], index[&c.target]);
            out[s].push(t);
            indegree[t] += 1;
        }
        let mut ready: Vec<usize> = (0..self.nodes.len()).filter(|&i| indegree[i] == 0).rev().collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(i) = ready.pop() {
            order.push(i);
            for &t in &out[i] {
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    ready.push(t);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    fn reaches(&self, from: u32, to: u32) -> bool {
        let mut stack = vec![from];
        let mut seen = HashSet::new();
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if seen.insert(n) {
                stack.extend(self.connections.iter().filter(|c| c.source == n).map(|c| c.target));
            }
        }
        false
    }

    fn push_connection(&mut self, source: u32, target: u32, weight: f64) {
        self.connections.push(Connection { source, target, weight, enabled: true, innovation: self.next_innovation });
        self.next_innovation += 1;
    }
}

fn base_nodes(channels: usize) -> Vec<Node> {
    let mut nodes: Vec<Node> = (0..NUM_INPUTS).map(|id| Node { id, kind: NodeKind::Input, activation: None }).collect();
    nodes.extend((0..channels as u32).map(|k| Node { id: NUM_INPUTS + k, kind: NodeKind::Output, activation: None }));
    nodes
}

/// Minimal topology: every input connected to every output, no hidden nodes.
pub fn cppn_init<R: Rng + ?Sized>(channels: usize, cfg: &CppnConfig, rng: &mut R) -> Result<CppnGenome> {
    if channels != 1 && channels != 3 {
        return Err(Error::Range(format!("CPPN needs 1 or 3 output channels, got {channels}")));
    }
    cfg.validate()?;
    let nodes = base_nodes(channels);
    let mut g = CppnGenome {
        channels,
        next_node: nodes.len() as u32,
        nodes,
        connections: Vec::new(),
        next_innovation: 0,
        activation: cfg.activation.clone(),
    };
    for out in 0..channels as u32 {
        for input in 0..NUM_INPUTS {
            let w = rng.random_range(-cfg.init_weight_range..=cfg.init_weight_range);
            g.push_connection(input, NUM_INPUTS + out, w);
        }
    }
    Ok(g)
}

/// Each operator fires independently with its configured probability, in the
/// order weight perturbation, add-connection, add-node, activation swap.
pub fn cppn_mutate<R: Rng + ?Sized>(g: &CppnGenome, cfg: &CppnConfig, rng: &mut R) -> CppnGenome {
    let mut out = g.clone();
    if rng.random::<f64>() < cfg.p_perturb_weights {
        perturb_weights(&mut out, cfg, rng);
    }
    if rng.random::<f64>() < cfg.p_add_connection {
        add_connection(&mut out, cfg, rng);
    }
    if rng.random::<f64>() < cfg.p_add_node {
        add_node(&mut out, rng);
    }
    if rng.random::<f64>() < cfg.p_swap_activation {
        swap_activation(&mut out, rng);
    }
    out
}

fn perturb_weights<R: Rng + ?Sized>(g: &mut CppnGenome, cfg: &CppnConfig, rng: &mut R) {
    let normal = Normal::new(0.0, cfg.perturb_sigma).expect("sigma validated");
    for c in &mut g.connections {
        if rng.random::<f64>() < cfg.p_perturb_each {
            c.weight = (c.weight + normal.sample(rng)).clamp(-cfg.weight_limit, cfg.weight_limit);
        }
    }
}

/// Returns false when no valid pair was found within the attempt budget.
pub(crate) fn add_connection<R: Rng + ?Sized>(g: &mut CppnGenome, cfg: &CppnConfig, rng: &mut R) -> bool {
    let sources: Vec<u32> = g.nodes.iter().filter(|n| n.kind != NodeKind::Output).map(|n| n.id).collect();
    let targets: Vec<u32> = g.nodes.iter().filter(|n| n.kind != NodeKind::Input).map(|n| n.id).collect();
    for _ in 0..cfg.add_connection_attempts {
        let s = *sources.choose(rng).expect("inputs always exist");
        let t = *targets.choose(rng).expect("outputs always exist");
        if s == t || g.connections.iter().any(|c| c.source == s && c.target == t) || g.reaches(t, s) {
            continue;
        }
        let w = rng.random_range(-cfg.init_weight_range..=cfg.init_weight_range);
        g.push_connection(s, t, w);
        return true;
    }
    false
}

/// Split a random enabled connection a→b into a→new (weight 1) and
/// new→b (old weight); the old connection is disabled.
pub(crate) fn add_node<R: Rng + ?Sized>(g: &mut CppnGenome, rng: &mut R) -> bool {
    let enabled: Vec<usize> = (0..g.connections.len()).filter(|&i| g.connections[i].enabled).collect();
    let Some(&i) = enabled.choose(rng) else {
        return false;
    };
    let activation = *Activation::ALL.choose(rng).expect("non-empty");
    let id = g.next_node;
    g.next_node += 1;
    g.nodes.push(Node { id, kind: NodeKind::Hidden, activation: Some(activation) });
    let (source, target, weight) = {
        let c = &mut g.connections[i];
        c.enabled = false;
        (c.source, c.target, c.weight)
    };
    g.push_connection(source, id, 1.0);
    g.push_connection(id, target, weight);
    true
}

fn swap_activation<R: Rng + ?Sized>(g: &mut CppnGenome, rng: &mut R) -> bool {
    let hidden: Vec<usize> = (0..g.nodes.len()).filter(|&i| g.nodes[i].kind == NodeKind::Hidden).collect();
    let Some(&i) = hidden.choose(rng) else {
        return false;
    };
    let current = g.nodes[i].activation;
    let others: Vec<Activation> = Activation::ALL.into_iter().filter(|a| Some(*a) != current).collect();
    g.nodes[i].activation = others.choose(rng).copied();
    true
}

/// Map pixel index `i` of `n` onto [−1, 1].
#[inline]
fn coordinate(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        2.0 * i as f64 / (n - 1) as f64 - 1.0
    }
}

struct Plan {
    order: Vec<usize>,
    incoming: Vec<Vec<(usize, f64)>>,
    activation: Vec<Option<Activation>>,
    kinds: Vec<NodeKind>,
    ids: Vec<u32>,
    outputs: Vec<usize>,
}

impl CppnGenome {
    fn plan(&self) -> Plan {
        let index: HashMap<u32, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let mut incoming = vec![Vec::new(); self.nodes.len()];
        for c in self.connections.iter().filter(|c| c.enabled) {
            incoming[index[&c.target]].push((index[&c.source], c.weight));
        }
        let mut outputs: Vec<usize> =
            (0..self.nodes.len()).filter(|&i| self.nodes[i].kind == NodeKind::Output).collect();
        outputs.sort_by_key(|&i| self.nodes[i].id);
        Plan {
            order: self.topological_order().expect("genome is acyclic"),
            incoming,
            activation: self.nodes.iter().map(|n| n.activation).collect(),
            kinds: self.nodes.iter().map(|n| n.kind).collect(),
            ids: self.nodes.iter().map(|n| n.id).collect(),
            outputs,
        }
    }

    /// Raw output values in (0, 1) for one coordinate pair.
    pub fn query(&self, x: f64, y: f64) -> Vec<f64> {
        let plan = self.plan();
        let mut values = vec![0.0; self.nodes.len()];
        self.eval(&plan, x, y, &mut values);
        plan.outputs.iter().map(|&o| values[o]).collect()
    }

    fn eval(&self, plan: &Plan, x: f64, y: f64, values: &mut [f64]) {
        for &i in &plan.order {
            values[i] = match plan.kinds[i] {
                NodeKind::Input => match plan.ids[i] {
                    INPUT_X => x,
                    INPUT_Y => y,
                    _ => 1.0,
                },
                kind => {
                    let sum: f64 = plan.incoming[i].iter().map(|&(s, w)| w * values[s]).sum();
                    match kind {
                        NodeKind::Output => sigmoid(sum),
                        _ => plan.activation[i].expect("hidden nodes carry an activation").apply(sum, &self.activation),
                    }
                }
            };
        }
    }
}

/// Render at any resolution. Column j maps to x, row i to y, both on [−1, 1].
pub fn cppn_render(g: &CppnGenome, width: usize, height: usize) -> Image {
    let plan = g.plan();
    let mut values = vec![0.0; g.nodes.len()];
    let mut data = Vec::with_capacity(width * height * g.channels);
    for i in 0..height {
        let y = coordinate(i, height);
        for j in 0..width {
            g.eval(&plan, coordinate(j, width), y, &mut values);
            data.extend(plan.outputs.iter().map(|&o| (values[o] * 255.0).round().clamp(0.0, 255.0) as u8));
        }
    }
    Image::new(width, height, g.channels, data).expect("render dims are consistent")
}
