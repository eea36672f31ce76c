//! Symmetric string diagrams as acyclic hypergraphs with ordered boundaries.
//!
//! Wires are typed vertices used exactly once on each side; nodes are generator
//! occurrences. Symmetries are boundary rewirings, so two diagrams are equal in the
//! free symmetric monoidal category exactly when their hypergraphs are isomorphic
//! relative to the boundary.

use std::cmp::Reverse;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signature::Polygraph;

pub type WireId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiagramError {
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("undeclared type `{0}`")]
    UndeclaredType(String),
    #[error("generator `{generator}` expects {expected} inputs, got {found}")]
    Arity {
        generator: String,
        expected: usize,
        found: usize,
    },
    #[error("type mismatch at position {index}: expected `{expected}`, found `{found}`")]
    TypeMismatch {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("boundary length mismatch: {left} vs {right}")]
    BoundaryLength { left: usize, right: usize },
    #[error("wire {wire} has {producers} producers and {consumers} consumers")]
    Endpoints {
        wire: WireId,
        producers: usize,
        consumers: usize,
    },
    #[error("wire {0} out of range")]
    UnknownWire(WireId),
    #[error("cycle through nodes {0:?}")]
    Cycle(Vec<usize>),
    #[error("diagrams live over different polygraphs")]
    PolygraphMismatch,
    #[error("malformed diagram file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub gen: String,
    pub ins: Vec<WireId>,
    pub outs: Vec<WireId>,
}

/// An immutable string diagram. Wire ids are renumbered on every construction.
#[derive(Debug, Clone)]
pub struct Diagram {
    sig: Arc<Polygraph>,
    wires: Vec<String>,
    nodes: Vec<Node>,
    inputs: Vec<WireId>,
    outputs: Vec<WireId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum End {
    Boundary(usize),
    Port(usize, usize),
}

/// Incremental construction of a diagram over a fixed polygraph.
#[derive(Debug, Clone)]
pub struct Builder {
    sig: Arc<Polygraph>,
    wires: Vec<String>,
    nodes: Vec<Node>,
}

impl Builder {
    pub fn new(sig: Arc<Polygraph>) -> Self {
        Builder {
            sig,
            wires: vec![],
            nodes: vec![],
        }
    }

    pub fn sig(&self) -> &Arc<Polygraph> {
        &self.sig
    }

    pub fn wire(&mut self, ty: &str) -> Result<WireId, DiagramError> {
        if !self.sig.has_object(ty) {
            return Err(DiagramError::UndeclaredType(ty.to_string()));
        }
        self.wires.push(ty.to_string());
        Ok(self.wires.len() - 1)
    }

    pub fn wires(&mut self, types: &[String]) -> Result<Vec<WireId>, DiagramError> {
        types.iter().map(|t| self.wire(t)).collect()
    }

    pub fn wire_type(&self, w: WireId) -> &str {
        &self.wires[w]
    }

    /// Applies a generator to existing wires and returns fresh output wires.
    pub fn node(&mut self, gen: &str, ins: &[WireId]) -> Result<Vec<WireId>, DiagramError> {
        let g = self
            .sig
            .generator(gen)
            .ok_or_else(|| DiagramError::UnknownGenerator(gen.to_string()))?
            .clone();
        check_types(&g.inputs, ins.iter().map(|&w| self.wires[w].as_str()), &g.name)?;
        let outs = g.outputs.iter().map(|t| self.wire(t)).collect::<Result<Vec<_>, _>>()?;
        self.nodes.push(Node {
            gen: g.name,
            ins: ins.to_vec(),
            outs: outs.clone(),
        });
        Ok(outs)
    }

    /// Adds a node with explicitly chosen output wires.
    pub fn node_with(&mut self, gen: &str, ins: &[WireId], outs: &[WireId]) -> Result<(), DiagramError> {
        let g = self
            .sig
            .generator(gen)
            .ok_or_else(|| DiagramError::UnknownGenerator(gen.to_string()))?;
        check_types(&g.inputs, ins.iter().map(|&w| self.wires[w].as_str()), &g.name)?;
        check_types(&g.outputs, outs.iter().map(|&w| self.wires[w].as_str()), &g.name)?;
        self.nodes.push(Node {
            gen: gen.to_string(),
            ins: ins.to_vec(),
            outs: outs.to_vec(),
        });
        Ok(())
    }

    /// Copies `d` into the builder, plugging its inputs into `ins`; returns its outputs.
    /// Generators are resolved by name, so `d` may live over a sub-signature.
    pub fn inline(&mut self, d: &Diagram, ins: &[WireId]) -> Result<Vec<WireId>, DiagramError> {
        check_types(&d.dom(), ins.iter().map(|&w| self.wires[w].as_str()), "diagram input")?;
        let mut map: Vec<Option<WireId>> = vec![None; d.wires.len()];
        for (k, &w) in d.inputs.iter().enumerate() {
            map[w] = Some(ins[k]);
        }
        for (w, ty) in d.wires.iter().enumerate() {
            if map[w].is_none() {
                map[w] = Some(self.wire(ty)?);
            }
        }
        for n in &d.nodes {
            let ins: Vec<_> = n.ins.iter().map(|&w| map[w].unwrap()).collect();
            let outs: Vec<_> = n.outs.iter().map(|&w| map[w].unwrap()).collect();
            self.node_with(&n.gen, &ins, &outs)?;
        }
        Ok(d.outputs.iter().map(|&w| map[w].unwrap()).collect())
    }

    pub fn finish(self, inputs: Vec<WireId>, outputs: Vec<WireId>) -> Result<Diagram, DiagramError> {
        Diagram::from_parts(self.sig, self.wires, self.nodes, inputs, outputs)
    }
}

fn check_types<'a>(expected: &[String], found: impl Iterator<Item = &'a str>, what: &str) -> Result<(), DiagramError> {
    let found: Vec<&str> = found.collect();
    if expected.len() != found.len() {
        return Err(DiagramError::Arity {
            generator: what.to_string(),
            expected: expected.len(),
            found: found.len(),
        });
    }
    for (i, (e, f)) in expected.iter().zip(found).enumerate() {
        if e != f {
            return Err(DiagramError::TypeMismatch {
                index: i,
                expected: e.clone(),
                found: f.to_string(),
            });
        }
    }
    Ok(())
}

fn same_sig(a: &Arc<Polygraph>, b: &Arc<Polygraph>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl Diagram {
    /// Validates raw hypergraph data and renumbers it into normal form.
    pub fn from_parts(
        sig: Arc<Polygraph>,
        wires: Vec<String>,
        nodes: Vec<Node>,
        inputs: Vec<WireId>,
        outputs: Vec<WireId>,
    ) -> Result<Diagram, DiagramError> {
        for t in &wires {
            if !sig.has_object(t) {
                return Err(DiagramError::UndeclaredType(t.clone()));
            }
        }
        let mut producers = vec![0usize; wires.len()];
        let mut consumers = vec![0usize; wires.len()];
        let bump = |v: &mut Vec<usize>, w: WireId| -> Result<(), DiagramError> {
            *v.get_mut(w).ok_or(DiagramError::UnknownWire(w))? += 1;
            Ok(())
        };
        for &w in &inputs {
            bump(&mut producers, w)?;
        }
        for &w in &outputs {
            bump(&mut consumers, w)?;
        }
        for n in &nodes {
            let g = sig
                .generator(&n.gen)
                .ok_or_else(|| DiagramError::UnknownGenerator(n.gen.clone()))?;
            for &w in &n.ins {
                bump(&mut consumers, w)?;
            }
            for &w in &n.outs {
                bump(&mut producers, w)?;
            }
            check_types(&g.inputs, n.ins.iter().map(|&w| wires[w].as_str()), &n.gen)?;
            check_types(&g.outputs, n.outs.iter().map(|&w| wires[w].as_str()), &n.gen)?;
        }
        for w in 0..wires.len() {
            if producers[w] != 1 || consumers[w] != 1 {
                return Err(DiagramError::Endpoints {
                    wire: w,
                    producers: producers[w],
                    consumers: consumers[w],
                });
            }
        }
        let order = kahn(&wires, &nodes, |a, _| a as u64)?;
        // Renumber: inputs first, then node outputs in topological order.
        let mut map: Vec<Option<WireId>> = vec![None; wires.len()];
        let mut next = 0;
        let mut new_wires = Vec::with_capacity(wires.len());
        let mut assign = |w: WireId, map: &mut Vec<Option<WireId>>| {
            if map[w].is_none() {
                map[w] = Some(next);
                new_wires.push(wires[w].clone());
                next += 1;
            }
        };
        for &w in &inputs {
            assign(w, &mut map);
        }
        for &i in &order {
            for &w in &nodes[i].outs {
                assign(w, &mut map);
            }
        }
        let m = |w: &WireId| map[*w].unwrap();
        let new_nodes = order
            .iter()
            .map(|&i| Node {
                gen: nodes[i].gen.clone(),
                ins: nodes[i].ins.iter().map(m).collect(),
                outs: nodes[i].outs.iter().map(m).collect(),
            })
            .collect();
        Ok(Diagram {
            sig,
            wires: new_wires,
            nodes: new_nodes,
            inputs: inputs.iter().map(m).collect(),
            outputs: outputs.iter().map(m).collect(),
        })
    }

    pub fn sig(&self) -> &Arc<Polygraph> {
        &self.sig
    }

    pub fn wire_types(&self) -> &[String] {
        &self.wires
    }

    pub fn wire_type(&self, w: WireId) -> &str {
        &self.wires[w]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn inputs(&self) -> &[WireId] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[WireId] {
        &self.outputs
    }

    pub fn dom(&self) -> Vec<String> {
        self.inputs.iter().map(|&w| self.wires[w].clone()).collect()
    }

    pub fn cod(&self) -> Vec<String> {
        self.outputs.iter().map(|&w| self.wires[w].clone()).collect()
    }

    pub fn from_generator(sig: &Arc<Polygraph>, gen: &str) -> Result<Diagram, DiagramError> {
        let g = sig
            .generator(gen)
            .ok_or_else(|| DiagramError::UnknownGenerator(gen.to_string()))?;
        let mut b = Builder::new(sig.clone());
        let ins = b.wires(&g.inputs)?;
        let outs = b.node(gen, &ins)?;
        b.finish(ins, outs)
    }

    pub fn identity(sig: &Arc<Polygraph>, types: &[String]) -> Result<Diagram, DiagramError> {
        let mut b = Builder::new(sig.clone());
        let ws = b.wires(types)?;
        b.finish(ws.clone(), ws)
    }

    /// The symmetry `left ++ right -> right ++ left`.
    pub fn symmetry(sig: &Arc<Polygraph>, left: &[String], right: &[String]) -> Result<Diagram, DiagramError> {
        let mut b = Builder::new(sig.clone());
        let l = b.wires(left)?;
        let r = b.wires(right)?;
        let ins = [l.clone(), r.clone()].concat();
        let outs = [r, l].concat();
        b.finish(ins, outs)
    }

    /// Boundary permutation: output `k` is input `perm[k]`.
    pub fn permutation(sig: &Arc<Polygraph>, types: &[String], perm: &[usize]) -> Result<Diagram, DiagramError> {
        let mut b = Builder::new(sig.clone());
        let ws = b.wires(types)?;
        let outs = perm.iter().map(|&i| ws[i]).collect();
        b.finish(ws, outs)
    }

    pub fn compose(&self, other: &Diagram) -> Result<Diagram, DiagramError> {
        if !same_sig(&self.sig, &other.sig) {
            return Err(DiagramError::PolygraphMismatch);
        }
        let mut b = Builder::new(self.sig.clone());
        let ins = b.wires(&self.dom())?;
        let mid = b.inline(self, &ins)?;
        let outs = b.inline(other, &mid)?;
        b.finish(ins, outs)
    }

    pub fn tensor(&self, other: &Diagram) -> Result<Diagram, DiagramError> {
        if !same_sig(&self.sig, &other.sig) {
            return Err(DiagramError::PolygraphMismatch);
        }
        let mut b = Builder::new(self.sig.clone());
        let i1 = b.wires(&self.dom())?;
        let i2 = b.wires(&other.dom())?;
        let o1 = b.inline(self, &i1)?;
        let o2 = b.inline(other, &i2)?;
        b.finish([i1, i2].concat(), [o1, o2].concat())
    }

    /// Re-checks every structural invariant.
    pub fn validate(&self) -> Result<(), DiagramError> {
        Diagram::from_parts(
            self.sig.clone(),
            self.wires.clone(),
            self.nodes.clone(),
            self.inputs.clone(),
            self.outputs.clone(),
        )
        .map(|_| ())
    }

    fn endpoints(&self) -> (Vec<End>, Vec<End>) {
        let mut prod = vec![End::Boundary(0); self.wires.len()];
        let mut cons = vec![End::Boundary(0); self.wires.len()];
        for (k, &w) in self.inputs.iter().enumerate() {
            prod[w] = End::Boundary(k);
        }
        for (k, &w) in self.outputs.iter().enumerate() {
            cons[w] = End::Boundary(k);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            for (p, &w) in n.ins.iter().enumerate() {
                cons[w] = End::Port(i, p);
            }
            for (p, &w) in n.outs.iter().enumerate() {
                prod[w] = End::Port(i, p);
            }
        }
        (prod, cons)
    }

    /// Nodes in dependency order, ties broken by refined colour and then by the
    /// id of the first input wire.
    pub fn topological_order(&self) -> Result<Vec<usize>, DiagramError> {
        let colours = Refinement::stable(self);
        let key = |i: usize, n: &Node| {
            let first = n.ins.first().map(|&w| w as u64).unwrap_or(u64::MAX);
            (colours.nodes[i], first, i as u64)
        };
        let keys: Vec<_> = self.nodes.iter().enumerate().map(|(i, n)| key(i, n)).collect();
        let mut sorted: Vec<usize> = (0..self.nodes.len()).collect();
        sorted.sort_by_key(|&i| keys[i]);
        let mut rank = vec![0u64; self.nodes.len()];
        for (r, &i) in sorted.iter().enumerate() {
            rank[i] = r as u64;
        }
        kahn(&self.wires, &self.nodes, |i, _| rank[i])
    }

    /// Equality in the free symmetric monoidal category: boundary-preserving
    /// isomorphism of hypergraphs.
    pub fn is_equal(&self, other: &Diagram) -> bool {
        if self.inputs.len() != other.inputs.len()
            || self.outputs.len() != other.outputs.len()
            || self.nodes.len() != other.nodes.len()
            || self.wires.len() != other.wires.len()
            || self.dom() != other.dom()
            || self.cod() != other.cod()
        {
            return false;
        }
        let rounds = Refinement::stable(self).rounds.max(Refinement::stable(other).rounds);
        let c1 = Refinement::run(self, rounds);
        let c2 = Refinement::run(other, rounds);
        let mut h1 = c1.nodes.clone();
        let mut h2 = c2.nodes.clone();
        h1.sort_unstable();
        h2.sort_unstable();
        if h1 != h2 {
            return false;
        }
        let mut iso = Iso::new(self, other);
        for k in 0..self.inputs.len() {
            if !iso.pair_wire(self.inputs[k], other.inputs[k]) {
                return false;
            }
        }
        for k in 0..self.outputs.len() {
            if !iso.pair_wire(self.outputs[k], other.outputs[k]) {
                return false;
            }
        }
        if !iso.propagate() {
            return false;
        }
        for n1 in 0..self.nodes.len() {
            if iso.node_fwd[n1].is_some() {
                continue;
            }
            let mut matched = false;
            for n2 in 0..other.nodes.len() {
                if iso.node_bwd[n2].is_some() || c1.nodes[n1] != c2.nodes[n2] {
                    continue;
                }
                let saved = iso.clone();
                if iso.pair_node(n1, n2) && iso.propagate() {
                    matched = true;
                    break;
                }
                iso = saved;
            }
            if !matched {
                return false;
            }
        }
        iso.wire_fwd.iter().all(Option::is_some) && iso.node_fwd.iter().all(Option::is_some)
    }

    /// A 64-bit digest that agrees on equal diagrams.
    pub fn canonical_hash(&self) -> u64 {
        let c = Refinement::stable(self);
        let mut nodes = c.nodes.clone();
        nodes.sort_unstable();
        let mut wires = c.wires.clone();
        wires.sort_unstable();
        let ins: Vec<u64> = self.inputs.iter().map(|&w| c.wires[w]).collect();
        let outs: Vec<u64> = self.outputs.iter().map(|&w| c.wires[w]).collect();
        hash_of(&(nodes, wires, ins, outs))
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph diagram {\n  rankdir=TB;\n");
        let _ = writeln!(s, "  in [shape=box,label=\"in\"];");
        let _ = writeln!(s, "  out [shape=box,label=\"out\"];");
        for (i, n) in self.nodes.iter().enumerate() {
            let _ = writeln!(s, "  n{i} [label=\"{}\"];", n.gen);
        }
        let (prod, cons) = self.endpoints();
        for w in 0..self.wires.len() {
            let from = match prod[w] {
                End::Boundary(_) => "in".to_string(),
                End::Port(i, _) => format!("n{i}"),
            };
            let to = match cons[w] {
                End::Boundary(_) => "out".to_string(),
                End::Port(i, _) => format!("n{i}"),
            };
            let _ = writeln!(s, "  {from} -> {to} [label=\"{}\"];", self.wires[w]);
        }
        s.push_str("}\n");
        s
    }

    pub fn to_json(&self) -> String {
        let file = DiagramFile {
            wires: self
                .wires
                .iter()
                .enumerate()
                .map(|(id, ty)| WireEntry { id, ty: ty.clone() })
                .collect(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeEntry {
                    gen: n.gen.clone(),
                    ins: n.ins.clone(),
                    outs: n.outs.clone(),
                })
                .collect(),
            ins: self.inputs.clone(),
            outs: self.outputs.clone(),
        };
        serde_json::to_string_pretty(&file).expect("diagram serializes")
    }

    pub fn from_json(sig: &Arc<Polygraph>, text: &str) -> Result<Diagram, DiagramError> {
        let file: DiagramFile = serde_json::from_str(text).map_err(|e| DiagramError::Format(e.to_string()))?;
        let mut index = BTreeMap::new();
        let mut wires = vec![];
        for w in &file.wires {
            if index.insert(w.id, wires.len()).is_some() {
                return Err(DiagramError::Format(format!("duplicate wire id {}", w.id)));
            }
            wires.push(w.ty.clone());
        }
        let look = |id: &usize| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| DiagramError::Format(format!("unknown wire id {id}")))
        };
        let look_all = |ids: &[usize]| ids.iter().map(look).collect::<Result<Vec<_>, _>>();
        let nodes = file
            .nodes
            .iter()
            .map(|n| {
                Ok(Node {
                    gen: n.gen.clone(),
                    ins: look_all(&n.ins)?,
                    outs: look_all(&n.outs)?,
                })
            })
            .collect::<Result<Vec<_>, DiagramError>>()?;
        Diagram::from_parts(sig.clone(), wires, nodes, look_all(&file.ins)?, look_all(&file.outs)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireEntry {
    id: usize,
    #[serde(rename = "type")]
    ty: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeEntry {
    gen: String,
    #[serde(rename = "in")]
    ins: Vec<usize>,
    #[serde(rename = "out")]
    outs: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagramFile {
    wires: Vec<WireEntry>,
    nodes: Vec<NodeEntry>,
    #[serde(rename = "in")]
    ins: Vec<usize>,
    #[serde(rename = "out")]
    outs: Vec<usize>,
}

fn hash_of<T: Hash>(t: &T) -> u64 {
    let mut h = DefaultHasher::new();
    t.hash(&mut h);
    h.finish()
}

/// Kahn's algorithm; ready nodes are taken by smallest `key`.
fn kahn(wires: &[String], nodes: &[Node], key: impl Fn(usize, &Node) -> u64) -> Result<Vec<usize>, DiagramError> {
    let mut producer: Vec<Option<usize>> = vec![None; wires.len()];
    for (i, n) in nodes.iter().enumerate() {
        for &w in &n.outs {
            producer[w] = Some(i);
        }
    }
    let mut indeg = vec![0usize; nodes.len()];
    let mut succ: Vec<Vec<usize>> = vec![vec![]; nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        for &w in &n.ins {
            if let Some(p) = producer[w] {
                indeg[i] += 1;
                succ[p].push(i);
            }
        }
    }
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = nodes
        .iter()
        .enumerate()
        .filter(|(i, _)| indeg[*i] == 0)
        .map(|(i, n)| Reverse((key(i, n), i)))
        .collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(Reverse((_, i))) = heap.pop() {
        order.push(i);
        for &j in &succ[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                heap.push(Reverse((key(j, &nodes[j]), j)));
            }
        }
    }
    if order.len() == nodes.len() {
        return Ok(order);
    }
    // Every leftover node has a leftover predecessor: walk back until a repeat.
    let mut start = (0..nodes.len()).find(|&i| indeg[i] > 0).unwrap();
    let mut seen = HashMap::new();
    let mut path = vec![];
    loop {
        if let Some(&at) = seen.get(&start) {
            let mut cycle: Vec<usize> = path[at..].to_vec();
            cycle.reverse();
            return Err(DiagramError::Cycle(cycle));
        }
        seen.insert(start, path.len());
        path.push(start);
        start = nodes[start]
            .ins
            .iter()
            .filter_map(|&w| producer[w])
            .find(|&p| indeg[p] > 0)
            .unwrap();
    }
}

/// Iterated colour refinement over nodes and wires.
struct Refinement {
    nodes: Vec<u64>,
    wires: Vec<u64>,
    rounds: usize,
}

impl Refinement {
    fn initial(d: &Diagram) -> (Vec<u64>, Vec<u64>) {
        let (prod, cons) = d.endpoints();
        let n = d.nodes.len();
        // Longest distance from the input side and to the output side.
        let mut depth = vec![0usize; n];
        for i in 0..n {
            for &w in &d.nodes[i].ins {
                if let End::Port(p, _) = prod[w] {
                    depth[i] = depth[i].max(depth[p] + 1);
                }
            }
        }
        let mut height = vec![0usize; n];
        for i in (0..n).rev() {
            for &w in &d.nodes[i].outs {
                if let End::Port(c, _) = cons[w] {
                    height[i] = height[i].max(height[c] + 1);
                }
            }
        }
        let nodes = d
            .nodes
            .iter()
            .enumerate()
            .map(|(i, nd)| hash_of(&(&nd.gen, nd.ins.len(), nd.outs.len(), depth[i], height[i])))
            .collect();
        let wires = (0..d.wires.len())
            .map(|w| {
                let pin = match prod[w] {
                    End::Boundary(k) => Some(k),
                    _ => None,
                };
                let pout = match cons[w] {
                    End::Boundary(k) => Some(k),
                    _ => None,
                };
                hash_of(&(&d.wires[w], pin, pout))
            })
            .collect();
        (nodes, wires)
    }

    fn step(d: &Diagram, prod: &[End], cons: &[End], nodes: &[u64], wires: &[u64]) -> (Vec<u64>, Vec<u64>) {
        let new_nodes = d
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let ins: Vec<u64> = n.ins.iter().map(|&w| wires[w]).collect();
                let outs: Vec<u64> = n.outs.iter().map(|&w| wires[w]).collect();
                hash_of(&(nodes[i], ins, outs))
            })
            .collect();
        let end = |e: End| match e {
            End::Boundary(k) => (0u64, k),
            End::Port(i, p) => (nodes[i], p),
        };
        let new_wires = (0..wires.len())
            .map(|w| hash_of(&(wires[w], end(prod[w]), end(cons[w]))))
            .collect();
        (new_nodes, new_wires)
    }

    fn classes(v: &[u64]) -> usize {
        let mut s = v.to_vec();
        s.sort_unstable();
        s.dedup();
        s.len()
    }

    fn run(d: &Diagram, rounds: usize) -> Refinement {
        let (prod, cons) = d.endpoints();
        let (mut nodes, mut wires) = Refinement::initial(d);
        for _ in 0..rounds {
            let (n, w) = Refinement::step(d, &prod, &cons, &nodes, &wires);
            nodes = n;
            wires = w;
        }
        Refinement { nodes, wires, rounds }
    }

    fn stable(d: &Diagram) -> Refinement {
        let (prod, cons) = d.endpoints();
        let (mut nodes, mut wires) = Refinement::initial(d);
        let mut count = Refinement::classes(&nodes) + Refinement::classes(&wires);
        let mut rounds = 0;
        loop {
            let (n, w) = Refinement::step(d, &prod, &cons, &nodes, &wires);
            let c = Refinement::classes(&n) + Refinement::classes(&w);
            rounds += 1;
            nodes = n;
            wires = w;
            if c == count {
                break;
            }
            count = c;
        }
        Refinement { nodes, wires, rounds }
    }
}

/// Partial isomorphism with propagation along the rigid port structure.
#[derive(Clone)]
struct Iso<'a> {
    a: &'a Diagram,
    b: &'a Diagram,
    ends_a: (Vec<End>, Vec<End>),
    ends_b: (Vec<End>, Vec<End>),
    wire_fwd: Vec<Option<WireId>>,
    wire_bwd: Vec<Option<WireId>>,
    node_fwd: Vec<Option<usize>>,
    node_bwd: Vec<Option<usize>>,
    queue: Vec<(WireId, WireId)>,
}

impl<'a> Iso<'a> {
    fn new(a: &'a Diagram, b: &'a Diagram) -> Self {
        Iso {
            a,
            b,
            ends_a: a.endpoints(),
            ends_b: b.endpoints(),
            wire_fwd: vec![None; a.wires.len()],
            wire_bwd: vec![None; b.wires.len()],
            node_fwd: vec![None; a.nodes.len()],
            node_bwd: vec![None; b.nodes.len()],
            queue: vec![],
        }
    }

    fn pair_wire(&mut self, x: WireId, y: WireId) -> bool {
        match (self.wire_fwd[x], self.wire_bwd[y]) {
            (Some(y2), _) if y2 != y => false,
            (_, Some(x2)) if x2 != x => false,
            (Some(_), Some(_)) => true,
            _ => {
                if self.a.wires[x] != self.b.wires[y] {
                    return false;
                }
                self.wire_fwd[x] = Some(y);
                self.wire_bwd[y] = Some(x);
                self.queue.push((x, y));
                true
            }
        }
    }

    fn pair_node(&mut self, m: usize, n: usize) -> bool {
        match (self.node_fwd[m], self.node_bwd[n]) {
            (Some(n2), _) if n2 != n => false,
            (_, Some(m2)) if m2 != m => false,
            (Some(_), Some(_)) => true,
            _ => {
                let (p, q) = (&self.a.nodes[m], &self.b.nodes[n]);
                if p.gen != q.gen || p.ins.len() != q.ins.len() || p.outs.len() != q.outs.len() {
                    return false;
                }
                self.node_fwd[m] = Some(n);
                self.node_bwd[n] = Some(m);
                let pairs: Vec<(WireId, WireId)> = p
                    .ins
                    .iter()
                    .zip(&q.ins)
                    .chain(p.outs.iter().zip(&q.outs))
                    .map(|(&x, &y)| (x, y))
                    .collect();
                pairs.into_iter().all(|(x, y)| self.pair_wire(x, y))
            }
        }
    }

    fn pair_end(&mut self, e: End, f: End) -> bool {
        match (e, f) {
            (End::Boundary(i), End::Boundary(j)) => i == j,
            (End::Port(m, p), End::Port(n, q)) => p == q && self.pair_node(m, n),
            _ => false,
        }
    }

    fn propagate(&mut self) -> bool {
        while let Some((x, y)) = self.queue.pop() {
            let (pa, ca) = (self.ends_a.0[x], self.ends_a.1[x]);
            let (pb, cb) = (self.ends_b.0[y], self.ends_b.1[y]);
            if !self.pair_end(pa, pb) || !self.pair_end(ca, cb) {
                return false;
            }
        }
        true
    }
}
