//! Sessions: diagrams over send and receive generators threaded by the runtime wire.
//!
//! A session `A -> B` is a diagram `R,A -> R,B` over the runtime extension of the
//! session polygraph. Its events are the send and receive nodes read along `R`.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::diagram::{Builder, Diagram, DiagramError, Node, WireId};
use crate::donotation::{self, DoError, DoProgram, Param, Stmt};
use crate::polar::{format_polar_list, Loc, Polar, PolarError, PolarList, PolarShuffle, Polarity};
use crate::signature::{recv_name, runtime_extend, send_name, session_polygraph, Polygraph, SignatureError, RUNTIME};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SessionError {
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Do(#[from] DoError),
    #[error(transparent)]
    Polar(#[from] PolarError),
    #[error("base polygraph must be pure")]
    NotPure,
    #[error("diagram is not over the session signature of the base")]
    WrongSignature,
    #[error("boundary must carry the runtime wire first and only there")]
    Boundary,
    #[error("runtime wire is used outside its single path")]
    RuntimeMisuse,
    #[error("part {0} is not closed")]
    NotClosed(usize),
    #[error("expected {expected} parts, found {found}")]
    PartCount { expected: usize, found: usize },
    #[error("part {part} has events {found}, the shuffle expects {expected}")]
    EventMismatch {
        part: usize,
        expected: String,
        found: String,
    },
    #[error("session with events {0} is not process-shaped")]
    NotProcess(String),
    #[error("ill-formed comb: {0}")]
    Comb(String),
    #[error("linked channels form a cycle")]
    Cyclic,
    #[error("process types differ: {0:?} vs {1:?}")]
    ProcessTypes(Vec<String>, Vec<String>),
}

/// The runtime extension of the session polygraph over a pure base.
pub fn session_signature(base: &Polygraph) -> Result<Arc<Polygraph>, SessionError> {
    if !base.is_pure() {
        return Err(SessionError::NotPure);
    }
    Ok(Arc::new(runtime_extend(&session_polygraph(base)?)))
}

#[derive(Debug, Clone)]
pub struct Session {
    base: Arc<Polygraph>,
    diagram: Diagram,
    path: Vec<usize>,
}

fn event_of(base: &Polygraph, gen: &str) -> Option<Polar> {
    if let Some(t) = gen.strip_prefix("send_") {
        if base.has_object(t) && send_name(t) == gen {
            return Some(Polar::send(t));
        }
    }
    if let Some(t) = gen.strip_prefix("recv_") {
        if base.has_object(t) && recv_name(t) == gen {
            return Some(Polar::recv(t));
        }
    }
    None
}

impl Session {
    pub fn new(base: &Arc<Polygraph>, diagram: Diagram) -> Result<Session, SessionError> {
        if **diagram.sig() != *session_signature(base)? {
            return Err(SessionError::WrongSignature);
        }
        let (ins, outs) = (diagram.inputs(), diagram.outputs());
        let runtime = |w: &WireId| diagram.wire_type(*w) == RUNTIME;
        if ins.first().is_none_or(|w| !runtime(w))
            || outs.first().is_none_or(|w| !runtime(w))
            || ins[1..].iter().any(runtime)
            || outs[1..].iter().any(runtime)
        {
            return Err(SessionError::Boundary);
        }
        let mut consumer: HashMap<WireId, (usize, usize)> = HashMap::new();
        for (i, n) in diagram.nodes().iter().enumerate() {
            for (p, &w) in n.ins.iter().enumerate() {
                consumer.insert(w, (i, p));
            }
        }
        let mut path = vec![];
        let mut w = ins[0];
        while w != outs[0] {
            let (i, p) = consumer[&w];
            let n = &diagram.nodes()[i];
            if p != 0 || event_of(base, &n.gen).is_none() {
                return Err(SessionError::RuntimeMisuse);
            }
            path.push(i);
            w = n.outs[0];
        }
        let r_wires = diagram.wire_types().iter().filter(|t| *t == RUNTIME).count();
        if r_wires != path.len() + 1 {
            return Err(SessionError::RuntimeMisuse);
        }
        Ok(Session {
            base: base.clone(),
            diagram,
            path,
        })
    }

    pub fn base(&self) -> &Arc<Polygraph> {
        &self.base
    }

    pub fn diagram(&self) -> &Diagram {
        &self.diagram
    }

    /// Event nodes in runtime order.
    pub fn path(&self) -> &[usize] {
        &self.path
    }

    pub fn dom(&self) -> Vec<String> {
        self.diagram.dom()[1..].to_vec()
    }

    pub fn cod(&self) -> Vec<String> {
        self.diagram.cod()[1..].to_vec()
    }

    pub fn is_closed(&self) -> bool {
        self.diagram.inputs().len() == 1 && self.diagram.outputs().len() == 1
    }

    pub fn events(&self) -> PolarList {
        self.path
            .iter()
            .map(|&i| event_of(&self.base, &self.diagram.nodes()[i].gen).unwrap())
            .collect()
    }

    pub fn is_equal(&self, other: &Session) -> bool {
        self.diagram.is_equal(&other.diagram)
    }

    /// Splits the session before each event. Pure nodes are placed in the earliest
    /// piece that has all their inputs.
    pub fn to_comb(&self) -> Comb {
        let d = &self.diagram;
        let n = self.path.len();
        let events = self.events();
        let mut event_index = vec![None; d.nodes().len()];
        for (k, &i) in self.path.iter().enumerate() {
            event_index[i] = Some(k + 1);
        }
        let wires = d.wire_types().len();
        let mut prod = vec![0usize; wires];
        let mut cons = vec![n; wires];
        let mut slot = vec![0usize; d.nodes().len()];
        let mut recv_wire = vec![None; n + 1];
        let mut send_wire = vec![None; n + 1];
        // Node indices are already a topological order.
        for (i, node) in d.nodes().iter().enumerate() {
            match event_index[i] {
                Some(k) => match events[k - 1].pol {
                    Polarity::Recv => {
                        prod[node.outs[1]] = k;
                        recv_wire[k] = Some(node.outs[1]);
                    }
                    Polarity::Send => {
                        cons[node.ins[1]] = k - 1;
                        send_wire[k] = Some(node.ins[1]);
                    }
                },
                None => {
                    let s = node.ins.iter().map(|&w| prod[w]).max().unwrap_or(0);
                    slot[i] = s;
                    for &w in &node.ins {
                        cons[w] = s;
                    }
                    for &w in &node.outs {
                        prod[w] = s;
                    }
                }
            }
        }
        let plain = |w: &WireId| d.wire_type(*w) != RUNTIME;
        let residuals: Vec<Vec<WireId>> = (1..=n)
            .map(|k| {
                (0..wires)
                    .filter(|w| plain(w) && prod[*w] < k && cons[*w] >= k)
                    .collect()
            })
            .collect();
        let dom: Vec<WireId> = d.inputs()[1..].to_vec();
        let cod: Vec<WireId> = d.outputs()[1..].to_vec();
        let mut pieces = vec![];
        for k in 0..=n {
            let mut b = Builder::new(self.base.clone());
            let mut map: HashMap<WireId, WireId> = HashMap::new();
            let mut ins = if k == 0 { dom.clone() } else { residuals[k - 1].clone() };
            ins.extend(recv_wire[k]);
            let mut local_ins = vec![];
            for &w in &ins {
                let l = b.wire(d.wire_type(w)).unwrap();
                map.insert(w, l);
                local_ins.push(l);
            }
            for (i, node) in d.nodes().iter().enumerate() {
                if event_index[i].is_some() || slot[i] != k {
                    continue;
                }
                let a: Vec<WireId> = node.ins.iter().map(|w| map[w]).collect();
                let o = b.node(&node.gen, &a).unwrap();
                for (w, l) in node.outs.iter().zip(o) {
                    map.insert(*w, l);
                }
            }
            let mut outs = if k == n { cod.clone() } else { residuals[k].clone() };
            if k < n {
                outs.extend(send_wire[k + 1]);
            }
            let local_outs = outs.iter().map(|w| map[w]).collect();
            pieces.push(b.finish(local_ins, local_outs).expect("comb piece is well formed"));
        }
        let residuals = residuals
            .iter()
            .map(|r| r.iter().map(|&w| d.wire_type(w).to_string()).collect())
            .collect();
        Comb {
            holes: events,
            pieces,
            residuals,
        }
    }

    /// Rebuilds a session from its comb by threading the runtime through the holes.
    pub fn from_comb(base: &Arc<Polygraph>, comb: &Comb) -> Result<Session, SessionError> {
        comb.validate()?;
        let sig = session_signature(base)?;
        let mut b = Builder::new(sig);
        let r0 = b.wire(RUNTIME)?;
        let dom = b.wires(&comb.pieces[0].dom())?;
        let mut r = r0;
        let mut carry = dom.clone();
        let n = comb.holes.len();
        for k in 0..=n {
            let mut ins = carry;
            if k >= 1 && comb.holes[k - 1].pol == Polarity::Recv {
                let o = b.node(&recv_name(&comb.holes[k - 1].ty), &[r])?;
                r = o[0];
                ins.push(o[1]);
            }
            let mut outs = b.inline(&comb.pieces[k], &ins)?;
            if k < n && comb.holes[k].pol == Polarity::Send {
                let x = outs.pop().expect("send hole has a wire");
                r = b.node(&send_name(&comb.holes[k].ty), &[r, x])?[0];
            }
            carry = outs;
        }
        let mut ins = vec![r0];
        ins.extend(dom);
        let mut outs = vec![r];
        outs.extend(carry);
        Session::new(base, b.finish(ins, outs)?)
    }

    /// Forgets the runtime: receives become inputs and sends become outputs, both in
    /// event order, after the session's own boundary.
    pub fn open(&self) -> Result<Diagram, SessionError> {
        let d = &self.diagram;
        let mut ins: Vec<WireId> = d.inputs()[1..].to_vec();
        let mut outs: Vec<WireId> = d.outputs()[1..].to_vec();
        let mut nodes = vec![];
        for (i, n) in d.nodes().iter().enumerate() {
            if self.path.contains(&i) {
                match event_of(&self.base, &n.gen).unwrap().pol {
                    Polarity::Recv => ins.push(n.outs[1]),
                    Polarity::Send => outs.push(n.ins[1]),
                }
            } else {
                nodes.push(n.clone());
            }
        }
        // Runtime wires become unused; keep them out of the wire table.
        let mut map = vec![usize::MAX; d.wire_types().len()];
        let mut wires = vec![];
        for (w, t) in d.wire_types().iter().enumerate() {
            if t != RUNTIME {
                map[w] = wires.len();
                wires.push(t.clone());
            }
        }
        let m = |v: &[WireId]| v.iter().map(|&w| map[w]).collect::<Vec<_>>();
        let nodes = nodes
            .into_iter()
            .map(|n| Node {
                gen: n.gen,
                ins: m(&n.ins),
                outs: m(&n.outs),
            })
            .collect();
        Ok(Diagram::from_parts(self.base.clone(), wires, nodes, m(&ins), m(&outs))?)
    }

    /// Prints the session as a session program; wires are named after their ids.
    pub fn to_program(&self, name: &str) -> DoProgram {
        let d = &self.diagram;
        let v = |w: WireId| format!("v{w}");
        let mut stmts = vec![];
        for (i, n) in d.nodes().iter().enumerate() {
            if self.path.contains(&i) {
                let e = event_of(&self.base, &n.gen).unwrap();
                stmts.push(match e.pol {
                    Polarity::Recv => Stmt::Recv {
                        ty: e.ty,
                        var: v(n.outs[1]),
                    },
                    Polarity::Send => Stmt::Send { var: v(n.ins[1]) },
                });
            } else {
                stmts.push(Stmt::Call {
                    gen: n.gen.clone(),
                    args: n.ins.iter().map(|&w| v(w)).collect(),
                    binders: n.outs.iter().map(|&w| v(w)).collect(),
                });
            }
        }
        DoProgram {
            name: name.to_string(),
            params: d.inputs()[1..]
                .iter()
                .map(|&w| Param {
                    name: v(w),
                    ty: Some(d.wire_type(w).to_string()),
                })
                .collect(),
            stmts,
            returns: d.outputs()[1..].iter().map(|&w| v(w)).collect(),
        }
    }
}

/// A session cut into pure pieces around its events. Piece `k` maps
/// `Mₖ ++ [Xₖ if event k receives]` to `Mₖ₊₁ ++ [Xₖ₊₁ if event k+1 sends]`, where `M₀` is
/// the domain and the last residual is the codomain.
#[derive(Debug, Clone)]
pub struct Comb {
    pub holes: PolarList,
    pub pieces: Vec<Diagram>,
    pub residuals: Vec<Vec<String>>,
}

impl Comb {
    pub fn validate(&self) -> Result<(), SessionError> {
        let n = self.holes.len();
        if self.pieces.len() != n + 1 || self.residuals.len() != n {
            return Err(SessionError::Comb(format!(
                "{} holes need {} pieces and {} residuals",
                n,
                n + 1,
                n
            )));
        }
        for k in 0..n {
            let mut left = self.residuals[k].clone();
            if self.holes[k].pol == Polarity::Send {
                left.push(self.holes[k].ty.clone());
            }
            let mut right = self.residuals[k].clone();
            if self.holes[k].pol == Polarity::Recv {
                right.push(self.holes[k].ty.clone());
            }
            if self.pieces[k].cod() != left || self.pieces[k + 1].dom() != right {
                return Err(SessionError::Comb(format!(
                    "piece boundary around hole {k} does not chain"
                )));
            }
        }
        Ok(())
    }
}

enum Header {
    Kept(usize),
    SpawnRecv(WireId),
    SpawnSend(WireId),
}

/// Glues closed sessions along a polar shuffle whose inputs are their event lists.
/// Linked sends and receives are fused into a plain wire; header events keep their nodes;
/// spawned channels become a receive followed later by a send of the same wire.
pub fn glue(base: &Arc<Polygraph>, parts: &[Session], s: &PolarShuffle) -> Result<Session, SessionError> {
    if parts.len() != s.inputs().len() {
        return Err(SessionError::PartCount {
            expected: s.inputs().len(),
            found: parts.len(),
        });
    }
    for (i, p) in parts.iter().enumerate() {
        if !p.is_closed() {
            return Err(SessionError::NotClosed(i));
        }
        let ev = p.events();
        if ev != s.inputs()[i] {
            return Err(SessionError::EventMismatch {
                part: i,
                expected: format_polar_list(&s.inputs()[i]),
                found: format_polar_list(&ev),
            });
        }
    }
    let sig = session_signature(base)?;
    let mut wires: Vec<String> = vec![];
    let mut nodes: Vec<Node> = vec![];
    let mut events: Vec<Vec<usize>> = vec![];
    for p in parts {
        let (wo, no) = (wires.len(), nodes.len());
        let d = p.diagram();
        wires.extend(d.wire_types().iter().cloned());
        nodes.extend(d.nodes().iter().map(|n| Node {
            gen: n.gen.clone(),
            ins: n.ins.iter().map(|w| w + wo).collect(),
            outs: n.outs.iter().map(|w| w + wo).collect(),
        }));
        events.push(p.path().iter().map(|i| i + no).collect());
    }
    let mut alias: Vec<WireId> = (0..wires.len()).collect();
    let mut is_event = vec![false; nodes.len()];
    for ev in &events {
        for &i in ev {
            is_event[i] = true;
        }
    }
    let mut header: Vec<Option<Header>> = (0..s.output().len()).map(|_| None).collect();
    for &(a, b) in s.pairing() {
        match (a, b) {
            (Loc::In(i, p), Loc::In(j, q)) => {
                let (ns, nr) = (events[i][p], events[j][q]);
                alias[nodes[nr].outs[1]] = nodes[ns].ins[1];
            }
            (Loc::In(i, p), Loc::Out(q)) | (Loc::Out(q), Loc::In(i, p)) => {
                header[q] = Some(Header::Kept(events[i][p]));
            }
            (Loc::Out(q), Loc::Out(r)) => {
                wires.push(s.output()[q].ty.clone());
                alias.push(wires.len() - 1);
                header[q] = Some(Header::SpawnRecv(wires.len() - 1));
                header[r] = Some(Header::SpawnSend(wires.len() - 1));
            }
        }
    }
    let resolve = |mut w: WireId| -> Result<WireId, SessionError> {
        for _ in 0..=alias.len() {
            if alias[w] == w {
                return Ok(w);
            }
            w = alias[w];
        }
        Err(SessionError::Cyclic)
    };
    let mut map = vec![usize::MAX; wires.len()];
    let mut kept = vec![];
    for w in 0..wires.len() {
        if wires[w] != RUNTIME && alias[w] == w {
            map[w] = kept.len();
            kept.push(wires[w].clone());
        }
    }
    let m = |w: WireId| -> Result<WireId, SessionError> { Ok(map[resolve(w)?]) };
    let mut out_nodes = vec![];
    for (i, n) in nodes.iter().enumerate() {
        if is_event[i] {
            continue;
        }
        out_nodes.push(Node {
            gen: n.gen.clone(),
            ins: n.ins.iter().map(|&w| m(w)).collect::<Result<_, _>>()?,
            outs: n.outs.iter().map(|&w| m(w)).collect::<Result<_, _>>()?,
        });
    }
    let mut r = kept.len();
    kept.push(RUNTIME.to_string());
    let r0 = r;
    for (q, h) in header.iter().enumerate() {
        let ty = &s.output()[q].ty;
        let next = kept.len();
        kept.push(RUNTIME.to_string());
        let node = match h.as_ref().expect("every output item is paired") {
            Header::Kept(i) => {
                let n = &nodes[*i];
                match s.output()[q].pol {
                    Polarity::Recv => Node {
                        gen: n.gen.clone(),
                        ins: vec![r],
                        outs: vec![next, m(n.outs[1])?],
                    },
                    Polarity::Send => Node {
                        gen: n.gen.clone(),
                        ins: vec![r, m(n.ins[1])?],
                        outs: vec![next],
                    },
                }
            }
            Header::SpawnRecv(x) => Node {
                gen: recv_name(ty),
                ins: vec![r],
                outs: vec![next, map[*x]],
            },
            Header::SpawnSend(x) => Node {
                gen: send_name(ty),
                ins: vec![r, map[*x]],
                outs: vec![next],
            },
        };
        out_nodes.push(node);
        r = next;
    }
    let d = Diagram::from_parts(sig, kept, out_nodes, vec![r0], vec![r])?;
    Session::new(base, d)
}

/// Receives the inputs in reverse order, runs `d`, then sends the outputs in order.
pub fn in_proc(base: &Arc<Polygraph>, d: &Diagram) -> Result<Session, SessionError> {
    let mut b = Builder::new(session_signature(base)?);
    let r0 = b.wire(RUNTIME)?;
    let mut r = r0;
    let dom = d.dom();
    let mut xs = vec![0; dom.len()];
    for k in (0..dom.len()).rev() {
        let o = b.node(&recv_name(&dom[k]), &[r])?;
        r = o[0];
        xs[k] = o[1];
    }
    let ys = b.inline(d, &xs)?;
    for (y, t) in ys.into_iter().zip(d.cod()) {
        r = b.node(&send_name(&t), &[r, y])?[0];
    }
    Session::new(base, b.finish(vec![r0], vec![r])?)
}

/// Event list of a process `A -> B`: the inputs received in reverse, then the outputs sent.
pub fn process_events(dom: &[String], cod: &[String]) -> PolarList {
    dom.iter()
        .rev()
        .map(|t| Polar::recv(t))
        .chain(cod.iter().map(|t| Polar::send(t)))
        .collect()
}

/// Input and output types of a process-shaped session.
pub fn process_shape(s: &Session) -> Result<(Vec<String>, Vec<String>), SessionError> {
    let ev = s.events();
    let k = ev.iter().take_while(|e| e.pol == Polarity::Recv).count();
    if !s.is_closed() || ev[k..].iter().any(|e| e.pol == Polarity::Recv) {
        return Err(SessionError::NotProcess(format_polar_list(&ev)));
    }
    Ok((
        ev[..k].iter().rev().map(|e| e.ty.clone()).collect(),
        ev[k..].iter().map(|e| e.ty.clone()).collect(),
    ))
}

fn glue_shuffle(inputs: Vec<PolarList>, output: PolarList, pairing: Vec<(Loc, Loc)>) -> PolarShuffle {
    PolarShuffle::new(inputs, output, pairing).expect("process shuffle is valid")
}

/// Sequential composition of processes.
pub fn proc_compose(base: &Arc<Polygraph>, f: &Session, g: &Session) -> Result<Session, SessionError> {
    let (a, b) = process_shape(f)?;
    let (b2, c) = process_shape(g)?;
    if b != b2 {
        return Err(SessionError::ProcessTypes(b, b2));
    }
    let (n, m) = (a.len(), b.len());
    let mut pairing = vec![];
    for q in 0..n {
        pairing.push((Loc::Out(q), Loc::In(0, q)));
    }
    for k in 0..m {
        pairing.push((Loc::In(0, n + k), Loc::In(1, m - 1 - k)));
    }
    for k in 0..c.len() {
        pairing.push((Loc::In(1, m + k), Loc::Out(n + k)));
    }
    let s = glue_shuffle(vec![f.events(), g.events()], process_events(&a, &c), pairing);
    glue(base, &[f.clone(), g.clone()], &s)
}

/// Parallel composition of processes: `A⊗C -> B⊗D`.
pub fn proc_tensor(base: &Arc<Polygraph>, f: &Session, g: &Session) -> Result<Session, SessionError> {
    let (a, b) = process_shape(f)?;
    let (c, d) = process_shape(g)?;
    let (na, nb, nc) = (a.len(), b.len(), c.len());
    let mut pairing = vec![];
    for q in 0..nc {
        pairing.push((Loc::Out(q), Loc::In(1, q)));
    }
    for q in 0..na {
        pairing.push((Loc::Out(nc + q), Loc::In(0, q)));
    }
    for k in 0..nb {
        pairing.push((Loc::In(0, na + k), Loc::Out(nc + na + k)));
    }
    for k in 0..d.len() {
        pairing.push((Loc::In(1, nc + k), Loc::Out(nc + na + nb + k)));
    }
    let output = process_events(&[a, c].concat(), &[b, d].concat());
    let s = glue_shuffle(vec![f.events(), g.events()], output, pairing);
    glue(base, &[f.clone(), g.clone()], &s)
}

/// The process forwarding input `perm[k]` to output `k`, built from spawned channels.
pub fn proc_permutation(base: &Arc<Polygraph>, types: &[String], perm: &[usize]) -> Result<Session, SessionError> {
    let n = types.len();
    let cod: Vec<String> = perm.iter().map(|&p| types[p].clone()).collect();
    let pairing = perm
        .iter()
        .enumerate()
        .map(|(k, &p)| (Loc::Out(n - 1 - p), Loc::Out(n + k)))
        .collect();
    let s = glue_shuffle(vec![], process_events(types, &cod), pairing);
    glue(base, &[], &s)
}

pub fn proc_id(base: &Arc<Polygraph>, types: &[String]) -> Result<Session, SessionError> {
    let perm: Vec<usize> = (0..types.len()).collect();
    proc_permutation(base, types, &perm)
}

/// The symmetry `A⊗B -> B⊗A`.
pub fn proc_symmetry(base: &Arc<Polygraph>, left: &[String], right: &[String]) -> Result<Session, SessionError> {
    let types = [left, right].concat();
    let perm: Vec<usize> = (left.len()..types.len()).chain(0..left.len()).collect();
    proc_permutation(base, &types, &perm)
}

/// Parses a session program: do-notation with `?T -> x` receives and `!x` sends.
pub fn parse_session(text: &str, base: &Arc<Polygraph>) -> Result<Session, SessionError> {
    let p = donotation::parse(text)?;
    session_from_program(&p, base)
}

pub fn session_from_program(p: &DoProgram, base: &Arc<Polygraph>) -> Result<Session, SessionError> {
    let t = donotation::check_with(p, base, true)?;
    let mut b = Builder::new(session_signature(base)?);
    let r0 = b.wire(RUNTIME)?;
    let mut r = r0;
    let mut wire = vec![usize::MAX; t.var_names.len()];
    for &v in &t.params {
        wire[v] = b.wire(&t.var_types[v])?;
    }
    for st in &t.stmts {
        match st {
            donotation::TStmt::Call { gen, args, binders } => {
                let ins: Vec<_> = args.iter().map(|&v| wire[v]).collect();
                for (&v, w) in binders.iter().zip(b.node(gen, &ins)?) {
                    wire[v] = w;
                }
            }
            donotation::TStmt::Send { var } => {
                r = b.node(&send_name(&t.var_types[*var]), &[r, wire[*var]])?[0];
            }
            donotation::TStmt::Recv { var } => {
                let o = b.node(&recv_name(&t.var_types[*var]), &[r])?;
                r = o[0];
                wire[*var] = o[1];
            }
        }
    }
    let mut ins = vec![r0];
    ins.extend(t.params.iter().map(|&v| wire[v]));
    let mut outs = vec![r];
    outs.extend(t.returns.iter().map(|&v| wire[v]));
    Session::new(base, b.finish(ins, outs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polar::parse_polar_list;
    use crate::signature::Generator;

    fn base() -> Arc<Polygraph> {
        Arc::new(
            Polygraph::new(
                vec![
                    "A".into(),
                    "B".into(),
                    "X".into(),
                    "Y".into(),
                    "M".into(),
                    "N".into(),
                    "U".into(),
                    "V".into(),
                ],
                vec![
                    Generator::pure("f", &["A"], &["M", "X"]),
                    Generator::pure("g", &["M", "Y"], &["B"]),
                    Generator::pure("h", &["X", "U"], &["N"]),
                    Generator::pure("k", &["N"], &["Y", "V"]),
                    Generator::pure("p", &["A"], &["B"]),
                    Generator::pure("q", &["B"], &["X"]),
                    Generator::pure("t", &["X", "X"], &["X"]),
                ],
            )
            .unwrap(),
        )
    }

    fn pure(b: &Arc<Polygraph>, g: &str) -> Diagram {
        Diagram::from_generator(b, g).unwrap()
    }

    #[test]
    fn events_examples() {
        let b = base();
        let empty = in_proc(&b, &Diagram::identity(&b, &[]).unwrap()).unwrap();
        assert!(empty.events().is_empty());
        let s = in_proc(&b, &pure(&b, "p")).unwrap();
        assert_eq!(s.events(), parse_polar_list("?A !B").unwrap());
        let t = in_proc(&b, &pure(&b, "t")).unwrap();
        assert_eq!(t.events(), parse_polar_list("?X ?X !X").unwrap());
    }

    #[test]
    fn rejects_bad_sessions() {
        let b = base();
        let sig = session_signature(&b).unwrap();
        assert!(matches!(
            Session::new(&b, pure(&b, "p")),
            Err(SessionError::WrongSignature)
        ));
        let d = Diagram::from_generator(&sig, "p").unwrap();
        assert!(matches!(Session::new(&b, d), Err(SessionError::Boundary)));
        let two_r = Diagram::identity(&sig, &[RUNTIME.into(), RUNTIME.into()]).unwrap();
        assert!(matches!(Session::new(&b, two_r), Err(SessionError::Boundary)));
    }

    #[test]
    fn parse_examples() {
        let b = base();
        let s = parse_session("s():\n ?A -> x\n !x\n return()", &b).unwrap();
        assert_eq!(s.events(), parse_polar_list("?A !A").unwrap());
        let open = s.open().unwrap();
        assert!(open.is_equal(&Diagram::identity(&b, &["A".into()]).unwrap()));
        let q = parse_session("s(a: A):\n p(a) -> y\n return(y)", &b).unwrap();
        assert!(q.events().is_empty());
        assert_eq!((q.dom(), q.cod()), (vec!["A".to_string()], vec!["B".to_string()]));
        let bad = parse_session("s():\n ?A -> x\n return()", &b);
        assert!(matches!(bad, Err(SessionError::Do(DoError::Unused(_)))));
    }

    #[test]
    fn program_roundtrip() {
        let b = base();
        let s = parse_session(
            "s(m: M):\n ?Y -> y\n g(m, y) -> o\n ?A -> a\n f(a) -> (m2, x)\n !x\n return(o, m2)",
            &b,
        )
        .unwrap();
        let text = donotation::print(&s.to_program("s"));
        let back = parse_session(&text, &b).unwrap();
        assert!(back.is_equal(&s));
        assert_eq!(back.events(), s.events());
    }

    #[test]
    fn comb_examples() {
        let b = base();
        let free = parse_session("s(a: A):\n p(a) -> y\n return(y)", &b).unwrap();
        let c = free.to_comb();
        assert_eq!(c.pieces.len(), 1);
        assert!(Session::from_comb(&b, &c).unwrap().is_equal(&free));
        let one = parse_session("s(a: A):\n f(a) -> (m, x)\n !x\n return(m)", &b).unwrap();
        let c = one.to_comb();
        assert_eq!(c.pieces.len(), 2);
        assert_eq!(c.pieces[0].dom(), vec!["A"]);
        assert_eq!(c.pieces[0].cod(), vec!["M", "X"]);
        assert_eq!(c.residuals, vec![vec!["M".to_string()]]);
        assert_eq!(c.pieces[1].dom(), vec!["M"]);
        assert!(Session::from_comb(&b, &c).unwrap().is_equal(&one));
        let mixed = parse_session(
            "s(m: M):\n ?Y -> y\n ?A -> a\n g(m, y) -> o\n f(a) -> (m2, x)\n !x\n q(o) -> z\n !z\n return(m2)",
            &b,
        )
        .unwrap();
        let c = mixed.to_comb();
        assert_eq!(c.holes, mixed.events());
        c.validate().unwrap();
        assert!(Session::from_comb(&b, &c).unwrap().is_equal(&mixed));
    }

    #[test]
    fn glue_identity() {
        let b = base();
        let s = in_proc(&b, &pure(&b, "t")).unwrap();
        let id = PolarShuffle::identity(&s.events());
        assert!(glue(&b, std::slice::from_ref(&s), &id).unwrap().is_equal(&s));
        let wrong = PolarShuffle::identity(&parse_polar_list("?X !X").unwrap());
        assert!(matches!(
            glue(&b, &[s], &wrong),
            Err(SessionError::EventMismatch { part: 0, .. })
        ));
    }

    #[test]
    fn two_sessions_along_a_shuffle() {
        let b = base();
        let left = parse_session(
            "l():\n ?A -> a\n f(a) -> (m, x)\n !x\n ?Y -> y\n g(m, y) -> o\n !o\n return()",
            &b,
        )
        .unwrap();
        let right = parse_session(
            "r():\n ?X -> x\n ?U -> u\n h(x, u) -> n\n k(n) -> (y, v)\n !v\n !y\n return()",
            &b,
        )
        .unwrap();
        assert_eq!(left.events(), parse_polar_list("?A !X ?Y !B").unwrap());
        assert_eq!(right.events(), parse_polar_list("?X ?U !V !Y").unwrap());
        let s = PolarShuffle::infer(
            &[left.events(), right.events()],
            &parse_polar_list("?A ?U !V !B").unwrap(),
        )
        .unwrap()
        .unwrap();
        let g = glue(&b, &[left, right], &s).unwrap();
        assert_eq!(g.events(), s.output());
        let expect = parse_session(
            "e():\n ?A -> a\n ?U -> u\n f(a) -> (m, x)\n h(x, u) -> n\n k(n) -> (y, v)\n !v\n g(m, y) -> o\n !o\n return()",
            &b,
        )
        .unwrap();
        assert!(g.is_equal(&expect));
    }

    #[test]
    fn proc_composition() {
        let b = base();
        let p = pure(&b, "p");
        let q = pure(&b, "q");
        let lhs = proc_compose(&b, &in_proc(&b, &p).unwrap(), &in_proc(&b, &q).unwrap()).unwrap();
        let rhs = in_proc(&b, &p.compose(&q).unwrap()).unwrap();
        assert!(lhs.is_equal(&rhs));
        let x = in_proc(&b, &pure(&b, "t")).unwrap();
        let xx = vec!["X".to_string(), "X".to_string()];
        let l = proc_compose(&b, &proc_id(&b, &xx).unwrap(), &x).unwrap();
        let r = proc_compose(&b, &x, &proc_id(&b, &["X".into()]).unwrap()).unwrap();
        assert!(l.is_equal(&x) && r.is_equal(&x));
        let id = in_proc(&b, &Diagram::identity(&b, &xx).unwrap()).unwrap();
        assert!(proc_id(&b, &xx).unwrap().is_equal(&id));
    }

    #[test]
    fn proc_structure() {
        let b = base();
        let (a, x) = (vec!["A".to_string()], vec!["X".to_string()]);
        let f = in_proc(&b, &pure(&b, "p")).unwrap();
        let g = in_proc(&b, &pure(&b, "q")).unwrap();
        let t = proc_tensor(&b, &f, &g).unwrap();
        let d = pure(&b, "p").tensor(&pure(&b, "q")).unwrap();
        assert!(t.is_equal(&in_proc(&b, &d).unwrap()));
        let s = proc_symmetry(&b, &a, &x).unwrap();
        let back = proc_symmetry(&b, &x, &a).unwrap();
        let both = proc_compose(&b, &s, &back).unwrap();
        assert!(both.is_equal(&proc_id(&b, &[a.clone(), x.clone()].concat()).unwrap()));
        let sym = Diagram::symmetry(&b, &a, &x).unwrap();
        assert!(s.is_equal(&in_proc(&b, &sym).unwrap()));
        assert!(matches!(proc_compose(&b, &f, &f), Err(SessionError::ProcessTypes(..))));
        let odd = parse_session("o():\n ?A -> a\n !a\n ?A -> c\n !c\n return()", &b).unwrap();
        assert!(matches!(process_shape(&odd), Err(SessionError::NotProcess(_))));
    }
}
