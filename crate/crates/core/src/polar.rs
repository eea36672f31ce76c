//! Polar lists and polar shuffles.
//!
//! A polar shuffle from input lists `X₁…Xₙ` to an output list `Y` is a type-preserving
//! bijection from the sends of the inputs and the receives of the output onto the
//! sends of the output and the receives of the inputs, whose induced graph is acyclic.
//! `!` (•) marks a send and `?` (∘) a receive throughout.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::shuffle::Shuffling;

/// Type used by untyped shuffles and by encodings without annotations.
pub const UNTYPED: &str = "*";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Send,
    Recv,
}

impl Polarity {
    pub fn symbol(self) -> char {
        match self {
            Polarity::Send => '!',
            Polarity::Recv => '?',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Polar {
    pub ty: String,
    pub pol: Polarity,
}

impl Polar {
    pub fn send(ty: &str) -> Self {
        Polar {
            ty: ty.to_string(),
            pol: Polarity::Send,
        }
    }

    pub fn recv(ty: &str) -> Self {
        Polar {
            ty: ty.to_string(),
            pol: Polarity::Recv,
        }
    }
}

impl fmt::Display for Polar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.pol.symbol(), self.ty)
    }
}

pub type PolarList = Vec<Polar>;

/// Parses a whitespace or comma separated list such as `!X ?Y`.
pub fn parse_polar_list(text: &str) -> Result<PolarList, PolarError> {
    text.split(|c: char| c.is_whitespace() || c == ',' || c == '[' || c == ']')
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (pol, ty) = match item.chars().next() {
                Some('!') => (Polarity::Send, &item[1..]),
                Some('?') => (Polarity::Recv, &item[1..]),
                _ => return Err(PolarError::Syntax(format!("bad polar item `{item}`"))),
            };
            if ty.is_empty() {
                return Err(PolarError::Syntax(format!("bad polar item `{item}`")));
            }
            Ok(Polar {
                ty: ty.to_string(),
                pol,
            })
        })
        .collect()
}

pub fn format_polar_list(list: &[Polar]) -> String {
    let items: Vec<String> = list.iter().map(|p| p.to_string()).collect();
    format!("[{}]", items.join(", "))
}

/// A position in one of the lists of a polar shuffle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Loc {
    In(usize, usize),
    Out(usize),
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Loc::In(i, p) => write!(f, "in{i}[{p}]"),
            Loc::Out(p) => write!(f, "out[{p}]"),
        }
    }
}

/// Why a candidate polar shuffle is rejected.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Violation {
    #[error("position {0} out of range")]
    OutOfRange(Loc),
    #[error("{0} is not in the domain of the pairing")]
    NotDomain(Loc),
    #[error("{0} is not in the codomain of the pairing")]
    NotCodomain(Loc),
    #[error("{0} is paired more than once or not at all")]
    NotBijective(Loc),
    #[error("pairing {0} -> {1} changes the type")]
    TypeMismatch(Loc, Loc),
    #[error("cycle {}", .0.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" -> "))]
    Cycle(Vec<Loc>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolarError {
    #[error("invalid polar shuffle: {0}")]
    Invalid(#[from] Violation),
    #[error("border mismatch: output {found} does not match input list {expected}")]
    Border { expected: String, found: String },
    #[error("input {0} out of range")]
    BadPosition(usize),
    #[error("tensor needs equal arities, got {0} and {1}")]
    Arity(usize, usize),
    #[error("type `{0}` is not distinctly typed")]
    NotDistinct(String),
    #[error("cannot swap items of different polarity")]
    PolarityMismatch,
    #[error("lift needs one list per block with matching sizes")]
    LiftMismatch,
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("edge `{0}` occurs {1} times, expected 2")]
    EdgeCount(String, usize),
    #[error("edge `{0}` must join one sender side and one receiver side")]
    IllegalPairing(String),
    #[error("edge `{edge}` has conflicting types `{a}` and `{b}`")]
    EdgeType { edge: String, a: String, b: String },
    #[error("encoding has {found} inner lists, expected {expected}")]
    PartCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PolarShuffle {
    inputs: Vec<PolarList>,
    output: PolarList,
    pairing: Vec<(Loc, Loc)>,
}

struct Layout {
    offsets: Vec<usize>,
    total: usize,
}

impl Layout {
    fn new(inputs: &[PolarList], output: &[Polar]) -> Self {
        let mut offsets = Vec::with_capacity(inputs.len() + 1);
        let mut acc = 0;
        for l in inputs {
            offsets.push(acc);
            acc += l.len();
        }
        offsets.push(acc);
        Layout {
            offsets,
            total: acc + output.len(),
        }
    }

    fn index(&self, l: Loc) -> usize {
        match l {
            Loc::In(i, p) => self.offsets[i] + p,
            Loc::Out(p) => self.offsets[self.offsets.len() - 1] + p,
        }
    }

    fn loc(&self, v: usize) -> Loc {
        let n = self.offsets.len() - 1;
        if v >= self.offsets[n] {
            return Loc::Out(v - self.offsets[n]);
        }
        let i = self.offsets.partition_point(|&o| o <= v) - 1;
        // Skip empty lists sharing the same offset.
        let mut i = i;
        while self.offsets[i + 1] <= v {
            i += 1;
        }
        Loc::In(i, v - self.offsets[i])
    }
}

fn item<'a>(inputs: &'a [PolarList], output: &'a [Polar], l: Loc) -> Option<&'a Polar> {
    match l {
        Loc::In(i, p) => inputs.get(i)?.get(p),
        Loc::Out(p) => output.get(p),
    }
}

fn is_domain(l: Loc, p: &Polar) -> bool {
    matches!(
        (l, p.pol),
        (Loc::In(..), Polarity::Send) | (Loc::Out(_), Polarity::Recv)
    )
}

/// Checks the bijection and acyclicity conditions in time linear in the list lengths.
pub fn check(inputs: &[PolarList], output: &[Polar], pairing: &[(Loc, Loc)]) -> Result<(), Violation> {
    let lay = Layout::new(inputs, output);
    let mut next = vec![usize::MAX; lay.total];
    let mut hit_dom = vec![false; lay.total];
    let mut hit_cod = vec![false; lay.total];
    for &(a, b) in pairing {
        let pa = item(inputs, output, a).ok_or(Violation::OutOfRange(a))?;
        let pb = item(inputs, output, b).ok_or(Violation::OutOfRange(b))?;
        if !is_domain(a, pa) {
            return Err(Violation::NotDomain(a));
        }
        if is_domain(b, pb) {
            return Err(Violation::NotCodomain(b));
        }
        if pa.ty != pb.ty {
            return Err(Violation::TypeMismatch(a, b));
        }
        let (ia, ib) = (lay.index(a), lay.index(b));
        if hit_dom[ia] {
            return Err(Violation::NotBijective(a));
        }
        if hit_cod[ib] {
            return Err(Violation::NotBijective(b));
        }
        hit_dom[ia] = true;
        hit_cod[ib] = true;
        next[ia] = ib;
    }
    for v in 0..lay.total {
        if !hit_dom[v] && !hit_cod[v] {
            return Err(Violation::NotBijective(lay.loc(v)));
        }
    }
    // Successors: the next item of the same list, and the paired item.
    let same_list_next = |v: usize| -> Option<usize> {
        let u = v + 1;
        if u < lay.total && !lay.offsets.contains(&u) {
            Some(u)
        } else {
            None
        }
    };
    let mut indeg = vec![0u32; lay.total];
    for v in 0..lay.total {
        if let Some(u) = same_list_next(v) {
            indeg[u] += 1;
        }
        if next[v] != usize::MAX {
            indeg[next[v]] += 1;
        }
    }
    let mut stack: Vec<usize> = (0..lay.total).filter(|&v| indeg[v] == 0).collect();
    let mut done = 0;
    while let Some(v) = stack.pop() {
        done += 1;
        for u in [same_list_next(v), (next[v] != usize::MAX).then_some(next[v])]
            .into_iter()
            .flatten()
        {
            indeg[u] -= 1;
            if indeg[u] == 0 {
                stack.push(u);
            }
        }
    }
    if done == lay.total {
        return Ok(());
    }
    // Every unfinished vertex has an unfinished predecessor; walk back until one repeats.
    let mut prev = vec![usize::MAX; lay.total];
    for v in 0..lay.total {
        if next[v] != usize::MAX {
            prev[next[v]] = v;
        }
    }
    let same_list_prev = |v: usize| (v > 0 && !lay.offsets.contains(&v)).then(|| v - 1);
    let mut v = (0..lay.total).find(|&v| indeg[v] > 0).unwrap();
    let mut seen = HashMap::new();
    let mut path = vec![];
    loop {
        if let Some(&at) = seen.get(&v) {
            return Err(Violation::Cycle(path[at..].iter().rev().map(|&x| lay.loc(x)).collect()));
        }
        seen.insert(v, path.len());
        path.push(v);
        v = [same_list_prev(v), (prev[v] != usize::MAX).then_some(prev[v])]
            .into_iter()
            .flatten()
            .find(|&u| indeg[u] > 0)
            .expect("unfinished vertex has an unfinished predecessor");
    }
}

impl PolarShuffle {
    pub fn new(inputs: Vec<PolarList>, output: PolarList, mut pairing: Vec<(Loc, Loc)>) -> Result<Self, PolarError> {
        check(&inputs, &output, &pairing)?;
        pairing.sort_unstable();
        Ok(PolarShuffle {
            inputs,
            output,
            pairing,
        })
    }

    pub fn inputs(&self) -> &[PolarList] {
        &self.inputs
    }

    pub fn output(&self) -> &[Polar] {
        &self.output
    }

    /// Pairs sorted by domain position.
    pub fn pairing(&self) -> &[(Loc, Loc)] {
        &self.pairing
    }

    pub fn item(&self, l: Loc) -> &Polar {
        item(&self.inputs, &self.output, l).expect("location in range")
    }

    pub fn partner(&self, l: Loc) -> Option<Loc> {
        self.pairing
            .binary_search_by(|(a, _)| a.cmp(&l))
            .ok()
            .map(|k| self.pairing[k].1)
    }

    pub fn validate(&self) -> Result<(), Violation> {
        check(&self.inputs, &self.output, &self.pairing)
    }

    /// Number of list items across inputs and output.
    pub fn size(&self) -> usize {
        self.inputs.iter().map(Vec::len).sum::<usize>() + self.output.len()
    }

    pub fn identity(list: &[Polar]) -> Self {
        let pairing = list
            .iter()
            .enumerate()
            .map(|(p, x)| match x.pol {
                Polarity::Send => (Loc::In(0, p), Loc::Out(p)),
                Polarity::Recv => (Loc::Out(p), Loc::In(0, p)),
            })
            .collect();
        PolarShuffle {
            inputs: vec![list.to_vec()],
            output: list.to_vec(),
            pairing,
        }
    }

    /// The shuffle with `arity` empty inputs and an empty output.
    pub fn empty(arity: usize) -> Self {
        PolarShuffle {
            inputs: vec![vec![]; arity],
            output: vec![],
            pairing: vec![],
        }
    }

    /// Substitutes `self` into input `position` of `t`, following pairing chains across the border.
    pub fn compose(&self, position: usize, t: &PolarShuffle) -> Result<PolarShuffle, PolarError> {
        let border = t.inputs.get(position).ok_or(PolarError::BadPosition(position))?;
        if *border != self.output {
            return Err(PolarError::Border {
                expected: format_polar_list(border),
                found: format_polar_list(&self.output),
            });
        }
        let n = self.inputs.len();
        let from_t = |l: Loc| match l {
            Loc::In(i, p) if i < position => Loc::In(i, p),
            Loc::In(i, p) => Loc::In(i + n - 1, p),
            Loc::Out(p) => Loc::Out(p),
        };
        let from_s = |l: Loc| match l {
            Loc::In(j, p) => Loc::In(position + j, p),
            Loc::Out(_) => unreachable!("border item left the border"),
        };
        let s_map: HashMap<Loc, Loc> = self.pairing.iter().copied().collect();
        let t_map: HashMap<Loc, Loc> = t.pairing.iter().copied().collect();
        let follow = |mut in_t: bool, mut l: Loc| -> Loc {
            loop {
                if in_t {
                    match t_map[&l] {
                        Loc::In(i, p) if i == position => {
                            in_t = false;
                            l = Loc::Out(p);
                        }
                        other => return from_t(other),
                    }
                } else {
                    match s_map[&l] {
                        Loc::Out(p) => {
                            in_t = true;
                            l = Loc::In(position, p);
                        }
                        other => return from_s(other),
                    }
                }
            }
        };
        let mut pairing = vec![];
        for &(a, _) in &t.pairing {
            if !matches!(a, Loc::In(i, _) if i == position) {
                pairing.push((from_t(a), follow(true, a)));
            }
        }
        for &(a, _) in &self.pairing {
            if let Loc::In(..) = a {
                pairing.push((from_s(a), follow(false, a)));
            }
        }
        let mut inputs = t.inputs[..position].to_vec();
        inputs.extend(self.inputs.iter().cloned());
        inputs.extend(t.inputs[position + 1..].iter().cloned());
        let result = PolarShuffle::new(inputs, t.output.clone(), pairing);
        assert!(
            result.is_ok(),
            "composite of polar shuffles failed validation: {result:?}"
        );
        result
    }

    /// Pointwise concatenation of the lists; the graphs are placed side by side.
    pub fn tensor(&self, t: &PolarShuffle) -> Result<PolarShuffle, PolarError> {
        if self.inputs.len() != t.inputs.len() {
            return Err(PolarError::Arity(self.inputs.len(), t.inputs.len()));
        }
        let shift = |l: Loc| match l {
            Loc::In(i, p) => Loc::In(i, p + self.inputs[i].len()),
            Loc::Out(p) => Loc::Out(p + self.output.len()),
        };
        let mut pairing = self.pairing.clone();
        pairing.extend(t.pairing.iter().map(|&(a, b)| (shift(a), shift(b))));
        let inputs = self
            .inputs
            .iter()
            .zip(&t.inputs)
            .map(|(a, b)| [a.clone(), b.clone()].concat())
            .collect();
        let output = [self.output.clone(), t.output.clone()].concat();
        let result = PolarShuffle::new(inputs, output, pairing);
        assert!(result.is_ok(), "tensor of polar shuffles failed validation: {result:?}");
        result
    }

    /// The unique shuffle between distinctly typed lists, if its graph is acyclic.
    pub fn infer(inputs: &[PolarList], output: &[Polar]) -> Result<Option<PolarShuffle>, PolarError> {
        let mut dom: BTreeMap<&str, Vec<Loc>> = BTreeMap::new();
        let mut cod: BTreeMap<&str, Vec<Loc>> = BTreeMap::new();
        let locs = inputs
            .iter()
            .enumerate()
            .flat_map(|(i, l)| (0..l.len()).map(move |p| Loc::In(i, p)))
            .chain((0..output.len()).map(Loc::Out));
        for l in locs {
            let x = item(inputs, output, l).unwrap();
            if is_domain(l, x) {
                dom.entry(&x.ty).or_default().push(l);
            } else {
                cod.entry(&x.ty).or_default().push(l);
            }
        }
        let mut pairing = vec![];
        for (ty, ds) in &dom {
            match cod.get(ty) {
                Some(cs) if ds.len() == 1 && cs.len() == 1 => pairing.push((ds[0], cs[0])),
                _ => return Err(PolarError::NotDistinct(ty.to_string())),
            }
        }
        if let Some(ty) = cod.keys().find(|t| !dom.contains_key(*t)) {
            return Err(PolarError::NotDistinct(ty.to_string()));
        }
        match PolarShuffle::new(inputs.to_vec(), output.to_vec(), pairing) {
            Ok(s) => Ok(Some(s)),
            Err(PolarError::Invalid(Violation::Cycle(_))) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Reorders a single list: output item `k` is input item `perm[k]`.
    pub fn reorder(list: &[Polar], perm: &[usize]) -> Result<PolarShuffle, PolarError> {
        let output: PolarList = perm.iter().map(|&p| list[p].clone()).collect();
        let pairing = perm
            .iter()
            .enumerate()
            .map(|(k, &p)| match list[p].pol {
                Polarity::Send => (Loc::In(0, p), Loc::Out(k)),
                Polarity::Recv => (Loc::Out(k), Loc::In(0, p)),
            })
            .collect();
        PolarShuffle::new(vec![list.to_vec()], output, pairing)
    }

    /// `Γ, X•, X∘, Δ → Γ, Δ`
    pub fn link(gamma: &[Polar], x: &str, delta: &[Polar]) -> PolarShuffle {
        let g = gamma.len();
        let list = [gamma, &[Polar::send(x), Polar::recv(x)], delta].concat();
        PolarShuffle::link_many(&list, &[(g, g + 1)]).expect("link is valid")
    }

    /// `Γ, Δ → Γ, X∘, X•, Δ`
    pub fn spawn(gamma: &[Polar], x: &str, delta: &[Polar]) -> PolarShuffle {
        let g = gamma.len();
        let input = [gamma, delta].concat();
        let output = [gamma, &[Polar::recv(x), Polar::send(x)], delta].concat();
        let mut pairing = vec![(Loc::Out(g), Loc::Out(g + 1))];
        for (k, y) in output.iter().enumerate() {
            if k == g || k == g + 1 {
                continue;
            }
            let p = if k < g { k } else { k - 2 };
            pairing.push(match y.pol {
                Polarity::Send => (Loc::In(0, p), Loc::Out(k)),
                Polarity::Recv => (Loc::Out(k), Loc::In(0, p)),
            });
        }
        PolarShuffle::new(vec![input], output, pairing).expect("spawn is valid")
    }

    /// The nullary shuffle `→ X∘, X•`.
    pub fn spawn_pair(x: &str) -> PolarShuffle {
        PolarShuffle::new(
            vec![],
            vec![Polar::recv(x), Polar::send(x)],
            vec![(Loc::Out(0), Loc::Out(1))],
        )
        .expect("spawn is valid")
    }

    /// Links each `(send, recv)` pair of positions of `list` and keeps the rest in order.
    pub fn link_many(list: &[Polar], links: &[(usize, usize)]) -> Result<PolarShuffle, PolarError> {
        let mut gone = vec![false; list.len()];
        let mut pairing = vec![];
        for &(a, b) in links {
            gone[a] = true;
            gone[b] = true;
            pairing.push((Loc::In(0, a), Loc::In(0, b)));
        }
        let mut output = vec![];
        for (p, x) in list.iter().enumerate() {
            if gone[p] {
                continue;
            }
            let k = output.len();
            output.push(x.clone());
            pairing.push(match x.pol {
                Polarity::Send => (Loc::In(0, p), Loc::Out(k)),
                Polarity::Recv => (Loc::Out(k), Loc::In(0, p)),
            });
        }
        PolarShuffle::new(vec![list.to_vec()], output, pairing)
    }

    /// Send later: `Γ, X•, Δ, Ψ → Γ, Δ, X•, Ψ`.
    pub fn wait(gamma: &[Polar], x: &str, delta: &[Polar], psi: &[Polar]) -> PolarShuffle {
        let list = [gamma, &[Polar::send(x)], delta, psi].concat();
        let (g, d) = (gamma.len(), delta.len());
        let perm = move_item(list.len(), g, g + d);
        PolarShuffle::reorder(&list, &perm).expect("waiting is always valid")
    }

    /// Receive sooner: `Γ, Δ, X∘, Ψ → Γ, X∘, Δ, Ψ`.
    pub fn rush(gamma: &[Polar], delta: &[Polar], x: &str, psi: &[Polar]) -> PolarShuffle {
        let list = [gamma, delta, &[Polar::recv(x)], psi].concat();
        let (g, d) = (gamma.len(), delta.len());
        let perm = move_item(list.len(), g + d, g);
        PolarShuffle::reorder(&list, &perm).expect("rushing is always valid")
    }

    /// `Γ, X, Y, Δ → Γ, Y, X, Δ` for items of equal polarity.
    pub fn swap_same_polarity(
        gamma: &[Polar],
        x: &Polar,
        y: &Polar,
        delta: &[Polar],
    ) -> Result<PolarShuffle, PolarError> {
        if x.pol != y.pol {
            return Err(PolarError::PolarityMismatch);
        }
        let list = [gamma, &[x.clone(), y.clone()], delta].concat();
        let g = gamma.len();
        let perm = move_item(list.len(), g + 1, g);
        PolarShuffle::reorder(&list, &perm)
    }

    /// A plain shuffling of polar lists, one list per block.
    pub fn lift(plain: &Shuffling, lists: &[PolarList]) -> Result<PolarShuffle, PolarError> {
        if plain.blocks().len() != lists.len() || plain.blocks().iter().zip(lists).any(|(&b, l)| b != l.len()) {
            return Err(PolarError::LiftMismatch);
        }
        let mut output = vec![];
        let mut pairing = vec![];
        for (k, (b, off)) in plain.sources().into_iter().enumerate() {
            let x = &lists[b][off];
            output.push(x.clone());
            pairing.push(match x.pol {
                Polarity::Send => (Loc::In(b, off), Loc::Out(k)),
                Polarity::Recv => (Loc::Out(k), Loc::In(b, off)),
            });
        }
        PolarShuffle::new(lists.to_vec(), output, pairing)
    }

    /// Vertices of the induced graph in a deterministic topological order.
    fn ranks(&self) -> HashMap<Loc, usize> {
        let lay = Layout::new(&self.inputs, &self.output);
        let mut succ: Vec<Vec<usize>> = vec![vec![]; lay.total];
        let mut indeg = vec![0usize; lay.total];
        for v in 0..lay.total {
            if v + 1 < lay.total && !lay.offsets.contains(&(v + 1)) {
                succ[v].push(v + 1);
                indeg[v + 1] += 1;
            }
        }
        for &(a, b) in &self.pairing {
            succ[lay.index(a)].push(lay.index(b));
            indeg[lay.index(b)] += 1;
        }
        let mut ready: std::collections::BTreeSet<usize> = (0..lay.total).filter(|&v| indeg[v] == 0).collect();
        let mut rank = HashMap::new();
        while let Some(v) = ready.pop_first() {
            rank.insert(lay.loc(v), rank.len());
            for &u in &succ[v] {
                indeg[u] -= 1;
                if indeg[u] == 0 {
                    ready.insert(u);
                }
            }
        }
        rank
    }

    /// Splits into per-input reorders, spawns, a plain shuffling and final links.
    pub fn factor(&self) -> Factorization {
        let rank = self.ranks();
        #[derive(Clone, Copy)]
        enum Elem {
            Input(usize, usize),
            Spawn(usize, Polarity),
        }
        let mut elems: Vec<(usize, Elem)> = vec![];
        let mut spawn_types = vec![];
        for (i, list) in self.inputs.iter().enumerate() {
            for (p, x) in list.iter().enumerate() {
                let here = Loc::In(i, p);
                let header = match x.pol {
                    Polarity::Send => self.partner(here).filter(|l| matches!(l, Loc::Out(_))),
                    Polarity::Recv => self
                        .pairing
                        .iter()
                        .find(|(a, b)| *b == here && matches!(a, Loc::Out(_)))
                        .map(|(a, _)| *a),
                };
                let time = rank[&header.unwrap_or(here)];
                elems.push((time, Elem::Input(i, p)));
            }
        }
        for &(a, b) in &self.pairing {
            if let (Loc::Out(_), Loc::Out(_)) = (a, b) {
                let k = spawn_types.len();
                spawn_types.push(self.item(a).ty.clone());
                elems.push((rank[&a], Elem::Spawn(k, Polarity::Recv)));
                elems.push((rank[&b], Elem::Spawn(k, Polarity::Send)));
            }
        }
        elems.sort_by_key(|e| e.0);
        let n = self.inputs.len();
        let mut reorders = vec![vec![]; n];
        let mut assignment = vec![];
        let mut at: HashMap<Loc, usize> = HashMap::new();
        let mut spawns = vec![(String::new(), 0, 0); spawn_types.len()];
        for (pos, &(_, e)) in elems.iter().enumerate() {
            match e {
                Elem::Input(i, p) => {
                    reorders[i].push(p);
                    assignment.push(i);
                    at.insert(Loc::In(i, p), pos);
                }
                Elem::Spawn(k, pol) => {
                    assignment.push(n + k);
                    spawns[k].0 = spawn_types[k].clone();
                    match pol {
                        Polarity::Recv => spawns[k].1 = pos,
                        Polarity::Send => spawns[k].2 = pos,
                    }
                }
            }
        }
        let mut blocks: Vec<usize> = self.inputs.iter().map(Vec::len).collect();
        blocks.extend(std::iter::repeat_n(2, spawns.len()));
        let shuffle = Shuffling::new(blocks, assignment).expect("blocks are consistent");
        let mut links: Vec<(usize, usize)> = self
            .pairing
            .iter()
            .filter_map(|&(a, b)| match (a, b) {
                (Loc::In(..), Loc::In(..)) => Some((at[&a], at[&b])),
                _ => None,
            })
            .collect();
        links.sort_unstable();
        Factorization {
            inputs: self.inputs.clone(),
            reorders,
            spawns,
            shuffle,
            links,
        }
    }
}

/// Permutation of `0..len` moving the item at `from` to index `to`.
fn move_item(len: usize, from: usize, to: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..len).collect();
    let x = perm.remove(from);
    perm.insert(to, x);
    perm
}

/// A polar shuffle pulled apart into reorders, spawns, a plain shuffling and links.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factorization {
    pub inputs: Vec<PolarList>,
    /// Per input list, the new order of its items.
    pub reorders: Vec<Vec<usize>>,
    /// Spawned channel types with the positions of their receive and send in the shuffled list.
    pub spawns: Vec<(String, usize, usize)>,
    /// Blocks are the reordered inputs followed by one block of size two per spawn.
    pub shuffle: Shuffling,
    /// `(send, recv)` positions of the shuffled list that get linked.
    pub links: Vec<(usize, usize)>,
}

impl Factorization {
    pub fn reordered(&self, i: usize) -> PolarList {
        self.reorders[i].iter().map(|&p| self.inputs[i][p].clone()).collect()
    }

    pub fn recompose(&self) -> Result<PolarShuffle, PolarError> {
        let n = self.inputs.len();
        let mut lists: Vec<PolarList> = (0..n).map(|i| self.reordered(i)).collect();
        for (ty, _, _) in &self.spawns {
            lists.push(vec![Polar::recv(ty), Polar::send(ty)]);
        }
        let mut s = PolarShuffle::lift(&self.shuffle, &lists)?;
        for (ty, _, _) in &self.spawns {
            s = PolarShuffle::spawn_pair(ty).compose(n, &s)?;
        }
        let linker = PolarShuffle::link_many(&s.output, &self.links)?;
        s = s.compose(0, &linker)?;
        for i in 0..n {
            let r = PolarShuffle::reorder(&self.inputs[i], &self.reorders[i])?;
            s = r.compose(i, &s)?;
        }
        Ok(s)
    }
}

impl fmt::Display for Factorization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.inputs.len() {
            writeln!(
                f,
                "reorder {i}: {} -> {}",
                format_polar_list(&self.inputs[i]),
                format_polar_list(&self.reordered(i))
            )?;
        }
        for (ty, r, s) in &self.spawns {
            writeln!(f, "spawn {ty} at {r},{s}")?;
        }
        writeln!(f, "shuffle {:?} {:?}", self.shuffle.blocks(), self.shuffle.assignment())?;
        for (a, b) in &self.links {
            writeln!(f, "link {a} -> {b}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Session encoding
// ---------------------------------------------------------------------------

type EdgeUse = (Loc, bool, Option<String>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeRef {
    pub pol: Polarity,
    pub edge: String,
    pub ty: Option<String>,
}

/// Parsed `name(!a, ?b) = { f(?a, ...), ... }` text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoding {
    pub name: String,
    pub header: Vec<EdgeRef>,
    pub parts: Vec<(String, Vec<EdgeRef>)>,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    text: &'a str,
}

impl<'a> Lexer<'a> {
    fn pos(&mut self) -> String {
        let at = self.chars.peek().map(|&(i, _)| i).unwrap_or(self.text.len());
        let line = self.text[..at].matches('\n').count() + 1;
        let col = at - self.text[..at].rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
        format!("{line}:{col}")
    }

    fn skip(&mut self) {
        while let Some(&(_, c)) = self.chars.peek() {
            if c.is_whitespace() {
                self.chars.next();
            } else if c == '#' {
                while let Some(&(_, c)) = self.chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.chars.next();
                }
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip();
        self.chars.peek().map(|&(_, c)| c)
    }

    fn expect(&mut self, c: char) -> Result<(), PolarError> {
        if self.peek() == Some(c) {
            self.chars.next();
            Ok(())
        } else {
            let at = self.pos();
            Err(PolarError::Syntax(format!("expected `{c}` at {at}")))
        }
    }

    fn ident(&mut self) -> Result<String, PolarError> {
        self.skip();
        let mut s = String::new();
        while let Some(&(_, c)) = self.chars.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                s.push(c);
                self.chars.next();
            } else {
                break;
            }
        }
        if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit()) {
            let at = self.pos();
            return Err(PolarError::Syntax(format!("expected identifier at {at}")));
        }
        Ok(s)
    }

    fn refs(&mut self) -> Result<Vec<EdgeRef>, PolarError> {
        self.expect('(')?;
        let mut out = vec![];
        if self.peek() == Some(')') {
            self.chars.next();
            return Ok(out);
        }
        loop {
            let pol = match self.peek() {
                Some('!') => Polarity::Send,
                Some('?') => Polarity::Recv,
                _ => {
                    let at = self.pos();
                    return Err(PolarError::Syntax(format!("expected `!` or `?` at {at}")));
                }
            };
            self.chars.next();
            let edge = self.ident()?;
            let ty = if self.peek() == Some(':') {
                self.chars.next();
                Some(self.ident()?)
            } else {
                None
            };
            out.push(EdgeRef { pol, edge, ty });
            match self.peek() {
                Some(',') => {
                    self.chars.next();
                }
                Some(')') => {
                    self.chars.next();
                    return Ok(out);
                }
                _ => {
                    let at = self.pos();
                    return Err(PolarError::Syntax(format!("expected `,` or `)` at {at}")));
                }
            }
        }
    }
}

impl Encoding {
    pub fn parse(text: &str) -> Result<Encoding, PolarError> {
        let mut lx = Lexer {
            chars: text.char_indices().peekable(),
            text,
        };
        let name = lx.ident()?;
        let header = lx.refs()?;
        lx.expect('=')?;
        lx.expect('{')?;
        let mut parts = vec![];
        if lx.peek() != Some('}') {
            loop {
                let n = lx.ident()?;
                let r = lx.refs()?;
                parts.push((n, r));
                if lx.peek() == Some(',') {
                    lx.chars.next();
                } else {
                    break;
                }
            }
        }
        lx.expect('}')?;
        if lx.peek().is_some() {
            let at = lx.pos();
            return Err(PolarError::Syntax(format!("trailing input at {at}")));
        }
        Ok(Encoding { name, header, parts })
    }

    /// Builds the shuffle; item types come from annotations, then from `types`
    /// (one list per part, matched positionally), then default to [`UNTYPED`].
    pub fn to_shuffle(&self, types: Option<&[PolarList]>) -> Result<PolarShuffle, PolarError> {
        if let Some(ts) = types {
            if ts.len() != self.parts.len() {
                return Err(PolarError::PartCount {
                    expected: self.parts.len(),
                    found: ts.len(),
                });
            }
        }
        // per edge: where it occurs, whether on the sending side, and its annotation
        let mut occ: BTreeMap<&str, Vec<EdgeUse>> = BTreeMap::new();
        let mut inputs = vec![];
        for (i, (_, refs)) in self.parts.iter().enumerate() {
            let given = types.map(|t| &t[i]);
            if let Some(g) = given {
                if g.len() != refs.len() || g.iter().zip(refs).any(|(a, r)| a.pol != r.pol) {
                    return Err(PolarError::Border {
                        expected: format_polar_list(g),
                        found: format!("part `{}`", self.parts[i].0),
                    });
                }
            }
            let mut list = vec![];
            for (p, r) in refs.iter().enumerate() {
                let ty = r.ty.clone().or_else(|| given.map(|g| g[p].ty.clone()));
                occ.entry(&r.edge)
                    .or_default()
                    .push((Loc::In(i, p), r.pol == Polarity::Send, ty));
                list.push(r.pol);
            }
            inputs.push(list);
        }
        let mut output = vec![];
        for (p, r) in self.header.iter().enumerate() {
            occ.entry(&r.edge)
                .or_default()
                .push((Loc::Out(p), r.pol == Polarity::Recv, r.ty.clone()));
            output.push(r.pol);
        }
        let mut ty_of: HashMap<Loc, String> = HashMap::new();
        let mut pairing = vec![];
        for (edge, uses) in &occ {
            if uses.len() != 2 {
                return Err(PolarError::EdgeCount(edge.to_string(), uses.len()));
            }
            let (dom, cod) = match (uses[0].1, uses[1].1) {
                (true, false) => (&uses[0], &uses[1]),
                (false, true) => (&uses[1], &uses[0]),
                _ => return Err(PolarError::IllegalPairing(edge.to_string())),
            };
            let ty = match (&dom.2, &cod.2) {
                (Some(a), Some(b)) if a != b => {
                    return Err(PolarError::EdgeType {
                        edge: edge.to_string(),
                        a: a.clone(),
                        b: b.clone(),
                    })
                }
                (Some(a), _) | (None, Some(a)) => a.clone(),
                (None, None) => UNTYPED.to_string(),
            };
            ty_of.insert(dom.0, ty.clone());
            ty_of.insert(cod.0, ty);
            pairing.push((dom.0, cod.0));
        }
        let inputs = inputs
            .iter()
            .enumerate()
            .map(|(i, l)| {
                l.iter()
                    .enumerate()
                    .map(|(p, &pol)| Polar {
                        ty: ty_of[&Loc::In(i, p)].clone(),
                        pol,
                    })
                    .collect()
            })
            .collect();
        let output = output
            .iter()
            .enumerate()
            .map(|(p, &pol)| Polar {
                ty: ty_of[&Loc::Out(p)].clone(),
                pol,
            })
            .collect();
        PolarShuffle::new(inputs, output, pairing)
    }

    /// Prints a shuffle with generated edge names `e0, e1, …` and part names `p0, p1, …`
    /// unless names are supplied.
    pub fn print(s: &PolarShuffle, name: &str, part_names: Option<&[String]>) -> String {
        let mut edge_of: HashMap<Loc, String> = HashMap::new();
        for (k, &(a, b)) in s.pairing.iter().enumerate() {
            edge_of.insert(a, format!("e{k}"));
            edge_of.insert(b, format!("e{k}"));
        }
        let show = |l: Loc, x: &Polar| {
            let ann = if x.ty == UNTYPED {
                String::new()
            } else {
                format!(":{}", x.ty)
            };
            format!("{}{}{}", x.pol.symbol(), edge_of[&l], ann)
        };
        let header: Vec<String> = s.output.iter().enumerate().map(|(p, x)| show(Loc::Out(p), x)).collect();
        let mut out = format!("{name}({}) = {{", header.join(", "));
        for (i, list) in s.inputs.iter().enumerate() {
            let pname = part_names
                .and_then(|n| n.get(i).cloned())
                .unwrap_or_else(|| format!("p{i}"));
            let items: Vec<String> = list.iter().enumerate().map(|(p, x)| show(Loc::In(i, p), x)).collect();
            out.push_str(if i == 0 { "\n  " } else { ",\n  " });
            out.push_str(&format!("{pname}({})", items.join(", ")));
        }
        out.push_str("\n}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(text: &str) -> PolarList {
        parse_polar_list(text).unwrap()
    }

    #[test]
    fn link_and_spawn_shapes() {
        let lnk = PolarShuffle::new(vec![l("!X ?X")], vec![], vec![(Loc::In(0, 0), Loc::In(0, 1))]);
        assert!(lnk.is_ok());
        let spw = PolarShuffle::new(vec![], l("?X !X"), vec![(Loc::Out(0), Loc::Out(1))]);
        assert!(spw.is_ok());
        let rev = PolarShuffle::new(vec![], l("!X ?X"), vec![(Loc::Out(1), Loc::Out(0))]);
        match rev {
            Err(PolarError::Invalid(Violation::Cycle(c))) => {
                assert_eq!(c.len(), 2);
                assert!(c.contains(&Loc::Out(0)) && c.contains(&Loc::Out(1)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cycle_witness_skips_downstream_items() {
        // the items after the cycle are blocked too, but are not on it
        let list = l("?A !B ?D !X ?C !E");
        match PolarShuffle::reorder(&list, &[0, 1, 3, 2, 4, 5]) {
            Err(PolarError::Invalid(Violation::Cycle(c))) => {
                assert!(!c.is_empty());
                assert!(c
                    .iter()
                    .all(|x| !matches!(x, Loc::In(0, 4) | Loc::In(0, 5) | Loc::Out(4) | Loc::Out(5))));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pairing_must_be_a_typed_bijection() {
        let e = PolarShuffle::new(vec![l("!X")], l("!Y"), vec![(Loc::In(0, 0), Loc::Out(0))]);
        assert!(matches!(e, Err(PolarError::Invalid(Violation::TypeMismatch(..)))));
        let e = PolarShuffle::new(vec![l("!X")], l("!X"), vec![]);
        assert!(matches!(e, Err(PolarError::Invalid(Violation::NotBijective(_)))));
        let e = PolarShuffle::new(vec![l("!X")], l("!X"), vec![(Loc::Out(0), Loc::In(0, 0))]);
        assert!(matches!(e, Err(PolarError::Invalid(Violation::NotDomain(_)))));
    }

    #[test]
    fn identity_and_empty() {
        assert!(PolarShuffle::identity(&[]).validate().is_ok());
        let id = PolarShuffle::identity(&l("!X"));
        assert_eq!(id.pairing(), &[(Loc::In(0, 0), Loc::Out(0))]);
        assert!(PolarShuffle::identity(&l("!X ?X")).validate().is_ok());
        let t = PolarShuffle::link(&[], "X", &[]);
        assert_eq!(PolarShuffle::identity(&l("!X ?X")).compose(0, &t).unwrap(), t);
        let e = PolarShuffle::empty(1);
        assert_eq!(t.tensor(&e).unwrap(), t);
    }

    #[test]
    fn snake_laws() {
        let gamma = l("!A");
        let delta = l("?B");
        // Γ,X•,Δ → Γ,X•,X∘,X•,Δ → Γ,X•,Δ
        let base = [gamma.clone(), l("!X"), delta.clone()].concat();
        let spw = PolarShuffle::spawn(&[gamma.clone(), l("!X")].concat(), "X", &delta);
        let lnk = PolarShuffle::link(&gamma, "X", &[l("!X"), delta.clone()].concat());
        assert_eq!(spw.compose(0, &lnk).unwrap(), PolarShuffle::identity(&base));
        // Γ,X∘,Δ → Γ,X∘,X•,X∘,Δ → Γ,X∘,Δ
        let base = [gamma.clone(), l("?X"), delta.clone()].concat();
        let spw = PolarShuffle::spawn(&gamma, "X", &[l("?X"), delta.clone()].concat());
        let lnk = PolarShuffle::link(&[gamma.clone(), l("?X")].concat(), "X", &delta);
        assert_eq!(spw.compose(0, &lnk).unwrap(), PolarShuffle::identity(&base));
    }

    #[test]
    fn spawns_and_links_commute() {
        // Two spawns in either order, and two links in either order.
        let s1 = PolarShuffle::spawn(&[], "X", &[]);
        let a = s1.compose(0, &PolarShuffle::spawn(&l("?X !X"), "Y", &[])).unwrap();
        let s2 = PolarShuffle::spawn(&[], "Y", &[]);
        let b = s2.compose(0, &PolarShuffle::spawn(&[], "X", &l("?Y !Y"))).unwrap();
        assert_eq!(a, b);
        let list = l("!X ?X !Y ?Y");
        let a = PolarShuffle::link(&[], "X", &l("!Y ?Y"))
            .compose(0, &PolarShuffle::link(&[], "Y", &[]))
            .unwrap();
        let b = PolarShuffle::link(&l("!X ?X"), "Y", &[])
            .compose(0, &PolarShuffle::link(&[], "X", &[]))
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a, PolarShuffle::link_many(&list, &[(0, 1), (2, 3)]).unwrap());
    }

    #[test]
    fn tensor_of_links() {
        let t = PolarShuffle::link(&[], "X", &[]);
        let tt = t.tensor(&t).unwrap();
        assert_eq!(tt.inputs(), &[l("!X ?X !X ?X")]);
        assert!(tt.output().is_empty());
        assert_eq!(tt.pairing().len(), 2);
        let a = PolarShuffle::identity(&l("!X"));
        let b = PolarShuffle::identity(&l("?Y"));
        assert_eq!(a.tensor(&b).unwrap(), PolarShuffle::identity(&l("!X ?Y")));
        assert!(a.tensor(&PolarShuffle::empty(2)).is_err());
    }

    #[test]
    fn inference() {
        let s = PolarShuffle::infer(&[l("!A ?B")], &l("!A ?B")).unwrap().unwrap();
        assert_eq!(s, PolarShuffle::identity(&l("!A ?B")));
        assert!(PolarShuffle::infer(&[l("!X ?Y")], &l("?Y !X")).unwrap().is_some());
        assert!(PolarShuffle::infer(&[l("?Y !X")], &l("!X ?Y")).unwrap().is_none());
        assert_eq!(
            PolarShuffle::infer(&[l("!X !X")], &l("!X !X")),
            Err(PolarError::NotDistinct("X".into()))
        );
    }

    #[test]
    fn wait_rush_and_swaps() {
        let g = l("!A");
        let d = l("?B !C");
        let p = l("?D");
        let w = PolarShuffle::wait(&g, "X", &d, &p);
        assert_eq!(w.output(), &l("!A ?B !C !X ?D")[..]);
        let r = PolarShuffle::rush(&g, &d, "X", &p);
        assert_eq!(r.output(), &l("!A ?X ?B !C ?D")[..]);
        // Sending sooner across a receive is rejected.
        let list = l("?B !X");
        assert!(matches!(
            PolarShuffle::reorder(&list, &[1, 0]),
            Err(PolarError::Invalid(Violation::Cycle(_)))
        ));
        let list = l("?X !B");
        assert!(matches!(
            PolarShuffle::reorder(&list, &[1, 0]),
            Err(PolarError::Invalid(Violation::Cycle(_)))
        ));
        // Undoing a wait would send sooner, so wait and rush only cancel trivially.
        let w = PolarShuffle::wait(&g, "X", &[], &p);
        assert_eq!(w, PolarShuffle::identity(&l("!A !X ?D")));
        let r = PolarShuffle::rush(&g, &[], "X", &p);
        assert_eq!(r, PolarShuffle::identity(&l("!A ?X ?D")));
        // A wait followed by a rush is the unique shuffle between its ends.
        let w = PolarShuffle::wait(&[], "X", &l("?B"), &l("?C"));
        let r = PolarShuffle::rush(&l("?B"), &l("!X"), "C", &[]);
        let both = w.compose(0, &r).unwrap();
        let inferred = PolarShuffle::infer(&[l("!X ?B ?C")], &l("?B ?C !X")).unwrap();
        assert_eq!(Some(both), inferred);
        let x = Polar::send("X");
        let y = Polar::send("Y");
        let s1 = PolarShuffle::swap_same_polarity(&g, &x, &y, &p).unwrap();
        let s2 = PolarShuffle::swap_same_polarity(&g, &y, &x, &p).unwrap();
        assert_eq!(s1.compose(0, &s2).unwrap(), PolarShuffle::identity(&l("!A !X !Y ?D")));
        assert!(PolarShuffle::swap_same_polarity(&g, &x, &Polar::recv("Y"), &p).is_err());
    }

    #[test]
    fn lift_of_unit_interleaving() {
        let sh = Shuffling::new(vec![1, 1], vec![0, 1]).unwrap();
        let s = PolarShuffle::lift(&sh, &[l("!A"), l("?B")]).unwrap();
        assert_eq!(s.output(), &l("!A ?B")[..]);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn composition_along_middle_list() {
        // A two-input shuffle composed into the middle input of a three-input one.
        let s = PolarShuffle::lift(&Shuffling::new(vec![1, 1], vec![1, 0]).unwrap(), &[l("!A"), l("?B")]).unwrap();
        let t = PolarShuffle::infer(&[l("!C"), l("?B !A"), l("?C")], &l("?B !A"))
            .unwrap()
            .unwrap();
        let u = s.compose(1, &t).unwrap();
        assert_eq!(u.inputs().len(), 4);
        assert_eq!(u.inputs()[1], l("!A"));
        assert_eq!(u.inputs()[2], l("?B"));
        let expect = PolarShuffle::infer(&[l("!C"), l("!A"), l("?B"), l("?C")], &l("?B !A")).unwrap();
        assert_eq!(Some(u), expect);
    }

    #[test]
    fn factor_examples() {
        let id = PolarShuffle::identity(&l("!A ?B"));
        let f = id.factor();
        assert_eq!(f.reorders, vec![vec![0, 1]]);
        assert!(f.spawns.is_empty() && f.links.is_empty());
        assert_eq!(f.recompose().unwrap(), id);
        let spw = PolarShuffle::spawn_pair("X");
        let f = spw.factor();
        assert_eq!(f.spawns.len(), 1);
        assert_eq!(f.recompose().unwrap(), spw);
        // Composition shuffle with an extra spawned channel.
        let comp = Encoding::parse("c(?a:A, !c:C, ?x:X, !y:X) = { f(?a:A, !b:B), g(?b:B, !c:C) }")
            .unwrap()
            .to_shuffle(None)
            .unwrap_err();
        assert!(matches!(comp, PolarError::EdgeCount(..)));
        let comp = Encoding::parse("c(?a:A, ?x:X, !c:C, !x:X) = { f(?a:A, !b:B), g(?b:B, !c:C) }")
            .unwrap()
            .to_shuffle(None)
            .unwrap();
        let f = comp.factor();
        assert_eq!(f.spawns.len(), 1);
        assert_eq!(f.links.len(), 1);
        assert_eq!(f.recompose().unwrap(), comp);
    }

    #[test]
    fn encoding_roundtrip_and_errors() {
        let text = "oneTimePad(?msg, !crypt, !decrypt) = {
            bob(!key, ?cryptBob, !decrypt),
            alice(?msg, ?key, !cipher),
            eve(?cryptEve, !crypt),
            stage(?cipher, !cryptBob, !cryptEve)
        }";
        let enc = Encoding::parse(text).unwrap();
        assert_eq!(enc.parts.len(), 4);
        let s = enc.to_shuffle(None).unwrap();
        assert_eq!(s.output(), &l("?* !* !*")[..]);
        let names: Vec<String> = enc.parts.iter().map(|p| p.0.clone()).collect();
        let printed = Encoding::print(&s, "oneTimePad", Some(&names));
        let again = Encoding::parse(&printed).unwrap().to_shuffle(None).unwrap();
        assert_eq!(again, s);
        let bad = Encoding::parse("f(!a) = { g(!a), h(?a) }").unwrap();
        assert_eq!(bad.to_shuffle(None), Err(PolarError::EdgeCount("a".into(), 3)));
        let bad = Encoding::parse("f(?a) = { g(!a) }").unwrap();
        assert_eq!(bad.to_shuffle(None), Err(PolarError::IllegalPairing("a".into())));
        let cyc = Encoding::parse("f() = { g(?a, !a) }").unwrap();
        assert!(matches!(
            cyc.to_shuffle(None),
            Err(PolarError::Invalid(Violation::Cycle(_)))
        ));
        let min = Encoding::parse("f(!a) = { g(!a) }").unwrap().to_shuffle(None).unwrap();
        assert_eq!(min, PolarShuffle::identity(&l("!*")));
        assert!(Encoding::parse("f(!a) = { g(!a) ").is_err());
    }

    #[test]
    fn large_identity_validates() {
        let list: PolarList = (0..1000)
            .map(|i| if i % 3 == 0 { Polar::recv("X") } else { Polar::send("X") })
            .collect();
        assert!(PolarShuffle::identity(&list).validate().is_ok());
    }
}
