//! Finite subdistribution channels and the evaluation of diagrams as tensor contractions.
//!
//! A channel stores its entries densely, row-major in (input tuple, output tuple); tuples
//! are flattened in mixed radix with the last wire varying fastest.

use std::collections::BTreeMap;
use std::fmt::Debug;

use num_rational::Rational64;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};
use serde::Deserialize;
use thiserror::Error;

use crate::diagram::{Diagram, DiagramError};
use crate::signature::Polygraph;

/// Largest frontier tensor `evaluate` will allocate.
pub const FRONTIER_LIMIT: usize = 1 << 24;

pub const DEFAULT_EPS: f64 = 1e-9;

pub trait Scalar:
    Num + Copy + PartialOrd + Signed + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("scalar represents small integers")
    }

    fn eps(e: f64) -> Self {
        Self::from_f64(e).unwrap_or_else(Self::zero)
    }
}

impl<T> Scalar for T where
    T: Num + Copy + PartialOrd + Signed + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StochasticError {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    Shape { left: Vec<usize>, right: Vec<usize> },
    #[error("expected {expected} entries, found {found}")]
    Length { expected: usize, found: usize },
    #[error("negative entry at {0}")]
    Negative(usize),
    #[error("row {row} has mass {mass} > 1")]
    NotSubnormalized { row: usize, mass: f64 },
    #[error("point {point:?} out of range for shape {shape:?}")]
    OutOfRange { point: Vec<usize>, shape: Vec<usize> },
    #[error("no size given for type `{0}`")]
    MissingSize(String),
    #[error("no channel given for generator `{0}`")]
    MissingInterpretation(String),
    #[error("channel for `{gen}` has shape {found:?}, its signature needs {expected:?}")]
    GeneratorShape {
        gen: String,
        expected: (Vec<usize>, Vec<usize>),
        found: (Vec<usize>, Vec<usize>),
    },
    #[error("frontier of {0} entries exceeds the limit of {FRONTIER_LIMIT}")]
    TooLarge(usize),
    #[error("malformed interpretation: {0}")]
    Format(String),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
}

fn product(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Mixed-radix digits of `index` over `shape`.
pub fn unflatten(mut index: usize, shape: &[usize]) -> Vec<usize> {
    let mut out = vec![0; shape.len()];
    for k in (0..shape.len()).rev() {
        out[k] = index % shape[k];
        index /= shape[k];
    }
    out
}

pub fn flatten(point: &[usize], shape: &[usize]) -> usize {
    point.iter().zip(shape).fold(0, |acc, (&p, &s)| acc * s + p)
}

/// A subnormalized stochastic matrix between finite products.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel<S> {
    dom: Vec<usize>,
    cod: Vec<usize>,
    data: Vec<S>,
}

pub type Channel64 = Channel<f64>;
pub type ExactChannel = Channel<Rational64>;

impl<S: Scalar> Channel<S> {
    pub fn new(dom: Vec<usize>, cod: Vec<usize>, data: Vec<S>) -> Result<Self, StochasticError> {
        let c = Channel { dom, cod, data };
        c.check()?;
        Ok(c)
    }

    pub fn from_rows(dom: Vec<usize>, cod: Vec<usize>, rows: Vec<Vec<S>>) -> Result<Self, StochasticError> {
        let cols = product(&cod);
        if rows.len() != product(&dom) {
            return Err(StochasticError::Length {
                expected: product(&dom),
                found: rows.len(),
            });
        }
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(StochasticError::Length {
                expected: cols,
                found: r.len(),
            });
        }
        Self::new(dom, cod, rows.concat())
    }

    /// A 0/1 channel from a function on tuples.
    pub fn from_fn(
        dom: Vec<usize>,
        cod: Vec<usize>,
        f: impl Fn(&[usize]) -> Vec<usize>,
    ) -> Result<Self, StochasticError> {
        let (r, c) = (product(&dom), product(&cod));
        let mut data = vec![S::zero(); r * c];
        for i in 0..r {
            let y = f(&unflatten(i, &dom));
            if y.len() != cod.len() || y.iter().zip(&cod).any(|(a, b)| a >= b) {
                return Err(StochasticError::OutOfRange { point: y, shape: cod });
            }
            data[i * c + flatten(&y, &cod)] = S::one();
        }
        Self::new(dom, cod, data)
    }

    /// A partial 0/1 channel; `None` rows carry no mass.
    pub fn from_partial_fn(
        dom: Vec<usize>,
        cod: Vec<usize>,
        f: impl Fn(&[usize]) -> Option<Vec<usize>>,
    ) -> Result<Self, StochasticError> {
        let (r, c) = (product(&dom), product(&cod));
        let mut data = vec![S::zero(); r * c];
        for i in 0..r {
            if let Some(y) = f(&unflatten(i, &dom)) {
                if y.len() != cod.len() || y.iter().zip(&cod).any(|(a, b)| a >= b) {
                    return Err(StochasticError::OutOfRange { point: y, shape: cod });
                }
                data[i * c + flatten(&y, &cod)] = S::one();
            }
        }
        Self::new(dom, cod, data)
    }

    fn check(&self) -> Result<(), StochasticError> {
        let expected = product(&self.dom) * product(&self.cod);
        if self.data.len() != expected {
            return Err(StochasticError::Length {
                expected,
                found: self.data.len(),
            });
        }
        if let Some(k) = self.data.iter().position(|x| x.is_negative()) {
            return Err(StochasticError::Negative(k));
        }
        let bound = S::one() + S::eps(DEFAULT_EPS);
        for (row, mass) in self.row_masses().into_iter().enumerate() {
            if mass > bound {
                return Err(StochasticError::NotSubnormalized {
                    row,
                    mass: mass.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(())
    }

    pub fn identity(shape: &[usize]) -> Self {
        Self::from_fn(shape.to_vec(), shape.to_vec(), |x| x.to_vec()).unwrap()
    }

    /// The point state on `shape`.
    pub fn dirac(shape: &[usize], point: &[usize]) -> Result<Self, StochasticError> {
        if point.len() != shape.len() || point.iter().zip(shape).any(|(a, b)| a >= b) {
            return Err(StochasticError::OutOfRange {
                point: point.to_vec(),
                shape: shape.to_vec(),
            });
        }
        Self::from_fn(vec![], shape.to_vec(), |_| point.to_vec())
    }

    pub fn uniform(n: usize) -> Self {
        let p = S::one() / S::from_usize_exact(n);
        Channel {
            dom: vec![],
            cod: vec![n],
            data: vec![p; n],
        }
    }

    pub fn copy(n: usize) -> Self {
        Self::from_fn(vec![n], vec![n, n], |x| vec![x[0], x[0]]).unwrap()
    }

    pub fn discard(n: usize) -> Self {
        Self::from_fn(vec![n], vec![], |_| vec![]).unwrap()
    }

    /// The comparator: `x` when both inputs equal `x`, no mass otherwise.
    pub fn compare(n: usize) -> Self {
        Self::from_partial_fn(vec![n, n], vec![n], |x| (x[0] == x[1]).then(|| vec![x[0]])).unwrap()
    }

    pub fn zero(dom: Vec<usize>, cod: Vec<usize>) -> Self {
        let len = product(&dom) * product(&cod);
        Channel {
            dom,
            cod,
            data: vec![S::zero(); len],
        }
    }

    /// Wire permutation: output `k` is input `perm[k]`.
    pub fn permutation(shape: &[usize], perm: &[usize]) -> Self {
        let cod: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        Self::from_fn(shape.to_vec(), cod, |x| perm.iter().map(|&p| x[p]).collect()).unwrap()
    }

    pub fn swap(left: &[usize], right: &[usize]) -> Self {
        let shape = [left, right].concat();
        let perm: Vec<usize> = (left.len()..shape.len()).chain(0..left.len()).collect();
        Self::permutation(&shape, &perm)
    }

    pub fn dom_shape(&self) -> &[usize] {
        &self.dom
    }

    pub fn cod_shape(&self) -> &[usize] {
        &self.cod
    }

    pub fn rows(&self) -> usize {
        product(&self.dom)
    }

    pub fn cols(&self) -> usize {
        product(&self.cod)
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> S {
        self.data[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[S] {
        let c = self.cols();
        &self.data[row * c..(row + 1) * c]
    }

    pub fn row_masses(&self) -> Vec<S> {
        (0..self.rows())
            .map(|r| self.row(r).iter().fold(S::zero(), |a, &b| a + b))
            .collect()
    }

    /// Same entries, different grouping of wires.
    pub fn reshape(&self, dom: Vec<usize>, cod: Vec<usize>) -> Result<Self, StochasticError> {
        if product(&dom) != self.rows() || product(&cod) != self.cols() {
            return Err(StochasticError::Shape {
                left: [self.dom.clone(), self.cod.clone()].concat(),
                right: [dom, cod].concat(),
            });
        }
        Ok(Channel {
            dom,
            cod,
            data: self.data.clone(),
        })
    }

    pub fn scale(&self, k: S) -> Result<Self, StochasticError> {
        Self::new(
            self.dom.clone(),
            self.cod.clone(),
            self.data.iter().map(|&x| x * k).collect(),
        )
    }

    /// Kleisli composition `self ; g`.
    pub fn compose(&self, g: &Channel<S>) -> Result<Self, StochasticError> {
        if self.cod != g.dom {
            return Err(StochasticError::Shape {
                left: self.cod.clone(),
                right: g.dom.clone(),
            });
        }
        let (r, m, c) = (self.rows(), self.cols(), g.cols());
        let mut data = vec![S::zero(); r * c];
        for i in 0..r {
            for k in 0..m {
                let a = self.data[i * m + k];
                if a.is_zero() {
                    continue;
                }
                for j in 0..c {
                    data[i * c + j] = data[i * c + j] + a * g.data[k * c + j];
                }
            }
        }
        Self::new(self.dom.clone(), g.cod.clone(), data)
    }

    pub fn tensor(&self, g: &Channel<S>) -> Self {
        let (r1, c1, r2, c2) = (self.rows(), self.cols(), g.rows(), g.cols());
        let mut data = vec![S::zero(); r1 * r2 * c1 * c2];
        for i1 in 0..r1 {
            for i2 in 0..r2 {
                for j1 in 0..c1 {
                    let a = self.data[i1 * c1 + j1];
                    if a.is_zero() {
                        continue;
                    }
                    for j2 in 0..c2 {
                        data[(i1 * r2 + i2) * (c1 * c2) + j1 * c2 + j2] = a * g.data[i2 * c2 + j2];
                    }
                }
            }
        }
        Channel {
            dom: [self.dom.clone(), g.dom.clone()].concat(),
            cod: [self.cod.clone(), g.cod.clone()].concat(),
            data,
        }
    }

    fn whole_copy(shape: &[usize]) -> Self {
        Self::copy(product(shape))
            .reshape(shape.to_vec(), [shape, shape].concat())
            .unwrap()
    }

    fn whole_discard(shape: &[usize]) -> Self {
        Self::from_fn(shape.to_vec(), vec![], |_| vec![]).unwrap()
    }

    /// `f ; copy = copy ; (f ⊗ f)`.
    pub fn is_deterministic(&self, eps: f64) -> bool {
        let lhs = self.compose(&Self::whole_copy(&self.cod)).unwrap();
        let rhs = Self::whole_copy(&self.dom).compose(&self.tensor(self)).unwrap();
        channel_equal(&lhs, &rhs, eps).unwrap()
    }

    /// `f ; discard = discard`.
    pub fn is_total(&self, eps: f64) -> bool {
        let e = S::eps(eps);
        self.row_masses().into_iter().all(|m| (m - S::one()).abs() <= e)
    }

    /// `f = copy ; ((f ; discard) ⊗ f)`.
    pub fn is_quasitotal(&self, eps: f64) -> bool {
        let mass = self.compose(&Self::whole_discard(&self.cod)).unwrap();
        let rhs = Self::whole_copy(&self.dom).compose(&mass.tensor(self)).unwrap();
        channel_equal(self, &rhs, eps).unwrap()
    }

    /// Largest entrywise difference.
    pub fn max_deviation(&self, g: &Channel<S>) -> Result<S, StochasticError> {
        self.same_shape(g)?;
        Ok(self
            .data
            .iter()
            .zip(&g.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(S::zero(), |m, d| if d > m { d } else { m }))
    }

    fn same_shape(&self, g: &Channel<S>) -> Result<(), StochasticError> {
        if self.rows() != g.rows() || self.cols() != g.cols() {
            return Err(StochasticError::Shape {
                left: [self.dom.clone(), self.cod.clone()].concat(),
                right: [g.dom.clone(), g.cod.clone()].concat(),
            });
        }
        Ok(())
    }

    /// Pretty matrix, one row per input tuple.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for r in 0..self.rows() {
            let row: Vec<String> = self
                .row(r)
                .iter()
                .map(|x| format!("{:.4}", x.to_f64().unwrap_or(f64::NAN)))
                .collect();
            s.push_str(&format!("{:?} | {}\n", unflatten(r, &self.dom), row.join(" ")));
        }
        s
    }
}

pub fn kleisli_compose<S: Scalar>(f: &Channel<S>, g: &Channel<S>) -> Result<Channel<S>, StochasticError> {
    f.compose(g)
}

/// Entrywise equality within `eps`. Shapes are compared as flattened sizes.
pub fn channel_equal<S: Scalar>(f: &Channel<S>, g: &Channel<S>, eps: f64) -> Result<bool, StochasticError> {
    Ok(f.max_deviation(g)? <= S::eps(eps))
}

/// Equality up to a positive scalar `λ` with `f ≈ λ g`. The scalar is read off the
/// entry where `g` is largest in magnitude.
pub fn channel_equal_up_to_scalar<S: Scalar>(
    f: &Channel<S>,
    g: &Channel<S>,
    eps: f64,
) -> Result<bool, StochasticError> {
    f.same_shape(g)?;
    let e = S::eps(eps);
    let Some(k) = (0..g.data.len()).fold(None, |best: Option<usize>, i| match best {
        Some(b) if g.data[b].abs() >= g.data[i].abs() => Some(b),
        _ => Some(i),
    }) else {
        return Ok(true);
    };
    if g.data[k].abs() <= e {
        return Ok(f.data.iter().all(|x| x.abs() <= e) && g.data.iter().all(|x| x.abs() <= e));
    }
    let lambda = f.data[k] / g.data[k];
    if lambda <= S::zero() {
        return Ok(false);
    }
    Ok(f.data.iter().zip(&g.data).all(|(&a, &b)| (a - lambda * b).abs() <= e))
}

/// The inversion of `g: X → Y` against a prior state `f` on `X`. Observations of
/// zero probability are sent to the zero subdistribution.
pub fn bayes_invert<S: Scalar>(g: &Channel<S>, f: &Channel<S>) -> Result<Channel<S>, StochasticError> {
    if !f.dom.is_empty() || f.cod != g.dom {
        return Err(StochasticError::Shape {
            left: [f.dom.clone(), f.cod.clone()].concat(),
            right: g.dom.clone(),
        });
    }
    let (nx, ny) = (g.rows(), g.cols());
    let mut data = vec![S::zero(); ny * nx];
    for y in 0..ny {
        let denom = (0..nx).fold(S::zero(), |a, x| a + g.get(x, y) * f.data[x]);
        if denom.is_zero() {
            continue;
        }
        for x in 0..nx {
            data[y * nx + x] = g.get(x, y) * f.data[x] / denom;
        }
    }
    Channel::new(g.cod.clone(), g.dom.clone(), data)
}

/// Both sides of each partial Frobenius law on an object of size `n`.
pub fn frobenius_laws<S: Scalar>(n: usize) -> Vec<(&'static str, Channel<S>, Channel<S>)> {
    let id = Channel::<S>::identity(&[n]);
    let copy = Channel::<S>::copy(n);
    let cmp = Channel::<S>::compare(n);
    let del = Channel::<S>::discard(n);
    let sw = Channel::<S>::swap(&[n], &[n]);
    let c = |a: &Channel<S>, b: &Channel<S>| a.compose(b).unwrap();
    vec![
        (
            "coassociativity",
            c(&copy, &copy.tensor(&id)),
            c(&copy, &id.tensor(&copy)),
        ),
        ("cocommutativity", c(&copy, &sw), copy.clone()),
        ("counitality left", c(&copy, &del.tensor(&id)), id.clone()),
        ("counitality right", c(&copy, &id.tensor(&del)), id.clone()),
        ("associativity", c(&cmp.tensor(&id), &cmp), c(&id.tensor(&cmp), &cmp)),
        ("commutativity", c(&sw, &cmp), cmp.clone()),
        ("frobenius", c(&copy.tensor(&id), &id.tensor(&cmp)), c(&cmp, &copy)),
        (
            "frobenius mirrored",
            c(&id.tensor(&copy), &cmp.tensor(&id)),
            c(&cmp, &copy),
        ),
        ("speciality", c(&copy, &cmp), id),
    ]
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInterpretation {
    sizes: BTreeMap<String, usize>,
    generators: BTreeMap<String, RawGenerator>,
    #[serde(default)]
    values: BTreeMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerator {
    #[serde(default)]
    table: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    function: Option<Vec<usize>>,
}

/// Sizes for types and channels for generators.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpretation<S> {
    sizes: BTreeMap<String, usize>,
    channels: BTreeMap<String, Channel<S>>,
    values: BTreeMap<String, Vec<f64>>,
}

impl<S: Scalar> Interpretation<S> {
    pub fn new(sizes: BTreeMap<String, usize>, channels: BTreeMap<String, Channel<S>>) -> Self {
        Interpretation {
            sizes,
            channels,
            values: BTreeMap::new(),
        }
    }

    /// Attaches numeric labels to the elements of a type.
    pub fn with_values(mut self, ty: &str, values: Vec<f64>) -> Self {
        self.values.insert(ty.to_string(), values);
        self
    }

    pub fn sizes(&self) -> &BTreeMap<String, usize> {
        &self.sizes
    }

    pub fn channels(&self) -> &BTreeMap<String, Channel<S>> {
        &self.channels
    }

    pub fn values(&self, ty: &str) -> Option<&[f64]> {
        self.values.get(ty).map(|v| v.as_slice())
    }

    pub fn size(&self, ty: &str) -> Result<usize, StochasticError> {
        self.sizes
            .get(ty)
            .copied()
            .ok_or_else(|| StochasticError::MissingSize(ty.to_string()))
    }

    pub fn shape(&self, types: &[String]) -> Result<Vec<usize>, StochasticError> {
        types.iter().map(|t| self.size(t)).collect()
    }

    pub fn insert(&mut self, gen: &str, ch: Channel<S>) {
        self.channels.insert(gen.to_string(), ch);
    }

    pub fn set_size(&mut self, ty: &str, n: usize) {
        self.sizes.insert(ty.to_string(), n);
    }

    /// The channel of `gen`, checked against its signature in `sig`.
    pub fn channel(&self, sig: &Polygraph, gen: &str) -> Result<&Channel<S>, StochasticError> {
        let g = sig
            .generator(gen)
            .ok_or_else(|| DiagramError::UnknownGenerator(gen.to_string()))?;
        let ch = self
            .channels
            .get(gen)
            .ok_or_else(|| StochasticError::MissingInterpretation(gen.to_string()))?;
        let expected = (self.shape(&g.inputs)?, self.shape(&g.outputs)?);
        if ch.dom != expected.0 || ch.cod != expected.1 {
            return Err(StochasticError::GeneratorShape {
                gen: gen.to_string(),
                expected,
                found: (ch.dom.clone(), ch.cod.clone()),
            });
        }
        Ok(ch)
    }

    /// Checks that every generator of `sig` has a channel of the right shape.
    pub fn check(&self, sig: &Polygraph) -> Result<(), StochasticError> {
        for g in sig.generators() {
            self.channel(sig, &g.name)?;
        }
        Ok(())
    }

    /// Reads the JSON format. Tables are indexed by (input tuple, output tuple);
    /// `function` lists the output index for each input index of a 0/1 channel.
    pub fn from_json(sig: &Polygraph, text: &str) -> Result<Self, StochasticError> {
        let raw: RawInterpretation = serde_json::from_str(text).map_err(|e| StochasticError::Format(e.to_string()))?;
        let mut interp = Interpretation {
            sizes: raw.sizes,
            channels: BTreeMap::new(),
            values: raw.values,
        };
        for (name, g) in raw.generators {
            let gen = sig
                .generator(&name)
                .ok_or_else(|| DiagramError::UnknownGenerator(name.clone()))?;
            let dom = interp.shape(&gen.inputs)?;
            let cod = interp.shape(&gen.outputs)?;
            let ch = match (g.table, g.function) {
                (Some(t), None) => {
                    let rows = t.into_iter().map(|r| r.into_iter().map(S::eps).collect()).collect();
                    Channel::from_rows(dom, cod, rows)?
                }
                (None, Some(f)) => {
                    if f.len() != product(&dom) {
                        return Err(StochasticError::Length {
                            expected: product(&dom),
                            found: f.len(),
                        });
                    }
                    let c = product(&cod);
                    if let Some(&k) = f.iter().find(|&&k| k >= c) {
                        return Err(StochasticError::OutOfRange {
                            point: vec![k],
                            shape: vec![c],
                        });
                    }
                    let shape = dom.clone();
                    Channel::from_fn(dom, cod.clone(), |x| unflatten(f[flatten(x, &shape)], &cod))?
                }
                _ => {
                    return Err(StochasticError::Format(format!(
                        "`{name}` needs exactly one of `table` or `function`"
                    )))
                }
            };
            interp.channels.insert(name, ch);
        }
        interp.check(sig)?;
        Ok(interp)
    }
}

impl Interpretation<f64> {
    /// Writes the JSON format, using `table` for every generator.
    pub fn to_json(&self) -> String {
        let gens: serde_json::Map<String, serde_json::Value> = self
            .channels
            .iter()
            .map(|(name, ch)| {
                let rows: Vec<Vec<f64>> = (0..ch.rows()).map(|r| ch.row(r).to_vec()).collect();
                (name.clone(), serde_json::json!({ "table": rows }))
            })
            .collect();
        let mut v = serde_json::json!({ "sizes": self.sizes, "generators": gens });
        if !self.values.is_empty() {
            v["values"] = serde_json::json!(self.values);
        }
        serde_json::to_string_pretty(&v).unwrap()
    }
}

/// The channel denoted by `d`: node channels are contracted in topological order into a
/// single frontier tensor over the input boundary and the currently open wires.
pub fn evaluate<S: Scalar>(d: &Diagram, interp: &Interpretation<S>) -> Result<Channel<S>, StochasticError> {
    let sig = d.sig();
    let size: Vec<usize> = d
        .wire_types()
        .iter()
        .map(|t| interp.size(t))
        .collect::<Result<_, _>>()?;
    let dom: Vec<usize> = d.inputs().iter().map(|&w| size[w]).collect();
    let rows = product(&dom);
    let mut open: Vec<usize> = d.inputs().to_vec();
    let mut width = rows;
    let mut t = vec![S::zero(); rows * width];
    for r in 0..rows {
        t[r * width + r] = S::one();
    }
    for i in d.topological_order()? {
        let node = &d.nodes()[i];
        let ch = interp.channel(sig, &node.gen)?;
        let at: Vec<usize> = node
            .ins
            .iter()
            .map(|w| open.iter().position(|o| o == w).expect("input wire is open"))
            .collect();
        let rest: Vec<usize> = (0..open.len()).filter(|k| !at.contains(k)).collect();
        let open_shape: Vec<usize> = open.iter().map(|&w| size[w]).collect();
        let rest_shape: Vec<usize> = rest.iter().map(|&k| open_shape[k]).collect();
        let out_size = ch.cols();
        let new_width = product(&rest_shape) * out_size;
        if rows * new_width > FRONTIER_LIMIT {
            return Err(StochasticError::TooLarge(rows * new_width));
        }
        let mut next = vec![S::zero(); rows * new_width];
        for r in 0..rows {
            for c in 0..width {
                let a = t[r * width + c];
                if a.is_zero() {
                    continue;
                }
                let digits = unflatten(c, &open_shape);
                let x: Vec<usize> = at.iter().map(|&k| digits[k]).collect();
                let y: Vec<usize> = rest.iter().map(|&k| digits[k]).collect();
                let xi = flatten(&x, ch.dom_shape());
                let base = r * new_width + flatten(&y, &rest_shape) * out_size;
                for (o, &b) in ch.row(xi).iter().enumerate() {
                    if !b.is_zero() {
                        next[base + o] = next[base + o] + a * b;
                    }
                }
            }
        }
        open = rest.iter().map(|&k| open[k]).chain(node.outs.iter().copied()).collect();
        width = new_width;
        t = next;
    }
    let open_shape: Vec<usize> = open.iter().map(|&w| size[w]).collect();
    let cod: Vec<usize> = d.outputs().iter().map(|&w| size[w]).collect();
    let place: Vec<usize> = d
        .outputs()
        .iter()
        .map(|w| open.iter().position(|o| o == w).expect("output wire is open"))
        .collect();
    let cols = product(&cod);
    let mut data = vec![S::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..width {
            let a = t[r * width + c];
            if a.is_zero() {
                continue;
            }
            let digits = unflatten(c, &open_shape);
            let y: Vec<usize> = place.iter().map(|&k| digits[k]).collect();
            data[r * cols + flatten(&y, &cod)] = a;
        }
    }
    Channel::new(dom, cod, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use num_traits::{One, Zero};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::signature::Generator;

    fn ratio(a: i64, b: i64) -> Rational64 {
        Rational64::new(a, b)
    }

    #[test]
    fn composition_examples() {
        let u = Channel64::uniform(2);
        assert_eq!(u.compose(&Channel64::identity(&[2])).unwrap(), u);
        let d0 = Channel64::dirac(&[2], &[0]).unwrap();
        let assert1 = Channel64::from_partial_fn(vec![2], vec![2], |x| (x[0] == 1).then(|| vec![1])).unwrap();
        assert_eq!(d0.compose(&assert1).unwrap(), Channel64::zero(vec![], vec![2]));
        let g = ExactChannel::from_rows(
            vec![2],
            vec![2],
            vec![vec![ratio(1, 1), ratio(0, 1)], vec![ratio(0, 1), ratio(0, 1)]],
        )
        .unwrap();
        let h = ExactChannel::uniform(2).compose(&g).unwrap();
        assert_eq!(h.data(), &[ratio(1, 2), ratio(0, 1)]);
        assert!(u.compose(&Channel64::identity(&[3])).is_err());
    }

    #[test]
    fn rejects_overfull_rows() {
        assert!(matches!(
            Channel64::new(vec![], vec![2], vec![0.7, 0.7]),
            Err(StochasticError::NotSubnormalized { .. })
        ));
        assert!(Channel64::new(vec![], vec![2], vec![-0.1, 0.5]).is_err());
        assert!(Channel64::dirac(&[2], &[2]).is_err());
    }

    #[test]
    fn tensor_examples() {
        let f = Channel64::uniform(3);
        let unit = Channel64::identity(&[]);
        assert_eq!(f.tensor(&unit), f);
        let a = ExactChannel::dirac(&[2], &[1]).unwrap();
        let b = ExactChannel::dirac(&[3], &[2]).unwrap();
        assert_eq!(a.tensor(&b), ExactChannel::dirac(&[2, 3], &[1, 2]).unwrap());
    }

    #[test]
    fn structure_examples() {
        for n in [1, 2, 3, 5] {
            for (name, l, r) in frobenius_laws::<Rational64>(n) {
                assert_eq!(l, r, "{name} on {n}");
            }
        }
        let one = Channel64::dirac(&[3], &[1])
            .unwrap()
            .compose(&Channel64::discard(3))
            .unwrap();
        assert_eq!(one.data(), &[1.0]);
    }

    #[test]
    fn uniformity_of_structure() {
        let (n, m) = (2, 3);
        let big = ExactChannel::copy(n * m).reshape(vec![n, m], vec![n, m, n, m]).unwrap();
        let mid = ExactChannel::identity(&[n])
            .tensor(&ExactChannel::swap(&[n], &[m]))
            .tensor(&ExactChannel::identity(&[m]));
        let split = ExactChannel::copy(n)
            .tensor(&ExactChannel::copy(m))
            .compose(&mid)
            .unwrap();
        assert_eq!(big, split);
        let del = ExactChannel::discard(n * m).reshape(vec![n, m], vec![]).unwrap();
        assert_eq!(del, ExactChannel::discard(n).tensor(&ExactChannel::discard(m)));
        let cmp = ExactChannel::compare(n * m)
            .reshape(vec![n, m, n, m], vec![n, m])
            .unwrap();
        let pre = ExactChannel::identity(&[n])
            .tensor(&ExactChannel::swap(&[m], &[n]))
            .tensor(&ExactChannel::identity(&[m]));
        let split = pre
            .compose(&ExactChannel::compare(n).tensor(&ExactChannel::compare(m)))
            .unwrap();
        assert_eq!(cmp, split);
    }

    #[test]
    fn predicates() {
        let d = Channel64::dirac(&[3], &[2]).unwrap();
        assert!(d.is_deterministic(1e-9) && d.is_total(1e-9));
        let u = Channel64::uniform(2);
        assert!(u.is_total(1e-9) && !u.is_deterministic(1e-9));
        let assert0 = Channel64::from_partial_fn(vec![2], vec![2], |x| (x[0] == 0).then(|| vec![0])).unwrap();
        assert!(assert0.is_deterministic(1e-9));
        assert!(!assert0.is_total(1e-9));
        assert!(assert0.is_quasitotal(1e-9));
        let half = Channel64::identity(&[2]).scale(0.5).unwrap();
        assert!(!half.is_quasitotal(1e-9));
    }

    #[test]
    fn equality_variants() {
        let f = Channel64::from_rows(vec![2], vec![2], vec![vec![0.2, 0.3], vec![0.5, 0.5]]).unwrap();
        let half = f.scale(0.5).unwrap();
        assert!(channel_equal(&f, &f, 1e-12).unwrap());
        assert!(!channel_equal(&f, &half, 1e-12).unwrap());
        assert!(channel_equal_up_to_scalar(&f, &half, 1e-12).unwrap());
        assert!(channel_equal_up_to_scalar(&half, &f, 1e-12).unwrap());
        let z = Channel64::zero(vec![2], vec![2]);
        assert!(!channel_equal(&z, &f, 1e-12).unwrap());
        assert!(!channel_equal_up_to_scalar(&z, &f, 1e-12).unwrap());
        assert!(!channel_equal_up_to_scalar(&f, &z, 1e-12).unwrap());
        assert!(channel_equal_up_to_scalar(&z, &z, 1e-12).unwrap());
        assert!(channel_equal(&f, &Channel64::uniform(4), 1e-12).is_err());
    }

    #[test]
    fn bayes_examples() {
        let u = ExactChannel::uniform(3);
        let id = ExactChannel::identity(&[3]);
        assert_eq!(bayes_invert(&id, &u).unwrap(), id);
        let f = ExactChannel::from_rows(vec![], vec![3], vec![vec![ratio(1, 2), ratio(1, 3), ratio(1, 6)]]).unwrap();
        let del = ExactChannel::from_fn(vec![3], vec![1], |_| vec![0]).unwrap();
        assert_eq!(bayes_invert(&del, &f).unwrap(), f.reshape(vec![1], vec![3]).unwrap());
        // An observation of probability zero inverts to nothing.
        let g = ExactChannel::from_fn(vec![3], vec![2], |_| vec![0]).unwrap();
        let inv = bayes_invert(&g, &f).unwrap();
        assert!(inv.row(1).iter().all(|x| x.is_zero()));
        assert_eq!(inv.row(0), f.data());
    }

    fn random_channel(rng: &mut ChaCha8Rng, dom: usize, cod: usize) -> Channel64 {
        let rows = (0..dom)
            .map(|_| {
                let w: Vec<f64> = (0..cod).map(|_| rng.gen::<f64>() + 0.01).collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(|x| x / s).collect()
            })
            .collect();
        Channel64::from_rows(vec![dom], vec![cod], rows).unwrap()
    }

    #[test]
    fn synthetic_bayes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (nx, ny) = (rng.gen_range(1..5), rng.gen_range(1..5));
            let f = random_channel(&mut rng, 1, nx).reshape(vec![], vec![nx]).unwrap();
            let g = random_channel(&mut rng, nx, ny);
            let y = rng.gen_range(0..ny);
            let observe = g.compose(&observe_at(ny, y)).unwrap();
            let lhs = f
                .compose(&Channel64::copy(nx))
                .unwrap()
                .compose(&Channel64::identity(&[nx]).tensor(&observe))
                .unwrap();
            let rhs = Channel64::dirac(&[ny], &[y])
                .unwrap()
                .compose(&bayes_invert(&g, &f).unwrap())
                .unwrap();
            assert!(channel_equal_up_to_scalar(&lhs, &rhs, 1e-9).unwrap());
        }
    }

    fn observe_at(n: usize, y: usize) -> Channel64 {
        Channel64::from_partial_fn(vec![n], vec![], |x| (x[0] == y).then(Vec::new)).unwrap()
    }

    #[test]
    fn monad_units() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_channel(&mut rng, 3, 4);
        let l = Channel64::identity(&[3]).compose(&f).unwrap();
        let r = f.compose(&Channel64::identity(&[4])).unwrap();
        assert!(channel_equal(&l, &f, 1e-12).unwrap() && channel_equal(&r, &f, 1e-12).unwrap());
        let x = Channel64::dirac(&[3], &[1]).unwrap().compose(&f).unwrap();
        assert_eq!(x.data(), f.row(1));
    }

    fn xor_setup() -> (Arc<Polygraph>, Interpretation<f64>) {
        let sig =
            Arc::new(Polygraph::new(vec!["X".into()], vec![Generator::pure("xor", &["X", "X"], &["X", "X"])]).unwrap());
        let mut i = Interpretation::new(BTreeMap::from([("X".to_string(), 4)]), BTreeMap::new());
        i.insert(
            "xor",
            Channel::from_fn(vec![4, 4], vec![4, 4], |v| vec![v[0] ^ v[1], v[1]]).unwrap(),
        );
        (sig, i)
    }

    #[test]
    fn evaluate_basics() {
        let (sig, i) = xor_setup();
        let x = vec!["X".to_string()];
        let id = evaluate(&Diagram::identity(&sig, &x).unwrap(), &i).unwrap();
        assert_eq!(id, Channel64::identity(&[4]));
        let sw = evaluate(&Diagram::symmetry(&sig, &x, &x).unwrap(), &i).unwrap();
        assert_eq!(sw, Channel64::swap(&[4], &[4]));
        let g = evaluate(&Diagram::from_generator(&sig, "xor").unwrap(), &i).unwrap();
        assert_eq!(&g, &i.channels()["xor"]);
        let empty = Diagram::identity(&sig, &[]).unwrap();
        assert_eq!(evaluate(&empty, &i).unwrap().data(), &[1.0]);
    }

    #[test]
    fn evaluate_respects_structure() {
        let (sig, i) = xor_setup();
        let x = Diagram::from_generator(&sig, "xor").unwrap();
        let two = x.compose(&x).unwrap();
        let e = evaluate(&two, &i).unwrap();
        assert!(channel_equal(&e, &Channel64::identity(&[4, 4]), 0.0).unwrap());
        let t = x.tensor(&x).unwrap();
        let xe = evaluate(&x, &i).unwrap();
        assert_eq!(evaluate(&t, &i).unwrap(), xe.tensor(&xe));
    }

    #[test]
    fn missing_pieces() {
        let (sig, _) = xor_setup();
        let i: Interpretation<f64> = Interpretation::new(BTreeMap::from([("X".to_string(), 2)]), BTreeMap::new());
        let d = Diagram::from_generator(&sig, "xor").unwrap();
        assert_eq!(
            evaluate(&d, &i),
            Err(StochasticError::MissingInterpretation("xor".into()))
        );
        assert!(i.check(&sig).is_err());
    }

    #[test]
    fn interpretation_json() {
        let (sig, i) = xor_setup();
        let back = Interpretation::<f64>::from_json(&sig, &i.to_json()).unwrap();
        assert_eq!(back, i);
        let f = r#"{"sizes": {"X": 2}, "generators": {"xor": {"function": [0, 3, 2, 1]}}}"#;
        let j = Interpretation::<f64>::from_json(&sig, f).unwrap();
        let expect = Channel64::from_fn(vec![2, 2], vec![2, 2], |v| vec![v[0] ^ v[1], v[1]]).unwrap();
        assert_eq!(j.channels()["xor"], expect);
        let bad = r#"{"sizes": {"X": 2}, "generators": {"xor": {"function": [0, 3, 2, 9]}}}"#;
        assert!(Interpretation::<f64>::from_json(&sig, bad).is_err());
        let exact = Interpretation::<Rational64>::from_json(&sig, f).unwrap();
        assert!(exact.channels()["xor"].data().iter().all(|x| x.is_zero() || x.is_one()));
    }
}
