//! Reproducible demos with machine-checkable reports.
//!
//! Every polygraph, interpretation and program is a checked-in file under
//! `data/`, embedded at compile time.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::diagram::{Builder, Diagram, DiagramError};
use crate::donotation::{self, DoError};
use crate::polar::{Encoding, PolarError, PolarList};
use crate::session::{self, Session, SessionError};
use crate::shuffle::{self, ShuffleError};
use crate::signature::{runtime_extend, Polygraph, SignatureError, RUNTIME};
use crate::stochastic::{evaluate, Channel64, Interpretation, StochasticError};

pub const HOPF_JSON: &str = include_str!("../data/hopf.json");
pub const HOPF_Z2_JSON: &str = include_str!("../data/hopf_z2.json");
pub const OTP_MSG: &str = include_str!("../data/otp/one_time_pad.msg");
pub const OTP_ALICE: &str = include_str!("../data/otp/alice.sdo");
pub const OTP_ALICE_BROKEN: &str = include_str!("../data/otp/alice_broken.sdo");
pub const OTP_BOB: &str = include_str!("../data/otp/bob.sdo");
pub const OTP_EVE: &str = include_str!("../data/otp/eve.sdo");
pub const OTP_STAGE: &str = include_str!("../data/otp/stage.sdo");
pub const NEWCOMB_JSON: &str = include_str!("../data/newcomb/newcomb.json");
pub const NEWCOMB_INTERP: &str = include_str!("../data/newcomb/interp.json");
pub const NEWCOMB_MSG: &str = include_str!("../data/newcomb/newcomb.msg");
pub const NEWCOMB_AGENT: &str = include_str!("../data/newcomb/agent.sdo");
pub const NEWCOMB_EVIDENTIAL: &str = include_str!("../data/newcomb/evidential.sdo");
pub const NEWCOMB_CAUSAL: &str = include_str!("../data/newcomb/causal.sdo");
pub const NEWCOMB_STAGE: &str = include_str!("../data/newcomb/stage.sdo");
pub const XOR_JSON: &str = include_str!("../data/xor.json");
pub const XOR_Z2_JSON: &str = include_str!("../data/xor_z2.json");
pub const XOR_DO: &str = include_str!("../data/xor.do");
pub const RACE_JSON: &str = include_str!("../data/race.json");
pub const RACE_INTERP: &str = include_str!("../data/race_interp.json");
pub const MASCARPONE_JSON: &str = include_str!("../data/mascarpone.json");
pub const MASCARPONE_DO: &str = include_str!("../data/mascarpone.do");

/// Entrywise tolerance for the exact-valued demos.
pub const EXACT_EPS: f64 = 1e-12;
/// Tolerance on expected utilities.
pub const UTILITY_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Do(#[from] DoError),
    #[error(transparent)]
    Polar(#[from] PolarError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Stochastic(#[from] StochasticError),
    #[error(transparent)]
    Shuffle(#[from] ShuffleError),
    #[error("{0}")]
    Setup(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub demo: String,
    pub checks: Vec<Check>,
    /// Human-readable matrices and tables.
    #[serde(skip)]
    pub text: String,
}

impl Report {
    fn new(demo: &str) -> Self {
        Report {
            demo: demo.to_string(),
            checks: vec![],
            text: String::new(),
        }
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render(&self) -> String {
        let mut out = format!("demo {}\n", self.demo);
        out.push_str(&self.text);
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{tag} {}: {}\n", c.name, c.detail));
        }
        out
    }
}

fn load(text: &str) -> Result<Arc<Polygraph>, DemoError> {
    Ok(Arc::new(Polygraph::from_json(text)?))
}

/// Deterministic channel from a point map.
fn function_channel(
    dom: Vec<usize>,
    cod: Vec<usize>,
    f: impl Fn(&[usize]) -> Vec<usize>,
) -> Result<Channel64, DemoError> {
    Ok(Channel64::from_fn(dom, cod, f)?)
}

/// Glues named parts along an encoding; parts are matched to the encoding by name.
pub fn glue_encoding(base: &Arc<Polygraph>, encoding: &str, parts: &[(&str, &str)]) -> Result<Session, DemoError> {
    let enc = Encoding::parse(encoding)?;
    let mut by_name = BTreeMap::new();
    for (name, text) in parts {
        if by_name
            .insert(name.to_string(), session::parse_session(text, base)?)
            .is_some()
        {
            return Err(DemoError::Setup(format!("two sessions for part `{name}`")));
        }
    }
    let mut ordered = vec![];
    for (name, _) in &enc.parts {
        let s = by_name
            .remove(name)
            .ok_or_else(|| DemoError::Setup(format!("no session for part `{name}`")))?;
        ordered.push(s);
    }
    if let Some(extra) = by_name.keys().next() {
        return Err(DemoError::Setup(format!("part `{extra}` is not in the encoding")));
    }
    let events: Vec<PolarList> = ordered.iter().map(Session::events).collect();
    let s = enc.to_shuffle(Some(&events))?;
    Ok(session::glue(base, &ordered, &s)?)
}

// ---------------------------------------------------------------- one-time pad

/// The Hopf interpretation over `Z₂ⁿ`: xor, copy, zero, discard, negation, uniform noise.
pub fn hopf_interpretation(n: u32) -> Result<Interpretation<f64>, DemoError> {
    let sig = load(HOPF_JSON)?;
    let k = 1usize << n;
    let mut ch = BTreeMap::new();
    ch.insert(
        "mult".into(),
        function_channel(vec![k, k], vec![k], |x| vec![x[0] ^ x[1]])?,
    );
    ch.insert(
        "comult".into(),
        function_channel(vec![k], vec![k, k], |x| vec![x[0], x[0]])?,
    );
    ch.insert("unit".into(), function_channel(vec![], vec![k], |_| vec![0])?);
    ch.insert("counit".into(), Channel64::discard(k));
    ch.insert("antipode".into(), function_channel(vec![k], vec![k], |x| vec![x[0]])?);
    ch.insert("integral".into(), Channel64::uniform(k));
    let interp = Interpretation::new(BTreeMap::from([("X".to_string(), k)]), ch);
    interp.check(&sig)?;
    Ok(interp)
}

/// The glued one-time pad as a channel `msg -> (crypt, decrypt)`.
pub fn otp_channel(n: u32, broken: bool) -> Result<Channel64, DemoError> {
    let base = load(HOPF_JSON)?;
    let alice = if broken { OTP_ALICE_BROKEN } else { OTP_ALICE };
    let glued = glue_encoding(
        &base,
        OTP_MSG,
        &[
            ("alice", alice),
            ("bob", OTP_BOB),
            ("eve", OTP_EVE),
            ("stage", OTP_STAGE),
        ],
    )?;
    let open = glued.open()?;
    Ok(evaluate(&open, &hopf_interpretation(n)?)?)
}

/// Uniform noise on the crypt wire beside the identity on the message.
pub fn otp_expected(n: u32) -> Channel64 {
    let k = 1usize << n;
    Channel64::uniform(k).tensor(&Channel64::identity(&[k]))
}

pub fn demo_otp() -> Result<Report, DemoError> {
    let mut r = Report::new("otp");
    for n in [1u32, 2] {
        let got = otp_channel(n, false)?;
        let want = otp_expected(n);
        let dev = got.max_deviation(&want)?;
        r.text.push_str(&format!(
            "X = Z2^{n}, msg -> (crypt, decrypt)\nglued:\n{}expected:\n{}",
            got.to_table(),
            want.to_table()
        ));
        r.check(
            format!("secure over Z2^{n}"),
            dev <= EXACT_EPS,
            format!("max deviation {dev:e}"),
        );
    }
    let bad = otp_channel(1, true)?;
    let dev = bad.max_deviation(&otp_expected(1))?;
    r.text.push_str(&format!("broken key over Z2:\n{}", bad.to_table()));
    r.check("broken key detected", dev > EXACT_EPS, format!("max deviation {dev:e}"));
    Ok(r)
}

// ---------------------------------------------------------------- Newcomb

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Predictor {
    Evidential,
    Causal,
}

/// Expected utility, normalized by total mass, for a two-boxing probability `a`
/// and a predictor prior `p` of predicting two boxes.
pub fn newcomb_eu(predictor: Predictor, a: f64, p: f64) -> Result<f64, DemoError> {
    let base = load(NEWCOMB_JSON)?;
    let part = match predictor {
        Predictor::Evidential => NEWCOMB_EVIDENTIAL,
        Predictor::Causal => NEWCOMB_CAUSAL,
    };
    let glued = glue_encoding(
        &base,
        NEWCOMB_MSG,
        &[("agent", NEWCOMB_AGENT), ("predictor", part), ("stage", NEWCOMB_STAGE)],
    )?;
    let mut interp = Interpretation::<f64>::from_json(&base, NEWCOMB_INTERP)?;
    interp.insert("agent", Channel64::from_rows(vec![], vec![2], vec![vec![1.0 - a, a]])?);
    interp.insert("prior", Channel64::from_rows(vec![], vec![2], vec![vec![1.0 - p, p]])?);
    interp.check(&base)?;
    let state = evaluate(&glued.open()?, &interp)?;
    let values = interp
        .values("U")
        .ok_or_else(|| DemoError::Setup("no utility values for U".into()))?;
    let row = state.row(0);
    let mass: f64 = row.iter().sum();
    if mass <= 0.0 {
        return Err(DemoError::Setup(format!("zero mass at a = {a}, p = {p}")));
    }
    Ok(row.iter().zip(values).map(|(m, v)| m * v).sum::<f64>() / mass)
}

pub const SWEEP: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn argmax(xs: &[f64]) -> usize {
    (0..xs.len()).fold(0, |best, i| if xs[i] > xs[best] { i } else { best })
}

pub fn demo_newcomb() -> Result<Report, DemoError> {
    let mut r = Report::new("newcomb");
    let evidential: Vec<f64> = SWEEP
        .iter()
        .map(|&a| newcomb_eu(Predictor::Evidential, a, 0.5))
        .collect::<Result<_, _>>()?;
    r.text.push_str("evidential, a = P(two boxes):\n");
    for (a, eu) in SWEEP.iter().zip(&evidential) {
        r.text.push_str(&format!("  a = {a:<5} EU = {eu:.6}\n"));
    }
    let one = evidential[0];
    let two = evidential[SWEEP.len() - 1];
    r.check(
        "evidential one-box",
        (one - 1000.0).abs() <= UTILITY_EPS,
        format!("EU = {one}"),
    );
    r.check(
        "evidential two-box",
        (two - 1.0).abs() <= UTILITY_EPS,
        format!("EU = {two}"),
    );
    let best = argmax(&evidential);
    r.check("evidential argmax", best == 0, format!("best a = {}", SWEEP[best]));
    r.text.push_str("causal, p = P(predict two boxes):\n");
    for &p in &SWEEP {
        let sweep: Vec<f64> = SWEEP
            .iter()
            .map(|&a| newcomb_eu(Predictor::Causal, a, p))
            .collect::<Result<_, _>>()?;
        let gap = sweep[SWEEP.len() - 1] - sweep[0];
        r.text.push_str(&format!(
            "  p = {p:<5} EU(one) = {:.6} EU(two) = {:.6}\n",
            sweep[0],
            sweep[SWEEP.len() - 1]
        ));
        let best = argmax(&sweep);
        r.check(
            format!("causal gap at p = {p}"),
            (gap - 1.0).abs() <= UTILITY_EPS && best == SWEEP.len() - 1,
            format!("gap = {gap}, best a = {}", SWEEP[best]),
        );
    }
    Ok(r)
}

// ---------------------------------------------------------------- XOR exchange

/// `xor(x, y) = (x ⊕ y, y)` over `Z₂ⁿ`.
pub fn xor_interpretation(n: u32) -> Result<Interpretation<f64>, DemoError> {
    let sig = load(XOR_JSON)?;
    let k = 1usize << n;
    let xor = function_channel(vec![k, k], vec![k, k], |x| vec![x[0] ^ x[1], x[1]])?;
    let interp = Interpretation::new(
        BTreeMap::from([("X".to_string(), k)]),
        BTreeMap::from([("xor".to_string(), xor)]),
    );
    interp.check(&sig)?;
    Ok(interp)
}

pub fn xor_diagram() -> Result<Diagram, DemoError> {
    Ok(donotation::compile(XOR_DO, &load(XOR_JSON)?)?)
}

pub fn demo_xor() -> Result<Report, DemoError> {
    let mut r = Report::new("xor");
    let d = xor_diagram()?;
    let x = vec!["X".to_string()];
    let swap = Diagram::symmetry(d.sig(), &x, &x)?;
    r.check(
        "diagram differs from the swap",
        !d.is_equal(&swap),
        format!("{} xor nodes", d.nodes().len()),
    );
    for n in 1..=3u32 {
        let interp = xor_interpretation(n)?;
        let got = evaluate(&d, &interp)?;
        let want = evaluate(&swap, &interp)?;
        let dev = got.max_deviation(&want)?;
        if n == 1 {
            r.text.push_str(&format!("Z2 exchange:\n{}", got.to_table()));
        }
        r.check(
            format!("swap over Z2^{n}"),
            dev <= EXACT_EPS,
            format!("max deviation {dev:e}"),
        );
    }
    Ok(r)
}

// ---------------------------------------------------------------- race

/// The effectful race polygraph, runtime extended.
pub fn race_signature() -> Result<Arc<Polygraph>, DemoError> {
    Ok(Arc::new(runtime_extend(&Polygraph::from_json(RACE_JSON)?)))
}

/// Two processes `get; h; put` interleaved by `assignment` (blocks of two events each).
pub fn race_diagram(sig: &Arc<Polygraph>, assignment: &[usize]) -> Result<Diagram, DemoError> {
    let procs = ["f", "g"];
    let mut b = Builder::new(sig.clone());
    let r0 = b.wire(RUNTIME)?;
    let mut r = r0;
    let mut held: [Option<usize>; 2] = [None, None];
    for &p in assignment {
        match held[p].take() {
            None => {
                let out = b.node("get", &[r])?;
                r = out[0];
                held[p] = Some(b.node(procs[p], &[out[1]])?[0]);
            }
            Some(x) => r = b.node("put", &[r, x])?[0],
        }
    }
    Ok(b.finish(vec![r0], vec![r])?)
}

fn as_function(ch: &Channel64) -> Option<Vec<usize>> {
    (0..ch.rows())
        .map(|i| {
            let row = ch.row(i);
            let j = row.iter().position(|&v| (v - 1.0).abs() <= EXACT_EPS)?;
            row.iter()
                .enumerate()
                .all(|(k, &v)| k == j || v.abs() <= EXACT_EPS)
                .then_some(j)
        })
        .collect()
}

/// Store effects of every interleaving, with the interleavings producing each.
pub fn race_effects(f: &[usize], g: &[usize]) -> Result<BTreeMap<Vec<usize>, Vec<Vec<usize>>>, DemoError> {
    let sig = race_signature()?;
    let mut interp = Interpretation::<f64>::from_json(&sig, RACE_INTERP)?;
    let n = interp.size("X")?;
    if interp.size(RUNTIME)? != n || f.len() != n || g.len() != n {
        return Err(DemoError::Setup("store and value sizes must agree".into()));
    }
    interp.insert("f", function_channel(vec![n], vec![n], |x| vec![f[x[0]]])?);
    interp.insert("g", function_channel(vec![n], vec![n], |x| vec![g[x[0]]])?);
    interp.check(&sig)?;
    let mut out: BTreeMap<Vec<usize>, Vec<Vec<usize>>> = BTreeMap::new();
    for sh in shuffle::enumerate(&[2, 2])? {
        let ch = evaluate(&race_diagram(&sig, sh.assignment())?, &interp)?;
        let effect = as_function(&ch)
            .ok_or_else(|| DemoError::Setup(format!("interleaving {:?} is not deterministic", sh.assignment())))?;
        out.entry(effect).or_default().push(sh.assignment().to_vec());
    }
    Ok(out)
}

fn then(f: &[usize], g: &[usize]) -> Vec<usize> {
    f.iter().map(|&x| g[x]).collect()
}

pub fn demo_race() -> Result<Report, DemoError> {
    let mut r = Report::new("race");
    let sig = race_signature()?;
    let interp = Interpretation::<f64>::from_json(&sig, RACE_INTERP)?;
    let f = as_function(interp.channel(&sig, "f")?).ok_or_else(|| DemoError::Setup("f is not a function".into()))?;
    let g = as_function(interp.channel(&sig, "g")?).ok_or_else(|| DemoError::Setup("g is not a function".into()))?;
    let effects = race_effects(&f, &g)?;
    let names = BTreeMap::from([
        (f.clone(), "f"),
        (g.clone(), "g"),
        (then(&f, &g), "f;g"),
        (then(&g, &f), "g;f"),
    ]);
    for (effect, runs) in &effects {
        let label = names.get(effect).copied().unwrap_or("?");
        r.text.push_str(&format!("{effect:?} = {label} from {runs:?}\n"));
    }
    let expected: BTreeSet<&Vec<usize>> = names.keys().collect();
    let got: BTreeSet<&Vec<usize>> = effects.keys().collect();
    r.check(
        "four composites",
        expected.len() == 4 && got == expected,
        format!("{} distinct effects from 6 interleavings", got.len()),
    );
    let same = race_effects(&f, &f)?;
    r.check(
        "f = g collapses",
        same.len() <= 2,
        format!("{} distinct effects", same.len()),
    );
    Ok(r)
}

// ---------------------------------------------------------------- mascarpone

pub fn mascarpone_diagram() -> Result<Diagram, DemoError> {
    Ok(donotation::compile(MASCARPONE_DO, &load(MASCARPONE_JSON)?)?)
}

pub fn demo_mascarpone() -> Result<Report, DemoError> {
    let mut r = Report::new("mascarpone");
    let sig = load(MASCARPONE_JSON)?;
    let program = donotation::parse(MASCARPONE_DO)?;
    let d = donotation::elaborate(&donotation::check(&program, &sig)?, &sig)?;
    let order: Vec<&str> = d.nodes().iter().map(|n| n.gen.as_str()).collect();
    r.text
        .push_str(&format!("{} -> {}\n", d.dom().join(", "), d.cod().join(", ")));
    r.text.push_str(&format!("nodes: {}\n", order.join(" ")));
    r.check("elaborates", d.validate().is_ok(), format!("{} nodes", d.nodes().len()));
    let mut swapped = program.clone();
    swapped.stmts.swap(2, 3);
    let e = donotation::elaborate(&donotation::check(&swapped, &sig)?, &sig)?;
    r.check("whisk and beat commute", e.is_equal(&d), "statements 3 and 4 exchanged");
    Ok(r)
}

pub const DEMOS: [&str; 5] = ["otp", "newcomb", "xor", "race", "mascarpone"];

pub fn run(name: &str) -> Result<Report, DemoError> {
    match name {
        "otp" => demo_otp(),
        "newcomb" => demo_newcomb(),
        "xor" => demo_xor(),
        "race" => demo_race(),
        "mascarpone" => demo_mascarpone(),
        other => Err(DemoError::Setup(format!("unknown demo `{other}`"))),
    }
}
