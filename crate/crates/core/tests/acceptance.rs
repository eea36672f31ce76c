//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::time::{Duration, Instant};

use num_bigint::BigUint;
use procdiag::demo::{self, Predictor};
use procdiag::diagram::Diagram;
use procdiag::donotation::{self, insertion_count};
use procdiag::polar::{self, parse_polar_list, Loc, Polar, PolarError, PolarList, PolarShuffle, Polarity, Violation};
use procdiag::random::{
    independent_pairs, random_base, random_distinct_instance, random_open_session, random_polar_shuffle,
    random_polar_shuffle_into, random_process, random_program, random_session,
};
use procdiag::session::{self, glue, proc_compose, proc_id, proc_symmetry, proc_tensor, Session};
use procdiag::shuffle;
use procdiag::stochastic::{bayes_invert, channel_equal_up_to_scalar, frobenius_laws, Channel64};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 0x5eed;
const STRUCTURAL_EPS: f64 = 1e-12;
const BAYES_EPS: f64 = 1e-9;
const UTILITY_EPS: f64 = 1e-9;
const OTP_EPS: f64 = 1e-12;
const XOR_EPS: f64 = 1e-12;
const VALIDATE_BUDGET: Duration = Duration::from_secs(1);
const VALIDATE_ITEMS: usize = 100_000;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: impl Into<String>) -> Outcome {
    if ok {
        Ok(detail.into())
    } else {
        Err(detail.into())
    }
}

fn rng(k: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(SEED ^ k)
}

fn c1_shuffle_count() -> Outcome {
    let n = shuffle::count(&[1, 2, 3]);
    let all = shuffle::enumerate(&[1, 2, 3]).map_err(|e| e.to_string())?;
    let distinct: std::collections::BTreeSet<Vec<usize>> = all.iter().map(|s| s.assignment().to_vec()).collect();
    ensure(
        n == BigUint::from(60u32) && all.len() == 60 && distinct.len() == 60,
        format!("count {n}, enumerated {}, distinct {}", all.len(), distinct.len()),
    )
}

fn factorial(n: usize) -> BigUint {
    (1..=n).fold(BigUint::from(1u32), |a, k| a * BigUint::from(k))
}

fn c2_insertions() -> Outcome {
    let mut checked = 0;
    for total in 0..=12 {
        for n in 0..=total {
            let m = total - n;
            let closed = factorial(m + n) / factorial(m);
            if insertion_count(n, m) != closed {
                return Err(format!("n = {n}, m = {m}"));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} pairs"))
}

/// Every type-preserving bijection from senders to receivers that the checker accepts.
fn brute_force(inputs: &[PolarList], output: &PolarList) -> Vec<Vec<(Loc, Loc)>> {
    let mut dom = vec![];
    let mut cod = vec![];
    for (i, l) in inputs.iter().enumerate() {
        for (p, x) in l.iter().enumerate() {
            match x.pol {
                Polarity::Send => dom.push((Loc::In(i, p), x.ty.clone())),
                Polarity::Recv => cod.push((Loc::In(i, p), x.ty.clone())),
            }
        }
    }
    for (p, x) in output.iter().enumerate() {
        match x.pol {
            Polarity::Recv => dom.push((Loc::Out(p), x.ty.clone())),
            Polarity::Send => cod.push((Loc::Out(p), x.ty.clone())),
        }
    }
    let mut found = vec![];
    if dom.len() == cod.len() {
        Search {
            dom: &dom,
            cod: &cod,
            inputs,
            output,
        }
        .go(&mut vec![false; cod.len()], &mut vec![], &mut found);
    }
    found
}

struct Search<'a> {
    dom: &'a [(Loc, String)],
    cod: &'a [(Loc, String)],
    inputs: &'a [PolarList],
    output: &'a PolarList,
}

impl Search<'_> {
    fn go(&self, used: &mut Vec<bool>, acc: &mut Vec<(Loc, Loc)>, out: &mut Vec<Vec<(Loc, Loc)>>) {
        let k = acc.len();
        if k == self.dom.len() {
            if polar::check(self.inputs, self.output, acc).is_ok() {
                let mut p = acc.clone();
                p.sort();
                out.push(p);
            }
            return;
        }
        for j in 0..self.cod.len() {
            if !used[j] && self.cod[j].1 == self.dom[k].1 {
                used[j] = true;
                acc.push((self.dom[k].0, self.cod[j].0));
                self.go(used, acc, out);
                acc.pop();
                used[j] = false;
            }
        }
    }
}

fn c3_coherence() -> Outcome {
    let mut r = rng(3);
    let (mut unique, mut none) = (0, 0);
    for case in 0..500 {
        let (inputs, output) = random_distinct_instance(&mut r, 8);
        let items: usize = inputs.iter().map(Vec::len).sum::<usize>() + output.len();
        if items > 8 {
            return Err(format!("instance {case} has {items} items"));
        }
        let candidates = brute_force(&inputs, &output);
        let inferred = PolarShuffle::infer(&inputs, &output).map_err(|e| format!("instance {case}: {e}"))?;
        match (candidates.len(), inferred) {
            (0, None) => none += 1,
            (1, Some(s)) => {
                let mut p = s.pairing().to_vec();
                p.sort();
                if p != candidates[0] {
                    return Err(format!("instance {case}: infer disagrees with brute force"));
                }
                unique += 1;
            }
            (k, s) => return Err(format!("instance {case}: {k} candidates, infer found {}", s.is_some())),
        }
    }
    Ok(format!("500 instances, {unique} with one shuffle, {none} with none"))
}

fn is_cycle(r: Result<PolarShuffle, PolarError>) -> bool {
    matches!(r, Err(PolarError::Invalid(Violation::Cycle(ref w))) if !w.is_empty())
}

fn c4_asymmetry() -> Outcome {
    let l = |s: &str| parse_polar_list(s).unwrap();
    let (gamma, psi) = (l("?A !B"), l("?C"));
    let mut waits = 0;
    for delta in ["", "?D", "!D", "?D !E", "!E ?D"] {
        let delta = l(delta);
        PolarShuffle::wait(&gamma, "X", &delta, &psi)
            .validate()
            .map_err(|e| e.to_string())?;
        PolarShuffle::rush(&gamma, &delta, "X", &psi)
            .validate()
            .map_err(|e| e.to_string())?;
        waits += 1;
    }
    // sending sooner past a receive
    let list: Vec<Polar> = [gamma.clone(), l("?D"), vec![Polar::send("X")], psi.clone()].concat();
    let sooner = PolarShuffle::reorder(&list, &[0, 1, 3, 2, 4]);
    // receiving later past a send
    let list: Vec<Polar> = [gamma.clone(), vec![Polar::recv("X")], l("!D"), psi.clone()].concat();
    let later = PolarShuffle::reorder(&list, &[0, 1, 3, 2, 4]);
    let witness = match &sooner {
        Err(e) => e.to_string(),
        Ok(_) => String::new(),
    };
    ensure(
        is_cycle(sooner) && is_cycle(later),
        format!("{waits} wait/rush pairs valid; send-sooner rejected with {witness}"),
    )
}

fn c5_factorization() -> Outcome {
    let mut r = rng(5);
    for case in 0..500 {
        let arity = r.gen_range(0..4);
        let pairs = r.gen_range(0..=5);
        let s = random_polar_shuffle(&mut r, arity, pairs, &["X", "Y"]);
        let back = s.factor().recompose().map_err(|e| format!("case {case}: {e}"))?;
        if back != s {
            return Err(format!("case {case}: roundtrip differs"));
        }
    }
    Ok("500 shuffles".into())
}

fn c6_validation_scaling() -> Outcome {
    let list: PolarList = (0..VALIDATE_ITEMS)
        .map(|k| if k % 2 == 0 { Polar::recv("X") } else { Polar::send("Y") })
        .collect();
    let start = Instant::now();
    let s = PolarShuffle::identity(&list);
    s.validate().map_err(|e| e.to_string())?;
    let took = start.elapsed();
    ensure(took <= VALIDATE_BUDGET, format!("{VALIDATE_ITEMS} items in {took:?}"))
}

fn c7_do_string() -> Outcome {
    let m = demo::mascarpone_diagram().map_err(|e| e.to_string())?;
    let x = demo::xor_diagram().map_err(|e| e.to_string())?;
    let base = random_base();
    let mut r = rng(7);
    let mut swapped = 0;
    while swapped < 200 {
        let p = random_program(&mut r, &base, 8);
        let pairs = independent_pairs(&p);
        let Some(&k) = pairs.choose(&mut r) else { continue };
        let mut q = p.clone();
        q.stmts.swap(k, k + 1);
        let d = donotation::elaborate(&donotation::check(&p, &base).map_err(|e| e.to_string())?, &base)
            .map_err(|e| e.to_string())?;
        let e = donotation::elaborate(&donotation::check(&q, &base).map_err(|e| e.to_string())?, &base)
            .map_err(|e| e.to_string())?;
        if !d.is_equal(&e) {
            return Err(format!("swap of statements {k} and {} changed the diagram", k + 1));
        }
        swapped += 1;
    }
    Ok(format!(
        "recipe ({} nodes) and exchange ({} nodes) elaborate; {swapped} swaps preserved",
        m.nodes().len(),
        x.nodes().len()
    ))
}

fn c8_xor() -> Outcome {
    let d = demo::xor_diagram().map_err(|e| e.to_string())?;
    let x = vec!["X".to_string()];
    let swap = Diagram::symmetry(d.sig(), &x, &x).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for n in 1..=3 {
        let interp = demo::xor_interpretation(n).map_err(|e| e.to_string())?;
        let a = procdiag::stochastic::evaluate(&d, &interp).map_err(|e| e.to_string())?;
        let b = procdiag::stochastic::evaluate(&swap, &interp).map_err(|e| e.to_string())?;
        worst = worst.max(a.max_deviation(&b).map_err(|e| e.to_string())?);
    }
    ensure(worst <= XOR_EPS, format!("n = 1..3, max deviation {worst:e}"))
}

fn c9_otp() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [1, 2] {
        let got = demo::otp_channel(n, false).map_err(|e| e.to_string())?;
        worst = worst.max(got.max_deviation(&demo::otp_expected(n)).map_err(|e| e.to_string())?);
    }
    let bad = demo::otp_channel(1, true).map_err(|e| e.to_string())?;
    let control = bad.max_deviation(&demo::otp_expected(1)).map_err(|e| e.to_string())?;
    ensure(
        worst <= OTP_EPS && control > OTP_EPS,
        format!("max deviation {worst:e}; broken key deviates by {control}"),
    )
}

fn c10_newcomb() -> Outcome {
    let eu = |p, a, q| demo::newcomb_eu(p, a, q).map_err(|e| e.to_string());
    let one = eu(Predictor::Evidential, 0.0, 0.5)?;
    let two = eu(Predictor::Evidential, 1.0, 0.5)?;
    if (one - 1000.0).abs() > UTILITY_EPS || (two - 1.0).abs() > UTILITY_EPS {
        return Err(format!("evidential EU(one) = {one}, EU(two) = {two}"));
    }
    for p in demo::SWEEP {
        let gap = eu(Predictor::Causal, 1.0, p)? - eu(Predictor::Causal, 0.0, p)?;
        if (gap - 1.0).abs() > UTILITY_EPS {
            return Err(format!("causal gap {gap} at p = {p}"));
        }
    }
    Ok(format!("evidential 1000 vs 1; causal gap 1 at p in {:?}", demo::SWEEP))
}

fn c11_race() -> Outcome {
    let f = [1, 2, 0];
    let g = [0, 2, 1];
    let then = |a: &[usize], b: &[usize]| a.iter().map(|&x| b[x]).collect::<Vec<_>>();
    let effects = demo::race_effects(&f, &g).map_err(|e| e.to_string())?;
    let want: std::collections::BTreeSet<Vec<usize>> = [f.to_vec(), g.to_vec(), then(&f, &g), then(&g, &f)]
        .into_iter()
        .collect();
    let got: std::collections::BTreeSet<Vec<usize>> = effects.keys().cloned().collect();
    ensure(
        want.len() == 4 && got == want,
        format!("{} distinct effects over 6 interleavings", got.len()),
    )
}

fn c12_comb() -> Outcome {
    let base = random_base();
    let mut r = rng(12);
    for case in 0..200 {
        let s = random_open_session(&mut r, &base, 6);
        let back = Session::from_comb(&base, &s.to_comb()).map_err(|e| format!("case {case}: {e}"))?;
        if !back.is_equal(&s) {
            return Err(format!("case {case}: roundtrip differs"));
        }
    }
    Ok("200 sessions".into())
}

fn c13_glue_composition() -> Outcome {
    let base = random_base();
    let types = ["X", "Y"];
    let mut r = rng(13);
    for case in 0..100 {
        let (pairs, arity, extra) = (r.gen_range(0..3), r.gen_range(1..3), r.gen_range(0..3));
        let outer_out = random_polar_shuffle(&mut r, 0, pairs, &types).output().to_vec();
        let t = random_polar_shuffle_into(&mut r, &outer_out, arity, extra, &types);
        let pos = r.gen_range(0..t.inputs().len());
        let (arity, extra) = (r.gen_range(1..3), r.gen_range(0..2));
        let s = random_polar_shuffle_into(&mut r, &t.inputs()[pos], arity, extra, &types);
        let inner: Vec<Session> = s.inputs().iter().map(|l| random_session(&mut r, &base, l)).collect();
        let outer: Vec<Session> = t.inputs().iter().map(|l| random_session(&mut r, &base, l)).collect();
        let step = glue(&base, &inner, &s).map_err(|e| format!("case {case}: {e}"))?;
        let mut nested = outer.clone();
        nested[pos] = step;
        let lhs = glue(&base, &nested, &t).map_err(|e| format!("case {case}: {e}"))?;
        let mut flat = outer[..pos].to_vec();
        flat.extend(inner);
        flat.extend(outer[pos + 1..].iter().cloned());
        let st = s.compose(pos, &t).map_err(|e| format!("case {case}: {e}"))?;
        let rhs = glue(&base, &flat, &st).map_err(|e| format!("case {case}: {e}"))?;
        if !lhs.is_equal(&rhs) {
            return Err(format!("case {case}: glue does not respect composition"));
        }
    }
    Ok("100 instances".into())
}

fn random_types(r: &mut ChaCha8Rng, max: usize) -> Vec<String> {
    (0..r.gen_range(0..=max))
        .map(|_| ["X", "Y"].choose(r).unwrap().to_string())
        .collect()
}

fn c14_proc_laws() -> Outcome {
    let base = random_base();
    let mut r = rng(14);
    let err = |law: &str, case: usize| format!("{law} fails on case {case}");
    let e = |x: session::SessionError| x.to_string();
    for case in 0..50 {
        let [a, b, c, d, x, y]: [Vec<String>; 6] = std::array::from_fn(|_| random_types(&mut r, 2));
        let f = random_process(&mut r, &base, &a, &b);
        let g = random_process(&mut r, &base, &b, &c);
        let h = random_process(&mut r, &base, &c, &d);
        let left = proc_compose(&base, &proc_compose(&base, &f, &g).map_err(e)?, &h).map_err(e)?;
        let right = proc_compose(&base, &f, &proc_compose(&base, &g, &h).map_err(e)?).map_err(e)?;
        if !left.is_equal(&right) {
            return Err(err("associativity", case));
        }
        let lu = proc_compose(&base, &proc_id(&base, &a).map_err(e)?, &f).map_err(e)?;
        let ru = proc_compose(&base, &f, &proc_id(&base, &b).map_err(e)?).map_err(e)?;
        if !lu.is_equal(&f) || !ru.is_equal(&f) {
            return Err(err("unitality", case));
        }
        let k = random_process(&mut r, &base, &x, &y);
        let k2 = random_process(&mut r, &base, &y, &a);
        let lhs = proc_compose(
            &base,
            &proc_tensor(&base, &f, &k).map_err(e)?,
            &proc_tensor(&base, &g, &k2).map_err(e)?,
        )
        .map_err(e)?;
        let rhs = proc_tensor(
            &base,
            &proc_compose(&base, &f, &g).map_err(e)?,
            &proc_compose(&base, &k, &k2).map_err(e)?,
        )
        .map_err(e)?;
        if !lhs.is_equal(&rhs) {
            return Err(err("interchange", case));
        }
        let twice = proc_compose(
            &base,
            &proc_symmetry(&base, &a, &x).map_err(e)?,
            &proc_symmetry(&base, &x, &a).map_err(e)?,
        )
        .map_err(e)?;
        if !twice.is_equal(&proc_id(&base, &[a.clone(), x.clone()].concat()).map_err(e)?) {
            return Err(err("symmetry involution", case));
        }
    }
    Ok("50 random instances of each law".into())
}

fn random_state(r: &mut ChaCha8Rng, n: usize, mass: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| r.gen_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| mass * x / s).collect()
}

fn random_channel(r: &mut ChaCha8Rng, dom: usize, cod: usize, total: bool) -> Channel64 {
    let rows = (0..dom)
        .map(|_| {
            let mass = if total { 1.0 } else { r.gen_range(0.0..1.0) };
            random_state(r, cod, mass)
        })
        .collect();
    Channel64::from_rows(vec![dom], vec![cod], rows).unwrap()
}

fn c15_backend() -> Outcome {
    let mut r = rng(15);
    let sub =
        |c: &Channel64| c.data().iter().all(|&v| v >= 0.0) && c.row_masses().iter().all(|&m| m <= 1.0 + STRUCTURAL_EPS);
    for case in 0..100 {
        let (n, m, k) = (r.gen_range(1..5), r.gen_range(1..5), r.gen_range(1..5));
        let f = random_channel(&mut r, n, m, false);
        let g = random_channel(&mut r, m, k, false);
        let fg = f.compose(&g).map_err(|e| e.to_string())?;
        if !sub(&fg) || !sub(&f.tensor(&g)) {
            return Err(format!("subnormalization lost on case {case}"));
        }
        let left = Channel64::identity(&[n]).compose(&f).map_err(|e| e.to_string())?;
        let right = f.compose(&Channel64::identity(&[m])).map_err(|e| e.to_string())?;
        let dev = left.max_deviation(&f).unwrap().max(right.max_deviation(&f).unwrap());
        if dev > STRUCTURAL_EPS {
            return Err(format!("Dirac unit law off by {dev:e} on case {case}"));
        }
    }
    let mut laws = 0;
    for n in [1, 2, 3, 5] {
        for (name, a, b) in frobenius_laws::<f64>(n) {
            let dev = a.max_deviation(&b).map_err(|e| e.to_string())?;
            if dev > STRUCTURAL_EPS {
                return Err(format!("{name} off by {dev:e} at |X| = {n}"));
            }
            laws += 1;
        }
    }
    for case in 0..100 {
        let (nx, ny) = (r.gen_range(1..5), r.gen_range(1..5));
        let prior = Channel64::from_rows(vec![], vec![nx], vec![random_state(&mut r, nx, 1.0)]).unwrap();
        let g = random_channel(&mut r, nx, ny, true);
        let predicted = prior.compose(&g).unwrap();
        let support: Vec<usize> = (0..ny).filter(|&y| predicted.get(0, y) > 0.0).collect();
        let y = *support.choose(&mut r).unwrap();
        // observe y: keep x alongside, push it through g, condition on y
        let observe = Channel64::from_rows(
            vec![ny],
            vec![],
            (0..ny).map(|v| vec![if v == y { 1.0 } else { 0.0 }]).collect(),
        )
        .unwrap();
        let conditioned = prior
            .compose(&Channel64::copy(nx))
            .and_then(|c| c.compose(&Channel64::identity(&[nx]).tensor(&g.compose(&observe)?)))
            .map_err(|e| e.to_string())?;
        let inv = bayes_invert(&g, &prior).map_err(|e| e.to_string())?;
        let at_y = Channel64::from_rows(
            vec![],
            vec![ny],
            vec![(0..ny).map(|v| if v == y { 1.0 } else { 0.0 }).collect()],
        )
        .and_then(|d| d.compose(&inv))
        .map_err(|e| e.to_string())?;
        if !channel_equal_up_to_scalar(&conditioned, &at_y, BAYES_EPS).map_err(|e| e.to_string())? {
            return Err(format!("synthetic Bayes fails on triple {case}"));
        }
    }
    Ok(format!(
        "closure and unit laws on 100 pairs, {laws} Frobenius instances, 100 Bayes triples"
    ))
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("shuffle counting", c1_shuffle_count),
        ("insertion formula", c2_insertions),
        ("polar shuffle coherence", c3_coherence),
        ("send/receive asymmetry", c4_asymmetry),
        ("factorization roundtrip", c5_factorization),
        ("validation scaling", c6_validation_scaling),
        ("do-notation and string diagrams", c7_do_string),
        ("xor exchange", c8_xor),
        ("one-time pad", c9_otp),
        ("newcomb", c10_newcomb),
        ("race conditions", c11_race),
        ("comb roundtrip", c12_comb),
        ("glue respects composition", c13_glue_composition),
        ("process laws", c14_proc_laws),
        ("backend laws", c15_backend),
    ];
    let mut failed = 0;
    let start = Instant::now();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", k + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed in {:.1?}",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
