//! Random instances for property tests: polar shuffles, programs and sessions.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::diagram::{Builder, WireId};
use crate::donotation::{DoProgram, Param, Stmt};
use crate::polar::{Loc, Polar, PolarList, PolarShuffle, Polarity};
use crate::session::{session_signature, Session};
use crate::signature::{recv_name, send_name, Generator, Polygraph, RUNTIME};

/// A small two-object base with creation, deletion and a few mixing generators.
pub fn random_base() -> Arc<Polygraph> {
    Arc::new(
        Polygraph::new(
            vec!["X".into(), "Y".into()],
            vec![
                Generator::pure("newX", &[], &["X"]),
                Generator::pure("newY", &[], &["Y"]),
                Generator::pure("dropX", &["X"], &[]),
                Generator::pure("dropY", &["Y"], &[]),
                Generator::pure("f", &["X"], &["Y"]),
                Generator::pure("g", &["Y"], &["X"]),
                Generator::pure("mix", &["X", "Y"], &["X"]),
                Generator::pure("split", &["X"], &["X", "Y"]),
                Generator::pure("join", &["X", "X"], &["X"]),
            ],
        )
        .expect("valid base"),
    )
}

#[derive(Clone, Copy)]
enum Side {
    In(usize),
    Out,
}

struct Item {
    side: Side,
    time: f64,
    polar: Polar,
}

fn assemble(arity: usize, items: Vec<Item>, pairs: Vec<(usize, usize)>) -> PolarShuffle {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[a].time.total_cmp(&items[b].time));
    let mut inputs: Vec<PolarList> = vec![vec![]; arity];
    let mut output = vec![];
    let mut loc = vec![Loc::Out(0); items.len()];
    for i in order {
        match items[i].side {
            Side::In(j) => {
                loc[i] = Loc::In(j, inputs[j].len());
                inputs[j].push(items[i].polar.clone());
            }
            Side::Out => {
                loc[i] = Loc::Out(output.len());
                output.push(items[i].polar.clone());
            }
        }
    }
    let pairing = pairs.into_iter().map(|(a, b)| (loc[a], loc[b])).collect();
    PolarShuffle::new(inputs, output, pairing).expect("time-ordered pairs give an acyclic graph")
}

/// A random valid polar shuffle with `arity` inputs and `pairs` paired items. Every
/// pair gets two increasing times and each list is read in time order.
pub fn random_polar_shuffle<R: Rng>(rng: &mut R, arity: usize, pairs: usize, types: &[&str]) -> PolarShuffle {
    let mut items = vec![];
    let mut links = vec![];
    for _ in 0..pairs {
        let ty = *types.choose(rng).unwrap();
        let mut t = [rng.gen::<f64>(), rng.gen::<f64>()];
        t.sort_by(f64::total_cmp);
        let kind = if arity == 0 { 3 } else { rng.gen_range(0..4) };
        let side = |rng: &mut R| Side::In(rng.gen_range(0..arity));
        let (a, b) = match kind {
            0 => ((side(rng), Polar::send(ty)), (side(rng), Polar::recv(ty))),
            1 => ((side(rng), Polar::send(ty)), (Side::Out, Polar::send(ty))),
            2 => ((Side::Out, Polar::recv(ty)), (side(rng), Polar::recv(ty))),
            _ => ((Side::Out, Polar::recv(ty)), (Side::Out, Polar::send(ty))),
        };
        items.push(Item {
            side: a.0,
            time: t[0],
            polar: a.1,
        });
        items.push(Item {
            side: b.0,
            time: t[1],
            polar: b.1,
        });
        links.push((items.len() - 2, items.len() - 1));
    }
    assemble(arity, items, links)
}

/// A random valid polar shuffle with the given output list, `arity ≥ 1` inputs, and
/// `extra` additional links between inputs.
pub fn random_polar_shuffle_into<R: Rng>(
    rng: &mut R,
    output: &[Polar],
    arity: usize,
    extra: usize,
    types: &[&str],
) -> PolarShuffle {
    assert!(arity > 0);
    let n = output.len() as f64;
    let mut items: Vec<Item> = output
        .iter()
        .enumerate()
        .map(|(q, p)| Item {
            side: Side::Out,
            time: q as f64,
            polar: p.clone(),
        })
        .collect();
    let mut pairs = vec![];
    let mut matched = vec![false; output.len()];
    for q in 0..output.len() {
        if matched[q] || output[q].pol != Polarity::Recv {
            continue;
        }
        let later: Vec<usize> = (q + 1..output.len())
            .filter(|&r| !matched[r] && output[r] == Polar::send(&output[q].ty))
            .collect();
        matched[q] = true;
        if !later.is_empty() && rng.gen_bool(0.5) {
            let r = *later.choose(rng).unwrap();
            matched[r] = true;
            pairs.push((q, r));
        } else {
            items.push(Item {
                side: Side::In(rng.gen_range(0..arity)),
                time: rng.gen_range(q as f64..n),
                polar: output[q].clone(),
            });
            pairs.push((q, items.len() - 1));
        }
    }
    for q in 0..output.len() {
        if !matched[q] {
            items.push(Item {
                side: Side::In(rng.gen_range(0..arity)),
                time: rng.gen_range(-1.0..q as f64),
                polar: output[q].clone(),
            });
            pairs.push((items.len() - 1, q));
        }
    }
    for _ in 0..extra {
        let ty = *types.choose(rng).unwrap();
        let mut t = [rng.gen_range(-1.0..n), rng.gen_range(-1.0..n)];
        t.sort_by(f64::total_cmp);
        items.push(Item {
            side: Side::In(rng.gen_range(0..arity)),
            time: t[0],
            polar: Polar::send(ty),
        });
        items.push(Item {
            side: Side::In(rng.gen_range(0..arity)),
            time: t[1],
            polar: Polar::recv(ty),
        });
        pairs.push((items.len() - 2, items.len() - 1));
    }
    assemble(arity, items, pairs)
}

/// Lists where every type occurs exactly once as a sender and once as a receiver,
/// placed at random positions; the instance may or may not admit a valid pairing.
pub fn random_distinct_instance<R: Rng>(rng: &mut R, max_items: usize) -> (Vec<PolarList>, PolarList) {
    let arity = rng.gen_range(0..3usize);
    let pairs = rng.gen_range(0..=max_items / 2);
    let mut inputs: Vec<PolarList> = vec![vec![]; arity];
    let mut output = vec![];
    for i in 0..pairs {
        let ty = format!("T{i}");
        // Domain end: an input send or an output receive; codomain end: the opposite.
        let dom_out = arity == 0 || rng.gen_bool(0.5);
        let cod_out = arity == 0 || rng.gen_bool(0.5);
        let (a, b) = match (dom_out, cod_out) {
            (false, false) => (Polar::send(&ty), Polar::recv(&ty)),
            (false, true) => (Polar::send(&ty), Polar::send(&ty)),
            (true, false) => (Polar::recv(&ty), Polar::recv(&ty)),
            (true, true) => (Polar::recv(&ty), Polar::send(&ty)),
        };
        if dom_out {
            let at = rng.gen_range(0..=output.len());
            output.insert(at, a);
        } else {
            let k = rng.gen_range(0..arity);
            let at = rng.gen_range(0..=inputs[k].len());
            inputs[k].insert(at, a);
        }
        if cod_out {
            let at = rng.gen_range(0..=output.len());
            output.insert(at, b);
        } else {
            let k = rng.gen_range(0..arity);
            let at = rng.gen_range(0..=inputs[k].len());
            inputs[k].insert(at, b);
        }
    }
    (inputs, output)
}

fn pick<R: Rng>(rng: &mut R, pool: &mut Vec<(WireId, String)>, ty: &str) -> Option<WireId> {
    let idx: Vec<usize> = (0..pool.len()).filter(|&i| pool[i].1 == ty).collect();
    let &i = idx.choose(rng)?;
    Some(pool.swap_remove(i).0)
}

/// Applies up to `steps` random pure generators to wires of the pool.
fn pure_steps<R: Rng>(rng: &mut R, b: &mut Builder, base: &Polygraph, pool: &mut Vec<(WireId, String)>, steps: usize) {
    for _ in 0..steps {
        let usable: Vec<&Generator> = base
            .generators()
            .iter()
            .filter(|g| {
                let mut left = pool.iter().map(|p| p.1.clone()).collect::<Vec<_>>();
                g.inputs.iter().all(|t| match left.iter().position(|x| x == t) {
                    Some(k) => {
                        left.swap_remove(k);
                        true
                    }
                    None => false,
                })
            })
            .collect();
        let Some(g) = usable.choose(rng).copied() else {
            return;
        };
        let g = g.clone();
        let ins: Vec<WireId> = g.inputs.iter().map(|t| pick(rng, pool, t).unwrap()).collect();
        let outs = b.node(&g.name, &ins).expect("typed by construction");
        pool.extend(outs.into_iter().zip(g.outputs.iter().cloned()));
    }
}

fn make<R: Rng>(rng: &mut R, b: &mut Builder, base: &Polygraph, ty: &str) -> WireId {
    let g = base
        .generators()
        .iter()
        .filter(|g| g.inputs.is_empty() && g.outputs == [ty.to_string()])
        .collect::<Vec<_>>();
    let g = g.choose(rng).expect("base can create every type");
    b.node(&g.name, &[]).unwrap()[0]
}

fn drop_all<R: Rng>(rng: &mut R, b: &mut Builder, base: &Polygraph, pool: &mut Vec<(WireId, String)>) {
    pool.shuffle(rng);
    for (w, ty) in pool.drain(..) {
        let g = base
            .generators()
            .iter()
            .find(|g| g.inputs == [ty.clone()] && g.outputs.is_empty())
            .expect("base can delete every type");
        b.node(&g.name, &[w]).unwrap();
    }
}

/// A closed session with exactly the given events. The base needs a nullary creator
/// and a unary deleter for each type.
pub fn random_session<R: Rng>(rng: &mut R, base: &Arc<Polygraph>, events: &[Polar]) -> Session {
    let mut b = Builder::new(session_signature(base).unwrap());
    let r0 = b.wire(RUNTIME).unwrap();
    let mut r = r0;
    let mut pool: Vec<(WireId, String)> = vec![];
    for e in events {
        let steps = rng.gen_range(0..3);
        pure_steps(rng, &mut b, base, &mut pool, steps);
        match e.pol {
            Polarity::Recv => {
                let o = b.node(&recv_name(&e.ty), &[r]).unwrap();
                r = o[0];
                pool.push((o[1], e.ty.clone()));
            }
            Polarity::Send => {
                let x = match pick(rng, &mut pool, &e.ty) {
                    Some(x) if rng.gen_bool(0.8) => x,
                    Some(x) => {
                        pool.push((x, e.ty.clone()));
                        make(rng, &mut b, base, &e.ty)
                    }
                    None => make(rng, &mut b, base, &e.ty),
                };
                r = b.node(&send_name(&e.ty), &[r, x]).unwrap()[0];
            }
        }
    }
    let steps = rng.gen_range(0..3);
    pure_steps(rng, &mut b, base, &mut pool, steps);
    drop_all(rng, &mut b, base, &mut pool);
    Session::new(base, b.finish(vec![r0], vec![r]).unwrap()).unwrap()
}

/// A session with random boundary and up to `max_events` random events.
pub fn random_open_session<R: Rng>(rng: &mut R, base: &Arc<Polygraph>, max_events: usize) -> Session {
    let types = base.objects().to_vec();
    let mut b = Builder::new(session_signature(base).unwrap());
    let r0 = b.wire(RUNTIME).unwrap();
    let mut r = r0;
    let dom: Vec<String> = (0..rng.gen_range(0..3))
        .map(|_| types.choose(rng).unwrap().clone())
        .collect();
    let ins = b.wires(&dom).unwrap();
    let mut pool: Vec<(WireId, String)> = ins.iter().copied().zip(dom.iter().cloned()).collect();
    for _ in 0..rng.gen_range(0..=max_events) {
        let steps = rng.gen_range(0..3);
        pure_steps(rng, &mut b, base, &mut pool, steps);
        let ty = types.choose(rng).unwrap().clone();
        if rng.gen_bool(0.5) {
            let o = b.node(&recv_name(&ty), &[r]).unwrap();
            r = o[0];
            pool.push((o[1], ty));
        } else {
            let x = match pick(rng, &mut pool, &ty) {
                Some(x) => x,
                None => make(rng, &mut b, base, &ty),
            };
            r = b.node(&send_name(&ty), &[r, x]).unwrap()[0];
        }
    }
    let steps = rng.gen_range(0..3);
    pure_steps(rng, &mut b, base, &mut pool, steps);
    pool.shuffle(rng);
    let mut outs = vec![r];
    outs.extend(pool.iter().map(|p| p.0));
    let mut all_ins = vec![r0];
    all_ins.extend(ins);
    Session::new(base, b.finish(all_ins, outs).unwrap()).unwrap()
}

/// A process-shaped session `dom -> cod` with random internal work.
pub fn random_process<R: Rng>(rng: &mut R, base: &Arc<Polygraph>, dom: &[String], cod: &[String]) -> Session {
    random_session(rng, base, &crate::session::process_events(dom, cod))
}

/// A random linear pure program over `base` with fresh variable names throughout.
pub fn random_program<R: Rng>(rng: &mut R, base: &Polygraph, max_stmts: usize) -> DoProgram {
    let types = base.objects().to_vec();
    let mut fresh = 0;
    let mut name = || {
        fresh += 1;
        format!("v{fresh}")
    };
    let params: Vec<Param> = (0..rng.gen_range(1..4))
        .map(|_| Param {
            name: name(),
            ty: Some(types.choose(rng).unwrap().clone()),
        })
        .collect();
    let mut pool: Vec<(String, String)> = params.iter().map(|p| (p.name.clone(), p.ty.clone().unwrap())).collect();
    let mut stmts = vec![];
    for _ in 0..rng.gen_range(0..=max_stmts) {
        let usable: Vec<&Generator> = base
            .generators()
            .iter()
            .filter(|g| {
                let mut left: Vec<&String> = pool.iter().map(|p| &p.1).collect();
                g.inputs.iter().all(|t| match left.iter().position(|x| *x == t) {
                    Some(k) => {
                        left.swap_remove(k);
                        true
                    }
                    None => false,
                })
            })
            .collect();
        let Some(&g) = usable.choose(rng) else { break };
        let mut args = vec![];
        for t in &g.inputs {
            let idx: Vec<usize> = (0..pool.len()).filter(|&i| &pool[i].1 == t).collect();
            let i = *idx.choose(rng).unwrap();
            args.push(pool.swap_remove(i).0);
        }
        let binders: Vec<String> = g.outputs.iter().map(|_| name()).collect();
        pool.extend(binders.iter().cloned().zip(g.outputs.iter().cloned()));
        stmts.push(Stmt::Call {
            gen: g.name.clone(),
            args,
            binders,
        });
    }
    pool.shuffle(rng);
    DoProgram {
        name: "random".into(),
        params,
        stmts,
        returns: pool.into_iter().map(|p| p.0).collect(),
    }
}

/// Positions `k` where statements `k` and `k+1` share no variable.
pub fn independent_pairs(p: &DoProgram) -> Vec<usize> {
    let vars = |s: &Stmt| -> Vec<String> {
        match s {
            Stmt::Call { args, binders, .. } => args.iter().chain(binders).cloned().collect(),
            Stmt::Send { var } | Stmt::Recv { var, .. } => vec![var.clone()],
        }
    };
    (0..p.stmts.len().saturating_sub(1))
        .filter(|&k| {
            let a = vars(&p.stmts[k]);
            vars(&p.stmts[k + 1]).iter().all(|v| !a.contains(v))
        })
        .collect()
}
