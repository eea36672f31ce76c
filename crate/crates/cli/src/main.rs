use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use procdiag::demo;
use procdiag::diagram::Diagram;
use procdiag::donotation::{self, DoError};
use procdiag::polar::{format_polar_list, parse_polar_list, Encoding, PolarError, PolarList, PolarShuffle};
use procdiag::session;
use procdiag::shuffle;
use procdiag::signature::{load_polygraph, Polygraph};
use procdiag::stochastic::{channel_equal, evaluate, Interpretation, DEFAULT_EPS};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "procdiag",
    version,
    about = "String diagrams, polar shuffles and message-passing sessions"
)]
struct Cli {
    /// Polygraph JSON file.
    #[arg(long, global = true)]
    polygraph: Option<PathBuf>,
    /// Interpretation JSON file.
    #[arg(long, global = true)]
    interp: Option<PathBuf>,
    /// Entrywise tolerance for channel comparisons.
    #[arg(long, global = true, default_value_t = DEFAULT_EPS)]
    eps: f64,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Shufflings of blocks with the given sizes.
    #[command(subcommand)]
    Shuffle(ShuffleCmd),
    /// Polar shuffles written as encodings.
    #[command(subcommand)]
    Polar(PolarCmd),
    /// Do-notation programs.
    #[command(subcommand)]
    Do(DoCmd),
    /// Message-passing sessions.
    #[command(subcommand)]
    Session(SessionCmd),
    /// Evaluates a diagram as a channel.
    Eval {
        #[arg(long)]
        diagram: PathBuf,
    },
    /// Compares two diagrams (JSON or do-notation).
    Eq {
        left: PathBuf,
        right: PathBuf,
        /// Print both diagrams in DOT.
        #[arg(long)]
        dot: bool,
    },
    /// Runs a bundled demo.
    Demo {
        #[arg(value_parser = demo::DEMOS)]
        name: String,
    },
}

#[derive(Subcommand)]
enum ShuffleCmd {
    Count { blocks: Vec<usize> },
    Enumerate { blocks: Vec<usize> },
}

#[derive(Subcommand)]
enum PolarCmd {
    /// Checks an encoding; with `--identity` the file holds a single polar list.
    Validate {
        file: PathBuf,
        #[arg(long)]
        identity: bool,
    },
    /// Substitutes INNER into part `--at` of OUTER.
    Compose {
        outer: PathBuf,
        inner: PathBuf,
        #[arg(long)]
        at: usize,
    },
    /// Finds the polar shuffle between distinctly typed lists.
    Infer {
        #[arg(long = "input")]
        inputs: Vec<String>,
        #[arg(long)]
        output: String,
    },
    Factor {
        file: PathBuf,
    },
}

#[derive(Subcommand)]
enum DoCmd {
    Check {
        file: PathBuf,
    },
    Elaborate {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SessionCmd {
    Events {
        file: PathBuf,
    },
    /// Glues session programs along an encoding; parts are matched by program name.
    Glue {
        #[arg(long)]
        shuffle: PathBuf,
        parts: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Eq {
        left: PathBuf,
        right: PathBuf,
    },
}

/// Passed or failed a check; errors are reported separately.
type Verdict = Result<bool>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn polygraph(cli: &Cli) -> Result<Arc<Polygraph>> {
    let path = cli
        .polygraph
        .as_ref()
        .ok_or_else(|| anyhow!("--polygraph is required"))?;
    Ok(Arc::new(load_polygraph(path)?))
}

fn interpretation(cli: &Cli, sig: &Polygraph) -> Result<Interpretation<f64>> {
    let path = cli.interp.as_ref().ok_or_else(|| anyhow!("--interp is required"))?;
    Ok(Interpretation::from_json(sig, &read(path)?)?)
}

fn emit(cli: &Cli, text: impl AsRef<str>, value: serde_json::Value) {
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&value).expect("json"));
    } else {
        println!("{}", text.as_ref());
    }
}

fn write_or_print(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn load_diagram(path: &Path, sig: &Arc<Polygraph>) -> Result<Diagram> {
    let text = read(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        Ok(Diagram::from_json(sig, &text)?)
    } else {
        Ok(donotation::compile(&text, sig)?)
    }
}

fn shuffle_cmd(cli: &Cli, cmd: &ShuffleCmd) -> Verdict {
    match cmd {
        ShuffleCmd::Count { blocks } => {
            let n = shuffle::count(blocks);
            emit(cli, n.to_string(), json!({ "blocks": blocks, "count": n.to_string() }));
        }
        ShuffleCmd::Enumerate { blocks } => {
            let all = shuffle::enumerate(blocks)?;
            let rows: Vec<&[usize]> = all.iter().map(|s| s.assignment()).collect();
            let text = rows
                .iter()
                .map(|r| r.iter().map(usize::to_string).collect::<Vec<_>>().join(" "))
                .collect::<Vec<_>>()
                .join("\n");
            emit(cli, text, json!({ "blocks": blocks, "shufflings": rows }));
        }
    }
    Ok(true)
}

fn encoding_shuffle(path: &Path) -> Result<(Encoding, Result<PolarShuffle, PolarError>)> {
    let enc = Encoding::parse(&read(path)?)?;
    let s = enc.to_shuffle(None);
    Ok((enc, s))
}

fn polar_cmd(cli: &Cli, cmd: &PolarCmd) -> Verdict {
    match cmd {
        PolarCmd::Validate { file, identity } => {
            let result = if *identity {
                let list = parse_polar_list(&read(file)?)?;
                PolarShuffle::identity(&list)
                    .validate()
                    .map(|_| list.len())
                    .map_err(PolarError::from)
            } else {
                let (_, s) = encoding_shuffle(file)?;
                s.map(|s| s.size())
            };
            match result {
                Ok(n) => {
                    emit(cli, format!("valid ({n} items)"), json!({ "valid": true, "items": n }));
                    Ok(true)
                }
                Err(
                    e @ (PolarError::Invalid(_)
                    | PolarError::EdgeCount(..)
                    | PolarError::IllegalPairing(_)
                    | PolarError::EdgeType { .. }),
                ) => {
                    emit(
                        cli,
                        format!("invalid: {e}"),
                        json!({ "valid": false, "reason": e.to_string() }),
                    );
                    Ok(false)
                }
                Err(e) => Err(e.into()),
            }
        }
        PolarCmd::Compose { outer, inner, at } => {
            let (o_enc, o) = encoding_shuffle(outer)?;
            let (i_enc, i) = encoding_shuffle(inner)?;
            let c = i?.compose(*at, &o?)?;
            let mut names: Vec<String> = o_enc.parts.iter().map(|p| p.0.clone()).collect();
            let inner_names: Vec<String> = i_enc.parts.iter().map(|p| p.0.clone()).collect();
            names.splice(*at..*at + 1, inner_names);
            let text = Encoding::print(&c, &o_enc.name, Some(&names));
            emit(cli, &text, json!({ "encoding": text }));
            Ok(true)
        }
        PolarCmd::Infer { inputs, output } => {
            let ins: Vec<PolarList> = inputs.iter().map(|s| parse_polar_list(s)).collect::<Result<_, _>>()?;
            let out = parse_polar_list(output)?;
            match PolarShuffle::infer(&ins, &out)? {
                Some(s) => {
                    let text = Encoding::print(&s, "inferred", None);
                    emit(cli, &text, json!({ "found": true, "encoding": text }));
                    Ok(true)
                }
                None => {
                    emit(cli, "no polar shuffle", json!({ "found": false }));
                    Ok(false)
                }
            }
        }
        PolarCmd::Factor { file } => {
            let (_, s) = encoding_shuffle(file)?;
            let f = s?.factor();
            let ok = f.recompose().is_ok();
            emit(
                cli,
                f.to_string(),
                json!({
                    "inputs": f.inputs.iter().map(|l| format_polar_list(l)).collect::<Vec<_>>(),
                    "reorders": f.reorders,
                    "spawns": f.spawns,
                    "shuffle": f.shuffle.assignment(),
                    "links": f.links,
                }),
            );
            Ok(ok)
        }
    }
}

fn do_cmd(cli: &Cli, cmd: &DoCmd) -> Verdict {
    let sig = polygraph(cli)?;
    let file = match cmd {
        DoCmd::Check { file } | DoCmd::Elaborate { file, .. } => file,
    };
    let program = donotation::parse(&read(file)?)?;
    let typed = match donotation::check(&program, &sig) {
        Ok(t) => t,
        Err(e @ DoError::Syntax { .. }) => return Err(e.into()),
        Err(e) => {
            emit(
                cli,
                format!("ill-typed: {e}"),
                json!({ "ok": false, "reason": e.to_string() }),
            );
            return Ok(false);
        }
    };
    let d = donotation::elaborate(&typed, &sig)?;
    match cmd {
        DoCmd::Check { .. } => emit(
            cli,
            format!(
                "{}: {} -> {} ({} statements)",
                program.name,
                d.dom().join(", "),
                d.cod().join(", "),
                program.stmts.len()
            ),
            json!({ "ok": true, "name": program.name, "dom": d.dom(), "cod": d.cod() }),
        ),
        DoCmd::Elaborate { out, .. } => write_or_print(out.as_ref(), &d.to_json())?,
    }
    Ok(true)
}

fn session_cmd(cli: &Cli, cmd: &SessionCmd) -> Verdict {
    let base = polygraph(cli)?;
    match cmd {
        SessionCmd::Events { file } => {
            let s = session::parse_session(&read(file)?, &base)?;
            let ev = format_polar_list(&s.events());
            emit(cli, &ev, json!({ "events": ev, "dom": s.dom(), "cod": s.cod() }));
            Ok(true)
        }
        SessionCmd::Glue { shuffle, parts, out } => {
            let texts: Vec<String> = parts.iter().map(|p| read(p)).collect::<Result<_>>()?;
            let names: Vec<String> = texts
                .iter()
                .map(|t| donotation::parse(t).map(|p| p.name))
                .collect::<Result<_, _>>()?;
            let named: Vec<(&str, &str)> = names
                .iter()
                .map(String::as_str)
                .zip(texts.iter().map(String::as_str))
                .collect();
            let enc = read(shuffle)?;
            let g = demo::glue_encoding(&base, &enc, &named)?;
            let name = Encoding::parse(&enc)?.name;
            let text = donotation::print(&g.to_program(&name));
            match out {
                Some(p) => fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
                None => emit(
                    cli,
                    &text,
                    json!({ "events": format_polar_list(&g.events()), "program": text }),
                ),
            }
            Ok(true)
        }
        SessionCmd::Eq { left, right } => {
            let a = session::parse_session(&read(left)?, &base)?;
            let b = session::parse_session(&read(right)?, &base)?;
            let same = a.is_equal(&b);
            emit(cli, if same { "equal" } else { "different" }, json!({ "equal": same }));
            Ok(same)
        }
    }
}

fn eval_cmd(cli: &Cli, diagram: &Path) -> Verdict {
    let sig = polygraph(cli)?;
    let interp = interpretation(cli, &sig)?;
    let d = load_diagram(diagram, &sig)?;
    let ch = evaluate(&d, &interp)?;
    let rows: Vec<&[f64]> = (0..ch.rows()).map(|r| ch.row(r)).collect();
    emit(
        cli,
        format!(
            "{} -> {}\n{}",
            d.dom().join(", "),
            d.cod().join(", "),
            ch.to_table().trim_end()
        ),
        json!({ "dom": ch.dom_shape(), "cod": ch.cod_shape(), "rows": rows }),
    );
    Ok(true)
}

fn eq_cmd(cli: &Cli, left: &Path, right: &Path, dot: bool) -> Verdict {
    let sig = polygraph(cli)?;
    let a = load_diagram(left, &sig)?;
    let b = load_diagram(right, &sig)?;
    let structural = a.is_equal(&b);
    let semantic = match &cli.interp {
        Some(_) => {
            let interp = interpretation(cli, &sig)?;
            let (ca, cb) = (evaluate(&a, &interp)?, evaluate(&b, &interp)?);
            Some(
                ca.dom_shape() == cb.dom_shape()
                    && ca.cod_shape() == cb.cod_shape()
                    && channel_equal(&ca, &cb, cli.eps)?,
            )
        }
        None => None,
    };
    let verdict = semantic.unwrap_or(structural);
    let mut text = format!("diagrams: {}", if structural { "equal" } else { "different" });
    if let Some(s) = semantic {
        text.push_str(&format!("\nchannels: {}", if s { "equal" } else { "different" }));
    }
    if dot {
        text.push_str(&format!("\n{}\n{}", a.to_dot(), b.to_dot()));
    }
    emit(cli, text, json!({ "equal": structural, "channels_equal": semantic }));
    Ok(verdict)
}

fn demo_cmd(cli: &Cli, name: &str) -> Verdict {
    let r = demo::run(name)?;
    if cli.json {
        let mut v = serde_json::to_value(&r)?;
        v["seed"] = json!(cli.seed);
        v["passed"] = json!(r.passed());
        println!("{}", serde_json::to_string_pretty(&v)?);
    } else {
        print!("{}", r.render());
    }
    Ok(r.passed())
}

fn run(cli: &Cli) -> Verdict {
    if cli.eps.is_nan() || cli.eps < 0.0 {
        bail!("--eps must be a non-negative number");
    }
    match &cli.cmd {
        Cmd::Shuffle(c) => shuffle_cmd(cli, c),
        Cmd::Polar(c) => polar_cmd(cli, c),
        Cmd::Do(c) => do_cmd(cli, c),
        Cmd::Session(c) => session_cmd(cli, c),
        Cmd::Eval { diagram } => eval_cmd(cli, diagram),
        Cmd::Eq { left, right, dot } => eq_cmd(cli, left, right, *dot),
        Cmd::Demo { name } => demo_cmd(cli, name),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
