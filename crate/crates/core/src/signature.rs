//! Polygraph signatures: object names, typed generators and the pure/effectful split.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of the runtime object injected by [`runtime_extend`].
pub const RUNTIME: &str = "R";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SignatureError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid identifier `{0}`")]
    BadIdentifier(String),
    #[error("`R` is reserved for the runtime object")]
    ReservedRuntime,
    #[error("object `{0}` declared twice")]
    DuplicateObject(String),
    #[error("generator `{0}` declared twice")]
    DuplicateGenerator(String),
    #[error("generator `{generator}` uses undeclared object `{object}`")]
    UndeclaredObject { generator: String, object: String },
    #[error("generator `{0}` clashes with a session generator name")]
    SessionClash(String),
    #[error("session signatures need a pure base, but `{0}` is effectful")]
    EffectfulBase(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Checks the identifier syntax `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generator {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub effectful: bool,
}

impl Generator {
    pub fn pure(name: &str, inputs: &[&str], outputs: &[&str]) -> Self {
        Generator {
            name: name.to_string(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            effectful: false,
        }
    }

    pub fn effectful(name: &str, inputs: &[&str], outputs: &[&str]) -> Self {
        Generator {
            effectful: true,
            ..Generator::pure(name, inputs, outputs)
        }
    }
}

/// A validated signature. Construct it with [`Polygraph::new`] or [`load_polygraph`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Polygraph {
    objects: Vec<String>,
    generators: Vec<Generator>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolygraph {
    objects: Vec<String>,
    generators: Vec<Generator>,
}

impl Polygraph {
    /// Validates user-supplied objects and generators. The runtime object may not be declared.
    pub fn new(objects: Vec<String>, generators: Vec<Generator>) -> Result<Self, SignatureError> {
        if objects.iter().any(|o| o == RUNTIME) {
            return Err(SignatureError::ReservedRuntime);
        }
        Self::build(objects, generators)
    }

    fn build(objects: Vec<String>, generators: Vec<Generator>) -> Result<Self, SignatureError> {
        let mut seen = BTreeSet::new();
        for o in &objects {
            if !is_identifier(o) {
                return Err(SignatureError::BadIdentifier(o.clone()));
            }
            if !seen.insert(o.as_str()) {
                return Err(SignatureError::DuplicateObject(o.clone()));
            }
        }
        let mut names = BTreeSet::new();
        for g in &generators {
            if !is_identifier(&g.name) {
                return Err(SignatureError::BadIdentifier(g.name.clone()));
            }
            if !names.insert(g.name.as_str()) {
                return Err(SignatureError::DuplicateGenerator(g.name.clone()));
            }
            for t in g.inputs.iter().chain(&g.outputs) {
                if !seen.contains(t.as_str()) {
                    return Err(SignatureError::UndeclaredObject {
                        generator: g.name.clone(),
                        object: t.clone(),
                    });
                }
            }
        }
        Ok(Polygraph { objects, generators })
    }

    pub fn empty() -> Self {
        Polygraph {
            objects: vec![],
            generators: vec![],
        }
    }

    pub fn objects(&self) -> &[String] {
        &self.objects
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn has_object(&self, name: &str) -> bool {
        self.objects.iter().any(|o| o == name)
    }

    pub fn generator(&self, name: &str) -> Option<&Generator> {
        self.generators.iter().find(|g| g.name == name)
    }

    pub fn generator_index(&self, name: &str) -> Option<usize> {
        self.generators.iter().position(|g| g.name == name)
    }

    pub fn is_pure(&self) -> bool {
        self.generators.iter().all(|g| !g.effectful)
    }

    pub fn from_json(text: &str) -> Result<Self, SignatureError> {
        let raw: RawPolygraph = serde_json::from_str(text).map_err(|e| SignatureError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Polygraph::new(raw.objects, raw.generators)
    }

    /// Canonical serialization: pretty JSON with the field order of the file format.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("polygraph serializes")
    }
}

pub fn load_polygraph(path: impl AsRef<Path>) -> Result<Polygraph, SignatureError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SignatureError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Polygraph::from_json(&text)
}

pub fn save_polygraph(p: &Polygraph, path: impl AsRef<Path>) -> Result<(), SignatureError> {
    let path = path.as_ref();
    std::fs::write(path, p.to_json() + "\n").map_err(|e| SignatureError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Adds the runtime object and threads it through every effectful generator.
///
/// An effectful `g: A -> B` becomes the pure `g: R,A -> R,B`. Pure generators are kept.
pub fn runtime_extend(p: &Polygraph) -> Polygraph {
    let mut objects = p.objects.clone();
    if !objects.iter().any(|o| o == RUNTIME) {
        objects.push(RUNTIME.to_string());
    }
    let generators = p
        .generators
        .iter()
        .map(|g| {
            if g.effectful {
                let mut inputs = vec![RUNTIME.to_string()];
                inputs.extend(g.inputs.iter().cloned());
                let mut outputs = vec![RUNTIME.to_string()];
                outputs.extend(g.outputs.iter().cloned());
                Generator {
                    name: g.name.clone(),
                    inputs,
                    outputs,
                    effectful: false,
                }
            } else {
                g.clone()
            }
        })
        .collect();
    Polygraph { objects, generators }
}

pub fn send_name(ty: &str) -> String {
    format!("send_{ty}")
}

pub fn recv_name(ty: &str) -> String {
    format!("recv_{ty}")
}

/// Extends a pure base with effectful `send_X: X -> I` and `recv_X: I -> X` for every object.
pub fn session_polygraph(base: &Polygraph) -> Result<Polygraph, SignatureError> {
    if let Some(g) = base.generators.iter().find(|g| g.effectful) {
        return Err(SignatureError::EffectfulBase(g.name.clone()));
    }
    if let Some(g) = base
        .generators
        .iter()
        .find(|g| g.name.starts_with("send_") || g.name.starts_with("recv_"))
    {
        return Err(SignatureError::SessionClash(g.name.clone()));
    }
    let mut generators = base.generators.clone();
    for o in &base.objects {
        generators.push(Generator {
            name: send_name(o),
            inputs: vec![o.clone()],
            outputs: vec![],
            effectful: true,
        });
        generators.push(Generator {
            name: recv_name(o),
            inputs: vec![],
            outputs: vec![o.clone()],
            effectful: true,
        });
    }
    Polygraph::build(base.objects.clone(), generators)
}
