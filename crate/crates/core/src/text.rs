//! Line-oriented pipeline description format.
//!
//! ```text
//! pipeline blur
//! buffer input dims 66x66 elem 4
//! stage bx dims y:66,x:64 flops 3
//!   in input map y*1+1, x*1+3
//! stage by dims y:64,x:64 flops 3 output
//!   in bx map y*1+3, x*1+1
//! ```
//!
//! `#` starts a comment. Each `in` line attaches an edge to the stage declared
//! immediately above it; its `map` clauses are `<dim>*<stride>+<window>`, or
//! `_*0+<window>` for a constant window, one per producer dimension.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::pipeline::{AccessMap, Dim, ExternalBuffer, InputEdge, Pipeline, Stage};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate name `{name}`")]
    DuplicateName { line: usize, name: String },
    #[error("line {line}: unknown reference `{name}`")]
    UnknownReference { line: usize, name: String },
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        message: message.into(),
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn ident(line: usize, s: Option<&str>, what: &str) -> Result<String, ParseError> {
    match s {
        Some(s) if is_identifier(s) => Ok(s.to_string()),
        Some(s) => Err(syntax(line, format!("invalid {what} `{s}`"))),
        None => Err(syntax(line, format!("missing {what}"))),
    }
}

fn number(line: usize, s: &str, what: &str) -> Result<u64, ParseError> {
    s.parse::<u64>()
        .map_err(|_| syntax(line, format!("invalid {what} `{s}`")))
}

fn expect(line: usize, got: Option<&str>, keyword: &str) -> Result<(), ParseError> {
    match got {
        Some(k) if k == keyword => Ok(()),
        Some(k) => Err(syntax(line, format!("expected `{keyword}`, found `{k}`"))),
        None => Err(syntax(line, format!("expected `{keyword}`"))),
    }
}

fn dim_list(line: usize, s: &str) -> Result<Vec<Dim>, ParseError> {
    s.split(',')
        .map(|item| {
            let (name, extent) = item
                .split_once(':')
                .ok_or_else(|| syntax(line, format!("expected `<dim>:<extent>`, found `{item}`")))?;
            let name = ident(line, Some(name), "dim name")?;
            Ok(Dim::new(name, number(line, extent, "extent")?))
        })
        .collect()
}

// Unresolved `in` clause; dimrefs are resolved once the owning stage is known.
struct PendingEdge {
    line: usize,
    producer: String,
    maps: Vec<(Option<String>, u64, u64)>,
}

fn map_clause(line: usize, clause: &str) -> Result<(Option<String>, u64, u64), ParseError> {
    let clause = clause.trim();
    let bad = || syntax(line, format!("expected `<dim>*<stride>+<window>`, found `{clause}`"));
    let (dim, rest) = clause.split_once('*').ok_or_else(bad)?;
    let (stride, window) = rest.split_once('+').ok_or_else(bad)?;
    let dim = match dim {
        "_" => None,
        d => Some(ident(line, Some(d), "dim reference")?),
    };
    Ok((
        dim,
        number(line, stride, "stride")?,
        number(line, window, "window")?,
    ))
}

/// Parse a pipeline document. Structural checks beyond name resolution are left to
/// [`crate::pipeline::validate`].
pub fn parse_pipeline(text: &str) -> Result<Pipeline, ParseError> {
    let mut name: Option<String> = None;
    let mut buffers = Vec::new();
    let mut stages: Vec<(usize, Stage, Vec<PendingEdge>)> = Vec::new();
    let mut names = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let head = toks.next().unwrap();
        if name.is_none() && head != "pipeline" {
            return Err(syntax(line, "document must start with `pipeline <name>`"));
        }
        match head {
            "pipeline" => {
                if name.is_some() {
                    return Err(syntax(line, "repeated `pipeline` header"));
                }
                name = Some(ident(line, toks.next(), "pipeline name")?);
            }
            "buffer" => {
                let bname = ident(line, toks.next(), "buffer name")?;
                expect(line, toks.next(), "dims")?;
                let dims = toks
                    .next()
                    .ok_or_else(|| syntax(line, "missing buffer dims"))?
                    .split('x')
                    .map(|e| number(line, e, "extent"))
                    .collect::<Result<Vec<_>, _>>()?;
                expect(line, toks.next(), "elem")?;
                let element_size = number(
                    line,
                    toks.next().ok_or_else(|| syntax(line, "missing element size"))?,
                    "element size",
                )?;
                if !names.insert(bname.clone()) {
                    return Err(ParseError::DuplicateName { line, name: bname });
                }
                buffers.push(ExternalBuffer {
                    name: bname,
                    dims,
                    element_size,
                });
            }
            "stage" => {
                let sname = ident(line, toks.next(), "stage name")?;
                expect(line, toks.next(), "dims")?;
                let dims = dim_list(line, toks.next().ok_or_else(|| syntax(line, "missing dims"))?)?;
                let mut reduction_dims = Vec::new();
                let mut flops = None;
                let mut output = false;
                while let Some(t) = toks.next() {
                    match t {
                        "reduce" => {
                            reduction_dims = dim_list(
                                line,
                                toks.next().ok_or_else(|| syntax(line, "missing reduce dims"))?,
                            )?;
                        }
                        "flops" => {
                            flops = Some(number(
                                line,
                                toks.next().ok_or_else(|| syntax(line, "missing flop count"))?,
                                "flop count",
                            )?);
                        }
                        "output" => output = true,
                        other => return Err(syntax(line, format!("unexpected token `{other}`"))),
                    }
                }
                let flops_per_point = flops.ok_or_else(|| syntax(line, "missing `flops <k>`"))?;
                if !names.insert(sname.clone()) {
                    return Err(ParseError::DuplicateName { line, name: sname });
                }
                stages.push((
                    line,
                    Stage {
                        name: sname,
                        dims,
                        reduction_dims,
                        flops_per_point,
                        inputs: Vec::new(),
                        output,
                    },
                    Vec::new(),
                ));
            }
            "in" => {
                let Some((_, _, pending)) = stages.last_mut() else {
                    return Err(syntax(line, "`in` before any stage"));
                };
                let producer = ident(line, toks.next(), "producer name")?;
                expect(line, toks.next(), "map")?;
                let rest: Vec<&str> = toks.collect();
                let rest = rest.join(" ");
                let maps = if rest.trim().is_empty() {
                    Vec::new()
                } else {
                    rest.split(',')
                        .map(|c| map_clause(line, c))
                        .collect::<Result<Vec<_>, _>>()?
                };
                pending.push(PendingEdge {
                    line,
                    producer,
                    maps,
                });
            }
            other => return Err(syntax(line, format!("unknown directive `{other}`"))),
        }
    }

    let name = name.ok_or_else(|| syntax(1, "empty document"))?;
    let mut out = Vec::with_capacity(stages.len());
    for (_, mut stage, pending) in stages {
        for edge in pending {
            if !names.contains(&edge.producer) {
                return Err(ParseError::UnknownReference {
                    line: edge.line,
                    name: edge.producer,
                });
            }
            let access = edge
                .maps
                .into_iter()
                .map(|(dim, stride, window)| {
                    let consumer_dim = match dim {
                        None => None,
                        Some(d) => Some(stage.dim_index(&d).ok_or(ParseError::UnknownReference {
                            line: edge.line,
                            name: d,
                        })?),
                    };
                    Ok(AccessMap {
                        consumer_dim,
                        stride,
                        window,
                    })
                })
                .collect::<Result<Vec<_>, ParseError>>()?;
            stage.inputs.push(InputEdge {
                producer: edge.producer,
                access,
            });
        }
        out.push(stage);
    }
    Ok(Pipeline {
        name,
        buffers,
        stages: out,
    })
}

fn write_dims(f: &mut fmt::Formatter<'_>, dims: &[Dim]) -> fmt::Result {
    for (i, d) in dims.iter().enumerate() {
        if i > 0 {
            write!(f, ",")?;
        }
        write!(f, "{}:{}", d.name, d.extent)?;
    }
    Ok(())
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pipeline {}", self.name)?;
        for b in &self.buffers {
            let dims: Vec<String> = b.dims.iter().map(u64::to_string).collect();
            writeln!(f, "buffer {} dims {} elem {}", b.name, dims.join("x"), b.element_size)?;
        }
        for s in &self.stages {
            write!(f, "stage {} dims ", s.name)?;
            write_dims(f, &s.dims)?;
            if !s.reduction_dims.is_empty() {
                write!(f, " reduce ")?;
                write_dims(f, &s.reduction_dims)?;
            }
            write!(f, " flops {}", s.flops_per_point)?;
            if s.output {
                write!(f, " output")?;
            }
            writeln!(f)?;
            let dim_names: Vec<&str> = s.all_dims().map(|d| d.name.as_str()).collect();
            for e in &s.inputs {
                let maps: Vec<String> = e
                    .access
                    .iter()
                    .map(|m| {
                        let d = m
                            .consumer_dim
                            .and_then(|i| dim_names.get(i).copied())
                            .unwrap_or("_");
                        format!("{d}*{}+{}", m.stride, m.window)
                    })
                    .collect();
                writeln!(f, "  in {} map {}", e.producer, maps.join(", "))?;
            }
        }
        Ok(())
    }
}
