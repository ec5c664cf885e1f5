//! XYZ and QM9-style extended XYZ readers.
//!
//! A frame is an atom-count line, a comment line, then one line per atom:
//! `symbol x y z [extra columns...]`. QM9 files append three trailing lines
//! (frequencies, SMILES, InChI) after the atoms and write some numbers in
//! Mathematica notation (`1.5*^-6`); both are handled in `Qm9Extended` mode.

use std::io::Write;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Composition, Element, Structure};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XyzFormat {
    #[default]
    Plain,
    Qm9Extended,
}

/// Extracts monomer counts such as `3SA2W` from a file name or comment line.
#[derive(Clone, Debug)]
pub struct CompositionParser {
    pattern: Regex,
}

impl CompositionParser {
    /// Default pattern: repeated `<count><TAG>` groups.
    pub const DEFAULT_PATTERN: &'static str = r"(\d+)([A-Za-z]+)";

    /// `pattern` must have two capture groups: the count, then the tag.
    pub fn new(pattern: &str) -> Result<Self> {
        let pattern = Regex::new(pattern)
            .map_err(|e| Error::config(format!("invalid composition pattern: {e}")))?;
        if pattern.captures_len() < 3 {
            return Err(Error::config(
                "composition pattern needs two capture groups (count, tag)",
            ));
        }
        Ok(CompositionParser { pattern })
    }

    /// Returns `None` when nothing matches.
    pub fn parse(&self, text: &str) -> Option<Composition> {
        let mut out = Composition::new();
        for cap in self.pattern.captures_iter(text) {
            let count: u32 = cap.get(1)?.as_str().parse().ok()?;
            let tag = cap.get(2)?.as_str().to_string();
            *out.entry(tag).or_insert(0) += count;
        }
        (!out.is_empty()).then_some(out)
    }
}

impl Default for CompositionParser {
    fn default() -> Self {
        CompositionParser::new(Self::DEFAULT_PATTERN).expect("default pattern is valid")
    }
}

#[derive(Clone, Debug, Default)]
pub struct XyzOptions {
    pub format: XyzFormat,
    /// Whitespace-separated token of the comment line holding the label.
    /// QM9 places U0 (internal energy at 0 K, hartree) at index 12.
    pub property_column: Option<usize>,
    /// Parse compositions from the comment line of each frame.
    pub composition_from_comment: Option<CompositionParser>,
}

impl XyzOptions {
    pub fn plain() -> Self {
        XyzOptions::default()
    }

    pub fn qm9(property_column: usize) -> Self {
        XyzOptions {
            format: XyzFormat::Qm9Extended,
            property_column: Some(property_column),
            composition_from_comment: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub structure: Structure,
    pub label: Option<f64>,
    pub comment: String,
}

pub fn parse_xyz(path: impl AsRef<Path>, opts: &XyzOptions) -> Result<Vec<Frame>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "frame".to_string());
    parse_xyz_str(&text, &stem, opts)
}

fn parse_number(token: &str) -> Option<f64> {
    if token.contains("*^") {
        token.replace("*^", "e").parse().ok()
    } else {
        token.parse().ok()
    }
}

/// Parses every frame in `text`. Frame ids are `source_name` for a single
/// frame and `source_name#<index>` otherwise.
pub fn parse_xyz_str(text: &str, source_name: &str, opts: &XyzOptions) -> Result<Vec<Frame>> {
    let lines: Vec<&str> = text.lines().collect();
    let perr = |line: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let mut raw = Vec::new();
    let mut pos = 0;
    while pos < lines.len() {
        if lines[pos].trim().is_empty() {
            pos += 1;
            continue;
        }
        let count_line = pos + 1;
        let n_atoms: usize = lines[pos]
            .trim()
            .parse()
            .map_err(|_| perr(count_line, format!("expected atom count, found `{}`", lines[pos].trim())))?;
        if n_atoms == 0 {
            return Err(perr(count_line, "frame declares zero atoms".into()));
        }
        let comment = lines
            .get(pos + 1)
            .ok_or_else(|| perr(count_line + 1, "missing comment line".into()))?
            .trim()
            .to_string();
        let mut elements = Vec::with_capacity(n_atoms);
        let mut coords = Vec::with_capacity(n_atoms);
        for a in 0..n_atoms {
            let ln = pos + 2 + a;
            let line = lines.get(ln).ok_or_else(|| {
                perr(ln + 1, format!("frame declares {n_atoms} atoms but only {a} are present"))
            })?;
            let mut tok = line.split_whitespace();
            let sym = tok
                .next()
                .ok_or_else(|| perr(ln + 1, format!("frame declares {n_atoms} atoms but only {a} are present")))?;
            if sym.parse::<usize>().is_ok() {
                return Err(perr(
                    ln + 1,
                    format!("frame declares {n_atoms} atoms but only {a} are present"),
                ));
            }
            elements.push(Element::from_symbol(sym)?);
            let mut xyz = [0.0; 3];
            for v in xyz.iter_mut() {
                let t = tok
                    .next()
                    .ok_or_else(|| perr(ln + 1, "atom line needs three coordinates".into()))?;
                *v = parse_number(t).ok_or_else(|| perr(ln + 1, format!("bad coordinate `{t}`")))?;
            }
            coords.push(xyz);
        }
        let label = match opts.property_column {
            None => None,
            Some(col) => {
                let tokens: Vec<&str> = comment.split_whitespace().collect();
                let t = tokens.get(col).ok_or_else(|| {
                    perr(
                        count_line + 1,
                        format!("property column {col} out of range ({} tokens)", tokens.len()),
                    )
                })?;
                Some(parse_number(t).ok_or_else(|| perr(count_line + 1, format!("bad property value `{t}`")))?)
            }
        };
        pos += 2 + n_atoms;
        if opts.format == XyzFormat::Qm9Extended {
            while pos < lines.len() && lines[pos].trim().parse::<usize>().is_err() {
                pos += 1;
            }
        }
        raw.push((elements, coords, label, comment, count_line));
    }
    let single = raw.len() == 1;
    raw.into_iter()
        .enumerate()
        .map(|(i, (elements, coords, label, comment, count_line))| {
            let id = if single {
                source_name.to_string()
            } else {
                format!("{source_name}#{i}")
            };
            let mut structure = Structure::new(id, elements, coords).map_err(|e| perr(count_line, e.to_string()))?;
            if let Some(p) = &opts.composition_from_comment {
                structure.composition = p.parse(&comment);
            }
            Ok(Frame {
                structure,
                label,
                comment,
            })
        })
        .collect()
}

/// Writes frames in plain XYZ. Coordinates use shortest round-trip
/// formatting, so a re-read reproduces them exactly.
pub fn write_xyz<W: Write>(mut out: W, frames: &[(&Structure, &str)]) -> std::io::Result<()> {
    for (s, comment) in frames {
        writeln!(out, "{}", s.len())?;
        writeln!(out, "{}", comment.replace('\n', " "))?;
        for (e, c) in s.elements().iter().zip(s.coords()) {
            writeln!(out, "{} {} {} {}", e, c[0], c[1], c[2])?;
        }
    }
    Ok(())
}
