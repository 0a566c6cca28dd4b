//! Plain-text parameter archive.
//!
//! ```text
//! semtag-checkpoint v1
//! meta <key> <value>
//! tensor <name> <dim> [<dim>]
//! <row-major values, whitespace separated, one matrix row per line>
//! ...
//! end
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! save/load cycle is exact. The tensors are `embedding`,
//! `lstm_input_weights`, `lstm_hidden_weights`, `lstm_bias`, `out_weights`,
//! `out_bias` and `transitions`, in that order.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use ndarray::{Array1, Array2};

use crate::crf::CrfParams;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::model::Model;

pub const MAGIC: &str = "semtag-checkpoint";
pub const VERSION: &str = "v1";

/// Free-form `meta` lines, kept in key order.
pub type Metadata = BTreeMap<String, String>;

pub fn save_checkpoint<W: Write>(mut writer: W, model: &Model, meta: &Metadata) -> Result<()> {
    writeln!(writer, "{MAGIC} {VERSION}")?;
    for (key, value) in meta {
        if key.contains(char::is_whitespace) || value.contains('\n') {
            return Err(Error::Format(format!("metadata entry {key:?} cannot be stored")));
        }
        writeln!(writer, "meta {key} {value}")?;
    }
    let e = &model.encoder;
    write_matrix(&mut writer, "embedding", &e.embedding)?;
    write_matrix(&mut writer, "lstm_input_weights", &e.lstm_input_weights)?;
    write_matrix(&mut writer, "lstm_hidden_weights", &e.lstm_hidden_weights)?;
    write_vector(&mut writer, "lstm_bias", &e.lstm_bias)?;
    write_matrix(&mut writer, "out_weights", &e.out_weights)?;
    write_vector(&mut writer, "out_bias", &e.out_bias)?;
    write_matrix(&mut writer, "transitions", model.crf.transitions())?;
    writeln!(writer, "end")?;
    Ok(())
}

fn write_values<W: Write>(writer: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            write!(writer, " ")?;
        }
        write!(writer, "{v}")?;
        first = false;
    }
    writeln!(writer)?;
    Ok(())
}

fn write_matrix<W: Write>(writer: &mut W, name: &str, m: &Array2<f64>) -> Result<()> {
    writeln!(writer, "tensor {name} {} {}", m.nrows(), m.ncols())?;
    for row in m.rows() {
        write_values(writer, row.iter().copied())?;
    }
    Ok(())
}

fn write_vector<W: Write>(writer: &mut W, name: &str, v: &Array1<f64>) -> Result<()> {
    writeln!(writer, "tensor {name} {}", v.len())?;
    write_values(writer, v.iter().copied())
}

struct RawTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

pub fn load_checkpoint<R: BufRead>(reader: R) -> Result<(Model, Metadata)> {
    let mut lines = reader.lines().enumerate();
    let mut next_line = || -> Result<Option<(usize, String)>> {
        match lines.next() {
            Some((i, line)) => Ok(Some((i + 1, line?))),
            None => Ok(None),
        }
    };

    match next_line()? {
        Some((_, header)) if header.trim() == format!("{MAGIC} {VERSION}") => {}
        Some((n, header)) => return Err(Error::parse(n, format!("not a {VERSION} checkpoint: {header:?}"))),
        None => return Err(Error::Format("empty checkpoint".into())),
    }

    let mut meta = Metadata::new();
    let mut tensors: BTreeMap<String, RawTensor> = BTreeMap::new();
    let mut ended = false;
    while let Some((n, line)) = next_line()? {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "end" {
            ended = true;
            break;
        }
        if let Some(rest) = line.strip_prefix("meta ") {
            let (key, value) = rest.split_once(' ').unwrap_or((rest, ""));
            meta.insert(key.to_string(), value.to_string());
            continue;
        }
        let Some(rest) = line.strip_prefix("tensor ") else {
            return Err(Error::parse(n, format!("unexpected line {line:?}")));
        };
        let mut parts = rest.split_whitespace();
        let name = parts.next().ok_or_else(|| Error::parse(n, "tensor without a name"))?.to_string();
        let shape = parts
            .map(|d| d.parse::<usize>().map_err(|_| Error::parse(n, format!("bad dimension {d:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if shape.is_empty() || shape.len() > 2 {
            return Err(Error::parse(n, "tensors have one or two dimensions"));
        }
        let count: usize = shape.iter().product();
        let mut values = Vec::with_capacity(count);
        while values.len() < count {
            let (n, line) = next_line()?.ok_or_else(|| Error::Format(format!("tensor {name} is truncated")))?;
            for token in line.split_whitespace() {
                let v: f64 = token.parse().map_err(|_| Error::parse(n, format!("bad value {token:?}")))?;
                values.push(v);
            }
            if values.len() > count {
                return Err(Error::parse(n, format!("too many values for tensor {name}")));
            }
        }
        if tensors.insert(name.clone(), RawTensor { shape, values }).is_some() {
            return Err(Error::parse(n, format!("tensor {name} appears twice")));
        }
    }
    if !ended {
        return Err(Error::Format("checkpoint has no end marker".into()));
    }

    let mut take_matrix = |name: &str| -> Result<Array2<f64>> {
        let t = tensors.remove(name).ok_or_else(|| Error::Format(format!("checkpoint lacks tensor {name}")))?;
        match t.shape[..] {
            [r, c] => Ok(Array2::from_shape_vec((r, c), t.values).expect("count checked")),
            _ => Err(Error::Format(format!("tensor {name} must be two-dimensional"))),
        }
    };
    let embedding = take_matrix("embedding")?;
    let lstm_input_weights = take_matrix("lstm_input_weights")?;
    let lstm_hidden_weights = take_matrix("lstm_hidden_weights")?;
    let out_weights = take_matrix("out_weights")?;
    let transitions = take_matrix("transitions")?;
    let mut take_vector = |name: &str| -> Result<Array1<f64>> {
        let t = tensors.remove(name).ok_or_else(|| Error::Format(format!("checkpoint lacks tensor {name}")))?;
        match t.shape[..] {
            [_] => Ok(Array1::from(t.values)),
            _ => Err(Error::Format(format!("tensor {name} must be one-dimensional"))),
        }
    };
    let lstm_bias = take_vector("lstm_bias")?;
    let out_bias = take_vector("out_bias")?;
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::Format(format!("unknown tensor {extra}")));
    }

    let encoder =
        EncoderParams { embedding, lstm_input_weights, lstm_hidden_weights, lstm_bias, out_weights, out_bias };
    if encoder.tensors().iter().any(|(_, t)| t.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("checkpoint tensor".into()));
    }
    let num_tags = encoder.num_tags();
    let crf = CrfParams::from_transitions(num_tags, transitions)?;
    Ok((Model::from_parts(encoder, crf)?, meta))
}
