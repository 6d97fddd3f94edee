//! Text model format:
//!
//! ```text
//! cbow-embeddings 1
//! scalar f32
//! dim 300
//! vocab_size 1234
//! config {"dim":300,...}
//! epoch_losses 4.1e0 3.2e0
//! vectors
//! <token>\t<count>\t<input values>\t<output values>
//! ```
//!
//! Values use Rust's shortest round-trip exponent formatting, so a written
//! model reads back bit-for-bit.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{CbowConfig, EmbeddingModel, Vocab};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &str = "cbow-embeddings 1";

fn push_values<F: Scalar>(out: &mut String, values: &[F]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v:e}").expect("writing to a String");
    }
}

pub fn write_embeddings<F: Scalar>(model: &EmbeddingModel<F>, path: &Path) -> Result<()> {
    let io_err = |e| Error::io(path, e);
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    let config = serde_json::to_string(model.config()).map_err(|e| Error::invalid(e.to_string()))?;
    let mut header = format!(
        "{MAGIC}\nscalar {}\ndim {}\nvocab_size {}\nconfig {config}\nepoch_losses",
        F::NAME,
        model.dim(),
        model.vocab().len()
    );
    for l in model.epoch_losses() {
        write!(header, " {l:e}").expect("writing to a String");
    }
    header.push_str("\nvectors\n");
    w.write_all(header.as_bytes()).map_err(io_err)?;

    let mut line = String::new();
    for idx in 0..model.vocab().len() {
        line.clear();
        write!(line, "{}\t{}\t", model.vocab().token(idx), model.vocab().count(idx)).expect("writing to a String");
        push_values(&mut line, model.input_vector(idx));
        line.push('\t');
        push_values(&mut line, model.output_vector(idx));
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_embeddings<F: Scalar>(path: &Path) -> Result<EmbeddingModel<F>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line: line + 1,
        message,
    };

    let mut dim = None;
    let mut vocab_size = None;
    let mut config = None;
    let mut losses = Vec::new();
    let mut saw_magic = false;
    for (no, line) in lines.by_ref() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !saw_magic {
            if line != MAGIC {
                return Err(parse_err(no, "not a cbow-embeddings file".into()));
            }
            saw_magic = true;
            continue;
        }
        if line == "vectors" {
            break;
        }
        let (key, value) = line.split_once(' ').unwrap_or((line.as_str(), ""));
        match key {
            "scalar" => {}
            "dim" => dim = Some(value.parse::<usize>().map_err(|e| parse_err(no, e.to_string()))?),
            "vocab_size" => vocab_size = Some(value.parse::<usize>().map_err(|e| parse_err(no, e.to_string()))?),
            "config" => {
                config = Some(serde_json::from_str::<CbowConfig>(value).map_err(|e| parse_err(no, e.to_string()))?)
            }
            "epoch_losses" => {
                losses = value
                    .split_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|e| parse_err(no, e.to_string())))
                    .collect::<Result<_>>()?
            }
            other => return Err(parse_err(no, format!("unknown header key `{other}`"))),
        }
    }
    let (dim, vocab_size) = match (dim, vocab_size) {
        (Some(d), Some(v)) => (d, v),
        _ => return Err(Error::invalid(format!("{}: missing dim or vocab_size", path.display()))),
    };
    let config = config.ok_or_else(|| Error::invalid(format!("{}: missing config", path.display())))?;

    let mut entries = Vec::with_capacity(vocab_size);
    let mut input = Vec::with_capacity(vocab_size * dim);
    let mut output = Vec::with_capacity(vocab_size * dim);
    for (no, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(no, "expected token, count, input and output fields".into()));
        }
        let count = fields[1].parse::<u64>().map_err(|e| parse_err(no, e.to_string()))?;
        entries.push((fields[0].to_string(), count));
        for (field, dest) in [(fields[2], &mut input), (fields[3], &mut output)] {
            let before = dest.len();
            for v in field.split(' ') {
                dest.push(v.parse::<F>().map_err(|_| parse_err(no, format!("bad value `{v}`")))?);
            }
            if dest.len() - before != dim {
                return Err(parse_err(no, format!("expected {dim} values")));
            }
        }
    }
    if entries.len() != vocab_size {
        return Err(Error::invalid(format!(
            "{}: header declares {vocab_size} tokens, found {}",
            path.display(),
            entries.len()
        )));
    }
    let min_count = config.min_count as u64;
    let mut model = EmbeddingModel::from_parts(Vocab::from_entries(entries, min_count), dim, input, output, config)?;
    model.set_epoch_losses(losses);
    Ok(model)
}
