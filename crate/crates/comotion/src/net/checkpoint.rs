//! Plain-text parameter checkpoints.
//!
//! Layout: a version header, then for each tensor (in canonical order) a
//! `param <name> <rows> <cols>` line followed by one whitespace-separated
//! line per row. Floats use Rust's shortest round-trip formatting, so
//! save → load reproduces every bit. Loading validates the header, the
//! tensor order, and every shape against the current architecture.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::{Error, Result};

use super::params::{Params, TENSOR_SHAPES};

const CHECKPOINT_MAGIC: &str = "comotion-checkpoint v1";

/// Write all parameters to `path`.
pub fn save_checkpoint(path: &Path, params: &Params) -> Result<()> {
    let mut out = String::new();
    out.push_str(CHECKPOINT_MAGIC);
    out.push('\n');
    for (name, tensor) in params.tensors() {
        writeln!(out, "param {} {} {}", name, tensor.nrows(), tensor.ncols())
            .expect("string write");
        for row in tensor.rows() {
            let mut line = String::new();
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    line.push(' ');
                }
                write!(line, "{v}").expect("string write");
            }
            out.push_str(&line);
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a checkpoint written by [`save_checkpoint`], validating shapes.
pub fn load_checkpoint(path: &Path) -> Result<Params> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let bad = |msg: String| Error::Checkpoint(format!("{}: {msg}", path.display()));

    match lines.next() {
        Some(l) if l.trim() == CHECKPOINT_MAGIC => {}
        Some(l) => return Err(bad(format!("bad header {l:?}"))),
        None => return Err(bad("empty file".into())),
    }

    let mut tensors = Vec::with_capacity(TENSOR_SHAPES.len());
    for (name, rows, cols) in TENSOR_SHAPES {
        let header = lines
            .next()
            .ok_or_else(|| bad(format!("missing tensor {name}")))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "param" {
            return Err(bad(format!("expected a param header, got {header:?}")));
        }
        if fields[1] != name {
            return Err(bad(format!("expected tensor {name}, found {}", fields[1])));
        }
        let got_rows: usize =
            fields[2].parse().map_err(|_| bad(format!("bad row count {:?}", fields[2])))?;
        let got_cols: usize =
            fields[3].parse().map_err(|_| bad(format!("bad col count {:?}", fields[3])))?;
        if (got_rows, got_cols) != (rows, cols) {
            return Err(bad(format!(
                "tensor {name} has shape {got_rows}x{got_cols}, expected {rows}x{cols}"
            )));
        }
        let mut a = Array2::zeros((rows, cols));
        for r in 0..rows {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("tensor {name} truncated at row {r}")))?;
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != cols {
                return Err(bad(format!(
                    "tensor {name} row {r} has {} values, expected {cols}",
                    vals.len()
                )));
            }
            for (c, v) in vals.iter().enumerate() {
                a[(r, c)] = v
                    .parse::<f64>()
                    .map_err(|_| bad(format!("tensor {name} row {r}: bad value {v:?}")))?;
            }
        }
        tensors.push(a);
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(bad("trailing data after the final tensor".into()));
    }
    Ok(Params::from_ordered(tensors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trips_bit_exact() {
        let mut params = Params::init(99);
        // Exercise awkward float surface forms.
        params.dec_out_b[(0, 0)] = 1e-300;
        params.dec_out_b[(0, 1)] = -0.1 + 0.2; // not representable "0.1"
        params.vae_b[(0, 3)] = f64::MIN_POSITIVE;
        let f = tempfile::NamedTempFile::new().unwrap();
        save_checkpoint(f.path(), &params).unwrap();
        let loaded = load_checkpoint(f.path()).unwrap();
        assert_eq!(loaded, params);
    }

    #[test]
    fn load_rejects_malformed_checkpoints() {
        let write = |content: &str| {
            let f = tempfile::NamedTempFile::new().unwrap();
            std::fs::write(f.path(), content).unwrap();
            f
        };
        // Wrong header.
        let f = write("comotion-checkpoint v9\n");
        assert!(matches!(load_checkpoint(f.path()), Err(Error::Checkpoint(_))));

        // Wrong tensor name in the first slot.
        let f = write("comotion-checkpoint v1\nparam nonsense 2 16\n");
        assert!(matches!(load_checkpoint(f.path()), Err(Error::Checkpoint(_))));

        // Right name, wrong shape.
        let f = write("comotion-checkpoint v1\nparam enc_embed_w 3 16\n");
        assert!(matches!(load_checkpoint(f.path()), Err(Error::Checkpoint(_))));

        // Truncated: header only, no rows.
        let f = write("comotion-checkpoint v1\nparam enc_embed_w 2 16\n");
        assert!(matches!(load_checkpoint(f.path()), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn load_rejects_trailing_garbage() {
        let params = Params::zeros();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_checkpoint(f.path(), &params).unwrap();
        let mut text = std::fs::read_to_string(f.path()).unwrap();
        text.push_str("param extra 1 1\n0\n");
        std::fs::write(f.path(), text).unwrap();
        assert!(matches!(load_checkpoint(f.path()), Err(Error::Checkpoint(_))));
    }
}
