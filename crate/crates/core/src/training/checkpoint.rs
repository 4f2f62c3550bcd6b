use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{parse_transfer_kind, transfer_kind_name, Model, ModelConfig};
use crate::nn::{Params, RngState};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "pacc-checkpoint";

/// Write the model config and every parameter, one shortest round-trip
/// decimal per line, so a reload reproduces predictions bit for bit.
pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let c = model.config();
    let values = model.flat_values();
    let mut out = String::with_capacity(values.len() * 24 + 256);
    let _ = writeln!(out, "{MAGIC} {CHECKPOINT_VERSION}");
    let _ = writeln!(out, "kind {}", c.kind);
    for (k, v) in [
        ("feature_dim", c.feature_dim),
        ("max_position", c.max_position),
        ("d_emb", c.d_emb),
        ("d_tower", c.d_tower),
        ("d_att", c.d_att),
        ("tower_depth", c.tower_depth),
    ] {
        let _ = writeln!(out, "{k} {v}");
    }
    let _ = writeln!(out, "dropout {}", c.dropout);
    let _ = writeln!(out, "transfer {}", transfer_kind_name(c.transfer));
    let _ = writeln!(out, "params {}", values.len());
    for v in &values {
        let _ = writeln!(out, "{v}");
    }
    std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Read a checkpoint. With `expected`, every architecture field must match.
pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let bad = |msg: String| Error::Checkpoint(format!("{}: {msg}", path.display()));
    let mut lines = text.lines();
    let mut header = Header {
        lines: &mut lines,
        path,
    };

    let version = header.field(MAGIC)?;
    if version != CHECKPOINT_VERSION.to_string() {
        return Err(bad(format!(
            "unsupported version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let kind = header
        .field("kind")?
        .parse()
        .map_err(|e| bad(format!("{e}")))?;
    let feature_dim = header.parse("feature_dim")?;
    let max_position = header.parse("max_position")?;
    let d_emb = header.parse("d_emb")?;
    let d_tower = header.parse("d_tower")?;
    let d_att = header.parse("d_att")?;
    let tower_depth = header.parse("tower_depth")?;
    let dropout = header.parse("dropout")?;
    let transfer =
        parse_transfer_kind(&header.field("transfer")?).map_err(|e| bad(format!("{e}")))?;
    let count: usize = header.parse("params")?;

    let config = ModelConfig {
        kind,
        feature_dim,
        max_position,
        d_emb,
        d_tower,
        d_att,
        tower_depth,
        dropout,
        transfer,
    };
    if let Some(want) = expected {
        let arch = |c: &ModelConfig| {
            (
                c.kind,
                c.feature_dim,
                c.max_position,
                c.d_emb,
                c.d_tower,
                c.d_att,
                c.tower_depth,
                c.transfer,
            )
        };
        if arch(want) != arch(&config) {
            return Err(bad(format!(
                "architecture mismatch: file has {config:?}, expected {want:?}"
            )));
        }
    }
    let mut model = Model::new(config, &mut RngState::new(0)).map_err(|e| bad(format!("{e}")))?;
    if model.num_params() != count {
        return Err(bad(format!(
            "parameter count {count} does not match architecture ({})",
            model.num_params()
        )));
    }
    let values: Vec<f64> = lines
        .map(|l| {
            l.parse::<f64>()
                .map_err(|_| bad(format!("bad parameter value {l:?}")))
        })
        .collect::<Result<_>>()?;
    if values.len() != count {
        return Err(bad(format!(
            "expected {count} values, found {}",
            values.len()
        )));
    }
    model.set_flat_values(&values)?;
    Ok(model)
}

struct Header<'a, 'b> {
    lines: &'a mut std::str::Lines<'b>,
    path: &'a Path,
}

impl Header<'_, '_> {
    fn err(&self, msg: String) -> Error {
        Error::Checkpoint(format!("{}: {msg}", self.path.display()))
    }

    fn field(&mut self, name: &str) -> Result<String> {
        let line = self
            .lines
            .next()
            .ok_or_else(|| self.err(format!("missing {name}")))?;
        match line.split_once(' ') {
            Some((k, v)) if k == name => Ok(v.to_string()),
            _ => Err(self.err(format!("expected {name}, found {line:?}"))),
        }
    }

    fn parse<T: std::str::FromStr>(&mut self, name: &str) -> Result<T> {
        let v = self.field(name)?;
        v.parse()
            .map_err(|_| self.err(format!("{name}: cannot parse {v:?}")))
    }
}
