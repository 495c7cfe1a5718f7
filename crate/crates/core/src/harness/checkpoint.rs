//! Flat-text policy checkpoints: a header line, then one weight per line.
//!
//! ```text
//! # ccs-checkpoint v1 dim=14 step=200 seed=0 config_hash=ab12...
//! -1.4735
//! ...
//! ```
//!
//! Weights use the shortest representation that parses back to the same `f64`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::Params;

pub const CHECKPOINT_MAGIC: &str = "# ccs-checkpoint v1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    pub seed: u64,
    pub config_hash: String,
    pub params: Params,
}

pub fn write_checkpoint(path: &Path, params: &Params, step: usize, seed: u64, config_hash: &str) -> Result<()> {
    let mut text = format!(
        "{CHECKPOINT_MAGIC} dim={} step={step} seed={seed} config_hash={config_hash}\n",
        params.dim()
    );
    for w in &params.theta {
        text.push_str(&format!("{w:?}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    let bad = |line: usize, detail: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(1, "empty checkpoint".into()))?;
    let fields = header
        .strip_prefix(CHECKPOINT_MAGIC)
        .ok_or_else(|| bad(1, "missing checkpoint header".into()))?;
    let (mut dim, mut step, mut seed, mut hash) = (None, None, None, None);
    for kv in fields.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad(1, format!("malformed field {kv:?}")))?;
        let num = |v: &str| v.parse::<u64>().map_err(|e| bad(1, format!("{k}: {e}")));
        match k {
            "dim" => dim = Some(num(v)? as usize),
            "step" => step = Some(num(v)? as usize),
            "seed" => seed = Some(num(v)?),
            "config_hash" => hash = Some(v.to_string()),
            _ => return Err(bad(1, format!("unknown field {k:?}"))),
        }
    }
    let missing = |name: &str| bad(1, format!("header lacks {name}"));
    let dim = dim.ok_or_else(|| missing("dim"))?;
    let theta = lines
        .enumerate()
        .map(|(i, l)| l.trim().parse::<f64>().map_err(|e| bad(i + 2, e.to_string())))
        .collect::<Result<Vec<f64>>>()?;
    if theta.len() != dim {
        return Err(bad(1, format!("header says dim={dim} but {} weights follow", theta.len())));
    }
    Ok(Checkpoint {
        step: step.ok_or_else(|| missing("step"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
        config_hash: hash.ok_or_else(|| missing("config_hash"))?,
        params: Params { theta },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        let params = Params {
            theta: vec![0.1 + 0.2, -1e-300, 3.0, f64::MIN_POSITIVE],
        };
        write_checkpoint(&path, &params, 7, 9, "abc").unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.params, params);
        assert_eq!((back.step, back.seed, back.config_hash.as_str()), (7, 9, "abc"));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        fs::write(&path, format!("{CHECKPOINT_MAGIC} dim=3 step=0 seed=0 config_hash=x\n1.0\n")).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Parse { line: 1, .. })));
        fs::write(&path, format!("{CHECKPOINT_MAGIC} dim=1 step=0 seed=0 config_hash=x\nabc\n")).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Parse { line: 2, .. })));
    }
}
