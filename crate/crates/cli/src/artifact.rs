//! Binary control artifact.
//!
//! Layout, little-endian:
//! `MVDLCTRL` | version u32 | model hash [32] | x_bound f64 | n_space u64 |
//! n_time u64 | scheme_weight f64 | horizon f64 | count u64 | count x f64.
//! The hash covers the model and observable sections of the configuration
//! that produced the control; loading under a different model is refused.

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use mvdlmc::control::{ControlField, Grid1D};

use crate::config::RunConfig;
use crate::CliError;

const MAGIC: &[u8; 8] = b"MVDLCTRL";
const VERSION: u32 = 1;

/// SHA-256 of the model and observable sections, as canonical JSON.
pub fn model_hash(cfg: &RunConfig) -> [u8; 32] {
    let canonical = serde_json::json!({
        "model": cfg.model,
        "observable": cfg.observable,
    });
    Sha256::digest(canonical.to_string().as_bytes()).into()
}

pub fn write_control(path: &Path, hash: &[u8; 32], field: &ControlField) -> Result<(), CliError> {
    let g = *field.grid();
    let values = field.values();
    let mut buf = Vec::with_capacity(8 + 4 + 32 + 48 + 8 * values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(hash);
    buf.extend_from_slice(&g.x_bound.to_le_bytes());
    buf.extend_from_slice(&(g.n_space as u64).to_le_bytes());
    buf.extend_from_slice(&(g.n_time as u64).to_le_bytes());
    buf.extend_from_slice(&g.scheme_weight.to_le_bytes());
    buf.extend_from_slice(&g.horizon.to_le_bytes());
    buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(&buf).map_err(|e| CliError::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], CliError> {
        if self.bytes.len() < N {
            return Err(CliError::Artifact("truncated control artifact".into()));
        }
        let (head, rest) = self.bytes.split_at(N);
        self.bytes = rest;
        Ok(head.try_into().expect("length checked"))
    }

    fn u64(&mut self) -> Result<u64, CliError> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, CliError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

/// Load a control and check it was solved for the model in `cfg`.
pub fn read_control(path: &Path, cfg: &RunConfig) -> Result<ControlField, CliError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CliError::io(path, e))?;
    let mut c = Cursor { bytes: &bytes };
    if &c.take::<8>()? != MAGIC {
        return Err(CliError::Artifact(format!("{} is not a control artifact", path.display())));
    }
    let version = u32::from_le_bytes(c.take()?);
    if version != VERSION {
        return Err(CliError::Artifact(format!("unsupported artifact version {version}")));
    }
    let hash: [u8; 32] = c.take()?;
    if hash != model_hash(cfg) {
        return Err(CliError::Artifact(format!(
            "{} was solved for model {}, configuration has {}",
            path.display(),
            hex::encode(hash),
            hex::encode(model_hash(cfg))
        )));
    }
    let grid = Grid1D {
        x_bound: c.f64()?,
        n_space: c.u64()? as usize,
        n_time: c.u64()? as usize,
        scheme_weight: c.f64()?,
        horizon: c.f64()?,
    }
    .validated()?;
    let count = c.u64()? as usize;
    let mut values = Vec::with_capacity(count.min(1 << 28));
    for _ in 0..count {
        values.push(c.f64()?);
    }
    if !c.bytes.is_empty() {
        return Err(CliError::Artifact("trailing bytes in control artifact".into()));
    }
    if (grid.horizon - cfg.model.horizon).abs() > 1e-12 * cfg.model.horizon {
        return Err(CliError::Artifact(format!(
            "artifact covers [0, {}], model horizon is {}",
            grid.horizon, cfg.model.horizon
        )));
    }
    Ok(ControlField::from_values(grid, values)?)
}
