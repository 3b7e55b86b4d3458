//! Binary checkpoint format.
//!
//! ```text
//! magic      "EOSAR1\n"
//! u32        config block length, then that many bytes of `key=value\n` lines
//! u32        parameter count P
//! P entries  u32 name length, name bytes, u32 rank, rank × u32 extents
//! payload    f32 values of every parameter, in table order
//! ```
//! All integers and floats are little-endian. Config lines with a `meta.`
//! prefix carry provenance (seeds, phase) and are not part of the network config.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::config::CONFIG_KEYS;
use crate::model::{ModelParams, NetworkConfig, ParamSet, PARAM_NAMES};

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"EOSAR1\n";
const META_PREFIX: &str = "meta.";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub params: ModelParams<f32>,
    pub meta: BTreeMap<String, String>,
}

pub fn save_checkpoint(params: &ModelParams<f32>, config: &NetworkConfig, path: &Path) -> Result<()> {
    Checkpoint { config: config.clone(), params: params.clone(), meta: BTreeMap::new() }.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams<f32>, NetworkConfig)> {
    let ckpt = Checkpoint::load(path)?;
    Ok((ckpt.params, ckpt.config))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.config.validate()?;
        self.params.check_shapes(&self.config)?;
        let mut block = String::new();
        for (k, v) in self.config.to_pairs() {
            block.push_str(&format!("{k}={v}\n"));
        }
        for (k, v) in &self.meta {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::Parameter(format!("checkpoint metadata {k:?} is not a single line")));
            }
            block.push_str(&format!("{META_PREFIX}{k}={v}\n"));
        }

        let named = self.params.named();
        let mut out = Vec::with_capacity(64 + block.len() + 4 * self.params.parameter_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, block.len());
        out.extend_from_slice(block.as_bytes());
        put_u32(&mut out, named.len());
        for (name, t) in &named {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.rank());
            for &d in t.shape() {
                put_u32(&mut out, d);
            }
        }
        for (_, t) in &named {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingCheckpoint(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Self::from_bytes(&bytes, path)
    }

    /// Decode a checkpoint; `path` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path: path.to_path_buf() };
        let magic = r.take(CHECKPOINT_MAGIC.len(), "magic")?;
        if magic != CHECKPOINT_MAGIC {
            if magic.starts_with(b"EOSAR") && magic.ends_with(b"\n") {
                return Err(Error::VersionMismatch {
                    path: r.path,
                    found: String::from_utf8_lossy(&magic[5..6]).into_owned(),
                });
            }
            return Err(Error::BadMagic { path: r.path });
        }

        let block_len = r.u32("config block length")?;
        let block = std::str::from_utf8(r.take(block_len, "config block")?)
            .map_err(|_| r.table_error("config block is not UTF-8"))?;
        let mut config = NetworkConfig::default();
        let mut seen = Vec::new();
        let mut meta = BTreeMap::new();
        for line in block.lines() {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| r.table_error(&format!("malformed config line {line:?}")))?;
            if let Some(meta_key) = key.strip_prefix(META_PREFIX) {
                meta.insert(meta_key.to_string(), value.to_string());
            } else if config.set(key, value).map_err(|e| r.table_error(&e.to_string()))? {
                seen.push(key);
            } else {
                return Err(r.table_error(&format!("unknown config key {key:?}")));
            }
        }
        if let Some(missing) = CONFIG_KEYS.iter().find(|k| !seen.contains(k)) {
            return Err(r.table_error(&format!("config key {missing} missing")));
        }
        config.validate().map_err(|e| r.table_error(&e.to_string()))?;

        let count = r.u32("parameter count")?;
        let expected = config.param_shapes();
        if count != PARAM_NAMES.len() {
            return Err(r.table_error(&format!("{count} parameters, expected {}", PARAM_NAMES.len())));
        }
        for (name, shape) in PARAM_NAMES.iter().zip(&expected) {
            let len = r.u32("parameter name length")?;
            let found = r.take(len, "parameter name")?;
            if found != name.as_bytes() {
                return Err(r.table_error(&format!(
                    "expected {name}, found {:?}",
                    String::from_utf8_lossy(found)
                )));
            }
            let rank = r.u32("rank")?;
            let mut extents = Vec::with_capacity(rank);
            for _ in 0..rank {
                extents.push(r.u32("extent")?);
            }
            if &extents != shape {
                return Err(r.table_error(&format!("{name} declared {extents:?}, config implies {shape:?}")));
            }
        }

        let total: usize = expected.iter().map(|s| s.iter().product::<usize>()).sum();
        let remaining = bytes.len() - r.pos;
        if remaining < 4 * total {
            return Err(Error::Truncated {
                path: r.path,
                detail: format!("payload has {remaining} bytes, table declares {}", 4 * total),
            });
        }
        if remaining > 4 * total {
            return Err(r.table_error(&format!(
                "payload has {remaining} bytes, table declares {}",
                4 * total
            )));
        }

        let mut params = ModelParams::<f32>::zeros(&config);
        for (_, t) in params.named_mut() {
            let raw = r.take(4 * t.len(), "payload")?;
            for (v, chunk) in t.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
                *v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
            }
            if !t.all_finite() {
                return Err(r.table_error("payload contains non-finite values"));
            }
        }
        Ok(Checkpoint { config, params, meta })
    }

    /// Header size in bytes for this checkpoint (everything before the payload).
    pub fn header_len(&self) -> Result<usize> {
        Ok(self.to_bytes()?.len() - 4 * self.params.parameter_count())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("checkpoint field exceeds u32");
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: PathBuf,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Truncated { path: self.path.clone(), detail: format!("file ends inside {what}") }
        })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let raw = self.take(4, what)?;
        Ok(u32::from_le_bytes(raw.try_into().expect("4 bytes")) as usize)
    }

    fn table_error(&self, detail: &str) -> Error {
        Error::ShapeTable { path: self.path.clone(), detail: detail.to_string() }
    }
}
