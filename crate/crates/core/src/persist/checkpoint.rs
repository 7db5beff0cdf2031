//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "W1DC" | version u32 | arch name (u16 len + UTF-8)
//! epoch u64 | seed u64 | config digest (u16 len + UTF-8)
//! genre names (u16 count, each u16 len + UTF-8)
//! tensor count u32
//! per tensor: name (u16 len + UTF-8) | rank u8 | dims u64 × rank | f32 payload
//! ```
//!
//! Every parameter is stored, batch-norm running statistics included, so a
//! loaded model is inference-ready. Payloads are 32-bit floats; an `f32`
//! network round-trips bit-exactly.

use std::io::Read;
use std::path::Path;

use super::{atomic_write, PersistError};
use crate::models::{ArchName, Network};
use crate::Scalar;

const MAGIC: &[u8; 4] = b"W1DC";
const VERSION: u32 = 1;

/// Provenance stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CheckpointMeta {
    /// Best validation epoch the weights come from (0 when unvalidated).
    pub epoch: u64,
    pub seed: u64,
    /// Digest of the training configuration, for provenance checks.
    pub config_digest: String,
    /// Class index to genre name, for self-contained prediction output.
    pub genres: Vec<String>,
}

fn format_err(path: &Path, detail: impl Into<String>) -> PersistError {
    PersistError::Format {
        what: "checkpoint",
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

fn write_str(out: &mut Vec<u8>, s: &str) -> Result<(), String> {
    let bytes = s.as_bytes();
    let len = u16::try_from(bytes.len()).map_err(|_| format!("string too long: {s:.40}..."))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(bytes);
    Ok(())
}

/// Serializes a network and its metadata, writing atomically.
pub fn save_checkpoint<F: Scalar>(
    path: &Path,
    net: &Network<F>,
    meta: &CheckpointMeta,
) -> Result<(), PersistError> {
    let fail = |detail: String| format_err(path, detail);
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    write_str(&mut out, net.spec().name.cli_name()).map_err(fail)?;
    out.extend_from_slice(&meta.epoch.to_le_bytes());
    out.extend_from_slice(&meta.seed.to_le_bytes());
    write_str(&mut out, &meta.config_digest).map_err(fail)?;
    let genre_count = u16::try_from(meta.genres.len())
        .map_err(|_| fail("too many genre names".to_string()))?;
    out.extend_from_slice(&genre_count.to_le_bytes());
    for g in &meta.genres {
        write_str(&mut out, g).map_err(fail)?;
    }
    let count = u32::try_from(net.params().len())
        .map_err(|_| fail("too many tensors".to_string()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (_, entry) in net.params().iter() {
        write_str(&mut out, &entry.name).map_err(fail)?;
        let shape = entry.value.shape();
        out.push(shape.len() as u8);
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in entry.value.data() {
            out.extend_from_slice(&(v.to_f32().unwrap()).to_le_bytes());
        }
    }
    atomic_write(path, &out)
}

struct Reader<'a> {
    path: &'a Path,
    file: std::io::BufReader<std::fs::File>,
}

impl<'a> Reader<'a> {
    fn open(path: &'a Path) -> Result<Self, PersistError> {
        let file = std::fs::File::open(path).map_err(|source| PersistError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Reader {
            path,
            file: std::io::BufReader::new(file),
        })
    }

    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>, PersistError> {
        let mut buf = vec![0u8; n];
        self.file
            .read_exact(&mut buf)
            .map_err(|_| format_err(self.path, format!("truncated while reading {what}")))?;
        Ok(buf)
    }

    fn u16(&mut self, what: &str) -> Result<u16, PersistError> {
        Ok(u16::from_le_bytes(self.bytes(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, PersistError> {
        Ok(u32::from_le_bytes(self.bytes(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, PersistError> {
        Ok(u64::from_le_bytes(self.bytes(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String, PersistError> {
        let len = self.u16(what)? as usize;
        String::from_utf8(self.bytes(len, what)?)
            .map_err(|_| format_err(self.path, format!("{what} is not UTF-8")))
    }
}

/// Loads a checkpoint, instantiating the named architecture and verifying
/// every tensor's name and shape against it.
pub fn load_checkpoint<F: Scalar>(
    path: &Path,
) -> Result<(Network<F>, CheckpointMeta), PersistError> {
    let mut r = Reader::open(path)?;
    if r.bytes(4, "magic")? != MAGIC {
        return Err(format_err(path, "bad magic; not a checkpoint file"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(format_err(
            path,
            format!("unsupported version {version}, expected {VERSION}"),
        ));
    }
    let arch_name = r.string("architecture name")?;
    let arch = ArchName::from_cli_name(&arch_name)?;
    let epoch = r.u64("epoch")?;
    let seed = r.u64("seed")?;
    let config_digest = r.string("config digest")?;
    let genre_count = r.u16("genre count")? as usize;
    let mut genres = Vec::with_capacity(genre_count);
    for _ in 0..genre_count {
        genres.push(r.string("genre name")?);
    }

    // Weights are overwritten below; the init seed is irrelevant.
    let mut net = Network::<F>::build(arch, 0)?;
    let count = r.u32("tensor count")? as usize;
    if count != net.params().len() {
        return Err(format_err(
            path,
            format!(
                "{count} tensors for {arch_name}, which has {}",
                net.params().len()
            ),
        ));
    }
    for _ in 0..count {
        let name = r.string("tensor name")?;
        let rank = r.bytes(1, "tensor rank")?[0] as usize;
        if !(1..=3).contains(&rank) {
            return Err(format_err(path, format!("tensor {name} has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64("tensor dims")? as usize);
        }
        let len: usize = shape.iter().product();
        let raw = r.bytes(len * 4, &format!("payload of {name}"))?;
        let data: Vec<F> = raw
            .chunks_exact(4)
            .map(|c| F::from_config(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        let tensor = crate::tensor::Tensor::new(shape, data)
            .map_err(|e| format_err(path, format!("tensor {name}: {e}")))?;
        net.set_param(&name, tensor)?;
    }
    let mut trailing = [0u8; 1];
    if r.file.read(&mut trailing).unwrap_or(0) != 0 {
        return Err(format_err(path, "trailing bytes after the tensor table"));
    }
    Ok((
        net,
        CheckpointMeta {
            epoch,
            seed,
            config_digest,
            genres,
        },
    ))
}
