use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{KpError, Result};
use crate::model::{ModelDims, ModelParams, TensorMut};
use crate::train::adam::AdamState;
use crate::train::config::TrainConfig;

const MAGIC: &[u8; 4] = b"KPG1";
const VERSION: u16 = 1;

/// Everything needed to resume or serve a model. Tensor values are quantized
/// to f32 on construction so that a save/load round trip reproduces forward
/// outputs bitwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub adam: AdamState,
    pub config: TrainConfig,
    pub vocab: Vocabulary,
    pub epoch: u64,
    /// Validation F1@O per epoch, in epoch order.
    pub val_history: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Trailer {
    config: TrainConfig,
    vocab: Vocabulary,
    epoch: u64,
    adam_step: u64,
    val_history: Vec<f64>,
}

fn quantize(params: &mut ModelParams) {
    for (_, mut t) in params.tensors_mut() {
        for v in t.as_slice_mut() {
            *v = *v as f32 as f64;
        }
    }
}

impl Checkpoint {
    pub fn snapshot(
        params: &ModelParams,
        adam: &AdamState,
        config: &TrainConfig,
        vocab: &Vocabulary,
        epoch: u64,
        val_history: Vec<f64>,
    ) -> Self {
        let mut params = params.clone();
        let mut adam = adam.clone();
        quantize(&mut params);
        quantize(&mut adam.m);
        quantize(&mut adam.v);
        Checkpoint {
            params,
            adam,
            config: config.clone(),
            vocab: vocab.clone(),
            epoch,
            val_history,
        }
    }

    pub fn dims(&self) -> ModelDims {
        self.params.dims
    }
}

fn push_tensors(out: &mut Vec<(String, Vec<usize>, Vec<f32>)>, prefix: &str, p: &ModelParams) {
    for (name, t) in p.tensors() {
        out.push((
            format!("{prefix}{name}"),
            t.shape(),
            t.as_slice().iter().map(|&v| v as f32).collect(),
        ));
    }
}

/// Write the checkpoint: magic, version, tensor table, JSON trailer, and the
/// trailing offset of the trailer.
pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let mut entries: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
    push_tensors(&mut entries, "", &ckpt.params);
    push_tensors(&mut entries, "adam.m.", &ckpt.adam.m);
    push_tensors(&mut entries, "adam.v.", &ckpt.adam.v);

    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, shape, data) in &entries {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(shape.len() as u8);
        for &d in shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let trailer_offset = buf.len() as u64;
    let trailer = Trailer {
        config: ckpt.config.clone(),
        vocab: ckpt.vocab.clone(),
        epoch: ckpt.epoch,
        adam_step: ckpt.adam.step,
        val_history: ckpt.val_history.clone(),
    };
    let json = serde_json::to_vec(&trailer).expect("serializable trailer");
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&trailer_offset.to_le_bytes());

    let tmp = path.with_extension("tmp");
    let mut file = std::fs::File::create(&tmp).map_err(|e| KpError::io(&tmp, e))?;
    file.write_all(&buf).map_err(|e| KpError::io(&tmp, e))?;
    file.sync_all().map_err(|e| KpError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| KpError::io(path, e))?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(KpError::Checkpoint("file truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| KpError::io(path, e))?;
    if bytes.len() < MAGIC.len() + 2 + 4 + 8 {
        return Err(KpError::Checkpoint("file too short".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(KpError::Checkpoint("bad magic bytes".into()));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(KpError::Checkpoint(format!(
            "unsupported format version {version}, expected {VERSION}"
        )));
    }
    let trailer_offset =
        u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap()) as usize;
    if trailer_offset >= bytes.len() - 8 || trailer_offset < 10 {
        return Err(KpError::Checkpoint("trailer offset out of bounds".into()));
    }
    let trailer: Trailer = serde_json::from_slice(&bytes[trailer_offset..bytes.len() - 8])
        .map_err(|e| KpError::Checkpoint(format!("bad JSON trailer: {e}")))?;
    trailer.config.validate()?;

    let mut cur = Cursor { buf: &bytes[..trailer_offset], pos: 6 };
    let count = cur.u32()? as usize;
    let mut table: std::collections::HashMap<String, (Vec<usize>, Vec<f64>)> =
        std::collections::HashMap::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| KpError::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = cur.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u64()? as usize);
        }
        let len: usize = shape.iter().product();
        let raw = cur.take(len * 4)?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if table.insert(name.clone(), (shape, data)).is_some() {
            return Err(KpError::Checkpoint(format!("duplicate tensor `{name}`")));
        }
    }

    let dims = ModelDims {
        vocab: trailer.vocab.len(),
        embed: trailer.config.embedding_dim,
        hidden: trailer.config.hidden,
        tenc_hidden: trailer.config.target_encoder_hidden,
    };
    let embedding_rows = table
        .get("embedding")
        .ok_or_else(|| KpError::Checkpoint("missing tensor `embedding`".into()))?
        .0[0];
    if embedding_rows != trailer.vocab.len() {
        return Err(KpError::VocabMismatch(format!(
            "embedding has {embedding_rows} rows but the stored vocabulary has {} tokens",
            trailer.vocab.len()
        )));
    }

    let fill = |prefix: &str, target: &mut ModelParams| -> Result<()> {
        for (name, mut t) in target.tensors_mut() {
            let key = format!("{prefix}{name}");
            let (shape, data) = table
                .get(&key)
                .ok_or_else(|| KpError::Checkpoint(format!("missing tensor `{key}`")))?;
            let expect: Vec<usize> = match &t {
                TensorMut::V(a) => a.shape().to_vec(),
                TensorMut::M(a) => a.shape().to_vec(),
            };
            if *shape != expect {
                return Err(KpError::Checkpoint(format!(
                    "tensor `{key}` has shape {shape:?}, expected {expect:?}"
                )));
            }
            t.as_slice_mut().copy_from_slice(data);
        }
        Ok(())
    };
    let mut params = ModelParams::zeros(dims);
    let mut adam = AdamState::new(dims);
    fill("", &mut params)?;
    fill("adam.m.", &mut adam.m)?;
    fill("adam.v.", &mut adam.v)?;
    adam.step = trailer.adam_step;

    Ok(Checkpoint {
        params,
        adam,
        config: trailer.config,
        vocab: trailer.vocab,
        epoch: trailer.epoch,
        val_history: trailer.val_history,
    })
}
