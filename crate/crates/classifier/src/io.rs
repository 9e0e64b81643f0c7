//! Model file layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "TLQCLSTM"
//! version    u32
//! hyper      5 × u32  embed_dim, hidden_dim, head_dim, num_layers, max_seq_len
//! vocab      u32 count, then per token: u32 byte length + UTF-8 bytes
//! tensors    per tensor (fixed order): u64 value count + f64 values
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::model::{ClassifierModel, Hyper, Parameters};
use crate::tokenize::Vocabulary;
use crate::{ClassifierError, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"TLQCLSTM";
pub const MODEL_VERSION: u32 = 1;

pub fn write_model<W: Write>(mut w: W, model: &ClassifierModel) -> Result<()> {
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    let h = &model.hyper;
    for v in [
        h.embed_dim,
        h.hidden_dim,
        h.head_dim,
        h.num_layers,
        h.max_seq_len,
    ] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    let tokens = model.vocab.tokens();
    w.write_all(&(tokens.len() as u32).to_le_bytes())?;
    for token in tokens {
        w.write_all(&(token.len() as u32).to_le_bytes())?;
        w.write_all(token.as_bytes())?;
    }
    for tensor in model.params.tensors() {
        w.write_all(&(tensor.len() as u64).to_le_bytes())?;
        for v in tensor {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_model(model: &ClassifierModel, path: impl AsRef<Path>) -> Result<()> {
    write_model(BufWriter::new(File::create(path)?), model)
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn invalid(msg: impl Into<String>) -> ClassifierError {
    io::Error::new(io::ErrorKind::InvalidData, msg.into()).into()
}

pub fn read_model<R: Read>(mut r: R) -> Result<ClassifierModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(ClassifierError::VersionMismatch("bad magic header".into()));
    }
    let version = read_u32(&mut r)?;
    if version != MODEL_VERSION {
        return Err(ClassifierError::VersionMismatch(format!(
            "unsupported version {version}, expected {MODEL_VERSION}"
        )));
    }
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = read_u32(&mut r)? as usize;
    }
    let [embed_dim, hidden_dim, head_dim, num_layers, max_seq_len] = dims;
    let hyper = Hyper {
        embed_dim,
        hidden_dim,
        head_dim,
        num_layers,
        max_seq_len,
    };
    if dims.contains(&0) || dims.iter().any(|&d| d > 1 << 16) {
        return Err(invalid(format!("implausible hyperparameters {hyper:?}")));
    }

    let count = read_u32(&mut r)? as usize;
    let mut tokens = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        if len > 1 << 16 {
            return Err(invalid("token too long"));
        }
        let mut bytes = vec![0u8; len];
        r.read_exact(&mut bytes)?;
        tokens.push(String::from_utf8(bytes).map_err(|e| invalid(e.to_string()))?);
    }
    if tokens.len() < 2 || tokens[0] != "<pad>" || tokens[1] != "<unk>" {
        return Err(invalid("vocabulary is missing reserved tokens"));
    }
    let vocab = Vocabulary::from_tokens(tokens.into_iter().skip(2));
    if vocab.len() != count {
        return Err(invalid("vocabulary contains duplicate tokens"));
    }

    let mut params = Parameters::zeros(vocab.len(), &hyper);
    for tensor in params.tensors_mut() {
        let len = read_u64(&mut r)? as usize;
        if len != tensor.len() {
            return Err(invalid(format!(
                "tensor has {len} values, expected {}",
                tensor.len()
            )));
        }
        let mut buf = [0u8; 8];
        for v in tensor.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
    }
    Ok(ClassifierModel {
        vocab,
        hyper,
        params,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ClassifierModel> {
    read_model(BufReader::new(File::open(path)?))
}
