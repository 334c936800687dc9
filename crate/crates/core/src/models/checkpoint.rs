//! Model checkpoint container.
//!
//! Layout (little-endian):
//!
//! ```text
//! "SLAB" | u32 version | u8 kind (1 = autoencoder, 2 = classifier)
//! autoencoder: u64 m | u64 d | u8 activation (0 identity, 1 rectifier) | W (m·d f64) | b (d f64)
//! classifier:  u64 tokens | u64 embed | u64 layers | u64 width × layers | u64 classes
//!              | E | (W, b) per hidden layer | (W, b) output
//! u32 config length | config echo (UTF-8) | u64 seed
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{ReadBytesExt, WriteBytesExt, LE};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

use super::ae::{Activation, TiedAutoencoder};
use super::mlp::{Dense, MlpClassifier, MlpShape};

const MAGIC: &[u8; 4] = b"SLAB";
const VERSION: u32 = 1;
const KIND_AE: u8 = 1;
const KIND_MLP: u8 = 2;
/// Refuse absurd dimensions from corrupt headers before allocating.
const MAX_PARAMS: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Autoencoder(TiedAutoencoder),
    Classifier(MlpClassifier),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    /// The producing run's configuration, as written by the caller.
    pub config: String,
    pub seed: u64,
}

fn write_block<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for &v in values {
        w.write_f64::<LE>(v)?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let mut buf = vec![0.0; rows * cols];
    r.read_f64_into::<LE>(&mut buf)?;
    Ok(Array2::from_shape_vec((rows, cols), buf).expect("sized"))
}

fn read_vector<R: Read>(r: &mut R, n: usize) -> Result<Array1<f64>> {
    let mut buf = vec![0.0; n];
    r.read_f64_into::<LE>(&mut buf)?;
    Ok(Array1::from(buf))
}

fn read_dim<R: Read>(r: &mut R) -> Result<usize> {
    let v = r.read_u64::<LE>()?;
    if v > MAX_PARAMS {
        return Err(Error::Format(format!("dimension {v} is implausibly large")));
    }
    Ok(v as usize)
}

fn write_dense<W: Write>(w: &mut W, layer: &Dense) -> Result<()> {
    write_block(w, layer.w.as_slice().expect("standard layout"))?;
    write_block(w, layer.b.as_slice().expect("standard layout"))
}

pub fn write<W: Write>(w: &mut W, ckpt: &Checkpoint) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    match &ckpt.model {
        Model::Autoencoder(ae) => {
            w.write_u8(KIND_AE)?;
            w.write_u64::<LE>(ae.latent_dim() as u64)?;
            w.write_u64::<LE>(ae.input_dim() as u64)?;
            w.write_u8(match ae.activation {
                Activation::Identity => 0,
                Activation::Rectifier => 1,
            })?;
            write_block(w, ae.w.as_standard_layout().as_slice().expect("standard layout"))?;
            write_block(w, ae.b.as_slice().expect("standard layout"))?;
        }
        Model::Classifier(mlp) => {
            let shape = mlp.shape();
            w.write_u8(KIND_MLP)?;
            w.write_u64::<LE>(shape.num_tokens as u64)?;
            w.write_u64::<LE>(shape.embed_dim as u64)?;
            w.write_u64::<LE>(shape.hidden.len() as u64)?;
            for &h in &shape.hidden {
                w.write_u64::<LE>(h as u64)?;
            }
            w.write_u64::<LE>(shape.num_classes as u64)?;
            write_block(w, mlp.embedding.as_slice().expect("standard layout"))?;
            for layer in &mlp.hidden {
                write_dense(w, layer)?;
            }
            write_dense(w, &mlp.output)?;
        }
    }
    w.write_u32::<LE>(ckpt.config.len() as u32)?;
    w.write_all(ckpt.config.as_bytes())?;
    w.write_u64::<LE>(ckpt.seed)?;
    Ok(())
}

pub fn read<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a model checkpoint (bad magic)".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let model = match r.read_u8()? {
        KIND_AE => {
            let m = read_dim(r)?;
            let d = read_dim(r)?;
            let activation = match r.read_u8()? {
                0 => Activation::Identity,
                1 => Activation::Rectifier,
                t => return Err(Error::Format(format!("unknown activation tag {t}"))),
            };
            let w = read_matrix(r, m, d)?;
            let b = read_vector(r, d)?;
            Model::Autoencoder(TiedAutoencoder { w, b, activation })
        }
        KIND_MLP => {
            let num_tokens = read_dim(r)?;
            let embed_dim = read_dim(r)?;
            let layers = read_dim(r)?;
            let hidden = (0..layers).map(|_| read_dim(r)).collect::<Result<Vec<_>>>()?;
            let num_classes = read_dim(r)?;
            let shape = MlpShape { num_tokens, embed_dim, hidden, num_classes };
            let mut mlp = MlpClassifier::zeros(&shape);
            mlp.embedding = read_matrix(r, num_tokens, embed_dim)?;
            for layer in mlp.hidden.iter_mut().chain(std::iter::once(&mut mlp.output)) {
                let (i, o) = layer.w.dim();
                layer.w = read_matrix(r, i, o)?;
                layer.b = read_vector(r, o)?;
            }
            Model::Classifier(mlp)
        }
        t => return Err(Error::Format(format!("unknown model kind {t}"))),
    };
    let len = r.read_u32::<LE>()? as usize;
    let mut text = vec![0u8; len];
    r.read_exact(&mut text)?;
    let config = String::from_utf8(text).map_err(|e| Error::Format(format!("config echo is not UTF-8: {e}")))?;
    let seed = r.read_u64::<LE>()?;
    Ok(Checkpoint { model, config, seed })
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write(&mut w, ckpt)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    read(&mut BufReader::new(File::open(path)?))
}

pub fn load_autoencoder(path: &Path) -> Result<TiedAutoencoder> {
    match load(path)?.model {
        Model::Autoencoder(ae) => Ok(ae),
        Model::Classifier(_) => Err(Error::Format(format!("{} holds a classifier, not an autoencoder", path.display()))),
    }
}

pub fn load_classifier(path: &Path) -> Result<MlpClassifier> {
    match load(path)?.model {
        Model::Classifier(m) => Ok(m),
        Model::Autoencoder(_) => Err(Error::Format(format!("{} holds an autoencoder, not a classifier", path.display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(ckpt: &Checkpoint) -> Checkpoint {
        let mut buf = Vec::new();
        write(&mut buf, ckpt).unwrap();
        read(&mut buf.as_slice()).unwrap()
    }

    #[test]
    fn autoencoder_round_trip() {
        let ae = TiedAutoencoder::init(3, 7, Activation::Rectifier, 5).unwrap();
        let ckpt = Checkpoint { model: Model::Autoencoder(ae), config: "m=3\nlr=0.001\n".into(), seed: 5 };
        assert_eq!(round_trip(&ckpt), ckpt);
    }

    #[test]
    fn classifier_round_trip() {
        let shape = MlpShape { num_tokens: 6, embed_dim: 4, hidden: vec![5, 3], num_classes: 6 };
        let ckpt = Checkpoint { model: Model::Classifier(MlpClassifier::init(&shape, 2).unwrap()), config: String::new(), seed: 2 };
        assert_eq!(round_trip(&ckpt), ckpt);
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(matches!(read(&mut &b"BOWS\x01\0\0\0"[..]), Err(Error::Format(_))));
        let ae = TiedAutoencoder::zeros(2, 2, Activation::Identity);
        let mut buf = Vec::new();
        write(&mut buf, &Checkpoint { model: Model::Autoencoder(ae), config: String::new(), seed: 0 }).unwrap();
        buf.truncate(buf.len() - 9);
        assert!(read(&mut buf.as_slice()).is_err());
    }
}
