//! Binary dataset container.
//!
//! All integers are little-endian.
//!
//! ```text
//! "BOWS"                      magic
//! u32                         format version (1)
//! u64 V, u64 N, u64 c, u64 s  vocabulary size, rows, context size, stride
//! u8                          split tag (0 train, 1 validation)
//! V × { u32 len, len bytes UTF-8 word, u64 frequency }
//! (N + 1) × u64               CSR row pointers
//! nnz × u32                   CSR column indices (nnz = last row pointer)
//! u8                          extension tag (0 none, 1 pair task)
//!   pair task: u32 num_tokens, u32 num_classes, u64 P,
//!              P × { u32 a, u32 b, u32 label }, P × u8 split tag
//! u32 len, len bytes          metadata, UTF-8 `key=value` lines
//! ```
//!
//! For pair tasks the vocabulary block holds the token names and the sample
//! matrix is empty.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::corpus::{BowsDataset, Vocab};
use crate::error::{Error, Result};
use crate::sparse::SparseBinary;
use crate::tasks::PairDataset;

pub const MAGIC: &[u8; 4] = b"BOWS";
pub const VERSION: u32 = 1;

const EXT_NONE: u8 = 0;
const EXT_PAIRS: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    fn tag(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Validation => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Split::Train),
            1 => Ok(Split::Validation),
            t => Err(Error::Format(format!("unknown split tag {t}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

/// Either kind of persisted dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetFile {
    Bows(BowsDataset),
    Pairs(PairDataset),
}

struct Header {
    vocab: Vocab,
    samples: SparseBinary,
    context: u64,
    stride: u64,
    split: Split,
}

fn write_header<W: Write>(
    w: &mut W,
    vocab: &Vocab,
    samples: &SparseBinary,
    context: u64,
    stride: u64,
    split: Split,
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u64::<LE>(vocab.len() as u64)?;
    w.write_u64::<LE>(samples.rows() as u64)?;
    w.write_u64::<LE>(context)?;
    w.write_u64::<LE>(stride)?;
    w.write_u8(split.tag())?;
    for (word, &freq) in vocab.words.iter().zip(&vocab.frequencies) {
        let bytes = word.as_bytes();
        w.write_u32::<LE>(bytes.len() as u32)?;
        w.write_all(bytes)?;
        w.write_u64::<LE>(freq)?;
    }
    for &p in samples.row_ptr() {
        w.write_u64::<LE>(p)?;
    }
    for &c in samples.col_idx() {
        w.write_u32::<LE>(c)?;
    }
    Ok(())
}

fn read_len<R: Read>(r: &mut R, what: &str) -> Result<usize> {
    let n = r.read_u64::<LE>()?;
    usize::try_from(n).map_err(|_| Error::Format(format!("{what} {n} does not fit in memory")))
}

fn read_header<R: Read>(r: &mut R) -> Result<Header> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("missing BOWS magic".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let v = read_len(r, "vocabulary size")?;
    let n = read_len(r, "row count")?;
    let context = r.read_u64::<LE>()?;
    let stride = r.read_u64::<LE>()?;
    let split = Split::from_tag(r.read_u8()?)?;
    let mut words = Vec::with_capacity(v);
    let mut frequencies = Vec::with_capacity(v);
    for _ in 0..v {
        let len = r.read_u32::<LE>()? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        words.push(String::from_utf8(buf).map_err(|_| Error::Format("vocabulary word is not UTF-8".into()))?);
        frequencies.push(r.read_u64::<LE>()?);
    }
    let mut row_ptr = vec![0u64; n + 1];
    r.read_u64_into::<LE>(&mut row_ptr)?;
    let nnz = usize::try_from(row_ptr[n]).map_err(|_| Error::Format("nnz overflow".into()))?;
    let mut col_idx = vec![0u32; nnz];
    r.read_u32_into::<LE>(&mut col_idx)?;
    let samples = SparseBinary::from_csr(v, row_ptr, col_idx)?;
    let vocab = Vocab { words, frequencies, stopword_list_id: String::new() };
    Ok(Header { vocab, samples, context, stride, split })
}

fn write_meta<W: Write>(w: &mut W, meta: &BTreeMap<String, String>) -> Result<()> {
    let text: String = meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    w.write_u32::<LE>(text.len() as u32)?;
    w.write_all(text.as_bytes())?;
    Ok(())
}

fn read_meta<R: Read>(r: &mut R) -> Result<BTreeMap<String, String>> {
    let len = r.read_u32::<LE>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    let text = String::from_utf8(buf).map_err(|_| Error::Format("metadata is not UTF-8".into()))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect())
}

pub fn write_bows<W: Write>(w: &mut W, d: &BowsDataset) -> Result<()> {
    write_header(w, &d.vocab, &d.samples, d.context_size as u64, d.stride as u64, d.split)?;
    w.write_u8(EXT_NONE)?;
    let mut meta = BTreeMap::new();
    meta.insert("dropped_windows".to_string(), d.dropped_windows.to_string());
    meta.insert("stopword_list_id".to_string(), d.vocab.stopword_list_id.clone());
    write_meta(w, &meta)
}

pub fn write_pairs<W: Write>(w: &mut W, d: &PairDataset) -> Result<()> {
    let vocab = Vocab::synthetic(d.token_names.clone());
    write_header(w, &vocab, &SparseBinary::empty(vocab.len()), 1, 1, Split::Train)?;
    w.write_u8(EXT_PAIRS)?;
    w.write_u32::<LE>(d.num_tokens as u32)?;
    w.write_u32::<LE>(d.num_classes as u32)?;
    w.write_u64::<LE>(d.pairs.len() as u64)?;
    for (&(a, b), &label) in d.pairs.iter().zip(&d.labels) {
        w.write_u32::<LE>(a)?;
        w.write_u32::<LE>(b)?;
        w.write_u32::<LE>(label)?;
    }
    for s in &d.split {
        w.write_u8(s.tag())?;
    }
    let mut meta = BTreeMap::new();
    meta.insert("task".to_string(), d.task.clone());
    write_meta(w, &meta)
}

pub fn read<R: Read>(r: &mut R) -> Result<DatasetFile> {
    let header = read_header(r)?;
    match r.read_u8()? {
        EXT_NONE => {
            let meta = read_meta(r)?;
            let mut vocab = header.vocab;
            vocab.stopword_list_id = meta.get("stopword_list_id").cloned().unwrap_or_default();
            let dropped_windows = match meta.get("dropped_windows") {
                Some(v) => v.parse().map_err(|_| Error::Format("bad dropped_windows".into()))?,
                None => 0,
            };
            Ok(DatasetFile::Bows(BowsDataset {
                samples: header.samples,
                vocab,
                context_size: header.context as usize,
                stride: header.stride as usize,
                split: header.split,
                dropped_windows,
            }))
        }
        EXT_PAIRS => {
            let num_tokens = r.read_u32::<LE>()? as usize;
            let num_classes = r.read_u32::<LE>()? as usize;
            let count = read_len(r, "pair count")?;
            let mut triples = vec![0u32; 3 * count];
            r.read_u32_into::<LE>(&mut triples)?;
            let mut tags = vec![0u8; count];
            r.read_exact(&mut tags)?;
            let meta = read_meta(r)?;
            let pairs = triples.chunks_exact(3).map(|t| (t[0], t[1])).collect();
            let labels = triples.chunks_exact(3).map(|t| t[2]).collect();
            let split = tags.into_iter().map(Split::from_tag).collect::<Result<_>>()?;
            let d = PairDataset {
                pairs,
                labels,
                split,
                num_tokens,
                num_classes,
                token_names: header.vocab.words,
                task: meta.get("task").cloned().unwrap_or_default(),
            };
            d.validate()?;
            Ok(DatasetFile::Pairs(d))
        }
        t => Err(Error::Format(format!("unknown extension tag {t}"))),
    }
}

pub fn save_bows(path: &Path, d: &BowsDataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_bows(&mut w, d)?;
    w.flush()?;
    Ok(())
}

pub fn save_pairs(path: &Path, d: &PairDataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_pairs(&mut w, d)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<DatasetFile> {
    read(&mut BufReader::new(File::open(path)?))
}

pub fn load_bows(path: &Path) -> Result<BowsDataset> {
    match load(path)? {
        DatasetFile::Bows(d) => Ok(d),
        DatasetFile::Pairs(_) => Err(Error::Format(format!("{} holds a pair task, not a BOWS dataset", path.display()))),
    }
}

pub fn load_pairs(path: &Path) -> Result<PairDataset> {
    match load(path)? {
        DatasetFile::Pairs(d) => Ok(d),
        DatasetFile::Bows(_) => Err(Error::Format(format!("{} holds a BOWS dataset, not a pair task", path.display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocab;

    fn sample() -> BowsDataset {
        BowsDataset {
            samples: SparseBinary::from_rows(3, vec![vec![0, 2], vec![1]]).unwrap(),
            vocab: Vocab {
                words: vec!["août".into(), "b".into(), "c".into()],
                frequencies: vec![5, 3, 3],
                stopword_list_id: "en-basic-v1".into(),
            },
            context_size: 20,
            stride: 1,
            split: Split::Validation,
            dropped_windows: 4,
        }
    }

    #[test]
    fn bows_round_trip_is_exact() {
        let d = sample();
        let mut buf = Vec::new();
        write_bows(&mut buf, &d).unwrap();
        assert_eq!(&buf[..4], b"BOWS");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 3);
        match read(&mut buf.as_slice()).unwrap() {
            DatasetFile::Bows(back) => assert_eq!(back, d),
            other => panic!("{other:?}"),
        }
        let mut again = Vec::new();
        write_bows(&mut again, &d).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn pairs_round_trip_is_exact() {
        let d = crate::tasks::gen_modadd(5, 0.6, 1).unwrap();
        let mut buf = Vec::new();
        write_pairs(&mut buf, &d).unwrap();
        match read(&mut buf.as_slice()).unwrap() {
            DatasetFile::Pairs(back) => assert_eq!(back, d),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut buf = Vec::new();
        write_bows(&mut buf, &sample()).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read(&mut bad.as_slice()), Err(Error::Format(_))));
        let short = &buf[..buf.len() - 10];
        assert!(read(&mut &short[..]).is_err());
    }
}
