//! Raw text to binary bag-of-words datasets.
//!
//! Text is segmented into records (lines or paragraphs), each record is
//! tokenized into lowercase alphabetic words, and a vocabulary of the most
//! frequent non-stopwords is chosen by record-level presence counts. A dataset
//! sample is the element-wise OR of the presence vectors of `c` consecutive
//! records; windows start every `s` records.

mod stopwords;

use std::collections::HashMap;

use rayon::prelude::*;

use crate::container::Split;
use crate::error::{Error, Result};
use crate::sparse::SparseBinary;

pub use stopwords::{StopwordList, BUILTIN_ID as BUILTIN_STOPWORDS_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentMode {
    /// One record per non-blank line.
    Line,
    /// Records are separated by runs of blank lines.
    Paragraph,
}

/// Splits raw bytes into records, dropping empty and whitespace-only ones.
pub fn segment_records(raw: &[u8], mode: SegmentMode) -> Result<Vec<String>> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::Decode { offset: e.valid_up_to() })?;
    let lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    let records = match mode {
        SegmentMode::Line => lines.filter(|l| !l.trim().is_empty()).map(str::to_string).collect(),
        SegmentMode::Paragraph => {
            let mut out = Vec::new();
            let mut current: Vec<&str> = Vec::new();
            for line in lines {
                if line.trim().is_empty() {
                    if !current.is_empty() {
                        out.push(current.join("\n"));
                        current.clear();
                    }
                } else {
                    current.push(line);
                }
            }
            if !current.is_empty() {
                out.push(current.join("\n"));
            }
            out
        }
    };
    Ok(records)
}

/// Lowercased alphabetic runs; every other character separates tokens.
pub fn tokenize(record: &str) -> Vec<String> {
    record
        .split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Ordered vocabulary; index is the feature id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    pub words: Vec<String>,
    /// Number of records containing each word.
    pub frequencies: Vec<u64>,
    pub stopword_list_id: String,
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.words.iter().position(|w| w == word)
    }

    pub fn lookup(&self) -> HashMap<&str, u32> {
        self.words.iter().enumerate().map(|(i, w)| (w.as_str(), i as u32)).collect()
    }

    /// Vocabulary of generated feature names with zero frequencies.
    pub fn synthetic(names: Vec<String>) -> Self {
        let n = names.len();
        Vocab { words: names, frequencies: vec![0; n], stopword_list_id: "none".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabBuild {
    pub vocab: Vocab,
    /// Set when fewer than the requested number of distinct words exist.
    pub short: bool,
}

/// Top-`size` words by record-level presence count, stopwords excluded.
///
/// Ties are broken lexicographically so the result does not depend on input
/// order or thread count.
pub fn build_vocab(records: &[String], size: usize, stopwords: &StopwordList) -> Result<VocabBuild> {
    if size == 0 {
        return Err(Error::InvalidParameter("vocabulary size must be at least 1".into()));
    }
    let counts = records
        .par_chunks(1024)
        .map(|chunk| {
            let mut counts: HashMap<String, u64> = HashMap::new();
            for record in chunk {
                let mut tokens = tokenize(record);
                tokens.sort_unstable();
                tokens.dedup();
                for t in tokens {
                    if !stopwords.contains(&t) {
                        *counts.entry(t).or_insert(0) += 1;
                    }
                }
            }
            counts
        })
        .reduce(HashMap::new, |mut a, b| {
            for (w, c) in b {
                *a.entry(w).or_insert(0) += c;
            }
            a
        });
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let short = ranked.len() < size;
    ranked.truncate(size);
    let (words, frequencies) = ranked.into_iter().unzip();
    Ok(VocabBuild { vocab: Vocab { words, frequencies, stopword_list_id: stopwords.id.clone() }, short })
}

/// Binary bag-of-words samples over a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct BowsDataset {
    pub samples: SparseBinary,
    pub vocab: Vocab,
    pub context_size: usize,
    pub stride: usize,
    pub split: Split,
    /// Windows whose OR was all-zero and were therefore not stored.
    pub dropped_windows: usize,
}

impl BowsDataset {
    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.rows() == 0
    }
}

/// Number of windows of `context` records with the given stride.
pub fn window_count(records: usize, context: usize, stride: usize) -> usize {
    if context == 0 || stride == 0 || context > records {
        0
    } else {
        (records - context) / stride + 1
    }
}

/// Encodes records into OR-combined windows over `vocab`.
pub fn encode_bows(
    records: &[String],
    vocab: &Vocab,
    context: usize,
    stride: usize,
    split: Split,
) -> Result<BowsDataset> {
    if context == 0 || stride == 0 {
        return Err(Error::InvalidParameter("context size and stride must be positive".into()));
    }
    if context > records.len() {
        return Err(Error::EmptyDataset(format!(
            "context size {context} exceeds record count {}",
            records.len()
        )));
    }
    let lookup = vocab.lookup();
    let per_record: Vec<Vec<u32>> = records
        .par_iter()
        .map(|r| {
            let mut ids: Vec<u32> = tokenize(r).iter().filter_map(|t| lookup.get(t.as_str()).copied()).collect();
            ids.sort_unstable();
            ids.dedup();
            ids
        })
        .collect();
    encode_windows(&per_record, vocab, context, stride, split)
}

/// Windowing over records already mapped to sorted vocabulary ids.
pub fn encode_windows(
    per_record: &[Vec<u32>],
    vocab: &Vocab,
    context: usize,
    stride: usize,
    split: Split,
) -> Result<BowsDataset> {
    let n_windows = window_count(per_record.len(), context, stride);
    if n_windows == 0 {
        return Err(Error::EmptyDataset(format!(
            "context size {context} exceeds record count {}",
            per_record.len()
        )));
    }
    let v = vocab.len();
    let windows: Vec<Vec<u32>> = (0..n_windows)
        .into_par_iter()
        .map_init(
            || vec![u32::MAX; v],
            |stamp, t| {
                let start = t * stride;
                let mut row = Vec::new();
                for ids in &per_record[start..start + context] {
                    for &id in ids {
                        let slot = &mut stamp[id as usize];
                        if *slot != t as u32 {
                            *slot = t as u32;
                            row.push(id);
                        }
                    }
                }
                row.sort_unstable();
                row
            },
        )
        .collect();
    let dropped = windows.iter().filter(|w| w.is_empty()).count();
    let mut samples = SparseBinary::empty(v);
    for w in windows.iter().filter(|w| !w.is_empty()) {
        samples.push_row(w)?;
    }
    Ok(BowsDataset {
        samples,
        vocab: vocab.clone(),
        context_size: context,
        stride,
        split,
        dropped_windows: dropped,
    })
}

/// `(word, active-sample count)` pairs in descending count order.
pub fn word_frequency_histogram(dataset: &BowsDataset) -> Result<Vec<(String, u64)>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("histogram of an empty dataset".into()));
    }
    let counts = dataset.samples.column_counts();
    let mut ranked: Vec<(String, u64)> =
        dataset.vocab.words.iter().cloned().zip(counts.iter().copied()).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    Ok(ranked)
}

/// Least-squares slope of log(count) against log(rank) over the first `top`
/// positive counts of a descending histogram.
pub fn rank_frequency_slope(counts: &[u64], top: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = counts
        .iter()
        .take(top)
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(r, &c)| (((r + 1) as f64).ln(), (c as f64).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn line_mode_drops_blank_lines() {
        assert_eq!(segment_records(b"a\n\nb\n", SegmentMode::Line).unwrap(), strings(&["a", "b"]));
        assert_eq!(segment_records(b"  \r\nx\r\n", SegmentMode::Line).unwrap(), strings(&["x"]));
    }

    #[test]
    fn paragraph_mode_splits_on_blank_runs() {
        assert_eq!(
            segment_records(b"a\nb\n\nc", SegmentMode::Paragraph).unwrap(),
            strings(&["a\nb", "c"])
        );
        assert_eq!(
            segment_records(b"\n\na\n \n\t\n\nb\n\n", SegmentMode::Paragraph).unwrap(),
            strings(&["a", "b"])
        );
    }

    #[test]
    fn invalid_utf8_reports_offset() {
        let err = segment_records(b"ok\n\xff", SegmentMode::Line).unwrap_err();
        assert!(matches!(err, Error::Decode { offset: 3 }), "{err:?}");
    }

    #[test]
    fn tokenizer_examples() {
        assert_eq!(tokenize("The cat, the CAT!"), strings(&["the", "cat", "the", "cat"]));
        assert_eq!(tokenize("2024 meeting"), strings(&["meeting"]));
        assert_eq!(tokenize("state-of-the-art"), strings(&["state", "of", "the", "art"]));
        assert!(tokenize("123 -- !!").is_empty());
    }

    #[test]
    fn vocab_examples() {
        let none = StopwordList::none();
        let b = build_vocab(&strings(&["cat dog", "cat"]), 1, &none).unwrap();
        assert_eq!(b.vocab.words, strings(&["cat"]));
        assert_eq!(b.vocab.frequencies, vec![2]);
        assert!(!b.short);

        let stop = StopwordList::from_words("t", ["a"]);
        let b = build_vocab(&strings(&["a b", "b a"]), 2, &stop).unwrap();
        assert_eq!(b.vocab.words, strings(&["b"]));
        assert!(b.short);
        assert_eq!(b.vocab.stopword_list_id, "t");

        let b = build_vocab(&strings(&["zebra", "apple"]), 1, &none).unwrap();
        assert_eq!(b.vocab.words, strings(&["apple"]));
    }

    #[test]
    fn vocab_counts_records_not_tokens() {
        let b = build_vocab(&strings(&["x x x x", "y", "y"]), 2, &StopwordList::none()).unwrap();
        assert_eq!(b.vocab.words, strings(&["y", "x"]));
        assert_eq!(b.vocab.frequencies, vec![2, 1]);
        assert!(build_vocab(&[], 0, &StopwordList::none()).is_err());
    }

    fn vocab_of(words: &[&str]) -> Vocab {
        Vocab::synthetic(strings(words))
    }

    #[test]
    fn window_or_combines_records() {
        let v = vocab_of(&["cat", "sat", "dog", "ran"]);
        let d = encode_bows(&strings(&["cat sat", "dog ran"]), &v, 2, 1, Split::Train).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.samples.row(0), &[0, 1, 2, 3]);

        let d = encode_bows(&strings(&["cat sat", "dog ran"]), &v, 1, 1, Split::Train).unwrap();
        assert_eq!(d.samples.row(0), &[0, 1]);
        assert_eq!(d.samples.row(1), &[2, 3]);
    }

    #[test]
    fn empty_windows_are_dropped_and_counted() {
        let v = vocab_of(&["cat"]);
        let d = encode_bows(&strings(&["cat", "zzz", "zzz", "cat"]), &v, 1, 1, Split::Train).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dropped_windows, 2);
        let err = encode_bows(&strings(&["cat"]), &v, 2, 1, Split::Train).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset(_)));
    }

    #[test]
    fn histogram_counts_columns() {
        let v = vocab_of(&["a", "b"]);
        let d = encode_bows(&strings(&["a b", "a b", "b a"]), &v, 1, 1, Split::Train).unwrap();
        assert_eq!(word_frequency_histogram(&d).unwrap(), vec![("a".into(), 3), ("b".into(), 3)]);
        let d = encode_bows(&strings(&["a", "b", "b"]), &v, 1, 1, Split::Train).unwrap();
        assert_eq!(word_frequency_histogram(&d).unwrap(), vec![("b".into(), 2), ("a".into(), 1)]);
    }

    #[test]
    fn slope_of_exact_power_law() {
        let counts: Vec<u64> = (1..=200).map(|r| (1e6 / r as f64).round() as u64).collect();
        let s = rank_frequency_slope(&counts, 200).unwrap();
        assert!((s + 1.0).abs() < 1e-3, "{s}");
    }
}
