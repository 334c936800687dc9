//! Built-in English exclusion list.
//!
//! Function words plus common prepositions. The modal `may` is not listed, so
//! the month name survives.

use std::collections::HashSet;
use std::path::Path;

use crate::error::Result;

/// Identifier recorded alongside every vocabulary built with [`english`].
pub const BUILTIN_ID: &str = "en-basic-v1";

const ENGLISH: &[&str] = &[
    "a", "about", "above", "across", "after", "again", "against", "ain", "all", "along", "also",
    "am", "among", "amongst", "an", "and", "any", "are", "aren", "around", "as", "at", "be",
    "because", "been", "before", "behind", "being", "below", "beneath", "beside", "besides",
    "between", "beyond", "both", "but", "by", "can", "couldn", "d", "did", "didn", "do", "does",
    "doesn", "doing", "don", "down", "during", "each", "except", "few", "for", "from", "further",
    "had", "hadn", "has", "hasn", "have", "haven", "having", "he", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "i", "if", "in", "inside", "into", "is", "isn",
    "it", "its", "itself", "just", "ll", "m", "ma", "me", "mightn", "more", "most", "mustn", "my",
    "myself", "near", "needn", "no", "nor", "not", "now", "o", "of", "off", "on", "once", "only",
    "onto", "or", "other", "our", "ours", "ourselves", "out", "outside", "over", "own", "past",
    "per", "re", "s", "same", "shan", "she", "should", "shouldn", "since", "so", "some", "such",
    "t", "than", "that", "the", "their", "theirs", "them", "themselves", "then", "there", "these",
    "they", "this", "those", "through", "throughout", "till", "to", "too", "toward", "towards",
    "under", "underneath", "until", "up", "upon", "ve", "very", "via", "was", "wasn", "we",
    "were", "weren", "what", "when", "where", "which", "while", "who", "whom", "why", "will",
    "with", "within", "without", "won", "would", "wouldn", "y", "you", "your", "yours",
    "yourself", "yourselves",
];

/// A named set of excluded words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    pub id: String,
    pub words: HashSet<String>,
}

impl StopwordList {
    pub fn english() -> Self {
        StopwordList { id: BUILTIN_ID.to_string(), words: ENGLISH.iter().map(|w| w.to_string()).collect() }
    }

    pub fn none() -> Self {
        StopwordList { id: "none".to_string(), words: HashSet::new() }
    }

    pub fn from_words<I, S>(id: &str, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        StopwordList { id: id.to_string(), words: words.into_iter().map(Into::into).collect() }
    }

    /// Reads one word per line; blank lines and `#` comments are skipped.
    /// The list id is `file:<file name>`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase);
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(StopwordList::from_words(&format!("file:{name}"), words))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn months_survive_the_builtin_list() {
        let list = StopwordList::english();
        for m in ["january", "march", "may", "june", "august"] {
            assert!(!list.contains(m), "{m}");
        }
        assert!(list.contains("the"));
        assert!(list.contains("between"));
    }

    #[test]
    fn builtin_list_is_sorted_and_unique() {
        assert!(ENGLISH.windows(2).all(|w| w[0] < w[1]));
    }
}
