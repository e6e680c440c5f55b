//! Word-level corpus preparation for next-word prediction.
//!
//! Cleaning runs in a fixed order: dashes become spaces, the text is split on
//! whitespace, ASCII punctuation is removed from each token, tokens that are
//! not purely alphabetic are dropped, and the rest are lowercased.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::n_hot_indices;
use crate::error::{Error, Result};
use crate::harness::data::Dataset;
use crate::mapping::LabelMapping;
use crate::matrix::Matrix;

/// Which hyphens count as word separators.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DashPolicy {
    /// Only the ASCII double hyphen `--` and Unicode dashes split words; a
    /// single hyphen is stripped as punctuation, so `well-known` becomes
    /// `wellknown`.
    #[default]
    DoubleHyphen,
    /// Every hyphen splits words.
    EveryHyphen,
}

const UNICODE_DASHES: &[char] = &[
    '\u{2010}', '\u{2011}', '\u{2012}', '\u{2013}', '\u{2014}', '\u{2015}', '\u{2212}',
];

pub fn tokenize(text: &str, policy: DashPolicy) -> Vec<String> {
    let spaced = match policy {
        DashPolicy::DoubleHyphen => text.replace("--", " "),
        DashPolicy::EveryHyphen => text.replace('-', " "),
    };
    let spaced = spaced.replace(UNICODE_DASHES, " ");
    spaced
        .split_whitespace()
        .map(|t| t.chars().filter(|c| !c.is_ascii_punctuation()).collect::<String>())
        .filter(|t| !t.is_empty() && t.chars().all(char::is_alphabetic))
        .map(|t| t.to_lowercase())
        .collect()
}

/// Keeps the text between Project Gutenberg's `*** START OF` and `*** END OF`
/// marker lines when both are present.
pub fn strip_gutenberg_boilerplate(text: &str) -> &str {
    let start = text.find("*** START OF").and_then(|i| text[i..].find('\n').map(|j| i + j + 1));
    let end = text.find("*** END OF");
    match (start, end) {
        (Some(s), Some(e)) if s <= e => &text[s..e],
        _ => text,
    }
}

/// Words ordered by descending frequency, ties alphabetical; the index is the
/// word id.
pub fn build_vocabulary(tokens: &[String]) -> Vec<String> {
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for t in tokens {
        *freq.entry(t.as_str()).or_default() += 1;
    }
    let mut words: Vec<(&str, usize)> = freq.into_iter().collect();
    words.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    words.into_iter().map(|(w, _)| w.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub tokens: Vec<String>,
    pub vocabulary: Vec<String>,
    pub ids: Vec<usize>,
}

impl Corpus {
    pub fn from_text(text: &str, policy: DashPolicy) -> Result<Self> {
        let tokens = tokenize(text, policy);
        if tokens.is_empty() {
            return Err(Error::invalid("corpus is empty after cleaning"));
        }
        let vocabulary = build_vocabulary(&tokens);
        let index: HashMap<&str, usize> = vocabulary.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        let ids = tokens.iter().map(|t| index[t.as_str()]).collect();
        Ok(Corpus {
            tokens,
            vocabulary,
            ids,
        })
    }

    pub fn read(path: &Path, policy: DashPolicy) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(strip_gutenberg_boilerplate(&text), policy)
    }

    /// Each sample holds the ids of the previous `window` words as
    /// categorical features; the label is the id of the next word.
    pub fn windows(&self, window: usize) -> Result<Dataset> {
        if window == 0 {
            return Err(Error::invalid("window must be at least 1"));
        }
        if self.ids.len() <= window {
            return Err(Error::invalid(format!(
                "{} tokens leave no sample for window {window}",
                self.ids.len()
            )));
        }
        let rows = self.ids.len() - window;
        let mut data = Vec::with_capacity(rows * window);
        let mut labels = Vec::with_capacity(rows);
        for t in window..self.ids.len() {
            data.extend(self.ids[t - window..t].iter().map(|&id| id as f64));
            labels.push(self.ids[t]);
        }
        let mut ds = Dataset::new(Matrix::from_vec(rows, window, data), labels, self.vocabulary.len())?;
        ds.vocabulary = Some(self.vocabulary.clone());
        ds.categories = Some(self.vocabulary.len());
        Ok(ds)
    }
}

pub fn ingest_text_corpus(path: &Path, window: usize, policy: DashPolicy) -> Result<Dataset> {
    Corpus::read(path, policy)?.windows(window)
}

/// Replaces every categorical column by the n-hot code of its id under
/// `input`, concatenated in column order.
pub fn expand_categorical(ds: &Dataset, input: &LabelMapping) -> Result<Matrix> {
    let Some(categories) = ds.categories else {
        return Err(Error::invalid("dataset features are not categorical"));
    };
    if input.n_classes() < categories {
        return Err(Error::invalid(format!(
            "input mapping covers {} ids, vocabulary has {categories}",
            input.n_classes()
        )));
    }
    let block: usize = input.site_sizes().iter().sum();
    let cols = ds.dim() * block;
    let mut out = Matrix::zeros(ds.len(), cols);
    for r in 0..ds.len() {
        let src = ds.features.row(r).to_vec();
        let dst = out.row_mut(r);
        for (pos, &id) in src.iter().enumerate() {
            for idx in n_hot_indices(input, id as usize)? {
                dst[pos * block + idx] = 1.0;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn em_dash_sentence() {
        let want = toks(&["the", "just", "man", "truly", "just"]);
        for policy in [DashPolicy::DoubleHyphen, DashPolicy::EveryHyphen] {
            assert_eq!(tokenize("The just man\u{2014}truly just.", policy), want);
        }
    }

    #[test]
    fn hyphen_policies_differ_on_single_hyphens() {
        assert_eq!(tokenize("well-known--fact", DashPolicy::DoubleHyphen), toks(&["wellknown", "fact"]));
        assert_eq!(tokenize("well-known--fact", DashPolicy::EveryHyphen), toks(&["well", "known", "fact"]));
    }

    #[test]
    fn drops_non_alphabetic_and_strips_punctuation() {
        assert_eq!(
            tokenize("BOOK I. 'Tis 1st of 3 (said he); Socrates!", DashPolicy::default()),
            toks(&["book", "i", "tis", "of", "said", "he", "socrates"])
        );
    }

    #[test]
    fn vocabulary_ranks_by_frequency_then_alphabet() {
        let v = build_vocabulary(&toks(&["b", "a", "c", "b", "c", "d"]));
        assert_eq!(v, toks(&["b", "c", "a", "d"]));
    }

    #[test]
    fn single_window() {
        let c = Corpus::from_text("a b c", DashPolicy::default()).unwrap();
        let ds = c.windows(2).unwrap();
        assert_eq!(ds.len(), 1);
        let id = |w: &str| c.vocabulary.iter().position(|v| v == w).unwrap() as f64;
        assert_eq!(ds.features.row(0), &[id("a"), id("b")]);
        assert_eq!(ds.labels[0] as f64, id("c"));
        assert!(c.windows(3).is_err());
        assert!(c.windows(0).is_err());
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(Corpus::from_text("123 -- !!!", DashPolicy::default()).is_err());
    }

    #[test]
    fn boilerplate_markers() {
        let t = "header\n*** START OF THE BOOK ***\nbody text\n*** END OF THE BOOK ***\nfooter";
        assert_eq!(strip_gutenberg_boilerplate(t), "body text\n");
        assert_eq!(strip_gutenberg_boilerplate("plain"), "plain");
    }

    #[test]
    fn n_hot_expansion_sets_one_bit_per_site_per_position() {
        let c = Corpus::from_text("a b c a b d e", DashPolicy::default()).unwrap();
        let ds = c.windows(2).unwrap();
        let lm = LabelMapping::mixed(6, &[2, 3]).unwrap();
        let x = expand_categorical(&ds, &lm).unwrap();
        assert_eq!(x.cols(), 2 * 5);
        for r in 0..x.rows() {
            assert_eq!(x.row(r).iter().sum::<f64>(), 4.0);
        }
        let small = LabelMapping::onehot(3).unwrap();
        assert!(expand_categorical(&ds, &small).is_err());
    }
}
