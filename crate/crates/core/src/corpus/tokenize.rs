use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use super::{stopwords, Corpus, Dtm};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StemmerKind {
    /// Snowball English, the revised Porter algorithm.
    SnowballEnglish,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopwordList {
    English,
    None,
    Custom(Vec<String>),
}

/// Every preprocessing knob. Stored with the corpus so the matrix can be rebuilt from raw text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    pub remove_numbers: bool,
    pub stopwords: StopwordList,
    pub stemmer: StemmerKind,
    pub min_token_len: usize,
    /// Drop terms present in fewer documents than this.
    pub min_df: usize,
    /// Drop terms present in more than this fraction of documents.
    pub max_df: f64,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            lowercase: true,
            strip_punctuation: true,
            remove_numbers: true,
            stopwords: StopwordList::English,
            stemmer: StemmerKind::SnowballEnglish,
            min_token_len: 1,
            min_df: 2,
            max_df: 0.99,
        }
    }
}

struct Pipeline<'a> {
    config: &'a TokenizerConfig,
    stop: HashSet<String>,
    stemmer: Option<Stemmer>,
}

impl<'a> Pipeline<'a> {
    fn new(config: &'a TokenizerConfig) -> Self {
        let raw: Vec<String> = match &config.stopwords {
            StopwordList::English => stopwords::ENGLISH.iter().map(|s| s.to_string()).collect(),
            StopwordList::None => Vec::new(),
            StopwordList::Custom(words) => words.clone(),
        };
        // stopwords are matched after the same normalization as the text
        let stop = raw
            .iter()
            .flat_map(|w| normalize(w, config))
            .collect::<HashSet<_>>();
        let stemmer = match config.stemmer {
            StemmerKind::SnowballEnglish => Some(Stemmer::create(Algorithm::English)),
            StemmerKind::None => None,
        };
        Pipeline {
            config,
            stop,
            stemmer,
        }
    }

    fn tokens(&self, text: &str) -> Vec<String> {
        normalize(text, self.config)
            .into_iter()
            .filter(|t| !self.stop.contains(t))
            .map(|t| match &self.stemmer {
                Some(s) => s.stem(&t).into_owned(),
                None => t,
            })
            .filter(|t| t.chars().count() >= self.config.min_token_len.max(1))
            .collect()
    }
}

fn normalize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    let lowered = if config.lowercase {
        text.to_lowercase()
    } else {
        text.to_string()
    };
    let cleaned: String = if config.strip_punctuation {
        lowered
            .chars()
            .filter(|c| *c != '\'' && *c != '\u{2019}')
            .map(|c| if c.is_alphanumeric() || c == '_' { c } else { ' ' })
            .collect()
    } else {
        lowered
    };
    cleaned
        .split_whitespace()
        .filter(|t| !(config.remove_numbers && t.chars().all(|c| c.is_ascii_digit())))
        .map(str::to_string)
        .collect()
}

impl TokenizerConfig {
    /// Token stream for one text after normalization, stopword removal and stemming
    /// (before vocabulary pruning).
    pub fn tokens(&self, text: &str) -> Vec<String> {
        Pipeline::new(self).tokens(text)
    }
}

/// Builds the vocabulary and document-term matrix for `corpus`.
pub fn tokenize(corpus: &Corpus, config: &TokenizerConfig) -> Result<Corpus> {
    if corpus.is_empty() {
        return Err(Error::invalid("cannot tokenize an empty corpus"));
    }
    if !(config.max_df > 0.0 && config.max_df <= 1.0) {
        return Err(Error::invalid("max_df must lie in (0, 1]"));
    }
    let pipeline = Pipeline::new(config);
    let token_lists: Vec<Vec<String>> = corpus
        .documents
        .par_iter()
        .map(|d| pipeline.tokens(&d.text))
        .collect();

    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for tokens in &token_lists {
        let unique: HashSet<&str> = tokens.iter().map(String::as_str).collect();
        for t in unique {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let n_docs = corpus.len() as f64;
    let vocabulary: Vec<String> = df
        .into_iter()
        .filter(|&(_, n)| n >= config.min_df && (n as f64) <= config.max_df * n_docs)
        .map(|(t, _)| t.to_string())
        .collect();
    if vocabulary.is_empty() {
        return Err(Error::EmptyVocabulary);
    }

    let index: HashMap<&str, u32> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i as u32))
        .collect();
    let mut dtm = Dtm::new(vocabulary.len());
    let mut empty_documents = Vec::new();
    for (i, tokens) in token_lists.iter().enumerate() {
        let row = count_row(tokens, &index).0;
        if row.is_empty() {
            empty_documents.push(i);
        }
        dtm.push_row(row)?;
    }
    if !empty_documents.is_empty() {
        log::warn!(
            "{} document(s) have no tokens after preprocessing",
            empty_documents.len()
        );
    }

    Ok(Corpus {
        documents: corpus.documents.clone(),
        text_role: corpus.text_role,
        vocabulary,
        dtm,
        tokenizer_config: Some(config.clone()),
        empty_documents,
    })
}

fn count_row(tokens: &[String], index: &HashMap<&str, u32>) -> (Vec<(u32, u32)>, usize) {
    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    let mut oov = 0usize;
    for t in tokens {
        match index.get(t.as_str()) {
            Some(&c) => *counts.entry(c).or_insert(0) += 1,
            None => oov += 1,
        }
    }
    (counts.into_iter().collect(), oov)
}

/// Documents mapped onto a frozen vocabulary.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub dtm: Dtm,
    /// Tokens per document with no column in the vocabulary (dropped).
    pub out_of_vocabulary: Vec<usize>,
    pub empty_documents: Vec<usize>,
}

impl Encoded {
    pub fn oov_rate(&self, i: usize) -> f64 {
        let kept = self.dtm.row_total(i) as f64;
        let dropped = self.out_of_vocabulary[i] as f64;
        if kept + dropped == 0.0 {
            0.0
        } else {
            dropped / (kept + dropped)
        }
    }
}

/// Encodes the documents of `corpus` with an existing vocabulary and the settings it was built with.
pub fn encode(corpus: &Corpus, config: &TokenizerConfig, vocabulary: &[String]) -> Result<Encoded> {
    let pipeline = Pipeline::new(config);
    let index: HashMap<&str, u32> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i as u32))
        .collect();
    let rows: Vec<(Vec<(u32, u32)>, usize)> = corpus
        .documents
        .par_iter()
        .map(|d| count_row(&pipeline.tokens(&d.text), &index))
        .collect();
    let mut dtm = Dtm::new(vocabulary.len());
    let mut out_of_vocabulary = Vec::with_capacity(rows.len());
    let mut empty_documents = Vec::new();
    for (i, (row, oov)) in rows.into_iter().enumerate() {
        if row.is_empty() {
            empty_documents.push(i);
        }
        dtm.push_row(row)?;
        out_of_vocabulary.push(oov);
    }
    Ok(Encoded {
        dtm,
        out_of_vocabulary,
        empty_documents,
    })
}
