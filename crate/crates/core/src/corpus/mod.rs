//! Documents, metadata, tokenization and the sparse document-term matrix.

mod ingest;
mod standardize;
pub mod stopwords;
mod tokenize;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ingest::{ingest, ColumnRoles, InputFormat};
pub use standardize::{standardize, standardize_dtm, Standardization, Standardized};
pub use tokenize::{encode, tokenize, Encoded, StemmerKind, StopwordList, TokenizerConfig};

/// Which side of the analysis the text plays. Declared once at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextRole {
    Outcome,
    Treatment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub covariates: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treatment: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<f64>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            covariates: BTreeMap::new(),
            treatment: None,
            outcome: None,
        }
    }

    pub fn with_treatment(mut self, t: f64) -> Self {
        self.treatment = Some(t);
        self
    }

    pub fn with_outcome(mut self, y: f64) -> Self {
        self.outcome = Some(y);
        self
    }

    pub fn with_covariate(mut self, name: impl Into<String>, value: f64) -> Self {
        self.covariates.insert(name.into(), value);
        self
    }
}

/// Sparse non-negative count matrix stored by row; each row is sorted by column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Dtm {
    n_cols: usize,
    rows: Vec<Vec<(u32, u32)>>,
}

impl Dtm {
    pub fn new(n_cols: usize) -> Self {
        Dtm {
            n_cols,
            rows: Vec::new(),
        }
    }

    /// Builds a matrix from per-row (column, count) pairs. Duplicate columns are summed and
    /// zero counts dropped.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(u32, u32)>>) -> Result<Self> {
        let mut out = Dtm::new(n_cols);
        for row in rows {
            out.push_row(row)?;
        }
        Ok(out)
    }

    pub fn push_row(&mut self, mut row: Vec<(u32, u32)>) -> Result<()> {
        row.sort_unstable_by_key(|&(c, _)| c);
        let mut merged: Vec<(u32, u32)> = Vec::with_capacity(row.len());
        for (c, n) in row {
            if c as usize >= self.n_cols {
                return Err(Error::Misaligned {
                    expected: self.n_cols,
                    found: c as usize + 1,
                });
            }
            match merged.last_mut() {
                Some(last) if last.0 == c => last.1 += n,
                _ => merged.push((c, n)),
            }
        }
        merged.retain(|&(_, n)| n > 0);
        self.rows.push(merged);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[(u32, u32)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[(u32, u32)]> {
        self.rows.iter().map(|r| r.as_slice())
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.rows[i].iter().map(|&(_, n)| n as u64).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        match self.rows[i].binary_search_by_key(&(j as u32), |&(c, _)| c) {
            Ok(pos) => self.rows[i][pos].1,
            Err(_) => 0,
        }
    }

    /// Number of rows in which each column is non-zero.
    pub fn document_frequency(&self) -> Vec<usize> {
        let mut df = vec![0usize; self.n_cols];
        for row in &self.rows {
            for &(c, _) in row {
                df[c as usize] += 1;
            }
        }
        df
    }

    pub fn select_rows(&self, indices: &[usize]) -> Dtm {
        Dtm {
            n_cols: self.n_cols,
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.rows.len(), self.n_cols);
        for (i, row) in self.rows.iter().enumerate() {
            for &(c, n) in row {
                m[(i, c as usize)] = n as f64;
            }
        }
        m
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    #[serde(default)]
    pub text_role: Option<TextRole>,
    #[serde(default)]
    pub vocabulary: Vec<String>,
    #[serde(default)]
    pub dtm: Dtm,
    #[serde(default)]
    pub tokenizer_config: Option<TokenizerConfig>,
    /// Rows left without any token after preprocessing. They are kept so that row
    /// indices stay aligned with the metadata.
    #[serde(default)]
    pub empty_documents: Vec<usize>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, text_role: Option<TextRole>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for d in &documents {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::DuplicateId(d.id.clone()));
            }
        }
        Ok(Corpus {
            documents,
            text_role,
            vocabulary: Vec::new(),
            dtm: Dtm::new(0),
            tokenizer_config: None,
            empty_documents: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn is_tokenized(&self) -> bool {
        self.tokenizer_config.is_some() && self.dtm.n_rows() == self.documents.len()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.documents.iter().map(|d| d.id.as_str()).collect()
    }

    pub fn index_of(&self) -> BTreeMap<&str, usize> {
        self.documents
            .iter()
            .enumerate()
            .map(|(i, d)| (d.id.as_str(), i))
            .collect()
    }

    /// Positions of `ids` in this corpus, in the order given.
    pub fn positions(&self, ids: &[String]) -> Result<Vec<usize>> {
        let index = self.index_of();
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("document id '{id}' not in corpus")))
            })
            .collect()
    }

    /// Sub-corpus with the given rows. Vocabulary and tokenizer settings are shared.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        let documents = indices.iter().map(|&i| self.documents[i].clone()).collect();
        let dtm = if self.dtm.n_rows() == self.documents.len() {
            self.dtm.select_rows(indices)
        } else {
            Dtm::new(self.dtm.n_cols())
        };
        let empty_documents = (0..indices.len())
            .filter(|&r| dtm.n_rows() > r && dtm.row(r).is_empty())
            .collect();
        Corpus {
            documents,
            text_role: self.text_role,
            vocabulary: self.vocabulary.clone(),
            dtm,
            tokenizer_config: self.tokenizer_config.clone(),
            empty_documents,
        }
    }

    /// Values of a metadata column. `treatment` and `outcome` name the dedicated fields;
    /// anything else is looked up among the covariates.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        self.documents
            .iter()
            .map(|d| {
                let v = match name {
                    "treatment" => d.treatment,
                    "outcome" => d.outcome,
                    _ => d.covariates.get(name).copied(),
                };
                v.ok_or_else(|| {
                    Error::invalid(format!("document '{}' has no value for '{name}'", d.id))
                })
            })
            .collect()
    }

    pub fn treatments(&self) -> Result<Vec<f64>> {
        self.column("treatment")
    }

    pub fn outcomes(&self) -> Result<Vec<f64>> {
        self.column("outcome")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_ids_rejected() {
        let docs = vec![Document::new("a", "x"), Document::new("a", "y")];
        assert!(matches!(Corpus::new(docs, None), Err(Error::DuplicateId(id)) if id == "a"));
    }

    #[test]
    fn dtm_merges_duplicate_columns() {
        let dtm = Dtm::from_rows(3, vec![vec![(2, 1), (0, 2), (2, 3)]]).unwrap();
        assert_eq!(dtm.row(0), &[(0, 2), (2, 4)]);
        assert_eq!(dtm.row_total(0), 6);
        assert_eq!(dtm.get(0, 1), 0);
    }

    #[test]
    fn dtm_rejects_out_of_range_column() {
        assert!(Dtm::from_rows(2, vec![vec![(2, 1)]]).is_err());
    }

    #[test]
    fn column_lookup() {
        let docs = vec![
            Document::new("a", "x").with_treatment(1.0).with_covariate("age", 3.0),
            Document::new("b", "y").with_treatment(0.0),
        ];
        let c = Corpus::new(docs, None).unwrap();
        assert_eq!(c.treatments().unwrap(), vec![1.0, 0.0]);
        assert!(c.column("age").is_err());
        assert!(c.outcomes().is_err());
    }
}
