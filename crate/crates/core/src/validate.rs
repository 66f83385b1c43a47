//! Tools for reading and labelling a fitted codebook: top words, representative documents
//! and a registry of human-assigned labels.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::stm::StmModel;

/// The `n` highest-probability terms of topic `k` (0-based), ties broken lexicographically.
pub fn top_words(model: &StmModel, k: usize, n: usize) -> Result<Vec<String>> {
    top_terms(&model.beta, &model.vocabulary, k, n)
}

pub fn top_terms(beta: &DMatrix<f64>, vocabulary: &[String], k: usize, n: usize) -> Result<Vec<String>> {
    if k >= beta.nrows() {
        return Err(Error::invalid(format!("topic {k} out of range (K = {})", beta.nrows())));
    }
    if vocabulary.len() != beta.ncols() {
        return Err(Error::Misaligned {
            expected: beta.ncols(),
            found: vocabulary.len(),
        });
    }
    let mut idx: Vec<usize> = (0..beta.ncols()).collect();
    idx.sort_by(|&a, &b| {
        beta[(k, b)]
            .total_cmp(&beta[(k, a)])
            .then_with(|| vocabulary[a].cmp(&vocabulary[b]))
    });
    Ok(idx.into_iter().take(n).map(|i| vocabulary[i].clone()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Representative {
    pub ids: Vec<String>,
    /// True when fewer than the requested number of documents exist.
    pub saturated: bool,
}

/// The `n` training documents with the highest proportion of topic `k`, ties by id.
pub fn representative_docs(model: &StmModel, k: usize, n: usize) -> Result<Representative> {
    representative_rows(&model.theta(), &model.doc_ids, k, n)
}

pub fn representative_rows(theta: &DMatrix<f64>, ids: &[String], k: usize, n: usize) -> Result<Representative> {
    if k >= theta.ncols() {
        return Err(Error::invalid(format!("topic {k} out of range (K = {})", theta.ncols())));
    }
    if ids.len() != theta.nrows() {
        return Err(Error::Misaligned {
            expected: theta.nrows(),
            found: ids.len(),
        });
    }
    let mut idx: Vec<usize> = (0..theta.nrows()).collect();
    idx.sort_by(|&a, &b| theta[(b, k)].total_cmp(&theta[(a, k)]).then_with(|| ids[a].cmp(&ids[b])));
    let saturated = n > idx.len();
    if saturated {
        log::warn!("requested {n} representative documents but only {} exist", idx.len());
    }
    Ok(Representative {
        ids: idx.into_iter().take(n).map(|i| ids[i].clone()).collect(),
        saturated,
    })
}

/// Human-assigned names for topics or features, keyed by 0-based index.
///
/// On disk: one `index = label` line per entry, 1-based like the rest of the reports;
/// `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelRegistry {
    labels: BTreeMap<usize, String>,
}

impl LabelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, k: usize, label: impl Into<String>) {
        self.labels.insert(k, label.into());
    }

    /// Label for index `k`, falling back to `{prefix} {k+1}`.
    pub fn label(&self, k: usize, prefix: &str) -> String {
        self.labels
            .get(&k)
            .cloned()
            .unwrap_or_else(|| format!("{prefix} {}", k + 1))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut reg = LabelRegistry::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, label) = line.split_once('=').ok_or_else(|| Error::Malformed {
                line: i + 1,
                message: "expected 'index = label'".into(),
            })?;
            let k: usize = k.trim().parse().map_err(|_| Error::Malformed {
                line: i + 1,
                message: format!("'{}' is not a positive index", k.trim()),
            })?;
            if k == 0 {
                return Err(Error::Malformed {
                    line: i + 1,
                    message: "indices start at 1".into(),
                });
            }
            reg.set(k - 1, label.trim());
        }
        Ok(reg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.labels
            .iter()
            .map(|(k, l)| format!("{} = {l}\n", k + 1))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn point_mass_topic() {
        let v = vocab(&["border", "deport", "tax"]);
        let beta = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.5, 0.0, 0.5]);
        assert_eq!(top_terms(&beta, &v, 0, 2).unwrap()[0], "deport");
    }

    #[test]
    fn ties_are_lexicographic() {
        let v = vocab(&["zeta", "alpha", "mid"]);
        let beta = DMatrix::from_row_slice(1, 3, &[0.4, 0.4, 0.2]);
        assert_eq!(top_terms(&beta, &v, 0, 3).unwrap(), vocab(&["alpha", "zeta", "mid"]));
        assert!(top_terms(&beta, &v, 1, 3).is_err());
    }

    #[test]
    fn representative_ties_and_saturation() {
        let theta = DMatrix::from_row_slice(3, 2, &[0.5, 0.5, 1.0, 0.0, 0.5, 0.5]);
        let ids = vocab(&["c", "b", "a"]);
        let r = representative_rows(&theta, &ids, 0, 5).unwrap();
        assert_eq!(r.ids, vocab(&["b", "a", "c"]));
        assert!(r.saturated);
    }

    #[test]
    fn registry_round_trip() {
        let reg = LabelRegistry::parse("# labels\n1 = Border security\n3=Economy\n").unwrap();
        assert_eq!(reg.label(0, "Topic"), "Border security");
        assert_eq!(reg.label(1, "Topic"), "Topic 2");
        assert_eq!(LabelRegistry::parse(&reg.to_text()).unwrap(), reg);
        assert!(LabelRegistry::parse("0 = x").is_err());
    }
}
