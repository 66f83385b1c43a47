//! Train/test split with a one-time-use lock on the test set.
//!
//! The split is the only thing separating discovery of a codebook from estimation, so
//! the test half is guarded by a [`TestLock`]: a digest of the test documents plus a
//! consumed flag that may flip exactly once. Estimation code consumes the lock; a second
//! consumption fails unless explicitly overridden, in which case every output produced
//! from it is stamped invalidated.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub const DEFAULT_PROPORTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub proportion: f64,
    pub strata: Option<String>,
    pub seed: u64,
    #[serde(rename = "digest")]
    pub test_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestLock {
    pub split_digest: String,
    pub consumed: bool,
    pub consumed_at: Option<String>,
    pub fingerprint: Option<String>,
    /// Set when the lock was consumed again under an explicit override.
    #[serde(default)]
    pub overridden: bool,
}

/// Validity of an estimate with respect to the test lock. Written into every report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LockState {
    /// Test data touched once through a fresh lock.
    Valid,
    /// Test data reused under an override; inference is not valid.
    Invalidated,
    /// Not test-set data (training-set diagnostics, simulations).
    NotApplicable,
}

impl LockState {
    pub fn as_str(&self) -> &'static str {
        match self {
            LockState::Valid => "valid",
            LockState::Invalidated => "invalidated",
            LockState::NotApplicable => "not_applicable",
        }
    }
}

impl std::fmt::Display for LockState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// SHA-256 over the ordered test ids and their raw text.
pub fn test_digest<'a>(docs: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    let mut h = Sha256::new();
    for (id, text) in docs {
        h.update((id.len() as u64).to_le_bytes());
        h.update(id.as_bytes());
        h.update((text.len() as u64).to_le_bytes());
        h.update(text.as_bytes());
    }
    hex::encode(h.finalize())
}

impl SplitAssignment {
    /// Recomputes the test digest from `corpus`.
    pub fn digest_for(&self, corpus: &Corpus) -> Result<String> {
        let pos = corpus.positions(&self.test_ids)?;
        Ok(test_digest(pos.iter().map(|&i| {
            let d = &corpus.documents[i];
            (d.id.as_str(), d.text.as_str())
        })))
    }

    pub fn verify(&self, corpus: &Corpus) -> Result<()> {
        let found = self.digest_for(corpus)?;
        if found != self.test_digest {
            return Err(Error::TestSetModified {
                expected: self.test_digest.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn train_positions(&self, corpus: &Corpus) -> Result<Vec<usize>> {
        corpus.positions(&self.train_ids)
    }

    pub fn test_positions(&self, corpus: &Corpus) -> Result<Vec<usize>> {
        corpus.positions(&self.test_ids)
    }
}

/// Splits indices `0..n` into (train, test). `strata`, when given, carries one label per index.
pub fn split_indices(
    n: usize,
    strata: Option<&[String]>,
    proportion: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(proportion > 0.0 && proportion < 1.0) {
        return Err(Error::invalid(format!(
            "proportion must lie in (0, 1), got {proportion}"
        )));
    }
    if n < 2 {
        return Err(Error::invalid("a split needs at least 2 documents"));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    match strata {
        Some(labels) => {
            if labels.len() != n {
                return Err(Error::Misaligned {
                    expected: n,
                    found: labels.len(),
                });
            }
            for (i, s) in labels.iter().enumerate() {
                groups.entry(s.as_str()).or_default().push(i);
            }
        }
        None => {
            groups.insert("", (0..n).collect());
        }
    }
    for (name, members) in &groups {
        if members.len() < 2 {
            return Err(Error::SmallStratum {
                stratum: name.to_string(),
                size: members.len(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_train = vec![false; n];
    for members in groups.values() {
        let size = members.len();
        let exact = proportion * size as f64;
        let mut n_train = exact.floor() as usize;
        // fractional remainder goes to the lottery
        if rng.gen::<f64>() < exact - exact.floor() {
            n_train += 1;
        }
        let n_train = n_train.clamp(1, size - 1);
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for &i in &shuffled[..n_train] {
            is_train[i] = true;
        }
    }
    let train = (0..n).filter(|&i| is_train[i]).collect();
    let test = (0..n).filter(|&i| !is_train[i]).collect();
    Ok((train, test))
}

fn stratum_labels(corpus: &Corpus, name: &str) -> Result<Vec<String>> {
    let values = corpus.column(name)?;
    values
        .iter()
        .map(|v| {
            if !v.is_finite() || v.fract() != 0.0 {
                Err(Error::invalid(format!(
                    "stratum covariate '{name}' must be discrete (integer-valued), found {v}"
                )))
            } else {
                Ok(format!("{name}={}", *v as i64))
            }
        })
        .collect()
}

/// Partitions the corpus into training and test documents and issues a fresh lock.
pub fn split(
    corpus: &Corpus,
    proportion: f64,
    strata: Option<&str>,
    seed: u64,
) -> Result<(SplitAssignment, TestLock)> {
    let labels = strata.map(|s| stratum_labels(corpus, s)).transpose()?;
    let (train, test) = split_indices(corpus.len(), labels.as_deref(), proportion, seed)?;
    let ids = |idx: &[usize]| -> Vec<String> {
        idx.iter().map(|&i| corpus.documents[i].id.clone()).collect()
    };
    let digest = test_digest(test.iter().map(|&i| {
        let d = &corpus.documents[i];
        (d.id.as_str(), d.text.as_str())
    }));
    let assignment = SplitAssignment {
        train_ids: ids(&train),
        test_ids: ids(&test),
        proportion,
        strata: strata.map(str::to_string),
        seed,
        test_digest: digest.clone(),
    };
    Ok((assignment, TestLock::new(digest)))
}

impl TestLock {
    pub fn new(split_digest: String) -> Self {
        TestLock {
            split_digest,
            consumed: false,
            consumed_at: None,
            fingerprint: None,
            overridden: false,
        }
    }

    /// Fails if the lock is already consumed or the test documents no longer match.
    pub fn check(&self, current_digest: &str) -> Result<()> {
        if current_digest != self.split_digest {
            return Err(Error::TestSetModified {
                expected: self.split_digest.clone(),
                found: current_digest.to_string(),
            });
        }
        if self.consumed {
            return Err(Error::LockConsumed);
        }
        Ok(())
    }

    /// Marks the test set as used. With `allow_reuse`, a second consumption succeeds but
    /// yields [`LockState::Invalidated`].
    pub fn consume(
        &self,
        fingerprint: &str,
        current_digest: &str,
        allow_reuse: bool,
    ) -> Result<(TestLock, LockState)> {
        match self.check(current_digest) {
            Ok(()) => {}
            Err(Error::LockConsumed) if allow_reuse => {
                let mut next = self.clone();
                next.overridden = true;
                next.fingerprint = Some(fingerprint.to_string());
                next.consumed_at = Some(chrono::Utc::now().to_rfc3339());
                return Ok((next, LockState::Invalidated));
            }
            Err(e) => return Err(e),
        }
        let next = TestLock {
            split_digest: self.split_digest.clone(),
            consumed: true,
            consumed_at: Some(chrono::Utc::now().to_rfc3339()),
            fingerprint: Some(fingerprint.to_string()),
            overridden: false,
        };
        Ok((next, LockState::Valid))
    }
}

/// Path of the lock file that sits next to a split file.
pub fn lock_path(split_path: &Path) -> PathBuf {
    let stem = split_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "split".into());
    split_path.with_file_name(format!("{stem}.lock.json"))
}

/// Writes JSON through a temporary file in the same directory and renames it into place.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    serde_json::to_writer_pretty(&mut tmp, value)?;
    tmp.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

pub fn save(split_path: &Path, assignment: &SplitAssignment, lock: &TestLock) -> Result<()> {
    write_json_atomic(split_path, assignment)?;
    write_json_atomic(&lock_path(split_path), lock)
}

pub fn load(split_path: &Path) -> Result<(SplitAssignment, TestLock)> {
    Ok((read_json(split_path)?, read_json(&lock_path(split_path))?))
}

/// Consumes the on-disk lock of `split_path` against the current corpus.
pub fn consume_lock_file(
    split_path: &Path,
    corpus: &Corpus,
    fingerprint: &str,
    allow_reuse: bool,
) -> Result<LockState> {
    let (assignment, lock) = load(split_path)?;
    let digest = assignment.digest_for(corpus)?;
    let (next, state) = lock.consume(fingerprint, &digest, allow_reuse)?;
    write_json_atomic(&lock_path(split_path), &next)?;
    Ok(state)
}
