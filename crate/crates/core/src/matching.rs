//! One-to-one matching of topics across fits by cosine similarity of their word
//! distributions.

use nalgebra::DMatrix;
use pathfinding::prelude::{kuhn_munkres, Matrix};

use crate::error::{Error, Result};
use crate::linalg::cosine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMethod {
    Greedy,
    Hungarian,
}

impl std::str::FromStr for MatchMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(MatchMethod::Greedy),
            "hungarian" => Ok(MatchMethod::Hungarian),
            _ => Err(Error::invalid(format!("unknown matching method '{s}'"))),
        }
    }
}

/// `sim[(i, j)]` = cosine between row i of `a` and row j of `b`.
pub fn similarity(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let rows_a: Vec<Vec<f64>> = a.row_iter().map(|r| r.iter().copied().collect()).collect();
    let rows_b: Vec<Vec<f64>> = b.row_iter().map(|r| r.iter().copied().collect()).collect();
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| cosine(&rows_a[i], &rows_b[j]))
}

/// Matches each row listed in `tracked` (rows of `reference`) to a distinct row of
/// `candidate`. Returns the candidate index and similarity for each tracked row.
pub fn match_topics(
    reference: &DMatrix<f64>,
    candidate: &DMatrix<f64>,
    tracked: &[usize],
    method: MatchMethod,
) -> Result<Vec<(usize, f64)>> {
    if reference.ncols() != candidate.ncols() {
        return Err(Error::Misaligned {
            expected: reference.ncols(),
            found: candidate.ncols(),
        });
    }
    if tracked.len() > candidate.nrows() {
        return Err(Error::invalid("more tracked topics than candidate topics"));
    }
    if let Some(&t) = tracked.iter().find(|&&t| t >= reference.nrows()) {
        return Err(Error::invalid(format!("tracked topic {t} out of range")));
    }
    let sim = similarity(&reference.select_rows(tracked), candidate);
    let assignment = match method {
        MatchMethod::Greedy => greedy(&sim),
        MatchMethod::Hungarian => hungarian(&sim),
    };
    Ok(assignment
        .into_iter()
        .enumerate()
        .map(|(i, j)| (j, sim[(i, j)]))
        .collect())
}

/// Pairs in decreasing similarity, skipping pairs whose row or column is taken.
fn greedy(sim: &DMatrix<f64>) -> Vec<usize> {
    let mut pairs: Vec<(usize, usize)> = (0..sim.nrows())
        .flat_map(|i| (0..sim.ncols()).map(move |j| (i, j)))
        .collect();
    pairs.sort_by(|&(a, b), &(c, d)| sim[(c, d)].total_cmp(&sim[(a, b)]).then((a, b).cmp(&(c, d))));
    let mut row = vec![usize::MAX; sim.nrows()];
    let mut used = vec![false; sim.ncols()];
    for (i, j) in pairs {
        if row[i] == usize::MAX && !used[j] {
            row[i] = j;
            used[j] = true;
        }
    }
    row
}

fn hungarian(sim: &DMatrix<f64>) -> Vec<usize> {
    // kuhn_munkres needs an ordered weight type; integer-scaled cosines keep 1e-9 resolution
    let weights = Matrix::from_fn(sim.nrows(), sim.ncols(), |(i, j)| (sim[(i, j)] * 1e9).round() as i64);
    kuhn_munkres(&weights).1
}
