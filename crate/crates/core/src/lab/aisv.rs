//! Exhaustive re-randomization of a small potential-outcome table to show how a codebook
//! discovered from the realized sample makes one unit's mapped value depend on the others'
//! treatments.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};

pub const MAX_ENUMERATED_UNITS: usize = 20;

/// Text potential outcomes: for each unit, the category it would write about under each
/// treatment value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialOutcomeTable {
    pub units: Vec<String>,
    pub outcomes: Vec<BTreeMap<u8, String>>,
}

impl PotentialOutcomeTable {
    /// Every unit must have an outcome under both control (0) and treatment (1).
    pub fn new(units: Vec<String>, outcomes: Vec<BTreeMap<u8, String>>) -> Result<Self> {
        if units.len() != outcomes.len() {
            return Err(Error::Misaligned {
                expected: units.len(),
                found: outcomes.len(),
            });
        }
        for (u, o) in units.iter().zip(&outcomes) {
            if !o.contains_key(&0) || !o.contains_key(&1) {
                return Err(Error::invalid(format!("unit '{u}' lacks a potential outcome for 0 or 1")));
            }
        }
        Ok(PotentialOutcomeTable { units, outcomes })
    }

    /// Builds a binary-treatment table from (unit, outcome under 1, outcome under 0) rows.
    pub fn binary(rows: &[(&str, &str, &str)]) -> Self {
        PotentialOutcomeTable {
            units: rows.iter().map(|r| r.0.to_string()).collect(),
            outcomes: rows
                .iter()
                .map(|r| BTreeMap::from([(1, r.1.to_string()), (0, r.2.to_string())]))
                .collect(),
        }
    }

    /// Four respondents: treated ones talk about candidate morals or polarization, controls
    /// about taxes or immigration.
    pub fn stylized() -> Self {
        Self::binary(&[
            ("Person 1", "Candidate Morals", "Taxes"),
            ("Person 2", "Candidate Morals", "Taxes"),
            ("Person 3", "Polarization", "Immigration"),
            ("Person 4", "Polarization", "Immigration"),
        ])
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    fn realized(&self, i: usize, t: u8) -> Result<&str> {
        self.outcomes[i]
            .get(&t)
            .map(String::as_str)
            .ok_or_else(|| Error::invalid(format!("no potential outcome for unit {} under {t}", i + 1)))
    }
}

/// The codebook an analyst would read off one realized sample: one indicator per observed
/// category. `mapped[i]` is unit i's indicator vector over `categories` (sorted).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discovery {
    pub categories: Vec<String>,
    pub mapped: Vec<Vec<u8>>,
}

impl Discovery {
    /// Unit i's mapped value as category -> indicator, comparable across codebooks.
    pub fn mapped_value(&self, i: usize) -> BTreeMap<String, u8> {
        self.categories.iter().cloned().zip(self.mapped[i].iter().copied()).collect()
    }
}

pub fn discover_categories(table: &PotentialOutcomeTable, t: &[u8]) -> Result<Discovery> {
    if t.len() != table.len() {
        return Err(Error::Misaligned {
            expected: table.len(),
            found: t.len(),
        });
    }
    let realized: Vec<&str> = t
        .iter()
        .enumerate()
        .map(|(i, &ti)| table.realized(i, ti))
        .collect::<Result<_>>()?;
    let categories: Vec<String> = realized
        .iter()
        .map(|s| s.to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mapped = realized
        .iter()
        .map(|r| categories.iter().map(|c| u8::from(c == r)).collect())
        .collect();
    Ok(Discovery { categories, mapped })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    /// All 2^n assignments.
    All,
    /// Assignments with floor(n/2) treated units.
    Balanced,
}

impl std::str::FromStr for DesignKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(DesignKind::All),
            "balanced" => Ok(DesignKind::Balanced),
            _ => Err(Error::invalid(format!("unknown design '{s}' (all | balanced)"))),
        }
    }
}

/// Unit `unit` (0-based) has the same treatment under randomizations `a` and `b` but
/// different mapped values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub unit: usize,
    pub a: usize,
    pub b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AisvReport {
    pub design: DesignKind,
    pub randomizations: Vec<Vec<u8>>,
    pub discoveries: Vec<Discovery>,
    /// Distinct category sets in order of first appearance.
    pub distinct_category_sets: Vec<Vec<String>>,
    pub unstable: bool,
    pub witnesses: Vec<Witness>,
}

/// Treatment vectors in lexicographically descending order, (1,1,..) first.
fn assignments(n: usize, design: DesignKind) -> Vec<Vec<u8>> {
    let n_treated = n / 2;
    (0..1u32 << n)
        .rev()
        .map(|code| (0..n).map(|i| ((code >> (n - 1 - i)) & 1) as u8).collect::<Vec<u8>>())
        .filter(|t| design == DesignKind::All || t.iter().filter(|&&x| x == 1).count() == n_treated)
        .collect()
}

pub fn enumerate_aisv(table: &PotentialOutcomeTable, design: DesignKind) -> Result<AisvReport> {
    let n = table.len();
    if n == 0 {
        return Err(Error::invalid("the table has no units"));
    }
    if n > MAX_ENUMERATED_UNITS {
        return Err(Error::invalid(format!(
            "{n} units is too many to enumerate (limit {MAX_ENUMERATED_UNITS}); sample randomizations instead"
        )));
    }
    let randomizations = assignments(n, design);
    let discoveries: Vec<Discovery> = randomizations
        .iter()
        .map(|t| discover_categories(table, t))
        .collect::<Result<_>>()?;
    let mut distinct_category_sets: Vec<Vec<String>> = Vec::new();
    for d in &discoveries {
        if !distinct_category_sets.contains(&d.categories) {
            distinct_category_sets.push(d.categories.clone());
        }
    }
    let values: Vec<Vec<BTreeMap<String, u8>>> = discoveries
        .iter()
        .map(|d| (0..n).map(|i| d.mapped_value(i)).collect())
        .collect();
    let mut witnesses = Vec::new();
    for unit in 0..n {
        for a in 0..randomizations.len() {
            for b in a + 1..randomizations.len() {
                let (ta, tb) = (&randomizations[a], &randomizations[b]);
                let others_differ = (0..n).any(|j| j != unit && ta[j] != tb[j]);
                if ta[unit] == tb[unit] && others_differ && values[a][unit] != values[b][unit] {
                    witnesses.push(Witness { unit, a, b });
                }
            }
        }
    }
    Ok(AisvReport {
        design,
        randomizations,
        discoveries,
        distinct_category_sets,
        unstable: !witnesses.is_empty(),
        witnesses,
    })
}
