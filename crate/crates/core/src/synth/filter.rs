use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::triplet::Triplet;
use crate::error::{Error, Result};
use crate::geometry::anatomy::{flexion, Hinge};
use crate::geometry::{Skeleton, NUM_JOINTS};

/// Automated stand-in for manual curation. Bounds are in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterRules {
    /// Largest allowed hinge hyperextension (negative flexion magnitude).
    pub hyperextension: f64,
    /// Largest allowed hinge flexion.
    pub max_flexion: f64,
    /// Largest allowed rotation magnitude for every other non-root joint.
    pub joint_limit: f64,
}

impl Default for FilterRules {
    fn default() -> Self {
        Self {
            hyperextension: 0.25,
            max_flexion: 2.8,
            joint_limit: 2.6,
        }
    }
}

impl FilterRules {
    /// The first rule `t` violates, if any.
    pub fn check(&self, t: &Triplet, skel: &Skeleton) -> Option<String> {
        if let Some(r) = &t.reason {
            return Some(r.clone());
        }
        if !t.pose.is_finite() {
            return Some("non-finite".into());
        }
        for j in 1..NUM_JOINTS {
            match Hinge::of_joint(j) {
                Some(h) => {
                    let f = flexion(&t.pose, h);
                    if f < -self.hyperextension || f > self.max_flexion {
                        return Some(format!("anatomy:{}", h.kind()));
                    }
                }
                None => {
                    if t.pose.rotations[j].norm() > self.joint_limit {
                        return Some(format!("anatomy:{}", skel.name(j)));
                    }
                }
            }
        }
        if t.detailed_prompt.trim().is_empty() {
            return Some("empty-caption".into());
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterOutcome {
    pub kept: Vec<Triplet>,
    pub rejected: Vec<Triplet>,
}

impl FilterOutcome {
    /// Rejection counts per reason.
    pub fn reasons(&self) -> HashMap<String, usize> {
        let mut m = HashMap::new();
        for t in &self.rejected {
            *m.entry(t.reason.clone().unwrap_or_default()).or_insert(0) += 1;
        }
        m
    }
}

pub fn filter_triplets(triplets: Vec<Triplet>, rules: &FilterRules) -> FilterOutcome {
    let skel = Skeleton::standard();
    let mut out = FilterOutcome::default();
    for mut t in triplets {
        match rules.check(&t, &skel) {
            Some(reason) => {
                t.reject(reason);
                out.rejected.push(t);
            }
            None => out.kept.push(t),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRow {
    pub id: String,
    pub reason: String,
    pub verdict: String,
}

/// Writes `id,reason,verdict` rows (verdict left blank for a human to fill in).
pub fn write_review(path: impl AsRef<Path>, triplets: &[Triplet]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for t in triplets {
        w.serialize(ReviewRow {
            id: t.id.clone(),
            reason: t.reason.clone().unwrap_or_default(),
            verdict: String::new(),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Applies human verdicts: `reject` marks a triplet filtered with reason
/// `manual`; `keep` and blank leave it alone. Returns how many were rejected.
pub fn merge_review(triplets: &mut [Triplet], path: impl AsRef<Path>) -> Result<usize> {
    let mut r = csv::Reader::from_path(path)?;
    let index: HashMap<String, usize> = triplets
        .iter()
        .enumerate()
        .map(|(i, t)| (t.id.clone(), i))
        .collect();
    let mut rejected = 0;
    for row in r.deserialize() {
        let row: ReviewRow = row?;
        let &i = index.get(&row.id).ok_or_else(|| {
            Error::Validation(format!("review names unknown triplet `{}`", row.id))
        })?;
        match row.verdict.trim() {
            "" | "keep" => {}
            "reject" => {
                if !triplets[i].filtered {
                    triplets[i].reject("manual");
                    rejected += 1;
                }
            }
            other => {
                return Err(Error::Validation(format!(
                    "unknown verdict `{other}` for `{}`",
                    row.id
                )))
            }
        }
    }
    Ok(rejected)
}
