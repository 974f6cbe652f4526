use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::clients::{ClientSet, ABSTRACT_PREFIX};
use super::taxonomy::ActionTaxonomy;
use crate::error::{Error, Result};
use crate::geometry::PoseParams;

pub const STAGES: [&str; 5] = ["prompt", "image", "pose", "caption", "refine"];
pub const SKIPPED: &str = "skipped";

/// (abstract prompt, detailed prompt, pose) with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub id: String,
    pub category: String,
    pub action_label: String,
    pub abstract_prompt: String,
    pub detailed_prompt: String,
    #[serde(with = "nullable_pose")]
    pub pose: PoseParams,
    /// Stage name → client that produced it (`skipped` after a failure).
    pub provenance: BTreeMap<String, String>,
    pub filtered: bool,
    pub reason: Option<String>,
}

impl Triplet {
    pub fn reject(&mut self, reason: impl Into<String>) {
        self.filtered = true;
        self.reason = Some(reason.into());
    }
}

/// Non-finite components are written as `null` so failed poses survive a round trip.
mod nullable_pose {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::geometry::PoseParams;

    pub fn serialize<S: Serializer>(p: &PoseParams, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Option<f64>> = p
            .to_flat()
            .into_iter()
            .map(|x| x.is_finite().then_some(x))
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<PoseParams, D::Error> {
        let v = Vec::<Option<f64>>::deserialize(d)?;
        let flat: Vec<f64> = v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect();
        PoseParams::from_flat(&flat).map_err(serde::de::Error::custom)
    }
}

/// Runs prompt → image → pose → caption → refine for one label.
///
/// A failing stage yields a filtered triplet with reason `stage:<name>`.
pub fn synthesize_triplet(
    id: &str,
    category: &str,
    label: &str,
    clients: &ClientSet,
    seed: u64,
) -> Triplet {
    let mut t = Triplet {
        id: id.to_string(),
        category: category.to_string(),
        action_label: label.to_string(),
        abstract_prompt: format!("{ABSTRACT_PREFIX}{label}"),
        detailed_prompt: String::new(),
        pose: PoseParams::zero(),
        provenance: STAGES
            .iter()
            .map(|s| (s.to_string(), SKIPPED.to_string()))
            .collect(),
        filtered: false,
        reason: None,
    };
    if let Err(stage) = run_stages(&mut t, clients, seed) {
        t.reject(format!("stage:{stage}"));
    }
    t
}

fn run_stages(t: &mut Triplet, c: &ClientSet, seed: u64) -> std::result::Result<(), &'static str> {
    let record = |t: &mut Triplet, stage: &str, name: &str| {
        t.provenance.insert(stage.to_string(), name.to_string());
    };
    record(t, "prompt", c.prompt.name());
    let prompt = c
        .prompt
        .abstract_prompt(&t.action_label)
        .map_err(|_| "prompt")?;
    if prompt != t.abstract_prompt {
        return Err("prompt");
    }
    record(t, "image", c.image.name());
    let image = c
        .image
        .synthesize(&prompt, &t.category, &t.action_label, seed)
        .map_err(|_| "image")?;
    record(t, "pose", c.pose.name());
    t.pose = c.pose.estimate(&image).map_err(|_| "pose")?;
    record(t, "caption", c.caption.name());
    let caption = c.caption.caption(&t.pose).map_err(|_| "caption")?;
    record(t, "refine", c.refine.name());
    t.detailed_prompt = c
        .refine
        .refine(&caption, &t.action_label)
        .map_err(|_| "refine")?;
    Ok(())
}

/// Indices of `limit` labels spread evenly over the taxonomy (all when `None`).
pub fn select_labels(total: usize, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(n) if n < total => (0..n).map(|i| i * total / n).collect(),
        _ => (0..total).collect(),
    }
}

/// Per-label seed derived from the corpus seed and the label's position.
pub fn label_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index as u64)
}

pub fn synthesize_corpus(
    taxonomy: &ActionTaxonomy,
    clients: &ClientSet,
    seed: u64,
    limit: Option<usize>,
) -> Vec<Triplet> {
    let labels = taxonomy.labels();
    select_labels(labels.len(), limit)
        .into_iter()
        .map(|i| {
            let l = &labels[i];
            synthesize_triplet(
                &format!("{i:04}"),
                l.category,
                l.label,
                clients,
                label_seed(seed, i),
            )
        })
        .collect()
}

pub fn write_jsonl(path: impl AsRef<Path>, triplets: &[Triplet]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in triplets {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn append_jsonl(path: impl AsRef<Path>, triplet: &Triplet) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_string(triplet)?;
    line.push('\n');
    f.write_all(line.as_bytes())?;
    Ok(())
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Triplet>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squatting_is_deterministic_and_complete() {
        let c = ClientSet::procedural();
        let a = synthesize_triplet("0001", "Fitness and Exercise", "squatting", &c, 7);
        let b = synthesize_triplet("0001", "Fitness and Exercise", "squatting", &c, 7);
        assert_eq!(a, b);
        assert!(!a.filtered);
        assert_eq!(a.abstract_prompt, "Generate the pose of squatting");
        assert!(a.detailed_prompt.starts_with("In a squatting pose, "));
        assert!(STAGES.iter().all(|s| a.provenance[*s] != SKIPPED));
    }

    #[test]
    fn limit_spreads_over_categories() {
        let idx = select_labels(550, Some(16));
        assert_eq!(idx.len(), 16);
        assert_eq!(idx[0], 0);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert!(*idx.last().unwrap() >= 500);
        assert_eq!(select_labels(10, None).len(), 10);
    }

    #[test]
    fn nan_pose_survives_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let mut t = synthesize_triplet("x", "Sports", "golf swing", &ClientSet::procedural(), 1);
        t.pose.rotations[3].y = f64::NAN;
        write_jsonl(&path, &[t.clone()]).unwrap();
        let back = read_jsonl(&path).unwrap();
        assert!(back[0].pose.rotations[3].y.is_nan());
        assert_eq!(back[0].detailed_prompt, t.detailed_prompt);
        append_jsonl(&path, &t).unwrap();
        assert_eq!(read_jsonl(&path).unwrap().len(), 2);
    }
}
