//! MPJPE, pose/text/multi-modal feature distances and their reporting scales.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    align_root, forward_kinematics, joint, rotation_angle, PoseParams, Skeleton, NUM_JOINTS,
};
use crate::registry::Registry;
use crate::synth::caption::caption_pose;
use crate::text::{normalize, SharedVocabulary};

pub const MPJPE_SCALE: f64 = 1000.0;
pub const PFD_SCALE: f64 = 1000.0;
pub const TFD_SCALE: f64 = 10.0;
pub const MFD_SCALE: f64 = 10.0;

/// Mean per-joint position error in millimeters after root alignment.
pub fn mpjpe(pred: &PoseParams, gt: &PoseParams, skel: &Skeleton) -> Result<f64> {
    let aligned = align_root(pred, gt)?;
    let a = forward_kinematics(&aligned, skel)?;
    let b = forward_kinematics(gt, skel)?;
    let sum: f64 = (0..skel.len()).map(|j| (a[j] - b[j]).norm()).sum();
    Ok(sum / skel.len() as f64 * MPJPE_SCALE)
}

pub fn distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "feature lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

fn unit(mut v: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n > 1e-12) || !n.is_finite() {
        return Err(Error::Precondition(format!("{what} feature has zero norm")));
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(v)
}

pub trait PoseEncoder: Send + Sync {
    fn name(&self) -> &str;
    fn encode(&self, pose: &PoseParams) -> Result<Vec<f64>>;
}

pub trait TextEncoder: Send + Sync {
    fn name(&self) -> &str;
    fn encode(&self, text: &str) -> Result<Vec<f64>>;
}

/// Joint pairs whose distances are appended to the pose feature.
pub const LIMB_PAIRS: [(usize, usize); 8] = [
    (joint::LEFT_WRIST, joint::RIGHT_WRIST),
    (joint::LEFT_ANKLE, joint::RIGHT_ANKLE),
    (joint::LEFT_WRIST, joint::LEFT_ANKLE),
    (joint::RIGHT_WRIST, joint::RIGHT_ANKLE),
    (joint::LEFT_WRIST, joint::HEAD),
    (joint::RIGHT_WRIST, joint::HEAD),
    (joint::LEFT_KNEE, joint::RIGHT_KNEE),
    (joint::LEFT_ELBOW, joint::RIGHT_ELBOW),
];

/// Pelvis-relative joint positions with the root rotation zeroed (72), local
/// rotation angles of the 23 non-root joints, and the `LIMB_PAIRS` distances;
/// L2-normalized.
pub struct HandcraftedPose {
    pub skeleton: Skeleton,
}

impl PoseEncoder for HandcraftedPose {
    fn name(&self) -> &str {
        "handcrafted"
    }

    fn encode(&self, pose: &PoseParams) -> Result<Vec<f64>> {
        let local = pose.with_root(nalgebra::Vector3::zeros());
        local.validate()?;
        let fk = forward_kinematics(&local, &self.skeleton)?;
        let root = fk[joint::PELVIS];
        let mut v = Vec::with_capacity(3 * NUM_JOINTS + NUM_JOINTS - 1 + LIMB_PAIRS.len());
        for j in 0..NUM_JOINTS {
            v.extend((fk[j] - root).iter());
        }
        v.extend(pose.rotations[1..].iter().map(rotation_angle));
        v.extend(LIMB_PAIRS.iter().map(|&(a, b)| (fk[a] - fk[b]).norm()));
        unit(v, "pose")
    }
}

/// Term-frequency vector over a fixed word list plus one unknown-word bin.
pub struct BagOfWords {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl BagOfWords {
    pub fn new<S: AsRef<str>>(words: &[S]) -> Self {
        let mut out = Self {
            words: Vec::new(),
            index: HashMap::new(),
        };
        for w in words {
            for w in normalize(w.as_ref()).split(' ').filter(|w| !w.is_empty()) {
                if !out.index.contains_key(w) {
                    out.index.insert(w.to_string(), out.words.len());
                    out.words.push(w.to_string());
                }
            }
        }
        out
    }

    /// Uses the word entries of a shared vocabulary.
    pub fn from_vocabulary(vocab: &SharedVocabulary) -> Self {
        let words: Vec<String> = (0..vocab.len())
            .filter(|&id| vocab.is_word(id))
            .map(|id| vocab.token(id))
            .collect();
        Self::new(&words)
    }

    pub fn dim(&self) -> usize {
        self.words.len() + 1
    }
}

impl TextEncoder for BagOfWords {
    fn name(&self) -> &str {
        "bow"
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        let norm = normalize(text);
        if norm.is_empty() {
            return Err(Error::InvalidArgument("cannot encode empty text".into()));
        }
        let mut v = vec![0.0; self.dim()];
        for w in norm.split(' ') {
            v[self.index.get(w).copied().unwrap_or(self.words.len())] += 1.0;
        }
        unit(v, "text")
    }
}

/// What encoder factories may draw on.
#[derive(Debug, Clone)]
pub struct EncoderContext {
    pub skeleton: Skeleton,
    /// Word list for vocabulary-backed text encoders.
    pub words: Vec<String>,
}

impl EncoderContext {
    pub fn new<S: AsRef<str>>(texts: &[S]) -> Self {
        Self {
            skeleton: Skeleton::standard(),
            words: texts.iter().map(|t| t.as_ref().to_string()).collect(),
        }
    }
}

pub fn pose_encoder_registry() -> Registry<EncoderContext, dyn PoseEncoder> {
    let mut r: Registry<EncoderContext, dyn PoseEncoder> = Registry::new("pose encoder");
    r.register("handcrafted", |c: &EncoderContext| {
        Ok(Box::new(HandcraftedPose {
            skeleton: c.skeleton.clone(),
        }))
    });
    r
}

pub fn text_encoder_registry() -> Registry<EncoderContext, dyn TextEncoder> {
    let mut r: Registry<EncoderContext, dyn TextEncoder> = Registry::new("text encoder");
    r.register("bow", |c: &EncoderContext| {
        Ok(Box::new(BagOfWords::new(&c.words)))
    });
    r
}

/// Distances between paired features, in input order.
pub fn paired_distances(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired sets differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("paired sets are empty".into()));
    }
    a.iter().zip(b).map(|(x, y)| distance(x, y)).collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn pose_distances(
    enc: &dyn PoseEncoder,
    a: &[PoseParams],
    b: &[PoseParams],
) -> Result<Vec<f64>> {
    let fa = a
        .iter()
        .map(|p| enc.encode(p))
        .collect::<Result<Vec<_>>>()?;
    let fb = b
        .iter()
        .map(|p| enc.encode(p))
        .collect::<Result<Vec<_>>>()?;
    paired_distances(&fa, &fb)
}

pub fn text_distances<S: AsRef<str>, T: AsRef<str>>(
    enc: &dyn TextEncoder,
    a: &[S],
    b: &[T],
) -> Result<Vec<f64>> {
    let fa = a
        .iter()
        .map(|t| enc.encode(t.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let fb = b
        .iter()
        .map(|t| enc.encode(t.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    paired_distances(&fa, &fb)
}

/// Pose feature distance, reporting scale.
pub fn pfd(enc: &dyn PoseEncoder, a: &[PoseParams], b: &[PoseParams]) -> Result<f64> {
    Ok(mean(&pose_distances(enc, a, b)?) * PFD_SCALE)
}

/// Text feature distance, reporting scale.
pub fn tfd<S: AsRef<str>, T: AsRef<str>>(enc: &dyn TextEncoder, a: &[S], b: &[T]) -> Result<f64> {
    Ok(mean(&text_distances(enc, a, b)?) * TFD_SCALE)
}

/// Drops a leading `In a <label> pose, ` clause so only joint facts are compared.
pub fn strip_context(description: &str) -> &str {
    let t = description.trim_start();
    match t
        .strip_prefix("In a ")
        .and_then(|r| r.split_once(" pose, "))
    {
        Some((_, rest)) => rest,
        None => t,
    }
}

/// Per-pair distances between each description and the rule caption of its pose.
pub fn mm_distances<S: AsRef<str>>(
    enc: &dyn TextEncoder,
    descriptions: &[S],
    poses: &[PoseParams],
) -> Result<Vec<f64>> {
    if descriptions.len() != poses.len() {
        return Err(Error::InvalidArgument(format!(
            "{} descriptions for {} poses",
            descriptions.len(),
            poses.len()
        )));
    }
    let captions = poses.iter().map(caption_pose).collect::<Result<Vec<_>>>()?;
    let stripped: Vec<&str> = descriptions
        .iter()
        .map(|d| strip_context(d.as_ref()))
        .collect();
    text_distances(enc, &stripped, &captions)
}

/// Multi-modality feature distance, reporting scale.
pub fn mfd<S: AsRef<str>>(
    enc: &dyn TextEncoder,
    descriptions: &[S],
    poses: &[PoseParams],
) -> Result<f64> {
    Ok(mean(&mm_distances(enc, descriptions, poses)?) * MFD_SCALE)
}

/// One generated sample with its reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub id: String,
    pub gt_pose: PoseParams,
    pub gt_text: String,
    pub pred_pose: PoseParams,
    pub pred_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: String,
    pub mpjpe_mm: f64,
    pub pfd: f64,
    pub tfd: f64,
    pub mfd: f64,
}

/// All values are on the reporting scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pfd: f64,
    pub tfd: f64,
    pub mfd: f64,
    pub mpjpe_mm: f64,
    pub n_samples: usize,
    /// Samples that could not be generated and are excluded from the means.
    #[serde(default)]
    pub failed: Vec<String>,
    pub per_sample: Vec<SampleMetrics>,
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// A table row: `method | PFD | MPJPE`, or with TFD and MFD between them.
    pub fn table_row(&self, method: &str, ablation: bool) -> String {
        if ablation {
            format!(
                "| {method} | {:.4} | {:.4} | {:.4} | {:.2} |",
                self.pfd, self.tfd, self.mfd, self.mpjpe_mm
            )
        } else {
            format!("| {method} | {:.4} | {:.2} |", self.pfd, self.mpjpe_mm)
        }
    }
}

pub fn table_header(ablation: bool) -> String {
    if ablation {
        "| Method | PFD | TFD | MFD | MPJPE |\n|---|---|---|---|---|".into()
    } else {
        "| Method | PFD | MPJPE |\n|---|---|---|".into()
    }
}

pub struct Evaluator {
    pub skeleton: Skeleton,
    pub pose_encoder: Box<dyn PoseEncoder>,
    pub text_encoder: Box<dyn TextEncoder>,
}

impl Evaluator {
    /// Builds named encoders; the text encoder's word list comes from every
    /// text in `samples` plus the captions the bridge will produce.
    pub fn for_samples(
        samples: &[EvalSample],
        pose_encoder: &str,
        text_encoder: &str,
    ) -> Result<Self> {
        let mut texts: Vec<String> = Vec::new();
        for s in samples {
            texts.push(s.gt_text.clone());
            texts.push(s.pred_text.clone());
            if s.pred_pose.is_finite() {
                texts.push(caption_pose(&s.pred_pose)?);
            }
        }
        let ctx = EncoderContext::new(&texts);
        Ok(Self {
            skeleton: ctx.skeleton.clone(),
            pose_encoder: pose_encoder_registry().build(pose_encoder, &ctx)?,
            text_encoder: text_encoder_registry().build(text_encoder, &ctx)?,
        })
    }

    pub fn evaluate(&self, samples: &[EvalSample]) -> Result<MetricReport> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("no samples to evaluate".into()));
        }
        let gt: Vec<PoseParams> = samples.iter().map(|s| s.gt_pose.clone()).collect();
        let pred: Vec<PoseParams> = samples.iter().map(|s| s.pred_pose.clone()).collect();
        let gt_text: Vec<&str> = samples.iter().map(|s| s.gt_text.as_str()).collect();
        let pred_text: Vec<&str> = samples.iter().map(|s| s.pred_text.as_str()).collect();
        let pd = pose_distances(self.pose_encoder.as_ref(), &gt, &pred)?;
        let td = text_distances(self.text_encoder.as_ref(), &gt_text, &pred_text)?;
        let md = mm_distances(self.text_encoder.as_ref(), &pred_text, &pred)?;
        let per_sample = samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                Ok(SampleMetrics {
                    id: s.id.clone(),
                    mpjpe_mm: mpjpe(&s.pred_pose, &s.gt_pose, &self.skeleton)?,
                    pfd: pd[i] * PFD_SCALE,
                    tfd: td[i] * TFD_SCALE,
                    mfd: md[i] * MFD_SCALE,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MetricReport {
            pfd: mean(&pd) * PFD_SCALE,
            tfd: mean(&td) * TFD_SCALE,
            mfd: mean(&md) * MFD_SCALE,
            mpjpe_mm: mean(&per_sample.iter().map(|s| s.mpjpe_mm).collect::<Vec<_>>()),
            n_samples: samples.len(),
            failed: Vec::new(),
            per_sample,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn bow(texts: &[&str]) -> BagOfWords {
        BagOfWords::new(texts)
    }

    #[test]
    fn pose_feature_is_unit_and_root_invariant() {
        let enc = HandcraftedPose {
            skeleton: Skeleton::standard(),
        };
        let mut p = PoseParams::zero();
        p.rotations[joint::LEFT_ELBOW] = Vector3::new(0.1, -1.0, 0.2);
        let f = enc.encode(&p).unwrap();
        assert_eq!(f.len(), 72 + 23 + 8);
        assert!((f.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-9);
        let g = enc
            .encode(&p.with_root(Vector3::new(1.0, 2.0, -0.5)))
            .unwrap();
        assert!(distance(&f, &g).unwrap() < 1e-12);
    }

    #[test]
    fn text_feature_properties() {
        let e = bow(&["left arm raised", "right"]);
        let a = e.encode("left arm raised").unwrap();
        assert_eq!(
            distance(&a, &e.encode("raised arm left").unwrap()).unwrap(),
            0.0
        );
        assert!(distance(&a, &e.encode("right arm raised").unwrap()).unwrap() > 0.1);
        assert!(e.encode(" .. ").is_err());
        let oov = e.encode("zebra").unwrap();
        assert_eq!(oov[e.dim() - 1], 1.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let e = bow(&["a"]);
        assert!(tfd(&e, &["a"], &["a", "a"]).is_err());
        assert!(mfd(&e, &["a"], &[]).is_err());
    }

    #[test]
    fn mfd_is_zero_for_own_caption() {
        let mut p = PoseParams::zero();
        p.rotations[joint::RIGHT_KNEE] = Vector3::new(1.5, 0.0, 0.0);
        let c = caption_pose(&p).unwrap();
        let e = bow(&[c.as_str()]);
        assert_eq!(mfd(&e, &[c.clone()], &[p.clone()]).unwrap(), 0.0);
        let refined = crate::synth::caption::refine_prompt(&c, "lunging").unwrap();
        assert_eq!(mfd(&e, &[refined], &[p]).unwrap(), 0.0);
        assert!(mfd(&e, &[""], &[PoseParams::zero()]).is_err());
    }

    #[test]
    fn report_json_round_trip() {
        let p = PoseParams::zero();
        let s = EvalSample {
            id: "a".into(),
            gt_pose: p.clone(),
            gt_text: "the legs are straight".into(),
            pred_pose: p,
            pred_text: "the legs are straight".into(),
        };
        let ev = Evaluator::for_samples(&[s.clone()], "handcrafted", "bow").unwrap();
        let r = ev.evaluate(&[s]).unwrap();
        assert_eq!((r.pfd, r.tfd, r.mpjpe_mm, r.n_samples), (0.0, 0.0, 0.0, 1));
        assert_eq!(MetricReport::from_json(&r.to_json().unwrap()).unwrap(), r);
        assert!(r
            .table_row("Ours", false)
            .starts_with("| Ours | 0.0000 | 0.00 |"));
    }
}
