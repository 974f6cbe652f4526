use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::anatomy::{flexion, hip_flexion, torso_lean, Hinge};
use crate::geometry::{forward_kinematics, joint, PoseParams, Skeleton};

/// Decision thresholds of the rule-based captioner (radians and meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaptionThresholds {
    /// A knee or elbow is bent when its flexion exceeds this.
    pub bent: f64,
    /// A thigh is raised when hip flexion exceeds this.
    pub thigh_raised: f64,
    pub lean_forward: f64,
    pub lean_back: f64,
    /// Horizontal ankle separation above which the feet are wide apart.
    pub feet_wide: f64,
    /// A wrist within this distance below shoulder height counts as at shoulder height.
    pub shoulder_band: f64,
}

impl Default for CaptionThresholds {
    fn default() -> Self {
        Self {
            bent: 0.8,
            thigh_raised: 0.8,
            lean_forward: 0.5,
            lean_back: -0.3,
            feet_wide: 0.45,
            shoulder_band: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HandLevel {
    AboveHead,
    ShoulderHeight,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lean {
    Forward,
    Upright,
    Back,
}

/// Discrete facts the caption states, each read from local joint angles or
/// from joint positions with the root rotation removed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoseFacts {
    pub lean: Lean,
    pub elbow_bent: [bool; 2],
    pub hand: [HandLevel; 2],
    pub knee_bent: [bool; 2],
    pub thigh_raised: [bool; 2],
    pub feet_wide: bool,
}

const SIDES: [&str; 2] = ["left", "right"];

pub struct Captioner {
    pub skeleton: Skeleton,
    pub thresholds: CaptionThresholds,
}

impl Default for Captioner {
    fn default() -> Self {
        Self {
            skeleton: Skeleton::standard(),
            thresholds: CaptionThresholds::default(),
        }
    }
}

impl Captioner {
    pub fn facts(&self, pose: &PoseParams) -> Result<PoseFacts> {
        pose.validate()?;
        let t = &self.thresholds;
        let local = pose.with_root(nalgebra::Vector3::zeros());
        let fk = forward_kinematics(&local, &self.skeleton)?;
        let hand = |wrist: usize, shoulder: usize| {
            if fk[wrist].y > fk[joint::HEAD].y {
                HandLevel::AboveHead
            } else if fk[wrist].y > fk[shoulder].y - t.shoulder_band {
                HandLevel::ShoulderHeight
            } else {
                HandLevel::Low
            }
        };
        let lean = torso_lean(pose);
        let a = fk[joint::LEFT_ANKLE];
        let b = fk[joint::RIGHT_ANKLE];
        let spread = ((a.x - b.x).powi(2) + (a.z - b.z).powi(2)).sqrt();
        Ok(PoseFacts {
            lean: if lean > t.lean_forward {
                Lean::Forward
            } else if lean < t.lean_back {
                Lean::Back
            } else {
                Lean::Upright
            },
            elbow_bent: [
                flexion(pose, Hinge::LeftElbow) > t.bent,
                flexion(pose, Hinge::RightElbow) > t.bent,
            ],
            hand: [
                hand(joint::LEFT_WRIST, joint::LEFT_SHOULDER),
                hand(joint::RIGHT_WRIST, joint::RIGHT_SHOULDER),
            ],
            knee_bent: [
                flexion(pose, Hinge::LeftKnee) > t.bent,
                flexion(pose, Hinge::RightKnee) > t.bent,
            ],
            thigh_raised: [
                hip_flexion(pose, true) > t.thigh_raised,
                hip_flexion(pose, false) > t.thigh_raised,
            ],
            feet_wide: spread > t.feet_wide,
        })
    }

    pub fn caption(&self, pose: &PoseParams) -> Result<String> {
        Ok(render(&self.facts(pose)?))
    }
}

fn pair_clause(bent: [bool; 2], joint: &str, joints: &str, limb: &str, limbs: &str) -> String {
    match bent {
        [true, true] => format!("both {joints} are bent"),
        [false, false] => format!("the {limbs} are straight"),
        [l, _] => {
            let (b, s) = if l { (0, 1) } else { (1, 0) };
            format!(
                "the {} {joint} is bent and the {} {limb} is straight",
                SIDES[b], SIDES[s]
            )
        }
    }
}

/// Renders facts as lowercase sentences: torso, arms, hands, legs, thighs, feet.
pub fn render(f: &PoseFacts) -> String {
    let mut s = vec![match f.lean {
        Lean::Forward => "the torso leans forward".to_string(),
        Lean::Upright => "the torso is upright".to_string(),
        Lean::Back => "the torso leans back".to_string(),
    }];
    s.push(pair_clause(f.elbow_bent, "elbow", "elbows", "arm", "arms"));
    for (side, level) in SIDES.iter().zip(f.hand) {
        s.push(match level {
            HandLevel::AboveHead => format!("the {side} hand is above the head"),
            HandLevel::ShoulderHeight => format!("the {side} hand is at shoulder height"),
            HandLevel::Low => format!("the {side} hand is low"),
        });
    }
    s.push(pair_clause(f.knee_bent, "knee", "knees", "leg", "legs"));
    for (side, raised) in SIDES.iter().zip(f.thigh_raised) {
        if raised {
            s.push(format!("the {side} thigh is raised"));
        }
    }
    s.push(if f.feet_wide {
        "the feet are wide apart".into()
    } else {
        "the feet are close together".into()
    });
    s.join(". ") + "."
}

/// Captions a pose with the default thresholds on the standard skeleton.
pub fn caption_pose(pose: &PoseParams) -> Result<String> {
    static DEFAULT: OnceLock<Captioner> = OnceLock::new();
    DEFAULT.get_or_init(Captioner::default).caption(pose)
}

/// Prefixes the action context, drops repeated clauses and normalizes spacing.
pub fn refine_prompt(caption: &str, label: &str) -> Result<String> {
    let label = label.split_whitespace().collect::<Vec<_>>().join(" ");
    let prefix = format!("In a {label} pose, ");
    let flat = caption.split_whitespace().collect::<Vec<_>>().join(" ");
    let body = flat.strip_prefix(&prefix).unwrap_or(&flat);
    let mut clauses: Vec<&str> = Vec::new();
    for c in body.split('.').map(str::trim).filter(|c| !c.is_empty()) {
        if !clauses.contains(&c) {
            clauses.push(c);
        }
    }
    if clauses.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot refine an empty caption".into(),
        ));
    }
    Ok(format!("{prefix}{}.", clauses.join(". ")))
}
