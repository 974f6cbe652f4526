//! Hinge-joint conventions on the standard skeleton.
//!
//! Knees flex about local `+x` (shank swings backward), the left elbow about
//! `-y` and the right elbow about `+y` (forearm swings forward).

use nalgebra::Vector3;

use super::pose::PoseParams;
use super::skeleton::joint;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hinge {
    LeftKnee,
    RightKnee,
    LeftElbow,
    RightElbow,
}

impl Hinge {
    pub const ALL: [Hinge; 4] = [
        Hinge::LeftKnee,
        Hinge::RightKnee,
        Hinge::LeftElbow,
        Hinge::RightElbow,
    ];

    pub fn joint(self) -> usize {
        match self {
            Hinge::LeftKnee => joint::LEFT_KNEE,
            Hinge::RightKnee => joint::RIGHT_KNEE,
            Hinge::LeftElbow => joint::LEFT_ELBOW,
            Hinge::RightElbow => joint::RIGHT_ELBOW,
        }
    }

    pub fn axis(self) -> Vector3<f64> {
        match self {
            Hinge::LeftKnee | Hinge::RightKnee => Vector3::x(),
            Hinge::LeftElbow => -Vector3::y(),
            Hinge::RightElbow => Vector3::y(),
        }
    }

    /// `knee` or `elbow`.
    pub fn kind(self) -> &'static str {
        match self {
            Hinge::LeftKnee | Hinge::RightKnee => "knee",
            Hinge::LeftElbow | Hinge::RightElbow => "elbow",
        }
    }

    pub fn of_joint(j: usize) -> Option<Hinge> {
        Hinge::ALL.into_iter().find(|h| h.joint() == j)
    }
}

/// Signed flexion of a hinge: the local rotation vector projected on its axis.
/// Negative values are hyperextension.
pub fn flexion(pose: &PoseParams, hinge: Hinge) -> f64 {
    pose.rotations[hinge.joint()].dot(&hinge.axis())
}

/// Forward flexion of a hip (thigh swinging forward is rotation about `-x`).
pub fn hip_flexion(pose: &PoseParams, left: bool) -> f64 {
    let j = if left {
        joint::LEFT_HIP
    } else {
        joint::RIGHT_HIP
    };
    -pose.rotations[j].x
}

/// Summed forward lean of the three spine joints.
pub fn torso_lean(pose: &PoseParams) -> f64 {
    [joint::SPINE1, joint::SPINE2, joint::SPINE3]
        .iter()
        .map(|&j| pose.rotations[j].x)
        .sum()
}
