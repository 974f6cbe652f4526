use nalgebra::{Matrix3, Vector3};

use super::pose::{JointPositions, PoseParams};
use super::rotation::axis_angle_to_matrix;
use super::skeleton::Skeleton;
use crate::error::{Error, Result};

/// Joint positions plus the accumulated world rotation of every joint frame.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub positions: JointPositions,
    pub global_rotations: Vec<Matrix3<f64>>,
}

/// Forward kinematics over an arbitrary tree; the root sits at the origin.
pub fn forward_kinematics_rotations(
    rotations: &[Vector3<f64>],
    skel: &Skeleton,
) -> Result<Kinematics> {
    if rotations.len() != skel.len() {
        return Err(Error::InvalidArgument(format!(
            "pose has {} joints, skeleton has {}",
            rotations.len(),
            skel.len()
        )));
    }
    let mut global = Vec::with_capacity(skel.len());
    let mut positions = Vec::with_capacity(skel.len());
    for (j, v) in rotations.iter().enumerate() {
        let local = axis_angle_to_matrix(v)?;
        match skel.parent(j) {
            None => {
                global.push(local);
                positions.push(Vector3::zeros());
            }
            Some(p) => {
                let pos = positions[p] + global[p] * skel.rest_offset(j);
                global.push(global[p] * local);
                positions.push(pos);
            }
        }
    }
    Ok(Kinematics {
        positions: JointPositions { positions },
        global_rotations: global,
    })
}

pub fn forward_kinematics(pose: &PoseParams, skel: &Skeleton) -> Result<JointPositions> {
    Ok(forward_kinematics_rotations(&pose.rotations, skel)?.positions)
}

/// Replaces the predicted root orientation with the reference one.
pub fn align_root(pred: &PoseParams, gt: &PoseParams) -> Result<PoseParams> {
    pred.validate()?;
    gt.validate()?;
    Ok(pred.with_root(gt.rotations[0]))
}
