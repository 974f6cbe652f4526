use nalgebra::Vector3;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::skeleton::NUM_JOINTS;
use crate::error::{Error, Result};

pub const POSE_DIM: usize = NUM_JOINTS * 3;

/// 24 axis-angle joint rotations. Joint 0 is the global root orientation.
///
/// Storage does not enforce finiteness so that broken upstream estimates can
/// be represented and filtered; consumers call [`PoseParams::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct PoseParams {
    pub rotations: [Vector3<f64>; NUM_JOINTS],
}

impl Default for PoseParams {
    fn default() -> Self {
        Self::zero()
    }
}

impl PoseParams {
    pub fn zero() -> Self {
        Self {
            rotations: [Vector3::zeros(); NUM_JOINTS],
        }
    }

    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.len() != POSE_DIM {
            return Err(Error::InvalidArgument(format!(
                "pose needs {POSE_DIM} values, got {}",
                values.len()
            )));
        }
        let mut pose = Self::zero();
        for (j, chunk) in values.chunks_exact(3).enumerate() {
            pose.rotations[j] = Vector3::new(chunk[0], chunk[1], chunk[2]);
        }
        Ok(pose)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.rotations
            .iter()
            .flat_map(|r| [r.x, r.y, r.z])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.rotations
            .iter()
            .all(|r| r.iter().all(|c| c.is_finite()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "pose contains non-finite values".into(),
            ))
        }
    }

    pub fn root(&self) -> &Vector3<f64> {
        &self.rotations[0]
    }

    pub fn with_root(&self, root: Vector3<f64>) -> Self {
        let mut out = self.clone();
        out.rotations[0] = root;
        out
    }
}

impl Serialize for PoseParams {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_flat().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PoseParams {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Self::from_flat(&v).map_err(serde::de::Error::custom)
    }
}

/// 3D joint locations produced by forward kinematics, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPositions {
    pub positions: Vec<Vector3<f64>>,
}

impl JointPositions {
    pub fn to_flat(&self) -> Vec<f64> {
        self.positions
            .iter()
            .flat_map(|p| [p.x, p.y, p.z])
            .collect()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

impl Serialize for JointPositions {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_flat().serialize(s)
    }
}

impl<'de> Deserialize<'de> for JointPositions {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        if v.len() % 3 != 0 {
            return Err(serde::de::Error::custom(
                "joint coordinates must come in triples",
            ));
        }
        Ok(Self {
            positions: v
                .chunks(3)
                .map(|c| Vector3::new(c[0], c[1], c[2]))
                .collect(),
        })
    }
}

impl std::ops::Index<usize> for JointPositions {
    type Output = Vector3<f64>;
    fn index(&self, j: usize) -> &Vector3<f64> {
        &self.positions[j]
    }
}
