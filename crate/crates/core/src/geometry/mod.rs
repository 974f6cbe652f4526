//! Articulated 24-joint body: axis-angle rotations, forward kinematics and
//! root alignment. All functions are pure.

pub mod anatomy;
mod kinematics;
mod pose;
mod rotation;
mod skeleton;

pub use anatomy::{flexion, Hinge};
pub use kinematics::{align_root, forward_kinematics, forward_kinematics_rotations, Kinematics};
pub use pose::{JointPositions, PoseParams, POSE_DIM};
pub use rotation::{axis_angle_to_matrix, canonicalize, rotation_angle, SMALL_ANGLE};
pub use skeleton::{joint, Skeleton, NUM_JOINTS, SKELETON_FORMAT_VERSION};
