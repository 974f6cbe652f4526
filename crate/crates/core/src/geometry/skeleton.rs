use nalgebra::Vector3;

use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 24;
pub const SKELETON_FORMAT_VERSION: u32 = 1;

const STANDARD_SKELETON: &str = include_str!("../../data/skeleton_v1.txt");

/// Joint indices of the standard 24-joint tree.
pub mod joint {
    pub const PELVIS: usize = 0;
    pub const LEFT_HIP: usize = 1;
    pub const RIGHT_HIP: usize = 2;
    pub const SPINE1: usize = 3;
    pub const LEFT_KNEE: usize = 4;
    pub const RIGHT_KNEE: usize = 5;
    pub const SPINE2: usize = 6;
    pub const LEFT_ANKLE: usize = 7;
    pub const RIGHT_ANKLE: usize = 8;
    pub const SPINE3: usize = 9;
    pub const LEFT_FOOT: usize = 10;
    pub const RIGHT_FOOT: usize = 11;
    pub const NECK: usize = 12;
    pub const LEFT_COLLAR: usize = 13;
    pub const RIGHT_COLLAR: usize = 14;
    pub const HEAD: usize = 15;
    pub const LEFT_SHOULDER: usize = 16;
    pub const RIGHT_SHOULDER: usize = 17;
    pub const LEFT_ELBOW: usize = 18;
    pub const RIGHT_ELBOW: usize = 19;
    pub const LEFT_WRIST: usize = 20;
    pub const RIGHT_WRIST: usize = 21;
    pub const LEFT_HAND: usize = 22;
    pub const RIGHT_HAND: usize = 23;
}

/// Kinematic tree with rest-pose bone offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    rest_offsets: Vec<Vector3<f64>>,
}

impl Skeleton {
    pub fn new(
        names: Vec<String>,
        parents: Vec<Option<usize>>,
        rest_offsets: Vec<Vector3<f64>>,
    ) -> Result<Self> {
        if parents.is_empty() || parents.len() != rest_offsets.len() || names.len() != parents.len()
        {
            return Err(Error::InvalidArgument(format!(
                "skeleton arrays disagree: {} names, {} parents, {} offsets",
                names.len(),
                parents.len(),
                rest_offsets.len()
            )));
        }
        if parents[0].is_some() {
            return Err(Error::InvalidArgument("joint 0 must be the root".into()));
        }
        if rest_offsets[0] != Vector3::zeros() {
            return Err(Error::InvalidArgument(
                "root rest offset must be zero".into(),
            ));
        }
        for (j, p) in parents.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < j => {}
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "joint {j} must have a parent with a smaller index, got {p:?}"
                    )))
                }
            }
        }
        if rest_offsets
            .iter()
            .any(|o| !o.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidArgument("rest offsets must be finite".into()));
        }
        Ok(Self {
            names,
            parents,
            rest_offsets,
        })
    }

    /// The shipped synthetic humanoid.
    pub fn standard() -> Self {
        Self::parse(STANDARD_SKELETON).expect("bundled skeleton file is valid")
    }

    /// Parses the versioned skeleton text format (see `data/skeleton_v1.txt`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut version = None;
        let mut names = Vec::new();
        let mut parents = Vec::new();
        let mut offsets = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] == "version" {
                let v: u32 = fields
                    .get(1)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse(format!("line {}: bad version", lineno + 1)))?;
                if v != SKELETON_FORMAT_VERSION {
                    return Err(Error::Parse(format!("unsupported skeleton version {v}")));
                }
                version = Some(v);
                continue;
            }
            if fields.len() != 5 {
                return Err(Error::Parse(format!(
                    "line {}: expected 5 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad number `{s}`", lineno + 1)))
            };
            let parent: i64 = fields[1]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad parent", lineno + 1)))?;
            names.push(fields[0].to_string());
            parents.push(if parent < 0 {
                None
            } else {
                Some(parent as usize)
            });
            offsets.push(Vector3::new(
                num(fields[2])?,
                num(fields[3])?,
                num(fields[4])?,
            ));
        }
        if version.is_none() {
            return Err(Error::Parse("missing version line".into()));
        }
        Self::new(names, parents, offsets)
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn rest_offset(&self, joint: usize) -> &Vector3<f64> {
        &self.rest_offsets[joint]
    }

    pub fn rest_offsets(&self) -> &[Vector3<f64>] {
        &self.rest_offsets
    }

    pub fn name(&self, joint: usize) -> &str {
        &self.names[joint]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// (parent, child) pairs for every non-root joint.
    pub fn bones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parents
            .iter()
            .enumerate()
            .filter_map(|(j, p)| p.map(|p| (p, j)))
    }
}
