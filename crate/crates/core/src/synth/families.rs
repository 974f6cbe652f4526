use std::collections::HashMap;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::joint::*;
use crate::geometry::PoseParams;

const KEYWORDS: &str = include_str!("../../data/family_keywords_v1.txt");

/// A parametric pose: the listed joints take these axis-angle values, all
/// others stay at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseFamily {
    pub name: &'static str,
    pub joints: &'static [(usize, [f64; 3])],
}

impl PoseFamily {
    pub fn base_pose(&self) -> PoseParams {
        let mut p = PoseParams::zero();
        for &(j, [x, y, z]) in self.joints {
            p.rotations[j] = Vector3::new(x, y, z);
        }
        p
    }

    /// Base pose plus independent jitter on every component, drawn from a
    /// normal with std `sigma` and truncated to `±2·sigma`.
    pub fn sample(&self, sigma: f64, rng: &mut impl Rng) -> Result<PoseParams> {
        let mut p = self.base_pose();
        if sigma == 0.0 {
            return Ok(p);
        }
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for r in p.rotations.iter_mut() {
            for k in 0..3 {
                let mut d: f64 = normal.sample(rng);
                while d.abs() > 2.0 * sigma {
                    d = normal.sample(rng);
                }
                r[k] += d;
            }
        }
        Ok(p)
    }
}

const ARMS_DOWN: [(usize, [f64; 3]); 2] = [
    (LEFT_SHOULDER, [0.0, 0.0, -1.3]),
    (RIGHT_SHOULDER, [0.0, 0.0, 1.3]),
];

pub const FAMILIES: &[PoseFamily] = &[
    PoseFamily {
        name: "stand",
        joints: &ARMS_DOWN,
    },
    PoseFamily {
        name: "t_pose",
        joints: &[],
    },
    PoseFamily {
        name: "squat",
        joints: &[
            (LEFT_HIP, [-1.7, 0.0, 0.15]),
            (RIGHT_HIP, [-1.7, 0.0, -0.15]),
            (LEFT_KNEE, [2.1, 0.0, 0.0]),
            (RIGHT_KNEE, [2.1, 0.0, 0.0]),
            (SPINE1, [0.3, 0.0, 0.0]),
            (LEFT_SHOULDER, [0.0, -1.4, 0.0]),
            (RIGHT_SHOULDER, [0.0, 1.4, 0.0]),
        ],
    },
    PoseFamily {
        name: "sit",
        joints: &[
            (LEFT_HIP, [-1.5, 0.0, 0.0]),
            (RIGHT_HIP, [-1.5, 0.0, 0.0]),
            (LEFT_KNEE, [1.5, 0.0, 0.0]),
            (RIGHT_KNEE, [1.5, 0.0, 0.0]),
            (LEFT_SHOULDER, [0.0, 0.0, -1.3]),
            (RIGHT_SHOULDER, [0.0, 0.0, 1.3]),
            (LEFT_ELBOW, [0.0, -1.1, 0.0]),
            (RIGHT_ELBOW, [0.0, 1.1, 0.0]),
        ],
    },
    PoseFamily {
        name: "keys",
        joints: &[
            (LEFT_HIP, [-1.5, 0.0, 0.0]),
            (RIGHT_HIP, [-1.5, 0.0, 0.0]),
            (LEFT_KNEE, [1.5, 0.0, 0.0]),
            (RIGHT_KNEE, [1.5, 0.0, 0.0]),
            (LEFT_SHOULDER, [0.0, -1.1, -0.6]),
            (RIGHT_SHOULDER, [0.0, 1.1, 0.6]),
            (LEFT_ELBOW, [0.0, -1.2, 0.0]),
            (RIGHT_ELBOW, [0.0, 1.2, 0.0]),
        ],
    },
    PoseFamily {
        name: "drive",
        joints: &[
            (LEFT_HIP, [-1.5, 0.0, 0.0]),
            (RIGHT_HIP, [-1.5, 0.0, 0.0]),
            (LEFT_KNEE, [1.3, 0.0, 0.0]),
            (RIGHT_KNEE, [1.3, 0.0, 0.0]),
            (LEFT_SHOULDER, [0.0, -1.2, -0.3]),
            (RIGHT_SHOULDER, [0.0, 1.2, 0.3]),
            (LEFT_ELBOW, [0.0, -1.0, 0.0]),
            (RIGHT_ELBOW, [0.0, 1.0, 0.0]),
        ],
    },
    PoseFamily {
        name: "reach_up",
        joints: &[
            (LEFT_SHOULDER, [0.0, 0.0, 1.3]),
            (RIGHT_SHOULDER, [0.0, 0.0, -1.3]),
        ],
    },
    PoseFamily {
        name: "reach_forward",
        joints: &[
            (LEFT_SHOULDER, [0.0, -1.3, 0.0]),
            (LEFT_ELBOW, [0.0, -0.3, 0.0]),
            (RIGHT_SHOULDER, [0.0, 0.0, 1.3]),
            (SPINE1, [0.2, 0.0, 0.0]),
        ],
    },
    PoseFamily {
        name: "wave",
        joints: &[
            (LEFT_SHOULDER, [0.0, 0.0, -1.3]),
            (RIGHT_SHOULDER, [0.0, 0.0, -0.5]),
            (RIGHT_ELBOW, [0.0, 1.5, 0.0]),
        ],
    },
    PoseFamily {
        name: "point",
        joints: &[
            (RIGHT_SHOULDER, [0.0, 1.4, -0.1]),
            (LEFT_SHOULDER, [0.0, 0.0, -1.3]),
        ],
    },
    PoseFamily {
        name: "kick",
        joints: &[
            (RIGHT_HIP, [-1.4, 0.0, 0.0]),
            (RIGHT_KNEE, [0.3, 0.0, 0.0]),
            (LEFT_KNEE, [0.2, 0.0, 0.0]),
            (LEFT_SHOULDER, [0.0, 0.0, -0.9]),
            (RIGHT_SHOULDER, [0.0, 0.0, 0.9]),
            (SPINE1, [-0.2, 0.0, 0.0]),
        ],
    },
    PoseFamily {
        name: "lunge",
        joints: &[
            (LEFT_HIP, [-1.2, 0.0, 0.0]),
            (LEFT_KNEE, [1.4, 0.0, 0.0]),
            (RIGHT_HIP, [0.4, 0.0, 0.0]),
            (RIGHT_KNEE, [0.5, 0.0, 0.0]),
            (LEFT_SHOULDER, [0.0, 0.0, -1.3]),
            (RIGHT_SHOULDER, [0.0, 0.0, 1.3]),
        ],
    },
    PoseFamily {
        name: "run",
        joints: &[
            (LEFT_HIP, [-0.8, 0.0, 0.0]),
            (LEFT_KNEE, [0.9, 0.0, 0.0]),
            (RIGHT_HIP, [0.5, 0.0, 0.0]),
            (RIGHT_KNEE, [1.4, 0.0, 0.0]),
            (LEFT_SHOULDER, [0.0, -0.4, -1.2]),
            (RIGHT_SHOULDER, [0.0, 0.4, 1.2]),
            (LEFT_ELBOW, [0.0, -1.5, 0.0]),
            (RIGHT_ELBOW, [0.0, 1.5, 0.0]),
            (SPINE1, [0.2, 0.0, 0.0]),
        ],
    },
    PoseFamily {
        name: "walk",
        joints: &[
            (LEFT_HIP, [-0.4, 0.0, 0.0]),
            (LEFT_KNEE, [0.3, 0.0, 0.0]),
            (RIGHT_HIP, [0.3, 0.0, 0.0]),
            (RIGHT_KNEE, [0.2, 0.0, 0.0]),
            (LEFT_SHOULDER, [0.0, 0.0, -1.3]),
            (RIGHT_SHOULDER, [0.0, 0.0, 1.3]),
        ],
    },
    PoseFamily {
        name: "bow",
        joints: &[
            (SPINE1, [0.6, 0.0, 0.0]),
            (SPINE2, [0.4, 0.0, 0.0]),
            (SPINE3, [0.2, 0.0, 0.0]),
            (NECK, [0.3, 0.0, 0.0]),
            (LEFT_SHOULDER, [0.0, 0.0, -1.3]),
            (RIGHT_SHOULDER, [0.0, 0.0, 1.3]),
        ],
    },
    PoseFamily {
        name: "lean_back",
        joints: &[
            (SPINE1, [-0.3, 0.0, 0.0]),
            (SPINE2, [-0.2, 0.0, 0.0]),
            (LEFT_SHOULDER, [0.0, 0.0, 1.2]),
            (RIGHT_SHOULDER, [0.0, 0.0, -1.2]),
        ],
    },
    PoseFamily {
        name: "punch",
        joints: &[
            (RIGHT_SHOULDER, [0.0, 1.4, 0.0]),
            (RIGHT_ELBOW, [0.0, 0.1, 0.0]),
            (LEFT_SHOULDER, [0.0, -1.0, -0.3]),
            (LEFT_ELBOW, [0.0, -1.8, 0.0]),
            (LEFT_HIP, [-0.3, 0.0, 0.0]),
            (RIGHT_HIP, [-0.3, 0.0, 0.0]),
            (LEFT_KNEE, [0.4, 0.0, 0.0]),
            (RIGHT_KNEE, [0.4, 0.0, 0.0]),
        ],
    },
    PoseFamily {
        name: "guard",
        joints: &[
            (LEFT_SHOULDER, [0.0, -1.0, -0.9]),
            (RIGHT_SHOULDER, [0.0, 1.0, 0.9]),
            (LEFT_ELBOW, [0.0, -1.9, 0.0]),
            (RIGHT_ELBOW, [0.0, 1.9, 0.0]),
            (LEFT_HIP, [-0.4, 0.0, 0.3]),
            (RIGHT_HIP, [-0.4, 0.0, -0.3]),
            (LEFT_KNEE, [0.6, 0.0, 0.0]),
            (RIGHT_KNEE, [0.6, 0.0, 0.0]),
        ],
    },
    PoseFamily {
        name: "swing",
        joints: &[
            (RIGHT_SHOULDER, [0.0, 1.0, 0.5]),
            (LEFT_SHOULDER, [0.0, -1.2, 0.2]),
            (SPINE1, [0.0, -0.6, 0.0]),
            (LEFT_HIP, [-0.3, 0.0, 0.0]),
            (RIGHT_HIP, [-0.3, 0.0, 0.0]),
            (LEFT_KNEE, [0.3, 0.0, 0.0]),
            (RIGHT_KNEE, [0.3, 0.0, 0.0]),
        ],
    },
    PoseFamily {
        name: "throw",
        joints: &[
            (RIGHT_SHOULDER, [0.0, -0.5, -1.2]),
            (RIGHT_ELBOW, [0.0, 1.6, 0.0]),
            (LEFT_SHOULDER, [0.0, -1.2, 0.0]),
            (LEFT_HIP, [-0.5, 0.0, 0.0]),
            (LEFT_KNEE, [0.4, 0.0, 0.0]),
            (SPINE1, [0.0, 0.4, 0.0]),
        ],
    },
    PoseFamily {
        name: "star",
        joints: &[
            (LEFT_SHOULDER, [0.0, 0.0, 0.6]),
            (RIGHT_SHOULDER, [0.0, 0.0, -0.6]),
            (LEFT_HIP, [0.0, 0.0, 0.4]),
            (RIGHT_HIP, [0.0, 0.0, -0.4]),
        ],
    },
    PoseFamily {
        name: "arms_crossed",
        joints: &[
            (LEFT_SHOULDER, [0.0, -0.9, -1.0]),
            (RIGHT_SHOULDER, [0.0, 0.9, 1.0]),
            (LEFT_ELBOW, [0.0, -2.2, 0.0]),
            (RIGHT_ELBOW, [0.0, 2.2, 0.0]),
        ],
    },
    PoseFamily {
        name: "guitar",
        joints: &[
            (LEFT_SHOULDER, [0.0, -0.8, -0.7]),
            (LEFT_ELBOW, [0.0, -1.4, 0.0]),
            (RIGHT_SHOULDER, [0.0, 0.0, 1.0]),
            (RIGHT_ELBOW, [0.0, 1.7, 0.0]),
        ],
    },
    PoseFamily {
        name: "drum",
        joints: &[
            (LEFT_SHOULDER, [0.0, -0.8, -0.9]),
            (RIGHT_SHOULDER, [0.0, 0.8, 0.9]),
            (LEFT_ELBOW, [0.0, -1.3, 0.0]),
            (RIGHT_ELBOW, [0.0, 1.3, 0.0]),
        ],
    },
    PoseFamily {
        name: "kneel",
        joints: &[
            (LEFT_HIP, [-1.5, 0.0, 0.0]),
            (LEFT_KNEE, [1.6, 0.0, 0.0]),
            (RIGHT_KNEE, [1.7, 0.0, 0.0]),
            (LEFT_SHOULDER, [0.0, 0.0, -1.3]),
            (RIGHT_SHOULDER, [0.0, 0.0, 1.3]),
        ],
    },
    PoseFamily {
        name: "lie",
        joints: &[
            (PELVIS, [-1.5, 0.0, 0.0]),
            (LEFT_SHOULDER, [0.0, 0.0, -1.3]),
            (RIGHT_SHOULDER, [0.0, 0.0, 1.3]),
        ],
    },
    PoseFamily {
        name: "balance",
        joints: &[
            (RIGHT_HIP, [-0.3, 0.0, -0.6]),
            (RIGHT_KNEE, [2.0, 0.0, 0.0]),
            (LEFT_SHOULDER, [0.0, 0.0, 1.3]),
            (RIGHT_SHOULDER, [0.0, 0.0, -1.3]),
        ],
    },
    PoseFamily {
        name: "pick_up",
        joints: &[
            (SPINE1, [0.8, 0.0, 0.0]),
            (SPINE2, [0.5, 0.0, 0.0]),
            (LEFT_HIP, [-0.6, 0.0, 0.0]),
            (RIGHT_HIP, [-0.6, 0.0, 0.0]),
            (LEFT_KNEE, [0.5, 0.0, 0.0]),
            (RIGHT_KNEE, [0.5, 0.0, 0.0]),
            (LEFT_SHOULDER, [0.0, -0.3, -1.3]),
            (RIGHT_SHOULDER, [0.0, 0.3, 1.3]),
        ],
    },
    PoseFamily {
        name: "clap",
        joints: &[
            (LEFT_SHOULDER, [0.0, -1.2, -0.3]),
            (RIGHT_SHOULDER, [0.0, 1.2, 0.3]),
            (LEFT_ELBOW, [0.0, -1.0, 0.0]),
            (RIGHT_ELBOW, [0.0, 1.0, 0.0]),
        ],
    },
    PoseFamily {
        name: "carry",
        joints: &[
            (LEFT_SHOULDER, [0.0, 0.0, -1.2]),
            (RIGHT_SHOULDER, [0.0, 0.0, 1.2]),
            (LEFT_ELBOW, [0.0, -1.6, 0.0]),
            (RIGHT_ELBOW, [0.0, 1.6, 0.0]),
        ],
    },
];

pub fn family(name: &str) -> Option<&'static PoseFamily> {
    FAMILIES.iter().find(|f| f.name == name)
}

/// Keyword → family lookup with per-category fallbacks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamilyTable {
    keywords: Vec<(String, String)>,
    defaults: HashMap<String, String>,
}

impl FamilyTable {
    pub fn standard() -> Self {
        Self::parse(KEYWORDS).expect("shipped family table is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, l)) if l.split('\t').collect::<Vec<_>>() == ["version", "1"] => {}
            _ => {
                return Err(Error::Parse(
                    "family table: missing `version 1` line".into(),
                ))
            }
        }
        let mut keywords = Vec::new();
        let mut defaults = HashMap::new();
        for (n, line) in lines {
            let cols: Vec<&str> = line.split('\t').collect();
            let fam = *cols.last().unwrap_or(&"");
            if family(fam).is_none() {
                return Err(Error::Parse(format!(
                    "family table line {}: unknown family `{fam}`",
                    n + 1
                )));
            }
            match cols.as_slice() {
                ["default", cat, f] => {
                    defaults.insert(cat.to_string(), f.to_string());
                }
                [kw, f] => keywords.push((kw.to_string(), f.to_string())),
                _ => {
                    return Err(Error::Parse(format!(
                        "family table line {}: bad row",
                        n + 1
                    )))
                }
            }
        }
        Ok(Self { keywords, defaults })
    }

    /// The family for `label`; `category` supplies the fallback.
    pub fn resolve(&self, category: &str, label: &str) -> &'static PoseFamily {
        let words: Vec<String> = label.split_whitespace().map(str::to_lowercase).collect();
        let name = self
            .keywords
            .iter()
            .find(|(kw, _)| words.iter().any(|w| w.starts_with(kw.as_str())))
            .map(|(_, f)| f.as_str())
            .or_else(|| self.defaults.get(category).map(String::as_str))
            .unwrap_or("stand");
        family(name).expect("validated at parse time")
    }
}
