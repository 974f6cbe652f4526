//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use ndarray::{s, Array2};
use posereason::geometry::{axis_angle_to_matrix, PoseParams, Skeleton};
use posereason::tokenizer::TokenizerParams;

/// VQ objective with stop-gradient operands frozen at a reference point.
///
/// Differentiating this function by finite differences reproduces exactly what
/// the straight-through estimator computes: the decoder sees
/// `z_e(θ) + (e₀ - z_e₀)`, the codebook term sees the frozen latents `z_e₀`,
/// and the commitment term sees the frozen entries `e₀`. Code assignments are
/// frozen too.
pub struct FrozenVq {
    pub x: Array2<f64>,
    pub indices: Vec<Vec<usize>>,
    pub latents0: Array2<f64>,
    pub quantized0: Array2<f64>,
}

impl FrozenVq {
    pub fn at(params: &TokenizerParams, x: Array2<f64>) -> Self {
        let latents0 = params.encoder(&x).latents;
        let (indices, quantized0) = params.quantize(&latents0);
        Self {
            x,
            indices,
            latents0,
            quantized0,
        }
    }

    pub fn loss(&self, params: &TokenizerParams) -> f64 {
        let d = params.config.code_dim;
        let latents = params.encoder(&self.x).latents;
        let decoder_in = &latents + &(&self.quantized0 - &self.latents0);
        let out = params.decoder(&decoder_in).output;
        let recon = (&out - &self.x).mapv(|v| v * v).mean().unwrap();
        let n = latents.len() as f64;
        let mut codebook = 0.0;
        for (b, idx) in self.indices.iter().enumerate() {
            for (l, &k) in idx.iter().enumerate() {
                let frozen = self.latents0.slice(s![b, l * d..(l + 1) * d]);
                let entry = params.codebook.entries.row(k);
                codebook += frozen
                    .iter()
                    .zip(entry.iter())
                    .map(|(a, e)| (a - e) * (a - e))
                    .sum::<f64>();
            }
        }
        codebook /= n;
        let commitment =
            params.config.beta * (&latents - &self.quantized0).mapv(|v| v * v).sum() / n;
        recon + codebook + commitment
    }
}

/// Forward kinematics by multiplying homogeneous transforms along each chain.
pub fn matrix_chain_fk(pose: &PoseParams, skel: &Skeleton) -> Vec<nalgebra::Vector3<f64>> {
    (0..skel.len())
        .map(|j| {
            let mut chain = vec![j];
            while let Some(p) = skel.parent(*chain.last().unwrap()) {
                chain.push(p);
            }
            chain.reverse();
            let mut t = nalgebra::Matrix4::<f64>::identity();
            for &k in &chain {
                let mut local = nalgebra::Matrix4::<f64>::identity();
                let r = axis_angle_to_matrix(&pose.rotations[k]).unwrap();
                local.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
                let o = skel.rest_offset(k);
                local[(0, 3)] = o.x;
                local[(1, 3)] = o.y;
                local[(2, 3)] = o.z;
                t *= local;
            }
            nalgebra::Vector3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)])
        })
        .collect()
}

/// Prints one acceptance line and returns whether it passed.
pub fn report(id: &str, name: &str, pass: bool, detail: &str) -> bool {
    println!(
        "[{}] criterion {id}: {name} -- {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

/// Local rotation vector recovered through the matrix log map.
fn log_map(pose: &PoseParams, j: usize) -> nalgebra::Vector3<f64> {
    let m = axis_angle_to_matrix(&pose.rotations[j]).unwrap();
    nalgebra::Rotation3::from_matrix_unchecked(m).scaled_axis()
}

/// Re-derives every fact a rule caption states and returns the contradictions.
///
/// Thresholds: hinge bent above 0.8 rad, thigh raised above 0.8 rad, torso
/// forward above 0.5 rad and back below -0.3 rad, feet wide above 0.45 m of
/// horizontal ankle spread, hand at shoulder height within 0.1 m below the
/// shoulder.
pub fn caption_contradictions(caption: &str, pose: &PoseParams, skel: &Skeleton) -> Vec<String> {
    use posereason::geometry::joint::*;
    let fk = matrix_chain_fk(&pose.with_root(nalgebra::Vector3::zeros()), skel);
    let knee = |j| log_map(pose, j).x > 0.8;
    let elbow = |j: usize, sign: f64| sign * log_map(pose, j).y > 0.8;
    let bent_elbow = [elbow(LEFT_ELBOW, -1.0), elbow(RIGHT_ELBOW, 1.0)];
    let bent_knee = [knee(LEFT_KNEE), knee(RIGHT_KNEE)];
    let thigh = [
        -log_map(pose, LEFT_HIP).x > 0.8,
        -log_map(pose, RIGHT_HIP).x > 0.8,
    ];
    let lean: f64 = [SPINE1, SPINE2, SPINE3]
        .iter()
        .map(|&j| log_map(pose, j).x)
        .sum();
    let level = |w: usize, s: usize| {
        if fk[w].y > fk[HEAD].y {
            "above the head"
        } else if fk[w].y > fk[s].y - 0.1 {
            "at shoulder height"
        } else {
            "low"
        }
    };
    let hands = [
        level(LEFT_WRIST, LEFT_SHOULDER),
        level(RIGHT_WRIST, RIGHT_SHOULDER),
    ];
    let (a, b) = (fk[LEFT_ANKLE], fk[RIGHT_ANKLE]);
    let wide = ((a.x - b.x).powi(2) + (a.z - b.z).powi(2)).sqrt() > 0.45;

    let pair = |bent: [bool; 2], joint: &str, limb: &str, plural: (&str, &str)| -> String {
        match bent {
            [true, true] => format!("both {} are bent", plural.0),
            [false, false] => format!("the {} are straight", plural.1),
            [true, false] => format!("the left {joint} is bent and the right {limb} is straight"),
            [false, true] => format!("the right {joint} is bent and the left {limb} is straight"),
        }
    };
    let mut expected = vec![
        if lean > 0.5 {
            "the torso leans forward".to_string()
        } else if lean < -0.3 {
            "the torso leans back".to_string()
        } else {
            "the torso is upright".to_string()
        },
        pair(bent_elbow, "elbow", "arm", ("elbows", "arms")),
        format!("the left hand is {}", hands[0]),
        format!("the right hand is {}", hands[1]),
        pair(bent_knee, "knee", "leg", ("knees", "legs")),
    ];
    for (side, raised) in ["left", "right"].iter().zip(thigh) {
        if raised {
            expected.push(format!("the {side} thigh is raised"));
        }
    }
    expected.push(
        if wide {
            "the feet are wide apart"
        } else {
            "the feet are close together"
        }
        .to_string(),
    );

    let stated: Vec<&str> = caption
        .split('.')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(|c| c.split_once(" pose, ").map_or(c, |(_, rest)| rest))
        .collect();
    let mut bad: Vec<String> = stated
        .iter()
        .filter(|c| !expected.iter().any(|e| e == *c))
        .map(|c| format!("stated `{c}`"))
        .collect();
    bad.extend(
        expected
            .iter()
            .filter(|e| !stated.contains(&e.as_str()))
            .map(|e| format!("missing `{e}`")),
    );
    bad
}
