use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nn::log_softmax;
use crate::tokenizer::PoseTokenSequence;

/// Supervised text positions: logits row `positions[i]` should predict `ids[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextTargets {
    pub positions: Vec<usize>,
    pub ids: Vec<usize>,
}

impl TextTargets {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Mean NLL over the supervised positions and its gradient w.r.t. all text logits.
pub fn loss_text(text_logits: &Array2<f64>, targets: &TextTargets) -> Result<(f64, Array2<f64>)> {
    if targets.is_empty() {
        return Err(Error::Precondition("empty detailed segment".into()));
    }
    if targets.positions.len() != targets.ids.len() {
        return Err(Error::InvalidArgument(
            "text target positions and ids differ in length".into(),
        ));
    }
    let rows: Vec<usize> = targets.positions.clone();
    nll(text_logits, &rows, &targets.ids)
}

/// Mean NLL over the pose slots, each an independent softmax over the codebook.
pub fn loss_pose(
    pose_logits: &Array2<f64>,
    targets: &PoseTokenSequence,
) -> Result<(f64, Array2<f64>)> {
    targets.check(pose_logits.nrows(), pose_logits.ncols())?;
    let rows: Vec<usize> = (0..targets.len()).collect();
    nll(pose_logits, &rows, &targets.tokens)
}

fn nll(logits: &Array2<f64>, rows: &[usize], ids: &[usize]) -> Result<(f64, Array2<f64>)> {
    let n = ids.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (&r, &t) in rows.iter().zip(ids) {
        if r >= logits.nrows() {
            return Err(Error::InvalidArgument(format!(
                "target position {r} is outside the sequence"
            )));
        }
        if t >= logits.ncols() {
            return Err(Error::InvalidToken {
                index: t,
                size: logits.ncols(),
            });
        }
        let ls = log_softmax(logits.row(r).as_slice().expect("standard layout"));
        loss -= ls[t];
        let mut g = grad.row_mut(r);
        for (k, l) in ls.iter().enumerate() {
            g[k] += l.exp() / n;
        }
        g[t] -= 1.0 / n;
    }
    Ok((loss / n, grad))
}
