//! First-order optimizers, selectable by name through [`optimizer_registry`].

use std::collections::HashMap;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::Params;
use crate::error::{Error, Result};
use crate::registry::Registry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Registry key: `sgd` or `adam`.
    pub name: String,
    pub lr: f64,
    /// Heavy-ball momentum for `sgd`; 0 disables it.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            name: "sgd".into(),
            lr: 1e-3,
            momentum: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub trait Optimizer: Send {
    fn name(&self) -> &'static str;

    /// Updates every parameter for which `trainable(name)` holds.
    fn step(
        &mut self,
        params: &mut dyn Params,
        grads: &dyn Params,
        trainable: &dyn Fn(&str) -> bool,
    );
}

pub fn optimizer_registry() -> Registry<OptimizerConfig, dyn Optimizer> {
    let mut reg: Registry<OptimizerConfig, dyn Optimizer> = Registry::new("optimizer");
    reg.register("sgd", |c: &OptimizerConfig| {
        check_lr(c)?;
        Ok(Box::new(Sgd::new(c.lr, c.momentum)))
    });
    reg.register("adam", |c: &OptimizerConfig| {
        check_lr(c)?;
        Ok(Box::new(Adam::new(c.lr, c.beta1, c.beta2, c.eps)))
    });
    reg
}

pub fn build_optimizer(config: &OptimizerConfig) -> Result<Box<dyn Optimizer>> {
    optimizer_registry().build(&config.name, config)
}

fn check_lr(c: &OptimizerConfig) -> Result<()> {
    if !(c.lr.is_finite() && c.lr > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {}",
            c.lr
        )));
    }
    Ok(())
}

fn collect_grads(grads: &dyn Params) -> Vec<(String, &Array2<f64>)> {
    let mut out = Vec::new();
    grads.visit(&mut |name, a| out.push((name.to_string(), a)));
    out
}

pub struct Sgd {
    lr: f64,
    momentum: f64,
    velocity: HashMap<String, Array2<f64>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            velocity: HashMap::new(),
        }
    }
}

impl Optimizer for Sgd {
    fn name(&self) -> &'static str {
        "sgd"
    }

    fn step(
        &mut self,
        params: &mut dyn Params,
        grads: &dyn Params,
        trainable: &dyn Fn(&str) -> bool,
    ) {
        let grads = collect_grads(grads);
        let mut i = 0;
        params.visit_mut(&mut |name, p| {
            let (gname, g) = &grads[i];
            i += 1;
            debug_assert_eq!(name, gname);
            if !trainable(name) {
                return;
            }
            if self.momentum == 0.0 {
                p.scaled_add(-self.lr, g);
            } else {
                let v = self
                    .velocity
                    .entry(name.to_string())
                    .or_insert_with(|| Array2::zeros(p.raw_dim()));
                v.mapv_inplace(|x| x * self.momentum);
                *v += *g;
                p.scaled_add(-self.lr, v);
            }
        });
    }
}

pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    moments: HashMap<String, (Array2<f64>, Array2<f64>)>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            moments: HashMap::new(),
        }
    }
}

impl Optimizer for Adam {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn step(
        &mut self,
        params: &mut dyn Params,
        grads: &dyn Params,
        trainable: &dyn Fn(&str) -> bool,
    ) {
        self.t += 1;
        let grads = collect_grads(grads);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = self.lr;
        let mut i = 0;
        params.visit_mut(&mut |name, p| {
            let (gname, g) = &grads[i];
            i += 1;
            debug_assert_eq!(name, gname);
            if !trainable(name) {
                return;
            }
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (Array2::zeros(p.raw_dim()), Array2::zeros(p.raw_dim())));
            Zip::from(p).and(m).and(v).and(*g).for_each(|p, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        });
    }
}
