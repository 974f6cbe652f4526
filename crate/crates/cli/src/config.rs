use std::path::{Path, PathBuf};

use clap::ValueEnum;
use posereason::eval::{pose_encoder_registry, text_encoder_registry};
use posereason::generator::{decoder_registry, GenerationConfig};
use posereason::reasoner::TrainConfig;
use posereason::synth::{ClientNames, FilterRules};
use posereason::tokenizer::TokenizerConfig;
use posereason::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Ablation {
    /// Text and pose objectives, refined prompts.
    #[default]
    Full,
    /// Reasoning-text objective only.
    TextOnly,
    /// Pose-token objective only.
    PoseOnly,
    /// Detailed prompts are raw captions (no refinement stage).
    UnrefinedPrompts,
}

impl Ablation {
    /// Loss weights (text, pose) given the configured ones.
    pub fn weights(self, w_text: f64, w_pose: f64) -> (f64, f64) {
        match self {
            Ablation::TextOnly => (w_text, 0.0),
            Ablation::PoseOnly => (0.0, w_pose),
            Ablation::Full | Ablation::UnrefinedPrompts => (w_text, w_pose),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::TextOnly => "text_only",
            Ablation::PoseOnly => "pose_only",
            Ablation::UnrefinedPrompts => "unrefined_prompts",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    /// Taxonomy file; the shipped one when absent.
    pub taxonomy: Option<PathBuf>,
    /// Keyword → pose family table; the shipped one when absent.
    pub families: Option<PathBuf>,
    pub sigma: f64,
    pub clients: ClientNames,
    pub filter: FilterRules,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            taxonomy: None,
            families: None,
            sigma: 0.1,
            clients: ClientNames::default(),
            filter: FilterRules::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub pose_encoder: String,
    pub text_encoder: String,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            pose_encoder: "handcrafted".into(),
            text_encoder: "bow".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub limit: Option<usize>,
    pub ablation: Ablation,
    pub synth: SynthSection,
    pub tokenizer: TokenizerConfig,
    pub train: TrainConfig,
    pub generate: GenerationConfig,
    pub evaluate: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out: PathBuf::from("runs/default"),
            limit: None,
            ablation: Ablation::Full,
            synth: SynthSection::default(),
            tokenizer: TokenizerConfig::default(),
            train: TrainConfig::default(),
            generate: GenerationConfig::default(),
            evaluate: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }

    /// Spreads the run seed into every seeded component.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.tokenizer.seed = seed;
        self.train.seed = seed;
        self.generate.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.tokenizer.validate()?;
        self.train.validate()?;
        if !(self.synth.sigma >= 0.0) {
            return Err(Error::Validation("synth.sigma must be non-negative".into()));
        }
        if self.limit == Some(0) {
            return Err(Error::Validation("limit must be positive".into()));
        }
        if self.generate.max_len == 0 {
            return Err(Error::Validation(
                "generate.max_len must be positive".into(),
            ));
        }
        let check = |ok: bool, what: &str, name: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Validation(format!("unknown {what} `{name}`")))
            }
        };
        check(
            decoder_registry().contains(&self.generate.decoding),
            "decoding",
            &self.generate.decoding,
        )?;
        check(
            pose_encoder_registry().contains(&self.evaluate.pose_encoder),
            "pose encoder",
            &self.evaluate.pose_encoder,
        )?;
        check(
            text_encoder_registry().contains(&self.evaluate.text_encoder),
            "text encoder",
            &self.evaluate.text_encoder,
        )?;
        Ok(())
    }

    /// Client names after the ablation mode is applied.
    pub fn clients(&self) -> ClientNames {
        let mut c = self.synth.clients.clone();
        if self.ablation == Ablation::UnrefinedPrompts {
            c.refine = "identity".into();
        }
        c
    }

    /// Training config after the ablation mode is applied.
    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.train.clone();
        (t.w_text, t.w_pose) = self.ablation.weights(t.w_text, t.w_pose);
        t
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }
}
