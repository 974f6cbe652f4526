use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use posereason::checkpoint::Checkpoint;
use posereason::eval::{table_header, EvalSample, Evaluator};
use posereason::export::{to_obj, to_svg};
use posereason::generator::{GenerationResult, Generator};
use posereason::geometry::{forward_kinematics, Skeleton};
use posereason::reasoner::{train_reasoner, train_reasoner_from, Example, ReasonerState};
use posereason::synth::triplet::{read_jsonl, write_jsonl, Triplet};
use posereason::synth::{
    expand_taxonomy, merge_review, synthesize_corpus, write_review, ActionTaxonomy, ClientSet,
    FamilyTable, StageContext,
};
use posereason::text::SharedVocabulary;
use posereason::tokenizer::{train_tokenizer, TokenizerParams};
use posereason::Error;
use serde::Serialize;

use crate::config::{Ablation, RunConfig};

pub const DATASET: &str = "dataset.jsonl";
pub const REVIEW: &str = "review.csv";
pub const SYNTH_SUMMARY: &str = "synth_summary.json";
pub const TOKENIZER: &str = "tokenizer.ckpt";
pub const TOKENIZER_LOG: &str = "tokenizer_log.csv";
pub const VOCAB: &str = "vocab.txt";
pub const REASONER: &str = "reasoner.ckpt";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const GENERATION: &str = "generation.json";
pub const METRICS: &str = "metrics.json";

/// Documented process exit codes.
pub mod exit {
    pub const FAILURE: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const MISSING: i32 = 3;
    pub const DIVERGED: i32 = 4;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Validation(_)
            | Error::InvalidArgument(_)
            | Error::Parse(_)
            | Error::UnknownEntry { .. }
            | Error::Precondition(_)
            | Error::ContextOverflow { .. } => exit::VALIDATION,
            Error::Checkpoint(_) => exit::MISSING,
            _ => exit::FAILURE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(exit::FAILURE, e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::new(exit::FAILURE, e.to_string())
    }
}

pub type CliResult<T = ()> = std::result::Result<T, CliError>;

fn require(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::new(
            exit::MISSING,
            format!("{what} not found at {}", path.display()),
        ))
    }
}

fn prepare_out(cfg: &RunConfig) -> CliResult<()> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| {
        CliError::new(
            exit::VALIDATION,
            format!("cannot create {}: {e}", cfg.out.display()),
        )
    })
}

/// Persists the last good checkpoint and reports where it went.
fn diverged(cfg: &RunConfig, name: &str, epoch: usize, last_good: &Checkpoint) -> CliError {
    let path = cfg.path(&format!("{name}.diverged.ckpt"));
    let saved = last_good.save(&path);
    let mut msg = format!("{name} training produced a non-finite loss at epoch {epoch}");
    match saved {
        Ok(()) => msg.push_str(&format!("; last good checkpoint: {}", path.display())),
        Err(e) => msg.push_str(&format!("; saving the last good checkpoint failed: {e}")),
    }
    CliError::new(exit::DIVERGED, msg)
}

fn kept(cfg: &RunConfig) -> CliResult<Vec<Triplet>> {
    let path = cfg.path(DATASET);
    require(&path, "dataset")?;
    let kept: Vec<Triplet> = read_jsonl(&path)?
        .into_iter()
        .filter(|t| !t.filtered)
        .collect();
    if kept.is_empty() {
        return Err(CliError::new(
            exit::VALIDATION,
            "dataset has no unfiltered triplets",
        ));
    }
    Ok(kept)
}

#[derive(Debug, Serialize)]
struct CategoryCount {
    total: usize,
    kept: usize,
}

#[derive(Debug, Serialize)]
struct SynthSummary {
    seed: u64,
    total: usize,
    kept: usize,
    filtered: usize,
    categories: BTreeMap<String, CategoryCount>,
    reasons: BTreeMap<String, usize>,
}

pub fn synth(cfg: &RunConfig, review: Option<PathBuf>) -> CliResult {
    if let Some(p) = &review {
        require(p, "review file")?;
    }
    if let Some(p) = &cfg.synth.taxonomy {
        require(p, "taxonomy")?;
    }
    if let Some(p) = &cfg.synth.families {
        require(p, "family table")?;
    }
    prepare_out(cfg)?;
    let taxonomy = match &cfg.synth.taxonomy {
        Some(p) => expand_taxonomy(&std::fs::read_to_string(p)?)?,
        None => ActionTaxonomy::standard(),
    };
    let families = match &cfg.synth.families {
        Some(p) => FamilyTable::parse(&std::fs::read_to_string(p)?)?,
        None => FamilyTable::standard(),
    };
    let ctx = StageContext {
        sigma: cfg.synth.sigma,
        families,
        ..Default::default()
    };
    let clients = ClientSet::build(&cfg.clients(), &ctx)?;

    let mut triplets = synthesize_corpus(&taxonomy, &clients, cfg.seed, cfg.limit);
    let skel = Skeleton::standard();
    for t in &mut triplets {
        if let Some(reason) = cfg.synth.filter.check(t, &skel) {
            t.reject(reason);
        }
    }
    if let Some(p) = &review {
        let n = merge_review(&mut triplets, p)?;
        println!("manual review rejected {n}");
    }
    write_jsonl(cfg.path(DATASET), &triplets)?;
    write_review(cfg.path(REVIEW), &triplets)?;

    let mut summary = SynthSummary {
        seed: cfg.seed,
        total: triplets.len(),
        kept: 0,
        filtered: 0,
        categories: BTreeMap::new(),
        reasons: BTreeMap::new(),
    };
    for t in &triplets {
        let c = summary
            .categories
            .entry(t.category.clone())
            .or_insert(CategoryCount { total: 0, kept: 0 });
        c.total += 1;
        if t.filtered {
            summary.filtered += 1;
            *summary
                .reasons
                .entry(t.reason.clone().unwrap_or_default())
                .or_insert(0) += 1;
        } else {
            c.kept += 1;
            summary.kept += 1;
        }
    }
    std::fs::write(
        cfg.path(SYNTH_SUMMARY),
        serde_json::to_string_pretty(&summary).map_err(Error::from)?,
    )?;

    println!("synthesized {} triplets (seed {})", summary.total, cfg.seed);
    for (name, c) in &summary.categories {
        println!("  {name:<28} {:>3} kept of {:>3}", c.kept, c.total);
    }
    println!("filtered {}", summary.filtered);
    for (reason, n) in &summary.reasons {
        println!("  {reason}: {n}");
    }
    println!("wrote {}", cfg.path(DATASET).display());
    Ok(())
}

pub fn train_tokenizer_cmd(cfg: &RunConfig, epochs: Option<usize>) -> CliResult {
    let data = kept(cfg)?;
    prepare_out(cfg)?;
    let mut tcfg = cfg.tokenizer.clone();
    if let Some(e) = epochs {
        tcfg.epochs = e;
    }
    let poses: Vec<_> = data.iter().map(|t| t.pose.clone()).collect();
    let trained = match train_tokenizer(&poses, &tcfg) {
        Ok(t) => t,
        Err(Error::Divergence { epoch, last_good }) => {
            return Err(diverged(cfg, "tokenizer", epoch, &last_good))
        }
        Err(e) => return Err(e.into()),
    };
    trained.params.to_checkpoint()?.save(cfg.path(TOKENIZER))?;
    let mut w = csv::Writer::from_path(cfg.path(TOKENIZER_LOG))?;
    w.write_record([
        "epoch",
        "reconstruction",
        "codebook",
        "commitment",
        "total",
        "roundtrip_mse",
    ])?;
    for e in &trained.log {
        w.write_record([
            e.epoch.to_string(),
            e.reconstruction.to_string(),
            e.codebook.to_string(),
            e.commitment.to_string(),
            (e.reconstruction + e.codebook + e.commitment).to_string(),
            e.roundtrip_mse.to_string(),
        ])?;
    }
    w.flush()?;
    let used = trained
        .params
        .codebook
        .usage_counts
        .iter()
        .filter(|&&n| n > 0)
        .count();
    let best = trained
        .log
        .last()
        .map_or(f64::NAN, |e| e.best_roundtrip_mse);
    println!(
        "tokenizer: {} poses, {} epochs, best round-trip mse {best:.3e}, {used}/{} codes used",
        poses.len(),
        tcfg.epochs,
        tcfg.codebook_size
    );
    println!("wrote {}", cfg.path(TOKENIZER).display());
    Ok(())
}

fn load_tokenizer(cfg: &RunConfig) -> CliResult<TokenizerParams> {
    let path = cfg.path(TOKENIZER);
    require(&path, "tokenizer checkpoint")?;
    Ok(TokenizerParams::from_checkpoint(&Checkpoint::load(&path)?)?)
}

fn load_reasoner(path: &Path) -> CliResult<ReasonerState> {
    require(path, "reasoner checkpoint")?;
    Ok(ReasonerState::from_checkpoint(&Checkpoint::load(path)?)?)
}

pub fn train_model(cfg: &RunConfig, epochs: Option<usize>, base: Option<PathBuf>) -> CliResult {
    let data = kept(cfg)?;
    let tokenizer = load_tokenizer(cfg)?;
    let base = base.map(|p| load_reasoner(&p)).transpose()?;
    let mut tcfg = cfg.train_config();
    if let Some(e) = epochs {
        tcfg.epochs = e;
    }
    if tcfg.arch.num_queries != tokenizer.num_tokens() {
        return Err(CliError::new(
            exit::VALIDATION,
            format!(
                "model has {} pose queries but the tokenizer emits {} tokens",
                tcfg.arch.num_queries,
                tokenizer.num_tokens()
            ),
        ));
    }
    prepare_out(cfg)?;

    let texts: Vec<&str> = data
        .iter()
        .flat_map(|t| [t.abstract_prompt.as_str(), t.detailed_prompt.as_str()])
        .collect();
    let vocab = SharedVocabulary::build(&texts, tokenizer.codebook_size())?;
    let examples = data
        .iter()
        .map(|t| {
            Example::new(
                &vocab,
                &t.abstract_prompt,
                &t.detailed_prompt,
                tokenizer.encode(&t.pose)?,
            )
        })
        .collect::<posereason::Result<Vec<_>>>()?;

    let result = match base {
        Some(b) => {
            if b.model.vocab_size != vocab.len()
                || b.model.codebook_size != tokenizer.codebook_size()
            {
                return Err(CliError::new(
                    exit::VALIDATION,
                    "base checkpoint does not match this vocabulary",
                ));
            }
            train_reasoner_from(b.model, &examples, &tcfg)
        }
        None => train_reasoner(&examples, vocab.len(), tokenizer.codebook_size(), &tcfg),
    };
    let trained = match result {
        Ok(t) => t,
        Err(Error::Divergence { epoch, last_good }) => {
            return Err(diverged(cfg, "reasoner", epoch, &last_good))
        }
        Err(e) => return Err(e.into()),
    };
    vocab.save(cfg.path(VOCAB))?;
    trained.state.to_checkpoint()?.save(cfg.path(REASONER))?;
    let mut w = csv::Writer::from_path(cfg.path(TRAIN_LOG))?;
    w.write_record(["epoch", "L_text", "L_pose", "total"])?;
    for e in &trained.log {
        w.write_record([
            e.epoch.to_string(),
            e.text_loss.to_string(),
            e.pose_loss.to_string(),
            e.total.to_string(),
        ])?;
    }
    w.flush()?;
    if let Some(last) = trained.log.last() {
        println!(
            "reasoner ({}): {} examples, {} epochs, L_text {:.4}, L_pose {:.4}",
            cfg.ablation.label(),
            examples.len(),
            tcfg.epochs,
            last.text_loss,
            last.pose_loss
        );
    }
    println!("wrote {}", cfg.path(REASONER).display());
    Ok(())
}

struct Loaded {
    state: ReasonerState,
    vocab: SharedVocabulary,
    tokenizer: TokenizerParams,
    skeleton: Skeleton,
}

impl Loaded {
    fn from(cfg: &RunConfig) -> CliResult<Self> {
        let tokenizer = load_tokenizer(cfg)?;
        let state = load_reasoner(&cfg.path(REASONER))?;
        require(&cfg.path(VOCAB), "vocabulary")?;
        let vocab = SharedVocabulary::load(cfg.path(VOCAB))?;
        Ok(Self {
            state,
            vocab,
            tokenizer,
            skeleton: Skeleton::standard(),
        })
    }

    fn generator(&self, cfg: &RunConfig) -> Generator<'_> {
        Generator {
            state: &self.state,
            vocab: &self.vocab,
            tokenizer: &self.tokenizer,
            skeleton: &self.skeleton,
            config: cfg.generate.clone(),
        }
    }
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

pub fn generate(
    cfg: &RunConfig,
    prompt: &str,
    output: Option<PathBuf>,
    svg: bool,
    obj: bool,
) -> CliResult {
    if prompt.trim().is_empty() {
        return Err(CliError::new(exit::VALIDATION, "prompt is empty"));
    }
    let loaded = Loaded::from(cfg)?;
    prepare_out(cfg)?;
    let result = loaded.generator(cfg).generate(prompt)?;
    let path = output.unwrap_or_else(|| cfg.path(GENERATION));
    std::fs::write(&path, result.to_json()?)?;
    println!("{}", result.detailed_prompt);
    println!("{} pose tokens", result.pose_tokens.len());
    println!("wrote {}", path.display());
    if svg {
        let p = sibling(&path, "svg");
        std::fs::write(&p, to_svg(&result.joints, &loaded.skeleton, 400.0)?)?;
        println!("wrote {}", p.display());
    }
    if obj {
        let p = sibling(&path, "obj");
        std::fs::write(&p, to_obj(&result.joints, &loaded.skeleton)?)?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, method: Option<String>, ablation_table: bool) -> CliResult {
    let mut data = kept(cfg)?;
    if let Some(n) = cfg.limit {
        data.truncate(n);
    }
    let loaded = Loaded::from(cfg)?;
    prepare_out(cfg)?;
    let generator = loaded.generator(cfg);
    let mut samples = Vec::new();
    let mut failed = Vec::new();
    for t in &data {
        match generator.generate(&t.abstract_prompt) {
            Ok(r) => samples.push(EvalSample {
                id: t.id.clone(),
                gt_pose: t.pose.clone(),
                gt_text: t.detailed_prompt.clone(),
                pred_pose: r.pose,
                pred_text: r.detailed_prompt,
            }),
            Err(e) => {
                log::warn!("{}: {e}", t.id);
                failed.push(t.id.clone());
            }
        }
    }
    if samples.is_empty() {
        return Err(CliError::new(
            exit::FAILURE,
            "generation failed for every sample",
        ));
    }
    let evaluator = Evaluator::for_samples(
        &samples,
        &cfg.evaluate.pose_encoder,
        &cfg.evaluate.text_encoder,
    )?;
    let mut report = evaluator.evaluate(&samples)?;
    report.failed = failed;
    std::fs::write(cfg.path(METRICS), report.to_json()?)?;

    let extended = ablation_table || cfg.ablation != Ablation::Full;
    let method = method.unwrap_or_else(|| match cfg.ablation {
        Ablation::Full => "Ours".into(),
        a => a.label().into(),
    });
    println!("{}", table_header(extended));
    println!("{}", report.table_row(&method, extended));
    println!(
        "{} samples, {} failed",
        report.n_samples,
        report.failed.len()
    );
    println!("wrote {}", cfg.path(METRICS).display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Obj,
    Svg,
}

pub fn export(
    cfg: &RunConfig,
    input: Option<PathBuf>,
    format: Format,
    output: Option<PathBuf>,
) -> CliResult {
    let input = input.unwrap_or_else(|| cfg.path(GENERATION));
    require(&input, "generation result")?;
    let result = GenerationResult::from_json(&std::fs::read_to_string(&input)?)?;
    let skel = Skeleton::standard();
    let joints = forward_kinematics(&result.pose, &skel)?;
    let (ext, body) = match format {
        Format::Obj => ("obj", to_obj(&joints, &skel)?),
        Format::Svg => ("svg", to_svg(&joints, &skel, 400.0)?),
    };
    let output = output.unwrap_or_else(|| sibling(&input, ext));
    std::fs::write(&output, body)?;
    println!("wrote {}", output.display());
    Ok(())
}
