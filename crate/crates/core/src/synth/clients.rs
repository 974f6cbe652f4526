use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::caption::{refine_prompt, Captioner};
use super::families::FamilyTable;
use crate::error::{Error, Result};
use crate::geometry::PoseParams;
use crate::registry::Registry;

pub const ABSTRACT_PREFIX: &str = "Generate the pose of ";
const IMAGE_TRIGGER: &str = "Super Realism";
const IMAGE_SUFFIX: &str = "Full body, whole body. From head to feet.";

/// Opaque reference to a synthesized image. The procedural pipeline never
/// renders pixels; the handle just carries the request forward.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageHandle {
    pub id: String,
    pub prompt: String,
    pub category: String,
    pub label: String,
    pub seed: u64,
}

pub trait PromptSource: Send + Sync {
    fn name(&self) -> &str;
    fn abstract_prompt(&self, label: &str) -> Result<String>;
}

pub trait ImageSynthesizer: Send + Sync {
    fn name(&self) -> &str;
    fn synthesize(
        &self,
        abstract_prompt: &str,
        category: &str,
        label: &str,
        seed: u64,
    ) -> Result<ImageHandle>;
}

/// Implementations backed by SMPL-X estimators convert to the 24-joint
/// layout before returning.
pub trait PoseEstimator: Send + Sync {
    fn name(&self) -> &str;
    fn estimate(&self, image: &ImageHandle) -> Result<PoseParams>;
}

pub trait PoseCaptioner: Send + Sync {
    fn name(&self) -> &str;
    fn caption(&self, pose: &PoseParams) -> Result<String>;
}

pub trait PromptRefiner: Send + Sync {
    fn name(&self) -> &str;
    fn refine(&self, caption: &str, label: &str) -> Result<String>;
}

pub struct TemplatePrompt;

impl PromptSource for TemplatePrompt {
    fn name(&self) -> &str {
        "template"
    }

    fn abstract_prompt(&self, label: &str) -> Result<String> {
        if label.trim().is_empty() {
            return Err(Error::InvalidArgument("empty action label".into()));
        }
        Ok(format!("{ABSTRACT_PREFIX}{}", label.trim()))
    }
}

pub struct PassthroughImage;

impl ImageSynthesizer for PassthroughImage {
    fn name(&self) -> &str {
        "passthrough"
    }

    fn synthesize(
        &self,
        abstract_prompt: &str,
        category: &str,
        label: &str,
        seed: u64,
    ) -> Result<ImageHandle> {
        Ok(ImageHandle {
            id: format!("img-{seed:016x}"),
            prompt: format!("{IMAGE_TRIGGER}, {abstract_prompt}. {IMAGE_SUFFIX}"),
            category: category.to_string(),
            label: label.to_string(),
            seed,
        })
    }
}

/// Draws from the pose family the label maps to.
pub struct ProceduralEstimator {
    pub table: FamilyTable,
    pub sigma: f64,
}

impl PoseEstimator for ProceduralEstimator {
    fn name(&self) -> &str {
        "procedural"
    }

    fn estimate(&self, image: &ImageHandle) -> Result<PoseParams> {
        let fam = self.table.resolve(&image.category, &image.label);
        fam.sample(self.sigma, &mut ChaCha8Rng::seed_from_u64(image.seed))
    }
}

pub struct RuleCaptioner(pub Captioner);

impl PoseCaptioner for RuleCaptioner {
    fn name(&self) -> &str {
        "rules"
    }

    fn caption(&self, pose: &PoseParams) -> Result<String> {
        self.0.caption(pose)
    }
}

pub struct TemplateRefiner;

impl PromptRefiner for TemplateRefiner {
    fn name(&self) -> &str {
        "template"
    }

    fn refine(&self, caption: &str, label: &str) -> Result<String> {
        refine_prompt(caption, label)
    }
}

/// Returns the caption unchanged (the unrefined-prompt ablation).
pub struct IdentityRefiner;

impl PromptRefiner for IdentityRefiner {
    fn name(&self) -> &str {
        "identity"
    }

    fn refine(&self, caption: &str, _label: &str) -> Result<String> {
        if caption.trim().is_empty() {
            return Err(Error::InvalidArgument(
                "cannot refine an empty caption".into(),
            ));
        }
        Ok(caption.to_string())
    }
}

/// Fails every call; used to exercise the filtering path.
pub struct Failing {
    pub stage: &'static str,
}

impl Failing {
    fn fail<T>(&self) -> Result<T> {
        Err(Error::Stage {
            stage: self.stage.into(),
            message: "client configured to fail".into(),
        })
    }
}

impl PromptSource for Failing {
    fn name(&self) -> &str {
        "failing"
    }
    fn abstract_prompt(&self, _: &str) -> Result<String> {
        self.fail()
    }
}

impl ImageSynthesizer for Failing {
    fn name(&self) -> &str {
        "failing"
    }
    fn synthesize(&self, _: &str, _: &str, _: &str, _: u64) -> Result<ImageHandle> {
        self.fail()
    }
}

impl PoseEstimator for Failing {
    fn name(&self) -> &str {
        "failing"
    }
    fn estimate(&self, _: &ImageHandle) -> Result<PoseParams> {
        self.fail()
    }
}

impl PoseCaptioner for Failing {
    fn name(&self) -> &str {
        "failing"
    }
    fn caption(&self, _: &PoseParams) -> Result<String> {
        self.fail()
    }
}

impl PromptRefiner for Failing {
    fn name(&self) -> &str {
        "failing"
    }
    fn refine(&self, _: &str, _: &str) -> Result<String> {
        self.fail()
    }
}

/// Request/response channel for remote stage backends.
pub trait JsonTransport: Send + Sync {
    fn post(&self, endpoint: &str, request: &Value) -> Result<Value>;
}

/// Transport backed by a closure; handy for mocks.
pub struct FnTransport<F>(pub F);

impl<F> JsonTransport for FnTransport<F>
where
    F: Fn(&str, &Value) -> Result<Value> + Send + Sync,
{
    fn post(&self, endpoint: &str, request: &Value) -> Result<Value> {
        (self.0)(endpoint, request)
    }
}

/// Stage client that forwards each call as a JSON request.
///
/// Endpoints and payloads: `<base>/image` `{prompt, category, label, seed}` →
/// `{id}`; `<base>/pose` `{image}` → `{pose: [72 floats]}`; `<base>/caption`
/// `{pose}` → `{text}`; `<base>/refine` `{caption, label}` → `{text}`.
pub struct HttpStage {
    pub transport: Arc<dyn JsonTransport>,
    pub base: String,
}

impl HttpStage {
    fn call(&self, stage: &str, request: Value) -> Result<Value> {
        let endpoint = format!("{}/{stage}", self.base.trim_end_matches('/'));
        self.transport
            .post(&endpoint, &request)
            .map_err(|e| Error::Stage {
                stage: stage.into(),
                message: e.to_string(),
            })
    }

    fn field<'a>(stage: &str, v: &'a Value, key: &str) -> Result<&'a Value> {
        v.get(key).ok_or_else(|| Error::Stage {
            stage: stage.into(),
            message: format!("response lacks `{key}`"),
        })
    }

    fn text(stage: &str, v: &Value) -> Result<String> {
        Self::field(stage, v, "text")?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::Stage {
                stage: stage.into(),
                message: "`text` is not a string".into(),
            })
    }
}

impl ImageSynthesizer for HttpStage {
    fn name(&self) -> &str {
        "http"
    }

    fn synthesize(
        &self,
        abstract_prompt: &str,
        category: &str,
        label: &str,
        seed: u64,
    ) -> Result<ImageHandle> {
        let prompt = format!("{IMAGE_TRIGGER}, {abstract_prompt}. {IMAGE_SUFFIX}");
        let v = self.call(
            "image",
            json!({"prompt": prompt, "category": category, "label": label, "seed": seed}),
        )?;
        let id = Self::field("image", &v, "id")?
            .as_str()
            .unwrap_or_default()
            .to_string();
        Ok(ImageHandle {
            id,
            prompt,
            category: category.into(),
            label: label.into(),
            seed,
        })
    }
}

impl PoseEstimator for HttpStage {
    fn name(&self) -> &str {
        "http"
    }

    fn estimate(&self, image: &ImageHandle) -> Result<PoseParams> {
        let v = self.call("pose", json!({ "image": image }))?;
        serde_json::from_value(Self::field("pose", &v, "pose")?.clone()).map_err(|e| Error::Stage {
            stage: "pose".into(),
            message: e.to_string(),
        })
    }
}

impl PoseCaptioner for HttpStage {
    fn name(&self) -> &str {
        "http"
    }

    fn caption(&self, pose: &PoseParams) -> Result<String> {
        let v = self.call("caption", json!({ "pose": pose }))?;
        Self::text("caption", &v)
    }
}

impl PromptRefiner for HttpStage {
    fn name(&self) -> &str {
        "http"
    }

    fn refine(&self, caption: &str, label: &str) -> Result<String> {
        let v = self.call("refine", json!({"caption": caption, "label": label}))?;
        Self::text("refine", &v)
    }
}

/// Registry key per stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientNames {
    pub prompt: String,
    pub image: String,
    pub pose: String,
    pub caption: String,
    pub refine: String,
}

impl Default for ClientNames {
    fn default() -> Self {
        Self {
            prompt: "template".into(),
            image: "passthrough".into(),
            pose: "procedural".into(),
            caption: "rules".into(),
            refine: "template".into(),
        }
    }
}

/// Everything a client factory may need.
#[derive(Clone)]
pub struct StageContext {
    pub sigma: f64,
    pub families: FamilyTable,
    pub transport: Option<Arc<dyn JsonTransport>>,
    pub endpoint: String,
}

impl Default for StageContext {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            families: FamilyTable::standard(),
            transport: None,
            endpoint: "mock://stages".into(),
        }
    }
}

impl StageContext {
    fn http(&self) -> Result<HttpStage> {
        let transport = self.transport.clone().ok_or_else(|| {
            Error::InvalidArgument("http client requested without a transport".into())
        })?;
        Ok(HttpStage {
            transport,
            base: self.endpoint.clone(),
        })
    }
}

pub fn prompt_registry() -> Registry<StageContext, dyn PromptSource> {
    let mut r: Registry<StageContext, dyn PromptSource> = Registry::new("prompt source");
    r.register("template", |_: &StageContext| Ok(Box::new(TemplatePrompt)));
    r.register("failing", |_: &StageContext| {
        Ok(Box::new(Failing { stage: "prompt" }))
    });
    r
}

pub fn image_registry() -> Registry<StageContext, dyn ImageSynthesizer> {
    let mut r: Registry<StageContext, dyn ImageSynthesizer> = Registry::new("image synthesizer");
    r.register("passthrough", |_: &StageContext| {
        Ok(Box::new(PassthroughImage))
    });
    r.register("failing", |_: &StageContext| {
        Ok(Box::new(Failing { stage: "image" }))
    });
    r.register("http", |c: &StageContext| Ok(Box::new(c.http()?)));
    r
}

pub fn pose_registry() -> Registry<StageContext, dyn PoseEstimator> {
    let mut r: Registry<StageContext, dyn PoseEstimator> = Registry::new("pose estimator");
    r.register("procedural", |c: &StageContext| {
        Ok(Box::new(ProceduralEstimator {
            table: c.families.clone(),
            sigma: c.sigma,
        }))
    });
    r.register("failing", |_: &StageContext| {
        Ok(Box::new(Failing { stage: "pose" }))
    });
    r.register("http", |c: &StageContext| Ok(Box::new(c.http()?)));
    r
}

pub fn caption_registry() -> Registry<StageContext, dyn PoseCaptioner> {
    let mut r: Registry<StageContext, dyn PoseCaptioner> = Registry::new("pose captioner");
    r.register("rules", |_: &StageContext| {
        Ok(Box::new(RuleCaptioner(Captioner::default())))
    });
    r.register("failing", |_: &StageContext| {
        Ok(Box::new(Failing { stage: "caption" }))
    });
    r.register("http", |c: &StageContext| Ok(Box::new(c.http()?)));
    r
}

pub fn refine_registry() -> Registry<StageContext, dyn PromptRefiner> {
    let mut r: Registry<StageContext, dyn PromptRefiner> = Registry::new("prompt refiner");
    r.register("template", |_: &StageContext| Ok(Box::new(TemplateRefiner)));
    r.register("identity", |_: &StageContext| Ok(Box::new(IdentityRefiner)));
    r.register("failing", |_: &StageContext| {
        Ok(Box::new(Failing { stage: "refine" }))
    });
    r.register("http", |c: &StageContext| Ok(Box::new(c.http()?)));
    r
}

/// One client per stage.
pub struct ClientSet {
    pub prompt: Box<dyn PromptSource>,
    pub image: Box<dyn ImageSynthesizer>,
    pub pose: Box<dyn PoseEstimator>,
    pub caption: Box<dyn PoseCaptioner>,
    pub refine: Box<dyn PromptRefiner>,
}

impl ClientSet {
    pub fn build(names: &ClientNames, ctx: &StageContext) -> Result<Self> {
        Ok(Self {
            prompt: prompt_registry().build(&names.prompt, ctx)?,
            image: image_registry().build(&names.image, ctx)?,
            pose: pose_registry().build(&names.pose, ctx)?,
            caption: caption_registry().build(&names.caption, ctx)?,
            refine: refine_registry().build(&names.refine, ctx)?,
        })
    }

    /// The fully procedural default set.
    pub fn procedural() -> Self {
        Self::build(&ClientNames::default(), &StageContext::default()).expect("default clients")
    }
}
