pub mod caption;
pub mod clients;
pub mod families;
pub mod filter;
pub mod taxonomy;
pub mod triplet;

pub use caption::{caption_pose, refine_prompt, CaptionThresholds, Captioner, PoseFacts};
pub use clients::{ClientNames, ClientSet, StageContext, ABSTRACT_PREFIX};
pub use families::{family, FamilyTable, PoseFamily, FAMILIES};
pub use filter::{filter_triplets, merge_review, write_review, FilterOutcome, FilterRules};
pub use taxonomy::{expand_taxonomy, ActionTaxonomy, Category};
pub use triplet::{
    append_jsonl, read_jsonl, synthesize_corpus, synthesize_triplet, write_jsonl, Triplet,
};
