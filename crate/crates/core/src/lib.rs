//! Verifiable multi-aspect rewards for structured multilingual
//! chain-of-thought output, the group-relative (GRPO) objective, a verified
//! CoT curation loop and a desk-scale toy trainer.
//!
//! Module map:
//!
//! * [`document`]: parse/serialize the four-stage reasoning format;
//! * [`reward`]: language, count, answer and format rewards and their
//!   weighted total;
//! * [`grpo`]: group advantages, clipped surrogate, KL penalty;
//! * [`curation`]: generate/evaluate/locate/correct with audit trails;
//! * [`toy`]: softmax-policy GRPO on a synthetic task;
//! * [`config`]: the single declarative config file;
//! * [`batch`]: batch entry points shared by the CLI and bindings.

pub mod batch;
pub mod config;
pub mod curation;
pub mod document;
pub mod grpo;
pub mod language;
pub mod levenshtein;
pub mod reward;
pub mod toy;

pub use document::{
    check_format, parse_document, serialize_document, BBox, BBoxSegment, CoTDocument, FormatMode,
    ParseFailure, TagPair, TagSet,
};
pub use grpo::{
    clipped_surrogate, group_advantages, grpo_objective, kl_penalty, GroupSample, GrpoConfig,
    GrpoError, PolicyGroup,
};
pub use language::LanguageCode;
pub use levenshtein::edit_distance;
pub use reward::{
    answer_reward, count_reward, format_reward, language_reward, score_record, CountMode,
    CountPair, RewardReport, RewardWeights, Scorer, ScoringTarget,
};
