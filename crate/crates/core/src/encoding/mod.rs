//! Input construction for both model variants: text templates, token
//! budgets, boundary tokens and batch padding.

mod input;
mod template;
mod tokenizer;

pub use input::{collate, EncodedInput, EncodedStream, InputEncoder, StreamBatch, StreamTokenizer, Variant};
pub use template::{
    build_dual_texts, build_single_text, fit_longest_first, fit_single_budget, truncate_knowledge, DualTexts, SegmentPair,
    KNOWLEDGE_MAX_TOKENS, MIN_SINGLE_BUDGET, TARGET_INFIX, TEXT_PREFIX,
};
pub use tokenizer::{Assembled, ByteTokenizer, HfTokenizer, SpecialStyle, SpecialTokens, Tokenizer, TokenizerSpec};

#[derive(Debug, thiserror::Error)]
pub enum EncodingError {
    #[error("{0} is empty")]
    EmptyField(&'static str),
    #[error("position limit {model_max} too small, need at least {needed}")]
    BudgetImpossible { model_max: usize, needed: usize },
    #[error("tokenizer: {0}")]
    Tokenizer(String),
}
