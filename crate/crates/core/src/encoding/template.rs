use super::EncodingError;

pub const TEXT_PREFIX: &str = "Text: ";
pub const TARGET_INFIX: &str = " Target: ";

/// Default cap on knowledge content tokens.
pub const KNOWLEDGE_MAX_TOKENS: usize = 512;

/// The two text segments of a single-encoder input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentPair {
    /// `Text: {document} Target: {target}`
    pub first: String,
    /// The knowledge text.
    pub second: String,
}

/// Texts for the dual-encoder variant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualTexts {
    /// Document and target, encoded as a sequence pair by the domain encoder.
    pub pair: (String, String),
    /// Knowledge, encoded alone by the general encoder.
    pub knowledge: String,
}

fn require(value: &str, field: &'static str) -> Result<(), EncodingError> {
    if value.trim().is_empty() {
        Err(EncodingError::EmptyField(field))
    } else {
        Ok(())
    }
}

/// Merges document and target into the first segment; knowledge is the
/// second. Once the tokenizer adds boundaries the stream reads
/// `[CLS] Text: d Target: t [SEP] w [SEP]`.
pub fn build_single_text(document: &str, target: &str, knowledge: &str) -> Result<SegmentPair, EncodingError> {
    require(document, "document")?;
    require(target, "target")?;
    require(knowledge, "knowledge")?;
    Ok(SegmentPair { first: format!("{TEXT_PREFIX}{document}{TARGET_INFIX}{target}"), second: knowledge.to_string() })
}

pub fn build_dual_texts(document: &str, target: &str, knowledge: &str) -> Result<DualTexts, EncodingError> {
    require(document, "document")?;
    require(target, "target")?;
    require(knowledge, "knowledge")?;
    Ok(DualTexts { pair: (document.to_string(), target.to_string()), knowledge: knowledge.to_string() })
}

/// Keeps the first `max` tokens.
pub fn truncate_knowledge(tokens: &[u32], max: usize) -> &[u32] {
    debug_assert!(max >= 1);
    &tokens[..tokens.len().min(max)]
}

/// Smallest position limit for which the single-encoder budget can be met.
pub const MIN_SINGLE_BUDGET: usize = 8;

/// Fits two segments plus `specials` boundary tokens into `model_max`
/// positions. The second (knowledge) segment is cut first; the first is only
/// cut once the second is down to one token. Neither drops below one token.
pub fn fit_single_budget(
    first: &[u32],
    second: &[u32],
    model_max: usize,
    specials: usize,
) -> Result<(Vec<u32>, Vec<u32>), EncodingError> {
    if model_max < MIN_SINGLE_BUDGET || model_max < specials + 2 {
        return Err(EncodingError::BudgetImpossible { model_max, needed: MIN_SINGLE_BUDGET.max(specials + 2) });
    }
    if first.is_empty() {
        return Err(EncodingError::EmptyField("first segment"));
    }
    if second.is_empty() {
        return Err(EncodingError::EmptyField("second segment"));
    }
    let budget = model_max - specials;
    if first.len() + second.len() <= budget {
        return Ok((first.to_vec(), second.to_vec()));
    }
    let keep_second = budget.saturating_sub(first.len()).max(1).min(second.len());
    let keep_first = first.len().min(budget - keep_second);
    Ok((first[..keep_first].to_vec(), second[..keep_second].to_vec()))
}

/// Fits a pair by repeatedly trimming whichever segment is longer, the
/// usual convention for (document, target) pairs.
pub fn fit_longest_first(
    first: &[u32],
    second: &[u32],
    model_max: usize,
    specials: usize,
) -> Result<(Vec<u32>, Vec<u32>), EncodingError> {
    if model_max < specials + 2 {
        return Err(EncodingError::BudgetImpossible { model_max, needed: specials + 2 });
    }
    let budget = model_max - specials;
    let (mut a, mut b) = (first.len(), second.len());
    while a + b > budget {
        if a >= b {
            a -= 1;
        } else {
            b -= 1;
        }
    }
    Ok((first[..a].to_vec(), second[..b].to_vec()))
}
