use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::template::{build_dual_texts, build_single_text, fit_longest_first, fit_single_budget, truncate_knowledge, KNOWLEDGE_MAX_TOKENS};
use super::{EncodingError, Tokenizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// One encoder reads document, target and knowledge together.
    Single,
    /// A domain encoder reads (document, target); a second encoder reads the knowledge.
    Dual,
}

/// One token stream. `mask` is 1 on every position; padding is added at
/// batch collation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedStream {
    pub ids: Vec<u32>,
    pub type_ids: Vec<u32>,
    pub mask: Vec<u32>,
    /// Content (non-boundary) span of each segment.
    pub spans: Vec<(usize, usize)>,
}

impl EncodedStream {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn segment(&self, i: usize) -> &[u32] {
        let (s, e) = self.spans[i];
        &self.ids[s..e]
    }
}

/// Model-ready input for one example: one stream for the single variant,
/// (pair, knowledge) for the dual variant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInput {
    pub variant: Variant,
    pub streams: Vec<EncodedStream>,
}

impl EncodedInput {
    pub fn lengths(&self) -> Vec<usize> {
        self.streams.iter().map(EncodedStream::len).collect()
    }

    pub fn pair_stream(&self) -> &EncodedStream {
        &self.streams[0]
    }

    pub fn knowledge_stream(&self) -> Option<&EncodedStream> {
        self.streams.get(1)
    }
}

/// Right-padded batch of one stream position across examples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamBatch {
    pub ids: Vec<u32>,
    pub type_ids: Vec<u32>,
    pub mask: Vec<u32>,
    pub batch: usize,
    pub len: usize,
}

/// Pads stream `stream` of every input to the longest one in the batch.
pub fn collate(inputs: &[&EncodedInput], stream: usize, pad_id: u32) -> StreamBatch {
    let len = inputs.iter().map(|x| x.streams[stream].len()).max().unwrap_or(0);
    let mut out = StreamBatch {
        ids: Vec::with_capacity(len * inputs.len()),
        type_ids: Vec::with_capacity(len * inputs.len()),
        mask: Vec::with_capacity(len * inputs.len()),
        batch: inputs.len(),
        len,
    };
    for x in inputs {
        let s = &x.streams[stream];
        let padding = len - s.len();
        out.ids.extend_from_slice(&s.ids);
        out.ids.extend(std::iter::repeat_n(pad_id, padding));
        out.type_ids.extend_from_slice(&s.type_ids);
        out.type_ids.extend(std::iter::repeat_n(0, padding));
        out.mask.extend_from_slice(&s.mask);
        out.mask.extend(std::iter::repeat_n(0, padding));
    }
    out
}

#[derive(Clone)]
pub struct StreamTokenizer {
    pub tokenizer: Arc<dyn Tokenizer>,
    pub max_positions: usize,
}

/// Turns (document, target, knowledge) triples into token streams for a
/// model variant.
#[derive(Clone)]
pub struct InputEncoder {
    variant: Variant,
    pair: StreamTokenizer,
    knowledge: Option<StreamTokenizer>,
    knowledge_max_tokens: usize,
}

impl InputEncoder {
    pub fn single(tokenizer: Arc<dyn Tokenizer>, max_positions: usize) -> Self {
        Self {
            variant: Variant::Single,
            pair: StreamTokenizer { tokenizer, max_positions },
            knowledge: None,
            knowledge_max_tokens: KNOWLEDGE_MAX_TOKENS,
        }
    }

    pub fn dual(
        pair_tokenizer: Arc<dyn Tokenizer>,
        pair_max_positions: usize,
        knowledge_tokenizer: Arc<dyn Tokenizer>,
        knowledge_max_positions: usize,
    ) -> Self {
        Self {
            variant: Variant::Dual,
            pair: StreamTokenizer { tokenizer: pair_tokenizer, max_positions: pair_max_positions },
            knowledge: Some(StreamTokenizer { tokenizer: knowledge_tokenizer, max_positions: knowledge_max_positions }),
            knowledge_max_tokens: KNOWLEDGE_MAX_TOKENS,
        }
    }

    /// Cap on knowledge content tokens, before boundary tokens.
    pub fn with_knowledge_max_tokens(mut self, n: usize) -> Self {
        self.knowledge_max_tokens = n.max(1);
        self
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn knowledge_max_tokens(&self) -> usize {
        self.knowledge_max_tokens
    }

    /// Padding id of each stream.
    pub fn pad_ids(&self) -> Vec<u32> {
        let mut out = vec![self.pair.tokenizer.specials().pad];
        if let Some(k) = &self.knowledge {
            out.push(k.tokenizer.specials().pad);
        }
        out
    }

    pub fn encode(&self, document: &str, target: &str, knowledge: &str) -> Result<EncodedInput, EncodingError> {
        match (&self.variant, &self.knowledge) {
            (Variant::Single, _) => {
                let seg = build_single_text(document, target, knowledge)?;
                let tok = &self.pair.tokenizer;
                let specials = tok.specials();
                let first = tok.encode(&seg.first)?;
                let second = tok.encode(&seg.second)?;
                let second = truncate_knowledge(&second, self.knowledge_max_tokens);
                let (first, second) = fit_single_budget(&first, second, self.pair.max_positions, specials.count(true))?;
                let a = specials.assemble(&first, Some(&second));
                Ok(EncodedInput { variant: Variant::Single, streams: vec![stream(a)] })
            }
            (Variant::Dual, Some(know)) => {
                let texts = build_dual_texts(document, target, knowledge)?;
                let pair_tok = &self.pair.tokenizer;
                let pair_specials = pair_tok.specials();
                let d = pair_tok.encode(&texts.pair.0)?;
                let t = pair_tok.encode(&texts.pair.1)?;
                let (d, t) = fit_longest_first(&d, &t, self.pair.max_positions, pair_specials.count(true))?;
                let pair = pair_specials.assemble(&d, Some(&t));

                let know_specials = know.tokenizer.specials();
                let room = know.max_positions.checked_sub(know_specials.count(false)).filter(|&r| r >= 1).ok_or(
                    EncodingError::BudgetImpossible { model_max: know.max_positions, needed: know_specials.count(false) + 1 },
                )?;
                let w = know.tokenizer.encode(&texts.knowledge)?;
                let w = truncate_knowledge(&w, self.knowledge_max_tokens.min(room));
                let k = know_specials.assemble(w, None);
                Ok(EncodedInput { variant: Variant::Dual, streams: vec![stream(pair), stream(k)] })
            }
            (Variant::Dual, None) => unreachable!("dual encoder always has a knowledge tokenizer"),
        }
    }

    /// Detokenized streams, boundary tokens included, for debugging.
    pub fn describe(&self, input: &EncodedInput) -> Result<Vec<String>, EncodingError> {
        let toks = std::iter::once(&self.pair).chain(self.knowledge.as_ref());
        input
            .streams
            .iter()
            .zip(toks)
            .map(|(s, t)| {
                let sp = t.tokenizer.specials();
                let mut parts = Vec::new();
                let mut cursor = 0;
                for &(start, end) in &s.spans {
                    parts.extend(s.ids[cursor..start].iter().map(|&id| special_name(id, &sp)));
                    parts.push(t.tokenizer.decode(&s.ids[start..end])?);
                    cursor = end;
                }
                parts.extend(s.ids[cursor..].iter().map(|&id| special_name(id, &sp)));
                Ok(parts.join(" "))
            })
            .collect()
    }

    /// Decoded first segment of the first stream, without boundary tokens.
    pub fn first_segment_text(&self, input: &EncodedInput) -> Result<String, EncodingError> {
        self.pair.tokenizer.decode(input.pair_stream().segment(0))
    }
}

fn special_name(id: u32, sp: &super::SpecialTokens) -> String {
    match sp.style {
        super::SpecialStyle::Bert if id == sp.cls => "[CLS]".into(),
        super::SpecialStyle::Bert if id == sp.sep => "[SEP]".into(),
        super::SpecialStyle::Roberta if id == sp.cls => "<s>".into(),
        super::SpecialStyle::Roberta if id == sp.sep => "</s>".into(),
        _ => format!("<{id}>"),
    }
}

fn stream(a: super::Assembled) -> EncodedStream {
    EncodedStream { mask: vec![1; a.ids.len()], ids: a.ids, type_ids: a.type_ids, spans: a.spans }
}
