use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EncodingError;

/// Where boundary tokens go when a tokenizer builds model input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecialStyle {
    /// `[CLS] A [SEP]` / `[CLS] A [SEP] B [SEP]`, segment ids 0 then 1.
    Bert,
    /// `<s> A </s>` / `<s> A </s></s> B </s>`, segment ids all 0.
    Roberta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub style: SpecialStyle,
    pub cls: u32,
    pub sep: u32,
    pub pad: u32,
}

/// Token ids with segment ids and the content span of each segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assembled {
    pub ids: Vec<u32>,
    pub type_ids: Vec<u32>,
    pub spans: Vec<(usize, usize)>,
}

impl SpecialTokens {
    /// Boundary tokens added around one segment or a pair.
    pub fn count(&self, pair: bool) -> usize {
        match (self.style, pair) {
            (_, false) => 2,
            (SpecialStyle::Bert, true) => 3,
            (SpecialStyle::Roberta, true) => 4,
        }
    }

    pub fn assemble(&self, a: &[u32], b: Option<&[u32]>) -> Assembled {
        let mut ids = Vec::with_capacity(a.len() + b.map_or(0, <[u32]>::len) + self.count(b.is_some()));
        let mut type_ids = Vec::with_capacity(ids.capacity());
        let mut spans = Vec::new();
        ids.push(self.cls);
        let a_start = ids.len();
        ids.extend_from_slice(a);
        spans.push((a_start, ids.len()));
        ids.push(self.sep);
        type_ids.resize(ids.len(), 0);
        if let Some(b) = b {
            let second_type = match self.style {
                SpecialStyle::Bert => 1,
                SpecialStyle::Roberta => {
                    ids.push(self.sep);
                    type_ids.push(0);
                    0
                }
            };
            let b_start = ids.len();
            ids.extend_from_slice(b);
            spans.push((b_start, ids.len()));
            ids.push(self.sep);
            type_ids.resize(ids.len(), second_type);
        }
        Assembled { ids, type_ids, spans }
    }
}

/// Text ↔ token id conversion without boundary tokens; boundaries are added
/// by [`SpecialTokens::assemble`] following the tokenizer's own convention.
pub trait Tokenizer: Send + Sync {
    fn encode(&self, text: &str) -> Result<Vec<u32>, EncodingError>;
    fn decode(&self, ids: &[u32]) -> Result<String, EncodingError>;
    fn specials(&self) -> SpecialTokens;
    fn vocab_size(&self) -> usize;
    /// Serializable description, enough to rebuild the tokenizer.
    fn spec(&self) -> TokenizerSpec;
}

/// Reversible byte-level tokenizer: ids 0–2 are pad/cls/sep, each byte `b`
/// maps to `b + 3`. Used with small randomly initialized encoders.
#[derive(Debug, Clone, Copy)]
pub struct ByteTokenizer {
    style: SpecialStyle,
}

impl ByteTokenizer {
    pub const PAD: u32 = 0;
    pub const CLS: u32 = 1;
    pub const SEP: u32 = 2;
    const OFFSET: u32 = 3;
    pub const VOCAB_SIZE: usize = 256 + Self::OFFSET as usize;

    pub fn new(style: SpecialStyle) -> Self {
        Self { style }
    }
}

impl Default for ByteTokenizer {
    fn default() -> Self {
        Self::new(SpecialStyle::Bert)
    }
}

impl Tokenizer for ByteTokenizer {
    fn encode(&self, text: &str) -> Result<Vec<u32>, EncodingError> {
        Ok(text.bytes().map(|b| b as u32 + Self::OFFSET).collect())
    }

    fn decode(&self, ids: &[u32]) -> Result<String, EncodingError> {
        let bytes = ids
            .iter()
            .filter(|&&id| id >= Self::OFFSET)
            .map(|&id| u8::try_from(id - Self::OFFSET).map_err(|_| EncodingError::Tokenizer(format!("id {id} out of range"))))
            .collect::<Result<Vec<u8>, _>>()?;
        // truncation may split a multi-byte character
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    fn specials(&self) -> SpecialTokens {
        SpecialTokens { style: self.style, cls: Self::CLS, sep: Self::SEP, pad: Self::PAD }
    }

    fn vocab_size(&self) -> usize {
        Self::VOCAB_SIZE
    }

    fn spec(&self) -> TokenizerSpec {
        TokenizerSpec::Bytes { style: self.style }
    }
}

/// A pretrained tokenizer loaded from a `tokenizer.json` file.
pub struct HfTokenizer {
    inner: tokenizers::Tokenizer,
    specials: SpecialTokens,
    path: PathBuf,
}

impl HfTokenizer {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, EncodingError> {
        let path = path.as_ref();
        let inner = tokenizers::Tokenizer::from_file(path)
            .map_err(|e| EncodingError::Tokenizer(format!("{}: {e}", path.display())))?;
        let id = |tok: &str| inner.token_to_id(tok);
        let specials = match (id("[CLS]"), id("[SEP]"), id("[PAD]")) {
            (Some(cls), Some(sep), Some(pad)) => SpecialTokens { style: SpecialStyle::Bert, cls, sep, pad },
            _ => match (id("<s>"), id("</s>"), id("<pad>")) {
                (Some(cls), Some(sep), Some(pad)) => SpecialTokens { style: SpecialStyle::Roberta, cls, sep, pad },
                _ => {
                    return Err(EncodingError::Tokenizer(format!(
                        "{}: no [CLS]/[SEP]/[PAD] or <s>/</s>/<pad> tokens",
                        path.display()
                    )))
                }
            },
        };
        Ok(Self { inner, specials, path: path.to_path_buf() })
    }
}

impl Tokenizer for HfTokenizer {
    fn encode(&self, text: &str) -> Result<Vec<u32>, EncodingError> {
        let enc = self.inner.encode(text, false).map_err(|e| EncodingError::Tokenizer(e.to_string()))?;
        Ok(enc.get_ids().to_vec())
    }

    fn decode(&self, ids: &[u32]) -> Result<String, EncodingError> {
        self.inner.decode(ids, false).map_err(|e| EncodingError::Tokenizer(e.to_string()))
    }

    fn specials(&self) -> SpecialTokens {
        self.specials
    }

    fn vocab_size(&self) -> usize {
        self.inner.get_vocab_size(true)
    }

    fn spec(&self) -> TokenizerSpec {
        TokenizerSpec::File { path: self.path.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TokenizerSpec {
    Bytes { style: SpecialStyle },
    File { path: PathBuf },
}

impl TokenizerSpec {
    pub fn build(&self) -> Result<Box<dyn Tokenizer>, EncodingError> {
        Ok(match self {
            TokenizerSpec::Bytes { style } => Box::new(ByteTokenizer::new(*style)),
            TokenizerSpec::File { path } => Box::new(HfTokenizer::from_file(path)?),
        })
    }
}
