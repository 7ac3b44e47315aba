//! Closed-vocabulary word tokenizer with numeric payload tokens.
//!
//! Words are split on whitespace and ASCII punctuation. Every `<num>` marker
//! in a sentence becomes the reserved `NUM` id carrying a zero-padded patch of
//! `PATCH_WIDTH` raw values.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{SentenceWithSlots, NUM_PLACEHOLDER};

pub const PATCH_WIDTH: usize = 8;
pub const MAX_SEQUENCE: usize = 512;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const NUM: u32 = 3;
/// Separates the prompt from the text target.
pub const SEP_TEXT: u32 = 4;
pub const SPECIAL_TOKENS: [&str; 5] = ["<pad>", "<bos>", "<eos>", NUM_PLACEHOLDER, "<text>"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TokenizerError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(String),
    #[error("sentence has {markers} numeric markers but {slots} slots")]
    SlotMismatch { markers: usize, slots: usize },
    #[error("slot {slot} holds {len} values, more than the patch width")]
    PatchOverflow { slot: usize, len: usize },
    #[error("token id {0} is out of range")]
    InvalidId(u32),
    #[error("sequence of {len} tokens exceeds the limit of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("vocabulary file: {0}")]
    Format(String),
}

/// Splits text into word tokens. `<num>` markers are kept whole.
pub fn split_words(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        if chunk == NUM_PLACEHOLDER {
            out.push(chunk);
            continue;
        }
        let mut start = 0;
        for (i, c) in chunk.char_indices() {
            if c.is_ascii_punctuation() {
                if start < i {
                    out.push(&chunk[start..i]);
                }
                out.push(&chunk[i..i + 1]);
                start = i + 1;
            }
        }
        if start < chunk.len() {
            out.push(&chunk[start..]);
        }
    }
    out
}

/// Canonical spacing: tokens joined by single spaces.
pub fn canonical(text: &str) -> String {
    split_words(text).join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabEntry {
    token: String,
    id: u32,
    special: bool,
}

impl Vocab {
    /// Specials first, then corpus words by descending frequency and
    /// lexicographic order.
    pub fn build<'a, I>(corpus: I) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut seen_any = false;
        for text in corpus {
            seen_any = true;
            for w in split_words(text) {
                if !SPECIAL_TOKENS.contains(&w) {
                    *counts.entry(w).or_default() += 1;
                }
            }
        }
        if !seen_any || counts.is_empty() {
            return Err(TokenizerError::EmptyCorpus);
        }
        let mut words: Vec<(&str, usize)> = counts.into_iter().collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens = SPECIAL_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(words.into_iter().map(|(w, _)| w.to_string()))
            .collect();
        Ok(Self::from_tokens(tokens))
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Result<u32, TokenizerError> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| TokenizerError::UnknownToken(token.to_string()))
    }

    pub fn token(&self, id: u32) -> Result<&str, TokenizerError> {
        self.tokens
            .get(id as usize)
            .map(|s| s.as_str())
            .ok_or(TokenizerError::InvalidId(id))
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < SPECIAL_TOKENS.len()
    }

    /// Word ids of `text`; `<num>` maps to `NUM`.
    pub fn encode_words(&self, text: &str) -> Result<Vec<u32>, TokenizerError> {
        split_words(text).into_iter().map(|w| self.id(w)).collect()
    }

    pub fn to_json(&self) -> String {
        let entries: Vec<VocabEntry> = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| VocabEntry {
                token: t.clone(),
                id: i as u32,
                special: Self::is_special(i as u32),
            })
            .collect();
        serde_json::to_string_pretty(&entries).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TokenizerError> {
        let entries: Vec<VocabEntry> =
            serde_json::from_str(text).map_err(|e| TokenizerError::Format(e.to_string()))?;
        for (i, e) in entries.iter().enumerate() {
            if e.id as usize != i {
                return Err(TokenizerError::Format(format!("id {} at position {i}", e.id)));
            }
        }
        for (i, s) in SPECIAL_TOKENS.iter().enumerate() {
            if entries.get(i).map(|e| e.token.as_str()) != Some(*s) {
                return Err(TokenizerError::Format(format!("missing special token {s}")));
            }
        }
        Ok(Self::from_tokens(entries.into_iter().map(|e| e.token).collect()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    Prompt,
    TextTarget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    /// `(position, patch)` for every `NUM` id, in position order.
    pub payloads: Vec<(usize, [f64; PATCH_WIDTH])>,
    pub segments: Vec<Segment>,
    /// Number of leading `Prompt` positions (BOS through SEP_TEXT).
    pub prompt_len: usize,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Ids of the text target, EOS included.
    pub fn target_ids(&self) -> &[u32] {
        &self.ids[self.prompt_len..]
    }

    /// The prompt alone, as used at inference time.
    pub fn prompt(&self) -> TokenSequence {
        TokenSequence {
            ids: self.ids[..self.prompt_len].to_vec(),
            payloads: self.payloads.iter().filter(|(p, _)| *p < self.prompt_len).cloned().collect(),
            segments: self.segments[..self.prompt_len].to_vec(),
            prompt_len: self.prompt_len,
        }
    }
}

fn patch(values: &[f64]) -> [f64; PATCH_WIDTH] {
    let mut p = [0.0; PATCH_WIDTH];
    p[..values.len()].copy_from_slice(values);
    p
}

/// Builds `BOS prompt SEP_TEXT [target EOS]`. Without a target the sequence
/// ends at `SEP_TEXT`.
pub fn encode_multimodal(
    sentence: &SentenceWithSlots,
    target_text: Option<&str>,
    vocab: &Vocab,
) -> Result<TokenSequence, TokenizerError> {
    let markers = sentence.placeholder_count();
    if markers != sentence.slots.len() {
        return Err(TokenizerError::SlotMismatch {
            markers,
            slots: sentence.slots.len(),
        });
    }
    let mut ids = vec![BOS];
    let mut payloads = Vec::with_capacity(markers);
    let mut slots = sentence.slots.iter().enumerate();
    for w in split_words(&sentence.text) {
        let id = vocab.id(w)?;
        if id == NUM {
            let (k, slot) = slots.next().expect("marker count checked");
            if slot.values.len() > PATCH_WIDTH {
                return Err(TokenizerError::PatchOverflow {
                    slot: k,
                    len: slot.values.len(),
                });
            }
            payloads.push((ids.len(), patch(&slot.values)));
        }
        ids.push(id);
    }
    ids.push(SEP_TEXT);
    let prompt_len = ids.len();
    if let Some(text) = target_text {
        for w in split_words(text) {
            let id = vocab.id(w)?;
            if id == NUM {
                return Err(TokenizerError::UnknownToken(w.to_string()));
            }
            ids.push(id);
        }
        ids.push(EOS);
    }
    if ids.len() > MAX_SEQUENCE {
        return Err(TokenizerError::SequenceTooLong {
            len: ids.len(),
            max: MAX_SEQUENCE,
        });
    }
    let segments = (0..ids.len())
        .map(|i| if i < prompt_len { Segment::Prompt } else { Segment::TextTarget })
        .collect();
    Ok(TokenSequence {
        ids,
        payloads,
        segments,
        prompt_len,
    })
}

/// Inverse word mapping. Specials other than `NUM` are dropped.
pub fn decode_text(ids: &[u32], vocab: &Vocab) -> Result<String, TokenizerError> {
    let mut words = Vec::new();
    for &id in ids {
        let t = vocab.token(id)?;
        if id == NUM || !Vocab::is_special(id) {
            words.push(t);
        }
    }
    Ok(words.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{get_equation, render_input_sentence, sample_initial_condition};
    use crate::rng::stream;

    #[test]
    fn counts_words_plus_specials() {
        let v = Vocab::build(["heat equation", "wave equation"]).unwrap();
        assert_eq!(v.len(), 8);
        assert_eq!(v.id("equation").unwrap(), 5);
        assert_eq!(v.id("heat").unwrap(), 6);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert_eq!(Vocab::build(Vec::<&str>::new()), Err(TokenizerError::EmptyCorpus));
        assert_eq!(Vocab::build(["  "]), Err(TokenizerError::EmptyCorpus));
    }

    #[test]
    fn splitting_keeps_markers() {
        assert_eq!(split_words("u_{xx} = <num> ."), vec!["u", "_", "{", "xx", "}", "=", "<num>", "."]);
    }

    #[test]
    fn heat_sentence_has_seventeen_numeric_tokens() {
        let spec = get_equation(13).unwrap();
        let ic = sample_initial_condition(spec, &mut stream(0, &[]));
        let s = render_input_sentence(spec, &spec.nominal_parameters(), &ic).unwrap();
        let vocab = Vocab::build([s.text.as_str(), "a smooth decay"]).unwrap();
        let seq = encode_multimodal(&s, Some("a smooth decay"), &vocab).unwrap();
        assert_eq!(seq.ids.iter().filter(|&&i| i == NUM).count(), 17);
        assert_eq!(seq.payloads.len(), 17);
        let last = seq.payloads.last().unwrap().1;
        assert_eq!(last, [0.003, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        for (pos, _) in &seq.payloads {
            assert_eq!(seq.ids[*pos], NUM);
        }
        assert_eq!(seq.ids[0], BOS);
        assert_eq!(seq.ids[seq.prompt_len - 1], SEP_TEXT);
        assert_eq!(*seq.ids.last().unwrap(), EOS);
        assert_eq!(decode_text(seq.target_ids(), &vocab).unwrap(), "a smooth decay");
    }

    #[test]
    fn plain_text_round_trips() {
        let text = "Viscous Burgers: no shocks, smooth (periodic) decay.";
        let vocab = Vocab::build([text]).unwrap();
        let s = SentenceWithSlots {
            text: text.to_string(),
            slots: vec![],
        };
        let seq = encode_multimodal(&s, None, &vocab).unwrap();
        assert!(seq.payloads.is_empty());
        assert_eq!(decode_text(&seq.ids, &vocab).unwrap(), canonical(text));
        assert_eq!(decode_text(&[BOS, EOS], &vocab).unwrap(), "");
        assert!(decode_text(&[NUM], &vocab).unwrap().contains("<num>"));
        assert_eq!(decode_text(&[999], &vocab), Err(TokenizerError::InvalidId(999)));
    }

    #[test]
    fn unknown_words_are_errors() {
        let vocab = Vocab::build(["known words"]).unwrap();
        let s = SentenceWithSlots {
            text: "unknown".into(),
            slots: vec![],
        };
        assert!(matches!(encode_multimodal(&s, None, &vocab), Err(TokenizerError::UnknownToken(_))));
    }

    #[test]
    fn long_sequences_are_rejected() {
        let text = vec!["w"; 600].join(" ");
        let vocab = Vocab::build([text.as_str()]).unwrap();
        let s = SentenceWithSlots { text, slots: vec![] };
        assert!(matches!(
            encode_multimodal(&s, None, &vocab),
            Err(TokenizerError::SequenceTooLong { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let v = Vocab::build(["b a a", "c"]).unwrap();
        let back = Vocab::from_json(&v.to_json()).unwrap();
        assert_eq!(v, back);
    }
}
