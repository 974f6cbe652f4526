//! Closed-vocabulary word tokenizer and the shared text + pose id space.
//!
//! Id layout: the seven specials, then words in first-occurrence order, then
//! one id per pose-codebook entry.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
/// Start of the pose-query block; also ends the reasoning text.
pub const SPQ: usize = 3;
/// End of the pose-query block.
pub const EPQ: usize = 4;
/// The pose-query input token repeated once per query slot.
pub const PQ: usize = 5;
pub const UNK: usize = 6;
pub const NUM_SPECIALS: usize = 7;

const SPECIAL_NAMES: [&str; NUM_SPECIALS] =
    ["<pad>", "<bos>", "<eos>", "<spq>", "<epq>", "<pq>", "<unk>"];

/// Lowercases, drops punctuation and collapses whitespace.
pub fn normalize(text: &str) -> String {
    words(text).join(" ")
}

fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Segment {
    Abstract,
    Detailed,
    PoseQuery,
    PoseOutput,
    Special,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub segments: Vec<Segment>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn push(&mut self, id: usize, segment: Segment) {
        self.ids.push(id);
        self.segments.push(segment);
    }

    pub fn extend(&mut self, ids: &[usize], segment: Segment) {
        for &id in ids {
            self.push(id, segment);
        }
    }

    /// Training layout: `BOS abstract… detailed… SPQ PQ×n EPQ`.
    pub fn training_layout(
        abstract_ids: &[usize],
        detailed_ids: &[usize],
        n_queries: usize,
    ) -> Self {
        let mut seq = Self::default();
        seq.push(BOS, Segment::Special);
        seq.extend(abstract_ids, Segment::Abstract);
        seq.extend(detailed_ids, Segment::Detailed);
        seq.push(SPQ, Segment::Special);
        for _ in 0..n_queries {
            seq.push(PQ, Segment::PoseQuery);
        }
        seq.push(EPQ, Segment::Special);
        seq
    }

    /// The text prefix fed to the decoder: everything before the first pose query.
    pub fn text_ids(&self) -> Vec<usize> {
        self.ids
            .iter()
            .zip(&self.segments)
            .take_while(|(_, s)| !matches!(s, Segment::PoseQuery | Segment::PoseOutput))
            .map(|(&id, _)| id)
            .collect()
    }

    pub fn count(&self, segment: Segment) -> usize {
        self.segments.iter().filter(|&&s| s == segment).count()
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if self.ids.len() != self.segments.len() {
            return Err(Error::InvalidArgument(
                "ids and segment labels differ in length".into(),
            ));
        }
        if let Some(&bad) = self.ids.iter().find(|&&id| id >= vocab_size) {
            return Err(Error::InvalidArgument(format!(
                "id {bad} outside vocabulary of {vocab_size}"
            )));
        }
        let mut last = Segment::Abstract;
        for &s in &self.segments {
            if s == Segment::Special {
                continue;
            }
            if s < last {
                return Err(Error::InvalidArgument(format!(
                    "segment {s:?} after {last:?}"
                )));
            }
            last = s;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedVocabulary {
    words: Vec<String>,
    word_to_id: HashMap<String, usize>,
    pose_codebook_size: usize,
}

impl SharedVocabulary {
    /// Assigns ids to words in first-occurrence order across `corpus`.
    pub fn build<S: AsRef<str>>(corpus: &[S], pose_codebook_size: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Precondition("vocabulary corpus is empty".into()));
        }
        let mut vocab = Self {
            words: Vec::new(),
            word_to_id: HashMap::new(),
            pose_codebook_size,
        };
        for sentence in corpus {
            for w in words(sentence.as_ref()) {
                if !vocab.word_to_id.contains_key(&w) {
                    vocab
                        .word_to_id
                        .insert(w.clone(), NUM_SPECIALS + vocab.words.len());
                    vocab.words.push(w);
                }
            }
        }
        Ok(vocab)
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn pose_codebook_size(&self) -> usize {
        self.pose_codebook_size
    }

    pub fn pose_token_base(&self) -> usize {
        NUM_SPECIALS + self.words.len()
    }

    /// Total number of ids.
    pub fn len(&self) -> usize {
        self.pose_token_base() + self.pose_codebook_size
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn word_id(&self, word: &str) -> usize {
        self.word_to_id.get(word).copied().unwrap_or(UNK)
    }

    pub fn pose_id(&self, code: usize) -> Result<usize> {
        if code >= self.pose_codebook_size {
            return Err(Error::InvalidToken {
                index: code,
                size: self.pose_codebook_size,
            });
        }
        Ok(self.pose_token_base() + code)
    }

    pub fn pose_code(&self, id: usize) -> Option<usize> {
        (id >= self.pose_token_base() && id < self.len()).then(|| id - self.pose_token_base())
    }

    pub fn is_word(&self, id: usize) -> bool {
        (NUM_SPECIALS..self.pose_token_base()).contains(&id)
    }

    pub fn token(&self, id: usize) -> String {
        if id < NUM_SPECIALS {
            SPECIAL_NAMES[id].to_string()
        } else if self.is_word(id) {
            self.words[id - NUM_SPECIALS].clone()
        } else if let Some(k) = self.pose_code(id) {
            format!("<pose_{k}>")
        } else {
            SPECIAL_NAMES[UNK].to_string()
        }
    }

    pub fn encode_words(&self, text: &str) -> Vec<usize> {
        words(text).iter().map(|w| self.word_id(w)).collect()
    }

    pub fn tokenize(&self, text: &str) -> TokenSequence {
        self.tokenize_as(text, Segment::Abstract)
    }

    pub fn tokenize_as(&self, text: &str, segment: Segment) -> TokenSequence {
        let ids = self.encode_words(text);
        let segments = vec![segment; ids.len()];
        TokenSequence { ids, segments }
    }

    /// Space-joined word tokens; special and pose ids are skipped.
    pub fn detokenize(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&id| self.is_word(id) || id == UNK)
            .map(|&id| self.token(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Line-oriented `id<TAB>token` listing of every id.
    pub fn to_file_string(&self) -> String {
        (0..self.len())
            .map(|id| format!("{id}\t{}\n", self.token(id)))
            .collect()
    }

    pub fn from_file_string(text: &str) -> Result<Self> {
        let mut words = Vec::new();
        let mut pose = 0;
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (id, tok) = line
                .split_once('\t')
                .ok_or_else(|| Error::Parse(format!("vocab line {}: missing tab", n + 1)))?;
            let id: usize = id
                .parse()
                .map_err(|_| Error::Parse(format!("vocab line {}: bad id", n + 1)))?;
            if id != n {
                return Err(Error::Parse(format!(
                    "vocab line {}: ids must be dense",
                    n + 1
                )));
            }
            if id < NUM_SPECIALS {
                if tok != SPECIAL_NAMES[id] {
                    return Err(Error::Parse(format!(
                        "vocab line {}: expected {}",
                        n + 1,
                        SPECIAL_NAMES[id]
                    )));
                }
            } else if tok.starts_with("<pose_") {
                pose += 1;
            } else if pose > 0 {
                return Err(Error::Parse(format!(
                    "vocab line {}: word after pose ids",
                    n + 1
                )));
            } else {
                words.push(tok.to_string());
            }
        }
        let word_to_id = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), NUM_SPECIALS + i))
            .collect();
        Ok(Self {
            words,
            word_to_id,
            pose_codebook_size: pose,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_file_string(&std::fs::read_to_string(path)?)
    }
}
