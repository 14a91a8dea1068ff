//! Caption vocabulary with fixed special tokens.

use super::ModelError;
use crate::metrics::tokenize::tokenize;
use std::collections::{BTreeSet, HashMap};

pub const PAD: u32 = 0;
pub const START: u32 = 1;
pub const END: u32 = 2;
pub const UNK: u32 = 3;

const SPECIALS: [&str; 4] = ["<pad>", "<start>", "<end>", "<unk>"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds from raw caption text; word ids are dense and sorted, with
    /// the four specials pinned to ids 0..=3.
    pub fn from_corpus<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut unique: BTreeSet<String> = BTreeSet::new();
        for text in texts {
            for word in tokenize(text) {
                if !SPECIALS.contains(&word.as_str()) {
                    unique.insert(word);
                }
            }
        }
        let mut words: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        words.extend(unique);
        Self::from_words(words).expect("specials are pinned by construction")
    }

    pub fn from_words(words: Vec<String>) -> Result<Self, ModelError> {
        if words.len() < SPECIALS.len() || words[..4] != SPECIALS.map(String::from) {
            return Err(ModelError::VocabFormat(
                "vocabulary must start with <pad>, <start>, <end>, <unk>".into(),
            ));
        }
        let mut index = HashMap::new();
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(ModelError::VocabFormat(format!("duplicate word '{w}'")));
            }
        }
        Ok(Vocabulary { words, index })
    }

    pub fn size(&self) -> usize {
        self.words.len()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Tokenizes and maps to ids; unknown words become `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text).iter().map(|w| self.id(w)).collect()
    }

    /// Joins non-special tokens back into a sentence.
    pub fn decode(&self, ids: &[u32]) -> String {
        let words: Vec<&str> = ids
            .iter()
            .filter(|&&id| id > UNK)
            .map(|&id| self.word(id))
            .collect();
        words.join(" ")
    }

    /// Word-per-line serialization, specials first.
    pub fn to_lines(&self) -> String {
        let mut out = self.words.join("\n");
        out.push('\n');
        out
    }

    pub fn from_lines(text: &str) -> Result<Self, ModelError> {
        let words: Vec<String> = text.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect();
        Self::from_words(words)
    }
}
