//! Offline stand-ins for the LLM and the classifier.
//!
//! [`MockGenerator`] recognises the operator templates and recombines the
//! words it finds there. The output is a pure function of the request and
//! the mock seed. [`LexiconClassifier`] scores text by keyword counts. Texts
//! that echo emotion keywords from their prompt score higher on those
//! emotions, so selection has something to act on.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{BackendError, EmotionClassifier, GenerationRequest, TextGenerator};
use crate::domain::{EmotionLabel, EmotionScores, GeneratedText};

const MAX_WORDS: usize = 30;

const OPENERS: [&str; 6] = [
    "The village woke to a quiet grey morning.",
    "A traveller reached the old bridge at dusk.",
    "Rain drummed on the roof of the little station.",
    "The lighthouse keeper counted the passing ships.",
    "Two neighbours met by the garden gate.",
    "A letter arrived with no name on the envelope.",
];

const CLOSERS: [&str; 6] = [
    "By nightfall the streets were still again.",
    "Nobody in town spoke of it the next day.",
    "The clock in the square struck nine.",
    "Then the lamps went out one by one.",
    "Morning came as it always did.",
    "The road home was longer than they remembered.",
];

const NEUTRAL_WORDS: [&str; 12] = [
    "story", "village", "journey", "stranger", "river", "letter", "window", "market", "evening",
    "mountain", "garden", "secret",
];

/// Keyword lists per emotion.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon(BTreeMap<EmotionLabel, Vec<String>>);

impl Default for Lexicon {
    fn default() -> Self {
        use EmotionLabel::*;
        let table: [(EmotionLabel, [&str; 8]); 6] = [
            (
                Sadness,
                [
                    "sad",
                    "sorrow",
                    "grief",
                    "tears",
                    "mourn",
                    "lonely",
                    "despair",
                    "melancholy",
                ],
            ),
            (
                Joy,
                [
                    "joy",
                    "joyful",
                    "delight",
                    "happy",
                    "laughter",
                    "cheerful",
                    "celebrate",
                    "bliss",
                ],
            ),
            (
                Love,
                [
                    "love",
                    "beloved",
                    "tender",
                    "embrace",
                    "adore",
                    "devotion",
                    "affection",
                    "heart",
                ],
            ),
            (
                Anger,
                [
                    "anger", "rage", "furious", "fury", "wrath", "hatred", "resent", "outrage",
                ],
            ),
            (
                Fear,
                [
                    "fear", "dread", "terror", "afraid", "ominous", "haunted", "panic", "sinister",
                ],
            ),
            (
                Surprise,
                [
                    "surprise",
                    "sudden",
                    "unexpected",
                    "astonished",
                    "shock",
                    "twist",
                    "amazed",
                    "startling",
                ],
            ),
        ];
        Lexicon(
            table
                .into_iter()
                .map(|(l, words)| (l, words.iter().map(|w| w.to_string()).collect()))
                .collect(),
        )
    }
}

impl Lexicon {
    /// Parses `{"joy": ["delight", ..], ..}`. Omitted emotions get no
    /// keywords.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let raw: BTreeMap<String, Vec<String>> =
            serde_json::from_str(text).map_err(|e| e.to_string())?;
        let mut map = BTreeMap::new();
        for (k, words) in raw {
            let label: EmotionLabel = k
                .parse()
                .map_err(|e: crate::domain::DomainError| e.to_string())?;
            map.insert(label, words.into_iter().map(|w| w.to_lowercase()).collect());
        }
        Ok(Lexicon(map))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn keywords(&self, label: EmotionLabel) -> &[String] {
        self.0.get(&label).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn all_keywords(&self) -> Vec<String> {
        self.0.values().flatten().cloned().collect()
    }

    /// Keyword hits per emotion.
    pub fn counts(&self, text: &str) -> [usize; 6] {
        let mut counts = [0usize; 6];
        for token in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let token = token.to_lowercase();
            for (slot, label) in EmotionLabel::ALL.into_iter().enumerate() {
                if self.keywords(label).contains(&token) {
                    counts[slot] += 1;
                }
            }
        }
        counts
    }
}

/// Scores each emotion as `1 + keyword hits`, normalized to sum to one.
#[derive(Debug, Clone, Default)]
pub struct LexiconClassifier {
    lexicon: Lexicon,
}

impl LexiconClassifier {
    pub fn new(lexicon: Lexicon) -> Self {
        LexiconClassifier { lexicon }
    }
}

impl EmotionClassifier for LexiconClassifier {
    fn classify(&self, text: &GeneratedText) -> Result<EmotionScores, BackendError> {
        let counts = self.lexicon.counts(text.as_str());
        let raw: Vec<f64> = counts.iter().map(|&c| 1.0 + c as f64).collect();
        let total: f64 = raw.iter().sum();
        EmotionScores::from_pairs(
            EmotionLabel::ALL
                .into_iter()
                .zip(raw.iter().map(|r| r / total)),
        )
        .map_err(|e| BackendError::Parse(e.to_string()))
    }
}

enum Task<'a> {
    Crossover(&'a str, &'a str),
    Mutation(&'a str),
    Generation(&'a str),
}

/// The last user turn of a few-shot body, without the trailing response cue.
fn final_turn(body: &str) -> &str {
    let turn = match body.rfind("### User:") {
        Some(at) => &body[at + "### User:".len()..],
        None => body,
    };
    match turn.find("### Response:") {
        Some(at) => &turn[..at],
        None => turn,
    }
}

fn classify_task(body: &str) -> Task<'_> {
    let turn = final_turn(body);
    if let Some(a_at) = turn.find("One prompt is:") {
        let rest = &turn[a_at + "One prompt is:".len()..];
        if let Some(b_at) = rest.find(", another prompt is:") {
            let a = &rest[..b_at];
            let rest = &rest[b_at + ", another prompt is:".len()..];
            let b_end = rest
                .find(". Analyze")
                .or_else(|| rest.find('\n'))
                .unwrap_or(rest.len());
            return Task::Crossover(a.trim(), rest[..b_end].trim());
        }
    }
    if let Some(line) = turn
        .lines()
        .rev()
        .find(|l| l.trim_start().starts_with("Prompt:"))
    {
        return Task::Mutation(line.trim_start()["Prompt:".len()..].trim());
    }
    Task::Generation(turn.trim())
}

fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'' && c != '-')
                .to_string()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

fn sentence(words: &[String]) -> String {
    if words.is_empty() {
        return "Write a short story.".to_string();
    }
    let mut s = words.join(" ");
    if let Some(first) = s.get(..1) {
        s = first.to_uppercase() + &s[1..];
    }
    s.push('.');
    s
}

/// Deterministic text generator.
#[derive(Debug, Clone)]
pub struct MockGenerator {
    seed: u64,
    vocabulary: Vec<String>,
}

impl MockGenerator {
    pub fn new(seed: u64) -> Self {
        let mut vocabulary = Lexicon::default().all_keywords();
        vocabulary.extend(NEUTRAL_WORDS.iter().map(|w| w.to_string()));
        MockGenerator { seed, vocabulary }
    }

    /// Replaces the words mutation may insert, keeping the neutral filler.
    pub fn with_vocabulary(mut self, keywords: Vec<String>) -> Self {
        self.vocabulary = keywords;
        self.vocabulary
            .extend(NEUTRAL_WORDS.iter().map(|w| w.to_string()));
        self
    }

    fn rng_for(&self, request: &GenerationRequest) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        match request.seed {
            Some(s) => {
                h.update([1u8]);
                h.update(s.to_le_bytes());
            }
            None => h.update([0u8]),
        }
        h.update(request.system.as_bytes());
        h.update([0u8]);
        h.update(request.prompt_body.as_bytes());
        let digest: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(digest)
    }

    fn crossover(&self, a: &str, b: &str, rng: &mut ChaCha8Rng) -> String {
        let (wa, wb) = (words(a), words(b));
        let cut_a = if wa.is_empty() {
            0
        } else {
            rng.random_range(1..=wa.len())
        };
        let cut_b = if wb.is_empty() {
            0
        } else {
            rng.random_range(0..wb.len())
        };
        let mut child: Vec<String> = wa[..cut_a].iter().chain(&wb[cut_b..]).cloned().collect();
        child.dedup();
        child.truncate(MAX_WORDS);
        let text = sentence(&child);
        match rng.random_range(0..10) {
            0 | 1 => format!("New Prompt: {text}"),
            2 => format!("\"{text}\""),
            _ => text,
        }
    }

    fn mutate(&self, prompt: &str, rng: &mut ChaCha8Rng) -> String {
        let mut w = words(prompt);
        let pick = |rng: &mut ChaCha8Rng| {
            self.vocabulary
                .choose(rng)
                .cloned()
                .unwrap_or_else(|| "story".to_string())
        };
        let roll = rng.random_range(0..10);
        if w.is_empty() {
            w.push(pick(rng));
        } else if roll < 5 && w.len() < MAX_WORDS {
            let at = rng.random_range(0..=w.len());
            let word = pick(rng);
            w.insert(at, word);
        } else if roll < 8 || w.len() <= 3 {
            let at = rng.random_range(0..w.len());
            w[at] = pick(rng);
        } else {
            let at = rng.random_range(0..w.len());
            w.remove(at);
        }
        w.truncate(MAX_WORDS);
        let text = sentence(&w);
        if rng.random_range(0..10) == 0 {
            format!("Response: {text}")
        } else {
            text
        }
    }

    fn story(&self, prompt: &str, rng: &mut ChaCha8Rng) -> String {
        let opener = OPENERS.choose(rng).expect("non-empty");
        let closer = CLOSERS.choose(rng).expect("non-empty");
        let echo: Vec<String> = words(prompt).iter().map(|w| w.to_lowercase()).collect();
        if echo.is_empty() {
            format!("{opener} {closer}")
        } else {
            format!("{opener} It was a tale to {}. {closer}", echo.join(" "))
        }
    }
}

impl TextGenerator for MockGenerator {
    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let mut rng = self.rng_for(request);
        Ok(match classify_task(&request.prompt_body) {
            Task::Crossover(a, b) => self.crossover(a, b, &mut rng),
            Task::Mutation(p) => self.mutate(p, &mut rng),
            Task::Generation(p) => self.story(p, &mut rng),
        })
    }
}
