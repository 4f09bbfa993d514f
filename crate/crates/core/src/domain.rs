//! Value types shared by every stage of the optimizer.
//!
//! An individual is the triple (prompt, generated text, fitness) plus the
//! bookkeeping that selection and lineage tracking attach to it. All types
//! here are immutable once constructed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default upper bound on prompt length, in characters.
pub const DEFAULT_PROMPT_MAX_CHARS: usize = 2000;

/// Tolerance on the sum of classifier scores.
pub const SCORE_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("prompt has {len} characters, limit is {max}")]
    PromptTooLong { len: usize, max: usize },
    #[error("unknown emotion label `{0}`")]
    UnknownLabel(String),
    #[error("objective pair labels must differ")]
    IdenticalPair,
    #[error("malformed objective pair `{0}`, expected `first:second`")]
    MalformedPair(String),
    #[error("missing score for emotion `{0}`")]
    MissingLabel(EmotionLabel),
    #[error("duplicate score for emotion `{0}`")]
    DuplicateLabel(EmotionLabel),
    #[error("score {value} for `{label}` is outside [0, 1]")]
    ScoreOutOfRange { label: EmotionLabel, value: f64 },
    #[error("scores sum to {0}, expected 1 within 1e-3")]
    BadScoreSum(f64),
    #[error("fitness coordinate {0} is outside [0, 1]")]
    FitnessOutOfRange(f64),
}

/// The genotype: an instruction that asks the LLM to write a text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Prompt(String);

impl Prompt {
    pub fn new(text: impl Into<String>) -> Result<Self, DomainError> {
        Self::with_limit(text, DEFAULT_PROMPT_MAX_CHARS)
    }

    pub fn with_limit(text: impl Into<String>, max_chars: usize) -> Result<Self, DomainError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(DomainError::EmptyPrompt);
        }
        let len = text.chars().count();
        if len > max_chars {
            return Err(DomainError::PromptTooLong {
                len,
                max: max_chars,
            });
        }
        Ok(Prompt(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Prompt {
    type Error = DomainError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        if value.trim().is_empty() {
            return Err(DomainError::EmptyPrompt);
        }
        Ok(Prompt(value))
    }
}

impl From<Prompt> for String {
    fn from(p: Prompt) -> Self {
        p.0
    }
}

impl fmt::Display for Prompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Cuts `text` to at most `max_chars` characters, preferring the last
/// sentence boundary (`.`, `!` or `?`) inside the limit. Falls back to a hard
/// cut when no boundary exists. Returns the result and whether anything was
/// removed.
pub fn truncate_at_sentence(text: &str, max_chars: usize) -> (String, bool) {
    if text.chars().count() <= max_chars {
        return (text.to_string(), false);
    }
    let head: String = text.chars().take(max_chars).collect();
    let cut = head
        .char_indices()
        .filter(|(_, c)| matches!(c, '.' | '!' | '?'))
        .map(|(i, c)| i + c.len_utf8())
        .next_back();
    let out = match cut {
        Some(end) if !head[..end].trim().is_empty() => head[..end].trim_end().to_string(),
        _ => head.trim_end().to_string(),
    };
    (out, true)
}

/// The phenotype: the text the LLM produced for a prompt. May be empty when
/// the generation backend failed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GeneratedText(String);

impl GeneratedText {
    pub fn new(text: impl Into<String>) -> Self {
        GeneratedText(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionLabel {
    Sadness,
    Joy,
    Love,
    Anger,
    Fear,
    Surprise,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 6] = [
        EmotionLabel::Sadness,
        EmotionLabel::Joy,
        EmotionLabel::Love,
        EmotionLabel::Anger,
        EmotionLabel::Fear,
        EmotionLabel::Surprise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EmotionLabel::Sadness => "sadness",
            EmotionLabel::Joy => "joy",
            EmotionLabel::Love => "love",
            EmotionLabel::Anger => "anger",
            EmotionLabel::Fear => "fear",
            EmotionLabel::Surprise => "surprise",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionLabel {
    type Err = DomainError;

    /// Case-insensitive; surrounding whitespace is ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        EmotionLabel::ALL
            .into_iter()
            .find(|l| l.name() == lower)
            .ok_or_else(|| DomainError::UnknownLabel(s.to_string()))
    }
}

/// Classifier output: one probability per emotion, summing to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmotionScores([f64; 6]);

impl EmotionScores {
    /// Builds scores from labelled pairs in any order. Every label must
    /// appear exactly once.
    pub fn from_pairs<I>(pairs: I) -> Result<Self, DomainError>
    where
        I: IntoIterator<Item = (EmotionLabel, f64)>,
    {
        let mut slots: [Option<f64>; 6] = [None; 6];
        for (label, value) in pairs {
            if slots[label.slot()].is_some() {
                return Err(DomainError::DuplicateLabel(label));
            }
            if !(0.0..=1.0).contains(&value) {
                return Err(DomainError::ScoreOutOfRange { label, value });
            }
            slots[label.slot()] = Some(value);
        }
        let mut scores = [0.0; 6];
        for label in EmotionLabel::ALL {
            scores[label.slot()] = slots[label.slot()].ok_or(DomainError::MissingLabel(label))?;
        }
        let sum: f64 = scores.iter().sum();
        if (sum - 1.0).abs() > SCORE_SUM_TOLERANCE {
            return Err(DomainError::BadScoreSum(sum));
        }
        Ok(EmotionScores(scores))
    }

    pub fn uniform() -> Self {
        EmotionScores([1.0 / 6.0; 6])
    }

    pub fn get(&self, label: EmotionLabel) -> f64 {
        self.0[label.slot()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (EmotionLabel, f64)> + '_ {
        EmotionLabel::ALL.into_iter().map(|l| (l, self.get(l)))
    }
}

/// The two emotions being maximized jointly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObjectivePair {
    first: EmotionLabel,
    second: EmotionLabel,
}

impl ObjectivePair {
    pub fn new(first: EmotionLabel, second: EmotionLabel) -> Result<Self, DomainError> {
        if first == second {
            return Err(DomainError::IdenticalPair);
        }
        Ok(ObjectivePair { first, second })
    }

    pub fn first(&self) -> EmotionLabel {
        self.first
    }

    pub fn second(&self) -> EmotionLabel {
        self.second
    }

    /// Directory-safe name, e.g. `love-anger`.
    pub fn slug(&self) -> String {
        format!("{}-{}", self.first, self.second)
    }
}

impl fmt::Display for ObjectivePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.first, self.second)
    }
}

impl FromStr for ObjectivePair {
    type Err = DomainError;

    /// Parses `first:second`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| DomainError::MalformedPair(s.to_string()))?;
        ObjectivePair::new(a.parse()?, b.parse()?)
    }
}

impl Serialize for ObjectivePair {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ObjectivePair {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A point in [0,1]²; both coordinates are maximized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct FitnessPoint {
    pub f1: f64,
    pub f2: f64,
}

impl FitnessPoint {
    pub fn new(f1: f64, f2: f64) -> Result<Self, DomainError> {
        for v in [f1, f2] {
            if !(0.0..=1.0).contains(&v) {
                return Err(DomainError::FitnessOutOfRange(v));
            }
        }
        Ok(FitnessPoint { f1, f2 })
    }

    pub const ORIGIN: FitnessPoint = FitnessPoint { f1: 0.0, f2: 0.0 };
}

impl TryFrom<(f64, f64)> for FitnessPoint {
    type Error = DomainError;

    fn try_from((f1, f2): (f64, f64)) -> Result<Self, Self::Error> {
        FitnessPoint::new(f1, f2)
    }
}

impl From<FitnessPoint> for (f64, f64) {
    fn from(p: FitnessPoint) -> Self {
        (p.f1, p.f2)
    }
}

/// Projects classifier scores onto the objective pair. No renormalization.
pub fn extract_fitness(scores: &EmotionScores, pair: ObjectivePair) -> FitnessPoint {
    FitnessPoint {
        f1: scores.get(pair.first()),
        f2: scores.get(pair.second()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndividualId(pub u64);

impl fmt::Display for IndividualId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Crossover,
    Mutation,
    Generation,
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatorKind::Crossover => "crossover",
            OperatorKind::Mutation => "mutation",
            OperatorKind::Generation => "generation",
        })
    }
}

/// One application of an LLM operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorStep {
    pub kind: OperatorKind,
    pub template_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction_id: Option<String>,
    /// Completion as returned by the backend, before post-processing.
    #[serde(default)]
    pub raw_completion: Option<String>,
    #[serde(default)]
    pub fallback: bool,
    #[serde(default)]
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "lowercase")]
pub enum OperatorTrace {
    /// One of the hand-written initial prompts.
    Seed { seed_index: usize },
    Offspring {
        crossover: OperatorStep,
        mutation: OperatorStep,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: IndividualId,
    pub prompt: Prompt,
    pub text: GeneratedText,
    pub fitness: FitnessPoint,
    #[serde(default)]
    pub rank: Option<usize>,
    #[serde(default, with = "crate::serde_ext::opt_f64_inf")]
    pub crowding: Option<f64>,
    #[serde(default)]
    pub contribution: Option<f64>,
    #[serde(default)]
    pub parent_ids: Vec<IndividualId>,
    pub trace: OperatorTrace,
    #[serde(default)]
    pub text_truncated: bool,
    #[serde(default)]
    pub eval_failed: bool,
}

impl Individual {
    /// A freshly evaluated individual that has not been through selection.
    pub fn evaluated(
        id: IndividualId,
        prompt: Prompt,
        text: GeneratedText,
        fitness: FitnessPoint,
        parent_ids: Vec<IndividualId>,
        trace: OperatorTrace,
    ) -> Self {
        debug_assert!(parent_ids.len() <= 2);
        Individual {
            id,
            prompt,
            text,
            fitness,
            rank: None,
            crowding: None,
            contribution: None,
            parent_ids,
            trace,
            text_truncated: false,
            eval_failed: false,
        }
    }

    pub fn has_selection_metadata(&self) -> bool {
        self.rank.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Population(Vec<Individual>);

impl Population {
    pub fn new(members: Vec<Individual>) -> Self {
        Population(members)
    }

    pub fn members(&self) -> &[Individual] {
        &self.0
    }

    pub fn into_members(self) -> Vec<Individual> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn fitness_points(&self) -> Vec<FitnessPoint> {
        self.0.iter().map(|i| i.fitness).collect()
    }
}
