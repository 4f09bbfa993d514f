//! LLM-driven genetic operators.
//!
//! Crossover and mutation are natural-language instructions sent to the
//! text-generation backend. Its completion is cleaned up into a valid child
//! [`Prompt`]. When the backend fails or returns nothing usable, the
//! operator falls back to a parent copy and flags the step instead of
//! aborting the run.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{
    truncate_to_token_budget, GenerationRequest, TextGenerator, CLASSIFIER_TOKEN_LIMIT,
};
use crate::domain::{truncate_at_sentence, GeneratedText, OperatorKind, OperatorStep, Prompt};

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("{kind} template `{id}` must use placeholders {expected:?}, found {found:?}")]
    Placeholders {
        kind: OperatorKind,
        id: String,
        expected: Vec<&'static str>,
        found: Vec<String>,
    },
    #[error("mutation instruction set is empty")]
    NoInstructions,
    #[error("duplicate mutation instruction id `{0}`")]
    DuplicateInstruction(String),
    #[error("cannot read template file {path}: {reason}")]
    File { path: String, reason: String },
}

/// Instruction wrapper for one operator kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorTemplate {
    pub id: String,
    pub kind: OperatorKind,
    pub system_instruction: String,
    /// Text with `{name}` placeholders.
    pub body_template: String,
    /// (user, response) pairs shown before the real request.
    #[serde(default)]
    pub few_shot_examples: Vec<(String, String)>,
}

fn placeholders(template: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let tail = &rest[open + 1..];
        match tail.find('}') {
            Some(close) => {
                let name = &tail[..close];
                if !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    out.insert(name.to_string());
                }
                rest = &tail[close + 1..];
            }
            None => break,
        }
    }
    out
}

impl OperatorTemplate {
    pub fn expected_slots(kind: OperatorKind) -> &'static [&'static str] {
        match kind {
            OperatorKind::Crossover => &["prompt_a", "prompt_b"],
            OperatorKind::Mutation => &["mutation_prompt", "prompt"],
            OperatorKind::Generation => &["prompt"],
        }
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        let found = placeholders(&self.body_template);
        let expected: BTreeSet<String> = Self::expected_slots(self.kind)
            .iter()
            .map(|s| s.to_string())
            .collect();
        if found != expected {
            return Err(TemplateError::Placeholders {
                kind: self.kind,
                id: self.id.clone(),
                expected: Self::expected_slots(self.kind).to_vec(),
                found: found.into_iter().collect(),
            });
        }
        Ok(())
    }

    /// Fills the placeholders and prepends the few-shot turns.
    pub fn render(&self, slots: &[(&str, &str)]) -> String {
        let mut body = self.body_template.clone();
        for (name, value) in slots {
            body = body.replace(&format!("{{{name}}}"), value);
        }
        if self.few_shot_examples.is_empty() {
            return body;
        }
        let mut out = String::new();
        for (user, response) in &self.few_shot_examples {
            out.push_str(&format!(
                "### User:\n{user}\n\n### Response:\n{response}\n\n"
            ));
        }
        out.push_str(&format!("### User:\n{body}\n\n### Response:\n"));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationInstruction {
    pub id: String,
    pub text: String,
}

impl MutationInstruction {
    /// The instruction without its trailing `[...]` slot; the prompt is
    /// supplied separately by the wrapper template.
    pub fn directive(&self) -> &str {
        let t = self.text.trim();
        let t = t.strip_suffix("[...]").unwrap_or(t);
        t.trim_end().trim_end_matches(':').trim_end()
    }
}

/// The full operator configuration for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    pub crossover: OperatorTemplate,
    pub mutation: OperatorTemplate,
    pub generation: OperatorTemplate,
    pub mutation_instructions: Vec<MutationInstruction>,
}

const REWRITE_SYSTEM: &str = "Use the following mutation prompt and the following prompt, to change the prompt and generate a better prompt. Use one sentence maximum, which is a instruction to generate text, and keep the answer as concise as possible.";

const CROSSOVER_SYSTEM: &str = "Use the following prompts to generate a better prompt. Use one sentence maximum, which is a instruction to generate text, and keep the answer as concise as possible.";

const STORY_SYSTEM: &str =
    "Follow the instruction and write a short story of at most three sentences. Output only the story.";

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            crossover: OperatorTemplate {
                id: "crossover-default".into(),
                kind: OperatorKind::Crossover,
                system_instruction: CROSSOVER_SYSTEM.into(),
                body_template: "One prompt is: {prompt_a}, another prompt is: {prompt_b}. Analyze the prompts and generate a better prompt based on this analysis, but it should still be a 1-sentence instruction to generate text.".into(),
                few_shot_examples: Vec::new(),
            },
            mutation: OperatorTemplate {
                id: "mutation-default".into(),
                kind: OperatorKind::Mutation,
                system_instruction: REWRITE_SYSTEM.into(),
                body_template: "Mutation Prompt: {mutation_prompt}\nPrompt: {prompt}\nNew Prompt:".into(),
                few_shot_examples: vec![
                    (
                        "Change the following prompt: provide a 3 sentence story".into(),
                        "Craft a three-sentence story".into(),
                    ),
                    (
                        "Modify the following prompt: write a 3 sentence story".into(),
                        "Create a three-sentence tale with a twist ending.".into(),
                    ),
                ],
            },
            generation: OperatorTemplate {
                id: "generation-default".into(),
                kind: OperatorKind::Generation,
                system_instruction: STORY_SYSTEM.into(),
                body_template: "{prompt}".into(),
                few_shot_examples: Vec::new(),
            },
            mutation_instructions: vec![
                MutationInstruction {
                    id: "m1".into(),
                    text: "Change this prompt, but it should still be a 1-sentence instruction to generate text: [...]".into(),
                },
                MutationInstruction {
                    id: "m2".into(),
                    text: "Modify this prompt to generate a 1-sentence instruction for text generation: [...]".into(),
                },
                MutationInstruction {
                    id: "m3".into(),
                    text: "Generate a variation of the following prompt while keeping the semantic meaning: [...]".into(),
                },
            ],
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateOverride {
    id: Option<String>,
    system: Option<String>,
    body: Option<String>,
    few_shot: Option<Vec<(String, String)>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateFile {
    crossover: Option<TemplateOverride>,
    mutation: Option<TemplateOverride>,
    generation: Option<TemplateOverride>,
    mutation_instructions: Option<Vec<MutationInstruction>>,
}

impl TemplateSet {
    pub fn validate(&self) -> Result<(), TemplateError> {
        self.crossover.validate()?;
        self.mutation.validate()?;
        self.generation.validate()?;
        if self.mutation_instructions.is_empty() {
            return Err(TemplateError::NoInstructions);
        }
        let mut seen = BTreeSet::new();
        for m in &self.mutation_instructions {
            if !seen.insert(&m.id) {
                return Err(TemplateError::DuplicateInstruction(m.id.clone()));
            }
        }
        Ok(())
    }

    /// Overlays a JSON template file onto the defaults. Every key is
    /// optional; unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self, TemplateError> {
        let file: TemplateFile = serde_json::from_str(text).map_err(|e| TemplateError::File {
            path: "<inline>".into(),
            reason: e.to_string(),
        })?;
        let mut set = TemplateSet::default();
        for (slot, over) in [
            (&mut set.crossover, file.crossover),
            (&mut set.mutation, file.mutation),
            (&mut set.generation, file.generation),
        ] {
            if let Some(o) = over {
                if let Some(id) = o.id {
                    slot.id = id;
                }
                if let Some(s) = o.system {
                    slot.system_instruction = s;
                }
                if let Some(b) = o.body {
                    slot.body_template = b;
                }
                if let Some(f) = o.few_shot {
                    slot.few_shot_examples = f;
                }
            }
        }
        if let Some(m) = file.mutation_instructions {
            set.mutation_instructions = m;
        }
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let text = std::fs::read_to_string(path).map_err(|e| TemplateError::File {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text).map_err(|e| match e {
            TemplateError::File { reason, .. } => TemplateError::File {
                path: path.display().to_string(),
                reason,
            },
            other => other,
        })
    }
}

const ROLE_MARKERS: [&str; 7] = [
    "[INST]",
    "[/INST]",
    "<<SYS>>",
    "<</SYS>>",
    "### System:",
    "### User:",
    "### Response:",
];

const LEADING_LABELS: [&str; 6] = [
    "new prompt:",
    "response:",
    "prompt:",
    "answer:",
    "output:",
    "improved prompt:",
];

fn strip_quotes(s: &str) -> &str {
    let pairs = [('"', '"'), ('\'', '\''), ('“', '”'), ('‘', '’'), ('`', '`')];
    let mut s = s.trim();
    loop {
        let before = s;
        for (open, close) in pairs {
            if s.chars().count() >= 2 && s.starts_with(open) && s.ends_with(close) {
                s = s[open.len_utf8()..s.len() - close.len_utf8()].trim();
            }
        }
        if s == before {
            return s;
        }
    }
}

fn strip_labels(mut s: &str) -> &str {
    loop {
        let before = s;
        s = s.trim_start_matches(['*', '-', '#', ' ']).trim();
        for label in LEADING_LABELS {
            if s.len() >= label.len()
                && s.is_char_boundary(label.len())
                && s[..label.len()].eq_ignore_ascii_case(label)
            {
                s = s[label.len()..].trim();
            }
        }
        s = strip_quotes(s);
        if s == before {
            return s;
        }
    }
}

/// Result of cleaning up a raw operator completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cleaned {
    pub text: String,
    pub truncated: bool,
}

/// Turns a raw completion into genotype text: drops code fences, chat role
/// markers, answer labels and surrounding quotes, keeps the first non-empty
/// line and enforces the length cap. `None` when nothing usable is left.
pub fn postprocess(raw: &str, max_chars: usize) -> Option<Cleaned> {
    let mut text = raw.to_string();
    for marker in ROLE_MARKERS {
        text = text.replace(marker, "\n");
    }
    let line = text
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .map(strip_labels)
        .find(|l| !l.is_empty())?;
    let (cut, truncated) = truncate_at_sentence(line, max_chars);
    let cut = cut.trim();
    if cut.is_empty() {
        return None;
    }
    Some(Cleaned {
        text: cut.to_string(),
        truncated,
    })
}

/// Sampling parameters shared by every operator request.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestDefaults {
    pub model_name: String,
    pub temperature: f64,
    pub context_window: u32,
    pub max_output_tokens: u32,
    pub stop_sequences: Vec<String>,
}

impl Default for RequestDefaults {
    fn default() -> Self {
        let g = GenerationRequest::default();
        RequestDefaults {
            model_name: g.model_name,
            temperature: g.temperature,
            context_window: g.context_window,
            max_output_tokens: g.max_output_tokens,
            stop_sequences: g.stop_sequences,
        }
    }
}

/// Text produced for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct TextOutcome {
    pub text: GeneratedText,
    pub truncated: bool,
    /// The backend gave up; `text` is empty.
    pub failed: bool,
}

/// Binds templates, backend and request settings together.
pub struct Variation<'a> {
    pub templates: &'a TemplateSet,
    pub generator: &'a dyn TextGenerator,
    pub defaults: RequestDefaults,
    pub prompt_max_chars: usize,
}

impl<'a> Variation<'a> {
    fn request(
        &self,
        template: &OperatorTemplate,
        body: String,
        seed: Option<u64>,
    ) -> GenerationRequest {
        GenerationRequest {
            model_name: self.defaults.model_name.clone(),
            system: template.system_instruction.clone(),
            prompt_body: body,
            temperature: self.defaults.temperature,
            context_window: self.defaults.context_window,
            max_output_tokens: self.defaults.max_output_tokens,
            stop_sequences: self.defaults.stop_sequences.clone(),
            seed,
        }
    }

    /// Calls the backend and cleans the completion; `fallback` is used when
    /// either step yields nothing.
    fn apply(
        &self,
        request: GenerationRequest,
        fallback: &Prompt,
        mut step: OperatorStep,
    ) -> (Prompt, OperatorStep) {
        match self.generator.complete(&request) {
            Ok(raw) => {
                let cleaned = postprocess(&raw, self.prompt_max_chars);
                step.raw_completion = Some(raw);
                if let Some(c) = cleaned {
                    if let Ok(p) = Prompt::with_limit(c.text, self.prompt_max_chars) {
                        if c.truncated {
                            log::info!(
                                "{} output truncated to {} characters",
                                step.kind,
                                self.prompt_max_chars
                            );
                        }
                        step.truncated = c.truncated;
                        return (p, step);
                    }
                }
                log::warn!(target: "variation_fallback", "{} produced no usable prompt", step.kind);
            }
            Err(e) => {
                log::warn!(target: "variation_fallback", "{} backend failure: {e}", step.kind);
            }
        }
        step.fallback = true;
        (fallback.clone(), step)
    }

    /// Recombines two parents into one child prompt. Falls back to the
    /// lexicographically smaller parent.
    pub fn crossover<R: Rng>(&self, a: &Prompt, b: &Prompt, rng: &mut R) -> (Prompt, OperatorStep) {
        let t = &self.templates.crossover;
        let body = t.render(&[("prompt_a", a.as_str()), ("prompt_b", b.as_str())]);
        let request = self.request(t, body, Some(rng.random()));
        let step = OperatorStep {
            kind: OperatorKind::Crossover,
            template_id: t.id.clone(),
            instruction_id: None,
            raw_completion: None,
            fallback: false,
            truncated: false,
        };
        self.apply(request, a.min(b), step)
    }

    /// Rewrites `prompt` under a uniformly drawn mutation instruction. Falls
    /// back to the unchanged input.
    pub fn mutate<R: Rng>(&self, prompt: &Prompt, rng: &mut R) -> (Prompt, OperatorStep) {
        let t = &self.templates.mutation;
        let instructions = &self.templates.mutation_instructions;
        let chosen = &instructions[rng.random_range(0..instructions.len())];
        let body = t.render(&[
            ("mutation_prompt", chosen.directive()),
            ("prompt", prompt.as_str()),
        ]);
        let request = self.request(t, body, Some(rng.random()));
        let step = OperatorStep {
            kind: OperatorKind::Mutation,
            template_id: t.id.clone(),
            instruction_id: Some(chosen.id.clone()),
            raw_completion: None,
            fallback: false,
            truncated: false,
        };
        self.apply(request, prompt, step)
    }

    /// Asks the LLM for the text a prompt induces, cut to the classifier's
    /// token budget. Backend failure yields empty text.
    pub fn generate_text(&self, prompt: &Prompt) -> TextOutcome {
        let t = &self.templates.generation;
        let body = t.render(&[("prompt", prompt.as_str())]);
        match self.generator.complete(&self.request(t, body, None)) {
            Ok(raw) => {
                log::debug!("generated for {:?}: {raw:?}", prompt.as_str());
                let (text, truncated) =
                    truncate_to_token_budget(raw.trim(), CLASSIFIER_TOKEN_LIMIT);
                TextOutcome {
                    text: GeneratedText::new(text),
                    truncated,
                    failed: false,
                }
            }
            Err(e) => {
                log::warn!(target: "generation_failed", "text generation failed: {e}");
                TextOutcome {
                    text: GeneratedText::default(),
                    truncated: false,
                    failed: true,
                }
            }
        }
    }
}
