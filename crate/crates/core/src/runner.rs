//! The (μ+λ) loop: evaluate seed prompts, breed offspring through the LLM
//! operators, select survivors, and log every generation to disk.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, EmotionClassifier, TextGenerator};
use crate::domain::{
    extract_fitness, FitnessPoint, Individual, IndividualId, ObjectivePair, OperatorTrace,
    Population, Prompt,
};
use crate::moea::{
    hypervolume_2d, nondominated_sort, nsga2_select, sms_emoa_select, ReferencePoint,
    SelectionError, Selector, SubsetMode,
};
use crate::variation::{RequestDefaults, TemplateSet, Variation};

/// Story-generation instructions used as generation zero when none are
/// configured. Hand-written; any ten instructions of this kind will do.
pub const DEFAULT_SEED_PROMPTS: [&str; 10] = [
    "provide a 3 sentence story",
    "write a 3 sentence story",
    "Tell a short story in three sentences",
    "Write a three-sentence story about a journey",
    "Compose a brief story of exactly three sentences",
    "Create a 3 sentence story set in a small village",
    "Write a short three-sentence tale about two old friends",
    "Narrate a three-sentence story that takes place at night",
    "Describe an unusual day in a 3 sentence story",
    "Write a three sentence story about a letter that arrives",
];

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("backend failure during initialization: {0}")]
    Backend(#[from] BackendError),
    #[error("selection failed: {0}")]
    Selection(#[from] SelectionError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mu: usize,
    pub lambda: usize,
    pub generations: usize,
    pub repetitions: usize,
    pub pair: ObjectivePair,
    pub selector: Selector,
    pub hv_mode: SubsetMode,
    pub seed: u64,
    pub seed_prompts: Vec<Prompt>,
    pub prompt_max_chars: usize,
    pub request: RequestDefaults,
    pub templates: TemplateSet,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Experimental defaults: (10+20), 30 generations, 10 repetitions.
    pub fn new(pair: ObjectivePair, selector: Selector) -> Self {
        RunConfig {
            mu: 10,
            lambda: 20,
            generations: 30,
            repetitions: 10,
            pair,
            selector,
            hv_mode: SubsetMode::Greedy,
            seed: 0,
            seed_prompts: DEFAULT_SEED_PROMPTS
                .iter()
                .map(|p| Prompt::new(*p).expect("default seed prompts are valid"))
                .collect(),
            prompt_max_chars: crate::domain::DEFAULT_PROMPT_MAX_CHARS,
            request: RequestDefaults::default(),
            templates: TemplateSet::default(),
            output_dir: PathBuf::from("runs"),
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let fail = |m: String| Err(RunError::Config(m));
        if self.mu == 0 {
            return fail("mu must be positive".into());
        }
        if self.generations == 0 || self.repetitions == 0 {
            return fail("generations and repetitions must be positive".into());
        }
        if self.seed_prompts.len() < self.mu {
            return fail(format!(
                "need at least mu = {} seed prompts, got {}",
                self.mu,
                self.seed_prompts.len()
            ));
        }
        if self.lambda > 0 && self.mu < 2 {
            return fail("producing offspring needs mu >= 2".into());
        }
        self.templates
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))
    }

    /// `<out>/<pair>/<selector>`
    pub fn experiment_dir(&self) -> PathBuf {
        self.output_dir
            .join(self.pair.slug())
            .join(self.selector.name())
    }
}

/// Handles to the two external services.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub generator: &'a dyn TextGenerator,
    pub classifier: &'a dyn EmotionClassifier,
}

/// One line of `gen_<g>.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordLine {
    pub generation: usize,
    pub selected: bool,
    pub individual: Individual,
}

/// Audit record of one generation.
#[derive(Debug, Clone)]
pub struct GenerationRecord {
    pub generation_index: usize,
    /// Every candidate considered, annotated by selection.
    pub candidates: Vec<RecordLine>,
    /// Hypervolume of the survivors w.r.t. (0,0).
    pub hypervolume: f64,
    pub fallback_count: usize,
    pub wall_time: Duration,
}

impl GenerationRecord {
    pub fn population(&self) -> impl Iterator<Item = &Individual> {
        self.candidates
            .iter()
            .filter(|l| l.selected)
            .map(|l| &l.individual)
    }
}

/// Running state of one repetition.
pub struct Run<'a> {
    config: &'a RunConfig,
    backends: Backends<'a>,
    variation: Variation<'a>,
    next_id: u64,
}

impl<'a> Run<'a> {
    pub fn new(config: &'a RunConfig, backends: Backends<'a>) -> Self {
        Run {
            config,
            backends,
            variation: Variation {
                templates: &config.templates,
                generator: backends.generator,
                defaults: config.request.clone(),
                prompt_max_chars: config.prompt_max_chars,
            },
            next_id: 0,
        }
    }

    /// Evaluates the first μ seed prompts. Any backend failure is fatal.
    pub fn initialize(&mut self) -> Result<Population, RunError> {
        let mut members = Vec::with_capacity(self.config.mu);
        for (i, prompt) in self
            .config
            .seed_prompts
            .iter()
            .take(self.config.mu)
            .enumerate()
        {
            let out = self.variation.generate_text(prompt);
            if out.failed {
                return Err(RunError::Backend(BackendError::Transport(format!(
                    "no text for seed prompt {i}"
                ))));
            }
            let scores = self.backends.classifier.classify(&out.text)?;
            let mut ind = Individual::evaluated(
                IndividualId(self.next_id),
                prompt.clone(),
                out.text,
                extract_fitness(&scores, self.config.pair),
                Vec::new(),
                OperatorTrace::Seed { seed_index: i },
            );
            ind.text_truncated = out.truncated;
            self.next_id += 1;
            members.push(ind);
        }
        Ok(Population::new(members))
    }

    /// Breeds `count` evaluated children. Each child draws from its own
    /// ChaCha stream (stream index = child index) so the result does not
    /// depend on scheduling.
    pub fn produce_offspring<R: Rng>(
        &mut self,
        parents: &Population,
        count: usize,
        rng: &mut R,
    ) -> (Vec<Individual>, usize) {
        let base: u64 = rng.random();
        let members = parents.members();
        assert!(members.len() >= 2 || count == 0, "need two parents");
        let pair = self.config.pair;
        let variation = &self.variation;
        let classifier = self.backends.classifier;

        let bred: Vec<(Individual, usize)> = (0..count)
            .into_par_iter()
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(base);
                rng.set_stream(k as u64);
                let picked = rand::seq::index::sample(&mut rng, members.len(), 2);
                let (a, b) = (&members[picked.index(0)], &members[picked.index(1)]);

                let (crossed, xo) = variation.crossover(&a.prompt, &b.prompt, &mut rng);
                let (child, mu) = variation.mutate(&crossed, &mut rng);
                let text = variation.generate_text(&child);
                let fallbacks = xo.fallback as usize + mu.fallback as usize + text.failed as usize;

                let (fitness, eval_failed) = match classifier.classify(&text.text) {
                    Ok(scores) => (extract_fitness(&scores, pair), false),
                    Err(e) => {
                        log::warn!(target: "eval_failed", "classification failed: {e}");
                        (FitnessPoint::ORIGIN, true)
                    }
                };
                let mut ind = Individual::evaluated(
                    IndividualId(0),
                    child,
                    text.text,
                    fitness,
                    vec![a.id, b.id],
                    OperatorTrace::Offspring {
                        crossover: xo,
                        mutation: mu,
                    },
                );
                ind.text_truncated = text.truncated;
                ind.eval_failed = eval_failed;
                (ind, fallbacks)
            })
            .collect();

        let mut fallbacks = 0;
        let children = bred
            .into_iter()
            .map(|(mut ind, f)| {
                ind.id = IndividualId(self.next_id);
                self.next_id += 1;
                fallbacks += f;
                ind
            })
            .collect();
        (children, fallbacks)
    }

    /// One generation: λ offspring, (μ+λ) survivor selection.
    pub fn step<R: Rng>(
        &mut self,
        parents: Population,
        generation_index: usize,
        rng: &mut R,
    ) -> Result<(Population, GenerationRecord), RunError> {
        let started = Instant::now();
        let (offspring, fallback_count) = self.produce_offspring(&parents, self.config.lambda, rng);
        let mut candidates = parents.into_members();
        candidates.extend(offspring);
        debug_assert_eq!(candidates.len(), self.config.mu + self.config.lambda);

        let outcome = match self.config.selector {
            Selector::Nsga2 => nsga2_select(&candidates, self.config.mu)?,
            Selector::SmsEmoa => sms_emoa_select(
                &candidates,
                self.config.mu,
                ReferencePoint::ORIGIN,
                self.config.hv_mode,
            )?,
        };
        let survivors = outcome.apply(&mut candidates);
        let hypervolume = population_hypervolume(survivors.iter());

        let lines = candidates
            .into_iter()
            .enumerate()
            .map(|(i, individual)| RecordLine {
                generation: generation_index,
                selected: outcome.selected.binary_search(&i).is_ok(),
                individual,
            })
            .collect();
        let record = GenerationRecord {
            generation_index,
            candidates: lines,
            hypervolume,
            fallback_count,
            wall_time: started.elapsed(),
        };
        Ok((Population::new(survivors), record))
    }
}

/// Hypervolume of a population w.r.t. (0,0).
pub fn population_hypervolume<'i>(members: impl Iterator<Item = &'i Individual>) -> f64 {
    let pts: Vec<FitnessPoint> = members.map(|m| m.fitness).collect();
    hypervolume_2d(&pts, ReferencePoint::ORIGIN).expect("fitness points are never below the origin")
}

/// Best / worst / mean / sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub best: Option<f64>,
    pub worst: Option<f64>,
    pub mean: Option<f64>,
    pub std_dev: Option<f64>,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Stats {
                best: None,
                worst: None,
                mean: None,
                std_dev: None,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_dev = (n > 1).then(|| {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Stats {
            best: values.iter().copied().reduce(f64::max),
            worst: values.iter().copied().reduce(f64::min),
            mean: Some(mean),
            std_dev,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRepetition {
    pub repetition: usize,
    pub error: String,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub pair: ObjectivePair,
    pub selector: Selector,
    pub hv_mode: SubsetMode,
    pub mu: usize,
    pub lambda: usize,
    pub generations: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub completed: Vec<usize>,
    pub failed: Vec<FailedRepetition>,
    /// Hypervolume of the last generation, per completed repetition.
    pub final_hypervolumes: Vec<f64>,
    /// Largest hypervolume seen in any generation, per completed repetition.
    pub max_hypervolumes: Vec<f64>,
    #[serde(rename = "final")]
    pub final_stats: Stats,
    pub running_max: Stats,
}

/// Per-generation progress notification.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub repetition: usize,
    pub generation: usize,
    pub hypervolume: f64,
    pub fallback_count: usize,
}

/// Result of one repetition.
#[derive(Debug, Clone)]
pub struct RepetitionResult {
    pub hypervolumes: Vec<f64>,
    pub final_population: Population,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), RunError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn write_generation(dir: &Path, record: &GenerationRecord) -> Result<(), RunError> {
    let mut buf = Vec::new();
    for line in &record.candidates {
        serde_json::to_writer(&mut buf, line).expect("records serialize");
        buf.push(b'\n');
    }
    write_file(
        &dir.join(format!("gen_{}.jsonl", record.generation_index)),
        &buf,
    )
}

/// Runs one repetition with seed `config.seed + repetition` and writes its
/// records into `<experiment>/rep_<r>/`.
pub fn run_repetition(
    config: &RunConfig,
    backends: Backends<'_>,
    repetition: usize,
    progress: &mut dyn FnMut(Progress),
) -> Result<RepetitionResult, RunError> {
    let dir = config.experiment_dir().join(format!("rep_{repetition}"));
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
    }
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(repetition as u64));
    let mut run = Run::new(config, backends);
    let mut population = run.initialize()?;

    let initial = GenerationRecord {
        generation_index: 0,
        candidates: population
            .members()
            .iter()
            .map(|i| RecordLine {
                generation: 0,
                selected: true,
                individual: i.clone(),
            })
            .collect(),
        hypervolume: population_hypervolume(population.members().iter()),
        fallback_count: 0,
        wall_time: Duration::ZERO,
    };
    let mut records = vec![initial];
    write_generation(&dir, &records[0])?;
    progress(Progress {
        repetition,
        generation: 0,
        hypervolume: records[0].hypervolume,
        fallback_count: 0,
    });

    for g in 1..=config.generations {
        let (next, record) = run.step(population, g, &mut rng)?;
        log::debug!("rep {repetition} gen {g} took {:?}", record.wall_time);
        write_generation(&dir, &record)?;
        progress(Progress {
            repetition,
            generation: g,
            hypervolume: record.hypervolume,
            fallback_count: record.fallback_count,
        });
        records.push(record);
        population = next;
    }

    let mut csv = String::from("generation,hypervolume,fallback_count\n");
    for r in &records {
        csv.push_str(&format!(
            "{},{},{}\n",
            r.generation_index, r.hypervolume, r.fallback_count
        ));
    }
    write_file(&dir.join("hypervolume.csv"), csv.as_bytes())?;

    let points = population.fitness_points();
    let front: Vec<&Individual> = nondominated_sort(&points)
        .first()
        .map(|f| {
            f.indices
                .iter()
                .map(|&i| &population.members()[i])
                .collect()
        })
        .unwrap_or_default();
    let export = serde_json::json!({
        "pair": config.pair,
        "selector": config.selector,
        "repetition": repetition,
        "generation": config.generations,
        "hypervolume": records.last().map(|r| r.hypervolume),
        "front": front,
    });
    let mut body = serde_json::to_vec_pretty(&export).expect("front serializes");
    body.push(b'\n');
    write_file(&dir.join("pareto_front.json"), &body)?;

    Ok(RepetitionResult {
        hypervolumes: records.iter().map(|r| r.hypervolume).collect(),
        final_population: population,
    })
}

/// Runs every repetition, writes `summary.json`, and returns the summary.
/// A failing repetition is recorded and skipped.
pub fn run_experiment(
    config: &RunConfig,
    backends: Backends<'_>,
    progress: &mut dyn FnMut(Progress),
) -> Result<Summary, RunError> {
    config.validate()?;
    let dir = config.experiment_dir();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    let mut completed = Vec::new();
    let mut failed = Vec::new();
    let mut finals = Vec::new();
    let mut maxima = Vec::new();
    for r in 0..config.repetitions {
        match run_repetition(config, backends, r, progress) {
            Ok(res) => {
                completed.push(r);
                finals.push(
                    *res.hypervolumes
                        .last()
                        .expect("generation 0 is always recorded"),
                );
                maxima.push(
                    res.hypervolumes
                        .iter()
                        .copied()
                        .fold(f64::NEG_INFINITY, f64::max),
                );
            }
            Err(e) => {
                log::error!("repetition {r} failed: {e}");
                failed.push(FailedRepetition {
                    repetition: r,
                    error: e.to_string(),
                });
            }
        }
    }

    let summary = Summary {
        pair: config.pair,
        selector: config.selector,
        hv_mode: config.hv_mode,
        mu: config.mu,
        lambda: config.lambda,
        generations: config.generations,
        repetitions: config.repetitions,
        seed: config.seed,
        completed,
        failed,
        final_stats: Stats::of(&finals),
        running_max: Stats::of(&maxima),
        final_hypervolumes: finals,
        max_hypervolumes: maxima,
    };
    let path = dir.join("summary.json");
    let mut body = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    body.push(b'\n');
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    f.write_all(&body).map_err(io_err(&path))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::{LexiconClassifier, MockGenerator};

    fn config() -> RunConfig {
        let mut c = RunConfig::new("joy:fear".parse().unwrap(), Selector::Nsga2);
        c.generations = 2;
        c.repetitions = 1;
        c
    }

    #[test]
    fn stats_formulas() {
        let s = Stats::of(&[0.2, 0.4, 0.6]);
        assert_eq!(s.best, Some(0.6));
        assert_eq!(s.worst, Some(0.2));
        assert!((s.mean.unwrap() - 0.4).abs() < 1e-15);
        assert!((s.std_dev.unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(Stats::of(&[0.3]).std_dev, None);
        assert_eq!(Stats::of(&[]).mean, None);
    }

    #[test]
    fn config_validation() {
        let mut c = config();
        c.seed_prompts.truncate(9);
        assert!(matches!(c.validate(), Err(RunError::Config(_))));
        let mut c = config();
        c.mu = 0;
        assert!(c.validate().is_err());
        assert!(config().validate().is_ok());
    }

    #[test]
    fn initialize_uses_seed_prompts_in_order() {
        let c = config();
        let (g, k) = (MockGenerator::new(1), LexiconClassifier::default());
        let mut run = Run::new(
            &c,
            Backends {
                generator: &g,
                classifier: &k,
            },
        );
        let pop = run.initialize().unwrap();
        assert_eq!(pop.len(), 10);
        for (i, m) in pop.members().iter().enumerate() {
            assert_eq!(m.prompt, c.seed_prompts[i]);
            assert_eq!(m.id, IndividualId(i as u64));
            assert!(!m.has_selection_metadata());
        }
    }

    #[test]
    fn offspring_ids_continue_after_parents() {
        let c = config();
        let (g, k) = (MockGenerator::new(1), LexiconClassifier::default());
        let mut run = Run::new(
            &c,
            Backends {
                generator: &g,
                classifier: &k,
            },
        );
        let pop = run.initialize().unwrap();
        let (kids, _) = run.produce_offspring(&pop, 5, &mut ChaCha8Rng::seed_from_u64(0));
        let ids: Vec<u64> = kids.iter().map(|k| k.id.0).collect();
        assert_eq!(ids, vec![10, 11, 12, 13, 14]);
    }

    fn run_with<'a>(c: &'a RunConfig, g: &'a MockGenerator, k: &'a LexiconClassifier) -> Run<'a> {
        Run::new(
            c,
            Backends {
                generator: g,
                classifier: k,
            },
        )
    }

    #[test]
    fn step_is_elitist_and_records_are_consistent() {
        let c = config();
        let (g, k) = (MockGenerator::new(3), LexiconClassifier::default());
        let mut run = run_with(&c, &g, &k);
        let mut pop = run.initialize().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut seen: std::collections::HashSet<u64> =
            pop.members().iter().map(|m| m.id.0).collect();
        for gen in 1..=5 {
            let (next, rec) = run.step(pop, gen, &mut rng).unwrap();
            assert_eq!(next.len(), c.mu);
            assert_eq!(rec.candidates.len(), c.mu + c.lambda);
            assert!(rec
                .candidates
                .iter()
                .all(|l| l.individual.has_selection_metadata()));
            let recomputed = population_hypervolume(rec.population());
            assert!((recomputed - rec.hypervolume).abs() < 1e-12);
            // every parent id refers to an individual created earlier
            for l in &rec.candidates {
                for pid in &l.individual.parent_ids {
                    assert!(seen.contains(&pid.0), "unknown parent {pid:?}");
                }
            }
            seen.extend(rec.candidates.iter().map(|l| l.individual.id.0));
            // rank-0 members of the pool survive when they fit
            let front0: Vec<_> = rec
                .candidates
                .iter()
                .filter(|l| l.individual.rank == Some(0))
                .collect();
            if front0.len() <= c.mu {
                assert!(front0.iter().all(|l| l.selected));
            }
            pop = next;
        }
    }

    #[test]
    fn zero_lambda_keeps_parents() {
        let mut c = config();
        c.lambda = 0;
        let (g, k) = (MockGenerator::new(3), LexiconClassifier::default());
        let mut run = run_with(&c, &g, &k);
        let pop = run.initialize().unwrap();
        let ids: Vec<u64> = pop.members().iter().map(|m| m.id.0).collect();
        let (next, rec) = run.step(pop, 1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(
            next.members().iter().map(|m| m.id.0).collect::<Vec<_>>(),
            ids
        );
        assert!(rec.candidates.iter().all(|l| l.selected));
    }

    #[test]
    fn two_parents_are_enough() {
        let mut c = config();
        c.mu = 2;
        c.lambda = 4;
        let (g, k) = (MockGenerator::new(3), LexiconClassifier::default());
        let mut run = run_with(&c, &g, &k);
        let pop = run.initialize().unwrap();
        let (kids, _) = run.produce_offspring(&pop, 4, &mut ChaCha8Rng::seed_from_u64(1));
        for kid in kids {
            let mut p = kid.parent_ids.clone();
            p.sort();
            assert_eq!(p, vec![IndividualId(0), IndividualId(1)]);
        }
    }

    #[test]
    fn offspring_do_not_depend_on_count() {
        let c = config();
        let (g, k) = (MockGenerator::new(3), LexiconClassifier::default());
        let mut run = run_with(&c, &g, &k);
        let pop = run.initialize().unwrap();
        let (few, _) = run.produce_offspring(&pop, 3, &mut ChaCha8Rng::seed_from_u64(5));
        let (many, _) = run.produce_offspring(&pop, 8, &mut ChaCha8Rng::seed_from_u64(5));
        for (a, b) in few.iter().zip(&many) {
            assert_eq!(a.prompt, b.prompt);
            assert_eq!(a.text, b.text);
        }
    }
}
