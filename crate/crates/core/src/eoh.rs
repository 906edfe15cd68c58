//! One idea-guided evolutionary search: a population seeded from sampled
//! thoughts, then generations of strategy-driven proposals with elitist
//! survival.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{EvalHarness, EvalResult, KernelTask};
use crate::kernel::{KernelCandidate, Origin};
use crate::llm::{
    extract_boxed_description, extract_code, render_prompt, ChatRequest, Gateway, RenderedPrompt, TemplateId,
};
use crate::pool::{sample_thoughts, Idea, Thought};
use crate::rag::{augment_prompt, build_query, search, RagConfig, RetrievalIndex};
use crate::util::{self, draw_index, softmax};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Target {
    pub hardware_type: String,
    pub extensions: String,
}

impl Default for Target {
    fn default() -> Self {
        Target {
            hardware_type: "Spacemit K1".into(),
            extensions: "RVV1.0 and RVA22".into(),
        }
    }
}

/// A prompt strategy: how many parents it reads and what it asks for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Strategy {
    pub id: String,
    pub parents: usize,
    pub instruction: String,
}

/// Two recombination strategies over two parents, three mutations of one.
pub fn default_strategies() -> Vec<Strategy> {
    let s = |id: &str, parents, instruction: &str| Strategy {
        id: id.into(),
        parents,
        instruction: instruction.into(),
    };
    vec![
        s("e1", 2, "Study the parent kernels below, then write a new kernel whose optimization thought differs as much as possible from all of them."),
        s("e2", 2, "Find the optimization thought shared by the parent kernels below, then write a new kernel that pushes that shared thought further in a different way."),
        s("m1", 1, "Rewrite the kernel below with a modified optimization thought that changes how it uses the hardware."),
        s("m2", 1, "Keep the optimization thought of the kernel below but retune its parameters, such as unroll factors, vector register grouping or block sizes."),
        s("m3", 1, "Simplify the kernel below: drop redundant work and any component that does not make it faster, keeping results unchanged."),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub population_size: usize,
    pub generations: usize,
    pub strategies: Vec<Strategy>,
    /// Softmax temperature over parent speedups.
    pub parent_temperature: f64,
    /// Softmax temperature over thought efficiencies.
    pub thought_temperature: f64,
    pub llm_temperature: f64,
    pub max_tokens: u32,
    /// Cap on thought code examples quoted in seed prompts.
    pub code_example_chars: usize,
    pub thought_sampling: ThoughtSampling,
    pub rag: RagConfig,
}

/// How a search draws thoughts from its idea.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThoughtSampling {
    /// Softmax over efficiencies.
    #[default]
    Weighted,
    Uniform,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            population_size: 5,
            generations: 5,
            strategies: default_strategies(),
            parent_temperature: 1.0,
            thought_temperature: 1.0,
            llm_temperature: 0.7,
            max_tokens: 4096,
            code_example_chars: 4000,
            thought_sampling: ThoughtSampling::Weighted,
            rag: RagConfig::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 || self.generations == 0 {
            return Err(Error::Config("population_size and generations must be at least 1".into()));
        }
        if self.strategies.is_empty() || self.strategies.iter().any(|s| s.parents == 0) {
            return Err(Error::Config("need at least one strategy, each reading at least one parent".into()));
        }
        if !(self.parent_temperature > 0.0 && self.thought_temperature > 0.0) {
            return Err(Error::Config("temperatures must be positive".into()));
        }
        Ok(())
    }

    /// Generation calls one search makes, not counting re-prompts.
    pub fn generation_budget(&self) -> usize {
        self.population_size * (1 + self.strategies.len() * self.generations)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Lineage {
    /// `seed`, `fallback`, or a strategy id.
    pub strategy: String,
    pub parents: Vec<String>,
    pub thought_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: String,
    pub generation: usize,
    pub description: String,
    pub source: String,
    pub source_hash: String,
    pub eval: Option<EvalResult>,
    /// Why the reply could not be turned into a candidate.
    pub invalid: Option<String>,
    /// Stand-in copy of the reference after a seed failed twice.
    pub fallback: bool,
    pub lineage: Lineage,
}

impl Individual {
    /// Sources are stored with exactly one trailing newline.
    pub fn new(id: String, generation: usize, description: String, source: String, lineage: Lineage) -> Self {
        let mut source = source.trim_end().to_string();
        if !source.is_empty() {
            source.push('\n');
        }
        Individual {
            id,
            generation,
            source_hash: util::sha256_hex(&source),
            description,
            source,
            eval: None,
            invalid: None,
            fallback: false,
            lineage,
        }
    }

    fn invalid(id: String, generation: usize, reason: String, lineage: Lineage) -> Self {
        Individual {
            invalid: Some(reason),
            ..Individual::new(id, generation, String::new(), String::new(), lineage)
        }
    }

    pub fn fitness(&self) -> f64 {
        self.eval.as_ref().map_or(f64::NEG_INFINITY, EvalResult::fitness)
    }

    pub fn is_valid(&self) -> bool {
        self.invalid.is_none() && self.eval.as_ref().is_some_and(|e| e.correct)
    }
}

/// One line of the search trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub generation: usize,
    pub id: String,
    pub strategy: String,
    pub parents: Vec<String>,
    pub thought_id: Option<String>,
    pub description: String,
    pub source_hash: String,
    pub correct: bool,
    pub speedup: Option<f64>,
    pub failure: Option<String>,
    pub fallback: bool,
}

impl From<&Individual> for TraceRecord {
    fn from(i: &Individual) -> Self {
        let failure = i.invalid.clone().or_else(|| {
            i.eval
                .as_ref()
                .and_then(|e| e.failure.as_ref())
                .map(|f| format!("{:?}: {}", f.stage, f.detail))
        });
        TraceRecord {
            generation: i.generation,
            id: i.id.clone(),
            strategy: i.lineage.strategy.clone(),
            parents: i.lineage.parents.clone(),
            thought_id: i.lineage.thought_id.clone(),
            description: i.description.clone(),
            source_hash: i.source_hash.clone(),
            correct: i.is_valid(),
            speedup: i.eval.as_ref().and_then(|e| e.speedup),
            failure,
            fallback: i.fallback,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub proposals: usize,
    pub valid: usize,
    pub population_size: usize,
    pub population_best: f64,
    pub best_ever: f64,
}

/// Feedback for the idea pool: the search's gain over its reference kernel,
/// split evenly over the sampled thoughts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub idea_id: String,
    pub thought_ids: Vec<String>,
    pub delta: f64,
    pub shares: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: Individual,
    pub usage: UsageRecord,
    pub generations: Vec<GenerationStats>,
    pub trace: Vec<TraceRecord>,
    pub thoughts_with_replacement: bool,
}

impl SearchOutcome {
    pub fn best_candidate(&self, iteration: usize, search: usize) -> KernelCandidate {
        let b = &self.best;
        KernelCandidate::new(
            format!("it{iteration:02}-s{search}-{}", b.id),
            b.description.clone(),
            b.source.clone(),
            b.eval.clone().expect("best individual is evaluated"),
            Origin {
                iteration,
                search: Some(search),
                strategy: Some(b.lineage.strategy.clone()),
                parents: b.lineage.parents.clone(),
                idea_id: Some(self.usage.idea_id.clone()),
                thought_ids: self.usage.thought_ids.clone(),
            },
        )
    }
}

/// Everything a search reads but does not own.
#[derive(Clone, Copy)]
pub struct SearchDeps<'a> {
    pub gateway: &'a Gateway,
    pub harness: &'a EvalHarness,
    pub task: &'a KernelTask,
    pub target: &'a Target,
    /// Pre-built document index; thought code examples are added per search.
    pub docs: Option<&'a RetrievalIndex>,
}

pub struct EohEngine<'a> {
    config: &'a SearchConfig,
    deps: SearchDeps<'a>,
    reference: &'a KernelCandidate,
    index: Option<RetrievalIndex>,
    trace: Vec<TraceRecord>,
}

impl<'a> EohEngine<'a> {
    /// Sets up the engine; the retrieval index is the document index plus the
    /// code examples of `thoughts`.
    pub fn new(
        config: &'a SearchConfig,
        deps: SearchDeps<'a>,
        reference: &'a KernelCandidate,
        thoughts: &[Thought],
    ) -> Result<Self> {
        config.validate()?;
        let rag = &config.rag;
        let index = if rag.enabled && (rag.use_documents || rag.use_code_examples) {
            let base = match deps.docs.filter(|_| rag.use_documents) {
                Some(idx) => idx.clone(),
                None => RetrievalIndex::empty(deps.gateway.embedding_dim(), deps.gateway.embedder_id(), 1500, 200),
            };
            let mut seen = std::collections::BTreeSet::new();
            let extra: Vec<(String, String)> = thoughts
                .iter()
                .filter(|t| rag.use_code_examples && !t.code_examples.trim().is_empty() && seen.insert(t.id.clone()))
                .map(|t| (format!("thought:{}", t.id), t.code_examples.clone()))
                .collect();
            Some(base.with_documents(&extra, deps.gateway)?)
        } else {
            None
        };
        Ok(EohEngine {
            config,
            deps,
            reference,
            index,
            trace: Vec::new(),
        })
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    fn system_bindings(&self) -> Vec<(&'static str, String)> {
        vec![
            ("operation", self.deps.task.operation.clone()),
            ("hardware_type", self.deps.target.hardware_type.clone()),
            ("extensions", self.deps.target.extensions.clone()),
            ("code_of_reference_implementation", self.reference.source.clone()),
        ]
    }

    fn ask(&self, tag: &str, prompt: RenderedPrompt, reprompt: bool) -> Result<String> {
        let mut request = ChatRequest::new(tag, prompt).with_sampling(self.config.llm_temperature, self.config.max_tokens);
        request.reprompt = reprompt;
        Ok(self.deps.gateway.chat(&request)?.text)
    }

    fn evaluate(&self, ind: &mut Individual) -> Result<()> {
        if ind.invalid.is_none() {
            ind.eval = Some(self.deps.harness.evaluate(&ind.source, self.deps.task)?);
        }
        Ok(())
    }

    fn seed_attempt(&self, index: usize, thought: &Thought, reprompt: bool) -> Result<Individual> {
        let mut bindings = self.system_bindings();
        bindings.push(("thought", thought.description.clone()));
        bindings.push((
            "code_examples",
            thought.code_examples.chars().take(self.config.code_example_chars).collect(),
        ));
        let reply = self.ask("seed_init", render_prompt(TemplateId::SeedInit, bindings)?, reprompt)?;
        let lineage = Lineage {
            strategy: "seed".into(),
            parents: vec![self.reference.id.clone()],
            thought_id: Some(thought.id.clone()),
        };
        let id = format!("g0-s{index:02}{}", if reprompt { "r" } else { "" });
        let parsed = extract_boxed_description(&reply)
            .or_else(|_| extract_code(&reply).map(|code| (thought.description.clone(), code)));
        let mut ind = match parsed {
            Ok((description, code)) => Individual::new(id, 0, description, code, lineage),
            Err(e) => Individual::invalid(id, 0, e.to_string(), lineage),
        };
        self.evaluate(&mut ind)?;
        Ok(ind)
    }

    /// One individual per thought. A failed seed is retried once, then
    /// replaced by a copy of the reference flagged `fallback`.
    pub fn seed_population(&mut self, thoughts: &[Thought]) -> Result<Vec<Individual>> {
        if thoughts.len() != self.config.population_size {
            return Err(Error::Config(format!(
                "seeding needs {} thoughts, got {}",
                self.config.population_size,
                thoughts.len()
            )));
        }
        let mut population = Vec::with_capacity(thoughts.len());
        for (i, thought) in thoughts.iter().enumerate() {
            let mut chosen = None;
            for reprompt in [false, true] {
                let ind = self.seed_attempt(i, thought, reprompt)?;
                self.trace.push(TraceRecord::from(&ind));
                if ind.is_valid() {
                    chosen = Some(ind);
                    break;
                }
            }
            let ind = chosen.unwrap_or_else(|| {
                let mut f = Individual::new(
                    format!("g0-s{i:02}f"),
                    0,
                    self.reference.description.clone(),
                    self.reference.source.clone(),
                    Lineage {
                        strategy: "fallback".into(),
                        parents: vec![self.reference.id.clone()],
                        thought_id: Some(thought.id.clone()),
                    },
                );
                f.eval = Some(self.reference.eval.clone());
                f.fallback = true;
                self.trace.push(TraceRecord::from(&f));
                f
            });
            population.push(ind);
        }
        sort_population(&mut population);
        Ok(population)
    }

    fn pick_parents<'p, R: Rng + ?Sized>(&self, count: usize, population: &'p [Individual], rng: &mut R) -> Vec<&'p Individual> {
        let fitness: Vec<f64> = population.iter().map(Individual::fitness).collect();
        let mut probs = softmax(&fitness, self.config.parent_temperature);
        let mut out = Vec::new();
        for _ in 0..count.min(population.len()) {
            let i = draw_index(&probs, rng);
            probs[i] = 0.0;
            out.push(&population[i]);
        }
        out
    }

    /// Builds and sends one strategy prompt; the reply becomes an unevaluated
    /// individual, marked invalid when it cannot be parsed.
    pub fn propose<R: Rng + ?Sized>(
        &self,
        strategy: &Strategy,
        population: &[Individual],
        id: String,
        generation: usize,
        rng: &mut R,
    ) -> Result<Individual> {
        if population.is_empty() {
            return Err(Error::State("cannot propose from an empty population".into()));
        }
        let parents = self.pick_parents(strategy.parents, population, rng);
        let mut slot = strategy.instruction.clone();
        for (i, p) in parents.iter().enumerate() {
            slot.push_str(&format!(
                "\n\nParent kernel {} thought: {}\nParent kernel {} code:\n```c\n{}\n```",
                i + 1,
                p.description,
                i + 1,
                p.source.trim_end()
            ));
        }
        let mut bindings = self.system_bindings();
        bindings.push(("kernel code", slot));
        let mut prompt = render_prompt(TemplateId::EohStep, bindings)?;
        if let Some(index) = &self.index {
            let rag = &self.config.rag;
            let pairs: Vec<(&str, &str)> = parents.iter().map(|p| (p.description.as_str(), p.source.as_str())).collect();
            let query = build_query(&strategy.instruction, &pairs, rag.query_source_chars);
            let hits = search(index, self.deps.gateway, &query, rag.top_k)?;
            prompt.user = augment_prompt(&prompt.user, hits.iter().map(|h| h.chunk), rag.char_budget);
        }
        let reply = self.ask(&format!("eoh:{}", strategy.id), prompt, false)?;
        let lineage = Lineage {
            strategy: strategy.id.clone(),
            parents: parents.iter().map(|p| p.id.clone()).collect(),
            thought_id: None,
        };
        Ok(match extract_boxed_description(&reply) {
            Ok((description, code)) => Individual::new(id, generation, description, code, lineage),
            Err(e) => Individual::invalid(id, generation, e.to_string(), lineage),
        })
    }

    /// Applies every strategy once per population slot, evaluates the
    /// parseable proposals, and keeps the best `M` of old and new.
    pub fn step_generation<R: Rng + ?Sized>(
        &mut self,
        population: Vec<Individual>,
        generation: usize,
        rng: &mut R,
    ) -> Result<(Vec<Individual>, Vec<Individual>)> {
        let mut proposals = Vec::with_capacity(self.config.population_size * self.config.strategies.len());
        for round in 0..self.config.population_size {
            for strategy in &self.config.strategies {
                let id = format!("g{generation}-{}-{round:02}", strategy.id);
                proposals.push(self.propose(strategy, &population, id, generation, rng)?);
            }
        }
        let evals: Vec<Option<EvalResult>> = proposals
            .par_iter()
            .map(|p| match p.invalid {
                Some(_) => Ok(None),
                None => self.deps.harness.evaluate(&p.source, self.deps.task).map(Some),
            })
            .collect::<Result<_>>()?;
        for (p, e) in proposals.iter_mut().zip(evals) {
            p.eval = e;
            self.trace.push(TraceRecord::from(&*p));
        }
        let mut next = population;
        next.extend(proposals.iter().filter(|p| p.is_valid()).cloned());
        sort_population(&mut next);
        next.truncate(self.config.population_size);
        Ok((next, proposals))
    }
}

/// Fitness descending; stable, so incumbents win ties.
fn sort_population(population: &mut [Individual]) {
    population.sort_by(|a, b| b.fitness().total_cmp(&a.fitness()));
}

fn better_than(candidate: &Individual, best: &Individual) -> bool {
    candidate.is_valid() && candidate.fitness() > best.fitness()
}

/// Samples `M` thoughts from `idea`, seeds, evolves for `G` generations and
/// returns the best individual ever seen with its usage record.
pub fn run_search<R: Rng + ?Sized>(
    reference: &KernelCandidate,
    idea: &Idea,
    config: &SearchConfig,
    deps: SearchDeps<'_>,
    rng: &mut R,
) -> Result<SearchOutcome> {
    config.validate()?;
    let temperature = match config.thought_sampling {
        ThoughtSampling::Weighted => config.thought_temperature,
        ThoughtSampling::Uniform => f64::INFINITY,
    };
    let sample = sample_thoughts(idea, config.population_size, temperature, rng)?;
    let mut engine = EohEngine::new(config, deps, reference, &sample.thoughts)?;
    let mut population = engine.seed_population(&sample.thoughts)?;
    let mut best = population[0].clone();
    let mut generations = Vec::with_capacity(config.generations);
    for g in 1..=config.generations {
        let (next, proposals) = engine.step_generation(population, g, rng)?;
        for p in &proposals {
            if better_than(p, &best) {
                best = p.clone();
            }
        }
        population = next;
        generations.push(GenerationStats {
            generation: g,
            proposals: proposals.len(),
            valid: proposals.iter().filter(|p| p.is_valid()).count(),
            population_size: population.len(),
            population_best: population[0].fitness(),
            best_ever: best.fitness(),
        });
    }
    let thought_ids: Vec<String> = sample.thoughts.iter().map(|t| t.id.clone()).collect();
    let delta = best.fitness() - reference.speedup();
    let mut shares: BTreeMap<String, f64> = BTreeMap::new();
    for id in &thought_ids {
        *shares.entry(id.clone()).or_default() += delta / thought_ids.len() as f64;
    }
    Ok(SearchOutcome {
        best,
        usage: UsageRecord {
            idea_id: idea.id.clone(),
            thought_ids,
            delta,
            shares: shares.into_iter().collect(),
        },
        generations,
        trace: engine.trace,
        thoughts_with_replacement: sample.with_replacement,
    })
}
