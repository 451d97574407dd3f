//! Planted-signal synthetic founder datasets.
//!
//! Every feature is drawn independently from a fixed per-feature
//! distribution. Funding follows a log-linear planted function,
//!
//! ```text
//! log10(funding) = base + Σ w_j · x_j + N(0, noise_sigma)
//! ```
//!
//! with a fixed `base`. The planted category weight places categories on a
//! lattice of funding levels; the `category_list` mix is tilted
//! exponentially (`p_k ∝ m_k · e^{t·k}`) with `t` solved by bisection so the
//! expected success rate matches `positive_rate`. Success is then drawn from
//! the funding class of the noisy amount (amounts above $500M are successful by definition), and
//! funding below $10M is clamped into the [$100K, $4M] band expected of
//! unsuccessful founders. Successful founders whose funding does not exceed
//! $500M receive an exit valuation drawn log-uniformly from ($500M, $5B).

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classes::{FundingClass, REFERENCE_SUCCESS_PROBS};
use crate::data::{Dataset, FounderRecord, Label, SUCCESS_THRESHOLD, UNSUCCESSFUL_FUNDING_RANGE};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::schema::{Branch, FeatureDecl, FeatureSchema, Origin, CATEGORY_LEVELS, RATING_LEVELS};

const BLOCK: usize = 1024;
/// Maximum deviation of the realized positive rate from the target.
pub const RATE_TOLERANCE: f64 = 0.007;
const MAX_LABEL_ATTEMPTS: u64 = 1000;
/// Exit valuations for successful founders are log-uniform on this range.
pub const EXIT_RANGE: (f64, f64) = (SUCCESS_THRESHOLD, 5e9);
/// Amounts below this are clamped into the unsuccessful funding band.
pub const CLAMP_CEILING: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_records: usize,
    pub positive_rate: f64,
    /// Planted contribution to log10 funding per unit of each feature.
    pub signal_weights: BTreeMap<String, f64>,
    /// Standard deviation of the log10 funding noise.
    pub noise_sigma: f64,
    pub class_success_probs: BTreeMap<FundingClass, f64>,
    /// Description templates per `category_list` level label.
    pub text_templates: BTreeMap<String, Vec<String>>,
    /// Sampling weights of the `category_list` levels, in code order.
    pub category_mix: Vec<f64>,
    pub base_log_funding: f64,
    /// Probability that a description is drawn from the founder's own
    /// category's templates rather than from a random category.
    pub text_fidelity: f64,
    /// Emit LLM-derived features as free text for an enrichment provider
    /// instead of structured values.
    pub llm_as_text: bool,
    pub seed: u64,
}

pub const DEFAULT_NOISE_SIGMA: f64 = 0.02;

pub fn default_signal_weights() -> BTreeMap<String, f64> {
    [
        ("category_list", 0.7),
        ("domain_expertise", 0.025),
        ("prior_exit", 0.04),
        ("skill_relevance", 0.01),
        ("number_of_founders", 0.01),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

pub fn default_category_mix() -> Vec<f64> {
    vec![0.45, 0.33, 0.15, 0.03, 0.012, 0.008, 0.006, 0.005, 0.005, 0.004]
}

pub fn default_text_templates() -> BTreeMap<String, Vec<String>> {
    let phrases: [(&str, [&str; 3]); 10] = [
        ("consumer", ["a mobile app for everyday shoppers", "a social platform for friends", "a subscription service for households"]),
        ("ecommerce", ["an online marketplace for independent sellers", "a storefront builder for merchants", "a checkout tool for retail brands"]),
        ("media", ["a streaming network for creators", "a newsletter platform for journalists", "a podcast studio and audience tools"]),
        ("enterprise_software", ["workflow software for operations teams", "a data platform for enterprise analytics", "collaboration software for large companies"]),
        ("fintech", ["payments infrastructure for small businesses", "a lending platform with automated underwriting", "banking software for credit unions"]),
        ("hardware", ["robotic arms for warehouse automation", "sensors for industrial equipment", "consumer electronics for the smart home"]),
        ("healthcare", ["a care coordination platform for clinics", "remote patient monitoring for hospitals", "a telehealth service for chronic care"]),
        ("ai_ml", ["machine learning models for document processing", "an AI assistant for customer support", "computer vision for quality inspection"]),
        ("biotech", ["gene therapies for rare diseases", "cancer diagnostics from blood samples", "drug discovery with protein engineering"]),
        ("deep_tech", ["quantum computing hardware", "fusion energy reactors", "advanced materials for semiconductors"]),
    ];
    phrases
        .iter()
        .map(|(cat, ps)| {
            let templates = ps
                .iter()
                .flat_map(|p| {
                    [
                        format!("We are building {p}."),
                        format!("Our company develops {p} for a fast growing market."),
                    ]
                })
                .collect();
            (cat.to_string(), templates)
        })
        .collect()
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_records: 10_825,
            positive_rate: 0.085,
            signal_weights: default_signal_weights(),
            noise_sigma: DEFAULT_NOISE_SIGMA,
            class_success_probs: FundingClass::ALL.into_iter().zip(REFERENCE_SUCCESS_PROBS).collect(),
            text_templates: default_text_templates(),
            category_mix: default_category_mix(),
            base_log_funding: 5.0,
            text_fidelity: 0.5,
            llm_as_text: false,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    /// Default configuration with the noise halved.
    pub fn strong_signal() -> Self {
        GeneratorConfig {
            noise_sigma: DEFAULT_NOISE_SIGMA / 2.0,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn class_probs(&self) -> Result<[f64; 5]> {
        let mut out = [0.0; 5];
        for c in FundingClass::ALL {
            out[c.index()] = *self
                .class_success_probs
                .get(&c)
                .ok_or_else(|| Error::Generator(format!("missing success probability for class {c}")))?;
        }
        Ok(out)
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        if self.n_records == 0 {
            return Err(Error::Generator("n_records must be positive".into()));
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return Err(Error::Generator(format!("positive_rate must lie in (0, 1), got {}", self.positive_rate)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Generator(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !self.base_log_funding.is_finite() {
            return Err(Error::Generator("base_log_funding must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.text_fidelity) {
            return Err(Error::Generator(format!("text_fidelity must lie in [0, 1], got {}", self.text_fidelity)));
        }
        let probs = self.class_probs()?;
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Generator("class success probabilities must lie in [0, 1]".into()));
        }
        if probs.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Generator("class success probabilities must be non-decreasing".into()));
        }
        for (name, w) in &self.signal_weights {
            let decl = schema
                .get(name)
                .ok_or_else(|| Error::Generator(format!("signal weight for unknown feature {name}")))?;
            if decl.branch == Branch::Textual {
                return Err(Error::Generator(format!("textual feature {name} cannot carry a planted weight")));
            }
            if !w.is_finite() {
                return Err(Error::Generator(format!("signal weight for {name} is not finite")));
            }
        }
        if let Some(cat) = schema.get("category_list") {
            if self.category_mix.len() != cat.levels().len() || self.category_mix.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::Generator("category_mix must give one non-negative weight per category level".into()));
            }
            if self.category_mix.iter().sum::<f64>() <= 0.0 {
                return Err(Error::Generator("category_mix must not be all zero".into()));
            }
        }
        Ok(())
    }
}

/// Per-feature sampling distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampler {
    /// Integer values `0..probs.len()` with the given weights.
    Levels(Vec<f64>),
    /// Explicit values with weights.
    Discrete(Vec<(f64, f64)>),
    Bernoulli(f64),
    Normal { mean: f64, sd: f64 },
    Text,
}

impl Sampler {
    fn normalized(weights: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let total: f64 = weights.iter().map(|w| w.1).sum();
        weights.iter().map(|&(v, p)| (v, p / total)).collect()
    }

    fn support(&self) -> Vec<(f64, f64)> {
        match self {
            Sampler::Levels(p) => Self::normalized(&p.iter().enumerate().map(|(i, &w)| (i as f64, w)).collect::<Vec<_>>()),
            Sampler::Discrete(vp) => Self::normalized(vp),
            Sampler::Bernoulli(p) => vec![(0.0, 1.0 - p), (1.0, *p)],
            _ => Vec::new(),
        }
    }

    /// Population standard deviation of the distribution.
    pub fn std(&self) -> f64 {
        match self {
            Sampler::Normal { sd, .. } => *sd,
            Sampler::Text => 0.0,
            _ => {
                let s = self.support();
                let m: f64 = s.iter().map(|(v, p)| v * p).sum();
                s.iter().map(|(v, p)| p * (v - m) * (v - m)).sum::<f64>().sqrt()
            }
        }
    }

    fn draw(&self, rng: &mut StreamRng) -> f64 {
        match self {
            Sampler::Normal { mean, sd } => Normal::new(*mean, *sd).expect("valid normal").sample(rng),
            Sampler::Text => 0.0,
            _ => {
                let s = self.support();
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for &(v, p) in &s {
                    acc += p;
                    if u < acc {
                        return v;
                    }
                }
                s.last().map(|x| x.0).unwrap_or(0.0)
            }
        }
    }
}

/// Sampling distribution used for a feature of the default schema; unknown
/// features fall back to a generic distribution for their branch.
pub fn sampler_for(decl: &FeatureDecl, config: &GeneratorConfig) -> Sampler {
    let levels = |p: &[f64]| Sampler::Levels(p.to_vec());
    let counts = |p: &[f64]| Sampler::Discrete(p.iter().enumerate().map(|(i, &w)| (i as f64, w)).collect());
    match decl.name.as_str() {
        "category_list" => levels(&config.category_mix),
        "education_level" => levels(&[0.2, 0.4, 0.3, 0.1]),
        "domain_expertise" => levels(&[0.3, 0.3, 0.25, 0.15]),
        "skill_relevance" => levels(&[0.15, 0.25, 0.3, 0.2, 0.1]),
        "number_of_founders" => Sampler::Discrete(vec![(1.0, 0.35), (2.0, 0.35), (3.0, 0.2), (4.0, 0.1)]),
        "previous_startups" => counts(&[0.55, 0.25, 0.13, 0.07]),
        "num_patents" => counts(&[0.7, 0.15, 0.08, 0.05, 0.02]),
        "num_board_roles" => counts(&[0.6, 0.25, 0.1, 0.05]),
        "num_degrees" => Sampler::Discrete(vec![(1.0, 0.5), (2.0, 0.35), (3.0, 0.15)]),
        "years_experience" => Sampler::Normal { mean: 12.0, sd: 6.0 },
        "founder_age" => Sampler::Normal { mean: 36.0, sd: 8.0 },
        "linkedin_connections" => Sampler::Normal { mean: 20.0, sd: 9.0 },
        "prior_exit" => Sampler::Bernoulli(0.15),
        "prior_ipo" => Sampler::Bernoulli(0.03),
        "is_ceo" => Sampler::Bernoulli(0.55),
        _ => match decl.branch {
            Branch::Categorical => Sampler::Levels(vec![1.0; decl.levels().len()]),
            Branch::Boolean => Sampler::Bernoulli(0.3),
            Branch::Continuous => {
                // Spread of the generic continuous features varies by name so
                // scales differ across columns.
                let h = rng::fnv1a(decl.name.as_bytes());
                let sd = 1.0 + (h % 16) as f64;
                let mean = 2.0 * sd + (h >> 8) as f64 % 10.0;
                Sampler::Normal { mean, sd }
            }
            Branch::Textual => Sampler::Text,
        },
    }
}

/// Ground-truth shares: `|w_j| × std(x_j)`, normalized, in descending order.
pub fn planted_importance(config: &GeneratorConfig) -> Vec<(String, f64)> {
    planted_importance_for(config, &FeatureSchema::default())
}

pub fn planted_importance_for(config: &GeneratorConfig, schema: &FeatureSchema) -> Vec<(String, f64)> {
    let mut raw: Vec<(String, f64)> = config
        .signal_weights
        .iter()
        .filter_map(|(name, w)| {
            let decl = schema.get(name)?;
            let v = w.abs() * sampler_for(decl, config).std();
            (v > 0.0).then(|| (name.clone(), v))
        })
        .collect();
    let total: f64 = raw.iter().map(|r| r.1).sum();
    if total > 0.0 {
        for r in &mut raw {
            r.1 /= total;
        }
    }
    raw.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    raw
}

/// Everything needed to audit a generated dataset against its planted truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub n_records: usize,
    pub base: f64,
    /// Solved exponential tilt of the category mix.
    pub category_tilt: f64,
    /// Category mix actually sampled from, after tilting.
    pub category_mix: Vec<f64>,
    pub signal_weights: BTreeMap<String, f64>,
    pub noise_sigma: f64,
    pub class_success_probs: BTreeMap<FundingClass, f64>,
    /// Probability applied to class members not already successful by funding alone.
    pub adjusted_class_probs: BTreeMap<FundingClass, f64>,
    pub target_positive_rate: f64,
    pub realized_positive_rate: f64,
    pub label_attempts: u64,
    pub planted_importance: Vec<(String, f64)>,
    /// Class mixture of the (noisy, pre-clamp) planted funding.
    pub class_mix: BTreeMap<FundingClass, f64>,
}

impl GroundTruth {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Sidecar path for a dataset's ground truth: `data.csv` → `data.truth.json`.
pub fn truth_path(csv: &std::path::Path) -> std::path::PathBuf {
    csv.with_extension("truth.json")
}

pub struct Generated {
    pub dataset: Dataset,
    pub truth: GroundTruth,
    /// Noise-free planted log10 funding per record (before clamping).
    pub planted_log_funding: Vec<f64>,
}

pub fn generate_dataset(config: &GeneratorConfig) -> Result<Dataset> {
    Ok(generate(config)?.dataset)
}

pub fn generate(config: &GeneratorConfig) -> Result<Generated> {
    generate_with_schema(config, Arc::new(FeatureSchema::default()))
}

struct Draft {
    record: FounderRecord,
    /// Planted signal from every weighted feature except `category_list`.
    partial: f64,
    noise: f64,
}

/// Category weights `base_k · exp(t · k)`, normalized.
pub fn tilted_mix(base: &[f64], t: f64) -> Vec<f64> {
    let raw: Vec<f64> = base.iter().enumerate().map(|(k, &b)| b * (t * k as f64).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

pub fn generate_with_schema(config: &GeneratorConfig, schema: Arc<FeatureSchema>) -> Result<Generated> {
    config.validate(&schema)?;
    let samplers: Vec<(FeatureDecl, Sampler)> = schema
        .features
        .iter()
        .map(|f| (f.clone(), sampler_for(f, config)))
        .collect();
    let n = config.n_records;
    let n_blocks = n.div_ceil(BLOCK);
    let noise = Normal::new(0.0, config.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid normal");

    let mut drafts: Vec<Draft> = (0..n_blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = rng::stream(config.seed, b as u64);
            let start = b * BLOCK;
            let end = (start + BLOCK).min(n);
            (start..end)
                .map(|i| draft_record(i, config, &samplers, &mut rng, &noise))
                .collect::<Vec<_>>()
        })
        .collect();

    let probs = config.class_probs()?;
    let has_category = schema.get("category_list").is_some();
    let w_cat = if has_category {
        config.signal_weights.get("category_list").copied().unwrap_or(0.0)
    } else {
        0.0
    };
    let offsets: Vec<f64> = drafts
        .iter()
        .map(|d| config.base_log_funding + d.partial + d.noise)
        .collect();
    let tilt = if has_category {
        solve_tilt(&offsets, &config.category_mix, w_cat, &probs, config.positive_rate)?
    } else {
        let r = expected_rate(&offsets, &[1.0], 0.0, &probs);
        if (r - config.positive_rate).abs() > RATE_TOLERANCE {
            return Err(Error::Generator(format!(
                "positive rate {} unreachable without a category feature: expected rate is {r}",
                config.positive_rate
            )));
        }
        0.0
    };
    let mix = if has_category { tilted_mix(&config.category_mix, tilt) } else { Vec::new() };

    // Category, text and text rendering of LLM features.
    let category_sampler = Sampler::Levels(mix.clone());
    drafts.par_chunks_mut(BLOCK).enumerate().for_each(|(b, chunk)| {
        let mut rng = rng::stream(rng::derive_seed_str(config.seed, "category"), b as u64);
        for d in chunk {
            finish_record(&mut d.record, config, &samplers, has_category.then_some(&category_sampler), &mut rng);
        }
    });

    let log_f: Vec<f64> = drafts
        .iter()
        .zip(&offsets)
        .map(|(d, o)| o + w_cat * d.record.values.get("category_list").copied().unwrap_or(0.0))
        .collect();
    let planted: Vec<f64> = drafts
        .iter()
        .map(|d| config.base_log_funding + planted_signal(&d.record, &config.signal_weights))
        .collect();

    // Probability applied to records not already successful by funding.
    let mut forced = [0usize; 5];
    let mut members = [0usize; 5];
    for &l in &log_f {
        let c = FundingClass::of(10f64.powf(l)).index();
        members[c] += 1;
        if 10f64.powf(l) > SUCCESS_THRESHOLD {
            forced[c] += 1;
        }
    }
    let mut adjusted = probs;
    for c in 0..5 {
        if forced[c] > 0 {
            let q = forced[c] as f64 / members[c] as f64;
            adjusted[c] = if q >= 1.0 { 1.0 } else { ((probs[c] - q) / (1.0 - q)).clamp(0.0, 1.0) };
        }
    }

    let success = draw_labels(config, &log_f, &adjusted)?;
    let realized = success.iter().filter(|s| s.0).count() as f64 / n as f64;

    let (lo, hi) = UNSUCCESSFUL_FUNDING_RANGE;
    let mut records = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for ((draft, &l), &(s, attempt)) in drafts.into_iter().zip(&log_f).zip(&success) {
        let mut record = draft.record;
        let mut funding = 10f64.powf(l);
        if funding < CLAMP_CEILING {
            funding = funding.clamp(lo, hi);
        }
        record.total_raised = Some(funding);
        if s && funding <= SUCCESS_THRESHOLD {
            let mut rng = rng::stream(rng::derive_seed_str(config.seed, "exit"), rng::fnv1a(record.id.as_bytes()) ^ attempt);
            let (a, b) = (EXIT_RANGE.0.log10(), EXIT_RANGE.1.log10());
            let mut value = 10f64.powf(rng.gen_range(a..b));
            if value <= SUCCESS_THRESHOLD {
                value = SUCCESS_THRESHOLD * (1.0 + 1e-9);
            }
            if rng.gen_bool(0.3) {
                record.ipo_valuation = Some(value);
            } else {
                record.acquisition_price = Some(value);
            }
        }
        labels.push(Label { funding, success: s });
        records.push(record);
    }

    let mut class_mix = BTreeMap::new();
    for c in FundingClass::ALL {
        class_mix.insert(c, members[c.index()] as f64 / n as f64);
    }
    let truth = GroundTruth {
        seed: config.seed,
        n_records: n,
        base: config.base_log_funding,
        category_tilt: tilt,
        category_mix: mix,
        signal_weights: config.signal_weights.clone(),
        noise_sigma: config.noise_sigma,
        class_success_probs: config.class_success_probs.clone(),
        adjusted_class_probs: FundingClass::ALL.into_iter().zip(adjusted).collect(),
        target_positive_rate: config.positive_rate,
        realized_positive_rate: realized,
        label_attempts: success.first().map(|s| s.1 + 1).unwrap_or(1),
        planted_importance: planted_importance_for(config, &schema),
        class_mix,
    };
    Ok(Generated {
        dataset: Dataset::new(schema, records, labels)?,
        truth,
        planted_log_funding: planted,
    })
}

/// Σ w_j · x_j over the record's structured values (missing values count as zero).
pub fn planted_signal(record: &FounderRecord, weights: &BTreeMap<String, f64>) -> f64 {
    weights
        .iter()
        .map(|(name, w)| w * record.values.get(name).copied().unwrap_or(0.0))
        .sum()
}

fn draft_record(
    i: usize,
    config: &GeneratorConfig,
    samplers: &[(FeatureDecl, Sampler)],
    rng: &mut StreamRng,
    noise: &Normal<f64>,
) -> Draft {
    let mut record = FounderRecord::new(format!("f{i:05}"));
    for (decl, sampler) in samplers {
        if decl.branch == Branch::Textual || decl.name == "category_list" {
            continue;
        }
        let v = sampler.draw(rng);
        record.values.insert(decl.name.clone(), v);
    }
    let partial = planted_signal(&record, &config.signal_weights);
    let noise = if config.noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
    Draft { record, partial, noise }
}

fn finish_record(
    record: &mut FounderRecord,
    config: &GeneratorConfig,
    samplers: &[(FeatureDecl, Sampler)],
    category: Option<&Sampler>,
    rng: &mut StreamRng,
) {
    let own = category.map(|s| {
        let code = s.draw(rng);
        record.values.insert("category_list".into(), code);
        CATEGORY_LEVELS.get(code as usize).copied().unwrap_or(CATEGORY_LEVELS[0])
    });
    let keys: Vec<&String> = config.text_templates.keys().collect();
    for (decl, _) in samplers.iter().filter(|(d, _)| d.branch == Branch::Textual) {
        let faithful = rng.gen::<f64>() < config.text_fidelity;
        let pool = match own {
            Some(c) if faithful => config.text_templates.get(c),
            _ if !keys.is_empty() => config.text_templates.get(keys[rng.gen_range(0..keys.len())]),
            _ => None,
        };
        let text = match pool {
            Some(p) if !p.is_empty() => p[rng.gen_range(0..p.len())].clone(),
            _ => String::new(),
        };
        record.raw_text.insert(decl.name.clone(), text);
    }
    if config.llm_as_text {
        for (decl, _) in samplers.iter().filter(|(d, _)| d.origin == Origin::LlmDerived && d.branch != Branch::Textual) {
            if let Some(v) = record.values.remove(&decl.name) {
                record.raw_text.insert(decl.name.clone(), llm_text(decl, v));
            }
        }
    }
}

/// Free-text rendering of an LLM-derived value that the mock provider maps back.
pub fn llm_text(decl: &FeatureDecl, value: f64) -> String {
    let topic = decl.description.as_deref().unwrap_or(&decl.name);
    match decl.branch {
        Branch::Boolean => format!("{}: {}", topic, if value > 0.5 { "yes" } else { "no" }),
        _ => {
            let label = decl
                .levels()
                .iter()
                .find(|l| l.code as f64 == value)
                .map(|l| l.label.as_str())
                .unwrap_or(RATING_LEVELS[0]);
            format!("Assessment of {}: {}.", topic, label.to_lowercase())
        }
    }
}

fn class_prob(log_f: f64, probs: &[f64; 5]) -> f64 {
    let f = 10f64.powf(log_f);
    if f > SUCCESS_THRESHOLD {
        1.0
    } else {
        probs[FundingClass::of(f).index()]
    }
}

/// Expected success rate when each record's category is drawn from `mix`.
fn expected_rate(offsets: &[f64], mix: &[f64], w_cat: f64, probs: &[f64; 5]) -> f64 {
    let per_class: Vec<f64> = offsets
        .par_iter()
        .map(|o| {
            mix.iter()
                .enumerate()
                .map(|(k, p)| p * class_prob(o + w_cat * k as f64, probs))
                .sum::<f64>()
        })
        .collect();
    per_class.iter().sum::<f64>() / offsets.len() as f64
}

/// Bisection for the category-mix tilt whose expected success rate hits the target.
fn solve_tilt(offsets: &[f64], base_mix: &[f64], w_cat: f64, probs: &[f64; 5], target: f64) -> Result<f64> {
    const T_MAX: f64 = 10.0;
    let rate = |t: f64| expected_rate(offsets, &tilted_mix(base_mix, t), w_cat, probs);
    // Orient so the rate increases with the search variable.
    let sign = if w_cat < 0.0 { -1.0 } else { 1.0 };
    let (mut lo, mut hi) = (-T_MAX, T_MAX);
    let (r_lo, r_hi) = (rate(sign * lo), rate(sign * hi));
    if !(r_lo - RATE_TOLERANCE <= target && target <= r_hi + RATE_TOLERANCE) {
        return Err(Error::Generator(format!(
            "positive rate {target} unreachable: tilting the category mix allows [{r_lo:.4}, {r_hi:.4}]"
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if rate(sign * mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(sign * 0.5 * (lo + hi))
}

/// Draws success per record; redraws the whole labelling until the realized
/// rate is within tolerance. Returns (success, attempt index).
fn draw_labels(config: &GeneratorConfig, log_f: &[f64], adjusted: &[f64; 5]) -> Result<Vec<(bool, u64)>> {
    let n = log_f.len();
    for attempt in 0..MAX_LABEL_ATTEMPTS {
        let seed = rng::derive_seed(rng::derive_seed_str(config.seed, "labels"), attempt);
        let labels: Vec<(bool, u64)> = (0..n.div_ceil(BLOCK))
            .into_par_iter()
            .flat_map_iter(|b| {
                let mut rng = rng::stream(seed, b as u64);
                let end = ((b + 1) * BLOCK).min(n);
                (b * BLOCK..end)
                    .map(|i| {
                        let f = 10f64.powf(log_f[i]);
                        let u: f64 = rng.gen();
                        let s = f > SUCCESS_THRESHOLD || u < adjusted[FundingClass::of(f).index()];
                        (s, attempt)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let rate = labels.iter().filter(|l| l.0).count() as f64 / n as f64;
        if (rate - config.positive_rate).abs() <= RATE_TOLERANCE {
            return Ok(labels);
        }
    }
    Err(Error::Generator(format!(
        "could not reach positive rate {} within {RATE_TOLERANCE} after {MAX_LABEL_ATTEMPTS} attempts",
        config.positive_rate
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            n_records: 3000,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn sampler_std_matches_closed_form() {
        assert!((Sampler::Bernoulli(0.5).std() - 0.5).abs() < 1e-15);
        assert!((Sampler::Levels(vec![1.0, 1.0]).std() - 0.5).abs() < 1e-15);
        assert_eq!(Sampler::Normal { mean: 3.0, sd: 2.0 }.std(), 2.0);
    }

    #[test]
    fn unreachable_rate_is_generator_error() {
        let cfg = GeneratorConfig {
            positive_rate: 0.001,
            ..small(1)
        };
        assert!(matches!(generate(&cfg), Err(Error::Generator(_))));
    }

    #[test]
    fn rejects_weight_on_text_and_unknown_features() {
        let mut cfg = small(1);
        cfg.signal_weights.insert("description".into(), 1.0);
        assert!(generate(&cfg).is_err());
        let mut cfg = small(1);
        cfg.signal_weights.insert("nope".into(), 1.0);
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn labels_are_consistent_with_outcomes() {
        let g = generate(&small(3)).unwrap();
        for (r, l) in g.dataset.records().iter().zip(g.dataset.labels()) {
            assert_eq!(r.label_success().unwrap(), l.success, "{}", r.id);
            assert_eq!(r.total_raised, Some(l.funding));
        }
    }
}
