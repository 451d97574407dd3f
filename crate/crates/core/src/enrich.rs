//! Enrichment: turning profile text into structured values for the
//! LLM-derived features.
//!
//! A provider answers one `(feature, prompt, allowed outputs)` question at a
//! time. Answers are validated against the feature's declared domain and
//! written into the record only when valid; rejected answers leave the value
//! absent for the encoder to impute.
//!
//! [`MockProvider`] is a pure keyword-rule scorer used offline. Its rules, in
//! order:
//!
//! 1. the last declared level label (or yes/no for booleans) found in the
//!    text, matched case-insensitively on word boundaries;
//! 2. rating synonyms ([`RATING_SYNONYMS`]) for 0–4 scales;
//! 3. for `domain_expertise` and `skill_relevance`, an industry-overlap score
//!    between the founder's background and the startup (see [`overlap_score`]);
//! 4. otherwise the literal answer `unknown`, which validation rejects.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, FounderRecord};
use crate::error::{Error, Result};
use crate::schema::{Branch, FeatureDecl, FeatureSchema, Origin};

/// Provider calls per question before giving up.
pub const MAX_ATTEMPTS: usize = 3;

pub const LLM_ENDPOINT_VAR: &str = "RARECAST_LLM_ENDPOINT";
pub const LLM_API_KEY_VAR: &str = "RARECAST_LLM_API_KEY";

pub trait EnrichmentProvider: Send + Sync {
    fn id(&self) -> &str;

    /// Candidate answer for `feature` given the prompt and the allowed
    /// outputs. `Err` signals a provider failure, not a bad answer.
    fn complete(&self, feature: &str, prompt: &str, domain: &[String]) -> Result<String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnrichStatus {
    Ok,
    Rejected,
    ProviderError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichmentResult {
    pub feature: String,
    pub raw_response: String,
    pub parsed_value: Option<i64>,
    pub status: EnrichStatus,
}

impl EnrichmentResult {
    fn provider_error(feature: &str, message: String) -> Self {
        EnrichmentResult {
            feature: feature.to_string(),
            raw_response: message,
            parsed_value: None,
            status: EnrichStatus::ProviderError,
        }
    }
}

/// Allowed outputs shown to the provider: level labels, or `no`/`yes`.
pub fn output_domain(decl: &FeatureDecl) -> Vec<String> {
    match decl.branch {
        Branch::Boolean => vec!["no".into(), "yes".into()],
        _ => decl.levels().iter().map(|l| l.label.clone()).collect(),
    }
}

/// Parses an integer code or a declared level label. Anything else,
/// including integers outside the domain, is rejected as is.
pub fn validate_enrichment(decl: &FeatureDecl, raw_response: &str) -> EnrichmentResult {
    let cleaned = raw_response.trim().trim_end_matches('.').trim();
    let parsed = match decl.branch {
        Branch::Categorical | Branch::Boolean => decl.code_for(cleaned),
        _ => None,
    };
    EnrichmentResult {
        feature: decl.name.clone(),
        raw_response: raw_response.to_string(),
        parsed_value: parsed,
        status: if parsed.is_some() { EnrichStatus::Ok } else { EnrichStatus::Rejected },
    }
}

/// LLM-derived, non-textual features the record carries text for.
fn requested<'a>(record: &'a FounderRecord, schema: &'a FeatureSchema) -> impl Iterator<Item = (&'a FeatureDecl, &'a str)> {
    schema
        .by_origin(Origin::LlmDerived)
        .filter(|d| d.branch != Branch::Textual)
        .filter_map(|d| record.raw_text.get(&d.name).map(|t| (d, t.as_str())))
}

fn ask(provider: &dyn EnrichmentProvider, feature: &str, prompt: &str, domain: &[String]) -> Result<String> {
    let mut last = None;
    for _ in 0..MAX_ATTEMPTS {
        match provider.complete(feature, prompt, domain) {
            Ok(r) => return Ok(r),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::Provider("no attempts made".into())))
}

fn apply(record: &mut FounderRecord, results: &BTreeMap<String, EnrichmentResult>) {
    for r in results.values() {
        if let (EnrichStatus::Ok, Some(v)) = (r.status, r.parsed_value) {
            record.values.insert(r.feature.clone(), v as f64);
            record.raw_text.remove(&r.feature);
        }
    }
}

/// Enriches every LLM-derived feature for which the record has text. Ok
/// results replace the text with the parsed value.
pub fn enrich_record(
    record: &mut FounderRecord,
    schema: &FeatureSchema,
    provider: &dyn EnrichmentProvider,
) -> BTreeMap<String, EnrichmentResult> {
    enrich_with(record, schema, provider, None)
}

pub fn cached_enrich(
    record: &mut FounderRecord,
    schema: &FeatureSchema,
    provider: &dyn EnrichmentProvider,
    cache: &EnrichmentCache,
) -> BTreeMap<String, EnrichmentResult> {
    enrich_with(record, schema, provider, Some(cache))
}

fn enrich_with(
    record: &mut FounderRecord,
    schema: &FeatureSchema,
    provider: &dyn EnrichmentProvider,
    cache: Option<&EnrichmentCache>,
) -> BTreeMap<String, EnrichmentResult> {
    let results: BTreeMap<String, EnrichmentResult> = requested(record, schema)
        .map(|(decl, prompt)| {
            let domain = output_domain(decl);
            let answer = match cache {
                Some(c) => c.get_or_ask(provider, &decl.name, prompt, &domain),
                None => ask(provider, &decl.name, prompt, &domain),
            };
            let result = match answer {
                Ok(raw) => validate_enrichment(decl, &raw),
                Err(e) => EnrichmentResult::provider_error(&decl.name, e.to_string()),
            };
            (decl.name.clone(), result)
        })
        .collect();
    apply(record, &results);
    results
}

/// Status counts per feature over a batch.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichmentSummary {
    pub records: usize,
    pub counts: BTreeMap<String, BTreeMap<EnrichStatus, usize>>,
}

impl EnrichmentSummary {
    pub fn total(&self, status: EnrichStatus) -> usize {
        self.counts.values().filter_map(|c| c.get(&status)).sum()
    }
}

/// Enriches every record in parallel. Results are merged in record order.
pub fn enrich_dataset(
    dataset: &Dataset,
    provider: &dyn EnrichmentProvider,
    cache: Option<&EnrichmentCache>,
) -> Result<(Dataset, EnrichmentSummary)> {
    let schema = dataset.schema();
    let out: Vec<(FounderRecord, BTreeMap<String, EnrichmentResult>)> = dataset
        .records()
        .par_iter()
        .map(|r| {
            let mut r = r.clone();
            let results = enrich_with(&mut r, schema, provider, cache);
            (r, results)
        })
        .collect();
    let mut summary = EnrichmentSummary {
        records: out.len(),
        ..Default::default()
    };
    let mut records = Vec::with_capacity(out.len());
    for (r, results) in out {
        for res in results.values() {
            *summary
                .counts
                .entry(res.feature.clone())
                .or_default()
                .entry(res.status)
                .or_default() += 1;
        }
        records.push(r);
    }
    Ok((dataset.with_records(records)?, summary))
}

pub fn cache_key(feature: &str, prompt: &str, provider_id: &str) -> String {
    let mut h = Sha256::new();
    for part in [feature, prompt, provider_id] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheLine {
    key: String,
    feature: String,
    provider: String,
    response: String,
}

type Slot = Arc<Mutex<Option<String>>>;

/// Append-only JSON-lines cache of provider answers keyed by [`cache_key`].
/// Only successful provider calls are stored.
pub struct EnrichmentCache {
    path: Option<PathBuf>,
    slots: Mutex<HashMap<String, Slot>>,
    file: Option<Mutex<File>>,
}

impl EnrichmentCache {
    pub fn in_memory() -> Self {
        EnrichmentCache {
            path: None,
            slots: Mutex::new(HashMap::new()),
            file: None,
        }
    }

    /// Opens (creating if needed) a cache file. Unreadable lines are skipped
    /// with a warning and their questions go back to the provider.
    pub fn open(path: &Path) -> Result<Self> {
        let mut slots = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = match line {
                    Ok(l) => l,
                    Err(e) => {
                        log::warn!("enrichment cache {}: unreadable from line {}: {e}", path.display(), i + 1);
                        break;
                    }
                };
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheLine>(&line) {
                    Ok(c) if c.key.len() == 64 && is_hex(&c.key) => {
                        slots.insert(c.key, Arc::new(Mutex::new(Some(c.response))));
                    }
                    Ok(_) => log::warn!("enrichment cache {}: bad key on line {}", path.display(), i + 1),
                    Err(e) => log::warn!("enrichment cache {}: corrupt line {}: {e}", path.display(), i + 1),
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(EnrichmentCache {
            path: Some(path.to_path_buf()),
            slots: Mutex::new(slots),
            file: Some(Mutex::new(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Number of stored answers.
    pub fn len(&self) -> usize {
        let slots = self.slots.lock().expect("cache lock");
        slots.values().filter(|s| s.lock().expect("slot lock").is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, feature: &str, prompt: &str, provider_id: &str) -> Option<String> {
        let key = cache_key(feature, prompt, provider_id);
        let slot = self.slots.lock().expect("cache lock").get(&key).cloned()?;
        let value = slot.lock().expect("slot lock").clone();
        value
    }

    /// Cached answer, or the provider's answer stored on success. Concurrent
    /// callers with the same key wait for one provider call.
    fn get_or_ask(&self, provider: &dyn EnrichmentProvider, feature: &str, prompt: &str, domain: &[String]) -> Result<String> {
        let key = cache_key(feature, prompt, provider.id());
        let slot = Arc::clone(self.slots.lock().expect("cache lock").entry(key.clone()).or_default());
        let mut guard = slot.lock().expect("slot lock");
        if let Some(hit) = guard.as_ref() {
            return Ok(hit.clone());
        }
        let answer = ask(provider, feature, prompt, domain)?;
        if let Some(file) = &self.file {
            let line = serde_json::to_string(&CacheLine {
                key,
                feature: feature.to_string(),
                provider: provider.id().to_string(),
                response: answer.clone(),
            })?;
            let mut f = file.lock().expect("cache file lock");
            writeln!(f, "{line}")?;
        }
        *guard = Some(answer.clone());
        Ok(answer)
    }
}

fn is_hex(s: &str) -> bool {
    s.bytes().all(|b| b.is_ascii_hexdigit())
}

/// Rating-scale synonyms recognized by the mock provider, by code.
pub const RATING_SYNONYMS: [(&str, i64); 12] = [
    ("world-class", 4),
    ("outstanding", 4),
    ("exceptional", 4),
    ("extensive", 3),
    ("strong", 3),
    ("solid", 2),
    ("moderate", 2),
    ("some", 1),
    ("limited", 1),
    ("little", 1),
    ("none", 0),
    ("no", 0),
];

/// Industry keyword groups for the overlap heuristic.
pub const INDUSTRY_KEYWORDS: [(&str, &[&str]); 9] = [
    ("health", &["oncology", "cancer", "clinical", "clinic", "clinics", "hospital", "hospitals", "medical", "medicine", "patient", "patients", "health", "healthcare", "diagnostics", "pharma", "drug", "therapy", "therapies", "genomics", "biotech", "biology", "care"]),
    ("finance", &["bank", "banking", "banks", "payments", "payment", "finance", "fintech", "trading", "lending", "credit", "insurance", "underwriting"]),
    ("software", &["software", "saas", "cloud", "developer", "developers", "enterprise", "workflow", "analytics", "database"]),
    ("ai", &["ai", "ml", "learning", "vision", "nlp", "models", "neural"]),
    ("hardware", &["hardware", "robotics", "robotic", "semiconductor", "semiconductors", "electronics", "sensors", "manufacturing", "chips"]),
    ("commerce", &["retail", "ecommerce", "marketplace", "shopping", "merchants", "shoppers", "storefront", "consumer"]),
    ("media", &["media", "journalism", "journalists", "streaming", "podcast", "entertainment", "publishing", "creators"]),
    ("energy", &["energy", "climate", "fusion", "solar", "battery", "batteries", "grid"]),
    ("science", &["quantum", "materials", "physics", "chemistry", "protein", "gene"]),
];

const STARTUP_MARKERS: [&str; 4] = ["startup:", "company:", "venture:", "building:"];
const ADVANCED_DEGREES: [&str; 6] = ["phd", "md", "doctorate", "msc", "master's", "mba"];

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '-'))
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

/// Last position at which `phrase` (possibly several words) occurs in `ws`.
fn last_phrase(ws: &[String], phrase: &str) -> Option<usize> {
    let p = words(phrase);
    if p.is_empty() || p.len() > ws.len() {
        return None;
    }
    (0..=ws.len() - p.len()).rev().find(|&i| ws[i..i + p.len()] == p[..])
}

fn industries(ws: &[String]) -> Vec<&'static str> {
    INDUSTRY_KEYWORDS
        .iter()
        .filter(|(_, kws)| ws.iter().any(|w| kws.contains(&w.as_str())))
        .map(|(name, _)| *name)
        .collect()
}

fn years_of_experience(ws: &[String]) -> Option<f64> {
    ws.windows(2)
        .filter(|w| matches!(w[1].as_str(), "yr" | "yrs" | "year" | "years"))
        .filter_map(|w| w[0].trim_end_matches('+').parse::<f64>().ok())
        .reduce(f64::max)
}

/// Overlap score between background and startup text, split at a
/// `startup:`-style marker. Zero without a marker or without a shared
/// industry; otherwise 1, plus 1 for five or more years, plus 1 for an
/// advanced degree or ten or more years, plus (when `max` allows it) 1 for
/// ten or more years together with an advanced degree.
pub fn overlap_score(text: &str, max: i64) -> i64 {
    let lower = text.to_lowercase();
    let Some((at, marker)) = STARTUP_MARKERS.iter().filter_map(|m| lower.find(m).map(|i| (i, *m))).min() else {
        return 0;
    };
    let background = words(&lower[..at]);
    let startup = words(&lower[at + marker.len()..]);
    let b = industries(&background);
    if !industries(&startup).iter().any(|i| b.contains(i)) {
        return 0;
    }
    let years = years_of_experience(&background).unwrap_or(0.0);
    let advanced = background.iter().any(|w| ADVANCED_DEGREES.contains(&w.as_str()));
    let mut score = 1;
    score += (years >= 5.0) as i64;
    score += (advanced || years >= 10.0) as i64;
    if max > 3 {
        score += (advanced && years >= 10.0) as i64;
    }
    score.min(max)
}

/// Pure keyword-rule provider; see the module docs for the rules.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockProvider;

impl EnrichmentProvider for MockProvider {
    fn id(&self) -> &str {
        "mock"
    }

    fn complete(&self, feature: &str, prompt: &str, domain: &[String]) -> Result<String> {
        let ws = words(prompt);
        let label = domain
            .iter()
            .filter_map(|l| last_phrase(&ws, l).map(|i| (i, words(l).len(), l)))
            .max_by_key(|&(i, len, _)| (i + len, len));
        if let Some((_, _, l)) = label {
            return Ok(l.clone());
        }
        if domain.len() == 5 {
            let hit = RATING_SYNONYMS
                .iter()
                .filter_map(|(w, code)| last_phrase(&ws, w).map(|i| (i, *code)))
                .max_by_key(|&(i, _)| i);
            if let Some((_, code)) = hit {
                return Ok(code.to_string());
            }
        }
        if matches!(feature, "domain_expertise" | "skill_relevance") && !domain.is_empty() {
            let score = overlap_score(prompt, domain.len() as i64 - 1);
            return Ok(domain[score as usize].clone());
        }
        Ok("unknown".into())
    }
}

/// Provider that never answers; every question ends as `provider_error`
/// and the features are left for imputation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoProvider;

impl EnrichmentProvider for NoProvider {
    fn id(&self) -> &str {
        "none"
    }

    fn complete(&self, _: &str, _: &str, _: &[String]) -> Result<String> {
        Err(Error::Provider("enrichment disabled (provider none)".into()))
    }
}

/// Interface stub for a hosted LLM. Reads its endpoint and key from
/// [`LLM_ENDPOINT_VAR`] and [`LLM_API_KEY_VAR`]; no transport is bundled, so
/// every call fails with a provider error.
pub struct ExternalProvider {
    endpoint: Option<String>,
    api_key: Option<String>,
}

impl ExternalProvider {
    pub fn from_env() -> Self {
        ExternalProvider {
            endpoint: std::env::var(LLM_ENDPOINT_VAR).ok(),
            api_key: std::env::var(LLM_API_KEY_VAR).ok(),
        }
    }
}

impl std::fmt::Debug for ExternalProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalProvider")
            .field("endpoint", &self.endpoint)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl EnrichmentProvider for ExternalProvider {
    fn id(&self) -> &str {
        "external"
    }

    fn complete(&self, _: &str, _: &str, _: &[String]) -> Result<String> {
        match (&self.endpoint, &self.api_key) {
            (None, _) => Err(Error::Provider(format!("{LLM_ENDPOINT_VAR} is not set"))),
            (_, None) => Err(Error::Provider(format!("{LLM_API_KEY_VAR} is not set"))),
            _ => Err(Error::Provider("no transport for the external provider in this build".into())),
        }
    }
}

pub fn enrichment_provider(id: &str) -> Result<Box<dyn EnrichmentProvider>> {
    match id {
        "mock" => Ok(Box::new(MockProvider)),
        "none" => Ok(Box::new(NoProvider)),
        "external" => Ok(Box::new(ExternalProvider::from_env())),
        other => Err(Error::Param(format!("unknown enrichment provider {other:?} (expected mock, none or external)"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::default()
    }

    #[test]
    fn validation_examples() {
        let s = schema();
        let skill = s.get("skill_relevance").unwrap();
        let ok = validate_enrichment(skill, "4");
        assert_eq!((ok.status, ok.parsed_value), (EnrichStatus::Ok, Some(4)));
        let bad = validate_enrichment(skill, "7");
        assert_eq!((bad.status, bad.parsed_value), (EnrichStatus::Rejected, None));
        assert_eq!(bad.raw_response, "7");
        let dom = validate_enrichment(s.get("domain_expertise").unwrap(), "Moderate Alignment");
        assert_eq!(dom.parsed_value, Some(2));
        assert_eq!(validate_enrichment(skill, "-1").status, EnrichStatus::Rejected);
        assert_eq!(validate_enrichment(skill, "3.5").status, EnrichStatus::Rejected);
    }

    #[test]
    fn overlap_examples() {
        let s = schema();
        let mut r = FounderRecord::new("a")
            .with_text("domain_expertise", "PhD, 10 yrs in oncology; startup: cancer diagnostics");
        let res = enrich_record(&mut r, &s, &MockProvider);
        assert_eq!(res["domain_expertise"].parsed_value, Some(3));
        assert_eq!(r.values["domain_expertise"], 3.0);
        assert!(!r.raw_text.contains_key("domain_expertise"));

        let mut r = FounderRecord::new("b")
            .with_text("domain_expertise", "8 yrs in retail banking; startup: gene therapies for rare diseases");
        assert_eq!(enrich_record(&mut r, &s, &MockProvider)["domain_expertise"].parsed_value, Some(0));
    }

    #[test]
    fn rendered_labels_map_back() {
        let s = schema();
        for decl in s.by_origin(Origin::LlmDerived).filter(|d| d.branch != Branch::Textual) {
            for code in decl.domain().unwrap() {
                let text = crate::synth::llm_text(decl, code as f64);
                let mut r = FounderRecord::new("x").with_text(&decl.name, &text);
                let res = enrich_record(&mut r, &s, &MockProvider);
                assert_eq!(res[&decl.name].parsed_value, Some(code), "{} {text:?}", decl.name);
            }
        }
    }

    #[test]
    fn none_provider_reports_errors_without_values() {
        let s = schema();
        let mut r = FounderRecord::new("a").with_text("leadership_score", "strong");
        let res = enrich_record(&mut r, &s, &NoProvider);
        assert_eq!(res["leadership_score"].status, EnrichStatus::ProviderError);
        assert!(!r.values.contains_key("leadership_score"));
    }

    #[test]
    fn external_debug_redacts_key() {
        let p = ExternalProvider {
            endpoint: Some("https://example.invalid".into()),
            api_key: Some("secret-value".into()),
        };
        assert!(!format!("{p:?}").contains("secret-value"));
        assert!(p.complete("x", "y", &[]).is_err());
    }
}
