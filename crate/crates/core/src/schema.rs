//! Feature declarations.
//!
//! Every trainable feature belongs to one encoding branch (categorical,
//! textual, continuous, boolean) and has an origin: `deterministic` features
//! come straight from structured profile data, `llm_derived` features are
//! produced by an enrichment provider from free text.
//!
//! The default schema ships 63 features, 38 deterministic and 25 LLM-derived.
//! Categorical features use ordinal integer codes; education level and domain
//! expertise use the fixed mappings below.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Categorical,
    Textual,
    Continuous,
    Boolean,
}

impl Branch {
    pub const ALL: [Branch; 4] = [Branch::Categorical, Branch::Textual, Branch::Continuous, Branch::Boolean];

    pub fn name(self) -> &'static str {
        match self {
            Branch::Categorical => "categorical",
            Branch::Textual => "textual",
            Branch::Continuous => "continuous",
            Branch::Boolean => "boolean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Deterministic,
    LlmDerived,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub label: String,
    pub code: i64,
}

impl Level {
    pub fn new(label: impl Into<String>, code: i64) -> Self {
        Level {
            label: label.into(),
            code,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDecl {
    pub name: String,
    pub branch: Branch,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categorical_levels: Option<Vec<Level>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl FeatureDecl {
    pub fn new(name: &str, branch: Branch, origin: Origin) -> Self {
        FeatureDecl {
            name: name.to_string(),
            branch,
            origin,
            categorical_levels: None,
            description: None,
        }
    }

    pub fn with_levels(mut self, labels: &[&str]) -> Self {
        self.categorical_levels = Some(
            labels
                .iter()
                .enumerate()
                .map(|(i, l)| Level::new(*l, i as i64))
                .collect(),
        );
        self
    }

    pub fn describe(mut self, text: &str) -> Self {
        self.description = Some(text.to_string());
        self
    }

    pub fn levels(&self) -> &[Level] {
        self.categorical_levels.as_deref().unwrap_or(&[])
    }

    /// Integer codes a value of this feature may take; `None` for continuous
    /// and textual features.
    pub fn domain(&self) -> Option<Vec<i64>> {
        match self.branch {
            Branch::Categorical => Some(self.levels().iter().map(|l| l.code).collect()),
            Branch::Boolean => Some(vec![0, 1]),
            _ => None,
        }
    }

    pub fn is_declared_code(&self, value: f64) -> bool {
        match self.domain() {
            Some(codes) => value.fract() == 0.0 && codes.iter().any(|&c| c as f64 == value),
            None => value.is_finite(),
        }
    }

    /// Code of a level given by label (case-insensitive) or by its integer
    /// spelling. Boolean features also accept yes/no and true/false.
    pub fn code_for(&self, text: &str) -> Option<i64> {
        let t = text.trim();
        match self.branch {
            Branch::Categorical => {
                if let Some(l) = self.levels().iter().find(|l| l.label.eq_ignore_ascii_case(t)) {
                    return Some(l.code);
                }
                let n: i64 = t.parse().ok()?;
                self.levels().iter().any(|l| l.code == n).then_some(n)
            }
            Branch::Boolean => match t.to_ascii_lowercase().as_str() {
                "1" | "true" | "yes" => Some(1),
                "0" | "false" | "no" => Some(0),
                _ => None,
            },
            _ => None,
        }
    }

    /// Code reserved for unknown values, when a level labelled "unknown" is declared.
    pub fn unknown_code(&self) -> Option<i64> {
        self.levels()
            .iter()
            .find(|l| l.label.eq_ignore_ascii_case("unknown"))
            .map(|l| l.code)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureDecl>,
}

pub const EDUCATION_LEVELS: [&str; 4] = [
    "Associate Degree or less",
    "Bachelor's Degree",
    "Master's Degree",
    "Doctoral Degree or more",
];

pub const DOMAIN_EXPERTISE_LEVELS: [&str; 4] = [
    "No alignment",
    "Weak Alignment",
    "Moderate Alignment",
    "Strong Alignment",
];

pub const SKILL_RELEVANCE_LEVELS: [&str; 5] = [
    "No Relevance",
    "Low Relevance",
    "Moderate Relevance",
    "Substantial Relevance",
    "High Relevance",
];

/// Labels of the generic 0–4 rating scale used by most LLM-derived features.
pub const RATING_LEVELS: [&str; 5] = ["None", "Limited", "Moderate", "Strong", "Exceptional"];

pub const CATEGORY_LEVELS: [&str; 10] = [
    "consumer",
    "ecommerce",
    "media",
    "enterprise_software",
    "fintech",
    "hardware",
    "healthcare",
    "ai_ml",
    "biotech",
    "deep_tech",
];

const DETERMINISTIC_CONTINUOUS: [(&str, &str); 18] = [
    ("number_of_founders", "size of the founding team"),
    ("previous_startups", "startups founded before this one"),
    ("years_experience", "years of professional experience"),
    ("founder_age", "age at founding"),
    ("num_prior_roles", "distinct prior roles"),
    ("num_prior_companies", "distinct prior employers"),
    ("max_team_size_managed", "largest team managed"),
    ("num_patents", "patents held"),
    ("num_publications", "peer-reviewed publications"),
    ("num_languages", "languages spoken"),
    ("linkedin_connections", "professional network size (hundreds)"),
    ("years_since_graduation", "years since last degree"),
    ("num_degrees", "degrees earned"),
    ("num_board_roles", "board seats held"),
    ("avg_tenure_years", "average tenure per role"),
    ("longest_tenure_years", "longest tenure in one role"),
    ("num_countries_worked", "countries worked in"),
    ("num_industries_worked", "industries worked in"),
];

const DETERMINISTIC_BOOLEAN: [(&str, &str); 13] = [
    ("has_technical_degree", "holds an engineering or science degree"),
    ("has_mba", "holds an MBA"),
    ("top_university", "attended a top-ranked university"),
    ("prior_exit", "previous company exited"),
    ("prior_ipo", "previous company went public"),
    ("big_tech_experience", "worked at a large technology company"),
    ("consulting_experience", "worked in management consulting"),
    ("serial_founder", "founded two or more companies"),
    ("worked_at_startup", "worked at an early-stage startup"),
    ("has_cofounder_history", "co-founded with the same partner before"),
    ("is_ceo", "holds the CEO role"),
    ("military_service", "served in the military"),
    ("phd_in_field", "doctorate in the startup's field"),
];

const LLM_RATINGS: [(&str, &str); 18] = [
    ("leadership_score", "evidence of leading people"),
    ("technical_depth", "depth of technical expertise"),
    ("market_understanding", "understanding of the target market"),
    ("vision_clarity", "clarity of the product vision"),
    ("execution_track_record", "record of shipping and delivering"),
    ("network_strength", "strength of the professional network"),
    ("fundraising_experience", "experience raising capital"),
    ("industry_seniority", "seniority reached in the industry"),
    ("communication_skill", "written and spoken communication"),
    ("team_building", "experience hiring and building teams"),
    ("product_sense", "product judgement"),
    ("sales_experience", "experience selling"),
    ("resilience_signal", "persistence through setbacks"),
    ("founder_market_fit", "fit between founder and market"),
    ("academic_prestige", "prestige of academic background"),
    ("international_exposure", "international experience"),
    ("media_presence", "public and media presence"),
    ("mentorship_signal", "access to mentors and advisors"),
];

const LLM_BOOLEAN: [(&str, &str); 5] = [
    ("is_repeat_industry_founder", "founded before in the same industry"),
    ("has_research_background", "research career before founding"),
    ("has_operating_role", "held an operating executive role"),
    ("has_deep_tech_focus", "startup builds deep technology"),
    ("has_b2b_focus", "startup sells to businesses"),
];

impl Default for FeatureSchema {
    fn default() -> Self {
        use Branch::*;
        use Origin::*;
        let mut features = vec![
            FeatureDecl::new("education_level", Categorical, Deterministic)
                .with_levels(&EDUCATION_LEVELS)
                .describe("highest education level"),
            FeatureDecl::new("category_list", Categorical, Deterministic)
                .with_levels(&CATEGORY_LEVELS)
                .describe("primary field the startup operates in"),
            FeatureDecl::new("founder_role", Categorical, Deterministic)
                .with_levels(&["technical", "business", "product", "other"])
                .describe("founder's primary function"),
            FeatureDecl::new("country_region", Categorical, Deterministic)
                .with_levels(&["north_america", "europe", "asia", "latin_america", "other"])
                .describe("region of headquarters"),
            FeatureDecl::new("university_tier", Categorical, Deterministic)
                .with_levels(&["unranked", "tier_3", "tier_2", "tier_1"])
                .describe("ranking tier of the founder's university"),
            FeatureDecl::new("company_stage_at_join", Categorical, Deterministic)
                .with_levels(&["idea", "pre_seed", "seed", "series_a"])
                .describe("company stage when the founder's profile was captured"),
            FeatureDecl::new("description", Textual, Deterministic).describe("startup description"),
        ];
        for (name, text) in DETERMINISTIC_CONTINUOUS {
            features.push(FeatureDecl::new(name, Continuous, Deterministic).describe(text));
        }
        for (name, text) in DETERMINISTIC_BOOLEAN {
            features.push(FeatureDecl::new(name, Boolean, Deterministic).describe(text));
        }
        features.push(
            FeatureDecl::new("domain_expertise", Categorical, LlmDerived)
                .with_levels(&DOMAIN_EXPERTISE_LEVELS)
                .describe("match between founder experience and startup domain"),
        );
        features.push(
            FeatureDecl::new("skill_relevance", Categorical, LlmDerived)
                .with_levels(&SKILL_RELEVANCE_LEVELS)
                .describe("relevance of founder skills to the startup"),
        );
        for (name, text) in LLM_RATINGS {
            features.push(
                FeatureDecl::new(name, Categorical, LlmDerived)
                    .with_levels(&RATING_LEVELS)
                    .describe(text),
            );
        }
        for (name, text) in LLM_BOOLEAN {
            features.push(FeatureDecl::new(name, Boolean, LlmDerived).describe(text));
        }
        FeatureSchema { features }
    }
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDecl>) -> Result<Self> {
        let schema = FeatureSchema { features };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for f in &self.features {
            if f.name.is_empty() || f.name.contains(|c: char| c == ',' || c.is_whitespace()) {
                return Err(Error::Schema(format!("invalid feature name {:?}", f.name)));
            }
            if RESERVED_COLUMNS.contains(&f.name.as_str()) {
                return Err(Error::Schema(format!("feature name {:?} is reserved", f.name)));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature {:?}", f.name)));
            }
            match f.branch {
                Branch::Categorical => {
                    let levels = f.levels();
                    if levels.len() < 2 {
                        return Err(Error::Schema(format!(
                            "categorical feature {} needs at least two levels",
                            f.name
                        )));
                    }
                    for (i, l) in levels.iter().enumerate() {
                        if l.code != i as i64 {
                            return Err(Error::Schema(format!(
                                "levels of {} must use consecutive codes from 0 (level {:?} has {})",
                                f.name, l.label, l.code
                            )));
                        }
                    }
                }
                _ => {
                    if f.categorical_levels.is_some() {
                        return Err(Error::Schema(format!(
                            "only categorical features declare levels ({})",
                            f.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&FeatureDecl> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn by_branch(&self, branch: Branch) -> impl Iterator<Item = &FeatureDecl> {
        self.features.iter().filter(move |f| f.branch == branch)
    }

    pub fn by_origin(&self, origin: Origin) -> impl Iterator<Item = &FeatureDecl> {
        self.features.iter().filter(move |f| f.origin == origin)
    }

    pub fn count_origin(&self, origin: Origin) -> usize {
        self.by_origin(origin).count()
    }

    /// Copy without features in the dropped branches or origins.
    pub fn without(&self, branches: &[Branch], origins: &[Origin]) -> FeatureSchema {
        FeatureSchema {
            features: self
                .features
                .iter()
                .filter(|f| !branches.contains(&f.branch) && !origins.contains(&f.origin))
                .cloned()
                .collect(),
        }
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let schema: FeatureSchema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Non-feature columns of the dataset file, in file order.
pub const ID_COLUMN: &str = "id";
pub const OUTCOME_COLUMNS: [&str; 5] = [
    "total_raised",
    "ipo_valuation",
    "acquisition_price",
    "funding_label",
    "success_label",
];
const RESERVED_COLUMNS: [&str; 6] = [
    "id",
    "total_raised",
    "ipo_valuation",
    "acquisition_price",
    "funding_label",
    "success_label",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_counts() {
        let s = FeatureSchema::default();
        s.validate().unwrap();
        assert_eq!(s.len(), 63);
        assert_eq!(s.count_origin(Origin::Deterministic), 38);
        assert_eq!(s.count_origin(Origin::LlmDerived), 25);
        for name in [
            "education_level",
            "domain_expertise",
            "skill_relevance",
            "category_list",
            "number_of_founders",
            "previous_startups",
            "description",
        ] {
            assert!(s.get(name).is_some(), "{name}");
        }
    }

    #[test]
    fn rejects_bad_levels_and_duplicates() {
        let bad = FeatureSchema {
            features: vec![FeatureDecl::new("x", Branch::Categorical, Origin::Deterministic).with_levels(&["only"])],
        };
        assert!(bad.validate().is_err());
        let mut gap = FeatureDecl::new("x", Branch::Categorical, Origin::Deterministic).with_levels(&["a", "b"]);
        gap.categorical_levels.as_mut().unwrap()[1].code = 2;
        assert!(FeatureSchema { features: vec![gap] }.validate().is_err());
        let dup = FeatureSchema {
            features: vec![
                FeatureDecl::new("x", Branch::Boolean, Origin::Deterministic),
                FeatureDecl::new("x", Branch::Continuous, Origin::Deterministic),
            ],
        };
        assert!(dup.validate().is_err());
    }

    #[test]
    fn level_lookup() {
        let s = FeatureSchema::default();
        let edu = s.get("education_level").unwrap();
        assert_eq!(edu.code_for("Master's Degree"), Some(2));
        assert_eq!(edu.code_for("2"), Some(2));
        assert_eq!(edu.code_for("9"), None);
        let b = s.get("has_mba").unwrap();
        assert_eq!(b.code_for("yes"), Some(1));
        assert!(b.is_declared_code(0.0) && !b.is_declared_code(0.5));
    }

    #[test]
    fn json_round_trip_preserves_hash() {
        let s = FeatureSchema::default();
        let back: FeatureSchema = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.hash(), s.hash());
    }
}
