//! Founder records, labelled datasets, CSV persistence and train/eval splits.
//!
//! Dataset file layout: a header row with `id`, one column per schema feature
//! in schema order, then `total_raised, ipo_valuation, acquisition_price,
//! funding_label, success_label`. Empty cells are absent values.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;
use crate::schema::{Branch, FeatureDecl, FeatureSchema, Origin, ID_COLUMN, OUTCOME_COLUMNS};

/// Valuation, acquisition price or total funding above which a founder counts as successful.
pub const SUCCESS_THRESHOLD: f64 = 500e6;
/// Funding range expected of unsuccessful founders.
pub const UNSUCCESSFUL_FUNDING_RANGE: (f64, f64) = (100e3, 4e6);

/// True iff any present outcome exceeds $500M.
pub fn label_success(total_raised: Option<f64>, ipo_valuation: Option<f64>, acquisition_price: Option<f64>) -> Result<bool> {
    let present: Vec<f64> = [total_raised, ipo_valuation, acquisition_price].into_iter().flatten().collect();
    if present.is_empty() {
        return Err(Error::MissingOutcome);
    }
    Ok(present.iter().any(|&v| v > SUCCESS_THRESHOLD))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FounderRecord {
    pub id: String,
    /// Free text per feature, awaiting enrichment or embedding.
    #[serde(default)]
    pub raw_text: BTreeMap<String, String>,
    /// Structured values per feature.
    #[serde(default)]
    pub values: BTreeMap<String, f64>,
    pub total_raised: Option<f64>,
    pub ipo_valuation: Option<f64>,
    pub acquisition_price: Option<f64>,
}

impl FounderRecord {
    pub fn new(id: impl Into<String>) -> Self {
        FounderRecord {
            id: id.into(),
            ..Default::default()
        }
    }

    pub fn with_value(mut self, feature: &str, value: f64) -> Self {
        self.values.insert(feature.to_string(), value);
        self
    }

    pub fn with_text(mut self, feature: &str, text: &str) -> Self {
        self.raw_text.insert(feature.to_string(), text.to_string());
        self
    }

    pub fn label_success(&self) -> Result<bool> {
        label_success(self.total_raised, self.ipo_valuation, self.acquisition_price)
    }

    fn check_currency(&self) -> Result<()> {
        for (name, v) in [
            ("total_raised", self.total_raised),
            ("ipo_valuation", self.ipo_valuation),
            ("acquisition_price", self.acquisition_price),
        ] {
            if let Some(v) = v {
                if !(v >= 0.0) || v.is_infinite() {
                    return Err(Error::Range(format!("record {}: {name} must be non-negative, got {v}", self.id)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub funding: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Categorical or boolean value outside the declared domain.
    OutOfRange { feature: String, value: f64 },
    NonFinite { feature: String },
    /// Value for a feature the schema does not declare.
    Undeclared { feature: String },
    /// Unsuccessful founder whose total funding lies outside [$100K, $4M].
    UnsuccessfulFunding { funding: f64 },
}

impl Violation {
    pub fn feature(&self) -> Option<&str> {
        match self {
            Violation::OutOfRange { feature, .. } | Violation::NonFinite { feature } | Violation::Undeclared { feature } => {
                Some(feature)
            }
            Violation::UnsuccessfulFunding { .. } => None,
        }
    }
}

/// Checks declared domains and finiteness; missing values are not violations.
pub fn validate_record(record: &FounderRecord, schema: &FeatureSchema) -> Vec<Violation> {
    let mut out = Vec::new();
    for (name, &value) in &record.values {
        let Some(decl) = schema.get(name) else {
            out.push(Violation::Undeclared { feature: name.clone() });
            continue;
        };
        match decl.branch {
            Branch::Continuous | Branch::Textual => {
                if !value.is_finite() {
                    out.push(Violation::NonFinite { feature: name.clone() });
                }
            }
            Branch::Categorical | Branch::Boolean => {
                if !value.is_finite() {
                    out.push(Violation::NonFinite { feature: name.clone() });
                } else if !decl.is_declared_code(value) {
                    out.push(Violation::OutOfRange {
                        feature: name.clone(),
                        value,
                    });
                }
            }
        }
    }
    if let (Ok(false), Some(funding)) = (record.label_success(), record.total_raised) {
        let (lo, hi) = UNSUCCESSFUL_FUNDING_RANGE;
        if !(lo..=hi).contains(&funding) {
            out.push(Violation::UnsuccessfulFunding { funding });
        }
    }
    out
}

/// Immutable labelled collection of records sharing one schema.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Arc<FeatureSchema>,
    records: Vec<FounderRecord>,
    labels: Vec<Label>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(schema: Arc<FeatureSchema>, records: Vec<FounderRecord>, labels: Vec<Label>) -> Result<Self> {
        if records.len() != labels.len() {
            return Err(Error::Shape {
                expected: records.len(),
                got: labels.len(),
            });
        }
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.id.is_empty() {
                return Err(Error::Schema(format!("record {i} has an empty id")));
            }
            if index.insert(r.id.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate record id {:?}", r.id)));
            }
            r.check_currency()?;
        }
        for l in &labels {
            if !(l.funding >= 0.0) {
                return Err(Error::Range(format!("funding label must be non-negative, got {}", l.funding)));
            }
        }
        Ok(Dataset {
            schema,
            records,
            labels,
            index,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn shared_schema(&self) -> Arc<FeatureSchema> {
        Arc::clone(&self.schema)
    }

    pub fn records(&self) -> &[FounderRecord] {
        &self.records
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn label(&self, id: &str) -> Option<Label> {
        self.index.get(id).map(|&i| self.labels[i])
    }

    pub fn funding(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.funding).collect()
    }

    pub fn success(&self) -> Vec<bool> {
        self.labels.iter().map(|l| l.success).collect()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|l| l.success).count()
    }

    pub fn success_rate(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.positives() as f64 / self.len() as f64
        }
    }

    /// Errors unless both classes are present.
    pub fn check_trainable(&self) -> Result<()> {
        let p = self.positives();
        if p == 0 || p == self.len() {
            return Err(Error::Fit(format!(
                "training data needs both classes, found {p} positives in {} records",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(Arc::clone(&self.schema), records, labels).expect("subset of a valid dataset")
    }

    /// Same records with new record contents, e.g. after enrichment.
    pub fn with_records(&self, records: Vec<FounderRecord>) -> Result<Dataset> {
        Dataset::new(Arc::clone(&self.schema), records, self.labels.clone())
    }

    /// Same records under a narrower schema; values and text of features the
    /// schema does not declare are dropped.
    pub fn with_schema(&self, schema: Arc<FeatureSchema>) -> Result<Dataset> {
        let records = self
            .records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.values.retain(|k, _| schema.get(k).is_some());
                r.raw_text.retain(|k, _| schema.get(k).is_some());
                r
            })
            .collect();
        Dataset::new(schema, records, self.labels.clone())
    }

    pub fn violations(&self) -> Vec<(String, Violation)> {
        self.records
            .iter()
            .flat_map(|r| validate_record(r, &self.schema).into_iter().map(move |v| (r.id.clone(), v)))
            .collect()
    }

    /// SHA-256 of the serialized CSV form.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        hex::encode(Sha256::digest(&buf))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![ID_COLUMN.to_string()];
        header.extend(self.schema.names().map(str::to_string));
        header.extend(OUTCOME_COLUMNS.iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for (r, l) in self.records.iter().zip(&self.labels) {
            row.clear();
            row.push(r.id.clone());
            for f in &self.schema.features {
                let cell = match r.values.get(&f.name) {
                    Some(v) => format_number(*v),
                    None => r.raw_text.get(&f.name).cloned().unwrap_or_default(),
                };
                row.push(cell);
            }
            for v in [r.total_raised, r.ipo_valuation, r.acquisition_price] {
                row.push(v.map(format_number).unwrap_or_default());
            }
            row.push(format_number(l.funding));
            row.push(if l.success { "1" } else { "0" }.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(input: R, schema: Arc<FeatureSchema>) -> Result<Dataset> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = reader.headers()?.clone();
        let position: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
        let missing: Vec<&str> = std::iter::once(ID_COLUMN)
            .chain(schema.names())
            .chain(OUTCOME_COLUMNS)
            .filter(|c| !position.contains_key(c))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Schema(format!("missing columns: {}", missing.join(", "))));
        }
        let declared: HashSet<&str> = schema.names().chain(OUTCOME_COLUMNS).chain([ID_COLUMN]).collect();
        for h in header.iter().filter(|h| !declared.contains(h)) {
            log::warn!("ignoring undeclared column {h:?}");
        }
        let feature_cols: Vec<(&FeatureDecl, usize)> =
            schema.features.iter().map(|f| (f, position[f.name.as_str()])).collect();
        let col = |name: &str| position[name];

        let mut records = Vec::new();
        let mut labels = Vec::new();
        let mut seen = HashSet::new();
        for (i, row) in reader.records().enumerate() {
            // Row 1 is the header.
            let row_no = i + 2;
            let row = row.map_err(|e| Error::parse(row_no, e.to_string()))?;
            let cell = |c: usize| row.get(c).unwrap_or("").trim();
            let id = cell(col(ID_COLUMN));
            if id.is_empty() {
                return Err(Error::parse(row_no, "empty id"));
            }
            if !seen.insert(id.to_string()) {
                return Err(Error::parse(row_no, format!("duplicate id {id:?}")));
            }
            let mut record = FounderRecord::new(id);
            for &(decl, c) in &feature_cols {
                let text = cell(c);
                if text.is_empty() {
                    continue;
                }
                match parse_feature(decl, text) {
                    Ok(Some(v)) => {
                        record.values.insert(decl.name.clone(), v);
                    }
                    Ok(None) => {
                        record.raw_text.insert(decl.name.clone(), row.get(c).unwrap_or("").to_string());
                    }
                    Err(msg) => return Err(Error::parse(row_no, msg)),
                }
            }
            record.total_raised = parse_currency(cell(col("total_raised")), "total_raised", row_no)?;
            record.ipo_valuation = parse_currency(cell(col("ipo_valuation")), "ipo_valuation", row_no)?;
            record.acquisition_price = parse_currency(cell(col("acquisition_price")), "acquisition_price", row_no)?;
            let funding = match parse_currency(cell(col("funding_label")), "funding_label", row_no)? {
                Some(v) => v,
                None => record
                    .total_raised
                    .ok_or_else(|| Error::parse(row_no, "missing funding_label and total_raised"))?,
            };
            let success = match cell(col("success_label")).to_ascii_lowercase().as_str() {
                "1" | "true" => true,
                "0" | "false" => false,
                "" => record
                    .label_success()
                    .map_err(|_| Error::parse(row_no, "missing success_label and every outcome"))?,
                other => return Err(Error::parse(row_no, format!("success_label {other:?} is not 0/1"))),
            };
            records.push(record);
            labels.push(Label { funding, success });
        }
        let dataset = Dataset::new(schema, records, labels)?;
        let violations = dataset.violations();
        if !violations.is_empty() {
            log::warn!("{} validation violations in loaded dataset", violations.len());
        }
        Ok(dataset)
    }
}

/// Numeric cells become values. Free text in textual or LLM-derived columns
/// is kept as raw text (`Ok(None)`); anywhere else it is a parse error.
fn parse_feature(decl: &FeatureDecl, text: &str) -> std::result::Result<Option<f64>, String> {
    let keep_text = decl.branch == Branch::Textual || decl.origin == Origin::LlmDerived;
    if decl.branch == Branch::Textual {
        return Ok(None);
    }
    if let Some(code) = decl.code_for(text) {
        return Ok(Some(code as f64));
    }
    if let Ok(v) = text.parse::<f64>() {
        return Ok(Some(v));
    }
    if keep_text {
        Ok(None)
    } else {
        Err(format!("cannot parse {text:?} for feature {}", decl.name))
    }
}

fn parse_currency(text: &str, name: &str, row: usize) -> Result<Option<f64>> {
    if text.is_empty() {
        return Ok(None);
    }
    let v: f64 = text
        .parse()
        .map_err(|_| Error::parse(row, format!("{name} {text:?} is not a number")))?;
    if !(v >= 0.0) || v.is_infinite() {
        return Err(Error::parse(row, format!("{name} must be non-negative, got {text}")));
    }
    Ok(Some(v))
}

/// Shortest decimal form that parses back to the same bits.
pub fn format_number(v: f64) -> String {
    format!("{v}")
}

pub fn load_dataset(path: &Path, schema: &FeatureSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    Dataset::read_csv(std::io::BufReader::new(file), Arc::new(schema.clone()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_size: usize,
    pub eval_subset_count: usize,
    pub eval_subset_size: usize,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_size: 8659,
            eval_subset_count: 3,
            eval_subset_size: 722,
            stratified: true,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn total(&self) -> usize {
        self.train_size + self.eval_subset_count * self.eval_subset_size
    }

    /// Default proportions scaled to a smaller dataset.
    pub fn scaled_to(n: usize, seed: u64) -> SplitSpec {
        let d = SplitSpec::default();
        let full = 10_825.0;
        let eval_subset_size = ((n as f64) * d.eval_subset_size as f64 / full).floor() as usize;
        SplitSpec {
            train_size: n - d.eval_subset_count * eval_subset_size,
            eval_subset_size,
            seed,
            ..d
        }
    }
}

/// Index form of a split: one index list for training, one per eval subset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub eval: Vec<Vec<usize>>,
}

pub fn split_indices(dataset: &Dataset, spec: &SplitSpec) -> Result<SplitIndices> {
    let n = dataset.len();
    let total = spec
        .eval_subset_count
        .checked_mul(spec.eval_subset_size)
        .and_then(|e| e.checked_add(spec.train_size))
        .ok_or_else(|| Error::Split("split sizes overflow".into()))?;
    if total > n {
        return Err(Error::Split(format!("split needs {total} records but the dataset has {n}")));
    }
    if spec.train_size == 0 {
        return Err(Error::Split("train_size must be positive".into()));
    }
    let mut sizes = vec![spec.train_size];
    sizes.extend(std::iter::repeat(spec.eval_subset_size).take(spec.eval_subset_count));
    let mut rng = rng::stream(spec.seed, 0x73706c6974);

    let parts: Vec<Vec<usize>> = if spec.stratified {
        let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| dataset.labels[i].success);
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        let rate = pos.len() as f64 / n as f64;
        let mut quotas: Vec<usize> = sizes.iter().map(|&s| (s as f64 * rate).round() as usize).collect();
        // Rounding can overshoot either class; trim or pad the largest partition.
        let want: usize = quotas.iter().sum();
        if want > pos.len() {
            quotas[0] -= want - pos.len();
        }
        let neg_need: usize = sizes.iter().zip(&quotas).map(|(s, q)| s - q).sum();
        if neg_need > neg.len() {
            quotas[0] += neg_need - neg.len();
        }
        let (mut p, mut q) = (pos.into_iter(), neg.into_iter());
        sizes
            .iter()
            .zip(&quotas)
            .map(|(&size, &k)| {
                let mut part: Vec<usize> = p.by_ref().take(k).chain(q.by_ref().take(size - k)).collect();
                part.sort_unstable();
                part
            })
            .collect()
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        let mut it = all.into_iter();
        sizes
            .iter()
            .map(|&size| {
                let mut part: Vec<usize> = it.by_ref().take(size).collect();
                part.sort_unstable();
                part
            })
            .collect()
    };
    let mut parts = parts.into_iter();
    Ok(SplitIndices {
        train: parts.next().expect("train partition"),
        eval: parts.collect(),
    })
}

pub fn split_dataset(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Vec<Dataset>)> {
    let idx = split_indices(dataset, spec)?;
    Ok((
        dataset.subset(&idx.train),
        idx.eval.iter().map(|e| dataset.subset(e)).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn success_examples() {
        assert!(label_success(Some(600e6), None, None).unwrap());
        assert!(!label_success(Some(2e6), Some(400e6), None).unwrap());
        assert!(label_success(None, None, Some(501e6)).unwrap());
        assert!(!label_success(Some(500e6), None, None).unwrap());
        assert!(matches!(label_success(None, None, None), Err(Error::MissingOutcome)));
    }

    #[test]
    fn validate_examples() {
        let s = FeatureSchema::default();
        assert!(validate_record(&FounderRecord::new("a").with_value("education_level", 2.0), &s).is_empty());
        assert_eq!(
            validate_record(&FounderRecord::new("a").with_value("education_level", 9.0), &s),
            vec![Violation::OutOfRange {
                feature: "education_level".into(),
                value: 9.0
            }]
        );
        assert_eq!(
            validate_record(&FounderRecord::new("a").with_value("founder_age", f64::NAN), &s),
            vec![Violation::NonFinite {
                feature: "founder_age".into()
            }]
        );
        assert_eq!(
            validate_record(&FounderRecord::new("a").with_value("has_mba", 2.0), &s).len(),
            1
        );
        let mut r = FounderRecord::new("a");
        r.total_raised = Some(20e6);
        assert_eq!(validate_record(&r, &s), vec![Violation::UnsuccessfulFunding { funding: 20e6 }]);
    }

    #[test]
    fn numbers_round_trip_exactly() {
        for v in [0.1, 1e-300, 123456789.123, 5e9, f64::MIN_POSITIVE, 1.0 / 3.0] {
            assert_eq!(format_number(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
