//! Patient records, cohort selection and ingestion.
//!
//! Records arrive unlabeled (an id plus ordered admissions of ICD-10 codes).
//! Labels come from [`apply_inclusion_rules`]: a patient is a case when a
//! hypertension code is recorded at a strictly earlier admission than the
//! first code of the target disease, and a control when the target disease
//! never appears.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ICD-10 three-character category, e.g. `I25`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DiseaseCode(String);

impl DiseaseCode {
    /// Parses and normalizes a code. Sub-category suffixes (`I25.1`, `I251`)
    /// are truncated to the three-character category.
    pub fn parse(raw: &str) -> Result<Self> {
        let s = raw.trim().to_ascii_uppercase();
        let b = s.as_bytes();
        let head_ok = b.len() >= 3
            && b[0].is_ascii_uppercase()
            && b[1].is_ascii_digit()
            && b[2].is_ascii_digit();
        let tail_ok = s
            .get(3..)
            .map(|t| t.bytes().all(|c| c == b'.' || c.is_ascii_alphanumeric()))
            .unwrap_or(false);
        if !(head_ok && tail_ok) {
            return Err(Error::InvalidCode(raw.to_string()));
        }
        Ok(DiseaseCode(s[..3].to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for DiseaseCode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DiseaseCode::parse(s)
    }
}

impl TryFrom<String> for DiseaseCode {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        DiseaseCode::parse(&s)
    }
}

impl From<DiseaseCode> for String {
    fn from(c: DiseaseCode) -> String {
        c.0
    }
}

impl fmt::Display for DiseaseCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for DiseaseCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Convenience for tests and fixtures; panics on malformed input.
pub fn code(s: &str) -> DiseaseCode {
    DiseaseCode::parse(s).unwrap_or_else(|_| panic!("bad disease code literal {s:?}"))
}

/// Builds a code set from string literals.
pub fn codes<'a>(it: impl IntoIterator<Item = &'a str>) -> BTreeSet<DiseaseCode> {
    it.into_iter().map(code).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Admission {
    /// 1-based ordinal within the patient's history.
    pub seq: usize,
    pub codes: BTreeSet<DiseaseCode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Control,
    Case,
}

impl Label {
    /// Class index used by the classifier: control = 0, case = 1.
    pub fn index(self) -> usize {
        match self {
            Label::Control => 0,
            Label::Case => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 1 {
            Label::Case
        } else {
            Label::Control
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Case => "case",
            Label::Control => "control",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Dm,
    Chd,
}

impl FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dm" => Ok(Target::Dm),
            "chd" => Ok(Target::Chd),
            other => Err(Error::Config(format!("unknown target {other:?}"))),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Dm => "dm",
            Target::Chd => "chd",
        })
    }
}

/// Unlabeled patient history as read from disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub admissions: Vec<Admission>,
}

impl RawRecord {
    /// Builds a record from per-admission code lists, numbering admissions from 1.
    pub fn from_lists<I, J, S>(id: impl Into<String>, lists: I) -> Result<Self>
    where
        I: IntoIterator<Item = J>,
        J: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut admissions = Vec::new();
        for (i, list) in lists.into_iter().enumerate() {
            let codes = list
                .into_iter()
                .map(|c| DiseaseCode::parse(c.as_ref()))
                .collect::<Result<BTreeSet<_>>>()?;
            admissions.push(Admission { seq: i + 1, codes });
        }
        Ok(RawRecord {
            id: id.into(),
            admissions,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub label: Label,
    pub admissions: Vec<Admission>,
}

impl PatientRecord {
    /// Union of codes over all admissions.
    pub fn diseases(&self) -> BTreeSet<DiseaseCode> {
        self.admissions
            .iter()
            .flat_map(|a| a.codes.iter().cloned())
            .collect()
    }

    pub fn has(&self, d: &DiseaseCode) -> bool {
        self.admissions.iter().any(|a| a.codes.contains(d))
    }

    /// Index (0-based) of the first admission carrying a code matching `pred`.
    pub fn first_admission_matching(&self, pred: impl Fn(&DiseaseCode) -> bool) -> Option<usize> {
        self.admissions
            .iter()
            .position(|a| a.codes.iter().any(&pred))
    }
}

/// Inclusive lexicographic range of three-character codes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[DiseaseCode; 2]", into = "[DiseaseCode; 2]")]
pub struct CodeRange {
    pub lo: DiseaseCode,
    pub hi: DiseaseCode,
}

impl CodeRange {
    pub fn new(lo: &str, hi: &str) -> Self {
        CodeRange { lo: code(lo), hi: code(hi) }
    }

    pub fn contains(&self, c: &DiseaseCode) -> bool {
        &self.lo <= c && c <= &self.hi
    }
}

impl From<[DiseaseCode; 2]> for CodeRange {
    fn from([lo, hi]: [DiseaseCode; 2]) -> Self {
        CodeRange { lo, hi }
    }
}

impl From<CodeRange> for [DiseaseCode; 2] {
    fn from(r: CodeRange) -> Self {
        [r.lo, r.hi]
    }
}

/// Code ranges defining hypertension and the two target diseases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeRanges {
    pub hypertension: CodeRange,
    pub dm: CodeRange,
    pub chd: CodeRange,
}

impl Default for CodeRanges {
    fn default() -> Self {
        CodeRanges {
            hypertension: CodeRange::new("I10", "I15"),
            dm: CodeRange::new("E10", "E14"),
            chd: CodeRange::new("I20", "I25"),
        }
    }
}

impl CodeRanges {
    pub fn target(&self, t: Target) -> &CodeRange {
        match t {
            Target::Dm => &self.dm,
            Target::Chd => &self.chd,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cohort {
    pub target: Target,
    pub patients: Vec<PatientRecord>,
    /// Sorted union of every code in every admission.
    pub universe: Vec<DiseaseCode>,
}

impl Cohort {
    /// Builds a cohort, deriving the disease universe, and validates it.
    pub fn new(target: Target, patients: Vec<PatientRecord>) -> Result<Self> {
        let universe = universe_of(&patients);
        let c = Cohort {
            target,
            patients,
            universe,
        };
        c.validate()?;
        Ok(c)
    }

    /// Checks the structural invariants: nonempty, unique ids, nonempty
    /// admissions with increasing ordinals, universe closure, both labels present.
    ///
    /// The two-admission inclusion rule is enforced at ingestion, not here,
    /// since masked views may legitimately drop an admission.
    pub fn validate(&self) -> Result<()> {
        if self.patients.is_empty() {
            return Err(Error::InvalidCohort("no patients".into()));
        }
        let mut seen = HashSet::new();
        for p in &self.patients {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::DuplicatePatientId(p.id.clone()));
            }
            if p.admissions.is_empty() {
                return Err(Error::InvalidCohort(format!("patient {} has no admissions", p.id)));
            }
            let mut prev = 0;
            for a in &p.admissions {
                if a.codes.is_empty() {
                    return Err(Error::InvalidCohort(format!(
                        "patient {} admission {} has no codes",
                        p.id, a.seq
                    )));
                }
                if a.seq <= prev {
                    return Err(Error::InvalidCohort(format!(
                        "patient {} admissions out of order",
                        p.id
                    )));
                }
                prev = a.seq;
            }
        }
        if universe_of(&self.patients) != self.universe {
            return Err(Error::InvalidCohort(
                "universe is not the sorted union of all codes".into(),
            ));
        }
        for l in [Label::Case, Label::Control] {
            if !self.patients.iter().any(|p| p.label == l) {
                return Err(Error::DegenerateCohort(format!("no {l} patients")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.patients.iter().map(|p| p.label).collect()
    }

    pub fn disease_sets(&self) -> Vec<BTreeSet<DiseaseCode>> {
        self.patients.iter().map(PatientRecord::diseases).collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.patients.iter().filter(|p| p.label == label).count()
    }

    /// Records at the given indices, cloned, in index order.
    pub fn select(&self, idx: &[usize]) -> Vec<PatientRecord> {
        idx.iter().map(|&i| self.patients[i].clone()).collect()
    }

    /// Records at `idx` carrying `label`.
    pub fn select_label(&self, idx: &[usize], label: Label) -> Vec<PatientRecord> {
        idx.iter()
            .map(|&i| &self.patients[i])
            .filter(|p| p.label == label)
            .cloned()
            .collect()
    }

    /// Copy of the cohort with every code matching `drop` removed. Admissions
    /// left without codes are removed and the rest renumbered.
    pub fn without_codes(&self, drop: impl Fn(&DiseaseCode) -> bool) -> Result<Cohort> {
        let patients = self
            .patients
            .iter()
            .map(|p| {
                let admissions = p
                    .admissions
                    .iter()
                    .map(|a| a.codes.iter().filter(|c| !drop(c)).cloned().collect::<BTreeSet<_>>())
                    .filter(|c| !c.is_empty())
                    .enumerate()
                    .map(|(i, codes)| Admission { seq: i + 1, codes })
                    .collect();
                PatientRecord {
                    id: p.id.clone(),
                    label: p.label,
                    admissions,
                }
            })
            .collect();
        Cohort::new(self.target, patients)
    }

    /// Predictor view: the cohort with the label-defining target-disease codes removed.
    pub fn predictor_view(&self, ranges: &CodeRanges) -> Result<Cohort> {
        let r = ranges.target(self.target).clone();
        self.without_codes(|c| r.contains(c))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.patients {
            let line = JsonLine {
                id: p.id.clone(),
                admissions: p
                    .admissions
                    .iter()
                    .map(|a| a.codes.iter().map(|c| c.to_string()).collect())
                    .collect(),
            };
            out.push_str(&serde_json::to_string(&line).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

fn universe_of(patients: &[PatientRecord]) -> Vec<DiseaseCode> {
    patients
        .iter()
        .flat_map(|p| p.admissions.iter().flat_map(|a| a.codes.iter().cloned()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    TooFewAdmissions,
    NoHypertension,
    TargetNotAfterHypertension,
}

#[derive(Debug, Clone)]
pub struct InclusionOutcome {
    pub cohort: Cohort,
    pub excluded: Vec<(String, ExclusionReason)>,
}

impl InclusionOutcome {
    pub fn excluded_count(&self, reason: ExclusionReason) -> usize {
        self.excluded.iter().filter(|(_, r)| *r == reason).count()
    }
}

/// Labels raw records for `target` and drops those failing the inclusion rules.
///
/// Same-admission co-diagnosis of hypertension and the target disease counts
/// as "not after" and is excluded.
pub fn apply_inclusion_rules(
    raw: Vec<RawRecord>,
    target: Target,
    ranges: &CodeRanges,
) -> Result<InclusionOutcome> {
    let target_range = ranges.target(target);
    let mut patients = Vec::new();
    let mut excluded = Vec::new();
    let mut seen = HashSet::new();
    for r in raw {
        if !seen.insert(r.id.clone()) {
            return Err(Error::DuplicatePatientId(r.id));
        }
        if r.admissions.len() < 2 {
            excluded.push((r.id, ExclusionReason::TooFewAdmissions));
            continue;
        }
        let first = |pred: &dyn Fn(&DiseaseCode) -> bool| {
            r.admissions.iter().position(|a| a.codes.iter().any(pred))
        };
        let hyp = first(&|c| ranges.hypertension.contains(c));
        let tgt = first(&|c| target_range.contains(c));
        let label = match (hyp, tgt) {
            (None, _) => {
                excluded.push((r.id, ExclusionReason::NoHypertension));
                continue;
            }
            (Some(h), Some(t)) if h < t => Label::Case,
            (Some(_), Some(_)) => {
                excluded.push((r.id, ExclusionReason::TargetNotAfterHypertension));
                continue;
            }
            (Some(_), None) => Label::Control,
        };
        patients.push(PatientRecord {
            id: r.id,
            label,
            admissions: r.admissions,
        });
    }
    if patients.is_empty() {
        return Err(Error::DegenerateCohort("no patients passed inclusion".into()));
    }
    let cohort = Cohort::new(target, patients)?;
    Ok(InclusionOutcome { cohort, excluded })
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonLine {
    id: String,
    admissions: Vec<Vec<String>>,
}

/// Parses the JSON-lines record format: `{"id": str, "admissions": [[code,...],...]}`.
pub fn parse_jsonl(reader: impl BufRead) -> Result<Vec<RawRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: JsonLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if !seen.insert(parsed.id.clone()) {
            return Err(Error::DuplicatePatientId(parsed.id));
        }
        if parsed.admissions.iter().any(Vec::is_empty) {
            return Err(Error::Parse {
                line: lineno,
                message: "admission without codes".into(),
            });
        }
        let rec = RawRecord::from_lists(parsed.id, parsed.admissions).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Parses the CSV record format with columns `id, admission_seq, code`.
///
/// Rows are grouped by id (first-appearance order) and admissions by sequence
/// number, then renumbered densely from 1.
pub fn parse_csv(reader: impl std::io::Read) -> Result<Vec<RawRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, BTreeMap<usize, BTreeSet<DiseaseCode>>> = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        // header is line 1
        let lineno = i + 2;
        let row = row.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if row.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 3 columns, found {}", row.len()),
            });
        }
        let id = row[0].to_string();
        let seq: usize = row[1].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad admission_seq {:?}", &row[1]),
        })?;
        if seq == 0 {
            return Err(Error::Parse {
                line: lineno,
                message: "admission_seq must be >= 1".into(),
            });
        }
        let c = DiseaseCode::parse(&row[2]).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if !grouped.contains_key(&id) {
            order.push(id.clone());
        }
        grouped.entry(id).or_default().entry(seq).or_default().insert(c);
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let adm = grouped.remove(&id).unwrap_or_default();
            RawRecord {
                id,
                admissions: adm
                    .into_values()
                    .enumerate()
                    .map(|(i, codes)| Admission { seq: i + 1, codes })
                    .collect(),
            }
        })
        .collect())
}

/// Result of [`load_cohort`]: the validated cohort and what was dropped.
#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub cohort: Cohort,
    pub excluded: Vec<(String, ExclusionReason)>,
}

impl LoadOutcome {
    /// Number of records rejected for having fewer than two admissions.
    pub fn rejected_too_few_admissions(&self) -> usize {
        self.excluded
            .iter()
            .filter(|(_, r)| *r == ExclusionReason::TooFewAdmissions)
            .count()
    }
}

/// Reads a cohort file (`.csv` or JSON lines) and applies the inclusion rules.
pub fn load_cohort(path: &Path, target: Target, ranges: &CodeRanges) -> Result<LoadOutcome> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let is_csv = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false);
    let raw = if is_csv {
        parse_csv(f)?
    } else {
        parse_jsonl(BufReader::new(f))?
    };
    let out = apply_inclusion_rules(raw, target, ranges)?;
    let rejected = out.excluded_count(ExclusionReason::TooFewAdmissions);
    if rejected > 0 {
        log::warn!("{rejected} record(s) rejected with fewer than two admissions");
    }
    Ok(LoadOutcome {
        cohort: out.cohort,
        excluded: out.excluded,
    })
}
