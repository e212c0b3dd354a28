//! Seeded synthetic cohorts with planted comorbidity structure.
//!
//! Every patient starts with a hypertension code in the first admission and has
//! at least two admissions. Case patients receive the target-disease code in
//! their last admission and draw each planted cluster code with probability
//! `p_case`; controls never carry the target and draw planted codes with
//! `p_base`. An optional progression chain `X -> Y -> target` is planted in
//! cases so that each step is strictly ordered with probability `rate`.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::{code, Admission, CodeRanges, Cohort, DiseaseCode, Label, PatientRecord, Target};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressionSpec {
    /// Ordered precursor codes; the chain ends in the target code.
    pub chain: Vec<DiseaseCode>,
    /// Probability that each link is observed in strict admission order.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub patients: usize,
    pub target: Target,
    pub case_fraction: f64,
    pub planted: Vec<DiseaseCode>,
    pub p_case: f64,
    pub p_base: f64,
    /// Number of background codes in the pool.
    pub background_codes: usize,
    pub p_background: f64,
    pub min_admissions: usize,
    pub max_admissions: usize,
    pub progression: Option<ProgressionSpec>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig::profile(Target::Dm)
    }
}

impl GeneratorConfig {
    /// Cohort sized and planted after the DM or CHD dataset profile.
    pub fn profile(target: Target) -> Self {
        let (patients, planted, chain) = match target {
            Target::Dm => (1024, vec![code("I25"), code("I51"), code("K76")], vec![code("E78"), code("R73")]),
            Target::Chd => (1668, vec![code("N18"), code("H25")], vec![code("I70"), code("I48")]),
        };
        GeneratorConfig {
            patients,
            target,
            case_fraction: 0.5,
            planted,
            p_case: 0.8,
            p_base: 0.1,
            background_codes: 40,
            p_background: 0.06,
            min_admissions: 2,
            max_admissions: 4,
            progression: Some(ProgressionSpec { chain, rate: 0.6 }),
        }
    }

    /// Code placed in the last admission of every case.
    pub fn target_code(&self) -> DiseaseCode {
        match self.target {
            Target::Dm => code("E11"),
            Target::Chd => code("I25"),
        }
    }

    pub fn hypertension_code(&self) -> DiseaseCode {
        code("I10")
    }

    pub fn check(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")))
            }
        };
        prob("p_case", self.p_case)?;
        prob("p_base", self.p_base)?;
        prob("p_background", self.p_background)?;
        if !(self.case_fraction > 0.0 && self.case_fraction < 1.0) {
            return Err(Error::Config("case_fraction must lie in (0, 1)".into()));
        }
        if self.min_admissions < 2 || self.max_admissions < self.min_admissions {
            return Err(Error::Config(
                "need 2 <= min_admissions <= max_admissions".into(),
            ));
        }
        if let Some(p) = &self.progression {
            prob("progression.rate", p.rate)?;
            if p.chain.is_empty() {
                return Err(Error::Config("progression chain is empty".into()));
            }
            if self.max_admissions < p.chain.len() + 1 {
                return Err(Error::Config(format!(
                    "max_admissions must be at least {} for the progression chain",
                    p.chain.len() + 1
                )));
            }
        }
        let cases = self.case_count();
        if cases == 0 || cases == self.patients {
            return Err(Error::Config("both classes need at least one patient".into()));
        }
        let ranges = CodeRanges::default();
        let target = ranges.target(self.target);
        for c in self.planted.iter().chain(self.progression.iter().flat_map(|p| p.chain.iter())) {
            if target.contains(c) || ranges.hypertension.contains(c) {
                return Err(Error::Config(format!(
                    "planted code {c} collides with a hypertension or target code"
                )));
            }
        }
        Ok(())
    }

    pub fn case_count(&self) -> usize {
        (self.patients as f64 * self.case_fraction).round() as usize
    }
}

#[derive(Debug)]
pub struct GeneratedCohort {
    pub cohort: Cohort,
    pub background: Vec<DiseaseCode>,
    /// Non-fatal problems with the configuration (e.g. `NonSeparableSpec`).
    pub warnings: Vec<Error>,
}

/// Background pool: codes outside every reserved range and the planted sets.
fn background_pool(cfg: &GeneratorConfig) -> Vec<DiseaseCode> {
    const LETTERS: &[u8] = b"JKLMNRHGDFCAB";
    let ranges = CodeRanges::default();
    let mut reserved: BTreeSet<DiseaseCode> = cfg.planted.iter().cloned().collect();
    if let Some(p) = &cfg.progression {
        reserved.extend(p.chain.iter().cloned());
    }
    let mut pool = BTreeSet::new();
    let mut i = 0usize;
    while pool.len() < cfg.background_codes && i < LETTERS.len() * 100 {
        let letter = LETTERS[i % LETTERS.len()] as char;
        let num = (i * 7 + i / LETTERS.len()) % 100;
        i += 1;
        let c = code(&format!("{letter}{num:02}"));
        let reserved_range = ranges.hypertension.contains(&c)
            || ranges.dm.contains(&c)
            || ranges.chd.contains(&c);
        if !reserved_range && !reserved.contains(&c) {
            pool.insert(c);
        }
    }
    pool.into_iter().collect()
}

/// Generates a cohort; identical `(cfg, seed)` yields an identical cohort.
pub fn generate_synthetic_cohort(cfg: &GeneratorConfig, seed: u64) -> Result<GeneratedCohort> {
    cfg.check()?;
    let mut warnings = Vec::new();
    if cfg.p_case <= cfg.p_base {
        log::warn!("p_case {} <= p_base {}: planted signal is not separable", cfg.p_case, cfg.p_base);
        warnings.push(Error::NonSeparableSpec {
            p_case: cfg.p_case,
            p_base: cfg.p_base,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background = background_pool(cfg);
    let n_case = cfg.case_count();
    let mut labels: Vec<Label> = (0..cfg.patients)
        .map(|i| if i < n_case { Label::Case } else { Label::Control })
        .collect();
    labels.shuffle(&mut rng);

    let hyp = cfg.hypertension_code();
    let target = cfg.target_code();
    let mut patients = Vec::with_capacity(cfg.patients);
    for (i, &label) in labels.iter().enumerate() {
        let min_adm = match (&cfg.progression, label) {
            (Some(p), Label::Case) => cfg.min_admissions.max(p.chain.len() + 1),
            _ => cfg.min_admissions,
        };
        let n = rng.random_range(min_adm..=cfg.max_admissions);
        let mut adm: Vec<BTreeSet<DiseaseCode>> = vec![BTreeSet::new(); n];
        adm[0].insert(hyp.clone());

        let p_planted = if label == Label::Case { cfg.p_case } else { cfg.p_base };
        for c in &cfg.planted {
            if rng.random::<f64>() < p_planted {
                adm[rng.random_range(0..n)].insert(c.clone());
            }
        }
        match (&cfg.progression, label) {
            (Some(p), Label::Case) => {
                adm[n - 1].insert(target.clone());
                // walk the chain backwards from the target: each precursor lands
                // strictly before its successor with probability `rate`, else
                // in the same admission. `floor` reserves room for the
                // precursors still to be placed.
                let mut next = n - 1;
                for (floor, c) in p.chain.iter().enumerate().rev() {
                    let pos = if next > floor && rng.random::<f64>() < p.rate {
                        rng.random_range(floor..next)
                    } else {
                        next
                    };
                    adm[pos].insert(c.clone());
                    next = pos;
                }
            }
            (Some(p), Label::Control) => {
                for c in &p.chain {
                    if rng.random::<f64>() < cfg.p_base {
                        adm[rng.random_range(0..n)].insert(c.clone());
                    }
                }
            }
            (None, Label::Case) => {
                adm[n - 1].insert(target.clone());
            }
            (None, Label::Control) => {}
        }
        for c in &background {
            if rng.random::<f64>() < cfg.p_background {
                adm[rng.random_range(0..n)].insert(c.clone());
            }
        }
        // keep every admission nonempty
        for a in adm.iter_mut().skip(1) {
            if a.is_empty() {
                a.insert(background[rng.random_range(0..background.len())].clone());
            }
        }
        patients.push(PatientRecord {
            id: format!("S{i:05}"),
            label,
            admissions: adm
                .into_iter()
                .enumerate()
                .map(|(k, codes)| Admission { seq: k + 1, codes })
                .collect(),
        });
    }
    let cohort = Cohort::new(cfg.target, patients)?;
    Ok(GeneratedCohort {
        cohort,
        background,
        warnings,
    })
}
