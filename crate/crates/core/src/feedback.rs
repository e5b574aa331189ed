//! The annotation and retraining loop: annotate candidates, measure how
//! much the candidates concentrate true FRs, feed confirmed FRs back to the
//! production target-domain classifier and measure the FR reduction.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{DomainId, Utterance, Vocab};
use crate::detector::CandidateList;
use crate::error::{contract, Error, Result};
use crate::jsonl;
use crate::nlu_sim::{retrain_domain_classifier, DomainModelParams, PerturbationConfig, Production, RetrainConfig, RoutingRecord};
use crate::seeding;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Fr,
    NotFr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationSource {
    Oracle,
    Human,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub utterance_id: String,
    pub verdict: Verdict,
    pub source: AnnotationSource,
    /// Logical clock: position in the annotation log, starting at 1.
    pub timestamp: u64,
}

/// Ground-truth FR labels by utterance id.
pub fn ground_truth(records: &[RoutingRecord], target: DomainId) -> HashMap<String, bool> {
    records
        .iter()
        .map(|r| (r.utterance.id.clone(), r.is_false_reject(target)))
        .collect()
}

/// Annotates every candidate with its true label, flipped independently
/// with probability `error_rate`. Flips depend only on `(seed, id)`.
pub fn oracle_annotate(
    candidates: &CandidateList,
    truth: &HashMap<String, bool>,
    error_rate: f64,
    seed: u64,
) -> Result<Vec<Annotation>> {
    if !(0.0..0.5).contains(&error_rate) {
        return Err(contract!("annotation error rate {error_rate} outside [0, 0.5)"));
    }
    let mut seen = BTreeSet::new();
    candidates
        .entries
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if !seen.insert(c.id.as_str()) {
                return Err(contract!("candidate {} listed twice", c.id));
            }
            let &is_fr = truth
                .get(&c.id)
                .ok_or_else(|| contract!("candidate {} has no ground truth", c.id))?;
            let flip = seeding::unit_interval(seed, &format!("annotate/{}", c.id)) < error_rate;
            Ok(Annotation {
                utterance_id: c.id.clone(),
                verdict: if is_fr != flip { Verdict::Fr } else { Verdict::NotFr },
                source: AnnotationSource::Oracle,
                timestamp: i as u64 + 1,
            })
        })
        .collect()
}

#[derive(Debug, PartialEq, Eq)]
pub enum AppendOutcome {
    Appended,
    Duplicate,
}

/// Append-only annotation log holding at most one annotation per id.
#[derive(Debug)]
pub struct AnnotationLog {
    path: PathBuf,
    entries: Vec<Annotation>,
    ids: BTreeSet<String>,
}

impl AnnotationLog {
    /// Opens (or starts) the log at `path`; a missing file is an empty log.
    pub fn open(path: &Path) -> Result<Self> {
        let entries: Vec<Annotation> = if path.exists() { jsonl::read(path)? } else { Vec::new() };
        let mut ids = BTreeSet::new();
        for a in &entries {
            if !ids.insert(a.utterance_id.clone()) {
                return Err(contract!("annotation log {} repeats id {}", path.display(), a.utterance_id));
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
            ids,
        })
    }

    pub fn entries(&self) -> &[Annotation] {
        &self.entries
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.contains(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn next_timestamp(&self) -> u64 {
        self.entries.iter().map(|a| a.timestamp).max().unwrap_or(0) + 1
    }

    pub fn append(&mut self, annotation: Annotation) -> Result<AppendOutcome> {
        if self.ids.contains(&annotation.utterance_id) {
            return Ok(AppendOutcome::Duplicate);
        }
        if let Some(parent) = self.path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        jsonl::append(&self.path, &annotation)?;
        self.ids.insert(annotation.utterance_id.clone());
        self.entries.push(annotation);
        Ok(AppendOutcome::Appended)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolStats {
    pub size: usize,
    pub false_rejects: usize,
}

impl PoolStats {
    pub fn of(records: &[RoutingRecord], target: DomainId) -> Self {
        let pool: Vec<&RoutingRecord> = records.iter().filter(|r| r.routed_domain != target).collect();
        Self {
            size: pool.len(),
            false_rejects: pool.iter().filter(|r| r.is_false_reject(target)).count(),
        }
    }

    pub fn prevalence(&self) -> f64 {
        if self.size == 0 {
            0.0
        } else {
            self.false_rejects as f64 / self.size as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentReport {
    pub reviewed: usize,
    pub confirmed: usize,
    pub candidate_precision: f64,
    pub pool_prevalence: f64,
    pub factor: f64,
}

/// `(confirmed / reviewed) / prevalence` over the annotated candidates.
pub fn enrichment(candidates: &CandidateList, annotations: &[Annotation], pool: &PoolStats) -> Result<EnrichmentReport> {
    let prevalence = pool.prevalence();
    if !(prevalence > 0.0) {
        return Err(contract!("pool contains no false rejects; enrichment is undefined"));
    }
    let by_id: HashMap<&str, &Annotation> = annotations.iter().map(|a| (a.utterance_id.as_str(), a)).collect();
    let verdicts: Vec<Verdict> = candidates
        .entries
        .iter()
        .filter_map(|c| by_id.get(c.id.as_str()).map(|a| a.verdict))
        .collect();
    if verdicts.is_empty() {
        return Err(contract!("no annotated candidates to measure"));
    }
    let confirmed = verdicts.iter().filter(|&&v| v == Verdict::Fr).count();
    let precision = confirmed as f64 / verdicts.len() as f64;
    Ok(EnrichmentReport {
        reviewed: verdicts.len(),
        confirmed,
        candidate_precision: precision,
        pool_prevalence: prevalence,
        factor: precision / prevalence,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackReport {
    pub fr_before: usize,
    pub fr_after: usize,
    pub relative_reduction: f64,
    pub confirmed_added: usize,
    pub heldout_size: usize,
}

impl FeedbackReport {
    pub fn new(fr_before: usize, fr_after: usize, confirmed_added: usize, heldout_size: usize) -> Self {
        let relative_reduction = if fr_before == 0 {
            0.0
        } else {
            (fr_before as f64 - fr_after as f64) / fr_before as f64
        };
        Self {
            fr_before,
            fr_after,
            relative_reduction,
            confirmed_added,
            heldout_size,
        }
    }
}

/// Everything the production side needs to retrain and re-route.
pub struct ProductionContext<'a> {
    pub models: &'a DomainModelParams,
    pub vocab: &'a Vocab,
    pub corpus: &'a [Utterance],
    pub perturbation: &'a PerturbationConfig,
    pub target: DomainId,
    pub n_best: usize,
    pub positive_weight: f64,
}

/// Adds the utterances confirmed as FRs to the target classifier's
/// positives, retrains it, and re-routes `heldout` with the same
/// perturbation seed before and after.
pub fn retrain_and_measure(
    annotations: &[Annotation],
    utterances: &HashMap<&str, &Utterance>,
    ctx: &ProductionContext<'_>,
    heldout: &[Utterance],
    retrain: &RetrainConfig,
) -> Result<(FeedbackReport, DomainModelParams)> {
    let confirmed: Vec<Utterance> = annotations
        .iter()
        .filter(|a| a.verdict == Verdict::Fr)
        .map(|a| {
            utterances
                .get(a.utterance_id.as_str())
                .map(|u| (*u).clone())
                .ok_or_else(|| contract!("annotated utterance {} not found", a.utterance_id))
        })
        .collect::<Result<_>>()?;
    if confirmed.is_empty() {
        return Err(contract!("no confirmed false rejects to train on"));
    }
    let updated = retrain_domain_classifier(
        ctx.models,
        ctx.corpus,
        &confirmed,
        ctx.vocab,
        ctx.target,
        ctx.positive_weight,
        retrain,
    )?;
    let count = |models: &DomainModelParams| {
        Production {
            models,
            vocab: ctx.vocab,
            perturbation: ctx.perturbation.clone(),
            target: ctx.target,
            n_best: ctx.n_best,
        }
        .fr_count(heldout)
    };
    let before = count(ctx.models)?;
    let after = count(&updated)?;
    Ok((FeedbackReport::new(before, after, confirmed.len(), heldout.len()), updated))
}
