use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DomainId, Utterance};
use crate::error::{config_err, contract, Error, Result};
use crate::jsonl;
use crate::nlu_sim::{NBestList, RoutingRecord};
use crate::seeding;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledExample {
    pub utterance: Utterance,
    pub nbest: NBestList,
    pub routed_domain: DomainId,
    /// 1 iff the utterance truly belongs to the target domain.
    pub label_domain: u8,
    /// 1 iff it belongs to the target domain but was routed elsewhere.
    pub label_fr: u8,
}

impl LabeledExample {
    pub fn from_record(record: &RoutingRecord, target: DomainId) -> Self {
        let in_domain = record.utterance.true_domain == target;
        Self {
            utterance: record.utterance.clone(),
            nbest: record.nbest.clone(),
            routed_domain: record.routed_domain,
            label_domain: in_domain as u8,
            label_fr: (in_domain && record.routed_domain != target) as u8,
        }
    }

    pub fn record(&self) -> RoutingRecord {
        RoutingRecord {
            utterance: self.utterance.clone(),
            nbest: self.nbest.clone(),
            routed_domain: self.routed_domain,
        }
    }

    pub fn is_fr(&self) -> bool {
        self.label_fr == 1
    }

    /// Labels are binary, `label_fr` implies `label_domain`, and both agree
    /// with the utterance's ground truth and routing.
    pub fn check_labels(&self, target: DomainId) -> Result<()> {
        let expected = Self::from_record(&self.record(), target);
        if self.label_domain > 1 || self.label_fr > 1 || self.label_fr > self.label_domain {
            return Err(contract!("example {} has invalid labels", self.utterance.id));
        }
        if (expected.label_domain, expected.label_fr) != (self.label_domain, self.label_fr) {
            return Err(contract!(
                "example {} labels disagree with its ground truth",
                self.utterance.id
            ));
        }
        Ok(())
    }

    fn stratum(&self) -> usize {
        match (self.label_domain, self.label_fr) {
            (1, 1) => 0,
            (1, _) => 1,
            _ => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Non-FR examples drawn per FR example.
    pub ratio: usize,
    pub holdout: f64,
    /// Share of the non-FR bucket taken from correctly accepted target traffic.
    pub accepted_mix: f64,
    /// Upper bound on positives taken from the logs.
    #[serde(default)]
    pub fr_cap: Option<usize>,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            ratio: 15,
            holdout: 0.15,
            accepted_mix: 0.1,
            fr_cap: None,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitMeta {
    pub ratio_fr_to_nonfr: (usize, usize),
    pub holdout_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledExample>,
    pub valid: Vec<LabeledExample>,
    pub ratio_fr_to_nonfr: (usize, usize),
    pub holdout_fraction: f64,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> impl Iterator<Item = &LabeledExample> {
        self.train.iter().chain(&self.valid)
    }
}

fn take_shuffled<'a>(
    mut items: Vec<&'a RoutingRecord>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<&'a RoutingRecord> {
    items.shuffle(rng);
    items.truncate(n);
    items
}

/// Draws all FRs (up to the cap) plus `ratio` non-FRs per FR, of which a
/// fraction `accepted_mix` (as far as available) are correctly accepted
/// target-domain records and the rest correctly rejected non-target records.
fn sample_protocol(
    logs: &[RoutingRecord],
    target: DomainId,
    config: &DatasetConfig,
    label: &str,
) -> Result<Vec<LabeledExample>> {
    if !(0.0..=1.0).contains(&config.accepted_mix) {
        return Err(config_err!("accepted_mix must lie in [0, 1]"));
    }
    let mut rng = seeding::rng(config.seed, label);
    let frs: Vec<&RoutingRecord> = logs.iter().filter(|r| r.is_false_reject(target)).collect();
    if frs.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no false rejects for domain {target} among {} records",
            logs.len()
        )));
    }
    let n_fr = config.fr_cap.map_or(frs.len(), |cap| cap.min(frs.len()));
    let accepted: Vec<&RoutingRecord> = logs
        .iter()
        .filter(|r| r.utterance.true_domain == target && r.routed_domain == target)
        .collect();
    let rejected: Vec<&RoutingRecord> = logs
        .iter()
        .filter(|r| r.utterance.true_domain != target && r.routed_domain != target)
        .collect();

    // a shortfall of accepted target records is made up from rejected ones
    let bucket = |ratio: usize| {
        let non_fr = ratio * n_fr;
        let n_acc = ((config.accepted_mix * non_fr as f64).round() as usize).min(accepted.len());
        (n_acc, non_fr - n_acc)
    };
    let (n_acc, n_rej) = bucket(config.ratio);
    if n_rej > rejected.len() {
        let achievable = (0..config.ratio)
            .rev()
            .find(|&r| bucket(r).1 <= rejected.len())
            .unwrap_or(0);
        return Err(Error::RatioInfeasible {
            requested: config.ratio,
            achievable,
        });
    }
    let wanted = (config.accepted_mix * (config.ratio * n_fr) as f64).round() as usize;
    if n_acc < wanted {
        log::warn!("only {n_acc} of {wanted} requested accepted target records available; filled with other traffic");
    }

    let chosen = take_shuffled(frs, n_fr, &mut rng)
        .into_iter()
        .chain(take_shuffled(accepted, n_acc, &mut rng))
        .chain(take_shuffled(rejected, n_rej, &mut rng));
    Ok(chosen.map(|r| LabeledExample::from_record(r, target)).collect())
}

/// Builds the stratified train/validation split of the FR dataset.
pub fn build_fr_dataset(
    logs: &[RoutingRecord],
    target: DomainId,
    config: &DatasetConfig,
) -> Result<DatasetSplit> {
    if !(0.0..1.0).contains(&config.holdout) {
        return Err(config_err!("holdout must lie in [0, 1)"));
    }
    let examples = sample_protocol(logs, target, config, "dataset/sample")?;
    let total = examples.len();
    let n_valid = (config.holdout * total as f64).round() as usize;

    let mut strata: [Vec<LabeledExample>; 3] = Default::default();
    for ex in examples {
        strata[ex.stratum()].push(ex);
    }
    // Largest-remainder apportionment of the validation size over strata.
    let exact: Vec<f64> = strata
        .iter()
        .map(|s| n_valid as f64 * s.len() as f64 / total as f64)
        .collect();
    let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut by_remainder: Vec<usize> = (0..3).collect();
    by_remainder.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut missing = n_valid - alloc.iter().sum::<usize>();
    for &s in by_remainder.iter().cycle().take(3 * 3) {
        if missing == 0 {
            break;
        }
        if alloc[s] < strata[s].len() {
            alloc[s] += 1;
            missing -= 1;
        }
    }

    let mut rng = seeding::rng(config.seed, "dataset/split");
    let mut train = Vec::with_capacity(total - n_valid);
    let mut valid = Vec::with_capacity(n_valid);
    for (stratum, k) in strata.iter_mut().zip(alloc) {
        stratum.shuffle(&mut rng);
        let rest = stratum.split_off(k);
        valid.append(stratum);
        train.extend(rest);
    }
    train.shuffle(&mut rng);
    valid.shuffle(&mut rng);
    Ok(DatasetSplit {
        train,
        valid,
        ratio_fr_to_nonfr: (1, config.ratio),
        holdout_fraction: config.holdout,
    })
}

/// A protocol-matched evaluation set (same FR ratio and mix, no split).
pub fn build_eval_set(
    logs: &[RoutingRecord],
    target: DomainId,
    config: &DatasetConfig,
) -> Result<Vec<LabeledExample>> {
    let mut rng = seeding::rng(config.seed, "evalset/order");
    let mut examples = sample_protocol(logs, target, config, "evalset/sample")?;
    examples.shuffle(&mut rng);
    Ok(examples)
}

pub fn read_examples(path: &Path) -> Result<Vec<LabeledExample>> {
    jsonl::read(path)
}

pub fn write_examples(path: &Path, examples: &[LabeledExample]) -> Result<()> {
    jsonl::write(path, examples)
}

pub const TRAIN_FILE: &str = "dataset.train.jsonl";
pub const VALID_FILE: &str = "dataset.valid.jsonl";
pub const META_FILE: &str = "dataset.meta.json";

/// Writes `dataset.train.jsonl`, `dataset.valid.jsonl` and a small
/// metadata file into `dir`.
pub fn write_split(dir: &Path, split: &DatasetSplit) -> Result<()> {
    write_examples(&dir.join(TRAIN_FILE), &split.train)?;
    write_examples(&dir.join(VALID_FILE), &split.valid)?;
    jsonl::write_json(
        &dir.join(META_FILE),
        &SplitMeta {
            ratio_fr_to_nonfr: split.ratio_fr_to_nonfr,
            holdout_fraction: split.holdout_fraction,
        },
    )
}

pub fn read_split(dir: &Path) -> Result<DatasetSplit> {
    let meta: SplitMeta = jsonl::read_json(&dir.join(META_FILE))?;
    Ok(DatasetSplit {
        train: read_examples(&dir.join(TRAIN_FILE))?,
        valid: read_examples(&dir.join(VALID_FILE))?,
        ratio_fr_to_nonfr: meta.ratio_fr_to_nonfr,
        holdout_fraction: meta.holdout_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlu_sim::Hypothesis;

    const D: DomainId = 7;

    fn record(i: usize, true_domain: DomainId, routed: DomainId) -> RoutingRecord {
        let other = if routed == 0 { 1 } else { 0 };
        RoutingRecord {
            utterance: Utterance {
                id: format!("t{i:07}"),
                text: format!("word{} other", i % 13),
                true_domain,
                true_intent: 0,
            },
            nbest: NBestList {
                hypotheses: vec![
                    Hypothesis { domain_id: routed, intent_id: 0, score: 0.6 },
                    Hypothesis { domain_id: other, intent_id: 0, score: 0.3 },
                ],
            },
            routed_domain: routed,
        }
    }

    /// `frs` false rejects, `acc` accepted target records, `rej` others.
    fn logs(frs: usize, acc: usize, rej: usize) -> Vec<RoutingRecord> {
        let mut out = Vec::new();
        let mut i = 0;
        for _ in 0..frs {
            out.push(record(i, D, 2));
            i += 1;
        }
        for _ in 0..acc {
            out.push(record(i, D, D));
            i += 1;
        }
        for k in 0..rej {
            out.push(record(i, k % 7, k % 7));
            i += 1;
        }
        out
    }

    #[test]
    fn hundred_frs_give_sixteen_hundred_examples() {
        let split = build_fr_dataset(&logs(100, 400, 5000), D, &DatasetConfig::default()).unwrap();
        assert_eq!(split.len(), 1600);
        let frs = split.all().filter(|e| e.is_fr()).count();
        assert_eq!(frs, 100);
        assert_eq!(split.len() - frs, 15 * 100);
        let accepted = split
            .all()
            .filter(|e| e.label_domain == 1 && e.label_fr == 0)
            .count();
        assert_eq!(accepted, 150);
        for e in split.all() {
            e.check_labels(D).unwrap();
        }
    }

    #[test]
    fn holdout_is_stratified() {
        let split = build_fr_dataset(&logs(100, 400, 5000), D, &DatasetConfig::default()).unwrap();
        assert_eq!(split.valid.len(), 240);
        let valid_fr = split.valid.iter().filter(|e| e.is_fr()).count();
        assert_eq!(valid_fr, 15);
        let frac = |v: &[LabeledExample]| v.iter().filter(|e| e.is_fr()).count() as f64 / v.len() as f64;
        assert!((frac(&split.train) - frac(&split.valid)).abs() < 1.0 / split.valid.len() as f64);
    }

    #[test]
    fn no_false_rejects_is_an_empty_dataset() {
        let err = build_fr_dataset(&logs(0, 10, 500), D, &DatasetConfig::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset(_)));
    }

    #[test]
    fn infeasible_ratio_reports_what_is_achievable() {
        let err = build_fr_dataset(&logs(10, 100, 50), D, &DatasetConfig::default()).unwrap_err();
        match err {
            Error::RatioInfeasible { requested, achievable } => {
                assert_eq!(requested, 15);
                assert_eq!(achievable, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scarce_accepted_records_are_replaced_by_other_traffic() {
        let split = build_fr_dataset(&logs(100, 40, 5000), D, &DatasetConfig::default()).unwrap();
        assert_eq!(split.len(), 1600);
        let accepted = split.all().filter(|e| e.label_domain == 1 && e.label_fr == 0).count();
        assert_eq!(accepted, 40);
    }

    #[test]
    fn cap_limits_positives() {
        let cfg = DatasetConfig {
            fr_cap: Some(20),
            ..Default::default()
        };
        let split = build_fr_dataset(&logs(100, 400, 5000), D, &cfg).unwrap();
        assert_eq!(split.all().filter(|e| e.is_fr()).count(), 20);
        assert_eq!(split.len(), 320);
    }

    #[test]
    fn jsonl_round_trip_and_errors() {
        let split = build_fr_dataset(&logs(12, 40, 400), D, &DatasetConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_split(dir.path(), &split).unwrap();
        assert_eq!(read_split(dir.path()).unwrap(), split);

        let path = dir.path().join(TRAIN_FILE);
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let truncated = format!("{}\n{}\n{}", lines[0], lines[1], &lines[2][..lines[2].len() / 2]);
        std::fs::write(&path, truncated).unwrap();
        match read_examples(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }

        let extra = lines[0].replacen('{', "{\"surprise\":1,", 1);
        std::fs::write(&path, extra).unwrap();
        assert!(matches!(read_examples(&path), Err(Error::Parse { line: 1, .. })));

        std::fs::write(&path, "").unwrap();
        assert!(read_examples(&path).unwrap().is_empty());
    }

    #[test]
    fn eval_set_keeps_protocol_ratio() {
        let set = build_eval_set(&logs(30, 100, 1000), D, &DatasetConfig::default()).unwrap();
        assert_eq!(set.len(), 30 * 16);
        assert_eq!(set.iter().filter(|e| e.is_fr()).count(), 30);
    }
}
