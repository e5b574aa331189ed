//! FR detector training, pool scoring, candidate filtering and ensembling.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetSplit, DomainId, LabeledExample, Vocab};
use crate::error::{config_err, contract, Error, Result};
use crate::jsonl;
use crate::models::{batch_loss, forward, ModelBundle, ModelInput, ModelKind, ModelSpec, Mode, PretrainedEncoder};
use crate::nlu_sim::RoutingRecord;
use crate::numeric::{adam_step, lr_at_step, AdamConfig, AdamState, ScheduleConfig, Tape};
use crate::seeding;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// `total_steps` is derived from the data and ignored here.
    pub schedule: ScheduleConfig,
    pub w_domain: f64,
    pub w_fr: f64,
    pub seed: u64,
    pub model_kind: ModelKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 32,
            schedule: ScheduleConfig::default(),
            w_domain: 1.0,
            w_fr: 1.0,
            seed: 1,
            model_kind: ModelKind::TransformerNbestMultitask,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(config_err!("epochs and batch size must be at least 1"));
        }
        if self.w_domain < 0.0 || self.w_fr < 0.0 || (self.w_domain == 0.0 && self.w_fr == 0.0) {
            return Err(config_err!("task weights must be non-negative and not both zero"));
        }
        self.schedule.validate()
    }
}

/// `epochs × ceil(n / batch)`
pub fn expected_steps(n_train: usize, batch_size: usize, epochs: usize) -> usize {
    epochs * n_train.div_ceil(batch_size)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub log: Vec<EpochLog>,
    pub steps: usize,
}

fn labels_of(examples: &[&LabeledExample]) -> Vec<(u8, u8)> {
    examples.iter().map(|e| (e.label_domain, e.label_fr)).collect()
}

/// Mean loss in evaluation mode.
pub fn evaluate_loss(bundle: &ModelBundle, examples: &[LabeledExample], config: &TrainConfig) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset("no examples to evaluate".into()));
    }
    let layout = bundle.layout()?;
    let mut tape = Tape::<f32>::new();
    let bound = tape.bind(&bundle.params);
    let base = tape.len();
    let mut total = 0.0;
    for chunk in examples.chunks(config.batch_size.max(64)) {
        tape.truncate(base);
        let inputs: Vec<ModelInput> = chunk.iter().map(|e| bundle.input(&e.utterance.text, &e.nbest)).collect();
        let refs: Vec<&ModelInput> = inputs.iter().collect();
        let exs: Vec<&LabeledExample> = chunk.iter().collect();
        let heads = forward(&mut tape, &bound, &layout, &bundle.spec, &refs, &mut Mode::Eval)?;
        let loss = batch_loss(&mut tape, &heads, &labels_of(&exs), config.w_domain, config.w_fr)?;
        total += f64::from(tape.scalar_value(loss)) * chunk.len() as f64;
    }
    Ok(total / examples.len() as f64)
}

/// Fine-tunes a fresh bundle on `split.train`. Transformer kinds start
/// from `encoder` when one is given.
pub fn train(
    split: &DatasetSplit,
    config: &TrainConfig,
    spec: ModelSpec,
    vocab: Vocab,
    encoder: Option<&PretrainedEncoder>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if spec.kind != config.model_kind {
        return Err(config_err!(
            "model spec is `{}` but training requested `{}`",
            spec.kind.name(),
            config.model_kind.name()
        ));
    }
    if split.train.is_empty() {
        return Err(Error::EmptyDataset("training split is empty".into()));
    }
    let mut bundle = ModelBundle::init(spec, vocab, seeding::derive(config.seed, "detector/init"))?;
    if let (Some(enc), true) = (encoder, bundle.kind().uses_transformer()) {
        bundle.load_encoder(enc)?;
    }
    let layout = bundle.layout()?;
    let inputs: Vec<ModelInput> = split
        .train
        .iter()
        .map(|e| bundle.input(&e.utterance.text, &e.nbest))
        .collect();
    let labels: Vec<(u8, u8)> = split.train.iter().map(|e| (e.label_domain, e.label_fr)).collect();

    let steps_per_epoch = split.train.len().div_ceil(config.batch_size);
    let schedule = ScheduleConfig {
        total_steps: steps_per_epoch * config.epochs,
        ..config.schedule.clone()
    };
    let mut adam = AdamState::new(&bundle.params, AdamConfig::default());
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        order.shuffle(&mut seeding::rng(config.seed, &format!("detector/shuffle{epoch}")));
        let mut drop_rng = seeding::rng(config.seed, &format!("detector/dropout{epoch}"));
        let mut total = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let refs: Vec<&ModelInput> = batch.iter().map(|&i| &inputs[i]).collect();
            let batch_labels: Vec<(u8, u8)> = batch.iter().map(|&i| labels[i]).collect();
            let mut tape = Tape::<f32>::new();
            let bound = tape.bind(&bundle.params);
            let heads = forward(&mut tape, &bound, &layout, &bundle.spec, &refs, &mut Mode::Train(&mut drop_rng))?;
            let loss = batch_loss(&mut tape, &heads, &batch_labels, config.w_domain, config.w_fr)?;
            let value = f64::from(tape.scalar_value(loss));
            step += 1;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    batch: epoch * steps_per_epoch + batch_idx,
                });
            }
            let grads = tape.backward(loss)?;
            let lr = lr_at_step(step, &schedule)?;
            adam_step(&mut bundle.params, &grads.for_params(&bound), &mut adam, lr as f32)?;
            total += value * batch.len() as f64;
        }
        let train_loss = total / inputs.len() as f64;
        let valid_loss = if split.valid.is_empty() {
            None
        } else {
            Some(evaluate_loss(&bundle, &split.valid, config)?)
        };
        log::info!(
            "{} epoch {}: train loss {train_loss:.4}, valid loss {}",
            bundle.kind().name(),
            epoch + 1,
            valid_loss.map_or("n/a".to_string(), |v| format!("{v:.4}"))
        );
        log.push(EpochLog {
            epoch: epoch + 1,
            train_loss,
            valid_loss,
        });
    }
    bundle.step = step as u64;
    Ok(TrainOutcome { bundle, log, steps: step })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub id: String,
    pub p_domain: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_fr: Option<f64>,
    pub routed_domain: DomainId,
    /// Carried along so candidates can be shown to annotators.
    pub text: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoolScores {
    pub scores: Vec<ScoreRecord>,
    /// Records routed to the target and therefore not scored.
    pub skipped: usize,
}

pub const SCORE_BATCH: usize = 128;

/// Scores every record routed away from `target`.
pub fn score_pool(bundle: &ModelBundle, records: &[RoutingRecord], target: DomainId, vocab: &Vocab) -> Result<PoolScores> {
    if vocab.digest() != bundle.vocab.digest() {
        return Err(contract!("records were encoded with a different vocabulary than the model"));
    }
    let kept: Vec<&RoutingRecord> = records.iter().filter(|r| r.routed_domain != target).collect();
    let inputs: Vec<ModelInput> = kept.iter().map(|r| bundle.input(&r.utterance.text, &r.nbest)).collect();
    let preds = bundle.predict(&inputs, SCORE_BATCH)?;
    let scores = kept
        .iter()
        .zip(preds)
        .map(|(r, p)| ScoreRecord {
            id: r.utterance.id.clone(),
            p_domain: p.p_domain,
            p_fr: p.p_fr,
            routed_domain: r.routed_domain,
            text: r.utterance.text.clone(),
        })
        .collect();
    Ok(PoolScores {
        scores,
        skipped: records.len() - kept.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Domain,
    Fr,
}

impl Head {
    pub fn of(self, s: &ScoreRecord) -> Result<f64> {
        match self {
            Head::Domain => Ok(s.p_domain),
            Head::Fr => s
                .p_fr
                .ok_or_else(|| contract!("head `fr` requested but record {} has no FR probability", s.id)),
        }
    }

    /// The FR head for multitask models, the domain head otherwise.
    pub fn default_for(kind: ModelKind) -> Self {
        if kind.is_multitask() {
            Head::Fr
        } else {
            Head::Domain
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub id: String,
    pub score: f64,
    pub text: String,
    pub routed_domain: DomainId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateHeader {
    pub threshold: f64,
    pub head: Head,
    pub model_digest: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateList {
    pub threshold: f64,
    pub head: Head,
    pub entries: Vec<Candidate>,
}

impl CandidateList {
    /// Keeps only the `k` highest-scoring entries.
    pub fn top_k(mut self, k: usize) -> Self {
        self.entries.truncate(k);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn filter_candidates(scores: &[ScoreRecord], target: DomainId, threshold: f64, head: Head) -> Result<CandidateList> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(config_err!("threshold {threshold} outside [0, 1]"));
    }
    let mut entries = Vec::new();
    for s in scores {
        if s.routed_domain == target {
            return Err(contract!("record {} is routed to the target and cannot be a false reject", s.id));
        }
        let p = head.of(s)?;
        if p >= threshold {
            entries.push(Candidate {
                id: s.id.clone(),
                score: p,
                text: s.text.clone(),
                routed_domain: s.routed_domain,
            });
        }
    }
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    Ok(CandidateList { threshold, head, entries })
}

/// Per-record mean of each head across members.
pub fn ensemble_scores(lists: &[Vec<ScoreRecord>]) -> Result<Vec<ScoreRecord>> {
    if lists.len() < 2 {
        return Err(contract!("an ensemble needs at least two members, got {}", lists.len()));
    }
    let first: BTreeSet<&str> = lists[0].iter().map(|s| s.id.as_str()).collect();
    if first.len() != lists[0].len() {
        return Err(contract!("duplicate utterance ids in ensemble member 0"));
    }
    let mut maps = Vec::with_capacity(lists.len());
    for (k, list) in lists.iter().enumerate() {
        let ids: BTreeSet<&str> = list.iter().map(|s| s.id.as_str()).collect();
        if ids != first || ids.len() != list.len() {
            let diff: Vec<&str> = first.symmetric_difference(&ids).copied().collect();
            return Err(contract!("ensemble member {k} covers different ids: {diff:?}"));
        }
        maps.push(list.iter().map(|s| (s.id.as_str(), s)).collect::<HashMap<_, _>>());
    }
    let k = lists.len() as f64;
    lists[0]
        .iter()
        .map(|s| {
            let members: Vec<&ScoreRecord> = maps.iter().map(|m| m[s.id.as_str()]).collect();
            let p_domain = members.iter().map(|m| m.p_domain).sum::<f64>() / k;
            let p_fr = if members.iter().all(|m| m.p_fr.is_some()) {
                Some(members.iter().filter_map(|m| m.p_fr).sum::<f64>() / k)
            } else if members.iter().all(|m| m.p_fr.is_none()) {
                None
            } else {
                return Err(contract!("ensemble members disagree on the presence of an FR head"));
            };
            Ok(ScoreRecord {
                p_domain: p_domain.clamp(0.0, 1.0),
                p_fr: p_fr.map(|p| p.clamp(0.0, 1.0)),
                ..s.clone()
            })
        })
        .collect()
}

pub fn write_scores(path: &Path, scores: &[ScoreRecord]) -> Result<()> {
    jsonl::write(path, scores)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    jsonl::read(path)
}

/// Writes a header line followed by one candidate per line.
pub fn write_candidates(path: &Path, list: &CandidateList, model_digest: &str) -> Result<()> {
    let header = CandidateHeader {
        threshold: list.threshold,
        head: list.head,
        model_digest: model_digest.to_string(),
        count: list.entries.len(),
    };
    let mut lines = vec![serde_json::to_value(&header).map_err(|e| Error::io(path, e.into()))?];
    for c in &list.entries {
        lines.push(serde_json::to_value(c).map_err(|e| Error::io(path, e.into()))?);
    }
    jsonl::write(path, &lines)
}

pub fn read_candidates(path: &Path) -> Result<(CandidateHeader, CandidateList)> {
    let values: Vec<serde_json::Value> = jsonl::read(path)?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let (head_value, rest) = values
        .split_first()
        .ok_or_else(|| parse_err(1, "missing candidate header".into()))?;
    let header: CandidateHeader =
        serde_json::from_value(head_value.clone()).map_err(|e| parse_err(1, e.to_string()))?;
    let entries = rest
        .iter()
        .enumerate()
        .map(|(i, v)| serde_json::from_value(v.clone()).map_err(|e| parse_err(i + 2, e.to_string())))
        .collect::<Result<Vec<Candidate>>>()?;
    if entries.len() != header.count {
        return Err(parse_err(1, format!("header announces {} candidates, found {}", header.count, entries.len())));
    }
    let list = CandidateList {
        threshold: header.threshold,
        head: header.head,
        entries,
    };
    Ok((header, list))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Utterance;
    use crate::models::{BiLstmConfig, FusionConfig, HypothesisEmbedding, TransformerConfig, TRUNK_ACTIVATION};
    use crate::nlu_sim::{Hypothesis, NBestList};

    const D: DomainId = 3;

    fn rec(i: usize, text: &str, true_domain: DomainId, routed: DomainId) -> RoutingRecord {
        let other = if routed == 0 { 1 } else { 0 };
        RoutingRecord {
            utterance: Utterance {
                id: format!("u{i:04}"),
                text: text.into(),
                true_domain,
                true_intent: 0,
            },
            nbest: NBestList {
                hypotheses: vec![
                    Hypothesis { domain_id: routed, intent_id: 0, score: 0.6 },
                    Hypothesis { domain_id: other, intent_id: 0, score: 0.4 },
                ],
            },
            routed_domain: routed,
        }
    }

    /// Positives mention "novel", negatives never do.
    fn toy_split() -> (DatasetSplit, Vocab) {
        let mut train = Vec::new();
        for i in 0..20 {
            let r = if i % 2 == 0 {
                rec(i, &format!("open novel {}", ["alpha", "beta", "gamma"][i % 3]), D, 1)
            } else {
                rec(i, &format!("play song {}", ["alpha", "beta", "gamma"][i % 3]), 1, 1)
            };
            train.push(LabeledExample::from_record(&r, D));
        }
        let utts: Vec<Utterance> = train.iter().map(|e| e.utterance.clone()).collect();
        let vocab = Vocab::build(&utts);
        let valid = train[..4].to_vec();
        (
            DatasetSplit {
                train,
                valid,
                ratio_fr_to_nonfr: (1, 1),
                holdout_fraction: 0.0,
            },
            vocab,
        )
    }

    fn small_spec(kind: ModelKind, vocab: usize) -> ModelSpec {
        ModelSpec {
            kind,
            bilstm: BiLstmConfig { vocab_size: vocab, embed_dim: 8, hidden: 8 },
            transformer: TransformerConfig {
                vocab_size: vocab,
                hidden: 16,
                layers: 1,
                heads: 2,
                ff_multiple: 2,
                max_len: 8,
                dropout: 0.0,
            },
            fusion: FusionConfig { n: 2, d: 3, hidden: 16, num_domains: 4, embedding: HypothesisEmbedding::DomainAndScore },
            trunk_activation: TRUNK_ACTIVATION.into(),
        }
    }

    fn toy_config(kind: ModelKind) -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 4,
            schedule: ScheduleConfig { base_lr: 0.05, ..Default::default() },
            model_kind: kind,
            ..Default::default()
        }
    }

    /// Perceptron over bag-of-words: converges only if the toy data are
    /// linearly separable, which the training test relies on.
    fn linearly_separable(split: &DatasetSplit, vocab: &Vocab) -> bool {
        let mut w = vec![0.0f64; vocab.len() + 1];
        for _ in 0..100 {
            let mut mistakes = 0;
            for e in &split.train {
                let feats = vocab.encode(&e.utterance.text);
                let y = if e.label_domain == 1 { 1.0 } else { -1.0 };
                let s: f64 = w[vocab.len()] + feats.iter().map(|&f| w[f]).sum::<f64>();
                if y * s <= 0.0 {
                    mistakes += 1;
                    w[vocab.len()] += y;
                    for &f in &feats {
                        w[f] += y;
                    }
                }
            }
            if mistakes == 0 {
                return true;
            }
        }
        false
    }

    #[test]
    fn toy_dataset_is_learned() {
        let (split, vocab) = toy_split();
        assert!(linearly_separable(&split, &vocab));
        for kind in [ModelKind::Bilstm, ModelKind::TransformerNbestMultitask] {
            let spec = small_spec(kind, vocab.len());
            let out = train(&split, &toy_config(kind), spec, vocab.clone(), None).unwrap();
            assert_eq!(out.steps, 15);
            assert_eq!(out.log.len(), 3);
            assert!(out.log[2].train_loss < 0.1, "{kind:?}: {:?}", out.log);
        }
    }

    #[test]
    fn step_count_formula() {
        assert_eq!(expected_steps(1360, 32, 3), 129);
        assert_eq!(expected_steps(1360, 32, 1), 43);
        assert_eq!(expected_steps(1, 32, 2), 2);
    }

    #[test]
    fn training_is_deterministic() {
        let (split, vocab) = toy_split();
        let kind = ModelKind::TransformerNbestSingle;
        let mut cfg = toy_config(kind);
        cfg.epochs = 1;
        let mut spec = small_spec(kind, vocab.len());
        spec.transformer.dropout = 0.1;
        let a = train(&split, &cfg, spec.clone(), vocab.clone(), None).unwrap();
        let b = train(&split, &cfg, spec, vocab, None).unwrap();
        assert_eq!(a.bundle.digest(), b.bundle.digest());
    }

    #[test]
    fn non_finite_loss_aborts_with_step() {
        let (split, vocab) = toy_split();
        let kind = ModelKind::Bilstm;
        let mut cfg = toy_config(kind);
        cfg.schedule.base_lr = f64::MAX;
        cfg.schedule.warmup_fraction = 0.01;
        match train(&split, &cfg, small_spec(kind, vocab.len()), vocab, None) {
            Err(Error::NonFiniteLoss { step, .. }) => assert!(step >= 2),
            Err(Error::Numeric { .. }) => {}
            other => panic!("expected a non-finite failure, got {:?}", other.map(|o| o.steps)),
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = TrainConfig::default();
        cfg.w_domain = 0.0;
        cfg.w_fr = 0.0;
        assert!(cfg.validate().unwrap_err().is_config());
        cfg = TrainConfig { epochs: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    fn trained(kind: ModelKind) -> (ModelBundle, Vocab) {
        let (split, vocab) = toy_split();
        let mut cfg = toy_config(kind);
        cfg.epochs = 1;
        let out = train(&split, &cfg, small_spec(kind, vocab.len()), vocab.clone(), None).unwrap();
        (out.bundle, vocab)
    }

    #[test]
    fn scoring_skips_target_and_is_order_independent() {
        let (bundle, vocab) = trained(ModelKind::TransformerNbestMultitask);
        let all_target: Vec<RoutingRecord> = (0..5).map(|i| rec(i, "open novel alpha", D, D)).collect();
        let out = score_pool(&bundle, &all_target, D, &vocab).unwrap();
        assert!(out.scores.is_empty());
        assert_eq!(out.skipped, 5);

        let pool: Vec<RoutingRecord> = (0..6)
            .map(|i| rec(i, ["open novel beta", "play song alpha", "open song gamma"][i % 3], 1, if i == 4 { D } else { 1 + i % 2 }))
            .collect();
        let forward_scores = score_pool(&bundle, &pool, D, &vocab).unwrap();
        assert_eq!(forward_scores.skipped, 1);
        let mut reversed = pool.clone();
        reversed.reverse();
        let mut backward_scores = score_pool(&bundle, &reversed, D, &vocab).unwrap().scores;
        backward_scores.reverse();
        assert_eq!(forward_scores.scores, backward_scores);
        assert!(forward_scores.scores.iter().all(|s| s.p_fr.is_some()));

        let other = Vocab::build(&[pool[0].utterance.clone()]);
        assert!(score_pool(&bundle, &pool, D, &other).is_err());
    }

    #[test]
    fn single_task_scores_have_no_fr() {
        let (bundle, vocab) = trained(ModelKind::Transformer);
        let pool = vec![rec(0, "open novel beta", D, 1)];
        let scores = score_pool(&bundle, &pool, D, &vocab).unwrap().scores;
        assert!(scores[0].p_fr.is_none());
        assert!(filter_candidates(&scores, D, 0.5, Head::Fr).is_err());
    }

    fn score(id: &str, p: f64) -> ScoreRecord {
        ScoreRecord {
            id: id.into(),
            p_domain: p,
            p_fr: Some(p / 2.0),
            routed_domain: 1,
            text: format!("text {id}"),
        }
    }

    #[test]
    fn filtering_rule() {
        let scores = vec![score("a", 0.9), score("b", 0.4), score("c", 0.9), score("d", 0.55)];
        let c = filter_candidates(&scores, D, 0.5, Head::Domain).unwrap();
        let ids: Vec<&str> = c.entries.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["a", "c", "d"]);
        assert_eq!(filter_candidates(&scores, D, 0.0, Head::Domain).unwrap().len(), 4);
        let fr = filter_candidates(&scores, D, 0.3, Head::Fr).unwrap();
        assert_eq!(fr.len(), 2);
        assert_eq!(c.clone().top_k(1).entries[0].id, "a");
        for (lo, hi) in [(0.0, 0.5), (0.4, 0.9), (0.5, 0.55)] {
            let small = filter_candidates(&scores, D, hi, Head::Domain).unwrap();
            let large = filter_candidates(&scores, D, lo, Head::Domain).unwrap();
            assert!(small.entries.iter().all(|e| large.entries.contains(e)));
        }
        let mut bad = scores.clone();
        bad[0].routed_domain = D;
        assert!(filter_candidates(&bad, D, 0.5, Head::Domain).is_err());
    }

    #[test]
    fn ensemble_means_and_bounds() {
        let a = vec![score("x", 0.4), score("y", 0.8)];
        assert_eq!(ensemble_scores(&[a.clone(), a.clone()]).unwrap(), a);
        let b = vec![score("y", 0.2), score("x", 0.8)];
        let e = ensemble_scores(&[a.clone(), b.clone()]).unwrap();
        assert!((e[0].p_fr.unwrap() - 0.3).abs() < 1e-12);
        for rec in &e {
            let members: Vec<f64> = [&a, &b]
                .iter()
                .map(|l| l.iter().find(|s| s.id == rec.id).unwrap().p_domain)
                .collect();
            let (lo, hi) = (members[0].min(members[1]), members[0].max(members[1]));
            assert!(rec.p_domain >= lo && rec.p_domain <= hi);
        }
        let err = ensemble_scores(&[a.clone(), vec![score("x", 0.1), score("z", 0.1)]]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("\"y\"") && msg.contains("\"z\""), "{msg}");
        assert!(ensemble_scores(&[a]).is_err());
    }

    #[test]
    fn candidate_file_round_trip() {
        let list = filter_candidates(&[score("a", 0.9), score("b", 0.7)], D, 0.5, Head::Domain).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("candidates.jsonl");
        write_candidates(&path, &list, "abc").unwrap();
        let (header, back) = read_candidates(&path).unwrap();
        assert_eq!(header.model_digest, "abc");
        assert_eq!(header.count, 2);
        assert_eq!(back, list);
    }
}
