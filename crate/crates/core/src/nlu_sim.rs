//! Simulated production NLU: one-vs-all domain classifiers, per-domain
//! intent classifiers, a reranker producing N-best lists, and a router.
//! Routing errors for the target domain are injected by a score bias on
//! that domain plus per-utterance Gaussian noise.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{DomainId, Utterance, Vocab};
use crate::error::{config_err, contract, Result};
use crate::seeding;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hypothesis {
    pub domain_id: DomainId,
    pub intent_id: usize,
    pub score: f64,
}

/// Reranker output, best hypothesis first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NBestList {
    pub hypotheses: Vec<Hypothesis>,
}

impl NBestList {
    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn top(&self) -> Option<&Hypothesis> {
        self.hypotheses.first()
    }

    /// Sorted by non-increasing score, distinct domains, scores in [0, 1].
    pub fn validate(&self, max_len: usize) -> Result<()> {
        if self.hypotheses.len() > max_len {
            return Err(contract!("n-best has {} entries, max {max_len}", self.hypotheses.len()));
        }
        for (i, h) in self.hypotheses.iter().enumerate() {
            if !(h.score.is_finite() && (0.0..=1.0).contains(&h.score)) {
                return Err(contract!("n-best score {} out of range", h.score));
            }
            if i > 0 && self.hypotheses[i - 1].score < h.score {
                return Err(contract!("n-best scores are not sorted"));
            }
            if self.hypotheses[..i].iter().any(|o| o.domain_id == h.domain_id) {
                return Err(contract!("domain {} repeated in n-best", h.domain_id));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingRecord {
    pub utterance: Utterance,
    pub nbest: NBestList,
    pub routed_domain: DomainId,
}

impl RoutingRecord {
    pub fn is_false_reject(&self, target: DomainId) -> bool {
        self.utterance.true_domain == target && self.routed_domain != target
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    /// Added to the target domain's combined score; never positive.
    pub target_bias: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl PerturbationConfig {
    pub fn none() -> Self {
        Self {
            target_bias: 0.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) {
            return Err(config_err!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(self.target_bias <= 0.0) {
            return Err(config_err!("target_bias must be <= 0, got {}", self.target_bias));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductionConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Loss weight of positive examples in every one-vs-all classifier.
    pub positive_weight: f64,
    pub seed: u64,
}

impl Default for ProductionConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.1,
            positive_weight: 3.0,
            seed: 1,
        }
    }
}

/// Maximum-entropy style linear models over bag-of-words features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainModelParams {
    pub vocab_size: usize,
    /// `[M][V]` one-vs-all weights.
    pub domain_weights: Vec<Vec<f64>>,
    pub domain_bias: Vec<f64>,
    /// `[M][K_d][V]` intent weights.
    pub intent_weights: Vec<Vec<Vec<f64>>>,
    pub intent_bias: Vec<Vec<f64>>,
}

/// Distinct, non-reserved token ids: the binary bag-of-words feature set.
pub fn features(vocab: &Vocab, text: &str) -> Vec<usize> {
    let mut ids: Vec<usize> = vocab
        .encode(text)
        .into_iter()
        .filter(|&id| !Vocab::is_reserved(id))
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

fn sigmoid(x: f64) -> f64 {
    crate::numeric::binary_class_probs(x).1
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Per-domain scores for one utterance, before reranking.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainScores {
    pub domain: Vec<f64>,
    pub intents: Vec<Vec<f64>>,
}

impl DomainModelParams {
    pub fn num_domains(&self) -> usize {
        self.domain_bias.len()
    }

    pub fn score_features(&self, feats: &[usize]) -> DomainScores {
        let domain = self
            .domain_weights
            .iter()
            .zip(&self.domain_bias)
            .map(|(w, b)| sigmoid(b + feats.iter().map(|&f| w[f]).sum::<f64>()))
            .collect();
        let intents = self
            .intent_weights
            .iter()
            .zip(&self.intent_bias)
            .map(|(ws, bs)| {
                let logits: Vec<f64> = ws
                    .iter()
                    .zip(bs)
                    .map(|(w, b)| b + feats.iter().map(|&f| w[f]).sum::<f64>())
                    .collect();
                softmax(&logits)
            })
            .collect();
        DomainScores { domain, intents }
    }

    pub fn score(&self, vocab: &Vocab, text: &str) -> DomainScores {
        self.score_features(&features(vocab, text))
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("serialisable"));
        hex::encode(h.finalize())
    }
}

struct Example {
    feats: Vec<usize>,
    domain: DomainId,
    intent: usize,
}

fn sgd_binary(w: &mut [f64], b: &mut f64, feats: &[usize], label: f64, weight: f64, lr: f64) {
    let p = sigmoid(*b + feats.iter().map(|&f| w[f]).sum::<f64>());
    let g = weight * (p - label);
    *b -= lr * g;
    for &f in feats {
        w[f] -= lr * g;
    }
}

/// Trains all one-vs-all domain classifiers and intent classifiers with
/// seeded stochastic gradient descent on the logistic / softmax loss.
pub fn train_production_models(
    corpus: &[Utterance],
    vocab: &Vocab,
    num_intents: &[usize],
    config: &ProductionConfig,
) -> Result<DomainModelParams> {
    let m = num_intents.len();
    let mut seen = vec![0usize; m];
    for u in corpus {
        if u.true_domain >= m {
            return Err(contract!("utterance {} has domain {} >= {m}", u.id, u.true_domain));
        }
        seen[u.true_domain] += 1;
    }
    if seen.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(config_err!("production training needs at least two populated domains"));
    }
    let v = vocab.len();
    let mut params = DomainModelParams {
        vocab_size: v,
        domain_weights: vec![vec![0.0; v]; m],
        domain_bias: vec![0.0; m],
        intent_weights: num_intents.iter().map(|&k| vec![vec![0.0; v]; k]).collect(),
        intent_bias: num_intents.iter().map(|&k| vec![0.0; k]).collect(),
    };
    let examples: Vec<Example> = corpus
        .iter()
        .map(|u| Example {
            feats: features(vocab, &u.text),
            domain: u.true_domain,
            intent: u.true_intent,
        })
        .collect();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let lr = config.learning_rate;
    for epoch in 0..config.epochs {
        order.shuffle(&mut seeding::rng(config.seed, &format!("production/epoch{epoch}")));
        for &i in &order {
            let ex = &examples[i];
            for d in 0..m {
                let positive = ex.domain == d;
                let (label, weight) = if positive {
                    (1.0, config.positive_weight)
                } else {
                    (0.0, 1.0)
                };
                let (w, b) = (&mut params.domain_weights[d], &mut params.domain_bias[d]);
                sgd_binary(w, b, &ex.feats, label, weight, lr);
            }
            let d = ex.domain;
            let k = num_intents[d];
            if ex.intent >= k {
                return Err(contract!("intent {} out of range for domain {d}", ex.intent));
            }
            let logits: Vec<f64> = (0..k)
                .map(|j| {
                    params.intent_bias[d][j]
                        + ex.feats.iter().map(|&f| params.intent_weights[d][j][f]).sum::<f64>()
                })
                .collect();
            let probs = softmax(&logits);
            for (j, p) in probs.into_iter().enumerate() {
                let g = p - if j == ex.intent { 1.0 } else { 0.0 };
                params.intent_bias[d][j] -= lr * g;
                for &f in &ex.feats {
                    params.intent_weights[d][j][f] -= lr * g;
                }
            }
        }
    }
    Ok(params)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Start from zero weights instead of the current production weights.
    #[serde(default)]
    pub from_scratch: bool,
    pub seed: u64,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            learning_rate: 0.1,
            from_scratch: false,
            seed: 1,
        }
    }
}

/// Retrains only the target domain's one-vs-all classifier on the
/// original corpus plus `extra_positives`; every other weight is copied.
pub fn retrain_domain_classifier(
    production: &DomainModelParams,
    corpus: &[Utterance],
    extra_positives: &[Utterance],
    vocab: &Vocab,
    target: DomainId,
    positive_weight: f64,
    config: &RetrainConfig,
) -> Result<DomainModelParams> {
    if target >= production.num_domains() {
        return Err(contract!("target domain {target} out of range"));
    }
    if vocab.len() != production.vocab_size {
        return Err(contract!("vocabulary size differs from production models"));
    }
    let mut out = production.clone();
    if config.from_scratch {
        out.domain_weights[target].iter_mut().for_each(|w| *w = 0.0);
        out.domain_bias[target] = 0.0;
    }
    let examples: Vec<(Vec<usize>, f64)> = corpus
        .iter()
        .map(|u| (features(vocab, &u.text), if u.true_domain == target { 1.0 } else { 0.0 }))
        .chain(extra_positives.iter().map(|u| (features(vocab, &u.text), 1.0)))
        .collect();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut seeding::rng(config.seed, &format!("retrain/epoch{epoch}")));
        for &i in &order {
            let (feats, label) = &examples[i];
            let weight = if *label > 0.5 { positive_weight } else { 1.0 };
            let (w, b) = (&mut out.domain_weights[target], &mut out.domain_bias[target]);
            sgd_binary(w, b, feats, *label, weight, config.learning_rate);
        }
    }
    Ok(out)
}

fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Combines domain and best-intent scores with equal weights, applies the
/// perturbation, sorts descending (ties by ascending domain id) and keeps
/// the top `n`. Scores are softmax-normalised over all domains and rounded
/// to nine significant digits.
pub fn rerank(
    scores: &DomainScores,
    perturbation: &PerturbationConfig,
    target: DomainId,
    n: usize,
    noise: &mut impl Rng,
) -> Result<NBestList> {
    let m = scores.domain.len();
    if n == 0 {
        return Err(config_err!("n-best size must be at least 1"));
    }
    if n > m {
        return Err(config_err!("n-best size {n} exceeds number of domains {m}"));
    }
    let mut combined = Vec::with_capacity(m);
    let mut best_intent = Vec::with_capacity(m);
    for d in 0..m {
        let (intent, intent_score) = scores.intents[d]
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, p)| if p > acc.1 { (j, p) } else { acc });
        let mut c = scores.domain[d] + intent_score.max(0.0);
        if d == target {
            c += perturbation.target_bias;
        }
        if perturbation.noise_sigma > 0.0 {
            let z: f64 = noise.sample(StandardNormal);
            c += perturbation.noise_sigma * z;
        }
        combined.push(c);
        best_intent.push(intent);
    }
    let probs = softmax(&combined);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| combined[b].total_cmp(&combined[a]).then(a.cmp(&b)));
    let hypotheses = order
        .into_iter()
        .take(n)
        .map(|d| Hypothesis {
            domain_id: d,
            intent_id: best_intent[d],
            score: round_sig9(probs[d]),
        })
        .collect();
    Ok(NBestList { hypotheses })
}

/// Sends the utterance to the top-ranked domain.
pub fn route(utterance: Utterance, nbest: NBestList) -> Result<RoutingRecord> {
    let routed_domain = nbest
        .top()
        .ok_or_else(|| contract!("cannot route {} with an empty n-best list", utterance.id))?
        .domain_id;
    Ok(RoutingRecord {
        utterance,
        nbest,
        routed_domain,
    })
}

/// Named-entity recognition placeholder; nothing downstream consumes slots.
pub fn recognize_entities(_utterance: &Utterance) -> Vec<(usize, usize)> {
    Vec::new()
}

/// The full production path for one target domain.
#[derive(Clone, Debug)]
pub struct Production<'a> {
    pub models: &'a DomainModelParams,
    pub vocab: &'a Vocab,
    pub perturbation: PerturbationConfig,
    pub target: DomainId,
    pub n_best: usize,
}

impl Production<'_> {
    pub fn process(&self, utterance: &Utterance) -> Result<RoutingRecord> {
        let scores = self.models.score(self.vocab, &utterance.text);
        let mut noise = seeding::rng(self.perturbation.seed, &format!("noise/{}", utterance.id));
        let nbest = rerank(&scores, &self.perturbation, self.target, self.n_best, &mut noise)?;
        let _entities = recognize_entities(utterance);
        route(utterance.clone(), nbest)
    }

    pub fn process_all(&self, utterances: &[Utterance]) -> Result<Vec<RoutingRecord>> {
        utterances.iter().map(|u| self.process(u)).collect()
    }

    /// Share of target-domain utterances routed elsewhere.
    pub fn fr_rate(&self, utterances: &[Utterance]) -> Result<f64> {
        let mut total = 0usize;
        let mut fr = 0usize;
        for u in utterances.iter().filter(|u| u.true_domain == self.target) {
            total += 1;
            if self.process(u)?.routed_domain != self.target {
                fr += 1;
            }
        }
        if total == 0 {
            return Err(contract!("no target-domain utterances to measure"));
        }
        Ok(fr as f64 / total as f64)
    }

    pub fn fr_count(&self, utterances: &[Utterance]) -> Result<usize> {
        let mut fr = 0;
        for u in utterances.iter().filter(|u| u.true_domain == self.target) {
            if self.process(u)?.routed_domain != self.target {
                fr += 1;
            }
        }
        Ok(fr)
    }
}

/// Finds, by bisection, the least negative target bias whose FR rate over
/// `utterances` reaches `desired_rate`, then returns whichever bracket end
/// lands closer to the requested rate.
pub fn calibrate_target_bias(
    base: &Production<'_>,
    utterances: &[Utterance],
    desired_rate: f64,
) -> Result<PerturbationConfig> {
    if !(0.0..1.0).contains(&desired_rate) {
        return Err(config_err!("desired FR rate {desired_rate} outside [0, 1)"));
    }
    let targets: Vec<Utterance> = utterances
        .iter()
        .filter(|u| u.true_domain == base.target)
        .cloned()
        .collect();
    let rate_at = |bias: f64| -> Result<f64> {
        let p = Production {
            perturbation: PerturbationConfig {
                target_bias: bias,
                ..base.perturbation.clone()
            },
            ..base.clone()
        };
        p.fr_rate(&targets)
    };
    let mut lo = 0.0;
    let lo_rate = rate_at(lo)?;
    if lo_rate >= desired_rate {
        log::warn!("unbiased FR rate {lo_rate:.3} already exceeds the requested {desired_rate}");
        return Ok(PerturbationConfig {
            target_bias: 0.0,
            ..base.perturbation.clone()
        });
    }
    let mut hi = -0.25;
    while rate_at(hi)? < desired_rate {
        hi *= 2.0;
        if hi < -1e6 {
            return Err(config_err!("FR rate {desired_rate} unreachable by target bias"));
        }
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if rate_at(mid)? >= desired_rate {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (r_lo, r_hi) = (rate_at(lo)?, rate_at(hi)?);
    let bias = if (r_lo - desired_rate).abs() < (r_hi - desired_rate).abs() {
        lo
    } else {
        hi
    };
    Ok(PerturbationConfig {
        target_bias: bias,
        ..base.perturbation.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, standard_catalog};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat_scores(domain: &[f64]) -> DomainScores {
        DomainScores {
            domain: domain.to_vec(),
            intents: domain.iter().map(|_| vec![0.0]).collect(),
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn rerank_sorts_descending() {
        let nb = rerank(&flat_scores(&[0.2, 0.9, 0.5]), &PerturbationConfig::none(), 0, 3, &mut rng())
            .unwrap();
        let order: Vec<_> = nb.hypotheses.iter().map(|h| h.domain_id).collect();
        assert_eq!(order, vec![1, 2, 0]);
        nb.validate(3).unwrap();
    }

    #[test]
    fn ties_break_by_ascending_domain() {
        let nb = rerank(
            &flat_scores(&[0.1, 0.7, 0.2, 0.7]),
            &PerturbationConfig::none(),
            0,
            2,
            &mut rng(),
        )
        .unwrap();
        assert_eq!(nb.hypotheses[0].domain_id, 1);
        assert_eq!(nb.hypotheses[1].domain_id, 3);
    }

    #[test]
    fn huge_negative_bias_never_ranks_target_first() {
        let p = PerturbationConfig {
            target_bias: -1e9,
            ..PerturbationConfig::none()
        };
        for top in [0.99, 0.5, 0.01] {
            let nb = rerank(&flat_scores(&[top, 0.0, 0.0]), &p, 0, 3, &mut rng()).unwrap();
            assert_ne!(nb.hypotheses[0].domain_id, 0);
        }
    }

    #[test]
    fn n_larger_than_domains_is_rejected() {
        let err = rerank(&flat_scores(&[0.1, 0.2]), &PerturbationConfig::none(), 0, 3, &mut rng())
            .unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn routing_takes_the_top_hypothesis() {
        let u = Utterance {
            id: "u1".into(),
            text: "x".into(),
            true_domain: 4,
            true_intent: 0,
        };
        let nb = NBestList {
            hypotheses: vec![
                Hypothesis { domain_id: 4, intent_id: 0, score: 0.8 },
                Hypothesis { domain_id: 2, intent_id: 1, score: 0.1 },
            ],
        };
        assert_eq!(route(u.clone(), nb).unwrap().routed_domain, 4);
        let single = NBestList {
            hypotheses: vec![Hypothesis { domain_id: 6, intent_id: 0, score: 1.0 }],
        };
        assert_eq!(route(u.clone(), single).unwrap().routed_domain, 6);
        assert!(route(u, NBestList::default()).is_err());
    }

    #[test]
    fn scores_survive_json_round_trip() {
        let nb = rerank(
            &flat_scores(&[0.123456789123, 0.9, 0.5, 0.3]),
            &PerturbationConfig { noise_sigma: 0.3, ..PerturbationConfig::none() },
            0,
            4,
            &mut rng(),
        )
        .unwrap();
        let json = serde_json::to_string(&nb).unwrap();
        let back: NBestList = serde_json::from_str(&json).unwrap();
        assert_eq!(back, nb);
        for h in &nb.hypotheses {
            let digits = format!("{}", h.score).trim_start_matches("0.").trim_start_matches('0').replace('.', "").len();
            assert!(digits <= 9, "{}", h.score);
        }
    }

    fn disjoint_corpus() -> (Vec<Utterance>, Vocab) {
        let mut corpus = Vec::new();
        for i in 0..50 {
            corpus.push(Utterance {
                id: format!("a{i}"),
                text: format!("alpha a{} beta", i % 7),
                true_domain: 0,
                true_intent: i % 2,
            });
            corpus.push(Utterance {
                id: format!("b{i}"),
                text: format!("gamma g{} delta", i % 5),
                true_domain: 1,
                true_intent: 0,
            });
        }
        let vocab = Vocab::build(&corpus);
        (corpus, vocab)
    }

    #[test]
    fn disjoint_vocabularies_are_learned_perfectly() {
        let (corpus, vocab) = disjoint_corpus();
        let models = train_production_models(&corpus, &vocab, &[2, 1], &ProductionConfig::default()).unwrap();
        for u in &corpus {
            let s = models.score(&vocab, &u.text);
            let argmax = if s.domain[0] > s.domain[1] { 0 } else { 1 };
            assert_eq!(argmax, u.true_domain, "{}", u.text);
        }
    }

    #[test]
    fn all_unknown_tokens_score_sigmoid_bias() {
        let (corpus, vocab) = disjoint_corpus();
        let models = train_production_models(&corpus, &vocab, &[2, 1], &ProductionConfig::default()).unwrap();
        let s = models.score(&vocab, "zzz qqq");
        for d in 0..2 {
            assert_eq!(s.domain[d], sigmoid(models.domain_bias[d]));
        }
    }

    #[test]
    fn training_is_deterministic_and_needs_two_domains() {
        let (corpus, vocab) = disjoint_corpus();
        let cfg = ProductionConfig::default();
        let a = train_production_models(&corpus, &vocab, &[2, 1], &cfg).unwrap();
        let b = train_production_models(&corpus, &vocab, &[2, 1], &cfg).unwrap();
        assert_eq!(a.digest(), b.digest());
        let only_a: Vec<_> = corpus.iter().filter(|u| u.true_domain == 0).cloned().collect();
        assert!(train_production_models(&only_a, &vocab, &[2, 1], &cfg).unwrap_err().is_config());
    }

    fn standard_setup() -> (Vec<Utterance>, Vocab, DomainModelParams, Vec<Utterance>) {
        let cat = standard_catalog();
        let corpus = generate_corpus(&cat, 10_000, 7, "c").unwrap();
        let traffic = generate_corpus(&cat, 30_000, 8, "t").unwrap();
        let vocab = Vocab::build(corpus.iter().chain(&traffic));
        let intents: Vec<usize> = cat.domains.iter().map(|d| d.intents.len()).collect();
        let models = train_production_models(&corpus, &vocab, &intents, &ProductionConfig::default()).unwrap();
        (corpus, vocab, models, traffic)
    }

    #[test]
    fn noiseless_routing_is_argmax_of_combined_scores() {
        let (corpus, vocab, models, _) = standard_setup();
        let prod = Production {
            models: &models,
            vocab: &vocab,
            perturbation: PerturbationConfig::none(),
            target: 7,
            n_best: 5,
        };
        for u in corpus.iter().take(500) {
            let rec = prod.process(u).unwrap();
            rec.nbest.validate(5).unwrap();
            // independent recomputation of the combined score
            let s = models.score(&vocab, &u.text);
            let mut best = (0usize, f64::NEG_INFINITY);
            for d in 0..8 {
                let c = s.domain[d] + s.intents[d].iter().copied().fold(0.0, f64::max);
                if c > best.1 {
                    best = (d, c);
                }
            }
            assert_eq!(rec.routed_domain, best.0);
        }
    }

    #[test]
    fn fr_rate_is_monotone_in_bias_and_calibrates() {
        let (corpus, vocab, models, _) = standard_setup();
        let mk = |bias: f64, sigma: f64| Production {
            models: &models,
            vocab: &vocab,
            perturbation: PerturbationConfig { target_bias: bias, noise_sigma: sigma, seed: 3 },
            target: 7,
            n_best: 5,
        };
        let rates: Vec<f64> = [0.0, -0.3, -0.8]
            .iter()
            .map(|&b| mk(b, 0.0).fr_rate(&corpus).unwrap())
            .collect();
        assert!(rates[0] <= rates[1] && rates[1] <= rates[2], "{rates:?}");
        assert!(rates[0] < 0.2, "unbiased rate {} leaves nothing to calibrate", rates[0]);

        let calibrated = calibrate_target_bias(&mk(0.0, 0.1), &corpus, 0.2).unwrap();
        assert!(calibrated.target_bias <= 0.0);
        let rate = mk(calibrated.target_bias, 0.1).fr_rate(&corpus).unwrap();
        assert!((rate - 0.2).abs() <= 0.03, "rate {rate} bias {}", calibrated.target_bias);
    }
}
