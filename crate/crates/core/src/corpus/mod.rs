//! Synthetic multi-domain utterance corpus and the FR training dataset.

mod catalog;
pub mod dataset;
mod vocab;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::seeding;

pub use catalog::standard_catalog;
pub use dataset::{
    build_eval_set, build_fr_dataset, read_examples, read_split, write_examples, write_split,
    DatasetConfig, DatasetSplit, LabeledExample,
};
pub use vocab::{Vocab, CLS_ID, MASK_ID, PAD_ID, UNK_ID};

pub type DomainId = usize;

pub const CORPUS_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentSpec {
    pub name: String,
    /// Carrier phrases specific to this domain, with `{slot}` placeholders.
    pub templates: Vec<String>,
    /// Carrier phrases that other domains use as well.
    #[serde(default)]
    pub shared_templates: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub domain_id: DomainId,
    pub name: String,
    pub traffic_share: f64,
    /// Probability that an utterance uses one of the shared carriers.
    pub overlap_coefficient: f64,
    pub intents: Vec<IntentSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub schema_version: u32,
    pub target_domain: DomainId,
    /// Slot values are drawn with probability proportional to `1 / rank^s`.
    pub zipf_exponent: f64,
    pub slots: BTreeMap<String, Vec<String>>,
    pub domains: Vec<DomainSpec>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        standard_catalog()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Utterance {
    pub id: String,
    /// Lowercase words separated by single spaces.
    pub text: String,
    pub true_domain: DomainId,
    pub true_intent: usize,
}

impl Utterance {
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.text.split_whitespace()
    }
}

fn placeholders(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        let Some(len) = rest[start..].find('}') else { break };
        out.push(&rest[start + 1..start + len]);
        rest = &rest[start + len + 1..];
    }
    out
}

impl CorpusConfig {
    pub fn num_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn domain_names(&self) -> Vec<String> {
        self.domains.iter().map(|d| d.name.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CORPUS_SCHEMA_VERSION {
            return Err(config_err!(
                "corpus schema_version {} unsupported (expected {CORPUS_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let m = self.domains.len();
        if m < 2 {
            return Err(config_err!("need at least two domains, got {m}"));
        }
        if self.target_domain >= m {
            return Err(config_err!("target domain {} out of range", self.target_domain));
        }
        let total: f64 = self.domains.iter().map(|d| d.traffic_share).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(config_err!("traffic shares sum to {total}, expected 1"));
        }
        for (i, d) in self.domains.iter().enumerate() {
            if d.domain_id != i {
                return Err(config_err!("domain `{}` has id {} at position {i}", d.name, d.domain_id));
            }
            if !(d.traffic_share > 0.0 && d.traffic_share <= 1.0) {
                return Err(config_err!("domain `{}` share {} outside (0, 1]", d.name, d.traffic_share));
            }
            if !(0.0..=1.0).contains(&d.overlap_coefficient) {
                return Err(config_err!("domain `{}` overlap outside [0, 1]", d.name));
            }
            if d.intents.is_empty() {
                return Err(config_err!("domain `{}` has no intents", d.name));
            }
            for intent in &d.intents {
                if intent.templates.is_empty() {
                    return Err(config_err!("intent `{}` has no templates", intent.name));
                }
                for t in intent.templates.iter().chain(&intent.shared_templates) {
                    if t.split_whitespace().next().is_none() {
                        return Err(config_err!("intent `{}` has an empty template", intent.name));
                    }
                    for slot in placeholders(t) {
                        match self.slots.get(slot) {
                            Some(values) if !values.is_empty() => {}
                            _ => return Err(config_err!("template `{t}` uses unknown slot `{slot}`")),
                        }
                    }
                }
            }
        }
        let target = &self.domains[self.target_domain];
        if target.traffic_share >= 0.005 {
            return Err(config_err!(
                "target domain share {} must be below 0.005",
                target.traffic_share
            ));
        }
        let confusable = self
            .domains
            .iter()
            .any(|d| d.domain_id != self.target_domain && d.overlap_coefficient > 0.0);
        if !confusable {
            return Err(config_err!(
                "at least one non-target domain needs a positive overlap coefficient"
            ));
        }
        if !(self.zipf_exponent >= 0.0) {
            return Err(config_err!("zipf_exponent must be non-negative"));
        }
        Ok(())
    }
}

struct ZipfTable {
    cumulative: Vec<f64>,
}

impl ZipfTable {
    fn new(n: usize, s: f64) -> Self {
        let mut acc = 0.0;
        let cumulative = (1..=n)
            .map(|r| {
                acc += 1.0 / (r as f64).powf(s);
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let u = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1)
    }
}

/// Generates `n_utterances` utterances; ids are `{id_prefix}{index:07}`.
///
/// Domains are drawn from the traffic shares, intents uniformly, carrier
/// phrases from the shared list with probability `overlap_coefficient`,
/// and slot values by Zipf rank.
pub fn generate_corpus(
    config: &CorpusConfig,
    n_utterances: usize,
    seed: u64,
    id_prefix: &str,
) -> Result<Vec<Utterance>> {
    config.validate()?;
    let m = config.num_domains();
    if n_utterances < m {
        return Err(config_err!(
            "n_utterances = {n_utterances} is smaller than the number of domains ({m})"
        ));
    }
    let zipf: BTreeMap<&str, (ZipfTable, &[String])> = config
        .slots
        .iter()
        .map(|(k, v)| (k.as_str(), (ZipfTable::new(v.len(), config.zipf_exponent), v.as_slice())))
        .collect();
    let mut cumulative = Vec::with_capacity(m);
    let mut acc = 0.0;
    for d in &config.domains {
        acc += d.traffic_share;
        cumulative.push(acc);
    }

    let mut rng = seeding::rng(seed, &format!("corpus/{id_prefix}"));
    let mut out = Vec::with_capacity(n_utterances);
    for i in 0..n_utterances {
        let u = rng.random::<f64>() * acc;
        let domain = cumulative.partition_point(|&c| c <= u).min(m - 1);
        let spec = &config.domains[domain];
        let intent_idx = rng.random_range(0..spec.intents.len());
        let intent = &spec.intents[intent_idx];
        let use_shared =
            !intent.shared_templates.is_empty() && rng.random::<f64>() < spec.overlap_coefficient;
        let pool = if use_shared {
            &intent.shared_templates
        } else {
            &intent.templates
        };
        let template = &pool[rng.random_range(0..pool.len())];
        let mut text = String::new();
        for piece in template.split_whitespace() {
            let word = match piece.strip_prefix('{').and_then(|p| p.strip_suffix('}')) {
                Some(slot) => {
                    let (table, values) = &zipf[slot];
                    values[table.sample(&mut rng)].as_str()
                }
                None => piece,
            };
            if !text.is_empty() {
                text.push(' ');
            }
            text.push_str(&word.to_lowercase());
        }
        out.push(Utterance {
            id: format!("{id_prefix}{i:07}"),
            text,
            true_domain: domain,
            true_intent: intent_idx,
        });
    }
    Ok(out)
}

/// Disjoint partitions of simulated traffic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficSlice {
    /// Sampled for human annotation; source of the FR training dataset.
    Annotation,
    /// Protocol-matched evaluation set.
    Test,
    /// Unlabelled traffic mined for FR candidates.
    Pool,
    /// Used only to count FRs before and after retraining.
    Heldout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceFractions {
    pub annotation: f64,
    pub test: f64,
    pub pool: f64,
    pub heldout: f64,
}

impl Default for SliceFractions {
    fn default() -> Self {
        Self {
            annotation: 0.35,
            test: 0.15,
            pool: 0.35,
            heldout: 0.15,
        }
    }
}

impl SliceFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.annotation, self.test, self.pool, self.heldout];
        if parts.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(config_err!("slice fractions must lie in [0, 1]"));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(config_err!("slice fractions sum to {total}, expected 1"));
        }
        Ok(())
    }

    /// Stable assignment of an utterance id to a slice.
    pub fn slice_of(&self, id: &str, seed: u64) -> TrafficSlice {
        let u = seeding::unit_interval(seed, &format!("slice/{id}"));
        if u < self.annotation {
            TrafficSlice::Annotation
        } else if u < self.annotation + self.test {
            TrafficSlice::Test
        } else if u < self.annotation + self.test + self.pool {
            TrafficSlice::Pool
        } else {
            TrafficSlice::Heldout
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_catalog_is_valid() {
        let cfg = standard_catalog();
        cfg.validate().unwrap();
        assert_eq!(cfg.num_domains(), 8);
        assert_eq!(cfg.domains[cfg.target_domain].traffic_share, 0.004);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = standard_catalog();
        let a = generate_corpus(&cfg, 10_000, 7, "c").unwrap();
        let b = generate_corpus(&cfg, 10_000, 7, "c").unwrap();
        let to_jsonl = |v: &[Utterance]| {
            v.iter()
                .map(|u| serde_json::to_string(u).unwrap())
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(to_jsonl(&a), to_jsonl(&b));
        let c = generate_corpus(&cfg, 10_000, 8, "c").unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn target_count_within_binomial_band() {
        // Binomial(10000, 0.004): mean 40, sd = sqrt(10000 * 0.004 * 0.996) = 6.312
        let cfg = standard_catalog();
        let corpus = generate_corpus(&cfg, 10_000, 7, "c").unwrap();
        let count = corpus.iter().filter(|u| u.true_domain == 7).count() as f64;
        let sd = (10_000.0f64 * 0.004 * 0.996).sqrt();
        assert!((count - 40.0).abs() <= 3.0 * sd, "target count {count}");
        assert!(corpus.iter().all(|u| !u.text.is_empty() && u.true_domain < 8));
    }

    #[test]
    fn degenerate_sizes_are_configuration_errors() {
        let cfg = standard_catalog();
        assert!(generate_corpus(&cfg, 0, 1, "c").unwrap_err().is_config());
        assert!(generate_corpus(&cfg, 7, 1, "c").unwrap_err().is_config());
        assert_eq!(generate_corpus(&cfg, 8, 1, "c").unwrap().len(), 8);
    }

    #[test]
    fn shares_must_sum_to_one() {
        let mut cfg = standard_catalog();
        cfg.domains[0].traffic_share += 0.01;
        assert!(generate_corpus(&cfg, 100, 1, "c").unwrap_err().is_config());
    }

    #[test]
    fn invariants_are_checked() {
        let mut cfg = standard_catalog();
        cfg.domains[7].traffic_share = 0.006;
        cfg.domains[0].traffic_share -= 0.002;
        assert!(cfg.validate().is_err());

        let mut cfg = standard_catalog();
        for d in &mut cfg.domains {
            if d.domain_id != 7 {
                d.overlap_coefficient = 0.0;
            }
        }
        assert!(cfg.validate().is_err());

        let mut cfg = standard_catalog();
        cfg.domains[1].intents[0].templates.push("play {nothing}".into());
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn slices_are_stable_and_roughly_proportional() {
        let f = SliceFractions::default();
        f.validate().unwrap();
        let ids: Vec<String> = (0..20_000).map(|i| format!("t{i:07}")).collect();
        let pool = ids
            .iter()
            .filter(|id| f.slice_of(id, 3) == TrafficSlice::Pool)
            .count() as f64;
        assert!((pool / 20_000.0 - 0.35).abs() < 0.02);
        assert_eq!(f.slice_of("t0000042", 3), f.slice_of("t0000042", 3));
    }

    #[test]
    fn placeholder_parsing() {
        assert_eq!(placeholders("play {song} by {artist}"), vec!["song", "artist"]);
        assert!(placeholders("stop").is_empty());
    }
}
