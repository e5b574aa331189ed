//! The run configuration: one strict JSON document covering every stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use frforge_core::corpus::{DatasetConfig, SliceFractions};
use frforge_core::detector::{Head, TrainConfig};
use frforge_core::models::{
    BiLstmConfig, FusionConfig, HypothesisEmbedding, ModelKind, ModelSpec, PretrainConfig, TransformerConfig,
    TRUNK_ACTIVATION,
};
use frforge_core::nlu_sim::{ProductionConfig, RetrainConfig};
use frforge_core::numeric::ScheduleConfig;
use frforge_core::{seeding, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const SEED_ENV: &str = "FRFORGE_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Every stochastic step derives its stream from this seed.
    pub seed: u64,
    pub corpus: CorpusSection,
    pub pipeline: PipelineSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub detect: DetectSection,
    pub eval: EvalSection,
    pub feedback: FeedbackSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 1,
            corpus: CorpusSection::default(),
            pipeline: PipelineSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            detect: DetectSection::default(),
            eval: EvalSection::default(),
            feedback: FeedbackSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    /// Domain catalog JSON; the built-in 8-domain catalog when absent.
    pub catalog: Option<PathBuf>,
    /// Corpus the production models and pre-training learn from.
    pub utterances: usize,
    /// Simulated live traffic routed through production.
    pub traffic_utterances: usize,
    pub slices: SliceFractions,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            catalog: None,
            utterances: 10_000,
            traffic_utterances: 300_000,
            slices: SliceFractions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub positive_weight: f64,
    pub n_best: usize,
    /// FR rate the target bias is calibrated to, measured over the corpus.
    pub fr_rate: f64,
    pub noise_sigma: f64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let p = ProductionConfig::default();
        Self {
            epochs: p.epochs,
            learning_rate: p.learning_rate,
            positive_weight: p.positive_weight,
            n_best: 5,
            fr_rate: 0.2,
            noise_sigma: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformerSection {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_multiple: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl Default for TransformerSection {
    fn default() -> Self {
        let t = TransformerConfig::desk(0);
        Self {
            hidden: t.hidden,
            layers: t.layers,
            heads: t.heads,
            ff_multiple: t.ff_multiple,
            max_len: t.max_len,
            dropout: t.dropout,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BiLstmSection {
    pub embed_dim: usize,
    pub hidden: usize,
}

impl Default for BiLstmSection {
    fn default() -> Self {
        let b = BiLstmConfig::desk(0);
        Self {
            embed_dim: b.embed_dim,
            hidden: b.hidden,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NBestSection {
    pub n: usize,
    pub d: usize,
    pub hidden: usize,
    pub embedding: HypothesisEmbedding,
}

impl Default for NBestSection {
    fn default() -> Self {
        let f = FusionConfig::desk(0);
        Self {
            n: f.n,
            d: f.d,
            hidden: f.hidden,
            embedding: f.embedding,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainSection {
    pub enabled: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub mask_prob: f64,
}

impl Default for PretrainSection {
    fn default() -> Self {
        let p = PretrainConfig::default();
        Self {
            enabled: p.enabled,
            epochs: p.epochs,
            batch_size: p.batch_size,
            learning_rate: p.learning_rate,
            mask_prob: p.mask_prob,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kinds: Vec<ModelKind>,
    pub transformer: TransformerSection,
    pub bilstm: BiLstmSection,
    pub nbest: NBestSection,
    pub pretrain: PretrainSection,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kinds: ModelKind::ALL.to_vec(),
            transformer: TransformerSection::default(),
            bilstm: BiLstmSection::default(),
            nbest: NBestSection::default(),
            pretrain: PretrainSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// Models trained per kind; the ensemble averages these.
    pub seeds: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    /// Per-kind replacements for `base_lr`.
    pub base_lr_by_kind: BTreeMap<ModelKind, f64>,
    pub warmup_fraction: f64,
    pub linear_decay: bool,
    pub w_domain: f64,
    pub w_fr: f64,
    /// Non-FR examples per FR example.
    pub ratio: usize,
    pub holdout: f64,
    pub accepted_mix: f64,
    pub fr_cap: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = DatasetConfig::default();
        Self {
            seeds: 5,
            epochs: 3,
            batch_size: 32,
            base_lr: 1e-3,
            base_lr_by_kind: BTreeMap::from([(ModelKind::Bilstm, 3e-3)]),
            warmup_fraction: 0.1,
            linear_decay: false,
            w_domain: 1.0,
            w_fr: 1.0,
            ratio: d.ratio,
            holdout: d.holdout,
            accepted_mix: d.accepted_mix,
            fr_cap: d.fr_cap,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectSection {
    pub threshold: f64,
    /// Kind whose seeds are averaged to mine the pool.
    pub ensemble_kind: ModelKind,
    /// Head used for candidates; the FR head for multitask models otherwise the domain head.
    pub head: Option<Head>,
}

impl Default for DetectSection {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            ensemble_kind: ModelKind::TransformerNbestMultitask,
            head: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub threshold: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Annotator {
    /// Ground truth, optionally corrupted at `error_rate`.
    Oracle,
    /// Verdicts already collected in `annotations.jsonl` by the triage service.
    Human,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeedbackSection {
    pub annotator: Annotator,
    pub error_rate: f64,
    /// Annotation budget: only the top candidates are reviewed.
    pub top_k: Option<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub from_scratch: bool,
}

impl Default for FeedbackSection {
    fn default() -> Self {
        let r = RetrainConfig::default();
        Self {
            annotator: Annotator::Oracle,
            error_rate: 0.0,
            top_k: None,
            epochs: r.epochs,
            learning_rate: r.learning_rate,
            from_scratch: r.from_scratch,
        }
    }
}

impl RunConfig {
    /// Reads a config file; `FRFORGE_SEED` overrides its seed.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("invalid config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.seed = seed
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}=`{seed}` is not an unsigned integer")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.corpus.slices.validate()?;
        if self.corpus.utterances == 0 || self.corpus.traffic_utterances == 0 {
            return Err(Error::Config("corpus and traffic sizes must be positive".into()));
        }
        if self.model.kinds.is_empty() {
            return Err(Error::Config("model.kinds is empty".into()));
        }
        if self.train.seeds == 0 {
            return Err(Error::Config("train.seeds must be at least 1".into()));
        }
        for t in [self.detect.threshold, self.eval.threshold] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("threshold {t} outside [0, 1]")));
            }
        }
        if !(0.0..0.5).contains(&self.feedback.error_rate) {
            return Err(Error::Config("feedback.error_rate must lie in [0, 0.5)".into()));
        }
        self.pretrain_config().validate()?;
        ModelKind::ALL.iter().try_for_each(|&k| self.schedule(k).validate())
    }

    pub fn production(&self) -> ProductionConfig {
        ProductionConfig {
            epochs: self.pipeline.epochs,
            learning_rate: self.pipeline.learning_rate,
            positive_weight: self.pipeline.positive_weight,
            seed: seeding::derive(self.seed, "production"),
        }
    }

    pub fn dataset(&self) -> DatasetConfig {
        DatasetConfig {
            ratio: self.train.ratio,
            holdout: self.train.holdout,
            accepted_mix: self.train.accepted_mix,
            fr_cap: self.train.fr_cap,
            seed: seeding::derive(self.seed, "dataset"),
        }
    }

    pub fn eval_dataset(&self) -> DatasetConfig {
        DatasetConfig {
            fr_cap: None,
            seed: seeding::derive(self.seed, "evalset"),
            ..self.dataset()
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        let p = &self.model.pretrain;
        PretrainConfig {
            enabled: p.enabled,
            epochs: p.epochs,
            batch_size: p.batch_size,
            learning_rate: p.learning_rate,
            mask_prob: p.mask_prob,
            seed: seeding::derive(self.seed, "pretrain"),
        }
    }

    pub fn transformer(&self, vocab_size: usize) -> TransformerConfig {
        let t = &self.model.transformer;
        TransformerConfig {
            vocab_size,
            hidden: t.hidden,
            layers: t.layers,
            heads: t.heads,
            ff_multiple: t.ff_multiple,
            max_len: t.max_len,
            dropout: t.dropout,
        }
    }

    pub fn model_spec(&self, kind: ModelKind, vocab_size: usize, num_domains: usize) -> ModelSpec {
        let n = &self.model.nbest;
        ModelSpec {
            kind,
            bilstm: BiLstmConfig {
                vocab_size,
                embed_dim: self.model.bilstm.embed_dim,
                hidden: self.model.bilstm.hidden,
            },
            transformer: self.transformer(vocab_size),
            fusion: FusionConfig {
                n: n.n,
                d: n.d,
                hidden: n.hidden,
                num_domains,
                embedding: n.embedding,
            },
            trunk_activation: TRUNK_ACTIVATION.into(),
        }
    }

    pub fn schedule(&self, kind: ModelKind) -> ScheduleConfig {
        ScheduleConfig {
            base_lr: self.train.base_lr_by_kind.get(&kind).copied().unwrap_or(self.train.base_lr),
            warmup_fraction: self.train.warmup_fraction,
            total_steps: 0,
            linear_decay: self.train.linear_decay,
        }
    }

    /// Seed of the `index`-th model of each kind.
    pub fn model_seed(&self, index: usize) -> u64 {
        seeding::derive_n(self.seed, "detector", index as u64)
    }

    pub fn train_config(&self, kind: ModelKind, index: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            schedule: self.schedule(kind),
            w_domain: self.train.w_domain,
            w_fr: self.train.w_fr,
            seed: self.model_seed(index),
            model_kind: kind,
        }
    }

    pub fn retrain(&self, learning_rate: f64) -> RetrainConfig {
        RetrainConfig {
            epochs: self.feedback.epochs,
            learning_rate,
            from_scratch: self.feedback.from_scratch,
            seed: seeding::derive(self.seed, "feedback/retrain"),
        }
    }

    pub fn candidate_head(&self) -> Head {
        self.detect.head.unwrap_or(Head::default_for(self.detect.ensemble_kind))
    }
}
