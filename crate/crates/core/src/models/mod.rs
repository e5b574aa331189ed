//! The model zoo: bi-LSTM baseline, compact transformer, N-best fusion and
//! the single-task / multitask binary heads.

pub mod bilstm;
pub mod nbest;
pub mod pretrain;
pub mod transformer;

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bilstm::BiLstmConfig;
pub use nbest::{fused_input_dim, FusionConfig, HypothesisEmbedding, Hyps};
pub use pretrain::{pretrain_encoder, PretrainConfig, PretrainedEncoder};
pub use transformer::TransformerConfig;

use crate::corpus::Vocab;
use crate::error::{config_err, contract, Result};
use crate::jsonl;
use crate::nlu_sim::NBestList;
use crate::numeric::{
    checkpoint_digest, gradient_check, load_checkpoint, save_checkpoint, Bound, GradCheckReport, ParamId,
    ParamStore, Scalar, Tape, Tensor, Var,
};
use crate::seeding;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Bilstm,
    Transformer,
    TransformerNbestSingle,
    TransformerNbestMultitask,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Bilstm,
        ModelKind::Transformer,
        ModelKind::TransformerNbestSingle,
        ModelKind::TransformerNbestMultitask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Bilstm => "bilstm",
            ModelKind::Transformer => "transformer",
            ModelKind::TransformerNbestSingle => "transformer_nbest_single",
            ModelKind::TransformerNbestMultitask => "transformer_nbest_multitask",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Bilstm => "bi-LSTM",
            ModelKind::Transformer => "Transformer",
            ModelKind::TransformerNbestSingle => "Transformer + N-best (single task)",
            ModelKind::TransformerNbestMultitask => "Transformer + N-best (multitask)",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| config_err!("unknown model kind `{s}`"))
    }

    pub fn uses_transformer(self) -> bool {
        self != ModelKind::Bilstm
    }

    pub fn uses_nbest(self) -> bool {
        matches!(self, ModelKind::TransformerNbestSingle | ModelKind::TransformerNbestMultitask)
    }

    pub fn is_multitask(self) -> bool {
        self == ModelKind::TransformerNbestMultitask
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub bilstm: BiLstmConfig,
    pub transformer: TransformerConfig,
    pub fusion: FusionConfig,
    /// Recorded for reproducibility; only the tanh-form GELU is implemented.
    pub trunk_activation: String,
}

pub const TRUNK_ACTIVATION: &str = "gelu_tanh";

impl ModelSpec {
    pub fn desk(kind: ModelKind, vocab_size: usize, num_domains: usize) -> Self {
        Self {
            kind,
            bilstm: BiLstmConfig::desk(vocab_size),
            transformer: TransformerConfig::desk(vocab_size),
            fusion: FusionConfig::desk(num_domains),
            trunk_activation: TRUNK_ACTIVATION.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trunk_activation != TRUNK_ACTIVATION {
            return Err(config_err!("unsupported trunk activation `{}`", self.trunk_activation));
        }
        if self.kind.uses_transformer() {
            self.transformer.validate()?;
            self.fusion.validate()
        } else {
            self.bilstm.validate()
        }
    }

    pub fn vocab_size(&self) -> usize {
        if self.kind.uses_transformer() {
            self.transformer.vocab_size
        } else {
            self.bilstm.vocab_size
        }
    }

    pub fn encoder_dim(&self) -> usize {
        if self.kind.uses_transformer() {
            self.transformer.hidden
        } else {
            self.bilstm.output_dim()
        }
    }

    /// Input width of the fusion layer (transformer kinds).
    pub fn fusion_input_dim(&self) -> usize {
        if self.kind.uses_nbest() {
            fused_input_dim(self.encoder_dim(), self.fusion.n, self.fusion.d)
        } else {
            self.encoder_dim()
        }
    }

    /// Width of the vector both heads read.
    pub fn trunk_dim(&self) -> usize {
        if self.kind.uses_transformer() {
            self.fusion.hidden
        } else {
            self.encoder_dim()
        }
    }

    pub fn init_params(&self, seed: u64) -> Result<ParamStore<f32>> {
        self.validate()?;
        let mut store = ParamStore::new(seed);
        let mut rng = seeding::rng(seed, "model/init");
        if self.kind.uses_transformer() {
            transformer::init_params(&mut store, &self.transformer, &mut rng)?;
            if self.kind.uses_nbest() {
                nbest::init_params(&mut store, &self.fusion, &mut rng)?;
            }
            store.xavier("fuse.w", self.fusion_input_dim(), self.fusion.hidden, &mut rng)?;
            store.zeros("fuse.b", 1, self.fusion.hidden)?;
        } else {
            bilstm::init_params(&mut store, &self.bilstm, &mut rng)?;
        }
        store.xavier("head.domain.w", self.trunk_dim(), 1, &mut rng)?;
        store.zeros("head.domain.b", 1, 1)?;
        if self.kind.is_multitask() {
            store.xavier("head.fr.w", self.trunk_dim(), 1, &mut rng)?;
            store.zeros("head.fr.b", 1, 1)?;
        }
        Ok(store)
    }
}

/// Whether dropout is active, and its random source.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    pub fn dropout<T: Scalar>(&mut self, tape: &mut Tape<T>, x: Var, rate: f64) -> Var {
        match self {
            Mode::Train(rng) if rate > 0.0 => {
                let (r, c) = tape.value(x).shape();
                let keep = T::of(1.0 / (1.0 - rate));
                let mask = (0..r * c)
                    .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
                    .collect();
                tape.mul_const(x, Tensor::from_vec(r, c, mask))
            }
            _ => x,
        }
    }
}

#[derive(Clone, Debug)]
enum EncoderLayout {
    Lstm(bilstm::BiLstmLayout),
    Transformer(transformer::TransformerLayout),
}

/// Parameter ids of a model, resolved once by name.
#[derive(Clone, Debug)]
pub struct Layout {
    encoder: EncoderLayout,
    nbest: Option<nbest::NBestLayout>,
    fuse: Option<(ParamId, ParamId)>,
    domain_head: (ParamId, ParamId),
    fr_head: Option<(ParamId, ParamId)>,
}

impl Layout {
    pub fn resolve<S: Scalar>(store: &ParamStore<S>, spec: &ModelSpec) -> Result<Self> {
        let kind = spec.kind;
        let encoder = if kind.uses_transformer() {
            EncoderLayout::Transformer(transformer::TransformerLayout::resolve(store, &spec.transformer)?)
        } else {
            EncoderLayout::Lstm(bilstm::BiLstmLayout::resolve(store)?)
        };
        let head = |name: &str| -> Result<(ParamId, ParamId)> {
            Ok((store.id(&format!("head.{name}.w"))?, store.id(&format!("head.{name}.b"))?))
        };
        Ok(Self {
            encoder,
            nbest: if kind.uses_nbest() { Some(nbest::NBestLayout::resolve(store)?) } else { None },
            fuse: if kind.uses_transformer() {
                Some((store.id("fuse.w")?, store.id("fuse.b")?))
            } else {
                None
            },
            domain_head: head("domain")?,
            fr_head: if kind.is_multitask() { Some(head("fr")?) } else { None },
        })
    }
}

/// One model input: encoded tokens and the reranker's hypotheses.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    pub tokens: Vec<usize>,
    pub nbest: Hyps,
}

impl ModelInput {
    pub fn new(vocab: &Vocab, text: &str, nbest: &NBestList) -> Self {
        Self {
            tokens: vocab.encode(text),
            nbest: nbest::hyps_of(nbest),
        }
    }
}

/// Head outputs for a batch; every var is `B x 1`.
pub struct Heads {
    pub trunk: Var,
    pub domain_logit: Var,
    pub p_domain: Var,
    pub fr_logit: Option<Var>,
    p_fr: Option<Var>,
}

impl Heads {
    pub fn p_fr(&self) -> Result<Var> {
        self.p_fr
            .ok_or_else(|| contract!("the FR probability exists only for multitask models"))
    }

    pub fn has_fr(&self) -> bool {
        self.p_fr.is_some()
    }
}

/// Encoder output (`B x encoder_dim`) for a batch of token sequences.
pub fn encode_batch<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &Bound,
    layout: &Layout,
    spec: &ModelSpec,
    tokens: &[&[usize]],
    mode: &mut Mode<'_>,
) -> Result<Var> {
    match &layout.encoder {
        EncoderLayout::Lstm(l) => bilstm::encode(tape, bound, l, &spec.bilstm, tokens),
        EncoderLayout::Transformer(l) => {
            Ok(transformer::encode(tape, bound, l, &spec.transformer, tokens, mode, false)?.cls)
        }
    }
}

/// Everything after the encoder: N-best embedding, fusion and heads.
pub fn heads_from_encoding<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &Bound,
    layout: &Layout,
    spec: &ModelSpec,
    encoding: Var,
    nbests: &[&Hyps],
    mode: &mut Mode<'_>,
) -> Result<Heads> {
    let (rows, width) = tape.value(encoding).shape();
    if width != spec.encoder_dim() || rows != nbests.len() {
        return Err(contract!(
            "encoding is {rows}x{width}, expected {}x{}",
            nbests.len(),
            spec.encoder_dim()
        ));
    }
    let trunk = match layout.fuse {
        Some((w, b)) => {
            let nb = match &layout.nbest {
                Some(l) => Some(nbest::embed(tape, bound, l, &spec.fusion, nbests)?),
                None => None,
            };
            let t = nbest::fuse(tape, encoding, nb, bound[w], bound[b])?;
            mode.dropout(tape, t, spec.transformer.dropout)
        }
        None => encoding,
    };
    let (w, b) = layout.domain_head;
    let domain_logit = tape.linear(trunk, bound[w], bound[b]);
    let p_domain = tape.sigmoid(domain_logit);
    let (fr_logit, p_fr) = match layout.fr_head {
        Some((w, b)) => {
            let z = tape.linear(trunk, bound[w], bound[b]);
            (Some(z), Some(tape.sigmoid(z)))
        }
        None => (None, None),
    };
    Ok(Heads {
        trunk,
        domain_logit,
        p_domain,
        fr_logit,
        p_fr,
    })
}

pub fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &Bound,
    layout: &Layout,
    spec: &ModelSpec,
    inputs: &[&ModelInput],
    mode: &mut Mode<'_>,
) -> Result<Heads> {
    let tokens: Vec<&[usize]> = inputs.iter().map(|i| i.tokens.as_slice()).collect();
    let nbests: Vec<&Hyps> = inputs.iter().map(|i| &i.nbest).collect();
    let enc = encode_batch(tape, bound, layout, spec, &tokens, mode)?;
    heads_from_encoding(tape, bound, layout, spec, enc, &nbests, mode)
}

/// Mean over the batch of `w_domain·BCE(p_domain) + w_fr·BCE(p_fr)`;
/// the FR term is present only for multitask heads.
pub fn batch_loss<T: Scalar>(
    tape: &mut Tape<T>,
    heads: &Heads,
    labels: &[(u8, u8)],
    w_domain: f64,
    w_fr: f64,
) -> Result<Var> {
    let b = tape.value(heads.p_domain).rows();
    if labels.len() != b {
        return Err(contract!("{} labels for a batch of {b}", labels.len()));
    }
    let mean_bce = |tape: &mut Tape<T>, p: Var, target: &dyn Fn(usize) -> u8, w: f64| {
        let terms: Vec<Var> = (0..b)
            .map(|r| {
                let pr = tape.slice_rows(p, r, 1);
                tape.bce(pr, f64::from(target(r)))
            })
            .collect();
        let stacked = if terms.len() == 1 { terms[0] } else { tape.concat_rows(&terms) };
        let total = tape.sum(stacked);
        tape.scale(total, w / b as f64)
    };
    let mut loss = mean_bce(tape, heads.p_domain, &|r| labels[r].0, w_domain);
    if let Some(p_fr) = heads.p_fr {
        if w_fr > 0.0 {
            let fr = mean_bce(tape, p_fr, &|r| labels[r].1, w_fr);
            loss = tape.add(loss, fr);
        }
    }
    Ok(loss)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub p_domain: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_fr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub spec: ModelSpec,
    pub vocab: Vocab,
    pub params: ParamStore<f32>,
    /// Whether the encoder was initialised from masked-token pre-training.
    pub pretrained: bool,
    /// Optimizer steps taken.
    pub step: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelManifest {
    schema_version: u32,
    spec: ModelSpec,
    vocab_digest: String,
    pretrained: bool,
    checkpoint_digest: String,
    vocab: Vocab,
}

pub const MODEL_FILE: &str = "model.json";
const CHECKPOINT_DIR: &str = "checkpoint";

impl ModelBundle {
    pub fn init(spec: ModelSpec, vocab: Vocab, seed: u64) -> Result<Self> {
        if spec.vocab_size() != vocab.len() {
            return Err(config_err!(
                "model vocabulary size {} differs from vocabulary of {} words",
                spec.vocab_size(),
                vocab.len()
            ));
        }
        let params = spec.init_params(seed)?;
        Ok(Self {
            spec,
            vocab,
            params,
            pretrained: false,
            step: 0,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    /// Copies pre-trained encoder weights into this bundle.
    pub fn load_encoder(&mut self, encoder: &PretrainedEncoder) -> Result<()> {
        if !self.kind().uses_transformer() {
            return Err(contract!("only transformer kinds take a pre-trained encoder"));
        }
        if encoder.config != self.spec.transformer {
            return Err(contract!("pre-trained encoder config differs from the model's"));
        }
        let copied = self.params.copy_matching(&encoder.params)?;
        log::debug!("copied {copied} pre-trained tensors");
        self.pretrained = true;
        Ok(())
    }

    pub fn layout(&self) -> Result<Layout> {
        Layout::resolve(&self.params, &self.spec)
    }

    pub fn input(&self, text: &str, nbest: &NBestList) -> ModelInput {
        ModelInput::new(&self.vocab, text, nbest)
    }

    /// Inference in evaluation mode. Encoder outputs are computed once per
    /// distinct token sequence.
    pub fn predict(&self, inputs: &[ModelInput], batch_size: usize) -> Result<Vec<Prediction>> {
        if batch_size == 0 {
            return Err(config_err!("batch size must be positive"));
        }
        let layout = self.layout()?;
        let mut tape = Tape::<f32>::new();
        let bound = tape.bind(&self.params);
        let base = tape.len();

        let mut index: HashMap<&[usize], usize> = HashMap::new();
        let mut unique: Vec<&[usize]> = Vec::new();
        let slot: Vec<usize> = inputs
            .iter()
            .map(|i| {
                *index.entry(i.tokens.as_slice()).or_insert_with(|| {
                    unique.push(i.tokens.as_slice());
                    unique.len() - 1
                })
            })
            .collect();

        let width = self.spec.encoder_dim();
        let mut cache: Vec<f32> = Vec::with_capacity(unique.len() * width);
        for chunk in unique.chunks(batch_size) {
            tape.truncate(base);
            let enc = encode_batch(&mut tape, &bound, &layout, &self.spec, chunk, &mut Mode::Eval)?;
            cache.extend_from_slice(tape.value(enc).data());
        }

        let mut out = Vec::with_capacity(inputs.len());
        for (chunk, slots) in inputs.chunks(batch_size).zip(slot.chunks(batch_size)) {
            tape.truncate(base);
            let mut data = Vec::with_capacity(chunk.len() * width);
            for &s in slots {
                data.extend_from_slice(&cache[s * width..(s + 1) * width]);
            }
            let enc = tape.leaf(Tensor::from_vec(chunk.len(), width, data));
            let nbests: Vec<&Hyps> = chunk.iter().map(|i| &i.nbest).collect();
            let heads = heads_from_encoding(&mut tape, &bound, &layout, &self.spec, enc, &nbests, &mut Mode::Eval)?;
            tape.check_finite()?;
            let pd = tape.value(heads.p_domain).data().to_vec();
            let pf = heads.p_fr.map(|v| tape.value(v).data().to_vec());
            for r in 0..chunk.len() {
                out.push(Prediction {
                    p_domain: f64::from(pd[r]),
                    p_fr: pf.as_ref().map(|p| f64::from(p[r])),
                });
            }
        }
        Ok(out)
    }

    pub fn digest(&self) -> String {
        checkpoint_digest(&self.params, self.step)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_checkpoint(&dir.join(CHECKPOINT_DIR), &self.params, self.step)?;
        jsonl::write_json(
            &dir.join(MODEL_FILE),
            &ModelManifest {
                schema_version: 1,
                spec: self.spec.clone(),
                vocab_digest: self.vocab.digest(),
                pretrained: self.pretrained,
                checkpoint_digest: self.digest(),
                vocab: self.vocab.clone(),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: ModelManifest = jsonl::read_json(&dir.join(MODEL_FILE))?;
        if manifest.schema_version != 1 {
            return Err(contract!("unsupported model schema {}", manifest.schema_version));
        }
        if manifest.vocab.digest() != manifest.vocab_digest {
            return Err(contract!("model vocabulary does not match its recorded digest"));
        }
        let (params, step) = load_checkpoint(&dir.join(CHECKPOINT_DIR))?;
        let bundle = Self {
            spec: manifest.spec,
            vocab: manifest.vocab,
            params,
            pretrained: manifest.pretrained,
            step,
        };
        if bundle.digest() != manifest.checkpoint_digest {
            return Err(contract!("checkpoint digest mismatch in {}", dir.display()));
        }
        bundle.layout()?;
        Ok(bundle)
    }
}

/// Central-difference gradient check of the full training loss in double
/// precision (evaluation mode, fixed batch).
pub fn check_model_gradients(
    spec: &ModelSpec,
    params: &ParamStore<f32>,
    inputs: &[ModelInput],
    labels: &[(u8, u8)],
    h: f64,
    floor: f64,
) -> Result<GradCheckReport> {
    let layout = Layout::resolve(params, spec)?;
    let refs: Vec<&ModelInput> = inputs.iter().collect();
    gradient_check(params, h, floor, |tape, bound| {
        let heads = forward(tape, bound, &layout, spec, &refs, &mut Mode::Eval)?;
        batch_loss(tape, &heads, labels, 1.0, 1.0)
    })
}
