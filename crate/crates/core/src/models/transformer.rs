//! Compact post-layer-norm transformer encoder with a `[CLS]` summary
//! position.
//!
//! All sequences of a batch are packed row-wise into one `T x H` matrix so
//! the dense sublayers run once per batch; attention is computed per
//! sequence on row slices of the packed projections.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Mode;
use crate::corpus::CLS_ID;
use crate::error::{config_err, contract, Result};
use crate::numeric::{Bound, ParamId, ParamStore, Scalar, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_multiple: usize,
    /// Includes the `[CLS]` position.
    pub max_len: usize,
    pub dropout: f64,
}

impl TransformerConfig {
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            hidden: 64,
            layers: 2,
            heads: 4,
            ff_multiple: 4,
            max_len: 24,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return Err(config_err!(
                "hidden size {} must be a positive multiple of heads {}",
                self.hidden,
                self.heads
            ));
        }
        if self.layers == 0 || self.ff_multiple == 0 || self.max_len < 2 || self.vocab_size == 0 {
            return Err(config_err!("transformer layers, ff multiple, max_len and vocab must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(config_err!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn ff_dim(&self) -> usize {
        self.hidden * self.ff_multiple
    }
}

#[derive(Clone, Debug)]
struct LayerIds {
    qkv_w: ParamId,
    qkv_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
    ln1_g: ParamId,
    ln1_b: ParamId,
    ff1_w: ParamId,
    ff1_b: ParamId,
    ff2_w: ParamId,
    ff2_b: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
}

#[derive(Clone, Debug)]
pub struct TransformerLayout {
    tok: ParamId,
    pos: ParamId,
    emb_g: ParamId,
    emb_b: ParamId,
    layers: Vec<LayerIds>,
}

fn layer_name(l: usize, part: &str) -> String {
    format!("enc.l{l}.{part}")
}

pub fn init_params<S: Scalar>(store: &mut ParamStore<S>, cfg: &TransformerConfig, rng: &mut ChaCha8Rng) -> Result<()> {
    cfg.validate()?;
    let h = cfg.hidden;
    let emb_std = 1.0 / (h as f64).sqrt();
    store.normal("enc.tok_emb", cfg.vocab_size, h, emb_std, rng)?;
    store.normal("enc.pos_emb", cfg.max_len, h, emb_std, rng)?;
    store.filled("enc.emb_ln.g", 1, h, 1.0)?;
    store.zeros("enc.emb_ln.b", 1, h)?;
    for l in 0..cfg.layers {
        store.xavier(&layer_name(l, "qkv.w"), h, 3 * h, rng)?;
        store.zeros(&layer_name(l, "qkv.b"), 1, 3 * h)?;
        store.xavier(&layer_name(l, "attn_out.w"), h, h, rng)?;
        store.zeros(&layer_name(l, "attn_out.b"), 1, h)?;
        store.filled(&layer_name(l, "ln1.g"), 1, h, 1.0)?;
        store.zeros(&layer_name(l, "ln1.b"), 1, h)?;
        store.xavier(&layer_name(l, "ff1.w"), h, cfg.ff_dim(), rng)?;
        store.zeros(&layer_name(l, "ff1.b"), 1, cfg.ff_dim())?;
        store.xavier(&layer_name(l, "ff2.w"), cfg.ff_dim(), h, rng)?;
        store.zeros(&layer_name(l, "ff2.b"), 1, h)?;
        store.filled(&layer_name(l, "ln2.g"), 1, h, 1.0)?;
        store.zeros(&layer_name(l, "ln2.b"), 1, h)?;
    }
    Ok(())
}

impl TransformerLayout {
    pub fn resolve<S: Scalar>(store: &ParamStore<S>, cfg: &TransformerConfig) -> Result<Self> {
        let id = |l: usize, part: &str| store.id(&layer_name(l, part));
        let layers = (0..cfg.layers)
            .map(|l| {
                Ok(LayerIds {
                    qkv_w: id(l, "qkv.w")?,
                    qkv_b: id(l, "qkv.b")?,
                    out_w: id(l, "attn_out.w")?,
                    out_b: id(l, "attn_out.b")?,
                    ln1_g: id(l, "ln1.g")?,
                    ln1_b: id(l, "ln1.b")?,
                    ff1_w: id(l, "ff1.w")?,
                    ff1_b: id(l, "ff1.b")?,
                    ff2_w: id(l, "ff2.w")?,
                    ff2_b: id(l, "ff2.b")?,
                    ln2_g: id(l, "ln2.g")?,
                    ln2_b: id(l, "ln2.b")?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            tok: store.id("enc.tok_emb")?,
            pos: store.id("enc.pos_emb")?,
            emb_g: store.id("enc.emb_ln.g")?,
            emb_b: store.id("enc.emb_ln.b")?,
            layers,
        })
    }
}

/// Packed encoder output for one batch.
pub struct EncodedBatch {
    /// `B x H`, the final vector at each sequence's `[CLS]` position.
    pub cls: Var,
    /// `T x H`, every position of every sequence.
    pub hidden: Var,
    /// Start row and length of each sequence inside `hidden`.
    pub spans: Vec<(usize, usize)>,
    /// Post-softmax attention matrices (`L x L`), filled only when
    /// instrumentation is requested; ordered by layer, sequence, head.
    pub attention: Vec<Var>,
}

/// Prepends `[CLS]` and truncates to `max_len`, logging when it has to.
pub fn prepare_tokens(tokens: &[usize], cfg: &TransformerConfig) -> Result<Vec<usize>> {
    if tokens.is_empty() {
        return Err(contract!("cannot encode an empty token list"));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t >= cfg.vocab_size) {
        return Err(contract!("token id {bad} outside vocabulary of {}", cfg.vocab_size));
    }
    let keep = tokens.len().min(cfg.max_len - 1);
    if keep < tokens.len() {
        log::warn!("truncating a {}-token input to {} positions", tokens.len(), cfg.max_len);
    }
    let mut out = Vec::with_capacity(keep + 1);
    out.push(CLS_ID);
    out.extend_from_slice(&tokens[..keep]);
    Ok(out)
}

pub fn encode<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &Bound,
    layout: &TransformerLayout,
    cfg: &TransformerConfig,
    batch: &[&[usize]],
    mode: &mut Mode<'_>,
    instrument: bool,
) -> Result<EncodedBatch> {
    if batch.is_empty() {
        return Err(contract!("empty batch"));
    }
    let mut ids = Vec::new();
    let mut positions = Vec::new();
    let mut spans = Vec::with_capacity(batch.len());
    for tokens in batch {
        let seq = prepare_tokens(tokens, cfg)?;
        spans.push((ids.len(), seq.len()));
        positions.extend(0..seq.len());
        ids.extend(seq);
    }

    let tok = tape.gather(bound[layout.tok], &ids);
    let pos = tape.gather(bound[layout.pos], &positions);
    let x = tape.add(tok, pos);
    let x = tape.layer_norm(x, bound[layout.emb_g], bound[layout.emb_b]);
    let mut x = mode.dropout(tape, x, cfg.dropout);

    let dh = cfg.head_dim();
    let h = cfg.hidden;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut attention = Vec::new();
    for layer in &layout.layers {
        let qkv = tape.linear(x, bound[layer.qkv_w], bound[layer.qkv_b]);
        let mut contexts = Vec::with_capacity(spans.len());
        for &(start, len) in &spans {
            let rows = tape.slice_rows(qkv, start, len);
            let mut heads = Vec::with_capacity(cfg.heads);
            for head in 0..cfg.heads {
                let q = tape.slice_cols(rows, head * dh, dh);
                let k = tape.slice_cols(rows, h + head * dh, dh);
                let v = tape.slice_cols(rows, 2 * h + head * dh, dh);
                let scores = tape.matmul_nt(q, k);
                let scores = tape.scale(scores, scale);
                let probs = tape.softmax_rows(scores);
                if instrument {
                    attention.push(probs);
                }
                heads.push(tape.matmul(probs, v));
            }
            contexts.push(if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads) });
        }
        let ctx = if contexts.len() == 1 { contexts[0] } else { tape.concat_rows(&contexts) };
        let attn = tape.linear(ctx, bound[layer.out_w], bound[layer.out_b]);
        let attn = mode.dropout(tape, attn, cfg.dropout);
        let res = tape.add(x, attn);
        let x1 = tape.layer_norm(res, bound[layer.ln1_g], bound[layer.ln1_b]);

        let ff = tape.linear(x1, bound[layer.ff1_w], bound[layer.ff1_b]);
        let ff = tape.gelu(ff);
        let ff = tape.linear(ff, bound[layer.ff2_w], bound[layer.ff2_b]);
        let ff = mode.dropout(tape, ff, cfg.dropout);
        let res = tape.add(x1, ff);
        x = tape.layer_norm(res, bound[layer.ln2_g], bound[layer.ln2_b]);
    }

    let cls_rows: Vec<usize> = spans.iter().map(|&(start, _)| start).collect();
    let cls = tape.gather(x, &cls_rows);
    Ok(EncodedBatch {
        cls,
        hidden: x,
        spans,
        attention,
    })
}

/// Tensor-level view of one attention matrix, for instrumentation.
pub fn attention_row_sums<T: Scalar>(tape: &Tape<T>, probs: Var) -> Vec<f64> {
    let t: &Tensor<T> = tape.value(probs);
    (0..t.rows()).map(|r| t.row(r).iter().map(|v| v.f64()).sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    fn setup(cfg: &TransformerConfig) -> (ParamStore<f32>, TransformerLayout) {
        let mut store = ParamStore::new(5);
        init_params(&mut store, cfg, &mut seeding::rng(5, "t")).unwrap();
        let layout = TransformerLayout::resolve(&store, cfg).unwrap();
        (store, layout)
    }

    fn cls_of(store: &ParamStore<f32>, layout: &TransformerLayout, cfg: &TransformerConfig, tokens: &[usize]) -> Vec<f32> {
        let mut tape = Tape::<f32>::new();
        let bound = tape.bind(store);
        let out = encode(&mut tape, &bound, layout, cfg, &[tokens], &mut Mode::Eval, false).unwrap();
        tape.value(out.cls).data().to_vec()
    }

    #[test]
    fn output_is_hidden_sized_and_attention_normalised() {
        let cfg = TransformerConfig::desk(30);
        let (store, layout) = setup(&cfg);
        let mut tape = Tape::<f32>::new();
        let bound = tape.bind(&store);
        let batch: [&[usize]; 2] = [&[5, 6, 7], &[9]];
        let out = encode(&mut tape, &bound, &layout, &cfg, &batch, &mut Mode::Eval, true).unwrap();
        assert_eq!(tape.value(out.cls).shape(), (2, 64));
        assert_eq!(out.attention.len(), cfg.layers * 2 * cfg.heads);
        for &a in &out.attention {
            for s in attention_row_sums(&tape, a) {
                assert!((s - 1.0).abs() <= 1e-5, "row sum {s}");
            }
        }
    }

    #[test]
    fn positions_matter() {
        let cfg = TransformerConfig::desk(30);
        let (store, layout) = setup(&cfg);
        assert_ne!(cls_of(&store, &layout, &cfg, &[5, 6, 7]), cls_of(&store, &layout, &cfg, &[6, 5, 7]));
    }

    #[test]
    fn packing_does_not_leak_between_sequences() {
        let cfg = TransformerConfig::desk(30);
        let (store, layout) = setup(&cfg);
        let alone = cls_of(&store, &layout, &cfg, &[5, 6, 7]);
        let mut tape = Tape::<f32>::new();
        let bound = tape.bind(&store);
        let batch: [&[usize]; 2] = [&[9, 9, 4, 11], &[5, 6, 7]];
        let out = encode(&mut tape, &bound, &layout, &cfg, &batch, &mut Mode::Eval, false).unwrap();
        let packed = tape.value(out.cls).row(1).to_vec();
        for (a, b) in alone.iter().zip(&packed) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn long_inputs_are_truncated_and_bad_inputs_rejected() {
        let cfg = TransformerConfig::desk(30);
        let long: Vec<usize> = (0..40).map(|i| 4 + i % 20).collect();
        assert_eq!(prepare_tokens(&long, &cfg).unwrap().len(), 24);
        assert!(prepare_tokens(&[], &cfg).is_err());
        assert!(prepare_tokens(&[30], &cfg).is_err());
        let (store, layout) = setup(&cfg);
        assert_eq!(cls_of(&store, &layout, &cfg, &long).len(), 64);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TransformerConfig::desk(10);
        cfg.heads = 3;
        assert!(cfg.validate().unwrap_err().is_config());
    }
}
