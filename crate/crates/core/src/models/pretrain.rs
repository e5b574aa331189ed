//! Masked-token pre-training of the transformer encoder on the synthetic
//! corpus, used to warm-start fine-tuning.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::transformer::{self, prepare_tokens, TransformerConfig, TransformerLayout};
use super::Mode;
use crate::corpus::{Vocab, MASK_ID};
use crate::error::{config_err, Result};
use crate::numeric::{adam_step, lr_at_step, AdamConfig, AdamState, ParamStore, ScheduleConfig, Tape};
use crate::seeding;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub enabled: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub mask_prob: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            epochs: 3,
            batch_size: 64,
            learning_rate: 1e-3,
            mask_prob: 0.15,
            seed: 1,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(config_err!("pre-training epochs and batch size must be positive"));
        }
        if !(self.mask_prob > 0.0 && self.mask_prob < 1.0) {
            return Err(config_err!("mask_prob must lie in (0, 1)"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(config_err!("pre-training learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PretrainedEncoder {
    pub config: TransformerConfig,
    /// Encoder tensors plus the token-prediction output layer.
    pub params: ParamStore<f32>,
    pub epoch_losses: Vec<f64>,
}

/// Masks positions (never `[CLS]`) with the usual 80/10/10 replacement
/// split; at least one position per sequence is always masked.
fn mask_sequence(seq: &[usize], vocab_size: usize, p: f64, rng: &mut impl Rng) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut out = seq.to_vec();
    let mut targets = Vec::new();
    for (i, &tok) in seq.iter().enumerate().skip(1) {
        if rng.random::<f64>() < p {
            targets.push((i, tok));
        }
    }
    if targets.is_empty() {
        let i = rng.random_range(1..seq.len());
        targets.push((i, seq[i]));
    }
    for &(i, _) in &targets {
        let r = rng.random::<f64>();
        if r < 0.8 {
            out[i] = MASK_ID;
        } else if r < 0.9 && vocab_size > 4 {
            out[i] = rng.random_range(4..vocab_size);
        }
    }
    (out, targets)
}

pub fn pretrain_encoder(
    config: &TransformerConfig,
    vocab: &Vocab,
    texts: &[&str],
    pc: &PretrainConfig,
) -> Result<PretrainedEncoder> {
    pc.validate()?;
    if vocab.len() != config.vocab_size {
        return Err(config_err!("encoder vocabulary size differs from the vocabulary"));
    }
    let sequences: Vec<Vec<usize>> = texts
        .iter()
        .filter(|t| !t.trim().is_empty())
        .map(|t| prepare_tokens(&vocab.encode(t), config))
        .collect::<Result<_>>()?;
    if sequences.is_empty() {
        return Err(config_err!("no text to pre-train on"));
    }

    let mut store = ParamStore::<f32>::new(pc.seed);
    let mut rng = seeding::rng(pc.seed, "pretrain/init");
    transformer::init_params(&mut store, config, &mut rng)?;
    let out_w = store.xavier("mlm.out.w", config.hidden, config.vocab_size, &mut rng)?;
    let out_b = store.zeros("mlm.out.b", 1, config.vocab_size)?;
    let layout = TransformerLayout::resolve(&store, config)?;

    let batches_per_epoch = sequences.len().div_ceil(pc.batch_size);
    let schedule = ScheduleConfig {
        base_lr: pc.learning_rate,
        total_steps: pc.epochs * batches_per_epoch,
        ..ScheduleConfig::default()
    };
    let mut adam = AdamState::new(&store, AdamConfig::default());
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let mut epoch_losses = Vec::with_capacity(pc.epochs);
    let mut step = 0;
    for epoch in 0..pc.epochs {
        let mut shuffle = seeding::rng(pc.seed, &format!("pretrain/epoch{epoch}"));
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut shuffle);
        let mut mask_rng = seeding::rng(pc.seed, &format!("pretrain/mask{epoch}"));
        let mut drop_rng = seeding::rng(pc.seed, &format!("pretrain/dropout{epoch}"));
        let mut total = 0.0;
        for batch in order.chunks(pc.batch_size) {
            let mut inputs = Vec::with_capacity(batch.len());
            let mut rows = Vec::new();
            let mut targets = Vec::new();
            let mut offset = 0;
            for &i in batch {
                let (masked, t) = mask_sequence(&sequences[i], config.vocab_size, pc.mask_prob, &mut mask_rng);
                for (pos, tok) in t {
                    rows.push(offset + pos);
                    targets.push(tok);
                }
                offset += masked.len();
                // drop the [CLS] that `encode` adds back
                inputs.push(masked[1..].to_vec());
            }
            let refs: Vec<&[usize]> = inputs.iter().map(Vec::as_slice).collect();
            let mut tape = Tape::<f32>::new();
            let bound = tape.bind(&store);
            let enc = transformer::encode(&mut tape, &bound, &layout, config, &refs, &mut Mode::Train(&mut drop_rng), false)?;
            let picked = tape.gather(enc.hidden, &rows);
            let logits = tape.linear(picked, bound[out_w], bound[out_b]);
            let loss = tape.softmax_xent(logits, &targets);
            let grads = tape.backward(loss)?;
            step += 1;
            let lr = lr_at_step(step, &schedule)?;
            adam_step(&mut store, &grads.for_params(&bound), &mut adam, lr as f32)?;
            total += f64::from(tape.scalar_value(loss)) * batch.len() as f64;
        }
        let mean = total / sequences.len() as f64;
        log::info!("pre-training epoch {} loss {mean:.4}", epoch + 1);
        epoch_losses.push(mean);
    }
    Ok(PretrainedEncoder {
        config: config.clone(),
        params: store,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Utterance;

    #[test]
    fn masking_never_touches_cls_and_always_masks_something() {
        let mut rng = seeding::rng(1, "m");
        for _ in 0..200 {
            let seq = vec![2, 5, 6, 7];
            let (out, targets) = mask_sequence(&seq, 10, 0.15, &mut rng);
            assert_eq!(out[0], 2);
            assert!(!targets.is_empty());
            assert!(targets.iter().all(|&(i, t)| i >= 1 && seq[i] == t));
        }
    }

    #[test]
    fn loss_drops_on_a_repetitive_corpus() {
        let texts = ["play the song hello", "read the book emma", "what is the weather"];
        let utts: Vec<Utterance> = texts
            .iter()
            .map(|t| Utterance { id: "x".into(), text: t.to_string(), true_domain: 0, true_intent: 0 })
            .collect();
        let vocab = Vocab::build(&utts);
        let mut cfg = TransformerConfig::desk(vocab.len());
        cfg.hidden = 16;
        cfg.heads = 2;
        cfg.layers = 1;
        let many: Vec<&str> = texts.iter().cycle().take(120).copied().collect();
        let pc = PretrainConfig { epochs: 6, batch_size: 16, learning_rate: 5e-3, ..Default::default() };
        let out = pretrain_encoder(&cfg, &vocab, &many, &pc).unwrap();
        assert!(out.epoch_losses.last().unwrap() < &(0.6 * out.epoch_losses[0]), "{:?}", out.epoch_losses);
        assert!(out.params.by_name("mlm.out.w").is_some());
    }
}
