//! Bidirectional LSTM baseline encoder. The output is the final forward
//! state concatenated with the final backward state.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::PAD_ID;
use crate::error::{config_err, contract, Result};
use crate::numeric::{Bound, ParamId, ParamStore, Scalar, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiLstmConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
}

impl BiLstmConfig {
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 32,
            hidden: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embed_dim == 0 || self.hidden == 0 {
            return Err(config_err!("bi-LSTM sizes must be positive"));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }
}

#[derive(Clone, Debug)]
struct Direction {
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug)]
pub struct BiLstmLayout {
    emb: ParamId,
    fwd: Direction,
    bwd: Direction,
}

pub fn init_params<S: Scalar>(store: &mut ParamStore<S>, cfg: &BiLstmConfig, rng: &mut ChaCha8Rng) -> Result<()> {
    cfg.validate()?;
    let h = cfg.hidden;
    store.normal("lstm.emb", cfg.vocab_size, cfg.embed_dim, 0.1, rng)?;
    for dir in ["fwd", "bwd"] {
        store.xavier(&format!("lstm.{dir}.wx"), cfg.embed_dim, 4 * h, rng)?;
        store.xavier(&format!("lstm.{dir}.wh"), h, 4 * h, rng)?;
        // gate order i, f, g, o; forget gate starts open
        let mut bias = vec![S::zero(); 4 * h];
        for v in &mut bias[h..2 * h] {
            *v = S::one();
        }
        store.insert(&format!("lstm.{dir}.b"), Tensor::row_vector(bias))?;
    }
    Ok(())
}

impl BiLstmLayout {
    pub fn resolve<S: Scalar>(store: &ParamStore<S>) -> Result<Self> {
        let dir = |d: &str| -> Result<Direction> {
            Ok(Direction {
                wx: store.id(&format!("lstm.{d}.wx"))?,
                wh: store.id(&format!("lstm.{d}.wh"))?,
                b: store.id(&format!("lstm.{d}.b"))?,
            })
        };
        Ok(Self {
            emb: store.id("lstm.emb")?,
            fwd: dir("fwd")?,
            bwd: dir("bwd")?,
        })
    }
}

/// Runs one direction over the batch; shorter sequences keep their state
/// once exhausted, so the returned state is each sequence's final state.
fn run<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &Bound,
    emb: ParamId,
    dir: &Direction,
    hidden: usize,
    seqs: &[Vec<usize>],
) -> Var {
    let b = seqs.len();
    let steps = seqs.iter().map(Vec::len).max().unwrap_or(0);
    let mut h = tape.leaf(Tensor::zeros(b, hidden));
    let mut c = tape.leaf(Tensor::zeros(b, hidden));
    for t in 0..steps {
        let ids: Vec<usize> = seqs.iter().map(|s| s.get(t).copied().unwrap_or(PAD_ID)).collect();
        let x = tape.gather(bound[emb], &ids);
        let xw = tape.matmul(x, bound[dir.wx]);
        let hw = tape.matmul(h, bound[dir.wh]);
        let gates = tape.add(xw, hw);
        let gates = tape.add_row(gates, bound[dir.b]);
        let i = tape.slice_cols(gates, 0, hidden);
        let i = tape.sigmoid(i);
        let f = tape.slice_cols(gates, hidden, hidden);
        let f = tape.sigmoid(f);
        let g = tape.slice_cols(gates, 2 * hidden, hidden);
        let g = tape.tanh(g);
        let o = tape.slice_cols(gates, 3 * hidden, hidden);
        let o = tape.sigmoid(o);
        let fc = tape.mul(f, c);
        let ig = tape.mul(i, g);
        let c_new = tape.add(fc, ig);
        let tc = tape.tanh(c_new);
        let h_new = tape.mul(o, tc);

        let active: Vec<bool> = seqs.iter().map(|s| t < s.len()).collect();
        if active.iter().all(|&a| a) {
            h = h_new;
            c = c_new;
        } else {
            let mut mask = Tensor::zeros(b, hidden);
            for (r, &a) in active.iter().enumerate() {
                if a {
                    mask.row_mut(r).fill(T::one());
                }
            }
            h = blend(tape, h, h_new, mask.clone());
            c = blend(tape, c, c_new, mask);
        }
    }
    h
}

/// `old + mask ⊙ (new − old)`
fn blend<T: Scalar>(tape: &mut Tape<T>, old: Var, new: Var, mask: Tensor<T>) -> Var {
    let neg = tape.scale(old, -1.0);
    let diff = tape.add(new, neg);
    let gated = tape.mul_const(diff, mask);
    tape.add(old, gated)
}

/// `B x 2h` encoder output for a batch of token sequences.
pub fn encode<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &Bound,
    layout: &BiLstmLayout,
    cfg: &BiLstmConfig,
    batch: &[&[usize]],
) -> Result<Var> {
    if batch.is_empty() {
        return Err(contract!("empty batch"));
    }
    for tokens in batch {
        if tokens.is_empty() {
            return Err(contract!("cannot encode an empty token list"));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= cfg.vocab_size) {
            return Err(contract!("token id {bad} outside vocabulary of {}", cfg.vocab_size));
        }
    }
    let forward: Vec<Vec<usize>> = batch.iter().map(|t| t.to_vec()).collect();
    let backward: Vec<Vec<usize>> = batch.iter().map(|t| t.iter().rev().copied().collect()).collect();
    let hf = run(tape, bound, layout.emb, &layout.fwd, cfg.hidden, &forward);
    let hb = run(tape, bound, layout.emb, &layout.bwd, cfg.hidden, &backward);
    Ok(tape.concat_cols(&[hf, hb]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    fn setup() -> (BiLstmConfig, ParamStore<f64>, BiLstmLayout) {
        let cfg = BiLstmConfig::desk(20);
        let mut store = ParamStore::new(3);
        init_params(&mut store, &cfg, &mut seeding::rng(3, "lstm")).unwrap();
        let layout = BiLstmLayout::resolve(&store).unwrap();
        (cfg, store, layout)
    }

    fn out(batch: &[&[usize]]) -> Tensor<f64> {
        let (cfg, store, layout) = setup();
        let mut tape = Tape::new();
        let bound = tape.bind(&store);
        let v = encode(&mut tape, &bound, &layout, &cfg, batch).unwrap();
        tape.value(v).clone()
    }

    #[test]
    fn output_is_twice_hidden() {
        assert_eq!(out(&[&[4, 5, 6]]).shape(), (1, 64));
        assert_eq!(out(&[&[7]]).shape(), (1, 64));
    }

    #[test]
    fn reversal_changes_output() {
        assert_ne!(out(&[&[4, 5, 6]]).data(), out(&[&[6, 5, 4]]).data());
    }

    #[test]
    fn padding_in_a_batch_matches_running_alone() {
        let alone = out(&[&[4, 5]]);
        let batched = out(&[&[9, 8, 7, 6], &[4, 5]]);
        for (a, b) in alone.row(0).iter().zip(batched.row(1)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_empty_and_out_of_range() {
        let (cfg, store, layout) = setup();
        let mut tape = Tape::<f64>::new();
        let bound = tape.bind(&store);
        assert!(encode(&mut tape, &bound, &layout, &cfg, &[&[]]).is_err());
        assert!(encode(&mut tape, &bound, &layout, &cfg, &[&[20]]).is_err());
    }
}
