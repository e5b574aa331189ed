//! Embedding of the reranker's N-best hypotheses and fusion with the
//! encoder's summary vector.
//!
//! Each hypothesis becomes a `d`-dim vector: a learned row of a domain
//! table plus a learned projection of its score. Slots are concatenated in
//! rank order; missing slots use the table's extra null row.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, contract, Result};
use crate::nlu_sim::NBestList;
use crate::numeric::{Bound, ParamId, ParamStore, Scalar, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisEmbedding {
    DomainAndScore,
    DomainOnly,
    ScoreOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    /// Hypotheses consumed.
    pub n: usize,
    /// Per-hypothesis embedding width.
    pub d: usize,
    /// Width of the fused feed-forward layer.
    pub hidden: usize,
    pub num_domains: usize,
    pub embedding: HypothesisEmbedding,
}

impl FusionConfig {
    pub fn desk(num_domains: usize) -> Self {
        Self {
            n: 5,
            d: 6,
            hidden: 64,
            num_domains,
            embedding: HypothesisEmbedding::DomainAndScore,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.hidden == 0 || self.num_domains == 0 {
            return Err(config_err!("fusion n, d, hidden and domain count must be positive"));
        }
        Ok(())
    }

    /// Row of the domain table reserved for padding slots.
    pub fn null_hypothesis_id(&self) -> usize {
        self.num_domains
    }

    pub fn nbest_dim(&self) -> usize {
        self.d * self.n
    }
}

/// Width of `[cls ‖ n-best]`.
pub fn fused_input_dim(encoder_dim: usize, n: usize, d: usize) -> usize {
    encoder_dim + d * n
}

#[derive(Clone, Debug)]
pub struct NBestLayout {
    table: ParamId,
    score_w: ParamId,
}

pub fn init_params<S: Scalar>(store: &mut ParamStore<S>, cfg: &FusionConfig, rng: &mut ChaCha8Rng) -> Result<()> {
    cfg.validate()?;
    store.normal("nbest.table", cfg.num_domains + 1, cfg.d, 0.5, rng)?;
    store.normal("nbest.score_w", 1, cfg.d, 0.5, rng)?;
    Ok(())
}

impl NBestLayout {
    pub fn resolve<S: Scalar>(store: &ParamStore<S>) -> Result<Self> {
        Ok(Self {
            table: store.id("nbest.table")?,
            score_w: store.id("nbest.score_w")?,
        })
    }
}

/// `(domain_id, score)` pairs in rank order.
pub type Hyps = Vec<(usize, f64)>;

pub fn hyps_of(nbest: &NBestList) -> Hyps {
    nbest.hypotheses.iter().map(|h| (h.domain_id, h.score)).collect()
}

/// `B x (d·N)` embedding of a batch of N-best lists.
pub fn embed<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &Bound,
    layout: &NBestLayout,
    cfg: &FusionConfig,
    batch: &[&Hyps],
) -> Result<Var> {
    for hyps in batch {
        if let Some(&(bad, _)) = hyps.iter().find(|(d, _)| *d >= cfg.num_domains) {
            return Err(contract!("hypothesis domain {bad} outside {} domains", cfg.num_domains));
        }
    }
    let b = batch.len();
    let null = cfg.null_hypothesis_id();
    let mut slots = Vec::with_capacity(cfg.n);
    for k in 0..cfg.n {
        let present: Vec<Option<(usize, f64)>> = batch.iter().map(|h| h.get(k).copied()).collect();
        let ids: Vec<usize> = present.iter().map(|p| p.map_or(null, |(d, _)| d)).collect();
        let mut rows = tape.gather(bound[layout.table], &ids);
        if cfg.embedding == HypothesisEmbedding::ScoreOnly {
            // present slots drop the domain row; padding keeps the null row
            let mut keep = Tensor::zeros(b, cfg.d);
            for (r, p) in present.iter().enumerate() {
                if p.is_none() {
                    keep.row_mut(r).fill(T::one());
                }
            }
            rows = tape.mul_const(rows, keep);
        }
        if cfg.embedding != HypothesisEmbedding::DomainOnly {
            let scores: Vec<T> = present.iter().map(|p| T::of(p.map_or(0.0, |(_, s)| s))).collect();
            let col = tape.leaf(Tensor::from_vec(b, 1, scores));
            let proj = tape.matmul(col, bound[layout.score_w]);
            rows = tape.add(rows, proj);
        }
        slots.push(rows);
    }
    Ok(if slots.len() == 1 { slots[0] } else { tape.concat_cols(&slots) })
}

/// One feed-forward layer with the tanh-form GELU over `[cls ‖ nbest]`.
pub fn fuse<T: Scalar>(tape: &mut Tape<T>, cls: Var, nbest: Option<Var>, w: Var, b: Var) -> Result<Var> {
    let input = match nbest {
        Some(n) => {
            if tape.value(n).rows() != tape.value(cls).rows() {
                return Err(contract!("n-best batch size differs from encoder batch size"));
            }
            tape.concat_cols(&[cls, n])
        }
        None => cls,
    };
    let width = tape.value(input).cols();
    if tape.value(w).rows() != width {
        return Err(contract!(
            "fusion weight expects {} inputs, got {width}",
            tape.value(w).rows()
        ));
    }
    let z = tape.linear(input, w, b);
    Ok(tape.gelu(z))
}
