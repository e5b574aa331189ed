//! The batch stages. Each reads its inputs from and writes its outputs to
//! one working directory, so every stage can be re-run on its own.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use frforge_core::corpus::{
    build_eval_set, build_fr_dataset, generate_corpus, read_examples, read_split, standard_catalog, write_examples,
    write_split, CorpusConfig, DomainId, LabeledExample, TrafficSlice, Utterance, Vocab,
};
use frforge_core::detector::{
    ensemble_scores, filter_candidates, read_candidates, read_scores, score_pool, train, write_candidates,
    write_scores, CandidateList, EpochLog, Head, ScoreRecord, SCORE_BATCH,
};
use frforge_core::evalreport::{evaluate_detection, render_report, DetectionReport};
use frforge_core::feedback::{
    enrichment, ground_truth, oracle_annotate, retrain_and_measure, Annotation, AnnotationLog, EnrichmentReport,
    FeedbackReport, PoolStats, ProductionContext,
};
use frforge_core::models::{pretrain_encoder, ModelBundle, ModelKind, PretrainedEncoder, TransformerConfig};
use frforge_core::nlu_sim::{
    calibrate_target_bias, train_production_models, DomainModelParams, PerturbationConfig, Production, RoutingRecord,
};
use frforge_core::numeric::{load_checkpoint, save_checkpoint};
use frforge_core::{jsonl, seeding, Error, Result};

use crate::config::{Annotator, RunConfig};

pub const CATALOG: &str = "catalog.json";
pub const CORPUS: &str = "corpus.jsonl";
pub const TRAFFIC: &str = "traffic.jsonl";
pub const VOCAB: &str = "vocab.json";
pub const PRODUCTION: &str = "production.json";
pub const PERTURBATION: &str = "perturbation.json";
pub const LOGS: &str = "logs.jsonl";
pub const SIMULATION: &str = "simulation.json";
pub const DATASET_META: &str = "dataset.meta.json";
pub const EVAL_SET: &str = "eval.jsonl";
pub const MODELS: &str = "models";
pub const DIGESTS: &str = "models/digests.json";
pub const PRETRAINED: &str = "models/pretrained";
pub const SCORES: &str = "scores.jsonl";
pub const CANDIDATES: &str = "candidates.jsonl";
pub const DETECTION: &str = "detection.json";
pub const REPORTS: &str = "reports";
pub const ANNOTATIONS: &str = "annotations.jsonl";
pub const FEEDBACK_REPORT: &str = "feedback_report.json";
pub const RETRAINED_PRODUCTION: &str = "production.retrained.json";

/// Name of the averaged model in reports and score files.
pub const ENSEMBLE: &str = "ensemble";

pub struct Workdir {
    root: PathBuf,
}

impl Workdir {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// An upstream artifact; missing means the producing stage has not run.
    pub fn require(&self, rel: &str, producer: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(Error::Config(format!(
                "{} not found; run `{producer}` first",
                p.display()
            )))
        }
    }

    fn create_parent(&self, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(p)
    }
}

fn load_catalog(cfg: &RunConfig) -> Result<CorpusConfig> {
    let catalog = match &cfg.corpus.catalog {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read catalog {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid catalog {}: {e}", p.display())))?
        }
        None => standard_catalog(),
    };
    catalog.validate()?;
    Ok(catalog)
}

pub fn gen_corpus(cfg: &RunConfig, wd: &Workdir) -> Result<()> {
    let catalog = load_catalog(cfg)?;
    let corpus = generate_corpus(&catalog, cfg.corpus.utterances, seeding::derive(cfg.seed, "corpus"), "c")?;
    let traffic = generate_corpus(
        &catalog,
        cfg.corpus.traffic_utterances,
        seeding::derive(cfg.seed, "traffic"),
        "t",
    )?;
    jsonl::write_json(&wd.path(CATALOG), &catalog)?;
    jsonl::write(&wd.path(CORPUS), &corpus)?;
    jsonl::write(&wd.path(TRAFFIC), &traffic)?;
    log::info!("generated {} corpus and {} traffic utterances", corpus.len(), traffic.len());
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub target_domain: DomainId,
    pub target_bias: f64,
    pub corpus_fr_rate: f64,
    pub traffic_fr_rate: f64,
    pub traffic_false_rejects: usize,
}

pub fn simulate(cfg: &RunConfig, wd: &Workdir) -> Result<SimulationSummary> {
    let catalog: CorpusConfig = jsonl::read_json(&wd.require(CATALOG, "gen-corpus")?)?;
    let corpus: Vec<Utterance> = jsonl::read(&wd.require(CORPUS, "gen-corpus")?)?;
    let traffic: Vec<Utterance> = jsonl::read(&wd.require(TRAFFIC, "gen-corpus")?)?;
    let target = catalog.target_domain;
    let vocab = Vocab::build(corpus.iter().chain(&traffic));
    let intents: Vec<usize> = catalog.domains.iter().map(|d| d.intents.len()).collect();
    let models = train_production_models(&corpus, &vocab, &intents, &cfg.production())?;

    let base = Production {
        models: &models,
        vocab: &vocab,
        perturbation: PerturbationConfig {
            target_bias: 0.0,
            noise_sigma: cfg.pipeline.noise_sigma,
            seed: seeding::derive(cfg.seed, "reranker"),
        },
        target,
        n_best: cfg.pipeline.n_best,
    };
    let perturbation = calibrate_target_bias(&base, &corpus, cfg.pipeline.fr_rate)?;
    let production = Production { perturbation, ..base };
    let corpus_fr_rate = production.fr_rate(&corpus)?;
    let logs = production.process_all(&traffic)?;

    let in_target = logs.iter().filter(|r| r.utterance.true_domain == target).count();
    let frs = logs.iter().filter(|r| r.is_false_reject(target)).count();
    let summary = SimulationSummary {
        target_domain: target,
        target_bias: production.perturbation.target_bias,
        corpus_fr_rate,
        traffic_fr_rate: if in_target == 0 { 0.0 } else { frs as f64 / in_target as f64 },
        traffic_false_rejects: frs,
    };
    jsonl::write_json(&wd.path(VOCAB), &vocab)?;
    jsonl::write_json(&wd.path(PRODUCTION), &models)?;
    jsonl::write_json(&wd.path(PERTURBATION), &production.perturbation)?;
    jsonl::write(&wd.path(LOGS), &logs)?;
    jsonl::write_json(&wd.path(SIMULATION), &summary)?;
    log::info!(
        "target bias {:.4}: FR rate {:.3} over the corpus, {:.3} over traffic ({frs} FRs)",
        summary.target_bias,
        summary.corpus_fr_rate,
        summary.traffic_fr_rate
    );
    Ok(summary)
}

fn slice_records(cfg: &RunConfig, logs: &[RoutingRecord], slice: TrafficSlice) -> Vec<RoutingRecord> {
    let seed = seeding::derive(cfg.seed, "slices");
    logs.iter()
        .filter(|r| cfg.corpus.slices.slice_of(&r.utterance.id, seed) == slice)
        .cloned()
        .collect()
}

fn read_logs(wd: &Workdir) -> Result<Vec<RoutingRecord>> {
    jsonl::read(&wd.require(LOGS, "simulate")?)
}

fn read_catalog(wd: &Workdir) -> Result<CorpusConfig> {
    jsonl::read_json(&wd.require(CATALOG, "gen-corpus")?)
}

pub fn build_dataset(cfg: &RunConfig, wd: &Workdir) -> Result<()> {
    let logs = read_logs(wd)?;
    let target = read_catalog(wd)?.target_domain;
    let annotation = slice_records(cfg, &logs, TrafficSlice::Annotation);
    let split = build_fr_dataset(&annotation, target, &cfg.dataset())?;
    write_split(wd.root(), &split)?;
    let test = slice_records(cfg, &logs, TrafficSlice::Test);
    let eval = build_eval_set(&test, target, &cfg.eval_dataset())?;
    write_examples(&wd.path(EVAL_SET), &eval)?;
    log::info!(
        "dataset: {} train / {} valid ({} FRs); eval set {} ({} FRs)",
        split.train.len(),
        split.valid.len(),
        split.all().filter(|e| e.is_fr()).count(),
        eval.len(),
        eval.iter().filter(|e| e.is_fr()).count()
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EncoderManifest {
    config: TransformerConfig,
    epoch_losses: Vec<f64>,
}

fn save_encoder(dir: &Path, enc: &PretrainedEncoder) -> Result<()> {
    save_checkpoint(&dir.join("checkpoint"), &enc.params, 0)?;
    jsonl::write_json(
        &dir.join("encoder.json"),
        &EncoderManifest {
            config: enc.config.clone(),
            epoch_losses: enc.epoch_losses.clone(),
        },
    )
}

pub fn load_encoder(dir: &Path) -> Result<PretrainedEncoder> {
    let manifest: EncoderManifest = jsonl::read_json(&dir.join("encoder.json"))?;
    let (params, _) = load_checkpoint(&dir.join("checkpoint"))?;
    Ok(PretrainedEncoder {
        config: manifest.config,
        params,
        epoch_losses: manifest.epoch_losses,
    })
}

/// `models/<kind>/seed<i>`.
pub fn model_dir(kind: ModelKind, index: usize) -> String {
    format!("{MODELS}/{}/seed{index}", kind.name())
}

#[derive(Serialize, Deserialize)]
struct TrainLog {
    seed: u64,
    steps: usize,
    digest: String,
    epochs: Vec<EpochLog>,
}

/// Pre-training text: the corpus plus the distinct texts of the traffic
/// that is annotated or mined. Test and held-out traffic stay unseen.
fn pretraining_texts(cfg: &RunConfig, wd: &Workdir) -> Result<Vec<String>> {
    let corpus: Vec<Utterance> = jsonl::read(&wd.require(CORPUS, "gen-corpus")?)?;
    let logs = read_logs(wd)?;
    let traffic: BTreeSet<String> = [TrafficSlice::Annotation, TrafficSlice::Pool]
        .into_iter()
        .flat_map(|s| slice_records(cfg, &logs, s))
        .map(|r| r.utterance.text)
        .collect();
    Ok(corpus.into_iter().map(|u| u.text).chain(traffic).collect())
}

/// Trains `train.seeds` models of every configured kind; returns
/// `kind/seed<i>` → checkpoint digest.
pub fn train_models(cfg: &RunConfig, wd: &Workdir) -> Result<BTreeMap<String, String>> {
    let split = read_split(wd.root()).map_err(|e| match e {
        Error::Io { .. } => Error::Config(format!("dataset files missing in {}; run `build-dataset` first", wd.root().display())),
        other => other,
    })?;
    let vocab: Vocab = jsonl::read_json(&wd.require(VOCAB, "simulate")?)?;
    let num_domains = read_catalog(wd)?.num_domains();

    let wants_encoder = cfg.model.pretrain.enabled && cfg.model.kinds.iter().any(|k| k.uses_transformer());
    let encoder = if wants_encoder {
        let texts = pretraining_texts(cfg, wd)?;
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        log::info!("pre-training the encoder on {} texts", refs.len());
        let enc = pretrain_encoder(&cfg.transformer(vocab.len()), &vocab, &refs, &cfg.pretrain_config())?;
        save_encoder(&wd.path(PRETRAINED), &enc)?;
        Some(enc)
    } else {
        None
    };

    let mut digests = BTreeMap::new();
    for &kind in &cfg.model.kinds {
        for index in 0..cfg.train.seeds {
            let tc = cfg.train_config(kind, index);
            let spec = cfg.model_spec(kind, vocab.len(), num_domains);
            let out = train(&split, &tc, spec, vocab.clone(), encoder.as_ref())?;
            let rel = model_dir(kind, index);
            let dir = wd.path(&rel);
            out.bundle.save(&dir)?;
            let digest = out.bundle.digest();
            let last = out.log.last();
            log::info!(
                "{rel}: {} steps, train loss {:.4}, valid loss {:.4}",
                out.steps,
                last.map_or(f64::NAN, |l| l.train_loss),
                last.and_then(|l| l.valid_loss).unwrap_or(f64::NAN)
            );
            jsonl::write_json(
                &dir.join("train_log.json"),
                &TrainLog {
                    seed: tc.seed,
                    steps: out.steps,
                    digest: digest.clone(),
                    epochs: out.log,
                },
            )?;
            digests.insert(format!("{}/seed{index}", kind.name()), digest);
        }
    }
    jsonl::write_json(&wd.path(DIGESTS), &digests)?;
    Ok(digests)
}

pub fn eval_scores_path(name: &str, index: Option<usize>) -> String {
    match index {
        Some(i) => format!("scores/eval/{name}/seed{i}.jsonl"),
        None => format!("scores/eval/{name}.jsonl"),
    }
}

pub fn pool_scores_path(index: usize) -> String {
    format!("scores/pool/seed{index}.jsonl")
}

pub fn seed_candidates_path(index: usize) -> String {
    format!("candidates/seed{index}.jsonl")
}

fn score_examples(bundle: &ModelBundle, examples: &[LabeledExample]) -> Result<Vec<ScoreRecord>> {
    let inputs: Vec<_> = examples.iter().map(|e| bundle.input(&e.utterance.text, &e.nbest)).collect();
    let preds = bundle.predict(&inputs, SCORE_BATCH)?;
    Ok(examples
        .iter()
        .zip(preds)
        .map(|(e, p)| ScoreRecord {
            id: e.utterance.id.clone(),
            p_domain: p.p_domain,
            p_fr: p.p_fr,
            routed_domain: e.routed_domain,
            text: e.utterance.text.clone(),
        })
        .collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub pool_scored: usize,
    pub pool_skipped: usize,
    pub members: Vec<String>,
    pub candidates: usize,
    pub seed_candidates: Vec<usize>,
}

fn load_bundle(wd: &Workdir, kind: ModelKind, index: usize) -> Result<ModelBundle> {
    ModelBundle::load(&wd.require(&model_dir(kind, index), "train")?)
}

/// Scores the evaluation set with every model and mines the pool with the
/// ensemble of `detect.ensemble_kind` seeds.
pub fn detect(cfg: &RunConfig, wd: &Workdir) -> Result<DetectionSummary> {
    let digests: BTreeMap<String, String> = jsonl::read_json(&wd.require(DIGESTS, "train")?)?;
    let eval = read_examples(&wd.require(EVAL_SET, "build-dataset")?)?;
    let logs = read_logs(wd)?;
    let vocab: Vocab = jsonl::read_json(&wd.require(VOCAB, "simulate")?)?;
    let target = read_catalog(wd)?.target_domain;
    let pool = slice_records(cfg, &logs, TrafficSlice::Pool);
    let head = cfg.candidate_head();
    let ens_kind = cfg.detect.ensemble_kind;
    if !cfg.model.kinds.contains(&ens_kind) {
        return Err(Error::Config(format!("ensemble kind `{}` is not among model.kinds", ens_kind.name())));
    }

    let mut eval_members = Vec::new();
    let mut pool_members = Vec::new();
    let mut member_digests = Vec::new();
    let mut seed_candidates = Vec::new();
    let mut skipped = 0;
    for &kind in &cfg.model.kinds {
        for index in 0..cfg.train.seeds {
            let bundle = load_bundle(wd, kind, index)?;
            let key = format!("{}/seed{index}", kind.name());
            if digests.get(&key) != Some(&bundle.digest()) {
                return Err(Error::Config(format!("{key} differs from the recorded digest; re-run `train`")));
            }
            let scores = score_examples(&bundle, &eval)?;
            write_scores(&wd.create_parent(&eval_scores_path(kind.name(), Some(index)))?, &scores)?;
            if kind == ens_kind {
                eval_members.push(scores);
                let mined = score_pool(&bundle, &pool, target, &vocab)?;
                skipped = mined.skipped;
                let list = filter_candidates(&mined.scores, target, cfg.detect.threshold, head)?;
                write_candidates(&wd.create_parent(&seed_candidates_path(index))?, &list, &bundle.digest())?;
                write_scores(&wd.create_parent(&pool_scores_path(index))?, &mined.scores)?;
                seed_candidates.push(list.len());
                member_digests.push(bundle.digest());
                pool_members.push(mined.scores);
            }
        }
    }

    let (eval_ens, pool_ens) = if pool_members.len() >= 2 {
        (ensemble_scores(&eval_members)?, ensemble_scores(&pool_members)?)
    } else {
        (eval_members.remove(0), pool_members.remove(0))
    };
    write_scores(&wd.create_parent(&eval_scores_path(ENSEMBLE, None))?, &eval_ens)?;
    write_scores(&wd.path(SCORES), &pool_ens)?;
    let list = filter_candidates(&pool_ens, target, cfg.detect.threshold, head)?;
    write_candidates(&wd.path(CANDIDATES), &list, &member_digests.join("+"))?;
    let summary = DetectionSummary {
        pool_scored: pool_ens.len(),
        pool_skipped: skipped,
        members: member_digests,
        candidates: list.len(),
        seed_candidates,
    };
    jsonl::write_json(&wd.path(DETECTION), &summary)?;
    log::info!("{} of {} pool records are FR candidates", list.len(), pool_ens.len());
    Ok(summary)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn head_scores(scores: &[ScoreRecord], head: Head) -> Result<Vec<f64>> {
    scores.iter().map(|s| head.of(s)).collect()
}

fn check_alignment(examples: &[LabeledExample], scores: &[ScoreRecord], path: &Path) -> Result<()> {
    if examples.len() != scores.len() || examples.iter().zip(scores).any(|(e, s)| e.utterance.id != s.id) {
        return Err(Error::Contract(format!("{} does not match the evaluation set", path.display())));
    }
    Ok(())
}

/// One row per model kind (the seed with the median F1, with every seed's
/// F1 attached) plus the ensemble.
pub fn evaluate(cfg: &RunConfig, wd: &Workdir) -> Result<Vec<DetectionReport>> {
    wd.require(DETECTION, "detect")?;
    let eval = read_examples(&wd.require(EVAL_SET, "build-dataset")?)?;
    let target = read_catalog(wd)?.target_domain;
    let tau = cfg.eval.threshold;
    let mut reports = Vec::new();
    for &kind in &cfg.model.kinds {
        let mut runs = Vec::new();
        for index in 0..cfg.train.seeds {
            let path = wd.require(&eval_scores_path(kind.name(), Some(index)), "detect")?;
            let scores = read_scores(&path)?;
            check_alignment(&eval, &scores, &path)?;
            let s = head_scores(&scores, Head::default_for(kind))?;
            runs.push(evaluate_detection(kind.name(), kind.label(), &eval, &s, target, tau)?);
        }
        let seed_f1: Vec<f64> = runs.iter().map(|r| 100.0 * r.exact.f1).collect();
        let mut order: Vec<usize> = (0..runs.len()).collect();
        order.sort_by(|&a, &b| seed_f1[a].total_cmp(&seed_f1[b]).then(a.cmp(&b)));
        let mut row = runs.swap_remove(order[(order.len() - 1) / 2]);
        row.seed_f1 = seed_f1;
        reports.push(row);
    }
    let path = wd.require(&eval_scores_path(ENSEMBLE, None), "detect")?;
    let scores = read_scores(&path)?;
    check_alignment(&eval, &scores, &path)?;
    let s = head_scores(&scores, cfg.candidate_head())?;
    reports.push(evaluate_detection(ENSEMBLE, "Ensemble", &eval, &s, target, tau)?);
    render_report(&reports, &wd.path(REPORTS))?;
    for r in &reports {
        log::info!("{:<40} P {:5.1} R {:5.1} F1 {:5.1}", r.model_kind, r.precision, r.recall, r.f1);
    }
    Ok(reports)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedFeedback {
    pub seed: usize,
    pub candidates: usize,
    pub enrichment: EnrichmentReport,
    pub retrain: FeedbackReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeedbackOutput {
    pub annotator: Annotator,
    pub candidates: usize,
    pub pool: PoolStats,
    pub enrichment: EnrichmentReport,
    pub retrain: FeedbackReport,
    /// The same retraining with learning rate 0.
    pub control: FeedbackReport,
    /// Each ensemble member's own candidate list, oracle-annotated.
    pub seeds: Vec<SeedFeedback>,
    pub median_seed_enrichment: f64,
    pub median_seed_fr_after: f64,
    pub production_digest_before: String,
    pub production_digest_after: String,
}

pub fn feedback(cfg: &RunConfig, wd: &Workdir) -> Result<FeedbackOutput> {
    let (_, candidates) = read_candidates(&wd.require(CANDIDATES, "detect")?)?;
    let logs = read_logs(wd)?;
    let catalog = read_catalog(wd)?;
    let target = catalog.target_domain;
    let corpus: Vec<Utterance> = jsonl::read(&wd.require(CORPUS, "gen-corpus")?)?;
    let vocab: Vocab = jsonl::read_json(&wd.require(VOCAB, "simulate")?)?;
    let models: DomainModelParams = jsonl::read_json(&wd.require(PRODUCTION, "simulate")?)?;
    let perturbation: PerturbationConfig = jsonl::read_json(&wd.require(PERTURBATION, "simulate")?)?;

    let truth = ground_truth(&logs, target);
    let pool = PoolStats::of(&slice_records(cfg, &logs, TrafficSlice::Pool), target);
    let heldout: Vec<Utterance> = slice_records(cfg, &logs, TrafficSlice::Heldout)
        .into_iter()
        .map(|r| r.utterance)
        .collect();
    let utterances: HashMap<&str, &Utterance> = logs.iter().map(|r| (r.utterance.id.as_str(), &r.utterance)).collect();
    let ctx = ProductionContext {
        models: &models,
        vocab: &vocab,
        corpus: &corpus,
        perturbation: &perturbation,
        target,
        n_best: cfg.pipeline.n_best,
        positive_weight: cfg.pipeline.positive_weight,
    };
    let budget = |list: CandidateList| match cfg.feedback.top_k {
        Some(k) => list.top_k(k),
        None => list,
    };
    let annotate_seed = seeding::derive(cfg.seed, "feedback/annotate");

    let candidates = budget(candidates);
    let annotations: Vec<Annotation> = match cfg.feedback.annotator {
        Annotator::Oracle => {
            let anns = oracle_annotate(&candidates, &truth, cfg.feedback.error_rate, annotate_seed)?;
            jsonl::write(&wd.path(ANNOTATIONS), &anns)?;
            anns
        }
        Annotator::Human => {
            let path = wd.require(ANNOTATIONS, "triage-serve")?;
            AnnotationLog::open(&path)?.entries().to_vec()
        }
    };
    let enrich = enrichment(&candidates, &annotations, &pool)?;
    let (retrain, updated) =
        retrain_and_measure(&annotations, &utterances, &ctx, &heldout, &cfg.retrain(cfg.feedback.learning_rate))?;
    let (control, _) = retrain_and_measure(&annotations, &utterances, &ctx, &heldout, &cfg.retrain(0.0))?;

    let mut seeds = Vec::new();
    for index in 0..cfg.train.seeds {
        let path = wd.path(&seed_candidates_path(index));
        if !path.exists() {
            continue;
        }
        let (_, list) = read_candidates(&path)?;
        let list = budget(list);
        let anns = oracle_annotate(&list, &truth, cfg.feedback.error_rate, annotate_seed)?;
        let e = enrichment(&list, &anns, &pool)?;
        let (r, _) = retrain_and_measure(&anns, &utterances, &ctx, &heldout, &cfg.retrain(cfg.feedback.learning_rate))?;
        seeds.push(SeedFeedback {
            seed: index,
            candidates: list.len(),
            enrichment: e,
            retrain: r,
        });
    }
    let seed_factors: Vec<f64> = seeds.iter().map(|s| s.enrichment.factor).collect();
    let seed_after: Vec<f64> = seeds.iter().map(|s| s.retrain.fr_after as f64).collect();

    jsonl::write_json(&wd.path(RETRAINED_PRODUCTION), &updated)?;
    let out = FeedbackOutput {
        annotator: cfg.feedback.annotator,
        candidates: candidates.len(),
        pool,
        enrichment: enrich,
        retrain,
        control,
        seeds,
        median_seed_enrichment: median(&seed_factors),
        median_seed_fr_after: median(&seed_after),
        production_digest_before: models.digest(),
        production_digest_after: updated.digest(),
    };
    jsonl::write_json(&wd.path(FEEDBACK_REPORT), &out)?;
    log::info!(
        "enrichment {:.1}x over {} candidates; held-out FRs {} -> {} ({} confirmed FRs added)",
        out.enrichment.factor,
        out.candidates,
        out.retrain.fr_before,
        out.retrain.fr_after,
        out.retrain.confirmed_added
    );
    Ok(out)
}

pub fn run_all(cfg: &RunConfig, wd: &Workdir) -> Result<()> {
    gen_corpus(cfg, wd)?;
    simulate(cfg, wd)?;
    build_dataset(cfg, wd)?;
    train_models(cfg, wd)?;
    detect(cfg, wd)?;
    evaluate(cfg, wd)?;
    feedback(cfg, wd)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn missing_upstream_names_the_producer() {
        let dir = tempfile::tempdir().unwrap();
        let wd = Workdir::new(dir.path()).unwrap();
        let err = wd.require(CANDIDATES, "detect").unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("`detect`"));
    }
}
