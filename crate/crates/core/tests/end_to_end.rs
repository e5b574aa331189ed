//! Corpus to candidates through the library API on a small benchmark.

use frforge_core::corpus::{build_fr_dataset, generate_corpus, standard_catalog, DatasetConfig, Utterance, Vocab};
use frforge_core::detector::{filter_candidates, score_pool, train, Head, TrainConfig};
use frforge_core::models::{ModelBundle, ModelKind, ModelSpec};
use frforge_core::nlu_sim::{
    calibrate_target_bias, train_production_models, PerturbationConfig, Production, ProductionConfig, RoutingRecord,
};
use frforge_core::numeric::ScheduleConfig;

struct World {
    target: usize,
    vocab: Vocab,
    logs: Vec<RoutingRecord>,
    corpus_fr_rate: f64,
}

fn world() -> World {
    let catalog = standard_catalog();
    let corpus = generate_corpus(&catalog, 3000, 11, "c").unwrap();
    let traffic = generate_corpus(&catalog, 40_000, 12, "t").unwrap();
    let vocab = Vocab::build(corpus.iter().chain(&traffic));
    let intents: Vec<usize> = catalog.domains.iter().map(|d| d.intents.len()).collect();
    let models = train_production_models(&corpus, &vocab, &intents, &ProductionConfig::default()).unwrap();
    let base = Production {
        models: &models,
        vocab: &vocab,
        perturbation: PerturbationConfig {
            target_bias: 0.0,
            noise_sigma: 0.1,
            seed: 13,
        },
        target: catalog.target_domain,
        n_best: 5,
    };
    let perturbation = calibrate_target_bias(&base, &corpus, 0.2).unwrap();
    let production = Production { perturbation, ..base };
    let corpus_fr_rate = production.fr_rate(&corpus).unwrap();
    let logs = production.process_all(&traffic).unwrap();
    assert_eq!(logs, production.process_all(&traffic).unwrap());
    World {
        target: catalog.target_domain,
        vocab: vocab.clone(),
        logs,
        corpus_fr_rate,
    }
}

#[test]
fn simulated_traffic_feeds_a_detector() {
    let w = world();
    assert!(w.corpus_fr_rate > 0.0 && w.corpus_fr_rate < 0.5, "{}", w.corpus_fr_rate);
    for r in &w.logs {
        assert!(!r.nbest.is_empty() && r.nbest.len() <= 5);
        assert_eq!(r.routed_domain, r.nbest.top().unwrap().domain_id);
    }
    let frs = w.logs.iter().filter(|r| r.is_false_reject(w.target)).count();
    assert!(frs >= 20, "only {frs} false rejects");

    let cfg = DatasetConfig {
        ratio: 5,
        ..DatasetConfig::default()
    };
    let split = build_fr_dataset(&w.logs, w.target, &cfg).unwrap();
    let positives = split.all().filter(|e| e.is_fr()).count();
    assert_eq!(positives, frs);
    assert_eq!(split.len(), 6 * frs);

    let mut spec = ModelSpec::desk(ModelKind::Bilstm, w.vocab.len(), 8);
    spec.bilstm.embed_dim = 8;
    spec.bilstm.hidden = 8;
    let tc = TrainConfig {
        epochs: 6,
        batch_size: 32,
        schedule: ScheduleConfig {
            base_lr: 1e-2,
            ..ScheduleConfig::default()
        },
        seed: 4,
        model_kind: ModelKind::Bilstm,
        ..TrainConfig::default()
    };
    let out = train(&split, &tc, spec, w.vocab.clone(), None).unwrap();
    assert_eq!(out.steps, 6 * split.train.len().div_ceil(32));
    let first = out.log.first().unwrap().train_loss;
    let last = out.log.last().unwrap().train_loss;
    assert!(last < first, "train loss {first} -> {last}");

    let dir = tempfile::tempdir().unwrap();
    out.bundle.save(dir.path()).unwrap();
    let loaded = ModelBundle::load(dir.path()).unwrap();
    assert_eq!(loaded.digest(), out.bundle.digest());

    let pool = score_pool(&loaded, &w.logs, w.target, &w.vocab).unwrap();
    let routed_target = w.logs.iter().filter(|r| r.routed_domain == w.target).count();
    assert_eq!(pool.skipped, routed_target);
    let list = filter_candidates(&pool.scores, w.target, 0.5, Head::Domain).unwrap();
    assert!(list.entries.windows(2).all(|p| p[0].score >= p[1].score));

    // candidates should be far richer in FRs than the pool they came from
    let is_fr = |id: &str| {
        w.logs
            .iter()
            .find(|r| r.utterance.id == id)
            .is_some_and(|r| r.is_false_reject(w.target))
    };
    let hits = list.entries.iter().filter(|c| is_fr(&c.id)).count();
    let precision = hits as f64 / list.len().max(1) as f64;
    let prevalence = frs as f64 / pool.scores.len() as f64;
    assert!(precision > 3.0 * prevalence, "precision {precision}, prevalence {prevalence}");
}

#[test]
fn corpus_generation_is_seeded() {
    let catalog = standard_catalog();
    let a: Vec<Utterance> = generate_corpus(&catalog, 500, 3, "x").unwrap();
    let b = generate_corpus(&catalog, 500, 3, "x").unwrap();
    let c = generate_corpus(&catalog, 500, 4, "x").unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.iter().all(|u| u.id.starts_with('x') && u.true_domain < catalog.num_domains()));
}
