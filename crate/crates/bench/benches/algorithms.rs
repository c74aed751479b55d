use std::collections::BTreeMap;
use std::path::PathBuf;

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use funcssl::corpus::{generate_corpus, Dataset, GrammarSpec};
use funcssl::harness::{evaluate_model, train_paraphrase_scorer, SelectionPlan};
use funcssl::nlu::{train_crf, train_nlu, CrfConfig, NluConfig};
use funcssl::paraphrase::DetectorConfig;
use funcssl::selection::{select_paraphrase_greedy, select_submodular, GreedyObjective, SelectionBudget, SubmodularConfig};

fn grammar(name: &str) -> GrammarSpec {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/grammars").join(name);
    GrammarSpec::load(p).unwrap()
}

fn corpus(name: &str, n: usize, seed: u64) -> Dataset {
    generate_corpus(&grammar(name), n, seed).unwrap()
}

fn nlu(c: &mut Criterion) {
    let train = Dataset::concat([&corpus("reminders_synthetic.toml", 300, 1), &corpus("background.toml", 300, 2)]).unwrap();
    let test = corpus("reminders_live.toml", 400, 3);
    let mut g = c.benchmark_group("nlu");
    g.sample_size(10);
    g.bench_function("crf_train_600", |b| b.iter(|| train_crf(black_box(&train), &CrfConfig::default()).unwrap()));
    g.bench_function("nlu_train_600", |b| b.iter(|| train_nlu(black_box(&train), &NluConfig::default()).unwrap()));
    let models = train_nlu(&train, &NluConfig::default()).unwrap();
    g.bench_function("crf_decode_400", |b| {
        b.iter(|| {
            for u in test.utterances() {
                black_box(models.crf.decode(&u.tokens));
            }
        })
    });
    g.bench_function("evaluate_ser_400", |b| b.iter(|| evaluate_model(&models, black_box(&test)).unwrap()));
    g.finish();
}

fn selection(c: &mut Criterion) {
    let pool = corpus("reminders_live.toml", 1000, 4);
    let anchors = corpus("reminders_live.toml", 100, 5);
    let mut g = c.benchmark_group("selection");
    g.sample_size(10);
    g.bench_function("lazy_greedy_submodular_1000", |b| {
        b.iter(|| select_submodular(black_box(&pool), SelectionBudget::new(0.5), &SubmodularConfig::default()).unwrap())
    });

    let catalogs: BTreeMap<String, Vec<String>> = grammar("reminders_live.toml").catalogs;
    let plan = SelectionPlan {
        detector: DetectorConfig {
            hidden: 32,
            epochs: 2,
            ..DetectorConfig::default()
        },
        ..SelectionPlan::default()
    };
    let vocabulary: Vec<String> = pool.utterances().flat_map(|u| u.tokens.clone()).collect();
    let detector = train_paraphrase_scorer(&anchors, &catalogs, &vocabulary, &plan, 6).unwrap();
    g.bench_function("paraphrase_greedy_1000", |b| {
        b.iter(|| {
            select_paraphrase_greedy(&anchors, black_box(&pool), &detector, SelectionBudget::new(0.5), GreedyObjective::Argmin)
                .unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, nlu, selection);
criterion_main!(benches);
