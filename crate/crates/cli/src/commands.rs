use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use funcssl::corpus::{self, generate_corpus_with, load_dataset, save_dataset, Dataset, GenerateOptions, GrammarSpec, Origin};
use funcssl::harness::{run_benchmark, BenchmarkPlan};
use funcssl::nlu::train_nlu;
use funcssl::paraphrase::{mine_pairs, train_detector, train_embedding, write_pairs, MiningConfig, ParaphraseDetector};
use funcssl::selection::{
    select_all, select_paraphrase_greedy, select_random, select_submodular, select_unique, SelectionBudget,
    SelectionMethod,
};
use funcssl::ssl::run_ssl;
use funcssl::{Error, Result};

use crate::config::{require_files, section, RunConfig};
use crate::{Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    if let Command::Bench = cli.command {
        return bench(cli, config_path);
    }
    let cfg = RunConfig::load(config_path)?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Gen => gen(&cfg, seed, &cli.out),
        Command::TrainNlu => train_nlu_cmd(&cfg, seed, &cli.out),
        Command::Ssl => ssl(&cfg, seed, &cli.out),
        Command::TrainPara => train_para(&cfg, seed, &cli.out),
        Command::Select { method, fraction } => select(&cfg, seed, (*method).into(), *fraction, &cli.out),
        Command::Bench => unreachable!("handled above"),
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {}", path.display(), e)))
}

fn load_all(paths: &[std::path::PathBuf]) -> Result<Dataset> {
    let parts = paths.iter().map(load_dataset).collect::<Result<Vec<_>>>()?;
    Dataset::concat(&parts)
}

#[derive(Serialize)]
struct GenManifest<'a> {
    grammar: &'a str,
    seed: u64,
    count: usize,
    increments: &'a [f64],
    increment_sizes: Vec<usize>,
    files: Vec<String>,
}

fn gen(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let s = section(&cfg.gen, "gen")?;
    require_files([&s.grammar])?;
    let grammar = GrammarSpec::load(&s.grammar)?;
    let opts = GenerateOptions {
        id_prefix: s.id_prefix.clone(),
        origin: s.origin.unwrap_or(Origin::Synthetic),
    };
    let data = generate_corpus_with(&grammar, s.count, seed, &opts)?;
    save_dataset(&data, out.join("corpus.jsonl"))?;
    let mut files = vec!["corpus.jsonl".to_string()];
    let mut sizes = Vec::new();
    if !s.increments.is_empty() {
        for (i, part) in corpus::split_increments(&data, &s.increments, seed)?.iter().enumerate() {
            let name = format!("increment_{}.jsonl", i);
            save_dataset(part, out.join(&name))?;
            files.push(name);
            sizes.push(part.len());
        }
    }
    write_json(
        &GenManifest {
            grammar: &grammar.id,
            seed,
            count: data.len(),
            increments: &s.increments,
            increment_sizes: sizes,
            files,
        },
        &out.join("manifest.json"),
    )
}

fn train_nlu_cmd(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let s = section(&cfg.train_nlu, "train_nlu")?;
    require_files(&s.data)?;
    let data = load_all(&s.data)?;
    let models = train_nlu(&data, &s.nlu.reseeded(seed))?;
    write_json(&models, &out.join("nlu_model.json"))?;
    write_json(
        &serde_json::json!({ "seed": seed, "training_size": data.len(), "config": s.nlu }),
        &out.join("manifest.json"),
    )
}

fn ssl(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let s = section(&cfg.ssl, "ssl")?;
    require_files(s.annotated.iter().chain(&s.synthetic).chain([&s.pool]))?;
    let annotated = load_all(&s.annotated)?;
    let synthetic = load_all(&s.synthetic)?;
    let pool = load_dataset(&s.pool)?.strip_annotations();
    let config = funcssl::ssl::SslConfig { seed, ..s.settings.clone() };
    let output = run_ssl(&annotated, &synthetic, &pool, &s.functionality, &config)?;
    save_dataset(&output.augmentation, out.join("augmentation.jsonl"))?;
    write_json(&output.models.nlu, &out.join("nlu_model.json"))?;
    write_json(&output.manifest, &out.join("manifest.json"))
}

fn train_para(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let s = section(&cfg.train_para, "train_para")?;
    require_files(s.data.iter().chain(&s.grammars).chain(&s.vocabulary))?;
    let data = load_all(&s.data)?;
    let mut catalogs = std::collections::BTreeMap::<String, Vec<String>>::new();
    for g in &s.grammars {
        for (k, v) in GrammarSpec::load(g)?.catalogs {
            let entry = catalogs.entry(k).or_default();
            for value in v {
                if !entry.contains(&value) {
                    entry.push(value);
                }
            }
        }
    }
    let pairs = mine_pairs(&data, &catalogs, &MiningConfig { seed, ..s.mining.clone() })?;
    let positives: Vec<_> = pairs.iter().filter(|p| p.label).cloned().collect();
    let mut vocabulary = Vec::new();
    for p in &s.vocabulary {
        vocabulary.extend(load_dataset(p)?.utterances().flat_map(|u| u.tokens.clone()));
    }
    let margin = funcssl::paraphrase::MarginConfig { seed, ..s.margin.clone() };
    let embedding = train_embedding(&positives, &margin, s.embedding_kind, &vocabulary)?;
    let detector = train_detector(&pairs, &embedding, &funcssl::paraphrase::DetectorConfig { seed, ..s.detector.clone() })?;
    write_pairs(&pairs, BufWriter::new(fs::File::create(out.join("pairs.jsonl"))?))?;
    write_json(&detector, &out.join("paraphrase_model.json"))?;
    write_json(
        &serde_json::json!({
            "seed": seed,
            "pairs": pairs.len(),
            "positives": positives.len(),
            "vocabulary": embedding.vocabulary().len(),
        }),
        &out.join("manifest.json"),
    )
}

fn select(cfg: &RunConfig, seed: u64, method: SelectionMethod, fraction: f64, out: &Path) -> Result<()> {
    let s = section(&cfg.select, "select")?;
    require_files([&s.pool])?;
    let pool = load_dataset(&s.pool)?;
    let budget = SelectionBudget {
        fraction,
        batch_fraction: s.batch_fraction.min(fraction),
    };
    let result = match method {
        SelectionMethod::Para => {
            let (anchors, model) = match (&s.anchors, &s.model) {
                (Some(a), Some(m)) => (a, m),
                _ => return Err(Error::Config("the para method needs [select] anchors and model".into())),
            };
            require_files([anchors, model])?;
            let detector: ParaphraseDetector = read_json(model)?;
            select_paraphrase_greedy(&load_dataset(anchors)?, &pool, &detector, budget, s.objective)?
        }
        SelectionMethod::Submodular => select_submodular(&pool, budget, &s.submodular)?,
        SelectionMethod::Random => select_random(&pool, budget, seed)?,
        SelectionMethod::Unique => select_unique(&pool, budget, seed)?,
        SelectionMethod::All => select_all(&pool),
    };
    save_dataset(&result.apply(&pool)?, out.join("selected.jsonl"))?;
    write_json(&result, &out.join("manifest.json"))
}

fn bench(cli: &Cli, plan_path: &Path) -> Result<()> {
    if !plan_path.is_file() {
        return Err(Error::Config(format!("plan file not found: {}", plan_path.display())));
    }
    let mut plan = BenchmarkPlan::load(plan_path)?;
    if let Some(seed) = cli.seed {
        plan.seed = seed;
    }
    require_files(
        plan.functionalities
            .iter()
            .flat_map(|f| [&f.synthetic_grammar, &f.live_grammar])
            .chain([&plan.background.grammar]),
    )?;
    fs::create_dir_all(&cli.out)?;
    let report = run_benchmark(&plan)?;
    let text = report.render_text();
    fs::write(cli.out.join("report.txt"), &text)?;
    report.write_csv(BufWriter::new(fs::File::create(cli.out.join("report.csv"))?))?;
    print!("{}", text);
    Ok(())
}
