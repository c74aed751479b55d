use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use funcssl::corpus::load_dataset;
use tempfile::TempDir;

fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn funcssl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_funcssl")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = funcssl(args);
    assert!(
        out.status.success(),
        "{:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn gen_config(dir: &Path, grammar: &str, count: usize, extra: &str) -> PathBuf {
    write(
        dir,
        &format!("gen_{}.toml", count),
        &format!(
            "seed = 9\n[gen]\ngrammar = {:?}\ncount = {}\n{}\n",
            path_str(&repo_path(grammar)),
            count,
            extra
        ),
    )
}

#[test]
fn gen_writes_a_reproducible_corpus() {
    let tmp = TempDir::new().unwrap();
    let cfg = gen_config(tmp.path(), "configs/grammars/reminders_synthetic.toml", 60, "increments = [0.1, 0.5, 1.0]");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        run_ok(&["gen", "--config", path_str(&cfg), "--out", path_str(out)]);
    }
    for name in ["corpus.jsonl", "increment_0.jsonl", "increment_1.jsonl", "increment_2.jsonl", "manifest.json"] {
        let first = fs::read(a.join(name)).unwrap();
        assert_eq!(first, fs::read(b.join(name)).unwrap(), "{} differs between runs", name);
    }
    assert_eq!(load_dataset(a.join("corpus.jsonl")).unwrap().len(), 60);
    assert_eq!(load_dataset(a.join("increment_0.jsonl")).unwrap().len(), 6);
    assert_eq!(load_dataset(a.join("increment_2.jsonl")).unwrap().len(), 60);
}

#[test]
fn seed_flag_changes_the_corpus() {
    let tmp = TempDir::new().unwrap();
    let cfg = gen_config(tmp.path(), "configs/grammars/reminders_synthetic.toml", 40, "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&["gen", "--config", path_str(&cfg), "--out", path_str(&a)]);
    run_ok(&["gen", "--config", path_str(&cfg), "--seed", "10", "--out", path_str(&b)]);
    assert_ne!(fs::read(a.join("corpus.jsonl")).unwrap(), fs::read(b.join("corpus.jsonl")).unwrap());
}

#[test]
fn missing_catalog_is_a_config_error_naming_the_slot() {
    let tmp = TempDir::new().unwrap();
    let grammar = write(
        tmp.path(),
        "g.toml",
        "id = \"g\"\n[[templates]]\ndomain = \"music\"\nintent = \"PlayMusic\"\ntext = \"play {Artist}\"\n",
    );
    let cfg = write(
        tmp.path(),
        "c.toml",
        &format!("[gen]\ngrammar = {:?}\ncount = 5\n", path_str(&grammar)),
    );
    let out = funcssl(&["gen", "--config", path_str(&cfg), "--out", path_str(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Artist"));
}

#[test]
fn missing_input_file_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", "[gen]\ngrammar = \"nowhere.toml\"\ncount = 5\n");
    let out = funcssl(&["gen", "--config", path_str(&cfg), "--out", path_str(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.toml"));
}

#[test]
fn malformed_dataset_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let data = write(tmp.path(), "bad.jsonl", "{\"id\": \"x\", \"tokens\": \n");
    let cfg = write(tmp.path(), "c.toml", &format!("[train_nlu]\ndata = [{:?}]\n", path_str(&data)));
    let out = funcssl(&["train-nlu", "--config", path_str(&cfg), "--out", path_str(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn invalid_method_is_a_usage_error() {
    let out = funcssl(&["select", "--method", "best", "--config", "x.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn select_all_keeps_the_whole_pool() {
    let tmp = TempDir::new().unwrap();
    let gen = gen_config(tmp.path(), "configs/grammars/reminders_live.toml", 30, "origin = \"augmented\"");
    let corpus = tmp.path().join("corpus");
    run_ok(&["gen", "--config", path_str(&gen), "--out", path_str(&corpus)]);
    let pool = corpus.join("corpus.jsonl");
    let cfg = write(tmp.path(), "s.toml", &format!("[select]\npool = {:?}\n", path_str(&pool)));
    let out = tmp.path().join("sel");
    run_ok(&["select", "--method", "all", "--fraction", "0.5", "--config", path_str(&cfg), "--out", path_str(&out)]);
    assert_eq!(fs::read(out.join("selected.jsonl")).unwrap(), fs::read(&pool).unwrap());
}

#[test]
fn pipeline_from_grammars_to_paraphrase_selection() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let syn = dir.join("syn");
    let live = dir.join("live");
    let pool = dir.join("pool");
    let bg = dir.join("bg");
    let cfg = gen_config(dir, "configs/grammars/reminders_synthetic.toml", 80, "id_prefix = \"syn/\"");
    run_ok(&["gen", "--config", path_str(&cfg), "--out", path_str(&syn)]);
    let cfg = gen_config(dir, "configs/grammars/background.toml", 90, "id_prefix = \"bg/\"");
    run_ok(&["gen", "--config", path_str(&cfg), "--out", path_str(&bg)]);
    let cfg = gen_config(dir, "configs/grammars/reminders_live.toml", 60, "id_prefix = \"live/\"\norigin = \"annotated\"");
    run_ok(&["gen", "--config", path_str(&cfg), "--out", path_str(&live)]);
    let cfg = gen_config(dir, "configs/grammars/reminders_live.toml", 100, "id_prefix = \"pool/\"\norigin = \"unlabeled\"");
    run_ok(&["gen", "--config", path_str(&cfg), "--seed", "11", "--out", path_str(&pool)]);

    let config = write(
        dir,
        "run.toml",
        &format!(
            r#"seed = 3

[ssl]
annotated = ["live/corpus.jsonl"]
synthetic = ["syn/corpus.jsonl", "bg/corpus.jsonl"]
pool = "pool/corpus.jsonl"

[ssl.functionality]
name = "Reminders"
domain = "reminders"
intents = ["SetReminder", "CancelReminder"]
slot_types = ["Task", "Time", "Date"]

[train_para]
data = ["syn/corpus.jsonl", "bg/corpus.jsonl", "live/corpus.jsonl"]
grammars = [{:?}, {:?}, {:?}]
vocabulary = ["ssl/augmentation.jsonl"]
detector = {{ hidden = 16, epochs = 3 }}
margin = {{ dim = 10, epochs = 2 }}

[select]
pool = "ssl/augmentation.jsonl"
anchors = "live/corpus.jsonl"
model = "para/paraphrase_model.json"
"#,
            path_str(&repo_path("configs/grammars/reminders_synthetic.toml")),
            path_str(&repo_path("configs/grammars/reminders_live.toml")),
            path_str(&repo_path("configs/grammars/background.toml")),
        ),
    );
    let c = path_str(&config);
    run_ok(&["ssl", "--config", c, "--out", path_str(&dir.join("ssl"))]);
    let n = load_dataset(dir.join("ssl/augmentation.jsonl")).unwrap().len();
    assert!(n > 0);
    run_ok(&["train-para", "--config", c, "--out", path_str(&dir.join("para"))]);
    assert!(dir.join("para/pairs.jsonl").is_file());
    run_ok(&["select", "--method", "para", "--fraction", "0.5", "--config", c, "--out", path_str(&dir.join("sel"))]);
    let selected = load_dataset(dir.join("sel/selected.jsonl")).unwrap().len();
    assert_eq!(selected, n.div_ceil(2));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("sel/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["method"], "para");
}

#[test]
fn bench_smoke_writes_reports() {
    let tmp = TempDir::new().unwrap();
    let grammar = |name: &str| path_str(&repo_path(&format!("configs/grammars/{}", name))).to_string();
    let plan = write(
        tmp.path(),
        "plan.toml",
        &format!(
            r#"seed = 5
seeds = [1]
increments = [0.0, 0.5]
systems = ["baseline", "annotation", "annotation+ssl", "annotation+ssl+random"]

[[functionalities]]
synthetic_grammar = {:?}
live_grammar = {:?}
synthetic_size = 60
annotated_size = 60
test_size = 40
pool_size = 80

[functionalities.spec]
name = "Reminders"
domain = "reminders"
intents = ["SetReminder", "CancelReminder"]
slot_types = ["Task", "Time", "Date"]

[background]
grammar = {:?}
train_size = 80
pool_size = 20
"#,
            grammar("reminders_synthetic.toml"),
            grammar("reminders_live.toml"),
            grammar("background.toml"),
        ),
    );
    let out = tmp.path().join("bench");
    let run = run_ok(&["bench", "--config", path_str(&plan), "--out", path_str(&out), "--jobs", "2"]);
    let text = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(text.contains("Reminders"));
    assert_eq!(String::from_utf8_lossy(&run.stdout), text);
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    // header, four systems at increment 0, and all but the baseline at 0.5
    assert_eq!(csv.lines().count(), 1 + 4 + 3);
}
