use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fairchoice"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

fn small_config(dir: &Path, allocation: &str, choice: &str) -> PathBuf {
    let text = format!(
        r#"
allocation = {allocation}
choice = {choice}

[[agents]]
name = "a1"
feature = "f1"
target_proportion = 0.25
delta = 0.1

[[agents]]
name = "a2"
feature = "f2"
target_proportion = 0.25
delta = 0.1

[data]
source = "generated"

[data.generator]
n_items = 400
sample_size = 60
list_length = 20

[[data.generator.regimes]]
name = "r"
count = 40
mean = [0.5, 0.6]
stddev = [0.06, 0.08]
"#
    );
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn generate_default_writes_all_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gen");
    ok(&[
        "generate",
        s(&data("genspec_default.toml")),
        s(&out),
        "--quiet",
    ]);
    for f in [
        "recommendations.csv",
        "item_features.csv",
        "compatibilities.csv",
        "arrivals.csv",
        "manifest.toml",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert_eq!(rows(&out.join("recommendations.csv")), 25_000);
    assert_eq!(rows(&out.join("item_features.csv")), 5_000);
    assert_eq!(rows(&out.join("compatibilities.csv")), 1_000);
    assert_eq!(rows(&out.join("arrivals.csv")), 500);
}

#[test]
fn generate_seed_changes_content_not_shape() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["generate", s(&data("genspec_default.toml")), s(&a), "-q"]);
    ok(&[
        "generate",
        s(&data("genspec_default.toml")),
        s(&b),
        "-q",
        "--seed",
        "9",
    ]);
    let ra = fs::read_to_string(a.join("recommendations.csv")).unwrap();
    let rb = fs::read_to_string(b.join("recommendations.csv")).unwrap();
    assert_ne!(ra, rb);
    assert_eq!(ra.lines().count(), rb.lines().count());
    assert!(fs::read_to_string(b.join("manifest.toml"))
        .unwrap()
        .contains("seed = 9"));
}

#[test]
fn generate_rejects_list_longer_than_sample() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.toml");
    fs::write(&spec, "sample_size = 40\nlist_length = 50\n").unwrap();
    let out = run(&["generate", s(&spec), s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("list_length"));
}

#[test]
fn default_run_writes_five_files_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["run", s(&data("default.toml")), s(&a), "-q"]);
    ok(&["run", s(&data("default.toml")), s(&b), "-q"]);
    let files = [
        "steps.csv",
        "summary.csv",
        "allocation.csv",
        "fairness_series.csv",
        "manifest.toml",
    ];
    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let mut expected: Vec<String> = files.iter().map(|f| f.to_string()).collect();
    expected.sort();
    assert_eq!(names, expected);
    assert_eq!(rows(&a.join("steps.csv")), 500);
    for f in files {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "\"lottery\"", "\"ranked_pairs\"");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["run", s(&cfg), s(&a), "-q", "--seed", "1"]);
    ok(&["run", s(&cfg), s(&b), "-q", "--seed", "2"]);
    let ma = fs::read_to_string(a.join("manifest.toml")).unwrap();
    assert!(ma.contains("seed = 1"));
    assert_ne!(
        fs::read(a.join("steps.csv")).unwrap(),
        fs::read(b.join("steps.csv")).unwrap()
    );
}

#[test]
fn manifest_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "\"lottery\"", "\"ranked_pairs\"");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["run", s(&cfg), s(&a), "-q", "--seed", "5"]);
    ok(&["run", s(&a.join("manifest.toml")), s(&b), "-q"]);
    for f in ["steps.csv", "summary.csv", "manifest.toml"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn grid_fans_out_to_twelve_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(
        dir.path(),
        r#"["least_fair", "lottery", "weighted"]"#,
        r#"["rescoring", "borda", "copeland", "ranked_pairs"]"#,
    );
    let out = dir.path().join("grid");
    ok(&["run", s(&cfg), s(&out), "-q"]);
    let subdirs: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    assert_eq!(subdirs.len(), 12);
    for d in &subdirs {
        assert_eq!(rows(&d.join("steps.csv")), 40);
    }
    assert_eq!(rows(&out.join("grid_summary.csv")), 12);

    let summary = ok(&["summarize", s(&out)]);
    let text = String::from_utf8_lossy(&summary.stdout);
    assert_eq!(text.lines().count(), 13);
    assert!(text.contains("weighted_ranked_pairs"));
}

#[test]
fn summarize_recomputes_summary_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "\"least_fair\"", "\"borda\"");
    let out = dir.path().join("o");
    ok(&["run", s(&cfg), s(&out), "-q"]);
    let first = fs::read(out.join("summary.csv")).unwrap();
    let reports = fairchoice::runner::summarize(&out).unwrap();
    assert_eq!(reports.len(), 1);
    let mut recomputed = String::from("metric,value\n");
    for (m, v) in reports[0].summary.rows() {
        recomputed.push_str(&format!("{m},{v}\n"));
    }
    assert_eq!(String::from_utf8(first).unwrap(), recomputed);
}

#[test]
fn config_errors_exit_nonzero_with_key_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "\"lottery\"", "\"schulze\"");
    let out = run(&["run", s(&cfg), s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("choice") && err.contains("schulze"), "{err}");

    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("\"schulze\"", "\"borda\"")
        .replace("0.25", "1.25");
    fs::write(&cfg, text).unwrap();
    let out = run(&["run", s(&cfg), s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("agents[0]"));

    let out = run(&[
        "run",
        s(&dir.path().join("missing.toml")),
        s(&dir.path().join("o")),
    ]);
    assert!(!out.status.success());
}

#[test]
fn generated_files_replay_as_ingested_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "\"lottery\"", "\"copeland\"");
    let direct = dir.path().join("direct");
    ok(&["run", s(&cfg), s(&direct), "-q"]);

    // same generator as the inline table, written out then loaded back
    let spec = dir.path().join("spec.toml");
    let text = fs::read_to_string(&cfg).unwrap();
    let generator = text
        .split("[data.generator]")
        .nth(1)
        .unwrap()
        .replace("data.generator.", "");
    fs::write(&spec, generator).unwrap();
    let gen = dir.path().join("gen");
    ok(&["generate", s(&spec), s(&gen), "-q"]);

    let ingested = text.split("[data]").next().unwrap().to_owned()
        + "[data]\nsource = \"ingested\"\nrecommendations = \"gen/recommendations.csv\"\nfeatures = \"gen/item_features.csv\"\ncompatibilities = \"gen/compatibilities.csv\"\narrivals = \"gen/arrivals.csv\"\n";
    let icfg = dir.path().join("ingested.toml");
    fs::write(&icfg, ingested).unwrap();
    let replay = dir.path().join("replay");
    ok(&["run", s(&icfg), s(&replay), "-q"]);

    assert_eq!(
        fs::read(direct.join("steps.csv")).unwrap(),
        fs::read(replay.join("steps.csv")).unwrap()
    );
    assert_eq!(
        fs::read(direct.join("summary.csv")).unwrap(),
        fs::read(replay.join("summary.csv")).unwrap()
    );
}

#[test]
fn toy_fixture_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("toy");
    ok(&["run", s(&data("toy.toml")), s(&out), "-q"]);
    assert_eq!(rows(&out.join("steps.csv")), 36);
}
