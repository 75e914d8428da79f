use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use topp_hmm::generators::make_weather_hmm;
use topp_hmm::model_io::read_model;

fn topp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topp-hmm")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &TempDir, name: &str, args: &[&str]) -> std::path::PathBuf {
    let out = dir.path().join(name);
    let mut full = vec!["generate"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["--out", path_str(&out)]);
    let o = topp(&full);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn generate_weather_round_trips_exactly() {
    let dir = TempDir::new().unwrap();
    let path = generate(&dir, "w.json", &["weather"]);
    assert_eq!(read_model(&path).unwrap(), make_weather_hmm());
}

#[test]
fn generate_uniform_800() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("u.json");
    let o = topp(&["generate", "uniform", "--states", "800", "--out", path_str(&out)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("states: 800"));
    let h = read_model(&out).unwrap();
    assert_eq!(h.n_states(), 800);
    assert!(h.transition().as_slice().iter().all(|&x| x == 1.0 / 800.0));
}

#[test]
fn generate_bell_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = generate(&dir, "a.json", &["bell", "--seed", "7", "--states", "100"]);
    let b = generate(&dir, "b.json", &["bell", "--seed", "7", "--states", "100"]);
    let c = generate(&dir, "c.json", &["bell", "--seed", "8", "--states", "100"]);
    let (a, b, c) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), std::fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn generate_rejects_bad_parameters() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.json");
    assert_eq!(topp(&["generate", "uniform", "--states", "1", "--out", path_str(&out)]).status.code(), Some(2));
    assert_eq!(topp(&["generate", "sideways", "--out", path_str(&out)]).status.code(), Some(2));
    let unwritable = dir.path().join("missing").join("x.json");
    assert_eq!(topp(&["generate", "weather", "--out", path_str(&unwritable)]).status.code(), Some(2));
}

#[test]
fn train_small_corpus() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("c.txt");
    std::fs::write(&corpus, "a b a b").unwrap();
    let out = dir.path().join("lm.json");
    let o = topp(&["train", path_str(&corpus), "--out", path_str(&out)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("vocabulary: 2"));
    let h = read_model(&out).unwrap();
    assert_eq!(h.n_states(), 2);
    assert_eq!(h.observation().as_slice(), &[1.0, 0.0, 0.0, 1.0]);
}

#[test]
fn train_lowercase_merges_case() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("c.txt");
    std::fs::write(&corpus, "The cat saw the dog").unwrap();
    let out = dir.path().join("lm.json");
    let plain = topp(&["train", path_str(&corpus), "--out", path_str(&out)]);
    assert!(stdout(&plain).contains("vocabulary: 5"));
    let lower = topp(&["train", path_str(&corpus), "--lowercase", "--out", path_str(&out)]);
    assert!(stdout(&lower).contains("vocabulary: 4"));
}

#[test]
fn train_empty_corpus_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("empty.txt");
    std::fs::write(&corpus, " \n\t").unwrap();
    let out = dir.path().join("lm.json");
    assert_eq!(topp(&["train", path_str(&corpus), "--out", path_str(&out)]).status.code(), Some(2));
    assert_eq!(topp(&["train", "/nonexistent/corpus.txt", "--out", path_str(&out)]).status.code(), Some(2));
}

#[test]
fn truncate_weather_matches_published_top_07_table() {
    let dir = TempDir::new().unwrap();
    let model = generate(&dir, "w.json", &["weather"]);
    let out = dir.path().join("w07.json");
    let o = topp(&["truncate", path_str(&model), "-p", "0.7", "--out", path_str(&out)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("transition non-zeros: 19"));
    let q = read_model(&out).unwrap();
    let s = 1.0 / 7.0;
    let expected = [
        [3.0 * s, 0.25, 3.0 * s, 0.4, 0.0, 0.0],
        [2.0 * s, 0.25, 2.0 * s, 1.0 / 3.0, 2.0 * s, 2.0 * s],
        [0.0, 0.0, 2.0 * s, 0.0, 0.0, 0.0],
        [2.0 * s, 0.0, 0.0, 4.0 / 15.0, 0.0, 0.0],
        [0.0, 0.25, 0.0, 0.0, 2.0 * s, 3.0 * s],
        [0.0, 0.25, 0.0, 0.0, 3.0 * s, 2.0 * s],
    ];
    for (i, row) in expected.iter().enumerate() {
        for (j, &e) in row.iter().enumerate() {
            assert!((q.transition().get(i, j) - e).abs() < 1e-12, "({i}, {j})");
        }
    }
}

#[test]
fn truncate_bell_is_sparse() {
    let dir = TempDir::new().unwrap();
    let model = generate(&dir, "b.json", &["bell"]);
    let o = topp(&["truncate", path_str(&model), "-p", "0.9"]);
    assert!(o.status.success());
    let line = stdout(&o).lines().find(|l| l.starts_with("transition sparsity")).unwrap().to_owned();
    let s: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(s >= 0.99, "{line}");
}

#[test]
fn truncate_with_p_one_keeps_everything() {
    let dir = TempDir::new().unwrap();
    let model = generate(&dir, "w.json", &["weather"]);
    let o = topp(&["truncate", path_str(&model), "-p", "1"]);
    assert!(stdout(&o).contains("transition sparsity: 0.000000"));
    assert_eq!(topp(&["truncate", path_str(&model), "-p", "0"]).status.code(), Some(2));
}

#[test]
fn analyze_reports_bounds() {
    let dir = TempDir::new().unwrap();
    let weather = generate(&dir, "w.json", &["weather"]);
    let o = stdout(&topp(&["analyze", path_str(&weather), "-p", "0.9"]));
    let gamma: f64 = o.lines().find_map(|l| l.strip_prefix("gamma: ")).unwrap().parse().unwrap();
    assert!((gamma - 0.6).abs() < 1e-12);
    let bound: f64 = o.split("mixing bound ").nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((bound - 1.0 / 6.0).abs() < 1e-12);

    let uniform = generate(&dir, "u.json", &["uniform", "--states", "10"]);
    let o = stdout(&topp(&["analyze", path_str(&uniform), "-p", "0.7"]));
    let gamma: f64 = o.lines().find_map(|l| l.strip_prefix("gamma: ")).unwrap().parse().unwrap();
    assert!((gamma - 1.0).abs() < 1e-12);
    let bound: f64 = o.split("mixing bound ").nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((bound - 0.3).abs() < 1e-12);
}

#[test]
fn analyze_identity_has_no_guarantee() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("id.json");
    std::fs::write(
        &path,
        r#"{"version": 1, "n_states": 2, "n_obs": 1, "prior": [0.5, 0.5],
            "transition": [[1, 0], [0, 1]], "observation": [[1, 1]]}"#,
    )
    .unwrap();
    let o = topp(&["analyze", path_str(&path)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("gamma: 0\n"));
    assert!(text.contains("no mixing guarantee"));
    assert!(text.contains("mixing bound none"));
}

#[test]
fn run_emits_deterministic_csv() {
    let base = ["run", "--kind", "uniform", "--states", "800", "-p", "0.9,0.5", "--repetitions", "1"];
    let a = stdout(&topp(&base));
    let b = stdout(&topp(&base));
    let strip_times = |s: &str| -> Vec<String> {
        s.lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f[7] = "";
                f[8] = "";
                if f[0] == "summary" {
                    f[16] = "";
                }
                f.join(",")
            })
            .collect()
    };
    assert_eq!(strip_times(&a), strip_times(&b));

    let summary: Vec<&str> = a.lines().filter(|l| l.starts_with("summary,uniform,0.9,")).collect();
    assert_eq!(summary.len(), 1);
    let tv_final: f64 = summary[0].split(',').nth(13).unwrap().parse().unwrap();
    assert!((tv_final - 0.099).abs() < 0.005);
}

#[test]
fn run_horizon_one_exact() {
    let o = topp(&["run", "--kind", "weather", "--horizon", "1", "-p", "1", "--repetitions", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let summary = text.lines().find(|l| l.starts_with("summary")).unwrap();
    assert!(summary.split(',').nth(13).unwrap().parse::<f64>().unwrap() < 1e-12);
}

#[test]
fn run_writes_failure_rows_and_continues() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r.csv");
    let o = topp(&[
        "run", "--kind", "uniform", "--states", "50", "-p", "0.5,1", "--horizon", "20", "--obs-period", "1",
        "--repetitions", "1", "--seed", "1", "--out", path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.lines().any(|l| l.starts_with("failure,uniform,0.5,")));
    assert!(text.lines().any(|l| l.starts_with("summary,uniform,1.0,")));
}

#[test]
fn run_from_model_file_in_message_mode() {
    let dir = TempDir::new().unwrap();
    let model = generate(&dir, "w.json", &["weather"]);
    let o = topp(&["run", "--model", path_str(&model), "--mode", "message", "--repetitions", "1", "--horizon", "5"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("summary,w,0.5,message,"));
}

#[test]
fn run_input_errors() {
    assert_eq!(topp(&["run"]).status.code(), Some(2));
    assert_eq!(topp(&["run", "--kind", "weather", "--horizon", "0"]).status.code(), Some(2));
    assert_eq!(topp(&["run", "--kind", "weather", "-p", "1.5"]).status.code(), Some(2));
    assert_eq!(topp(&["run", "--model", "/nonexistent.json"]).status.code(), Some(2));
}
