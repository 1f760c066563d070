use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn glove(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glove"))
        .current_dir(dir)
        .arg("-q")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn cooccur_on_three_tokens_gives_six_records() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("abc.txt"), "a b c\n").unwrap();
    ok(glove(d, &["vocab", "--corpus", "abc.txt", "--min-count", "1", "-o", "vocab.txt"]));
    assert_eq!(fs::read_to_string(d.join("vocab.txt")).unwrap(), "a 1\nb 1\nc 1\n");
    let out = ok(glove(d, &["cooccur", "--corpus", "abc.txt", "--vocab", "vocab.txt", "-o", "c.bin", "--print"]));
    assert_eq!(stdout(&out), "a b 1\na c 0.5\nb a 1\nb c 1\nc a 0.5\nc b 1\n");
    assert_eq!(fs::metadata(d.join("c.bin")).unwrap().len(), 6 * 16);
    assert!(d.join("c.bin.meta.json").exists());
}

#[test]
fn identical_diff_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("v.txt"), "the 10\ncovid 3\n").unwrap();
    let out = ok(glove(d, &["diff", "--new", "v.txt", "--old", "v.txt"]));
    assert_eq!(stdout(&out), "");

    fs::write(d.join("new.txt"), "the 10\ncovid 3\ntiktok 2\n2024 2\nнаука 2\n").unwrap();
    let out = ok(glove(d, &["diff", "--new", "new.txt", "--old", "v.txt"]));
    assert_eq!(stdout(&out), "tiktok\n");
}

fn tiny_training_inputs(d: &Path) {
    fs::write(d.join("abc.txt"), "a b c\nc a b a\n").unwrap();
    ok(glove(d, &["vocab", "--corpus", "abc.txt", "--min-count", "1", "-o", "vocab.txt"]));
    ok(glove(d, &["cooccur", "--corpus", "abc.txt", "--vocab", "vocab.txt", "-o", "c.bin"]));
    ok(glove(d, &["shuffle", "--input", "c.bin", "-o", "s.bin"]));
}

#[test]
fn train_defaults_epochs_by_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_training_inputs(d);
    ok(glove(d, &["train", "--cooccur", "s.bin", "--vocab", "vocab.txt", "--dim", "300", "-o", "p.bin"]));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("p.bin.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["epochs"], 100);
    assert_eq!(m["config"]["eta"], 0.05);
    assert_eq!(m["config"]["seed"], 2024);
    assert_eq!(m["epoch_costs"].as_array().unwrap().len(), 100);
    assert_eq!(m["seeds"]["shuffle"], 2024);
    assert_eq!(m["vocab"]["sha256"].as_str().unwrap().len(), 64);

    ok(glove(d, &["train", "--cooccur", "s.bin", "--vocab", "vocab.txt", "--dim", "50", "--profile", "wiki-giga", "-o", "q.bin"]));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("q.bin.manifest.json")).unwrap()).unwrap();
    assert_eq!((m["config"]["epochs"].as_u64(), m["config"]["eta"].as_f64(), m["config"]["seed"].as_u64()), (Some(50), Some(0.075), Some(123)));
}

#[test]
fn train_is_reproducible_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_training_inputs(d);
    for out in ["p1.bin", "p2.bin"] {
        ok(glove(d, &["train", "--cooccur", "s.bin", "--vocab", "vocab.txt", "--dim", "4", "--epochs", "20", "-o", out]));
    }
    assert_eq!(fs::read(d.join("p1.bin")).unwrap(), fs::read(d.join("p2.bin")).unwrap());
    ok(glove(d, &["export", "--params", "p1.bin", "--vocab", "vocab.txt", "--mode", "concat", "-o", "v.txt"]));
    let text = fs::read_to_string(d.join("v.txt")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert_eq!(text.lines().next().unwrap().split(' ').count(), 1 + 8);
    let nn = ok(glove(d, &["neighbors", "--vectors", "v.txt", "--word", "a", "-k", "2"]));
    assert_eq!(stdout(&nn).lines().count(), 2);
}

#[test]
fn shuffle_seed_semantics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let words: Vec<String> = (0..40).map(|i| format!("t{}", i % 13)).collect();
    fs::write(d.join("c.txt"), words.join(" ") + "\n").unwrap();
    ok(glove(d, &["vocab", "--corpus", "c.txt", "--min-count", "1", "-o", "v.txt"]));
    ok(glove(d, &["cooccur", "--corpus", "c.txt", "--vocab", "v.txt", "-o", "c.bin"]));
    for (seed, out) in [("123", "a.bin"), ("123", "b.bin"), ("2024", "c2.bin")] {
        ok(glove(d, &["--seed", seed, "shuffle", "--input", "c.bin", "-o", out]));
    }
    let read = |f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read("a.bin"), read("b.bin"));
    assert_ne!(read("a.bin"), read("c2.bin"));
    let mut x: Vec<_> = read("a.bin").chunks(16).map(<[u8]>::to_vec).collect();
    let mut y: Vec<_> = read("c.bin").chunks(16).map(<[u8]>::to_vec).collect();
    x.sort();
    y.sort();
    assert_eq!(x, y);
}

fn pipeline_dir(extra_train: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(glove(d, &["synth", "--bytes", "30000", "-o", "corpus.txt", "--analogies", "q.txt"]));
    fs::write(
        d.join("pipeline.toml"),
        format!(
            "[corpus]\nlowercase = true\nstop_tokens = [\"<unk>\"]\n[[corpus.source]]\npath = \"corpus.txt\"\n\
             [vocab]\nmin_count = 3\n[train]\ndim = 8\nepochs = 3\n{extra_train}\n\
             [[eval]]\nname = \"q\"\nkind = \"analogy\"\npath = \"q.txt\"\n"
        ),
    )
    .unwrap();
    dir
}

#[test]
fn run_then_rerun_skips_everything() {
    let dir = pipeline_dir("");
    let d = dir.path();
    let first = ok(glove(d, &["--config", "pipeline.toml", "run"]));
    assert!(stdout(&first).lines().all(|l| l.ends_with("done")), "{}", stdout(&first));
    for f in ["vectors.txt", "eval/q.json", "run_manifest.json"] {
        assert!(d.join("work").join(f).exists(), "{f}");
    }
    let second = ok(glove(d, &["--config", "pipeline.toml", "run"]));
    let lines: Vec<_> = stdout(&second).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 6);
    assert!(lines.iter().all(|l| l.ends_with("cached")), "{lines:?}");

    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("work/run_manifest.json")).unwrap()).unwrap();
    assert!(m["stages"].as_array().unwrap().iter().all(|s| s["cache_hit"] == true));

    // A seed override is a different config: training reruns, counting does not.
    let third = ok(glove(d, &["--config", "pipeline.toml", "--seed", "7", "--workdir", "work", "run"]));
    let text = stdout(&third);
    assert!(text.contains("vocab    cached") && text.contains("train    done"), "{text}");
}

#[test]
fn exit_codes() {
    let dir = pipeline_dir("eta = -0.05");
    let d = dir.path();
    let neg = glove(d, &["--config", "pipeline.toml", "run"]);
    assert_eq!(neg.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&neg.stderr).contains("eta"));
    assert!(!d.join("work").exists());

    let good = pipeline_dir("");
    let g = good.path();
    fs::create_dir_all(g.join("work")).unwrap();
    fs::write(g.join("work/pipeline.lock"), "1\n").unwrap();
    assert_eq!(glove(g, &["--config", "pipeline.toml", "run"]).status.code(), Some(3));

    assert_eq!(glove(g, &["train", "--cooccur", "missing.bin", "--vocab", "missing.txt", "-o", "p.bin"]).status.code(), Some(2));
    assert_eq!(glove(g, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(glove(g, &["train", "--cooccur", "x", "--vocab", "y", "--eta", "-1", "-o", "p"]).status.code(), Some(1));
    assert_eq!(glove(g, &["--help"]).status.code(), Some(0));
}
