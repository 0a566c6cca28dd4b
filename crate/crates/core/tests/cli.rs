use std::fs;
use std::path::{Path, PathBuf};

use semtag::cli::run;
use semtag::data::{parse_corpus_str, split, write_context_embeddings, write_corpus};
use semtag::synthetic::{random_token_vectors, ToyCorpus};
use semtag::trainer::{evaluate, Tagger};
use semtag::Sentence;

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn semtag(args: &[&str], stdin: &str) -> Output {
    let mut argv = vec!["semtag"];
    argv.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(argv, &mut stdin.as_bytes(), &mut out, &mut err);
    Output { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_toy(dir: &Path, seed: u64, sentences: usize) -> (PathBuf, PathBuf, Vec<Sentence>) {
    let corpus = ToyCorpus { seed, num_sentences: sentences, ..ToyCorpus::default() }.generate();
    let (train, val) = split(&corpus, 0.2, seed).unwrap();
    let train_path = dir.join("train.tsv");
    let val_path = dir.join("val.tsv");
    write_corpus(fs::File::create(&train_path).unwrap(), &train).unwrap();
    write_corpus(fs::File::create(&val_path).unwrap(), &val).unwrap();
    (train_path, val_path, val)
}

fn train_toy(dir: &Path, out: &Path, epochs: &str) -> Output {
    let (train, val, _) = write_toy(dir, 3, 60);
    semtag(
        &[
            "train",
            "--corpus",
            p(&train),
            "--val-corpus",
            p(&val),
            "--emb-dim",
            "16",
            "--hidden-dim",
            "8",
            "--optimizer",
            "adam",
            "--lr",
            "0.01",
            "--batch-size",
            "5",
            "--epochs",
            epochs,
            "--seed",
            "1",
            "--out",
            p(out),
        ],
        "",
    )
}

#[test]
fn help_succeeds_everywhere() {
    for args in [
        vec!["--help"],
        vec!["train", "--help"],
        vec!["eval", "--help"],
        vec!["tag", "--help"],
        vec!["replicate", "--help"],
    ] {
        let out = semtag(&args, "");
        assert_eq!(out.code, 0, "{args:?}");
        assert!(out.stdout.contains("Usage"), "{args:?}");
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(semtag(&["train", "--epochs", "1"], "").code, 2);
    assert_eq!(semtag(&["train", "--optimizer", "rmsprop"], "").code, 2);
    assert_eq!(semtag(&["frobnicate"], "").code, 2);
    assert_eq!(semtag(&["tag"], "").code, 2);
    let out = semtag(&["train"], "");
    assert!(out.stderr.contains("--corpus"), "{}", out.stderr);
}

#[test]
fn data_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.tsv");
    let out = semtag(&["train", "--corpus", p(&missing), "--epochs", "1", "--out", p(dir.path())], "");
    assert_eq!(out.code, 1);
    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "token without tag\n").unwrap();
    assert_eq!(semtag(&["train", "--corpus", p(&bad), "--out", p(dir.path())], "").code, 1);
}

#[test]
fn train_tag_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let out = train_toy(dir.path(), &run_dir, "4");
    assert_eq!(out.code, 0, "{}", out.stderr);
    for file in ["curves.csv", "model.ckpt", "vocab.txt", "tags.txt"] {
        assert!(run_dir.join(file).is_file(), "{file} missing");
    }
    assert_eq!(fs::read_to_string(run_dir.join("curves.csv")).unwrap().lines().count(), 5);

    // tag the validation sentences, then score the tagged file
    let gold_path = dir.path().join("val.tsv");
    let gold = parse_corpus_str(&fs::read_to_string(&gold_path).unwrap()).unwrap();
    let raw: String = gold.iter().map(|s| s.tokens.join(" ") + "\n").collect();
    let tagged = semtag(&["tag", "--checkpoint", p(&run_dir)], &raw);
    assert_eq!(tagged.code, 0, "{}", tagged.stderr);
    let predicted = parse_corpus_str(&tagged.stdout).unwrap();
    assert_eq!(predicted.len(), gold.len());
    for (g, q) in gold.iter().zip(&predicted) {
        assert_eq!(g.tokens, q.tokens);
    }

    let pred_path = dir.path().join("pred.tsv");
    fs::write(&pred_path, &tagged.stdout).unwrap();
    let recount = semtag(&["eval", "--corpus", p(&gold_path), "--predictions", p(&pred_path)], "");
    assert_eq!(recount.code, 0, "{}", recount.stderr);
    let direct = semtag(&["eval", "--checkpoint", p(&run_dir), "--corpus", p(&gold_path)], "");
    assert_eq!(direct.code, 0, "{}", direct.stderr);
    let accuracy =
        |text: &str| -> f64 { text.lines().find_map(|l| l.strip_prefix("accuracy\t")).unwrap().parse().unwrap() };
    assert_eq!(accuracy(&recount.stdout), accuracy(&direct.stdout));

    let (tagger, _) = Tagger::load(&run_dir).unwrap();
    let encoded = tagger.encode_sentences(&gold).unwrap();
    assert_eq!(evaluate(&tagger.model, &encoded).unwrap().accuracy, accuracy(&direct.stdout));
}

#[test]
fn empty_tag_input_gives_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    assert_eq!(train_toy(dir.path(), &run_dir, "1").code, 0);
    let out = semtag(&["tag", "--checkpoint", p(&run_dir)], "");
    assert_eq!((out.code, out.stdout.as_str()), (0, ""));
    let out = semtag(&["tag", "--checkpoint", p(&run_dir)], "\n  \n");
    assert_eq!((out.code, out.stdout.as_str()), (0, ""));
}

#[test]
fn tag_files_and_unknown_words() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    assert_eq!(train_toy(dir.path(), &run_dir, "1").code, 0);
    let input = dir.path().join("raw.txt");
    let output = dir.path().join("tagged.tsv");
    fs::write(&input, "w1 never-seen w2\nw3\n").unwrap();
    let out = semtag(&["tag", "--checkpoint", p(&run_dir), "--input", p(&input), "--output", p(&output)], "");
    assert_eq!(out.code, 0, "{}", out.stderr);
    let tagged = parse_corpus_str(&fs::read_to_string(&output).unwrap()).unwrap();
    assert_eq!(tagged.iter().map(Sentence::len).collect::<Vec<_>>(), vec![3, 1]);
}

#[test]
fn curves_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(train_toy(dir.path(), &a, "3").code, 0);
    assert_eq!(train_toy(dir.path(), &b, "3").code, 0);
    for file in ["curves.csv", "model.ckpt", "vocab.txt", "tags.txt"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file} differs");
    }
}

#[test]
fn mismatched_vocabulary_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    assert_eq!(train_toy(dir.path(), &run_dir, "1").code, 0);
    fs::write(run_dir.join("vocab.txt"), "<unk>\nonly\n").unwrap();
    let out = semtag(&["tag", "--checkpoint", p(&run_dir)], "w1 w2\n");
    assert_eq!(out.code, 1);
    assert!(out.stderr.starts_with("error:"), "{}", out.stderr);
    fs::write(run_dir.join("model.ckpt"), "not a checkpoint\n").unwrap();
    assert_eq!(semtag(&["tag", "--checkpoint", p(&run_dir)], "w1\n").code, 1);
}

#[test]
fn external_experiment_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = ToyCorpus { seed: 5, num_sentences: 30, ..ToyCorpus::default() }.generate();
    let embedded = random_token_vectors(&corpus, 12, 5);
    let emb_path = dir.path().join("toy.vec");
    write_context_embeddings(fs::File::create(&emb_path).unwrap(), &["random".into()], &embedded).unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(
        &cfg,
        "[experiment 7]\noptimizer = sgd\nepochs = 2\nbatch_size = 5\nemb_dim = 12\nhidden_dim = 6\nembedding_mode = external\n",
    )
    .unwrap();
    let run_dir = dir.path().join("ext");
    let out = semtag(
        &["train", "--config", p(&cfg), "--experiment", "7", "--embeddings", p(&emb_path), "--out", p(&run_dir)],
        "",
    );
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.starts_with("experiment 7: 2 epochs"), "{}", out.stdout);

    let eval = semtag(&["eval", "--checkpoint", p(&run_dir), "--embeddings", p(&emb_path)], "");
    assert_eq!(eval.code, 0, "{}", eval.stderr);
    let tagged = semtag(&["tag", "--checkpoint", p(&run_dir), "--embeddings", p(&emb_path)], "");
    assert_eq!(tagged.code, 0, "{}", tagged.stderr);
    assert_eq!(parse_corpus_str(&tagged.stdout).unwrap().len(), corpus.len());
}

#[test]
fn replicate_runs_selected_experiments() {
    let dir = tempfile::tempdir().unwrap();
    let (train, val, _) = write_toy(dir.path(), 4, 40);
    let out_dir = dir.path().join("rep");
    let out = semtag(
        &[
            "replicate",
            "--corpus",
            p(&train),
            "--val-corpus",
            p(&val),
            "--experiment",
            "1",
            "--experiment",
            "7",
            "--epochs",
            "2",
            "--out",
            p(&out_dir),
        ],
        "",
    );
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stderr.contains("skipping experiment 7"));
    assert!(out_dir.join("experiment-1").join("curves.csv").is_file());
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.lines().nth(1).unwrap().starts_with("1,adam,2,5,50,8,"));
}
