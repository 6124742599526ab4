//! End-to-end pipeline through the command-line surface:
//! synth -> train -> eval -> sweep -> report.

use std::fs;
use std::path::Path;

use dimcon::cli::dispatch;

fn run(args: &[&str]) -> i32 {
    dispatch(args.iter().map(|s| s.to_string()))
}

fn write(path: &Path, content: &str) {
    fs::write(path, content).unwrap();
}

#[test]
fn synth_train_eval_sweep_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // synth
    write(
        &root.join("spec.cfg"),
        "clusters = 3\nvocab_size = 120\nlen_lo = 5\nlen_hi = 9\nsentences = 96\nscored_pairs = 40\npositive_pairs = 40\nseed = 3\n",
    );
    let data_dir = root.join("data");
    assert_eq!(
        run(&[
            "synth",
            "--spec",
            root.join("spec.cfg").to_str().unwrap(),
            "--out",
            data_dir.to_str().unwrap(),
        ]),
        0
    );
    for f in ["corpus.txt", "dev_pairs.tsv", "positive_pairs.tsv", "thesaurus.tsv", "spec.resolved"] {
        assert!(data_dir.join(f).exists(), "missing {f}");
    }

    // train on the synthetic outputs
    write(
        &root.join("train.cfg"),
        "objective = barlow\nlambda_bt = 0.005\naugment = shuffle\np_s = 0.3\nlearning_rate = 0.001\nbatch_size = 16\nepochs = 2\neval_every = 4\nseed = 1\nd_tok = 8\nhidden_dims = 12\nd_e = 6\nproj_dim = 10\n",
    );
    let run_dir = root.join("run");
    assert_eq!(
        run(&[
            "train",
            "--config",
            root.join("train.cfg").to_str().unwrap(),
            "--corpus",
            data_dir.join("corpus.txt").to_str().unwrap(),
            "--dev",
            data_dir.join("dev_pairs.tsv").to_str().unwrap(),
            "--out",
            run_dir.to_str().unwrap(),
        ]),
        0
    );
    let ckpt = run_dir.join("checkpoint.dimcon");
    let bytes = fs::read(&ckpt).unwrap();
    assert_eq!(&bytes[..7], b"DIMCON1");
    assert!(run_dir.join("vocab.txt").exists());
    assert!(run_dir.join("config.resolved").exists());
    let history = fs::read_to_string(run_dir.join("history.csv")).unwrap();
    assert!(history.starts_with("step,train_loss,dev_spearman\n"));

    // eval: alignment of identical sentence pairs is exactly zero
    let corpus = fs::read_to_string(data_dir.join("corpus.txt")).unwrap();
    let mut identical = String::new();
    for line in corpus.lines().take(6) {
        identical.push_str(&format!("{line}\t{line}\t5.0\n"));
    }
    write(&root.join("identical.tsv"), &identical);
    let eval_dir = root.join("eval");
    assert_eq!(
        run(&[
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--pairs",
            root.join("identical.tsv").to_str().unwrap(),
            "--metrics",
            "align",
            "--out",
            eval_dir.to_str().unwrap(),
        ]),
        0
    );
    let metrics = fs::read_to_string(eval_dir.join("metrics.csv")).unwrap();
    assert!(metrics.contains("align,0\n"), "metrics: {metrics}");

    // eval with all metrics on the real dev pairs
    let eval_all = root.join("eval_all");
    assert_eq!(
        run(&[
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--pairs",
            data_dir.join("dev_pairs.tsv").to_str().unwrap(),
            "--metrics",
            "sts,align,unif,hist",
            "--out",
            eval_all.to_str().unwrap(),
        ]),
        0
    );
    assert!(eval_all.join("histogram.csv").exists());
    let metrics = fs::read_to_string(eval_all.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4, "metrics: {metrics}");

    // sweep: tiny grid over 2 learning rates x 2 lambda values
    write(
        &root.join("space.cfg"),
        &format!(
            "corpus = {}\ndev = {}\nobjective = barlow\naugment = shuffle\nbatch_size = 16\nepochs = 1\neval_every = 4\nd_tok = 8\nhidden_dims = 12\nd_e = 6\nproj_dim = 10\nlearning_rates = 0.001,0.002\naugment_grid = 0.3\nlambda_bt_grid = 0.005,0.01\n",
            data_dir.join("corpus.txt").display(),
            data_dir.join("dev_pairs.tsv").display(),
        ),
    );
    let sweep_dir = root.join("sweep");
    assert_eq!(
        run(&[
            "sweep",
            "--space",
            root.join("space.cfg").to_str().unwrap(),
            "--strategy",
            "grid",
            "--seed",
            "11",
            "--out",
            sweep_dir.to_str().unwrap(),
            "--jobs",
            "2",
        ]),
        0
    );
    let trials = fs::read_to_string(sweep_dir.join("trials.tsv")).unwrap();
    assert_eq!(trials.lines().count(), 1 + 4, "trials: {trials}");
    assert!(trials.starts_with("trial_id\tconfig\tbest_dev_spearman\tbest_step\tseconds\n"));

    // report grouped by lambda_bt
    let report_path = root.join("report.csv");
    assert_eq!(
        run(&[
            "report",
            "--trials",
            sweep_dir.join("trials.tsv").to_str().unwrap(),
            "--group-by",
            "lambda_bt",
            "--out",
            report_path.to_str().unwrap(),
        ]),
        0
    );
    let report = fs::read_to_string(&report_path).unwrap();
    let lines: Vec<&str> = report.trim_end().lines().collect();
    assert_eq!(lines[0], "group,max,q75,q50");
    assert_eq!(lines.len(), 3, "one row per lambda value: {report}");

    // identical sweep rerun reproduces the result file byte for byte,
    // modulo the wall-clock column
    let sweep_dir2 = root.join("sweep2");
    assert_eq!(
        run(&[
            "sweep",
            "--space",
            root.join("space.cfg").to_str().unwrap(),
            "--strategy",
            "grid",
            "--seed",
            "11",
            "--out",
            sweep_dir2.to_str().unwrap(),
        ]),
        0
    );
    let strip_seconds = |text: &str| -> String {
        text.lines()
            .map(|l| l.rsplit_once('\t').map(|(head, _)| head.to_string()).unwrap_or_else(|| l.to_string()))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let trials2 = fs::read_to_string(sweep_dir2.join("trials.tsv")).unwrap();
    assert_eq!(strip_seconds(&trials), strip_seconds(&trials2));
}

#[test]
fn train_rejects_missing_dev_flag() {
    assert_ne!(
        run(&["train", "--config", "c.cfg", "--corpus", "c.txt", "--out", "o"]),
        0
    );
}

#[test]
fn eval_rejects_unknown_metric() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nothing.dimcon");
    assert_ne!(
        run(&[
            "eval",
            "--checkpoint",
            path.to_str().unwrap(),
            "--pairs",
            "p.tsv",
            "--metrics",
            "sts,bogus",
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ]),
        0
    );
}

#[test]
fn sweep_random_requires_budget() {
    assert_ne!(
        run(&[
            "sweep",
            "--space",
            "s.cfg",
            "--strategy",
            "random",
            "--seed",
            "1",
            "--out",
            "o",
        ]),
        0
    );
}
