use std::path::Path;
use std::process::{Command, Output};

fn hyperql(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hyperql"));
    cmd.args(args).env_remove("HYPERQL_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect()
}

const TINY_TRAIN: &[&str] = &[
    "--trainer.warmup",
    "200",
    "--trainer.eval_episodes",
    "2",
    "--trainer.critic_net.primary.widths",
    "[8,8]",
    "--trainer.critic_net.dynamic_hidden",
    "8",
    "--trainer.actor_hidden",
    "[8]",
];

#[test]
fn train_writes_one_row_per_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let mut args = vec![
        "train",
        "--steps",
        "900",
        "--trainer.eval_every",
        "300",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend(TINY_TRAIN);
    let o = hyperql(&args, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_rows(&out.join("metrics.csv")).len(), 3);
    assert!(out.join("config.resolved.json").exists());
    assert!(out.join("checkpoints/final.ckpt").exists());
    assert!(out.join("plots/eval_return_mean.svg").exists());
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = hyperql(&["prop1", "--instances", "3"], &[("HYPERQL_OUT", dir.path())]);
    assert!(o.status.success());
    let rows = csv_rows(&dir.path().join("prop1/metrics.csv"));
    assert_eq!(rows.len(), 9);
}

#[test]
fn overrides_reach_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    let o = hyperql(
        &[
            "prop1",
            "--prop1.alphas",
            "[0.1]",
            "--prop1.instances",
            "4",
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("config.resolved.json")).unwrap()).unwrap();
    assert_eq!(resolved["prop1"]["alphas"], serde_json::json!([0.1]));
    assert_eq!(resolved["prop1"]["seed"], 9);
    assert_eq!(csv_rows(&out.join("metrics.csv")).len(), 4);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"trainer": {"critic_lrr": 1e-3}}"#).unwrap();
    let o = hyperql(
        &[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("critic_lrr"));

    let o = hyperql(
        &[
            "prop1",
            "--prop1.instances",
            "\"many\"",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));

    let o = hyperql(
        &[
            "prop1",
            "--prop1.alphas",
            "[1.5]",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_plot_input_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.csv");
    let o = hyperql(
        &[
            "plot",
            "--input",
            missing.to_str().unwrap(),
            "--output",
            dir.path().join("x.svg").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "train",
        "--steps",
        "1200",
        "--trainer.eval_every",
        "600",
        "--trainer.critic_lr",
        "1e300",
        "--trainer.critic",
        "mlp-concat",
        "--trainer.critic_net.mlp_hidden",
        "[8]",
        "--out",
        dir.path().to_str().unwrap(),
    ];
    args.extend(TINY_TRAIN);
    let o = hyperql(&args, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn plot_renders_a_metrics_file() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("m.csv");
    std::fs::write(
        &csv_path,
        "step,seed,eval_return_mean\n0,0,-3\n0,1,-2\n10,0,-1\n10,1,0\n",
    )
    .unwrap();
    let svg = dir.path().join("m.svg");
    let o = hyperql(
        &[
            "plot",
            "--input",
            csv_path.to_str().unwrap(),
            "--output",
            svg.to_str().unwrap(),
        ],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
}
