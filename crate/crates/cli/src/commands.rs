use crate::config::{EnvKind, ExperimentConfig, PlotSpec};
use crate::{checkpoint, plot, CliError};
use hyperql::fidelity::{cs_sweep as sweep, write_sweep_csv};
use hyperql::hypernet::init_audit as audit;
use hyperql::meta::{meta_train as train_meta, write_noise_csv, MetaError, MetaPolicyKind, MetaRow};
use hyperql::prop1::{run_prop1, write_prop1_csv, Corruption};
use hyperql::rl::{Env, Lqr, PointMass, TaskFamily};
use hyperql::trainer::{write_metrics_csv, TrainError, Trainer};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        if e.is_divergence() {
            CliError::Divergence(e.to_string())
        } else {
            CliError::Run(e.to_string())
        }
    }
}

impl From<MetaError> for CliError {
    fn from(e: MetaError) -> Self {
        match e {
            MetaError::Divergence { .. } => CliError::Divergence(e.to_string()),
            other => CliError::Run(other.to_string()),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn dirs(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out.join("checkpoints"))?;
    fs::create_dir_all(out.join("plots"))?;
    Ok(())
}

fn plot_metrics(out: &Path, spec: &PlotSpec) -> Result<(), CliError> {
    let text = fs::read_to_string(out.join("metrics.csv"))?;
    let svg = plot::plot_csv(&text, spec).map_err(|e| CliError::Run(e.to_string()))?;
    fs::write(out.join("plots").join(format!("{}.svg", spec.y)), svg)?;
    Ok(())
}

fn with_env<R>(cfg: &ExperimentConfig, f: &mut dyn FnMut(&dyn EnvRun) -> R) -> R {
    match cfg.env {
        EnvKind::Lqr => f(&Lqr::default_system()),
        EnvKind::PointMass => f(&PointMass::new(TaskFamily::Goal, vec![1.0, 0.0])),
    }
}

/// Object-safe bridge from the environment choice to the generic trainer.
trait EnvRun {
    fn train(&self, cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError>;
    fn sweep(&self, cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError>;
}

impl<E: Env + Clone> EnvRun for E {
    fn train(&self, cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
        let mut t = Trainer::new(cfg.trainer.clone(), self.clone());
        let rows = t.run(&mut |_| Ok(()))?;
        write_metrics_csv(&rows, create(&out.join("metrics.csv"))?)?;
        checkpoint::save(&t.checkpoint(), &out.join("checkpoints").join("final.ckpt"))
            .map_err(|e| CliError::Run(e.to_string()))?;
        if let Some(last) = rows.last() {
            println!(
                "step {} eval return {:.4} ± {:.4}",
                last.step, last.eval_return_mean, last.eval_return_std
            );
        }
        plot_metrics(out, &cfg.plot)
    }

    fn sweep(&self, cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
        let mut t = Trainer::new(cfg.trainer.clone(), self.clone());
        let records = sweep(&cfg.protocol, &mut t)?;
        write_sweep_csv(&records, &cfg.protocol.taus, create(&out.join("metrics.csv"))?)?;
        checkpoint::save(&t.checkpoint(), &out.join("checkpoints").join("final.ckpt"))
            .map_err(|e| CliError::Run(e.to_string()))?;
        for r in &records {
            println!(
                "step {} mean cs {:?} learnable {:?}",
                r.step,
                r.mean_cs(),
                r.learnable_frac
            );
        }
        if records.iter().any(|r| r.mean_cs().is_some()) {
            let spec = PlotSpec {
                y: "cs".into(),
                window: 1,
                ..cfg.plot.clone()
            };
            plot_metrics(out, &spec)?;
        }
        Ok(())
    }
}

pub fn train(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    dirs(out)?;
    with_env(cfg, &mut |e| e.train(cfg, out))
}

pub fn cs_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    dirs(out)?;
    with_env(cfg, &mut |e| e.sweep(cfg, out))
}

pub fn prop1(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let err = |e: hyperql::prop1::Prop1Error| CliError::Config(e.to_string());
    let rows = run_prop1(&cfg.prop1).map_err(err)?;
    write_prop1_csv(&rows, create(&out.join("metrics.csv"))?)?;
    let min = rows.iter().map(|r| r.advantage.closed).fold(f64::INFINITY, f64::min);
    println!("{} rows, min closed-form advantage {min:e}", rows.len());

    let mut counter = cfg.prop1.clone();
    counter.eta_multiplier = cfg.prop1.counterexample_multiplier;
    counter.corruption = Corruption::Along;
    let rows = run_prop1(&counter).map_err(err)?;
    write_prop1_csv(&rows, create(&out.join("counterexamples.csv"))?)?;
    let neg = rows.iter().filter(|r| r.advantage.closed < 0.0).count();
    println!(
        "{}x step: {neg} of {} rows with negative advantage",
        counter.eta_multiplier,
        rows.len()
    );
    Ok(())
}

fn write_meta_rows(rows: &[MetaRow], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["iteration", "sample_return", "eval_return"])?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            r.sample_return.to_string(),
            r.eval_return.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn meta_train(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    dirs(out)?;
    let (policy, rows, noise) = train_meta(&cfg.meta)?;
    write_meta_rows(&rows, &out.join("metrics.csv"))?;
    if !noise.is_empty() {
        write_noise_csv(&noise, create(&out.join("noise.csv"))?)?;
    }
    checkpoint::save(policy.params(), &out.join("checkpoints").join("final.ckpt"))
        .map_err(|e| CliError::Run(e.to_string()))?;
    if let Some(last) = rows.last() {
        println!("iteration {} eval return {:.4}", last.iteration, last.eval_return);
        let spec = PlotSpec {
            x: "iteration".into(),
            y: "eval_return".into(),
            iqr: false,
            ..cfg.plot.clone()
        };
        plot_metrics(out, &spec)?;
    }
    Ok(())
}

pub fn meta_variance(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let mut all = Vec::new();
    for kind in [MetaPolicyKind::ContextMlp, MetaPolicyKind::HyperContext] {
        let mut m = cfg.meta.clone();
        m.kind = kind;
        let (_, _, noise) = train_meta(&m)?;
        for r in &noise {
            println!("{} checkpoint {} cov {:?}", kind.label(), r.checkpoint, r.stats.cov);
        }
        all.extend(noise);
    }
    write_noise_csv(&all, create(&out.join("metrics.csv"))?)?;
    Ok(())
}

pub fn init_audit(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let a = &cfg.audit;
    let report = audit(
        a.state_dim,
        a.action_dim,
        a.hidden,
        &a.primary,
        a.samples,
        a.bins,
        a.seed,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let mut w = csv::Writer::from_writer(create(&out.join("metrics.csv"))?);
    w.write_record([
        "layer",
        "small_std",
        "default_std",
        "mlp_std",
        "tv_small_vs_mlp",
        "tv_default_vs_mlp",
    ])?;
    for l in &report.layers {
        w.write_record([
            l.layer.to_string(),
            l.small_std.to_string(),
            l.default_std.to_string(),
            l.mlp_std.to_string(),
            l.tv_small_vs_mlp.to_string(),
            l.tv_default_vs_mlp.to_string(),
        ])?;
    }
    w.flush()?;
    println!(
        "heads in interval: {}, max |w|/bound {:.4}, trunk std ratio {:.4}",
        report.heads_in_interval, report.head_bound_ratio, report.trunk_std_ratio
    );
    Ok(())
}

pub fn plot(input: &Path, output: Option<&Path>, spec: &PlotSpec) -> Result<(), CliError> {
    let text = fs::read_to_string(input).map_err(|e| CliError::MissingInput(format!("{}: {e}", input.display())))?;
    let svg = plot::plot_csv(&text, spec).map_err(|e| match e {
        plot::PlotError::MissingColumn(_) => CliError::MissingInput(e.to_string()),
        other => CliError::Run(other.to_string()),
    })?;
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => {
            let dir = input.parent().unwrap_or(Path::new(".")).join("plots");
            fs::create_dir_all(&dir)?;
            dir.join(format!("{}.svg", spec.y))
        }
    };
    fs::write(path, svg)?;
    Ok(())
}
