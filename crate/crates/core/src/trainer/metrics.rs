use std::io::Write;

/// One evaluation checkpoint of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub eval_return_mean: f64,
    pub eval_return_std: f64,
    /// Mean TD loss over updates since the previous row.
    pub td_loss: Option<f64>,
    /// Mean actor surrogate over actor steps since the previous row.
    pub surrogate: Option<f64>,
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "eval_return_mean", "eval_return_std", "td_loss", "surrogate"])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.eval_return_mean.to_string(),
            r.eval_return_std.to_string(),
            opt(r.td_loss),
            opt(r.surrogate),
        ])?;
    }
    w.flush()?;
    Ok(())
}
