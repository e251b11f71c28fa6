use super::dynamic::{DynamicSpec, GroupKind};
use super::primary::{HyperNet, InitScheme, PrimaryConfig, HEAD_FIRST, HEAD_LATER, HEAD_LOG_STD};
use crate::nn::{init, Activation, Mlp};
use crate::rng::{stream_rng, uniform_vec};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AuditError {
    #[error("weight sample {0} is empty")]
    EmptySample(&'static str),
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

/// Total-variation distance `½ Σ |p_i - q_i|` between normalized histograms
/// that share `bins` equal-width bins over the pooled range.
pub fn weight_tv_distance(a: &[f64], b: &[f64], bins: usize) -> Result<f64, AuditError> {
    if a.is_empty() {
        return Err(AuditError::EmptySample("a"));
    }
    if b.is_empty() {
        return Err(AuditError::EmptySample("b"));
    }
    if bins == 0 {
        return Err(AuditError::NoBins);
    }
    let (lo, hi) = a
        .iter()
        .chain(b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let width = hi - lo;
    let hist = |xs: &[f64]| {
        let mut h = vec![0usize; bins];
        for &x in xs {
            let k = if width > 0.0 {
                (((x - lo) / width) * bins as f64) as usize
            } else {
                0
            };
            h[k.min(bins - 1)] += 1;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let l1: f64 = ha
        .iter()
        .zip(&hb)
        .map(|(&p, &q)| (p as f64 / na - q as f64 / nb).abs())
        .sum();
    Ok(0.5 * l1)
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Per dynamic layer comparison of generated weight matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerAudit {
    pub layer: usize,
    pub small_std: f64,
    pub default_std: f64,
    pub mlp_std: f64,
    pub tv_small_vs_mlp: f64,
    pub tv_default_vs_mlp: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitAudit {
    /// Every small-scheme head weight lies inside its interval.
    pub heads_in_interval: bool,
    /// Largest `|w| / bound` over all small-scheme head weights.
    pub head_bound_ratio: f64,
    /// Empirical std of small-scheme trunk weights over the closed-form
    /// `bound / sqrt(3)`, pooled across trunk matrices.
    pub trunk_std_ratio: f64,
    pub layers: Vec<LayerAudit>,
}

/// Generated dynamic weights at initialization for a state-conditioned
/// critic, under both primary schemes, against a stock MLP of the same shape.
pub fn init_audit(
    state_dim: usize,
    action_dim: usize,
    hidden: usize,
    config: &PrimaryConfig,
    samples: usize,
    bins: usize,
    seed: u64,
) -> Result<InitAudit, AuditError> {
    let spec = DynamicSpec::single_hidden(action_dim, hidden, 1);
    let small = HyperNet::new(
        state_dim,
        config.clone(),
        spec.clone(),
        InitScheme::Small,
        &mut stream_rng(seed, 0),
    );
    let stock = HyperNet::new(
        state_dim,
        config.clone(),
        spec.clone(),
        InitScheme::Default,
        &mut stream_rng(seed, 1),
    );
    let mlp = Mlp::new(
        &[action_dim, hidden, 1],
        Activation::Relu,
        Activation::Identity,
        &mut stream_rng(seed, 2),
    );

    let groups = spec.groups();
    let mut worst: f64 = 0.0;
    for (gi, group) in groups.iter().enumerate() {
        let bound = match group.kind {
            GroupKind::LogStd => HEAD_LOG_STD,
            _ if group.layer == 0 => HEAD_FIRST,
            _ => HEAD_LATER,
        };
        let w = small.params().get(small.head_indices()[gi]);
        for &x in w.data() {
            worst = worst.max(x.abs() / bound);
        }
    }

    let mut trunk = Vec::new();
    for i in (0..small.trunk_len()).step_by(2) {
        let t = small.params().get(i);
        let fan_in = t.shape()[0];
        let sd = init::uniform_std(init::kaiming_uniform_bound(fan_in, super::primary::TRUNK_GAIN));
        // Normalize by the closed form so matrices with different fan-in pool.
        trunk.extend(t.data().iter().map(|x| x / sd));
    }
    let trunk_std_ratio = std_dev(&trunk);

    let mut rng = stream_rng(seed, 3);
    let weight_groups: Vec<usize> = groups
        .iter()
        .enumerate()
        .filter(|(_, g)| g.kind == GroupKind::Weight)
        .map(|(i, _)| i)
        .collect();
    let mut small_w = vec![Vec::new(); weight_groups.len()];
    let mut stock_w = vec![Vec::new(); weight_groups.len()];
    for _ in 0..samples {
        let s = uniform_vec(&mut rng, state_dim, -1.0, 1.0);
        let pw = small.weights_for(&s)?;
        let sw = stock.weights_for(&s)?;
        for (k, &gi) in weight_groups.iter().enumerate() {
            small_w[k].extend_from_slice(&pw[gi]);
            stock_w[k].extend_from_slice(&sw[gi]);
        }
    }
    let mut layers = Vec::new();
    for (k, (pw, sw)) in small_w.iter().zip(&stock_w).enumerate() {
        let mw = mlp.weight(k).data();
        layers.push(LayerAudit {
            layer: k,
            small_std: std_dev(pw),
            default_std: std_dev(sw),
            mlp_std: std_dev(mw),
            tv_small_vs_mlp: weight_tv_distance(pw, mw, bins)?,
            tv_default_vs_mlp: weight_tv_distance(sw, mw, bins)?,
        });
    }
    Ok(InitAudit {
        heads_in_interval: worst <= 1.0,
        head_bound_ratio: worst,
        trunk_std_ratio,
        layers,
    })
}
