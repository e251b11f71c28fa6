//! Learning-rate bound for actor steps taken with an inexact action
//! gradient, checked on quadratic bandits where every quantity is exact.
//!
//! Bandit: states `s ~ U[-1, 1]^{n_s}`, `Q(s, a) = -(a - T s)ᵀ M (a - T s)`,
//! policy `a = Φ s + σ ε`. With `Σ = E[s sᵀ] = I/3`,
//! `J(Φ) = E Q = -tr(M (Φ - T) Σ (Φ - T)ᵀ) - σ² tr(M)` and the averaged
//! policy gradient of `∇_a Q` is `-2 M (Φ - T) Σ`.

use crate::rng::{normal, normals, stream_rng, StreamRng};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[cfg(test)]
mod tests;

#[derive(Debug, Error, PartialEq)]
pub enum Prop1Error {
    #[error("alpha must lie in [0, 1), got {0}")]
    Alpha(f64),
    #[error("stationary instance: the averaged true gradient vanishes")]
    Stationary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BanditInstance {
    /// Positive definite curvature `[n_a, n_a]`.
    pub m: DMatrix<f64>,
    /// Optimal linear map `[n_a, n_s]`.
    pub t: DMatrix<f64>,
    /// Policy noise std.
    pub sigma: f64,
}

/// Lipschitz and norm constants entering the step-size bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants {
    pub kappa_q: f64,
    pub kappa_mu: f64,
    pub sigma_q: f64,
    pub sigma_mu: f64,
}

impl BanditInstance {
    /// `M = Uᵀ diag(λ) U` with `λ ~ U[0.5, 2]`, `T ~ N(0, 1)`,
    /// `σ ~ U[0.05, 0.5]`.
    pub fn random(n_s: usize, n_a: usize, rng: &mut StreamRng) -> Self {
        let g = DMatrix::from_fn(n_a, n_a, |_, _| normal(rng));
        let u = g.qr().q();
        let lambda = DVector::from_fn(n_a, |_, _| rng.random_range(0.5..2.0));
        let m = u.transpose() * DMatrix::from_diagonal(&lambda) * &u;
        let m = (&m + m.transpose()) * 0.5;
        Self {
            m,
            t: DMatrix::from_fn(n_a, n_s, |_, _| normal(rng)),
            sigma: rng.random_range(0.05..0.5),
        }
    }

    pub fn n_s(&self) -> usize {
        self.t.ncols()
    }

    pub fn n_a(&self) -> usize {
        self.t.nrows()
    }

    /// Second moment of the uniform state law on `[-1, 1]^{n_s}`.
    pub fn state_moment(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n_s(), self.n_s()) / 3.0
    }

    pub fn sample_state(&self, rng: &mut StreamRng) -> DVector<f64> {
        DVector::from_fn(self.n_s(), |_, _| rng.random_range(-1.0..=1.0))
    }

    pub fn q(&self, s: &DVector<f64>, a: &DVector<f64>) -> f64 {
        let d = a - &self.t * s;
        -d.dot(&(&self.m * &d))
    }

    pub fn grad_q(&self, s: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
        -(&self.m * (a - &self.t * s)) * 2.0
    }

    /// Expected value `J(Φ)`.
    pub fn objective(&self, phi: &DMatrix<f64>) -> f64 {
        let d = phi - &self.t;
        -(&self.m * &d * self.state_moment() * d.transpose()).trace() - self.sigma.powi(2) * self.m.trace()
    }

    /// Closed-form averaged gradient of `∇_a Q`.
    pub fn true_avg_gradient(&self, phi: &DMatrix<f64>) -> DMatrix<f64> {
        -(&self.m * (phi - &self.t) * self.state_moment()) * 2.0
    }

    /// Monte-Carlo `E_s E_ε [∇_Φ μ · f(s, μ)] = E[f(s, Φs + σε) sᵀ]`.
    pub fn avg_policy_gradient_mc(
        &self,
        phi: &DMatrix<f64>,
        f: &dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
        samples: usize,
        rng: &mut StreamRng,
    ) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.n_a(), self.n_s());
        for _ in 0..samples {
            let s = self.sample_state(rng);
            let eps = DVector::from_vec(normals(rng, self.n_a()));
            let a = phi * &s + eps * self.sigma;
            acc += f(&s, &a) * s.transpose();
        }
        acc / samples as f64
    }

    /// `κ_q = 2‖M‖₂`, `κ_μ = 0`, `σ_μ = sup ‖s‖ = √n_s` over the cube, and
    /// `σ_q` bounded over states in the cube and actions within three noise
    /// stds of the mean.
    pub fn constants(&self, phi: &DMatrix<f64>) -> Constants {
        let m_norm = spectral_norm(&self.m);
        let sigma_mu = (self.n_s() as f64).sqrt();
        let reach = spectral_norm(&(phi - &self.t)) * sigma_mu + 3.0 * self.sigma * (self.n_a() as f64).sqrt();
        Constants {
            kappa_q: 2.0 * m_norm,
            kappa_mu: 0.0,
            sigma_q: 2.0 * m_norm * reach,
            sigma_mu,
        }
    }
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// `(η_derivation, η_half_k)` with `K = κ_q σ_μ + κ_μ σ_q`:
/// `η_derivation = 2 (1 - α) / (K² (1 + α)²)` and
/// `η_half_k = (1 - α) / (k̃ (1 + α)²)` with `k̃ = K / 2`.
pub fn eta_bound(alpha: f64, c: &Constants) -> Result<(f64, f64), Prop1Error> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Prop1Error::Alpha(alpha));
    }
    let k = c.kappa_q * c.sigma_mu + c.kappa_mu * c.sigma_q;
    let shrink = (1.0 - alpha) / (1.0 + alpha).powi(2);
    Ok((2.0 * shrink / (k * k), shrink / (0.5 * k)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    Along,
    Against,
    Random,
    Orthogonal,
}

impl Corruption {
    pub const ALL: [Corruption; 4] = [
        Corruption::Along,
        Corruption::Against,
        Corruption::Random,
        Corruption::Orthogonal,
    ];
}

/// Gradient field `g(s, a) = ∇_a Q(s, a) + D Σ⁻¹ s`, whose averaged
/// gradient is exactly `∇̄Q + D`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorruptedField {
    pub d: DMatrix<f64>,
    /// `‖∇̄g - ∇̄Q‖ / ‖∇̄Q‖` recomputed from the field.
    pub realized_alpha: f64,
}

impl CorruptedField {
    pub fn eval(&self, inst: &BanditInstance, s: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
        inst.grad_q(s, a) + &self.d * s * 3.0
    }

    pub fn avg_gradient(&self, inst: &BanditInstance, phi: &DMatrix<f64>) -> DMatrix<f64> {
        inst.true_avg_gradient(phi)
            + &self.d * inst.state_moment().try_inverse().expect("Σ = I/3") * inst.state_moment()
    }
}

pub fn corrupt_gradient(
    inst: &BanditInstance,
    phi: &DMatrix<f64>,
    alpha: f64,
    how: Corruption,
    rng: &mut StreamRng,
) -> Result<CorruptedField, Prop1Error> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Prop1Error::Alpha(alpha));
    }
    let g = inst.true_avg_gradient(phi);
    let norm = g.norm();
    if norm <= 1e-12 {
        return Err(Prop1Error::Stationary);
    }
    let unit = &g / norm;
    let dir = match how {
        Corruption::Along => unit.clone(),
        Corruption::Against => -unit.clone(),
        Corruption::Random | Corruption::Orthogonal => {
            let mut dir = DMatrix::from_fn(g.nrows(), g.ncols(), |_, _| normal(rng));
            if how == Corruption::Orthogonal {
                let proj = dir.dot(&unit);
                dir -= &unit * proj;
            }
            let n = dir.norm();
            dir / n
        }
    };
    let d = dir * (alpha * norm);
    let mut field = CorruptedField { d, realized_alpha: 0.0 };
    field.realized_alpha = (field.avg_gradient(inst, phi) - &g).norm() / norm;
    Ok(field)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Advantage {
    pub closed: f64,
    pub mc: Option<f64>,
}

/// Applies `Φ' = Φ + η ∇̄g` and returns `J(Φ') - J(Φ)`; with `mc_samples`
/// a common-random-number Monte-Carlo estimate is returned too.
pub fn verify_step(
    inst: &BanditInstance,
    phi: &DMatrix<f64>,
    field: &CorruptedField,
    eta: f64,
    mc_samples: usize,
    rng: &mut StreamRng,
) -> (DMatrix<f64>, Advantage) {
    let next = phi + field.avg_gradient(inst, phi) * eta;
    let closed = inst.objective(&next) - inst.objective(phi);
    let mc = (mc_samples > 0).then(|| {
        let mut acc = 0.0;
        for _ in 0..mc_samples {
            let s = inst.sample_state(rng);
            let eps = DVector::from_vec(normals(rng, inst.n_a())) * inst.sigma;
            acc += inst.q(&s, &(&next * &s + &eps)) - inst.q(&s, &(phi * &s + &eps));
        }
        acc / mc_samples as f64
    });
    (next, Advantage { closed, mc })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Prop1Config {
    pub alphas: Vec<f64>,
    pub n_s: usize,
    pub n_a: usize,
    pub instances: usize,
    /// Step size as a multiple of `η_derivation`.
    pub eta_multiplier: f64,
    pub corruption: Corruption,
    pub mc_samples: usize,
    /// Step multiple for the (unasserted) counterexample table.
    pub counterexample_multiplier: f64,
    pub seed: u64,
}

impl Default for Prop1Config {
    fn default() -> Self {
        Self {
            alphas: vec![0.0, 0.25, 0.5],
            n_s: 3,
            n_a: 2,
            instances: 100,
            eta_multiplier: 1.0,
            corruption: Corruption::Against,
            mc_samples: 0,
            counterexample_multiplier: 10.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prop1Row {
    pub instance_id: usize,
    pub alpha: f64,
    pub eta: f64,
    pub eta_half_k: f64,
    pub realized_alpha: f64,
    pub advantage: Advantage,
}

/// One row per (α, instance); instance `i` is identical across α.
pub fn run_prop1(cfg: &Prop1Config) -> Result<Vec<Prop1Row>, Prop1Error> {
    let mut rows = Vec::new();
    for &alpha in &cfg.alphas {
        for i in 0..cfg.instances {
            let mut rng = stream_rng(cfg.seed, i as u64);
            let inst = BanditInstance::random(cfg.n_s, cfg.n_a, &mut rng);
            let phi = DMatrix::from_fn(cfg.n_a, cfg.n_s, |_, _| normal(&mut rng));
            let mut corrupt_rng = stream_rng(cfg.seed, (1 << 32) + i as u64);
            let field = corrupt_gradient(&inst, &phi, alpha, cfg.corruption, &mut corrupt_rng)?;
            let (eta_d, eta_p) = eta_bound(alpha, &inst.constants(&phi))?;
            let eta = cfg.eta_multiplier * eta_d;
            let mut mc_rng = stream_rng(cfg.seed, (2 << 32) + i as u64);
            let (_, advantage) = verify_step(&inst, &phi, &field, eta, cfg.mc_samples, &mut mc_rng);
            rows.push(Prop1Row {
                instance_id: i,
                alpha,
                eta,
                eta_half_k: eta_p,
                realized_alpha: field.realized_alpha,
                advantage,
            });
        }
    }
    Ok(rows)
}

/// Columns `instance_id,alpha,eta,advantage_closed,advantage_mc`.
pub fn write_prop1_csv<W: Write>(rows: &[Prop1Row], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["instance_id", "alpha", "eta", "advantage_closed", "advantage_mc"])?;
    for r in rows {
        w.write_record([
            r.instance_id.to_string(),
            r.alpha.to_string(),
            r.eta.to_string(),
            r.advantage.closed.to_string(),
            r.advantage.mc.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
