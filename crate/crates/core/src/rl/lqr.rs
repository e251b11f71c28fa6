use super::rollout::Env;
use super::{check_dim, Result, RlError};
use crate::rng::{normal, stream_rng, StreamRng};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const MAX_ITERATIONS: usize = 1_000_000;
const TOLERANCE: f64 = 1e-12;

/// Discrete-time linear system `s' = A s + B a + noise` with quadratic cost.
#[derive(Clone, Debug, PartialEq)]
pub struct Lqr {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub gamma: f64,
    pub horizon: usize,
    /// Initial states are uniform on `[-init_bound, init_bound]^n_s`.
    pub init_bound: f64,
    pub noise_std: f64,
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

impl Lqr {
    /// The 4-state, 2-action benchmark system.
    pub fn default_system() -> Self {
        Self::random(4, 2, 7)
    }

    /// `A = I + 0.1 E` with `E` Hurwitz (`-I` plus a random coupling
    /// matrix), `B = 0.1 G`, `Q = I`, `R = 0.1 I`.
    pub fn random(n_s: usize, n_a: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0);
        let a = loop {
            let g = DMatrix::from_fn(n_s, n_s, |_, _| normal(&mut rng) / (n_s as f64).sqrt());
            let e = -DMatrix::identity(n_s, n_s) + g * 0.5;
            let a = DMatrix::identity(n_s, n_s) + e * 0.1;
            if spectral_radius(&a) < 0.98 {
                break a;
            }
        };
        let b = DMatrix::from_fn(n_s, n_a, |_, _| 0.1 * normal(&mut rng));
        Self {
            a,
            b,
            q: DMatrix::identity(n_s, n_s),
            r: DMatrix::identity(n_a, n_a) * 0.1,
            gamma: 0.99,
            horizon: 200,
            init_bound: 1.0,
            noise_std: 0.0,
        }
    }

    pub fn n_s(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_a(&self) -> usize {
        self.b.ncols()
    }

    pub fn cost_reward(&self, s: &DVector<f64>, a: &DVector<f64>) -> f64 {
        -(s.dot(&(&self.q * s)) + a.dot(&(&self.r * a)))
    }

    /// `P` of the linear policy `a = K s`: the fixed point of
    /// `P = Q + KᵀRK + γ (A+BK)ᵀ P (A+BK)`, so that `V(s) = -sᵀPs`.
    pub fn value_matrix(&self, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("gain rows", self.n_a(), k.nrows())?;
        check_dim("gain cols", self.n_s(), k.ncols())?;
        let m = &self.a + &self.b * k;
        let c = &self.q + k.transpose() * &self.r * k;
        let mt = m.transpose();
        let mut p = c.clone();
        for it in 1..=MAX_ITERATIONS {
            let next = &c + (&mt * &p * &m) * self.gamma;
            let diff = (&next - &p).amax();
            let scale = next.amax();
            if !scale.is_finite() {
                return Err(RlError::Instability { iterations: it });
            }
            p = next;
            if diff <= TOLERANCE * scale.max(1.0) {
                return Ok(p);
            }
        }
        Err(RlError::Instability {
            iterations: MAX_ITERATIONS,
        })
    }

    /// `Q^π(s,a)` and `∇_a Q^π(s,a)` for the linear policy `a = K s`.
    pub fn q_oracle(&self, k: &DMatrix<f64>, s: &[f64], a: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p = self.value_matrix(k)?;
        self.q_with_value(&p, s, a)
    }

    /// Same as [`Lqr::q_oracle`] with a precomputed value matrix.
    pub fn q_with_value(&self, p: &DMatrix<f64>, s: &[f64], a: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim("state", self.n_s(), s.len())?;
        check_dim("action", self.n_a(), a.len())?;
        let s = DVector::from_row_slice(s);
        let a = DVector::from_row_slice(a);
        let next = &self.a * &s + &self.b * &a;
        let q = self.cost_reward(&s, &a) - self.gamma * next.dot(&(p * &next));
        let grad = -(&self.r * &a) * 2.0 - (self.b.transpose() * p * &next) * (2.0 * self.gamma);
        Ok((q, grad.iter().copied().collect()))
    }

    /// Maximizer of `Q(s, ·)` under value matrix `p`.
    pub fn greedy_action(&self, p: &DMatrix<f64>, s: &[f64]) -> Vec<f64> {
        let s = DVector::from_row_slice(s);
        let bt_p = self.b.transpose() * p;
        let lhs = &self.r + &bt_p * &self.b * self.gamma;
        let rhs = -(&bt_p * &self.a * &s) * self.gamma;
        let a = lhs.lu().solve(&rhs).expect("R + γBᵀPB is positive definite");
        a.iter().copied().collect()
    }

    /// Optimal discounted gain `K*` from Riccati iteration.
    pub fn optimal_gain(&self) -> Result<DMatrix<f64>> {
        let mut p = self.q.clone();
        for it in 1..=MAX_ITERATIONS {
            let k = self.gain_from(&p);
            let m = &self.a + &self.b * &k;
            let next = &self.q + k.transpose() * &self.r * &k + (m.transpose() * &p * &m) * self.gamma;
            let diff = (&next - &p).amax();
            let scale = next.amax();
            if !scale.is_finite() {
                return Err(RlError::Instability { iterations: it });
            }
            p = next;
            if diff <= TOLERANCE * scale.max(1.0) {
                return Ok(self.gain_from(&p));
            }
        }
        Err(RlError::Instability {
            iterations: MAX_ITERATIONS,
        })
    }

    fn gain_from(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let bt_p = self.b.transpose() * p;
        let lhs = &self.r + &bt_p * &self.b * self.gamma;
        let rhs = -(&bt_p * &self.a) * self.gamma;
        lhs.lu().solve(&rhs).expect("R + γBᵀPB is positive definite")
    }

    /// `K s` as a plain vector.
    pub fn linear_action(k: &DMatrix<f64>, s: &[f64]) -> Vec<f64> {
        (k * DVector::from_row_slice(s)).iter().copied().collect()
    }
}

impl Env for Lqr {
    fn state_dim(&self) -> usize {
        self.n_s()
    }

    fn action_dim(&self) -> usize {
        self.n_a()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn reset(&self, rng: &mut StreamRng) -> Vec<f64> {
        (0..self.n_s())
            .map(|_| rng.random_range(-self.init_bound..=self.init_bound))
            .collect()
    }

    fn step(&self, s: &[f64], a: &[f64], rng: &mut StreamRng) -> (Vec<f64>, f64) {
        let sv = DVector::from_row_slice(s);
        let av = DVector::from_row_slice(a);
        let r = self.cost_reward(&sv, &av);
        let mut next = &self.a * &sv + &self.b * &av;
        if self.noise_std > 0.0 {
            for x in next.iter_mut() {
                *x += self.noise_std * normal(rng);
            }
        }
        (next.iter().copied().collect(), r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::{rollout, rollout_from};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    fn random_gain(env: &Lqr, seed: u64) -> DMatrix<f64> {
        let mut rng = stream_rng(seed, 1);
        let kstar = env.optimal_gain().unwrap();
        kstar + DMatrix::from_fn(env.n_a(), env.n_s(), |_, _| 0.3 * normal(&mut rng))
    }

    #[test]
    fn default_system_is_open_loop_stable() {
        let env = Lqr::default_system();
        let rho = spectral_radius(&env.a);
        assert!(rho < 0.98 && rho > 0.5, "spectral radius {rho}");
        assert_eq!((env.n_s(), env.n_a()), (4, 2));
        assert_eq!(env, Lqr::default_system());
    }

    #[test]
    fn greedy_action_is_stationary() {
        let env = Lqr::default_system();
        let k = random_gain(&env, 0);
        let p = env.value_matrix(&k).unwrap();
        let s = [0.3, -0.8, 0.5, 0.1];
        let a = env.greedy_action(&p, &s);
        let (_, grad) = env.q_with_value(&p, &s, &a).unwrap();
        assert!(grad.iter().all(|g| g.abs() < 1e-12), "{grad:?}");
    }

    #[test]
    fn myopic_q_is_immediate_reward() {
        let mut env = Lqr::default_system();
        env.gamma = 0.0;
        let k = DMatrix::zeros(2, 4);
        let s = [1.0, 0.0, -1.0, 0.5];
        let a = [0.4, -0.2];
        let (q, grad) = env.q_oracle(&k, &s, &a).unwrap();
        let expected = -(1.0 + 1.0 + 0.25) - 0.1 * (0.16 + 0.04);
        assert!(close(q, expected, 1e-14));
        assert!(close(grad[0], -0.08, 1e-14) && close(grad[1], 0.04, 1e-14));
    }

    #[test]
    fn on_policy_q_equals_state_value() {
        let env = Lqr::default_system();
        let k = random_gain(&env, 2);
        let p = env.value_matrix(&k).unwrap();
        let s = [0.2, 0.4, -0.6, 0.9];
        let a = Lqr::linear_action(&k, &s);
        let (q, _) = env.q_with_value(&p, &s, &a).unwrap();
        let sv = DVector::from_row_slice(&s);
        assert!(close(q, -sv.dot(&(&p * &sv)), 1e-12));
    }

    #[test]
    fn q_oracle_matches_long_rollout() {
        let env = Lqr::default_system();
        let k = random_gain(&env, 3);
        let s = vec![0.5, -0.5, 0.25, -1.0];
        let a = [0.3, 0.7];
        let (q, _) = env.q_oracle(&k, &s, &a).unwrap();
        let mut policy = |x: &[f64], _: &mut StreamRng| Lqr::linear_action(&k, x);
        let traj = rollout_from(&env, s, Some(&a), &mut policy, 5000, &mut stream_rng(0, 0)).unwrap();
        assert!(close(traj.discounted_return(env.gamma), q, 1e-6));
    }

    #[test]
    fn q_gradient_matches_finite_differences() {
        let env = Lqr::default_system();
        let k = random_gain(&env, 4);
        let p = env.value_matrix(&k).unwrap();
        let s = [0.1, 0.2, 0.3, -0.4];
        let a = [-0.5, 0.25];
        let (_, grad) = env.q_with_value(&p, &s, &a).unwrap();
        for i in 0..2 {
            let mut hi = a;
            let mut lo = a;
            hi[i] += 1e-5;
            lo[i] -= 1e-5;
            let fd = (env.q_with_value(&p, &s, &hi).unwrap().0 - env.q_with_value(&p, &s, &lo).unwrap().0) / 2e-5;
            assert!(close(grad[i], fd, 1e-7));
        }
    }

    #[test]
    fn reward_scaling_scales_q() {
        let env = Lqr::default_system();
        let mut scaled = env.clone();
        scaled.q *= 3.0;
        scaled.r *= 3.0;
        let k = random_gain(&env, 5);
        let s = [0.4, 0.1, -0.2, 0.3];
        let a = [0.1, -0.1];
        let (q1, g1) = env.q_oracle(&k, &s, &a).unwrap();
        let (q3, g3) = scaled.q_oracle(&k, &s, &a).unwrap();
        assert!(close(q3, 3.0 * q1, 1e-11));
        for (x, y) in g1.iter().zip(&g3) {
            assert!(close(*y, 3.0 * x, 1e-11));
        }
    }

    #[test]
    fn unstable_gain_is_reported() {
        let env = Lqr::default_system();
        let k = DMatrix::from_element(2, 4, 100.0);
        assert!(matches!(env.value_matrix(&k), Err(RlError::Instability { .. })));
    }

    #[test]
    fn optimal_gain_beats_perturbations() {
        let env = Lqr::default_system();
        let kstar = env.optimal_gain().unwrap();
        let pstar = env.value_matrix(&kstar).unwrap();
        for seed in 0..5 {
            let p = env.value_matrix(&random_gain(&env, 10 + seed)).unwrap();
            // V* ≥ V^K for every state: P - P* is positive semidefinite.
            let diff = p - &pstar;
            let eig = nalgebra::SymmetricEigen::new((&diff + diff.transpose()) * 0.5);
            assert!(eig.eigenvalues.min() > -1e-9);
        }
    }

    #[test]
    fn zero_dynamics_rollout() {
        let mut env = Lqr::default_system();
        env.a = DMatrix::zeros(4, 4);
        let mut zero = |_: &[f64], _: &mut StreamRng| vec![0.0; 2];
        let mut rng = stream_rng(1, 2);
        let traj = rollout(&env, &mut zero, 10, &mut rng).unwrap();
        let s0 = DVector::from_row_slice(&traj.transitions[0].s);
        for t in &traj.transitions {
            assert!(t.s_next.iter().all(|&x| x == 0.0));
        }
        let r0 = env.cost_reward(&s0, &DVector::zeros(2));
        assert_eq!(traj.discounted_return(env.gamma), r0);
        assert!(traj.transitions[9].done && !traj.transitions[8].done);
    }

    #[test]
    fn rollouts_are_reproducible_and_resummable() {
        let mut env = Lqr::default_system();
        env.noise_std = 0.05;
        let k = env.optimal_gain().unwrap();
        let mut policy = |x: &[f64], _: &mut StreamRng| Lqr::linear_action(&k, x);
        let a = rollout(&env, &mut policy, 50, &mut stream_rng(3, 4)).unwrap();
        let b = rollout(&env, &mut policy, 50, &mut stream_rng(3, 4)).unwrap();
        assert_eq!(a, b);
        let mut manual = 0.0;
        let mut discount = 1.0;
        for t in &a.transitions {
            manual += discount * t.r;
            discount *= env.gamma;
        }
        assert!(close(a.discounted_return(env.gamma), manual, 1e-13));
        assert_eq!(a.returns_to_go(env.gamma)[0], a.discounted_return(env.gamma));
    }

    #[test]
    fn divergence_names_the_step() {
        let env = Lqr::default_system();
        let mut blowup = |_: &[f64], _: &mut StreamRng| vec![f64::NAN, 0.0];
        let err = rollout(&env, &mut blowup, 10, &mut stream_rng(0, 0)).unwrap_err();
        assert!(matches!(err, RlError::Divergence { step: 0 }));
        assert!(err.to_string().contains("step 0"));
    }

    #[test]
    fn trajectory_csv_layout() {
        let env = Lqr::default_system();
        let mut zero = |_: &[f64], _: &mut StreamRng| vec![0.0; 2];
        let traj = rollout(&env, &mut zero, 3, &mut stream_rng(0, 0)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,s0,s1,s2,s3,a0,a1,r,done");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].ends_with(",1"));
    }
}
