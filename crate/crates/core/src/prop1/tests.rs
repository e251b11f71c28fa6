use super::*;
use proptest::prelude::*;

fn instance(seed: u64) -> (BanditInstance, DMatrix<f64>) {
    let mut rng = stream_rng(seed, 0);
    let inst = BanditInstance::random(3, 2, &mut rng);
    let phi = DMatrix::from_fn(2, 3, |_, _| normal(&mut rng));
    (inst, phi)
}

fn constants(k: f64) -> Constants {
    Constants {
        kappa_q: k,
        kappa_mu: 0.0,
        sigma_q: 7.0,
        sigma_mu: 1.0,
    }
}

#[test]
fn eta_bound_reference_values() {
    let (d, p) = eta_bound(0.0, &constants(1.0)).unwrap();
    assert!((d - 2.0).abs() < 1e-15);
    assert!((p - 2.0).abs() < 1e-15);
    let (d, _) = eta_bound(0.5, &constants(2.0)).unwrap();
    assert!((d - 1.0 / 9.0).abs() < 1e-15);
    assert_eq!(eta_bound(1.0, &constants(1.0)), Err(Prop1Error::Alpha(1.0)));
    assert_eq!(eta_bound(-0.1, &constants(1.0)), Err(Prop1Error::Alpha(-0.1)));
}

#[test]
fn averaged_gradient_is_objective_gradient() {
    let (inst, phi) = instance(1);
    let g = inst.true_avg_gradient(&phi);
    let h = 1e-5;
    for i in 0..2 {
        for j in 0..3 {
            let mut p = phi.clone();
            p[(i, j)] += h;
            let up = inst.objective(&p);
            p[(i, j)] -= 2.0 * h;
            let fd = (up - inst.objective(&p)) / (2.0 * h);
            assert!((fd - g[(i, j)]).abs() < 1e-8, "{fd} vs {}", g[(i, j)]);
        }
    }
}

#[test]
fn objective_matches_sampled_q() {
    let (inst, phi) = instance(2);
    let mut rng = stream_rng(2, 9);
    let n = 200_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let s = inst.sample_state(&mut rng);
        let a = &phi * &s + DVector::from_vec(normals(&mut rng, 2)) * inst.sigma;
        acc += inst.q(&s, &a);
    }
    let mc = acc / n as f64;
    let j = inst.objective(&phi);
    assert!((mc - j).abs() < 0.02 * j.abs().max(1.0), "{mc} vs {j}");
}

#[test]
fn monte_carlo_average_gradient_matches_closed_form() {
    let (inst, phi) = instance(3);
    let mut rng = stream_rng(3, 5);
    let mc = inst.avg_policy_gradient_mc(&phi, &|s, a| inst.grad_q(s, a), 200_000, &mut rng);
    let cf = inst.true_avg_gradient(&phi);
    assert!((mc - &cf).norm() / cf.norm() <= 1e-2);

    let field = corrupt_gradient(&inst, &phi, 0.5, Corruption::Random, &mut stream_rng(3, 6)).unwrap();
    let mc = inst.avg_policy_gradient_mc(&phi, &|s, a| field.eval(&inst, s, a), 200_000, &mut rng);
    let cf = field.avg_gradient(&inst, &phi);
    assert!((mc - &cf).norm() / cf.norm() <= 1e-2);
}

#[test]
fn corruption_directions() {
    let (inst, phi) = instance(4);
    let g = inst.true_avg_gradient(&phi);
    let mut rng = stream_rng(4, 1);
    for how in Corruption::ALL {
        let f = corrupt_gradient(&inst, &phi, 0.3, how, &mut rng).unwrap();
        assert!((f.realized_alpha - 0.3).abs() < 1e-10);
        let cos = f.d.dot(&g) / (f.d.norm() * g.norm());
        match how {
            Corruption::Along => assert!((cos - 1.0).abs() < 1e-12),
            Corruption::Against => assert!((cos + 1.0).abs() < 1e-12),
            Corruption::Orthogonal => assert!(cos.abs() < 1e-12),
            Corruption::Random => {}
        }
    }
}

#[test]
fn stationary_policy_is_rejected() {
    let (inst, _) = instance(5);
    let phi = inst.t.clone();
    let r = corrupt_gradient(&inst, &phi, 0.2, Corruption::Along, &mut stream_rng(0, 0));
    assert_eq!(r, Err(Prop1Error::Stationary));
}

#[test]
fn curvature_is_dominated_by_bound_constant() {
    // J(Φ + Δ) = J + <∇J, Δ> - tr(M Δ Σ Δᵀ); the quadratic coefficient must
    // not exceed K²/2 for η_derivation to guarantee improvement.
    for seed in 0..50 {
        let (inst, phi) = instance(seed);
        let c = inst.constants(&phi);
        let k = c.kappa_q * c.sigma_mu;
        let curvature = spectral_norm(&inst.m) / 3.0;
        assert!(curvature <= 0.5 * k * k);
    }
}

#[test]
fn improvement_at_bound_all_directions() {
    for seed in 0..100 {
        let (inst, phi) = instance(seed);
        let mut rng = stream_rng(seed, 1);
        for alpha in [0.0, 0.25, 0.5, 0.9] {
            let (eta, _) = eta_bound(alpha, &inst.constants(&phi)).unwrap();
            for how in Corruption::ALL {
                let f = corrupt_gradient(&inst, &phi, alpha, how, &mut rng).unwrap();
                let (_, adv) = verify_step(&inst, &phi, &f, eta, 0, &mut rng);
                assert!(adv.closed >= -1e-9, "seed {seed} alpha {alpha} {how:?}: {}", adv.closed);
                assert!(adv.mc.is_none());
            }
        }
    }
}

#[test]
fn monte_carlo_advantage_tracks_closed_form() {
    let (inst, phi) = instance(7);
    let mut rng = stream_rng(7, 3);
    let f = corrupt_gradient(&inst, &phi, 0.25, Corruption::Against, &mut rng).unwrap();
    let (eta, _) = eta_bound(0.25, &inst.constants(&phi)).unwrap();
    let (_, adv) = verify_step(&inst, &phi, &f, eta, 100_000, &mut rng);
    let mc = adv.mc.unwrap();
    assert!(
        (mc - adv.closed).abs() <= 0.05 * adv.closed.abs() + 1e-6,
        "{mc} vs {}",
        adv.closed
    );
}

#[test]
fn run_rows_and_csv() {
    let cfg = Prop1Config {
        alphas: vec![0.0, 0.5],
        instances: 4,
        mc_samples: 10,
        ..Prop1Config::default()
    };
    let rows = run_prop1(&cfg).unwrap();
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[0].realized_alpha, 0.0);
    // same instance across alphas: η shrinks by (1-α)/(1+α)²
    assert!((rows[4].eta / rows[0].eta - 0.5 / 2.25).abs() < 1e-12);
    let mut buf = Vec::new();
    write_prop1_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "instance_id,alpha,eta,advantage_closed,advantage_mc"
    );
    assert_eq!(text.lines().count(), 9);
    assert_eq!(run_prop1(&cfg).unwrap(), rows);
}

proptest! {
    #[test]
    fn symmetric_positive_curvature(seed in 0u64..10_000) {
        let (inst, _) = instance(seed);
        prop_assert!((&inst.m - inst.m.transpose()).norm() < 1e-12);
        let eig = inst.m.clone().symmetric_eigen().eigenvalues;
        for l in eig.iter() {
            prop_assert!(*l >= 0.5 - 1e-9 && *l <= 2.0 + 1e-9);
        }
    }

    #[test]
    fn realized_alpha_matches_request(seed in 0u64..10_000, alpha in 0.0f64..0.99) {
        let (inst, phi) = instance(seed);
        let mut rng = stream_rng(seed, 2);
        for how in Corruption::ALL {
            let f = corrupt_gradient(&inst, &phi, alpha, how, &mut rng).unwrap();
            prop_assert!((f.realized_alpha - alpha).abs() < 1e-10);
        }
    }
}

#[test]
fn zero_field_and_stationary_policy_average_to_zero() {
    let (inst, phi) = instance(8);
    let mut rng = stream_rng(8, 0);
    let z = inst.avg_policy_gradient_mc(&phi, &|_, _| DVector::zeros(2), 100, &mut rng);
    assert_eq!(z.norm(), 0.0);
    assert!(inst.true_avg_gradient(&inst.t).norm() < 1e-15);
}

#[test]
fn bound_vanishes_and_decreases_in_alpha() {
    let c = constants(1.3);
    let mut prev = f64::INFINITY;
    for i in 0..1000 {
        let alpha = i as f64 / 1000.0;
        let (d, p) = eta_bound(alpha, &c).unwrap();
        assert!(d < prev && p > 0.0);
        prev = d;
    }
    let (d, p) = eta_bound(1.0 - 1e-12, &c).unwrap();
    assert!(d < 1e-11 && p < 1e-11);
}

#[test]
fn near_unit_antiparallel_corruption() {
    let (inst, phi) = instance(9);
    let f = corrupt_gradient(&inst, &phi, 0.999, Corruption::Against, &mut stream_rng(9, 0)).unwrap();
    let g = inst.true_avg_gradient(&phi);
    assert!((f.avg_gradient(&inst, &phi) - &g).norm() <= 0.999 * g.norm() * (1.0 + 1e-12));
    let (eta, _) = eta_bound(0.999, &inst.constants(&phi)).unwrap();
    let (_, adv) = verify_step(&inst, &phi, &f, eta, 0, &mut stream_rng(9, 1));
    assert!(adv.closed >= -1e-9);
}

#[test]
fn tiny_exact_step_ascends() {
    let (inst, phi) = instance(10);
    let f = corrupt_gradient(&inst, &phi, 0.0, Corruption::Along, &mut stream_rng(10, 0)).unwrap();
    assert_eq!(f.d.norm(), 0.0);
    let (_, adv) = verify_step(&inst, &phi, &f, 1e-4, 0, &mut stream_rng(10, 1));
    assert!(adv.closed > 0.0);
}
