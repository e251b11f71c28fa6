use super::*;
use crate::gradcheck::{central_difference, fd_error};
use crate::hypernet::{dynamic_forward, DynamicLayer, DynamicWeights};
use crate::rng::{stream_rng, uniform_vec};

const NS: usize = 3;
const NA: usize = 2;

fn small_cfg() -> CriticConfig {
    CriticConfig {
        mlp_hidden: vec![16, 16],
        dynamic_hidden: 16,
        primary: PrimaryConfig {
            widths: vec![8, 16, 16],
            blocks: 2,
        },
        init: InitScheme::Default,
    }
}

fn critic(kind: CriticKind, seed: u64) -> Critic {
    Critic::new(kind, NS, NA, &small_cfg(), &mut stream_rng(seed, 0))
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

#[test]
fn linear_critic_by_hand() {
    let mut c = critic(CriticKind::Linear, 0);
    c.params_mut().set_flat(&[1.0, -2.0, 0.5, 3.0, -1.0]);
    let q = c.q_value(&[1.0, 1.0, 2.0], &[0.5, 0.25]).unwrap();
    assert_eq!(q, 1.0 - 2.0 + 1.0 + 1.5 - 0.25);
    let mut rng = stream_rng(1, 0);
    for _ in 0..10 {
        let s = uniform_vec(&mut rng, NS, -5.0, 5.0);
        let a = uniform_vec(&mut rng, NA, -5.0, 5.0);
        assert_eq!(c.action_grad_autodiff(&s, &a).unwrap(), vec![3.0, -1.0]);
    }
}

#[test]
fn zero_weights_give_zero_q() {
    for kind in [
        CriticKind::Linear,
        CriticKind::MlpConcat,
        CriticKind::AsHyper,
        CriticKind::SaHyper,
    ] {
        let mut c = critic(kind, 2);
        let n = c.params().numel();
        c.params_mut().set_flat(&vec![0.0; n]);
        assert_eq!(c.q_value(&[0.3, -0.1, 0.9], &[1.0, -1.0]).unwrap(), 0.0, "{kind:?}");
    }
}

#[test]
fn sa_hyper_is_the_literal_composition() {
    let c = critic(CriticKind::SaHyper, 3);
    let h = c.hypernet().unwrap();
    let mut rng = stream_rng(3, 1);
    for _ in 0..10 {
        let s = uniform_vec(&mut rng, NS, -1.0, 1.0);
        let a = uniform_vec(&mut rng, NA, -1.0, 1.0);
        let groups = h.weights_for(&s).unwrap();
        let mut g = Graph::new();
        let vars: Vec<Var> = groups.iter().map(|v| g.constant(Tensor::row(v.clone()))).collect();
        let w = DynamicWeights::from_groups(h.spec(), &vars, 1);
        let x = g.constant(Tensor::row(a.clone()));
        let y = dynamic_forward(&mut g, h.spec(), &w, x).unwrap();
        assert_eq!(c.q_value(&s, &a).unwrap(), g.value(y).item().unwrap());
    }
}

#[test]
fn single_layer_sa_hyper_gradient_ignores_action() {
    let spec = DynamicSpec {
        layers: vec![DynamicLayer {
            in_dim: NA,
            out_dim: 1,
            gain: true,
            relu: false,
        }],
        log_std: false,
    };
    let net = HyperNet::new(
        NS,
        small_cfg().primary,
        spec,
        InitScheme::Default,
        &mut stream_rng(4, 0),
    );
    let c = Critic::from_hypernet(CriticKind::SaHyper, NS, NA, net);
    let s = [0.2, -0.4, 0.6];
    let groups = c.hypernet().unwrap().weights_for(&s).unwrap();
    let expected: Vec<f64> = groups[0].iter().map(|w| w * (1.0 + groups[2][0])).collect();
    let mut rng = stream_rng(4, 1);
    let first = c.action_grad_autodiff(&s, &[0.0, 0.0]).unwrap();
    for _ in 0..10 {
        let a = uniform_vec(&mut rng, NA, -3.0, 3.0);
        let grad = c.action_grad_autodiff(&s, &a).unwrap();
        assert_eq!(grad, first);
    }
    assert!(rel(&first, &expected) < 1e-15);
}

#[test]
fn mlp_action_gradient_matches_finite_differences() {
    let c = critic(CriticKind::MlpConcat, 5);
    let mut rng = stream_rng(5, 1);
    for _ in 0..20 {
        let s = uniform_vec(&mut rng, NS, -1.0, 1.0);
        let a = uniform_vec(&mut rng, NA, -1.0, 1.0);
        let grad = c.action_grad_autodiff(&s, &a).unwrap();
        let q = c.q_value(&s, &a).unwrap();
        let fd = central_difference(|x| c.q_value(&s, x).unwrap(), &a, 1e-6);
        for (ad, f) in grad.iter().zip(&fd) {
            assert!(fd_error(*ad, *f, q, 1e-6) <= 1e-6, "{ad} vs {f}");
        }
    }
}

#[test]
fn closed_form_matches_autodiff() {
    for kind in [CriticKind::MlpConcat, CriticKind::SaHyper] {
        let c = critic(kind, 6);
        let mut rng = stream_rng(6, 1);
        for _ in 0..100 {
            let s = uniform_vec(&mut rng, NS, -1.0, 1.0);
            let a = uniform_vec(&mut rng, NA, -1.0, 1.0);
            let auto = c.action_grad_autodiff(&s, &a).unwrap();
            let closed = c.action_grad_closed_form(&s, &a).unwrap();
            assert!(rel(&closed, &auto) <= 1e-8, "{kind:?}: {closed:?} vs {auto:?}");
            let cache = c.forward_cache(&s, &a).unwrap();
            let q = c.q_value(&s, &a).unwrap();
            assert!((cache.q - q).abs() <= 1e-12 * (1.0 + q.abs()));
        }
    }
}

#[test]
fn closed_form_rejects_other_kinds() {
    for kind in [CriticKind::Linear, CriticKind::AsHyper] {
        let err = critic(kind, 0)
            .action_grad_closed_form(&[0.0; 3], &[0.0; 2])
            .unwrap_err();
        assert!(matches!(err, CriticError::Unsupported { .. }));
    }
}

#[test]
fn dead_relu_region_has_zero_gradient() {
    let mut c = critic(CriticKind::MlpConcat, 7);
    let b0 = c.params().find("l0.b").unwrap();
    c.params_mut().get_mut(b0).data_mut().fill(-1e3);
    let s = [0.1, 0.2, 0.3];
    let a = [0.4, -0.5];
    assert_eq!(c.action_grad_closed_form(&s, &a).unwrap(), vec![0.0, 0.0]);
    assert_eq!(c.action_grad_autodiff(&s, &a).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn equal_activation_patterns_give_equal_gradients() {
    let c = critic(CriticKind::SaHyper, 8);
    let s = [0.5, -0.5, 0.1];
    let mut rng = stream_rng(8, 1);
    let mut checked = 0;
    for _ in 0..50 {
        let a1 = uniform_vec(&mut rng, NA, -1.0, 1.0);
        let a2: Vec<f64> = a1.iter().map(|x| x + 1e-4).collect();
        let l1 = &c.forward_cache(&s, &a1).unwrap().lambdas;
        let l2 = &c.forward_cache(&s, &a2).unwrap().lambdas;
        if l1 == l2 {
            let g1 = c.action_grad_autodiff(&s, &a1).unwrap();
            let g2 = c.action_grad_autodiff(&s, &a2).unwrap();
            assert_eq!(g1, g2);
            checked += 1;
        }
    }
    assert!(checked > 10);
}

#[test]
fn as_hyper_jacobian_rank() {
    let cfg = CriticConfig {
        dynamic_hidden: 83,
        ..small_cfg()
    };
    // n_w = 9 * 83 + 3 * 83 + 2 = 998.
    let mut c = Critic::new(CriticKind::AsHyper, 9, NA, &cfg, &mut stream_rng(9, 0));
    assert_eq!(c.hypernet().unwrap().spec().param_count(), 998);
    let mut rng = stream_rng(9, 1);
    for _ in 0..5 {
        let a = uniform_vec(&mut rng, NA, -1.0, 1.0);
        let r = c.as_hyper_jacobian_rank(&a).unwrap();
        assert_eq!(r, 2);
    }
    let n = c.params().numel();
    c.params_mut().set_flat(&vec![0.0; n]);
    assert_eq!(c.as_hyper_jacobian_rank(&[0.3, 0.1]).unwrap(), 0);
    assert!(critic(CriticKind::SaHyper, 0)
        .as_hyper_jacobian_rank(&[0.0; 2])
        .is_err());
}

#[test]
fn batch_gradients_match_single_rows() {
    let c = critic(CriticKind::SaHyper, 10);
    let mut rng = stream_rng(10, 1);
    let ss: Vec<Vec<f64>> = (0..4).map(|_| uniform_vec(&mut rng, NS, -1.0, 1.0)).collect();
    let aa: Vec<Vec<f64>> = (0..4).map(|_| uniform_vec(&mut rng, NA, -1.0, 1.0)).collect();
    let batch = c
        .action_grad_batch(&Tensor::from_rows(&ss).unwrap(), &Tensor::from_rows(&aa).unwrap())
        .unwrap();
    for i in 0..4 {
        let single = c.action_grad_autodiff(&ss[i], &aa[i]).unwrap();
        assert!(rel(batch.row_slice(i), &single) < 1e-12);
    }
}
