use super::*;
use crate::rng::{normals, stream_rng, uniform_vec};
use crate::tensor::{Graph, Tensor};

fn small_config() -> PrimaryConfig {
    PrimaryConfig {
        widths: vec![8, 12, 16],
        blocks: 2,
    }
}

fn small_net(seed: u64, scheme: InitScheme) -> HyperNet {
    let spec = DynamicSpec::single_hidden(3, 5, 2);
    HyperNet::new(4, small_config(), spec, scheme, &mut stream_rng(seed, 0))
}

fn eval(net: &HyperNet, z: &[f64], x: &[f64]) -> Vec<f64> {
    let mut g = Graph::new();
    let vars = net.params().bind(&mut g, false);
    let zv = g.constant(Tensor::row(z.to_vec()));
    let xv = g.constant(Tensor::row(x.to_vec()));
    let y = net.forward(&mut g, &vars, zv, xv).unwrap();
    g.value(y).data().to_vec()
}

/// Runs the dynamic network on explicit per-group values.
fn run_dynamic(spec: &DynamicSpec, groups: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let mut g = Graph::new();
    let vars: Vec<_> = groups.iter().map(|v| g.constant(Tensor::row(v.clone()))).collect();
    let w = DynamicWeights::from_groups(spec, &vars, 1);
    let xv = g.constant(Tensor::row(x.to_vec()));
    let y = dynamic_forward(&mut g, spec, &w, xv).unwrap();
    g.value(y).data().to_vec()
}

#[test]
fn zero_parameters_generate_zero_weights() {
    let mut net = small_net(1, InitScheme::Small);
    let n = net.params().numel();
    net.params_mut().set_flat(&vec![0.0; n]);
    for group in net.weights_for(&[0.3, -2.0, 1.0, 4.0]).unwrap() {
        assert!(group.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn forward_is_deterministic_and_seeded() {
    let a = small_net(5, InitScheme::Small);
    let b = small_net(5, InitScheme::Small);
    assert_eq!(a, b);
    let z = [0.1, 0.2, -0.3, 0.4];
    assert_eq!(a.weights_for(&z).unwrap(), a.weights_for(&z).unwrap());
    assert_ne!(a, small_net(6, InitScheme::Small));
}

#[test]
fn head_perturbation_touches_only_its_group() {
    let net = small_net(2, InitScheme::Small);
    let z = [0.5, -0.5, 0.25, 1.0];
    let base = net.weights_for(&z).unwrap();
    for (gi, &head) in net.head_indices().iter().enumerate() {
        let mut p = net.clone();
        p.params_mut().get_mut(head).data_mut()[0] += 0.1;
        let moved = p.weights_for(&z).unwrap();
        for (k, (a, b)) in base.iter().zip(&moved).enumerate() {
            if k == gi {
                assert_ne!(a, b, "group {k} should move");
            } else {
                assert_eq!(a, b, "group {k} should not move");
            }
        }
    }
}

#[test]
fn identity_weights_pass_nonnegative_input_through() {
    let spec = DynamicSpec::single_hidden(3, 3, 3);
    let eye = Tensor::identity(3).into_data();
    let z3 = vec![0.0; 3];
    let groups = vec![eye.clone(), z3.clone(), z3.clone(), eye, z3.clone(), z3];
    let x = [0.0, 1.5, 2.25];
    assert_eq!(run_dynamic(&spec, &groups, &x), x.to_vec());
}

#[test]
fn unit_negative_gain_removes_input_dependence() {
    let spec = DynamicSpec::single_hidden(2, 3, 1);
    let mut rng = stream_rng(3, 0);
    let groups = vec![
        normals(&mut rng, 6),
        vec![0.5, -0.25, 1.0],
        vec![-1.0; 3],
        normals(&mut rng, 3),
        vec![0.1],
        vec![0.3],
    ];
    let hidden = [0.5, 0.0, 1.0];
    let expected: f64 = 1.3 * hidden.iter().zip(&groups[3]).map(|(h, w)| h * w).sum::<f64>() + 0.1;
    for x in [[1.0, 2.0], [-4.0, 0.5], [0.0, 0.0]] {
        let y = run_dynamic(&spec, &groups, &x)[0];
        assert!((y - expected).abs() < 1e-15);
    }
}

#[test]
fn dynamic_forward_matches_hand_composition() {
    let spec = DynamicSpec::single_hidden(3, 4, 2);
    let mut rng = stream_rng(4, 0);
    for _ in 0..20 {
        let sizes: Vec<usize> = spec.groups().iter().map(|g| g.size).collect();
        let groups: Vec<Vec<f64>> = sizes.iter().map(|&n| normals(&mut rng, n)).collect();
        let x = normals(&mut rng, 3);
        let got = run_dynamic(&spec, &groups, &x);

        let mut g = Graph::new();
        let xv = g.constant(Tensor::row(x.clone()));
        let w1 = g.constant(Tensor::matrix(3, 4, groups[0].clone()).unwrap());
        let b1 = g.constant(Tensor::row(groups[1].clone()));
        let s1 = g.constant(Tensor::row(groups[2].iter().map(|v| 1.0 + v).collect()));
        let w2 = g.constant(Tensor::matrix(4, 2, groups[3].clone()).unwrap());
        let b2 = g.constant(Tensor::row(groups[4].clone()));
        let s2 = g.constant(Tensor::row(groups[5].iter().map(|v| 1.0 + v).collect()));
        let h = g.matmul(xv, w1).unwrap();
        let h = g.mul(h, s1).unwrap();
        let h = g.add(h, b1).unwrap();
        let h = g.relu(h);
        let o = g.matmul(h, w2).unwrap();
        let o = g.mul(o, s2).unwrap();
        let o = g.add(o, b2).unwrap();
        assert_eq!(got, g.value(o).data().to_vec());
    }
}

#[test]
fn doubling_output_gain_doubles_output() {
    let spec = DynamicSpec::single_hidden(3, 6, 2);
    let mut rng = stream_rng(8, 0);
    let mut groups: Vec<Vec<f64>> = spec.groups().iter().map(|g| normals(&mut rng, g.size)).collect();
    groups[4] = vec![0.0; 2];
    groups[5] = uniform_vec(&mut rng, 2, 0.0, 1.0);
    let x = normals(&mut rng, 3);
    let base = run_dynamic(&spec, &groups, &x);
    groups[5] = groups[5].iter().map(|g| 2.0 * (1.0 + g) - 1.0).collect();
    let doubled = run_dynamic(&spec, &groups, &x);
    for (a, b) in base.iter().zip(&doubled) {
        assert_eq!(2.0 * a, *b);
    }
}

#[test]
fn per_sample_weights_match_row_by_row_evaluation() {
    let net = small_net(9, InitScheme::Default);
    let mut rng = stream_rng(9, 1);
    let zs: Vec<Vec<f64>> = (0..5).map(|_| normals(&mut rng, 4)).collect();
    let xs: Vec<Vec<f64>> = (0..5).map(|_| normals(&mut rng, 3)).collect();
    let mut g = Graph::new();
    let vars = net.params().bind(&mut g, false);
    let zv = g.constant(Tensor::from_rows(&zs).unwrap());
    let xv = g.constant(Tensor::from_rows(&xs).unwrap());
    let y = net.forward(&mut g, &vars, zv, xv).unwrap();
    let batched = g.value(y).clone();
    for i in 0..5 {
        let row = eval(&net, &zs[i], &xs[i]);
        for (a, b) in batched.row_slice(i).iter().zip(&row) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn shape_errors_are_reported() {
    let net = small_net(1, InitScheme::Small);
    let mut g = Graph::new();
    let vars = net.params().bind(&mut g, false);
    let z = g.constant(Tensor::row(vec![0.0; 3]));
    let x = g.constant(Tensor::row(vec![0.0; 3]));
    let err = net.forward(&mut g, &vars, z, x).unwrap_err();
    assert!(err.to_string().contains("[1, 3]"), "{err}");
    let z = g.constant(Tensor::row(vec![0.0; 4]));
    let x = g.constant(Tensor::row(vec![0.0; 2]));
    assert!(net.forward(&mut g, &vars, z, x).is_err());
}

#[test]
fn every_head_receives_gradient() {
    let net = small_net(11, InitScheme::Small);
    let mut g = Graph::new();
    let vars = net.params().bind(&mut g, true);
    let z = g.constant(Tensor::row(vec![0.4, -0.3, 0.9, 0.2]));
    let x = g.constant(Tensor::from_rows(&[vec![0.5, -1.0, 0.25], vec![-0.2, 0.3, 1.0]]).unwrap());
    let y = net.forward(&mut g, &vars, z, x).unwrap();
    let s = g.sum(y);
    g.backward(s).unwrap();
    for &h in net.head_indices() {
        let grad = g.grad(vars[h]).unwrap();
        assert!(
            grad.iter().any(|&v| v != 0.0),
            "head {} has no gradient",
            net.params().name(h)
        );
    }
}

#[test]
fn small_init_heads_lie_in_their_intervals() {
    let spec = DynamicSpec::single_hidden(3, 16, 2).with_log_std();
    let net = HyperNet::new(
        4,
        small_config(),
        spec.clone(),
        InitScheme::Small,
        &mut stream_rng(0, 0),
    );
    for (group, &h) in spec.groups().iter().zip(net.head_indices()) {
        let bound = match group.kind {
            GroupKind::LogStd => 0.001,
            _ if group.layer == 0 => 0.05,
            _ => 0.008,
        };
        let w = net.params().get(h).data();
        assert!(w.iter().all(|x| x.abs() <= bound), "{}", group.name);
        // The interval is actually used, not just respected.
        assert!(w.iter().any(|x| x.abs() > 0.5 * bound), "{}", group.name);
        assert!(net.params().get(h + 1).data().iter().all(|&b| b == 0.0));
    }
}

#[test]
fn trunk_std_matches_uniform_closed_form() {
    let net = HyperNet::new(
        4,
        PrimaryConfig::desk(),
        DynamicSpec::single_hidden(2, 8, 1),
        InitScheme::Small,
        &mut stream_rng(1, 0),
    );
    for i in (0..net.trunk_len()).step_by(2) {
        let t = net.params().get(i);
        if t.numel() < 10_000 {
            continue;
        }
        // Kaiming-uniform bound with gain 1/sqrt(12) is 1/(2 sqrt(fan_in)).
        let expected = 1.0 / (2.0 * (t.shape()[0] as f64).sqrt()) / 3f64.sqrt();
        let n = t.numel() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let sd = (t.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(
            (sd / expected - 1.0).abs() < 0.05,
            "{}: {sd} vs {expected}",
            net.params().name(i)
        );
    }
}

#[test]
fn full_scale_parameter_counts() {
    let (n_s, n_a, hidden) = (17usize, 6usize, 256usize);
    let spec = DynamicSpec::single_hidden(n_a, hidden, 1);
    let n_w = n_a * hidden + 2 * hidden + hidden + 2;
    assert_eq!(spec.param_count(), n_w);
    assert_eq!(n_w, 2306);

    let widths = [256usize, 512, 1024];
    let mut trunk = 0;
    let mut prev = n_s;
    for w in widths {
        trunk += prev * w + w + 2 * 2 * (w * w + w);
        prev = w;
    }
    let heads = spec.groups().iter().map(|g| 1024 * g.size + g.size).sum::<usize>();
    assert_eq!(heads, 1025 * n_w);

    let net = HyperNet::new(
        n_s,
        PrimaryConfig::full(),
        spec,
        InitScheme::Small,
        &mut stream_rng(0, 0),
    );
    let total = net.params().numel();
    assert_eq!(total, trunk + heads);
    let head_params: usize = net
        .head_indices()
        .iter()
        .map(|&h| net.params().get(h).numel() + net.params().get(h + 1).numel())
        .sum();
    assert_eq!(head_params, heads);
    assert!((total as f64 / 9e6 - 1.0).abs() < 0.1, "total {total}");
    assert!((heads as f64 / 2.5e6 - 1.0).abs() < 0.1, "heads {heads}");
}

#[test]
fn weight_jacobian_matches_finite_differences() {
    let net = small_net(12, InitScheme::Default);
    let z = [0.3, -0.7, 0.2, 0.9];
    let (w, jac) = net.weight_jacobian(&z).unwrap();
    let direct: Vec<f64> = net.weights_for(&z).unwrap().concat();
    for (a, b) in w.iter().zip(&direct) {
        assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
    }
    for j in 0..z.len() {
        for r in (0..w.len()).step_by(7) {
            let f = |d: f64| {
                let mut zp = z;
                zp[j] += d;
                net.weights_for(&zp).unwrap().concat()[r]
            };
            let fd = (f(1e-6) - f(-1e-6)) / 2e-6;
            assert!((fd - jac[(r, j)]).abs() < 1e-6 * (1.0 + fd.abs()), "row {r} col {j}");
        }
    }
}

#[test]
fn tv_distance_extremes_and_sampling_noise() {
    let a = [0.1, 0.5, 0.9, 0.3];
    assert_eq!(weight_tv_distance(&a, &a, 10).unwrap(), 0.0);
    assert_eq!(weight_tv_distance(&[0.0, 0.1], &[5.0, 6.0], 10).unwrap(), 1.0);
    assert!(weight_tv_distance(&[], &a, 10).is_err());
    let mut rng = stream_rng(13, 0);
    let x = normals(&mut rng, 100_000);
    let y = normals(&mut rng, 100_000);
    assert!(weight_tv_distance(&x, &y, 100).unwrap() <= 0.02);
}

#[test]
fn small_init_generates_tighter_dynamic_weights() {
    let audit = init_audit(4, 2, 32, &small_config(), 64, 50, 0).unwrap();
    assert!(audit.heads_in_interval);
    for layer in &audit.layers {
        assert!(layer.small_std < layer.default_std, "{layer:?}");
    }
}
