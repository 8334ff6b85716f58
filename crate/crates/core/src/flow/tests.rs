use proptest::prelude::*;
use rand::Rng as _;

use super::*;
use crate::cop::{HeuristicSolver, Instance, InsertionMethod, TourSolver};
use crate::seed;

fn unsquashed() -> FlowConfig {
    FlowConfig { squash: false, ..FlowConfig::default() }
}

fn random_flow(seed: u64) -> FlowDistribution {
    FlowDistribution::random(FlowConfig::default(), seed).unwrap()
}

/// Central-difference Jacobian of the inverse map.
fn numeric_inverse_log_det(flow: &FlowDistribution, x: [f64; 2]) -> f64 {
    let h = 1e-6;
    let mut jac = [[0.0; 2]; 2];
    for c in 0..2 {
        let mut lo = x;
        let mut hi = x;
        lo[c] -= h;
        hi[c] += h;
        let (zl, _) = flow.inverse(lo).unwrap();
        let (zh, _) = flow.inverse(hi).unwrap();
        for r in 0..2 {
            jac[r][c] = (zh[r] - zl[r]) / (2.0 * h);
        }
    }
    (jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0]).abs().ln()
}

#[test]
fn identity_flow_without_squash_returns_prior_draws() {
    let flow = FlowDistribution::new(unsquashed(), 3).unwrap();
    let mut a = seed::rng(11);
    let mut b = seed::rng(11);
    let pts = flow.sample_points(50, &mut a).unwrap();
    for p in pts {
        let z: [f64; 2] = [b.random(), b.random()];
        assert_eq!(p, z);
    }
}

#[test]
fn identity_flow_has_zero_log_density() {
    for cfg in [unsquashed(), FlowConfig::default()] {
        let flow = FlowDistribution::new(cfg, 5).unwrap();
        for p in [[0.1, 0.9], [0.5, 0.5], [0.01, 0.3]] {
            assert!(flow.log_density(p).abs() < 1e-12, "{cfg:?} {p:?}");
        }
        let inst = Instance::new(vec![[0.2, 0.4], [0.7, 0.1], [0.3, 0.3]]).unwrap();
        assert!(flow.instance_log_density(&inst).abs() < 1e-12);
    }
}

#[test]
fn outside_domain_is_neg_infinity() {
    let flow = random_flow(1);
    for p in [[0.0, 0.5], [1.0, 0.5], [0.5, -0.1], [1.2, 0.3], [f64::NAN, 0.2]] {
        assert_eq!(flow.log_density(p), f64::NEG_INFINITY, "{p:?}");
    }
    let inst = Instance::new(vec![[0.0, 0.5], [0.3, 0.3]]).unwrap();
    assert_eq!(flow.instance_log_density(&inst), f64::NEG_INFINITY);
}

#[test]
fn samples_stay_inside_open_square() {
    for s in 0..5 {
        let flow = random_flow(s);
        for inst in flow.sample(20, 10, s).unwrap() {
            for p in inst.points() {
                assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
            }
        }
    }
}

#[test]
fn round_trip_on_many_points() {
    for s in 0..4 {
        let flow = random_flow(100 + s);
        let mut rng = seed::rng(s);
        for _ in 0..250 {
            let z = [rng.random_range(0.001..0.999), rng.random_range(0.001..0.999)];
            let (x, fwd) = flow.forward(z);
            let (back, inv) = flow.inverse(x).unwrap();
            assert!((back[0] - z[0]).abs() < 1e-8 && (back[1] - z[1]).abs() < 1e-8);
            assert!((fwd + inv).abs() < 1e-8);
        }
    }
}

#[test]
fn analytic_log_det_matches_numeric_jacobian() {
    for s in 0..5 {
        let flow = random_flow(200 + s);
        let mut rng = seed::rng(s);
        for _ in 0..20 {
            let x = [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)];
            let analytic = flow.log_density(x);
            let numeric = numeric_inverse_log_det(&flow, x);
            assert!((analytic - numeric).abs() < 1e-4, "{analytic} vs {numeric}");
        }
    }
}

#[test]
fn constant_scale_single_coupling_matches_hand_formula() {
    let cfg = FlowConfig { coupling_layers: 1, hidden: 4, squash: true };
    let mut flow = FlowDistribution::new(cfg, 0).unwrap();
    let s = 0.7;
    flow.params_mut().get_mut("c0.s.b3").unwrap().data[0] = s;
    let z = [0.3, 0.6];
    let (x, fwd) = flow.forward(z);
    let logit = |v: f64| (v / (1.0 - v)).ln();
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let v1 = logit(z[1]) * s.exp();
    assert!((x[0] - z[0]).abs() < 1e-12);
    assert!((x[1] - sig(v1)).abs() < 1e-12);
    // Logit of z, the coupling, then the logistic squash of each coordinate.
    let hand = -(z[0] * (1.0 - z[0])).ln() - (z[1] * (1.0 - z[1])).ln()
        + s
        + (x[0] * (1.0 - x[0])).ln()
        + (x[1] * (1.0 - x[1])).ln();
    assert!((fwd - hand).abs() < 1e-10);
    assert!((flow.log_density(x) + hand).abs() < 1e-10);

    let unsq = FlowConfig { squash: false, ..cfg };
    let mut flow = FlowDistribution::new(unsq, 0).unwrap();
    flow.params_mut().get_mut("c0.s.b3").unwrap().data[0] = -0.4;
    let (x, fwd) = flow.forward([0.5, 0.5]);
    assert!((fwd + 0.4).abs() < 1e-12);
    assert!((flow.log_density(x) - 0.4).abs() < 1e-12);
}

#[test]
fn grid_integral_of_density_is_one() {
    let res = 200;
    let cell = 1.0 / (res * res) as f64;
    for s in 0..3 {
        let flow = random_flow(300 + s);
        let total: f64 = density_grid(&[1.0], &[&flow], res).unwrap().iter().map(|c| c.density).sum::<f64>() * cell;
        assert!((total - 1.0).abs() < 0.02, "seed {s}: {total}");
    }
}

#[test]
fn uniform_importance_estimate_is_one() {
    let flow = random_flow(42);
    let mut rng = seed::rng(9);
    let m = 100_000;
    let mean = (0..m).map(|_| flow.log_density([rng.random(), rng.random()]).exp()).sum::<f64>() / m as f64;
    assert!((mean - 1.0).abs() < 0.02, "{mean}");
}

#[test]
fn mixture_density_cases() {
    let a = FlowDistribution::new(unsquashed(), 1).unwrap();
    let b = FlowDistribution::new(unsquashed(), 2).unwrap();
    for p in [[0.2, 0.3], [0.9, 0.01]] {
        assert!((mixture_density(&[0.5, 0.5], &[&a, &b], p).unwrap() - 1.0).abs() < 1e-12);
    }
    let r = random_flow(7);
    let p = [0.3, 0.8];
    assert_eq!(mixture_density(&[1.0], &[&r], p).unwrap(), r.log_density(p).exp());
    assert_eq!(mixture_density(&[1.0], &[&r], [1.5, 0.2]).unwrap(), 0.0);
    assert!(mixture_density(&[0.6, 0.6], &[&a, &b], p).is_err());

    let flows = [random_flow(11), random_flow(12), random_flow(13)];
    let refs: Vec<&FlowDistribution> = flows.iter().collect();
    let total: f64 =
        density_grid(&[0.2, 0.3, 0.5], &refs, 20).unwrap().iter().map(|c| c.density).sum::<f64>() / 400.0;
    assert!((total - 1.0).abs() < 0.05, "{total}");
}

#[test]
fn tape_log_density_matches_direct_evaluation() {
    let flow = random_flow(21);
    let pts: Vec<[f64; 2]> = flow.sample(6, 3, 4).unwrap().iter().flat_map(|i| i.points().to_vec()).collect();
    let mut tape = crate::autodiff::Tape::new();
    let bound = flow.params().bind(&mut tape);
    let v = flow.log_density_tape(&mut tape, &bound, &pts).unwrap();
    for (i, p) in pts.iter().enumerate() {
        let direct = flow.log_density(*p);
        assert!((tape.value(v).data[i] - direct).abs() < 1e-9);
    }
    let inst = Instance::new(pts[..5].to_vec()).unwrap();
    let split: f64 = pts[..5].iter().map(|p| flow.log_density(*p)).sum();
    assert!((flow.instance_log_density(&inst) - split).abs() < 1e-12);
    assert_eq!(flow.points_log_density(&pts[..1]), flow.log_density(pts[0]));
}

#[test]
fn score_gradient_matches_finite_differences() {
    let cfg = FlowConfig { coupling_layers: 3, hidden: 8, squash: true };
    for s in 0..3u64 {
        let flow = FlowDistribution::random(cfg, s).unwrap();
        let insts = flow.sample(5, 4, s + 10).unwrap();
        let rewards = [0.1, 0.5, 0.2, 0.9];
        let g = score_gradient(&flow, &insts, &rewards).unwrap().flat();
        let base = flow.params().flat();
        let h = 1e-6;
        let mut rng = seed::rng(s);
        for _ in 0..25 {
            let k = rng.random_range(0..base.len());
            let eval = |delta: f64| {
                let mut f = flow.clone();
                let mut v = base.clone();
                v[k] += delta;
                f.params_mut().set_flat(&v);
                score_surrogate(&f, &insts, &rewards).unwrap()
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let denom = g[k].abs().max(fd.abs()).max(1e-6);
            assert!((g[k] - fd).abs() / denom < 1e-3, "param {k}: {} vs {fd}", g[k]);
        }
    }
}

#[test]
fn constant_rewards_give_zero_gradient() {
    let flow = random_flow(5);
    for s in 0..20 {
        let insts = flow.sample(6, 8, s).unwrap();
        let g = score_gradient(&flow, &insts, &[0.4; 8]).unwrap();
        assert!(g.norm() < 1e-12);
    }
}

#[test]
fn zero_epochs_leave_parameters_unchanged() {
    let flow = random_flow(8);
    let solver = HeuristicSolver(InsertionMethod::NearestInsertion);
    let solvers: [&dyn TourSolver; 1] = [&solver];
    let cfg = GeneratorTrainConfig { epochs: 0, ..Default::default() };
    let (out, report) = train_generator_oracle(&flow, &solvers, &[1.0], 6, &cfg, 1).unwrap();
    assert_eq!(out, flow);
    assert!(report.epoch_rewards.is_empty());
}

#[test]
fn exact_reward_above_capacity_is_rejected() {
    let flow = random_flow(8);
    let solver = HeuristicSolver(InsertionMethod::NearestInsertion);
    let solvers: [&dyn TourSolver; 1] = [&solver];
    let cfg = GeneratorTrainConfig { reward_mode: Some(RewardMode::GapExact), exact_limit: 6, ..Default::default() };
    assert!(train_generator_oracle(&flow, &solvers, &[1.0], 8, &cfg, 1).is_err());
    assert_eq!(RewardMode::default_for(8, 6), RewardMode::GapProxy);
    assert_eq!(RewardMode::default_for(6, 6), RewardMode::GapExact);
}

#[test]
fn checkpoint_round_trip() {
    let flow = random_flow(13);
    let doc = flow.to_checkpoint(serde_json::json!({"scale": 8}));
    assert_eq!(doc["header"]["coupling_layers"], 5);
    let text = serde_json::to_string(&doc).unwrap();
    let back = FlowDistribution::from_checkpoint(&serde_json::from_str(&text).unwrap()).unwrap();
    assert_eq!(back, flow);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn random_flows_are_bijective(seed in any::<u64>(), z0 in 0.01f64..0.99, z1 in 0.01f64..0.99) {
        let flow = random_flow(seed);
        let (x, _) = flow.forward([z0, z1]);
        let (z, _) = flow.inverse(x).unwrap();
        prop_assert!((z[0] - z0).abs() < 1e-8 && (z[1] - z1).abs() < 1e-8);
    }
}
