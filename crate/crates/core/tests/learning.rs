mod common;

use common::{brute_force_gae, fd_max_rel_error, random_input, random_net};
use orderpick::config::ExperimentConfig;
use orderpick::marl::nn::{masked_softmax, Mlp};
use orderpick::marl::policy::{select_action, ActMode, Algorithm, NetworkShape, PolicySet};
use orderpick::marl::{gae, standardize};
use orderpick::sim::Env;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn finite_differences_small_nets() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..20 {
        let inputs = rng.random_range(1..8);
        let hidden: Vec<usize> = (0..rng.random_range(1..4)).map(|_| rng.random_range(1..10)).collect();
        let actions = rng.random_range(2..7);
        let net = random_net(&mut rng, inputs, &hidden, &[actions, actions]);
        let x = random_input(&mut rng, inputs);
        let mut mask: Vec<bool> = (0..actions).map(|_| rng.random_bool(0.6)).collect();
        let a = rng.random_range(0..actions);
        mask[a] = true;
        let err = fd_max_rel_error(&net, trial % 2, &x, &mask, a);
        assert!(err < 1e-4, "trial {trial}: relative error {err}");
    }
}

#[test]
fn finite_differences_manager_and_worker_sizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let manager = random_net(&mut rng, 40, &[128, 128, 128], &[6, 6, 6]);
    let mut mask = vec![true; 6];
    mask[2] = false;
    let x = random_input(&mut rng, 40);
    let err = fd_max_rel_error(&manager, 1, &x, &mask, 4);
    assert!(err < 1e-4, "3x128 relative error {err}");

    let worker = random_net(&mut rng, 30, &[64, 64], &[12]);
    let x = random_input(&mut rng, 30);
    let mask: Vec<bool> = (0..12).map(|j| j % 3 != 0).collect();
    let err = fd_max_rel_error(&worker, 0, &x, &mask, 5);
    assert!(err < 1e-4, "2x64 relative error {err}");
}

#[test]
fn probabilities_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = Mlp::new(6, &[16, 16], &[9], &mut rng);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mask: Vec<bool> = (0..9).map(|_| rng.random_bool(0.5)).collect();
        if !mask.iter().any(|m| *m) {
            continue;
        }
        let out = net.forward(&x, 0, Some(&mask)).unwrap();
        let sum: f64 = out.probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        for (p, m) in out.probs.iter().zip(&mask) {
            assert!(*p >= 0.0);
            if !m {
                assert_eq!(*p, 0.0);
            }
        }
        assert!(out.value.is_finite());
    }
}

#[test]
fn masked_sampling_never_picks_illegal() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut violations = 0;
    for _ in 0..100_000 {
        let logits: Vec<f64> = (0..7).map(|_| rng.random_range(-20.0..20.0)).collect();
        let mut mask: Vec<bool> = (0..7).map(|_| rng.random_bool(0.3)).collect();
        let j = rng.random_range(0..7);
        mask[j] = true;
        let p = masked_softmax(&logits, &mask).unwrap();
        if !mask[select_action(&p, ActMode::Sample, &mut rng)] {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn gae_matches_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let t = rng.random_range(1..=200);
        let rewards: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..=t).map(|_| rng.random_range(-2.0..2.0)).collect();
        let dones: Vec<bool> = (0..t).map(|_| rng.random_bool(0.05)).collect();
        let gamma = rng.random_range(0.0..=1.0);
        let lambda = rng.random_range(0.0..=1.0);
        let (adv, ret) = gae(&rewards, &values, &dones, gamma, lambda).unwrap();
        let oracle = brute_force_gae(&rewards, &values, &dones, gamma, lambda);
        for i in 0..t {
            assert!((adv[i] - oracle[i]).abs() < 1e-9, "t={t} i={i}: {} vs {}", adv[i], oracle[i]);
            assert!((ret[i] - adv[i] - values[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn standardize_example() {
    let mut x = vec![1.0, 2.0, 3.0];
    standardize(&mut x);
    let mean: f64 = x.iter().sum::<f64>() / 3.0;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
    assert!(mean.abs() < 1e-12 && (std - 1.0).abs() < 1e-12);
    let mut one = vec![4.2];
    standardize(&mut one);
    assert_eq!(one, vec![4.2]);
}

proptest! {
    #[test]
    fn standardize_moments_and_order(xs in prop::collection::vec(-1e3f64..1e3, 2..300)) {
        let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-6);
        let argmax = |v: &[f64]| v.iter().enumerate().fold(0, |b, (i, x)| if *x > v[b] { i } else { b });
        let before = argmax(&xs);
        let mut y = xs.clone();
        standardize(&mut y);
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() < 1e-6);
        prop_assert!((std - 1.0).abs() < 1e-6);
        prop_assert_eq!(argmax(&y), before);
    }

    #[test]
    fn gae_lambda_zero_is_td_error(rs in prop::collection::vec(-1f64..1.0, 1..50), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..=rs.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dones = vec![false; rs.len()];
        let (adv, _) = gae(&rs, &values, &dones, 0.9, 0.0).unwrap();
        for i in 0..rs.len() {
            prop_assert!((adv[i] - (rs[i] + 0.9 * values[i + 1] - values[i])).abs() < 1e-12);
        }
    }
}

fn tiny_env() -> Env {
    ExperimentConfig::tiny().build_env().unwrap()
}

fn shape() -> NetworkShape {
    NetworkShape { manager_hidden: vec![32, 32, 32], worker_hidden: vec![16, 16] }
}

#[test]
fn learned_decisions_stay_legal() {
    let mut env = tiny_env();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let policy = PolicySet::new(Algorithm::Hsnac, &env.warehouse().graph, 2, 1, 2, &shape(), &mut rng).unwrap();
    let mut seed = 0;
    let mut count = 0;
    env.reset(seed);
    while count < 20_000 {
        if env.is_done() {
            seed += 1;
            env.reset(seed);
        }
        let (actions, decisions) = policy.act(&env, ActMode::Sample, &mut rng).unwrap();
        for d in &decisions {
            assert!(env.is_legal(d.agent, d.target));
            count += 1;
        }
        env.advance(&actions).unwrap();
    }
}

#[test]
fn single_sector_has_same_support_as_flat() {
    let mut env = tiny_env();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = env.warehouse().graph.clone();
    let h = PolicySet::new(Algorithm::Hsnac, &g, 2, 1, 1, &shape(), &mut rng).unwrap();
    let s = PolicySet::new(Algorithm::Snac, &g, 2, 1, 1, &shape(), &mut rng).unwrap();
    let mut driver = ChaCha8Rng::seed_from_u64(9);
    env.reset(3);
    while !env.is_done() {
        let (actions, hd) = h.act(&env, ActMode::Sample, &mut driver).unwrap();
        let (_, sd) = s.act(&env, ActMode::Sample, &mut driver).unwrap();
        for (a, b) in hd.iter().zip(&sd) {
            let members = &h.sectors.sectors[0];
            let hs: Vec<usize> = a.worker.mask.iter().enumerate().filter(|(_, m)| **m).map(|(j, _)| members[j].idx()).collect();
            let ss: Vec<usize> = b.worker.mask.iter().enumerate().filter(|(_, m)| **m).map(|(j, _)| j).collect();
            assert_eq!(hs, ss);
        }
        env.advance(&actions).unwrap();
    }
}

#[test]
fn shared_worker_net_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let net = Mlp::new(10, &[64, 64], &[8], &mut rng);
    let a = random_input(&mut rng, 10);
    let b = random_input(&mut rng, 10);
    let mask = vec![true; 8];
    let (pa, pb) = (net.forward(&a, 0, Some(&mask)).unwrap(), net.forward(&b, 0, Some(&mask)).unwrap());
    // swapping which picker holds which observation swaps the outputs
    let (qb, qa) = (net.forward(&b, 0, Some(&mask)).unwrap(), net.forward(&a, 0, Some(&mask)).unwrap());
    assert_eq!(pa, qa);
    assert_eq!(pb, qb);
}
