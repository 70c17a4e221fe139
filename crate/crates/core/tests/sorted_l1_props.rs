mod common;

use pivotal_slope::sorted_l1::{dual_norm_eval, norm_eval, prox, validate};
use pivotal_slope::WeightSequence;
use proptest::prelude::*;

fn weights(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..3.0f64, d).prop_map(|mut g| {
        g.sort_by(|a, b| b.partial_cmp(a).unwrap());
        g[0] += 0.1;
        g
    })
}

fn vec_and_weights(max_d: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_d).prop_flat_map(|d| (prop::collection::vec(-10.0..10.0f64, d), weights(d)))
}

fn pair_and_weights(max_d: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1..=max_d).prop_flat_map(|d| {
        (
            prop::collection::vec(-10.0..10.0f64, d),
            prop::collection::vec(-10.0..10.0f64, d),
            weights(d),
        )
    })
}

fn ws(g: &[f64]) -> WeightSequence {
    WeightSequence::new(g.to_vec()).unwrap()
}

/// Vector attaining `<u, v> = ||v||_gamma * dual(u)`: signs of `u` on its `k`
/// largest entries, for the `k` maximizing the prefix ratio.
fn dual_maximizer(u: &[f64], gamma: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&a, &b| u[b].abs().partial_cmp(&u[a].abs()).unwrap());
    let (mut num, mut den, mut best, mut best_k) = (0.0, 0.0, f64::NEG_INFINITY, 1);
    for (k, &i) in order.iter().enumerate() {
        num += u[i].abs();
        den += gamma[k];
        if den > 0.0 && num / den > best {
            best = num / den;
            best_k = k + 1;
        }
    }
    let mut v = vec![0.0; u.len()];
    for &i in &order[..best_k] {
        v[i] = if u[i] < 0.0 { -1.0 } else { 1.0 };
    }
    v
}

proptest! {
    #[test]
    fn norm_is_absolutely_homogeneous((v, g) in vec_and_weights(30), k in -5.0..5.0f64) {
        let gamma = ws(&g);
        let kv: Vec<f64> = v.iter().map(|x| k * x).collect();
        let lhs = norm_eval(&kv, &gamma).unwrap();
        let rhs = k.abs() * norm_eval(&v, &gamma).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
    }

    #[test]
    fn norm_satisfies_triangle_inequality((u, v, g) in pair_and_weights(30)) {
        let gamma = ws(&g);
        let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        let lhs = norm_eval(&sum, &gamma).unwrap();
        let rhs = norm_eval(&u, &gamma).unwrap() + norm_eval(&v, &gamma).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn norm_vanishes_only_at_zero((v, g) in vec_and_weights(30)) {
        let gamma = ws(&g);
        let zero = vec![0.0; v.len()];
        prop_assert_eq!(norm_eval(&zero, &gamma).unwrap(), 0.0);
        if v.iter().any(|x| *x != 0.0) {
            prop_assert!(norm_eval(&v, &gamma).unwrap() > 0.0);
        }
    }

    #[test]
    fn norm_ignores_signed_permutations(
        (v, g) in vec_and_weights(30),
        seed in any::<u64>(),
    ) {
        let gamma = ws(&g);
        let d = v.len();
        let mut perm: Vec<usize> = (0..d).collect();
        let mut state = seed;
        for i in (1..d).rev() {
            state = pivotal_slope::rng::mix64(state);
            perm.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let pv: Vec<f64> = perm
            .iter()
            .enumerate()
            .map(|(k, &i)| if (seed >> (k % 64)) & 1 == 1 { -v[i] } else { v[i] })
            .collect();
        let a = norm_eval(&v, &gamma).unwrap();
        let b = norm_eval(&pv, &gamma).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
    }

    #[test]
    fn duality_inequality_is_tight((u, v, g) in pair_and_weights(30)) {
        let gamma = ws(&g);
        let dual = dual_norm_eval(&u, &gamma).unwrap();
        let inner: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        prop_assert!(inner <= norm_eval(&v, &gamma).unwrap() * dual * (1.0 + 1e-12) + 1e-12);
        let w = dual_maximizer(&u, &g);
        let attained: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
        let bound = norm_eval(&w, &gamma).unwrap() * dual;
        prop_assert!((attained - bound).abs() <= 1e-10 * (1.0 + bound));
    }

    #[test]
    fn prox_is_nonexpansive((u, v, g) in pair_and_weights(40), t in 0.01..3.0f64) {
        let gamma = ws(&g);
        let pu = prox(&u, &gamma, t).unwrap();
        let pv = prox(&v, &gamma, t).unwrap();
        let out: f64 = pu.iter().zip(&pv).map(|(a, b)| (a - b).powi(2)).sum();
        let inp: f64 = u.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum();
        prop_assert!(out <= inp * (1.0 + 1e-12) + 1e-24);
    }

    #[test]
    fn prox_residual_is_a_scaled_subgradient((v, g) in vec_and_weights(60), t in 0.01..3.0f64) {
        let gamma = ws(&g);
        let w = prox(&v, &gamma, t).unwrap();
        let r: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a - b).collect();
        prop_assert!(dual_norm_eval(&r, &gamma).unwrap() <= t * (1.0 + 1e-9));
        let inner: f64 = r.iter().zip(&w).map(|(a, b)| a * b).sum();
        let target = t * norm_eval(&w, &gamma).unwrap();
        prop_assert!((inner - target).abs() <= 1e-9 * target.max(1e-12));
    }

    #[test]
    fn prox_matches_enumeration((v, g) in vec_and_weights(6), t in 0.01..3.0f64) {
        let fast = prox(&v, &ws(&g), t).unwrap();
        let slow = common::prox_enumerate(&v, &g, t);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-6, "{fast:?} vs {slow:?}");
        }
    }

    #[test]
    fn prox_preserves_signs_and_magnitude_order((v, g) in vec_and_weights(40), t in 0.01..3.0f64) {
        let w = prox(&v, &ws(&g), t).unwrap();
        for i in 0..v.len() {
            prop_assert!(w[i] * v[i] >= 0.0);
            for j in 0..v.len() {
                if v[i].abs() > v[j].abs() {
                    prop_assert!(w[i].abs() >= w[j].abs());
                }
            }
        }
    }
}

#[test]
fn validate_rejects_increasing_or_negative_weights() {
    assert!(validate(&[2.0, 1.0, 1.0]).is_ok());
    assert!(validate(&[1.0, 2.0]).is_err());
    assert!(validate(&[1.0, -0.5]).is_err());
    assert!(validate(&[]).is_err());
}

#[test]
fn prox_with_equal_weights_is_soft_thresholding() {
    let v = [3.0, -0.5, 1.2, -2.0];
    let w = prox(&v, &WeightSequence::constant(1.0, 4).unwrap(), 1.0).unwrap();
    assert_eq!(w, vec![2.0, 0.0, 0.19999999999999996, -1.0]);
}
