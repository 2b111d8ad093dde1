mod common;

use common::{gauss_jordan, mat_vec, quad_form, random_orthogonal, regularized_cov};
use e3b_core::ellipse::symmetric_eigen;
use e3b_core::rng::SplitMix64;
use e3b_core::{eigen_bonus, oracle_inverse, EllipticalTracker};
use proptest::prelude::*;

fn stream(seed: u64, dim: usize, len: usize) -> Vec<Vec<f64>> {
    let mut rng = SplitMix64::new(seed);
    let s = 1.0 / (dim as f64).sqrt();
    (0..len).map(|_| common::gaussian_vec(&mut rng, dim, s)).collect()
}

#[test]
fn fresh_tracker_is_scaled_identity() {
    let t = EllipticalTracker::new(3, 0.1).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { 10.0 } else { 0.0 };
            assert!((t.inv_cov()[i * 3 + j] - want).abs() < 1e-15);
        }
    }
    assert_eq!(t.count(), 0);
}

#[test]
fn two_dim_hand_example() {
    // C = 0.5·I + e1e1ᵀ + (e1+e2)(e1+e2)ᵀ = [[2.5, 1], [1, 1.5]], det 2.75.
    let mut t = EllipticalTracker::new(2, 0.5).unwrap();
    assert!((t.update(&[1.0, 0.0]).unwrap() - 2.0).abs() < 1e-14);
    // after e1: C = diag(1.5, 0.5), bonus of (1,1) = 1/1.5 + 1/0.5
    assert!((t.update(&[1.0, 1.0]).unwrap() - (1.0 / 1.5 + 2.0)).abs() < 1e-14);
    let want = [1.5 / 2.75, -1.0 / 2.75, -1.0 / 2.75, 2.5 / 2.75];
    for (a, b) in t.inv_cov().iter().zip(want) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn crate_oracle_matches_test_oracle() {
    let hist = stream(11, 6, 40);
    let ours = gauss_jordan(&regularized_cov(&hist, 6, 0.1));
    let theirs = oracle_inverse(&hist, 6, 0.1).unwrap();
    for i in 0..6 {
        for j in 0..6 {
            assert!((ours[i][j] - theirs[i * 6 + j]).abs() < 1e-10);
        }
    }
}

#[test]
fn jacobi_reconstructs_matrix() {
    let hist = stream(5, 8, 20);
    let c = regularized_cov(&hist, 8, 0.1);
    let flat: Vec<f64> = c.iter().flatten().copied().collect();
    let (vals, vecs) = symmetric_eigen(&flat, 8).unwrap();
    for i in 0..8 {
        for j in 0..8 {
            let r: f64 = (0..8).map(|k| vecs[i * 8 + k] * vals[k] * vecs[j * 8 + k]).sum();
            assert!((r - c[i][j]).abs() < 1e-10);
        }
    }
}

#[test]
fn bad_inputs_are_rejected() {
    assert!(EllipticalTracker::new(0, 0.1).is_err());
    assert!(EllipticalTracker::new(3, 0.0).is_err());
    assert!(EllipticalTracker::new(3, f64::NAN).is_err());
    let mut t = EllipticalTracker::new(3, 0.1).unwrap();
    assert!(t.update(&[1.0, 2.0]).is_err());
    assert!(t.bonus(&[1.0, f64::INFINITY, 0.0]).is_err());
    assert_eq!(t.count(), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tracker_matches_gauss_jordan(seed in any::<u64>(), dim in 1usize..12, len in 0usize..60, ridge in 0.01f64..2.0) {
        let hist = stream(seed, dim, len);
        let mut t = EllipticalTracker::new(dim, ridge).unwrap();
        for phi in &hist {
            t.update(phi).unwrap();
        }
        let inv = gauss_jordan(&regularized_cov(&hist, dim, ridge));
        let scale = inv.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for (row, want) in t.inv_cov().chunks(dim).zip(&inv) {
            for (a, b) in row.iter().zip(want) {
                prop_assert!((a - b).abs() <= 1e-9 * scale);
            }
        }
        let q = stream(seed ^ 1, dim, 1).pop().unwrap();
        prop_assert!((t.bonus(&q).unwrap() - quad_form(&inv, &q)).abs() <= 1e-9 * scale.max(1.0));
    }

    #[test]
    fn update_returns_pre_update_bonus(seed in any::<u64>(), dim in 1usize..10, len in 1usize..30) {
        let hist = stream(seed, dim, len);
        let mut t = EllipticalTracker::new(dim, 0.1).unwrap();
        for phi in &hist {
            let before = t.bonus(phi).unwrap();
            prop_assert_eq!(t.update(phi).unwrap(), before);
        }
    }

    #[test]
    fn bonus_decays_and_is_dominated(seed in any::<u64>(), dim in 1usize..10, len in 1usize..40, ridge in 0.05f64..1.0) {
        let hist = stream(seed, dim, len);
        let q = stream(seed ^ 7, dim, 1).pop().unwrap();
        let cap = q.iter().map(|v| v * v).sum::<f64>() / ridge;
        let mut t = EllipticalTracker::new(dim, ridge).unwrap();
        let mut prev = t.bonus(&q).unwrap();
        prop_assert!((prev - cap).abs() <= 1e-12 * cap.max(1.0));
        for phi in &hist {
            t.update(phi).unwrap();
            let b = t.bonus(&q).unwrap();
            prop_assert!(b >= 0.0);
            prop_assert!(b <= prev + 1e-10);
            prop_assert!(b <= cap + 1e-10);
            prev = b;
        }
    }

    #[test]
    fn bonus_is_rotation_invariant(seed in any::<u64>(), dim in 1usize..8, len in 0usize..25) {
        let mut rng = SplitMix64::new(seed);
        let q = random_orthogonal(&mut rng, dim);
        let hist = stream(seed, dim, len);
        let probe = stream(seed ^ 3, dim, 1).pop().unwrap();
        let mut a = EllipticalTracker::new(dim, 0.1).unwrap();
        let mut b = EllipticalTracker::new(dim, 0.1).unwrap();
        for phi in &hist {
            a.update(phi).unwrap();
            b.update(&mat_vec(&q, phi)).unwrap();
        }
        let x = a.bonus(&probe).unwrap();
        let y = b.bonus(&mat_vec(&q, &probe)).unwrap();
        prop_assert!((x - y).abs() <= 1e-8 * x.max(1.0));
    }

    #[test]
    fn eigen_path_agrees(seed in any::<u64>(), dim in 1usize..10, len in 0usize..30) {
        let hist = stream(seed, dim, len);
        let probe = stream(seed ^ 5, dim, 1).pop().unwrap();
        let mut t = EllipticalTracker::new(dim, 0.1).unwrap();
        for phi in &hist {
            t.update(phi).unwrap();
        }
        let e = eigen_bonus(&hist, dim, 0.1, &probe).unwrap();
        prop_assert!((t.bonus(&probe).unwrap() - e).abs() <= 1e-8 * e.max(1.0));
    }

    #[test]
    fn reset_restores_fresh_state(seed in any::<u64>(), dim in 1usize..6, len in 1usize..20) {
        let mut t = EllipticalTracker::new(dim, 0.3).unwrap();
        for phi in stream(seed, dim, len) {
            t.update(&phi).unwrap();
        }
        t.reset();
        let fresh = EllipticalTracker::new(dim, 0.3).unwrap();
        prop_assert_eq!(t.inv_cov(), fresh.inv_cov());
        prop_assert_eq!(t.count(), 0);
    }

    #[test]
    fn byte_dump_round_trips(seed in any::<u64>(), dim in 1usize..6, len in 0usize..10) {
        let mut t = EllipticalTracker::new(dim, 0.2).unwrap();
        for phi in stream(seed, dim, len) {
            t.update(&phi).unwrap();
        }
        let back = EllipticalTracker::from_le_bytes(dim, 0.2, t.count(), &t.to_le_bytes()).unwrap();
        prop_assert_eq!(back.inv_cov(), t.inv_cov());
    }
}
