use ordsub::balance::kendall_tau_b;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Brute {
    s: i64,
    tau: f64,
}

/// Direct enumeration over all pairs.
fn brute_force(a: &[f64], b: &[f64]) -> Brute {
    let n = a.len();
    let (mut s, mut tied_a, mut tied_b) = (0i64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let da = (a[i] - a[j]).signum() * f64::from(u8::from(a[i] != a[j]));
            let db = (b[i] - b[j]).signum() * f64::from(u8::from(b[i] != b[j]));
            s += (da * db) as i64;
            tied_a += u64::from(a[i] == a[j]);
            tied_b += u64::from(b[i] == b[j]);
        }
    }
    let n0 = (n * (n - 1) / 2) as u64;
    let tau = s as f64 / ((n0 - tied_a) as f64 * (n0 - tied_b) as f64).sqrt();
    Brute { s, tau }
}

#[test]
fn matches_brute_force_on_tied_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    while checked < 500 {
        let n = rng.random_range(2..=200);
        let ka = rng.random_range(1..=8);
        let kb = rng.random_range(2..=12);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..ka) as f64).collect();
        let b: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..kb)) * 0.5).collect();
        let Ok(fast) = kendall_tau_b(&a, &b) else {
            continue;
        };
        let slow = brute_force(&a, &b);
        assert_eq!(fast.s, slow.s);
        assert_eq!(fast.tau, slow.tau);
        checked += 1;
    }
}

/// The five-level drug-use table expanded to unit records.
fn drug_use_records() -> (Vec<f64>, Vec<f64>) {
    let yes = [11, 7, 15, 7, 7];
    let no = [148, 48, 85, 54, 36];
    let (mut level, mut user) = (Vec::new(), Vec::new());
    for l in 0..5 {
        for (count, flag) in [(yes[l], 1.0), (no[l], 0.0)] {
            level.extend(std::iter::repeat_n(l as f64, count));
            user.extend(std::iter::repeat_n(flag, count));
        }
    }
    (level, user)
}

#[test]
fn drug_use_table_shows_a_small_positive_association() {
    let (level, user) = drug_use_records();
    let r = kendall_tau_b(&level, &user).unwrap();
    assert_eq!(r.n, 418);
    assert!((r.tau - 0.09).abs() <= 0.01, "tau {}", r.tau);
    assert!((r.z - 2.00).abs() <= 0.1, "z {}", r.z);
    assert!(r.p_value < 0.05);
}

#[test]
fn no_ties_variance_reduces_to_the_classical_form() {
    let a: Vec<f64> = (0..30).map(f64::from).collect();
    let b: Vec<f64> = (0..30).map(|i| f64::from((i * 7) % 30)).collect();
    let r = kendall_tau_b(&a, &b).unwrap();
    let n: f64 = 30.0;
    let var = n * (n - 1.0) * (2.0 * n + 5.0) / 18.0;
    assert!((r.z - r.s as f64 / var.sqrt()).abs() < 1e-12);
}

fn tied_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..80).prop_flat_map(|n| (prop::collection::vec(0i32..6, n), prop::collection::vec(-20i32..20, n)))
        .prop_map(|(a, b)| (a.into_iter().map(f64::from).collect(), b.into_iter().map(f64::from).collect()))
}

proptest! {
    #[test]
    fn symmetric_in_its_arguments((a, b) in tied_pair()) {
        if let (Ok(x), Ok(y)) = (kendall_tau_b(&a, &b), kendall_tau_b(&b, &a)) {
            prop_assert_eq!(x.s, y.s);
            prop_assert!((x.tau - y.tau).abs() < 1e-15);
            prop_assert!((x.z - y.z).abs() < 1e-12);
        }
    }

    #[test]
    fn invariant_to_increasing_transforms((a, b) in tied_pair()) {
        let warped: Vec<f64> = b.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
        if let (Ok(x), Ok(y)) = (kendall_tau_b(&a, &b), kendall_tau_b(&a, &warped)) {
            prop_assert_eq!(x.s, y.s);
            prop_assert_eq!(x.tau, y.tau);
        }
    }

    #[test]
    fn reversing_one_argument_flips_the_sign((a, b) in tied_pair()) {
        let neg: Vec<f64> = b.iter().map(|v| -v).collect();
        if let (Ok(x), Ok(y)) = (kendall_tau_b(&a, &b), kendall_tau_b(&a, &neg)) {
            prop_assert_eq!(x.s, -y.s);
            prop_assert!((x.tau + y.tau).abs() < 1e-15);
            prop_assert!((x.p_value - y.p_value).abs() < 1e-15);
        }
    }

    #[test]
    fn bounded_by_one((a, b) in tied_pair()) {
        if let Ok(x) = kendall_tau_b(&a, &b) {
            prop_assert!(x.tau.abs() <= 1.0);
            prop_assert!((0.0..=1.0).contains(&x.p_value));
        }
    }
}
