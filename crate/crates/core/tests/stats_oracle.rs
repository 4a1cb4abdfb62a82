//! Cross-checks the in-house statistics against `statrs` and simulation.

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, StudentsT};
use tutor_core::stats::*;

fn close(got: f64, want: f64, rel: f64) -> bool {
    (got - want).abs() <= rel * want.abs().max(1e-300)
}

#[test]
fn special_functions_agree_with_statrs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2_000 {
        let a = rng.random_range(0.1..40.0);
        let x = rng.random_range(0.0..60.0);
        let want = statrs::function::gamma::gamma_lr(a, x);
        assert!(close(gamma_p(a, x), want, 1e-9) || (gamma_p(a, x) - want).abs() < 1e-14, "P({a}, {x})");
        let want = statrs::function::gamma::gamma_ur(a, x);
        assert!(close(gamma_q(a, x), want, 1e-9) || (gamma_q(a, x) - want).abs() < 1e-14, "Q({a}, {x})");

        let b = rng.random_range(0.1..40.0);
        let y = rng.random_range(0.0..1.0);
        let want = statrs::function::beta::beta_reg(a, b, y);
        assert!(close(beta_inc(a, b, y), want, 1e-9) || (beta_inc(a, b, y) - want).abs() < 1e-14, "I_{y}({a}, {b})");

        assert!(close(ln_gamma(a), statrs::function::gamma::ln_gamma(a), 1e-10) || ln_gamma(a).abs() < 1e-12);
        let z = rng.random_range(-5.0..5.0);
        assert!(close(erfc(z), statrs::function::erf::erfc(z), 1e-9), "erfc({z})");
    }
}

#[test]
fn survival_functions_agree_with_statrs() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..500 {
        let x = rng.random_range(0.01..30.0);
        let d1 = f64::from(rng.random_range(1..20u32));
        let d2 = f64::from(rng.random_range(1..200u32));
        assert!(close(chi2_sf(x, d1), ChiSquared::new(d1).unwrap().sf(x), 1e-8), "chi2 {x} {d1}");
        assert!(close(f_sf(x, d1, d2), FisherSnedecor::new(d1, d2).unwrap().sf(x), 1e-8), "F {x} {d1} {d2}");
        let t: f64 = rng.random_range(-6.0..6.0);
        let two = 2.0 * StudentsT::new(0.0, 1.0, d2).unwrap().sf(t.abs());
        assert!(close(t_two_tailed(t, d2), two, 1e-8), "t {t} {d2}");
    }
}

/// Mid-p permutation estimate for a 2x2 table: shuffle the column labels
/// against fixed rows and compare Pearson statistics.
fn permutation_mid_p(table: [[u64; 2]; 2], draws: usize, rng: &mut ChaCha8Rng) -> f64 {
    let observed = chi_square_2x2(table).unwrap().statistic;
    let row_of: Vec<usize> =
        (0..2).flat_map(|r| std::iter::repeat_n(r, (table[r][0] + table[r][1]) as usize)).collect();
    let mut cols: Vec<usize> =
        (0..2).flat_map(|c| std::iter::repeat_n(c, (table[0][c] + table[1][c]) as usize)).collect();
    let (mut above, mut ties) = (0.0, 0.0);
    for _ in 0..draws {
        cols.shuffle(rng);
        let mut t = [[0u64; 2]; 2];
        for (r, c) in row_of.iter().zip(&cols) {
            t[*r][*c] += 1;
        }
        let s = chi_square_2x2(t).unwrap().statistic;
        if (s - observed).abs() < 1e-9 {
            ties += 1.0;
        } else if s > observed {
            above += 1.0;
        }
    }
    (above + 0.5 * ties) / draws as f64
}

#[test]
fn chi_square_p_matches_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for table in [[[30, 20], [20, 30]], [[40, 30], [25, 35]], [[60, 40], [45, 55]], [[50, 50], [45, 55]]] {
        let p = chi_square_2x2(table).unwrap().p_value;
        let mc = permutation_mid_p(table, 10_000, &mut rng);
        assert!((p - mc).abs() <= 0.02, "{table:?}: asymptotic {p}, permutation {mc}");
    }
}

#[test]
fn anova_false_positive_rate_is_nominal() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let trials = 1_000;
    let mut rejected = 0;
    for _ in 0..trials {
        let groups: Vec<Vec<f64>> = (0..3).map(|_| (0..100).map(|_| normal.sample(&mut rng)).collect()).collect();
        if one_way_anova(&groups).unwrap().p_value < 0.05 {
            rejected += 1;
        }
    }
    let rate = f64::from(rejected) / f64::from(trials);
    assert!((0.03..=0.07).contains(&rate), "rejection rate {rate}");
}

proptest! {
    #[test]
    fn anova_f_is_pooled_t_squared(
        a in prop::collection::vec(-50.0f64..50.0, 2..30),
        b in prop::collection::vec(-50.0f64..50.0, 2..30),
    ) {
        let (Ok(f), Ok(t)) = (one_way_anova(&[a.clone(), b.clone()]), t_test(&a, &b, TTestVariant::Pooled)) else {
            return Ok(());
        };
        let t2 = t.statistic * t.statistic;
        prop_assert!((f.statistic - t2).abs() <= 1e-9 * t2.abs().max(1e-12), "F {} vs t^2 {}", f.statistic, t2);
        prop_assert!((f.p_value - t.p_value).abs() < 1e-9);
    }

    #[test]
    fn p_values_are_probabilities(
        a in prop::collection::vec(-5.0f64..5.0, 2..20),
        b in prop::collection::vec(-5.0f64..5.0, 2..20),
        c in 0u64..40, d in 0u64..40, e in 1u64..40, g in 1u64..40,
    ) {
        for variant in [TTestVariant::Pooled, TTestVariant::Welch] {
            if let Ok(r) = t_test(&a, &b, variant) {
                prop_assert!((0.0..=1.0).contains(&r.p_value));
            }
        }
        if let Ok(r) = chi_square_2x2([[c, d], [e, g]]) {
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
    }
}
