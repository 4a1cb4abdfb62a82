//! Special functions and the hypothesis tests used by the analytics report.
//!
//! The special functions follow the usual series/continued-fraction split:
//! the incomplete gamma function uses its power series below `a + 1` and a
//! Lentz continued fraction above; the incomplete beta function uses the
//! continued fraction on whichever tail converges faster.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const EPS: f64 = 1e-15;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 10_000;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_p domain: a > 0, x >= 0");
    if x == 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cf(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_q domain: a > 0, x >= 0");
    if x == 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cf(a, x)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_cf(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized incomplete beta I_x(a, b).
pub fn beta_inc(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0 && (0.0..=1.0).contains(&x), "beta_inc domain");
    if x == 0.0 || x == 1.0 {
        return x;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        2.0 - erfc(-x)
    } else {
        gamma_q(0.5, x * x)
    }
}

/// Upper tail of the chi-square distribution.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if df == 1.0 {
        erfc((x / 2.0).sqrt())
    } else {
        gamma_q(df / 2.0, x / 2.0)
    }
}

/// Upper tail of the F distribution.
pub fn f_sf(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    beta_inc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

/// Two-tailed p-value of Student's t.
pub fn t_two_tailed(t: f64, df: f64) -> f64 {
    beta_inc(df / 2.0, 0.5, df / (df + t * t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub statistic: f64,
    pub df: (f64, Option<f64>),
    pub p_value: f64,
    pub effect_size: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("expected count in cell ({row}, {col}) is zero")]
    ZeroExpectedCount { row: usize, col: usize },
    #[error("degenerate group: {0}")]
    DegenerateGroup(String),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TTestVariant {
    Pooled,
    Welch,
}

/// Pearson chi-square test of independence on a 2x2 table, no continuity correction.
pub fn chi_square_2x2(counts: [[u64; 2]; 2]) -> Result<StatResult, StatsError> {
    let rows = [counts[0][0] + counts[0][1], counts[1][0] + counts[1][1]];
    let cols = [counts[0][0] + counts[1][0], counts[0][1] + counts[1][1]];
    let n = (rows[0] + rows[1]) as f64;
    let mut stat = 0.0;
    for (i, row) in counts.iter().enumerate() {
        for (j, &obs) in row.iter().enumerate() {
            let expected = rows[i] as f64 * cols[j] as f64 / n;
            if !(expected > 0.0) {
                return Err(StatsError::ZeroExpectedCount { row: i, col: j });
            }
            stat += (obs as f64 - expected).powi(2) / expected;
        }
    }
    Ok(StatResult { statistic: stat, df: (1.0, None), p_value: chi2_sf(stat, 1.0), effect_size: None })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sum_sq_dev(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m).powi(2)).sum()
}

/// One-way ANOVA; effect size is eta squared.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<StatResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::DegenerateGroup(format!("need at least 2 groups, got {}", groups.len())));
    }
    if let Some(i) = groups.iter().position(|g| g.len() < 2) {
        return Err(StatsError::DegenerateGroup(format!("group {i} has fewer than 2 observations")));
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand = mean(&all);
    let n = all.len() as f64;
    let k = groups.len() as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += sum_sq_dev(g, m);
    }
    if ss_within <= 0.0 {
        return Err(StatsError::DegenerateGroup("zero within-group variance".into()));
    }
    let (d1, d2) = (k - 1.0, n - k);
    let f = (ss_between / d1) / (ss_within / d2);
    Ok(StatResult {
        statistic: f,
        df: (d1, Some(d2)),
        p_value: f_sf(f, d1, d2),
        effect_size: Some(ss_between / (ss_between + ss_within)),
    })
}

/// Two-sample t-test, two-tailed; effect size is Cohen's d with the pooled SD.
pub fn t_test(a: &[f64], b: &[f64], variant: TTestVariant) -> Result<StatResult, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::DegenerateSample("each sample needs at least 2 observations".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let va = sum_sq_dev(a, ma) / (na - 1.0);
    let vb = sum_sq_dev(b, mb) / (nb - 1.0);
    let pooled_var = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
    let (se, df) = match variant {
        TTestVariant::Pooled => ((pooled_var * (1.0 / na + 1.0 / nb)).sqrt(), na + nb - 2.0),
        TTestVariant::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
            ((qa + qb).sqrt(), df)
        }
    };
    if !(se > 0.0) {
        return Err(StatsError::DegenerateSample("zero variance in both samples".into()));
    }
    let t = (ma - mb) / se;
    Ok(StatResult {
        statistic: t,
        df: (df, None),
        p_value: t_two_tailed(t, df),
        effect_size: Some((ma - mb) / pooled_var.sqrt()),
    })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    fn rel_err(got: f64, want: f64) -> f64 {
        if want == 0.0 {
            got.abs()
        } else {
            ((got - want) / want).abs()
        }
    }

    // (a, x, P, Q) from a 40-digit mpmath evaluation.
    const GAMMA_TABLE: [(f64, f64, f64, f64); 10] = [
        (0.5, 0.1, 0.34527915398142298, 0.65472084601857702),
        (0.5, 2.0, 0.95449973610364159, 0.045500263896358414),
        (1.0, 1.0, 0.63212055882855768, 0.36787944117144232),
        (1.5, 0.3, 0.10356762665808857, 0.89643237334191143),
        (2.0, 5.0, 0.9595723180054872, 0.040427681994512803),
        (3.0, 2.5, 0.45618688411667048, 0.54381311588332952),
        (5.0, 1.0, 0.0036598468273437123, 0.99634015317265629),
        (10.0, 12.0, 0.75760783832948765, 0.24239216167051235),
        (0.5, 25.0, 0.99999999999846254, 1.5374597944280349e-12),
        (20.0, 15.0, 0.12478121503252482, 0.87521878496747518),
    ];

    // (a, b, x, I_x(a, b)), same source.
    const BETA_TABLE: [(f64, f64, f64, f64); 10] = [
        (0.5, 0.5, 0.2, 0.29516723530086656),
        (1.0, 1.0, 0.3, 0.3),
        (2.0, 3.0, 0.4, 0.5248),
        (0.5, 5.0, 0.1, 0.68335708497998776),
        (5.0, 0.5, 0.9, 0.31664291502001231),
        (10.0, 10.0, 0.5, 0.5),
        (2.5, 1.5, 0.75, 0.66666666666666667),
        (50.0, 2.0, 0.97, 0.54516343836851854),
        (0.5, 50.0, 0.001, 0.24763098003462321),
        (30.0, 0.5, 0.999, 0.80723730615953703),
    ];

    #[test]
    fn incomplete_gamma_matches_table() {
        for (a, x, p, q) in GAMMA_TABLE {
            assert!(rel_err(gamma_p(a, x), p) < 1e-10, "P({a}, {x})");
            assert!(rel_err(gamma_q(a, x), q) < 1e-10, "Q({a}, {x}) = {}", gamma_q(a, x));
        }
    }

    #[test]
    fn incomplete_beta_matches_table() {
        for (a, b, x, want) in BETA_TABLE {
            let got = beta_inc(a, b, x);
            assert!(rel_err(got, want) < 1e-10, "I_{x}({a}, {b}) = {got}, want {want}");
        }
    }

    #[test]
    fn erfc_and_ln_gamma() {
        let erfc_table = [
            (0.1, 0.8875370839817151),
            (0.5, 0.47950012218695346),
            (1.0, 0.15729920705028513),
            (2.0, 0.0046777349810472658),
            (4.0, 1.5417257900280019e-8),
        ];
        for (x, want) in erfc_table {
            assert!(rel_err(erfc(x), want) < 1e-10, "erfc({x})");
            assert!(rel_err(erfc(-x), 2.0 - want) < 1e-12);
        }
        let lg = [(0.5, 0.57236494292470009), (1.0, 0.0), (10.0, 12.80182748008147), (50.0, 144.56574394634489)];
        for (x, want) in lg {
            assert!((ln_gamma(x) - want).abs() < 1e-12 * want.abs().max(1.0), "ln_gamma({x})");
        }
    }

    #[test]
    fn paper_participant_table() {
        let r = chi_square_2x2([[35, 26], [25, 16]]).unwrap();
        assert!((r.statistic - 0.13).abs() <= 0.005, "{}", r.statistic);
        assert!((r.p_value - 0.72).abs() <= 0.01, "{}", r.p_value);
        assert_eq!(r.df, (1.0, None));
        assert!(r.effect_size.is_none());
    }

    #[test]
    fn chi_square_edges() {
        let r = chi_square_2x2([[10, 10], [10, 10]]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let r = chi_square_2x2([[20, 0], [0, 20]]).unwrap();
        assert!((r.statistic - 40.0).abs() < 1e-12);
        assert!(r.p_value < 1e-9);
        assert!(matches!(chi_square_2x2([[0, 0], [3, 4]]), Err(StatsError::ZeroExpectedCount { .. })));
    }

    #[test]
    fn anova_examples() {
        let r = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert!((r.statistic - 13.5).abs() < 1e-12);
        assert_eq!(r.df, (1.0, Some(4.0)));
        // SSB 13.5, SST 17.5
        assert!((r.effect_size.unwrap() - 13.5 / 17.5).abs() < 1e-12);

        let same = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(same.statistic, 0.0);
        assert_eq!(same.p_value, 1.0);
        assert_eq!(same.effect_size, Some(0.0));

        assert!(one_way_anova(&[vec![1.0, 2.0]]).is_err());
        assert!(one_way_anova(&[vec![1.0], vec![2.0, 3.0]]).is_err());
        assert!(one_way_anova(&[vec![1.0, 1.0], vec![2.0, 2.0]]).is_err());
    }

    #[test]
    fn t_test_examples() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [3.0, 4.0, 5.0, 6.0, 7.0];
        let r = t_test(&a, &b, TTestVariant::Pooled).unwrap();
        assert!((r.statistic + 2.0).abs() < 1e-12);
        assert_eq!(r.df, (8.0, None));
        // 2 * t.sf(2, 8)
        assert!(rel_err(r.p_value, 0.08051623795726257) < 1e-9);

        let r = t_test(&a, &a, TTestVariant::Welch).unwrap();
        assert_eq!((r.statistic, r.p_value, r.effect_size), (0.0, 1.0, Some(0.0)));

        let zeros = [0.0; 4];
        let ones = [1.0; 4];
        assert!(matches!(t_test(&zeros, &ones, TTestVariant::Welch), Err(StatsError::DegenerateSample(_))));
    }

    #[test]
    fn welch_df_matches_hand_value() {
        // va = 2.5, vb = 10, n = 5 each: (0.5 + 2)^2 / (0.25/4 + 4/4) = 5.882352...
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 4.0, 6.0, 8.0, 10.0];
        let r = t_test(&a, &b, TTestVariant::Welch).unwrap();
        assert!((r.df.0 - 6.25 / 1.0625).abs() < 1e-12);
    }

    #[test]
    fn survival_functions_match_scipy_values() {
        assert!(rel_err(f_sf(13.5, 1.0, 4.0), 0.02131164112875672) < 1e-9);
        assert!(rel_err(chi2_sf(40.0, 1.0), 2.5396285894708634e-10) < 1e-9);
        assert!(rel_err(chi2_sf(0.13, 1.0), 0.7184320389103389) < 1e-10);
    }
}
