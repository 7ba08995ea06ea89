use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segbias_core::bias::{
    chi_square, log_relative_risk, rr_smoothing, symmetry_component, symmetry_score, BiasIndicators,
    ErrorContingency,
};
use segbias_core::Error;

/// Textbook Pearson statistic written out cell by cell.
fn textbook_chi2(t: [[f64; 3]; 2]) -> f64 {
    let n: f64 = t.iter().flatten().sum();
    let mut chi2 = 0.0;
    for r in 0..2 {
        for c in 0..3 {
            let row: f64 = t[r].iter().sum();
            let col = t[0][c] + t[1][c];
            let e = row * col / n;
            chi2 += (t[r][c] - e).powi(2) / e;
        }
    }
    chi2
}

#[test]
fn chi_square_matches_textbook() {
    let t = ErrorContingency {
        rows: [[10, 10, 80], [30, 10, 60]],
    };
    let c = chi_square(&t).unwrap();
    let expected = textbook_chi2([[10.0, 10.0, 80.0], [30.0, 10.0, 60.0]]);
    assert!((c.chi2 - expected).abs() < 1e-9);
    // by hand: expected counts 20, 10, 70 in both rows
    assert!((c.chi2 - (5.0 + 5.0 + 2.0 * 100.0 / 70.0)).abs() < 1e-9);
    assert_eq!(c.df, 2);
    assert!((c.p_value - (-c.chi2 / 2.0).exp()).abs() < 1e-15);

    let scaled = ErrorContingency {
        rows: [[100, 100, 800], [300, 100, 600]],
    };
    let s = chi_square(&scaled).unwrap();
    assert!((s.chi2 - 10.0 * c.chi2).abs() < 1e-9);
}

#[test]
fn zero_column_has_no_test() {
    let t = ErrorContingency {
        rows: [[0, 4, 10], [0, 6, 10]],
    };
    assert_eq!(chi_square(&t), Err(Error::ExpectedZero));
    let ind = BiasIndicators::compute(&t);
    assert_eq!(ind.chi2, None);
    assert!(!ind.significant);
}

#[test]
fn indicator_bundle() {
    let t = ErrorContingency {
        rows: [[10, 20, 970], [60, 20, 920]],
    };
    let ind = BiasIndicators::compute(&t);
    let eps = rr_smoothing(1000, 1000);
    assert_eq!(eps, 1.0 / 2000.0);
    assert!((ind.rr_om - ((0.06 + eps) / (0.01 + eps)).ln()).abs() < 1e-12);
    assert!(ind.rr_co.abs() < 1e-12);
    assert_eq!(ind.s_co, Some(1.0));
    assert!((ind.s_om.unwrap() - (1.0 - 2.0 * (60.0 / 70.0 - 0.5))).abs() < 1e-12);
    assert_eq!(ind.s, ind.s_om);
    assert!(ind.significant);
}

#[test]
fn single_error_type_defines_symmetry() {
    let t = ErrorContingency {
        rows: [[0, 5, 95], [0, 5, 95]],
    };
    let s = symmetry_score(&t).unwrap();
    assert_eq!(s.s_om, None);
    assert_eq!(s.s, 1.0);
}

/// Multinomial row of (omission, commission, correct) counts.
fn noisy_row(rng: &mut ChaCha8Rng, n: u64, om: f64, co: f64) -> [u64; 3] {
    let mut row = [0u64; 3];
    for _ in 0..n {
        let u: f64 = rng.random();
        let cell = if u < om {
            0
        } else if u < om + co {
            1
        } else {
            2
        };
        row[cell] += 1;
    }
    row
}

#[test]
fn rejection_rate_under_group_independent_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let trials = 200;
    let mut rejected = 0;
    for _ in 0..trials {
        let t = ErrorContingency {
            rows: [noisy_row(&mut rng, 20_000, 0.01, 0.015), noisy_row(&mut rng, 20_000, 0.01, 0.015)],
        };
        if chi_square(&t).unwrap().p_value < 0.05 {
            rejected += 1;
        }
    }
    let rate = rejected as f64 / trials as f64;
    assert!((0.02..=0.08).contains(&rate), "rejection rate {rate}");
}

proptest! {
    #[test]
    fn proportional_rows_give_zero(a in 1u64..50, b in 1u64..50, c in 1u64..500, k in 1u64..5) {
        let t = ErrorContingency { rows: [[a, b, c], [k * a, k * b, k * c]] };
        prop_assert!(chi_square(&t).unwrap().chi2.abs() < 1e-9);
    }

    #[test]
    fn symmetry_never_exceeds_one(nc in 0u64..1000, nb in 0u64..1000, pc in 1u64..10_000, pb in 1u64..10_000) {
        if let Some(s) = symmetry_component(nc, nb, pc, pb) {
            prop_assert!((-1.0..=1.0).contains(&s));
        } else {
            prop_assert_eq!(nc + nb, 0);
        }
    }

    #[test]
    fn relative_risk_is_antisymmetric(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let eps = 1e-4;
        prop_assert!((log_relative_risk(a, b, eps) + log_relative_risk(b, a, eps)).abs() < 1e-12);
    }
}
