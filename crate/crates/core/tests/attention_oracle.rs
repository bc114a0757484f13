#![allow(clippy::needless_range_loop)]

mod common;

use ndarray::Array2;
use proptest::prelude::*;
use tiara_core::attention::{
    build_reweight_matrix, closed_form_diagonal_reweight, motion_intensity, reweighted_attention,
    softmax_rows, tiara, AttentionLogits, FrequencyBand, ReweightMatrix, TiaraParams,
    VideoLatentSlice,
};
use tiara_core::spectral::{make_window, Signal, WindowKind};

fn to_array(rows: &[Vec<f64>]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), rows[0].len()), |(i, j)| rows[i][j])
}

fn logits(rows: &[Vec<f64>]) -> AttentionLogits {
    AttentionLogits::new(to_array(rows)).unwrap()
}

#[test]
fn softmax_matches_naive_exp_over_sum() {
    let mut rng = common::rng(8);
    let raw = common::random_matrix(&mut rng, 8, 8, -4.0, 4.0);
    let map = softmax_rows(&logits(&raw));
    for (i, r) in raw.iter().enumerate() {
        let naive = common::softmax_naive(r);
        assert!((map.row(i).sum() - 1.0).abs() < 1e-12);
        for j in 0..8 {
            assert!((map.rows()[[i, j]] - naive[j]).abs() < 1e-12);
        }
    }
}

#[test]
fn motion_intensity_matches_padded_oracle_for_blackman_9() {
    let w = make_window(WindowKind::Blackman, 9).unwrap();
    let wo = common::window("blackman", 9);
    for seed in 0..20 {
        let mut rng = common::rng(100 + seed);
        let n = 8 + seed as usize;
        let row = common::random_vec(&mut rng, n, 0.0, 1.0);
        let band = FrequencyBand::default_for(n + 8);
        for i in 0..n {
            let got = motion_intensity(&Signal::new(row.clone()).unwrap(), &w, i, band).unwrap();
            let want = common::rho(&row, &wo, i, None);
            assert!((got - want).abs() < 1e-10, "n={n} i={i}: {got} vs {want}");
        }
    }
}

#[test]
fn zero_mean_alternating_rows_are_almost_all_motion() {
    for n in [8usize, 16, 32] {
        let mut cases = vec![
            (WindowKind::Blackman, 7),
            (WindowKind::Blackman, 8),
            (WindowKind::Blackman, 9),
        ];
        // short rectangular windows leak a few percent through their sidelobes
        if n >= 16 {
            cases.push((WindowKind::Rectangular, n));
        }
        for (kind, len) in cases {
            let w = make_window(kind, len).unwrap();
            let row: Vec<f64> = (0..n)
                .map(|j| if j % 2 == 0 { 0.3 } else { -0.3 })
                .collect();
            let band = FrequencyBand::default_for(n + 2 * (len / 2));
            for i in 0..n {
                let r = motion_intensity(&Signal::new(row.clone()).unwrap(), &w, i, band).unwrap();
                assert!(r >= 0.99, "n={n} {kind}({len}) i={i}: {r}");
            }
        }
    }
}

#[test]
fn positive_alternating_rows_keep_their_mean_at_dc() {
    // A row of attention weights is nonnegative, so alternating between a
    // and b leaves (a + b) / 2 at frequency zero.
    let n = 16;
    let row: Vec<f64> = (0..n)
        .map(|j| if j % 2 == 0 { 0.9 } else { 0.1 } / 8.0)
        .collect();
    let w = make_window(WindowKind::Rectangular, 8).unwrap();
    let band = FrequencyBand::default_for(n + 8);
    let r = motion_intensity(&Signal::new(row.clone()).unwrap(), &w, 0, band).unwrap();
    let want = common::rho(&row, &common::window("rectangular", 8), 0, None);
    assert!((r - want).abs() < 1e-12);
    assert!(r < 0.99 && r > 0.3, "{r}");
}

#[test]
fn tiara_field_matches_straight_line_reference() {
    let n = 16;
    let w = make_window(WindowKind::Blackman, 9).unwrap();
    let wo = common::window("blackman", 9);
    let mut rng = common::rng(2216);
    let mut field_logits = Vec::new();
    let mut field_values = Vec::new();
    let mut raw = Vec::new();
    for _ in 0..4 {
        let l = common::random_matrix(&mut rng, n, n, -2.0, 2.0);
        let v = common::random_matrix(&mut rng, n, 3, -1.0, 1.0);
        field_logits.push(logits(&l));
        field_values.push(VideoLatentSlice::new(to_array(&v)).unwrap());
        raw.push((l, v));
    }
    let params = TiaraParams::new(w, 6.0);
    let got = tiara(&field_logits, &field_values, &params).unwrap();
    for (slice, (l, v)) in got.iter().zip(&raw) {
        let (out, att) = common::tiara_location(l, v, &wo, 6.0, n / 4, 3.0);
        for i in 0..n {
            for j in 0..n {
                assert!((slice.attention.rows()[[i, j]] - att[i][j]).abs() < 1e-10);
            }
            for c in 0..3 {
                assert!((slice.output.values()[[i, c]] - out[i][c]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn zero_alpha_field_is_plain_attention() {
    let n = 10;
    let mut rng = common::rng(5);
    let l = common::random_matrix(&mut rng, n, n, -1.0, 1.0);
    let v = common::random_matrix(&mut rng, n, 2, -1.0, 1.0);
    let mut params = TiaraParams::new(make_window(WindowKind::Hann, 5).unwrap(), 0.0);
    params.corner_penalty = Some(0.0);
    let got = tiara(
        &[logits(&l)],
        &[VideoLatentSlice::new(to_array(&v)).unwrap()],
        &params,
    )
    .unwrap();
    let plain: Array2<f64> = softmax_rows(&logits(&l)).rows().dot(&to_array(&v));
    for (a, b) in got[0].output.values().iter().zip(plain.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn square(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    n.prop_flat_map(|n| proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, n), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn closed_form_row_transform_equals_softmax(raw in square(4..=64), alpha in prop::sample::select(vec![0.5, 6.0])) {
        let l = logits(&raw);
        let n = raw.len();
        let direct = reweighted_attention(
            &l,
            &ReweightMatrix::diagonal(n, alpha).unwrap(),
            &VideoLatentSlice::new(Array2::zeros((n, 1))).unwrap(),
        ).unwrap().0;
        let closed = closed_form_diagonal_reweight(&softmax_rows(&l), alpha);
        for (a, b) in direct.rows().iter().zip(closed.rows().iter()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn reweighting_keeps_rows_stochastic(
        raw in square(2..=24),
        alpha in 0.0f64..20.0,
        beta in 0.0f64..20.0,
        rho_seed in any::<u64>(),
    ) {
        let n = raw.len();
        let mut rng = common::rng(rho_seed);
        let rho = common::random_vec(&mut rng, n, 0.0, 1.0);
        let lam = build_reweight_matrix(&rho, alpha, n / 4, beta).unwrap();
        let (map, _) = reweighted_attention(
            &logits(&raw),
            &lam,
            &VideoLatentSlice::new(Array2::zeros((n, 1))).unwrap(),
        ).unwrap();
        for i in 0..n {
            prop_assert!((map.row(i).sum() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn diagonal_penalty_moves_mass_off_the_diagonal(raw in square(2..=16), alpha in 0.01f64..10.0) {
        let n = raw.len();
        let l = logits(&raw);
        let before = softmax_rows(&l);
        let (after, _) = reweighted_attention(
            &l,
            &ReweightMatrix::diagonal(n, alpha).unwrap(),
            &VideoLatentSlice::new(Array2::zeros((n, 1))).unwrap(),
        ).unwrap();
        for i in 0..n {
            let a_ii = before.rows()[[i, i]];
            if a_ii > 0.0 && a_ii < 1.0 {
                prop_assert!(after.rows()[[i, i]] < a_ii);
                for j in (0..n).filter(|&j| j != i) {
                    prop_assert!(after.rows()[[i, j]] > before.rows()[[i, j]]);
                }
            }
        }
    }

    #[test]
    fn diagonal_rule_is_monotone(r1 in 0.0f64..1.0, r2 in 0.0f64..1.0, a1 in 0.0f64..10.0, a2 in 0.0f64..10.0) {
        let (rlo, rhi) = (r1.min(r2), r1.max(r2));
        let (alo, ahi) = (a1.min(a2), a1.max(a2));
        let diag = |rho: f64, alpha: f64| build_reweight_matrix(&[rho, 0.0], alpha, 0, 0.0).unwrap().lambda()[[0, 0]];
        prop_assert!(diag(rlo, ahi) <= diag(rlo, alo));
        prop_assert!(diag(rlo, alo) <= diag(rhi, alo));
    }

    #[test]
    fn rho_ignores_positive_scaling(
        row in (2usize..24).prop_flat_map(|n| proptest::collection::vec(0.0f64..1.0, n)),
        scale in 1e-3f64..1e3,
        len in prop::sample::select(vec![7usize, 8, 9]),
    ) {
        let n = row.len();
        let w = make_window(WindowKind::Blackman, len).unwrap();
        let band = FrequencyBand::default_for(n + 2 * (len / 2));
        let scaled: Vec<f64> = row.iter().map(|v| v * scale).collect();
        for i in 0..n {
            let a = motion_intensity(&Signal::new(row.clone()).unwrap(), &w, i, band).unwrap();
            let b = motion_intensity(&Signal::new(scaled.clone()).unwrap(), &w, i, band).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn reweight_matrix_is_symmetric_in_its_corners(n in 2usize..30, c_frac in 0.0f64..1.0, beta in 0.0f64..5.0) {
        let c = (c_frac * (n / 2) as f64) as usize;
        let lam = build_reweight_matrix(&vec![1.0; n], 3.0, c, beta).unwrap();
        let m = lam.lambda();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(m[[i, j]], m[[j, i]]);
            }
        }
    }
}
