//! Synthetic generators and the interference identity against closed forms.

use std::f64::consts::PI;

use bowslab::container::Split;
use bowslab::corpus::{encode_windows, window_count, Vocab};
use bowslab::diagnostics::interference::interference_terms;
use bowslab::linalg::{second_moment, sym_eig, MomentMode};
use bowslab::models::{Activation, TiedAutoencoder};
use bowslab::synth::{self, LatentCurveSpec};
use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// P(x_k = 1) for the uniform-phase cyclic generator, integrating the angle
/// blur with a midpoint rule over ±8σ.
fn cyclic_marginal(spec: &LatentCurveSpec, k: usize) -> f64 {
    let f = spec.num_features as f64;
    let steps = 4000;
    let (lo, hi) = (-8.0 * spec.angle_noise, 8.0 * spec.angle_noise);
    let h = (hi - lo) / steps as f64;
    let mut total = 0.0;
    for m in 0..spec.num_features {
        for i in 0..steps {
            let eps = lo + (i as f64 + 0.5) * h;
            let density = (-0.5 * (eps / spec.angle_noise).powi(2)).exp() / (spec.angle_noise * (2.0 * PI).sqrt());
            let theta = 2.0 * PI * m as f64 / f + eps;
            let logit = spec.sharpness * (theta - 2.0 * PI * k as f64 / f).cos() + spec.base_logit;
            total += density * h / (1.0 + (-logit).exp());
        }
    }
    total / f
}

#[test]
fn cyclic_marginals_match_quadrature() {
    let spec = LatentCurveSpec::default();
    let n = 100_000;
    let counts = synth::generate(&spec, n).unwrap().column_counts();
    for k in 0..12 {
        let p = cyclic_marginal(&spec, k);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let got = counts[k] as f64 / n as f64;
        assert!((got - p).abs() < 5.0 * se, "feature {k}: {got} vs {p} (se {se})");
    }
}

#[test]
fn cyclic_covariance_is_circulant() {
    let x = synth::generate(&LatentCurveSpec::default(), 100_000).unwrap().to_dense();
    let c = second_moment(x.view(), MomentMode::Centered).unwrap().matrix;
    for lag in 0..12 {
        let diag: Vec<f64> = (0..12).map(|i| c[[i, (i + lag) % 12]]).collect();
        let mean = diag.iter().sum::<f64>() / 12.0;
        for v in diag {
            assert!((v - mean).abs() < 0.01, "lag {lag}: {v} vs {mean}");
        }
    }
}

#[test]
fn validation_stream_differs_from_training_stream() {
    let spec = LatentCurveSpec::default();
    let a = synth::generate(&spec, 500).unwrap();
    let b = synth::generate_validation(&spec, 500).unwrap();
    assert_eq!(a, synth::generate(&spec, 500).unwrap());
    assert_ne!(a, b);
}

/// Binary data drawn from `m` prototypes has rank ≤ m, so the projector onto
/// its top-m raw second-moment eigenvectors fixes every sample.
#[test]
fn interference_identity_on_rank_limited_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (d, m, n) = (16, 4, 400);
    let prototypes = Array2::from_shape_simple_fn((m, d), || if rng.random_bool(0.3) { 1.0 } else { 0.0 });
    let mut x = Array2::zeros((n, d));
    for mut row in x.rows_mut() {
        row.assign(&prototypes.row(rng.random_range(0..m)));
    }
    let decomp = sym_eig(&second_moment(x.view(), MomentMode::Raw).unwrap().matrix).unwrap();
    let w = decomp.eigenvectors.slice(s![.., ..m]).t().to_owned();
    let ae = TiedAutoencoder { w, b: ndarray::Array1::zeros(d), activation: Activation::Identity };
    let g = ae.gram();
    let (signal, interference) = interference_terms(&ae, x.view()).unwrap();
    for r in 0..n {
        for i in 0..d {
            let expected = (1.0 - g[[i, i]]) * x[[r, i]];
            assert!((interference[[r, i]] - expected).abs() < 1e-6);
            assert!((signal[[r, i]] + interference[[r, i]] - x[[r, i]]).abs() < 1e-6);
        }
    }
}

#[test]
fn windows_or_consecutive_records() {
    let vocab = Vocab::synthetic((0..6).map(|i| format!("w{i}")).collect());
    let records: Vec<Vec<u32>> = vec![vec![0], vec![1, 2], vec![], vec![], vec![], vec![5], vec![3]];
    let (c, s) = (2, 2);
    let d = encode_windows(&records, &vocab, c, s, Split::Train).unwrap();
    assert_eq!(window_count(records.len(), c, s), 3);
    // Windows {0,1}, {2,3} (empty, dropped), {4,5}.
    assert_eq!(d.dropped_windows, 1);
    assert_eq!(d.samples.iter_rows().map(<[u32]>::to_vec).collect::<Vec<_>>(), vec![vec![0, 1, 2], vec![5]]);
    assert_eq!(d.context_size, c);
}
