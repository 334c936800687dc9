//! Analytic gradients against central finite differences.

use bowslab::models::{Activation, AeBatch, Gradients, MlpClassifier, MlpShape, Parametric, TiedAutoencoder};
use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;
const TOLERANCE: f64 = 1e-4;

/// ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖) over every parameter.
fn relative_error<M: Parametric>(model: &mut M, analytic: &[&[f64]], mut loss: impl FnMut(&M) -> f64) -> f64 {
    let (mut diff, mut a_norm, mut n_norm) = (0.0f64, 0.0f64, 0.0f64);
    for block in 0..analytic.len() {
        for k in 0..analytic[block].len() {
            let orig = model.params()[block][k];
            model.params_mut()[block][k] = orig + STEP;
            let up = loss(model);
            model.params_mut()[block][k] = orig - STEP;
            let down = loss(model);
            model.params_mut()[block][k] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic[block][k];
            diff += (a - numeric).powi(2);
            a_norm += a * a;
            n_norm += numeric * numeric;
        }
    }
    diff.sqrt() / a_norm.sqrt().max(n_norm.sqrt()).max(1e-12)
}

fn binary(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || if rng.random_bool(0.3) { 1.0 } else { 0.0 })
}

/// Keeps rectifier instances away from the kink so the difference quotient
/// is smooth.
fn clear_of_kink(ae: &TiedAutoencoder, x: &Array2<f64>) -> bool {
    let pre = x.dot(&ae.w.t()).dot(&ae.w) + &ae.b;
    pre.iter().all(|p| p.abs() > 1e-3)
}

fn check_ae(activation: Activation) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    let mut seed = 0;
    while checked < 20 {
        seed += 1;
        let (m, d, n) = (rng.random_range(1..5), rng.random_range(2..9), rng.random_range(1..7));
        let mut ae = TiedAutoencoder::init(m, d, activation, seed).unwrap();
        ae.b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        let x = binary(n, d, &mut rng);
        if activation == Activation::Rectifier && !clear_of_kink(&ae, &x) {
            continue;
        }
        let batch = AeBatch::dense(x.view());
        let (_, grad) = ae.backward(&batch).unwrap();
        let err = relative_error(&mut ae, &grad.slices(), |ae| ae.loss(&batch).unwrap());
        assert!(err < TOLERANCE, "{activation:?} m={m} d={d} n={n}: relative error {err:e}");
        checked += 1;
    }
}

#[test]
fn linear_autoencoder_gradient() {
    check_ae(Activation::Identity);
}

#[test]
fn rectifier_autoencoder_gradient() {
    check_ae(Activation::Rectifier);
}

fn classifier_clear_of_kink(mlp: &MlpClassifier, pairs: &[(u32, u32)]) -> bool {
    let e = mlp.embedding.ncols();
    let mut x = Array2::zeros((pairs.len(), 2 * e));
    for (mut row, &(a, b)) in x.rows_mut().into_iter().zip(pairs) {
        row.slice_mut(s![..e]).assign(&mlp.embedding.row(a as usize));
        row.slice_mut(s![e..]).assign(&mlp.embedding.row(b as usize));
    }
    for layer in &mlp.hidden {
        let z = x.dot(&layer.w) + &layer.b;
        if z.iter().any(|v| v.abs() <= 1e-3) {
            return false;
        }
        x = z.mapv(|v| v.max(0.0));
    }
    true
}

#[test]
fn classifier_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    let mut seed = 0;
    while checked < 20 {
        seed += 1;
        let shape = MlpShape {
            num_tokens: rng.random_range(3..8),
            embed_dim: rng.random_range(2..5),
            hidden: (0..rng.random_range(1..3)).map(|_| rng.random_range(3..7)).collect(),
            num_classes: rng.random_range(2..6),
        };
        let mut mlp = MlpClassifier::init(&shape, seed).unwrap();
        // Zero-initialized biases put dead-input rows exactly on the kink.
        for layer in mlp.hidden.iter_mut().chain(std::iter::once(&mut mlp.output)) {
            layer.b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let n = rng.random_range(1..8);
        let pairs: Vec<(u32, u32)> = (0..n)
            .map(|_| (rng.random_range(0..shape.num_tokens) as u32, rng.random_range(0..shape.num_tokens) as u32))
            .collect();
        let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..shape.num_classes) as u32).collect();
        if !classifier_clear_of_kink(&mlp, &pairs) {
            continue;
        }
        let (_, grad) = mlp.backward(&pairs, &labels).unwrap();
        let err = relative_error(&mut mlp, &grad.slices(), |m| m.evaluate(&pairs, &labels).unwrap().loss);
        assert!(err < TOLERANCE, "{shape:?}: relative error {err:e}");
        checked += 1;
    }
}
