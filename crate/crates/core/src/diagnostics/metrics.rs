use ndarray::{ArrayView2, Axis};

use crate::error::{Error, Result};

/// Variances at or below this are treated as zero.
const FLAT: f64 = 1e-15;

/// Per-column `1 − MSE / Var(target)`; `None` where the target is constant.
pub fn r2_per_feature(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<Vec<Option<f64>>> {
    if pred.dim() != target.dim() {
        return Err(Error::Dimension(format!("predictions {:?} vs targets {:?}", pred.dim(), target.dim())));
    }
    let n = target.nrows();
    if n < 2 {
        return Err(Error::EmptyDataset(format!("R² needs at least 2 samples, got {n}")));
    }
    let means = target.mean_axis(Axis(0)).expect("non-empty");
    let mut out = Vec::with_capacity(target.ncols());
    for (j, (p, t)) in pred.columns().into_iter().zip(target.columns()).enumerate() {
        let var = t.iter().map(|&x| (x - means[j]).powi(2)).sum::<f64>() / n as f64;
        if var <= FLAT {
            out.push(None);
            continue;
        }
        let mse = p.iter().zip(t.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
        out.push(Some(1.0 - mse / var));
    }
    Ok(out)
}

/// Fraction of the model output's variance reproduced by a probe:
/// `1 − Σ‖model − probe‖² / Σ‖model − mean(model)‖²`.
pub fn fev(probe: ArrayView2<f64>, model: ArrayView2<f64>) -> Result<Option<f64>> {
    if probe.dim() != model.dim() {
        return Err(Error::Dimension(format!("probe {:?} vs model {:?}", probe.dim(), model.dim())));
    }
    if model.nrows() == 0 {
        return Err(Error::EmptyDataset("FEV of an empty evaluation set".into()));
    }
    let means = model.mean_axis(Axis(0)).expect("non-empty");
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, m) in probe.rows().into_iter().zip(model.rows()) {
        for j in 0..m.len() {
            num += (m[j] - p[j]).powi(2);
            den += (m[j] - means[j]).powi(2);
        }
    }
    if den <= FLAT * model.len() as f64 {
        return Ok(None);
    }
    Ok(Some(1.0 - num / den))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use proptest::prelude::*;

    fn naive_r2(p: &Array2<f64>, t: &Array2<f64>, j: usize) -> f64 {
        let n = t.nrows() as f64;
        let mean = t.column(j).sum() / n;
        let var = t.column(j).iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let mse = (0..t.nrows()).map(|i| (p[[i, j]] - t[[i, j]]).powi(2)).sum::<f64>() / n;
        1.0 - mse / var
    }

    #[test]
    fn r2_examples() {
        let t = ndarray::array![[1.0, 0.0, 5.0], [0.0, 1.0, 5.0], [1.0, 1.0, 5.0]];
        let r = r2_per_feature(t.view(), t.view()).unwrap();
        assert_eq!(r, vec![Some(1.0), Some(1.0), None]);
        let mean = Array2::from_shape_fn(t.dim(), |(_, j)| t.column(j).mean().unwrap());
        let r = r2_per_feature(mean.view(), t.view()).unwrap();
        assert!(r[0].unwrap().abs() < 1e-15 && r[1].unwrap().abs() < 1e-15);
        assert!(r2_per_feature(t.slice(ndarray::s![..1, ..]), t.slice(ndarray::s![..1, ..])).is_err());
    }

    #[test]
    fn fev_undefined_for_constant_model() {
        let m = Array2::from_elem((4, 2), 3.0);
        assert_eq!(fev(m.view(), m.view()).unwrap(), None);
    }

    proptest! {
        #[test]
        fn r2_matches_naive(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let t = Array2::from_shape_simple_fn((9, 4), || rng.random::<f64>());
            let p = Array2::from_shape_simple_fn((9, 4), || rng.random::<f64>());
            let r = r2_per_feature(p.view(), t.view()).unwrap();
            for j in 0..4 {
                prop_assert!((r[j].unwrap() - naive_r2(&p, &t, j)).abs() < 1e-12);
            }
        }

        #[test]
        fn fev_identities(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_simple_fn((7, 3), || rng.random::<f64>());
            prop_assert_eq!(fev(x.view(), x.view()).unwrap(), Some(1.0));
            let mean: Array1<f64> = x.mean_axis(Axis(0)).unwrap();
            let m = Array2::from_shape_fn(x.dim(), |(_, j)| mean[j]);
            prop_assert_eq!(fev(m.view(), x.view()).unwrap(), Some(0.0));
        }
    }
}
