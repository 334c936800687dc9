use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::models::TiedAutoencoder;
use crate::report::{Cell, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct Contribution {
    pub feature: usize,
    pub label: Option<String>,
    /// `⟨w_i, w_j⟩ f_j`.
    pub value: f64,
}

/// Preactivation of one output unit split into its additive parts.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceBreakdown {
    pub feature: usize,
    /// `‖w_i‖² f_i`.
    pub signal: f64,
    /// `Σ_{j≠i} ⟨w_i, w_j⟩ f_j`.
    pub interference: f64,
    pub bias: f64,
    pub preactivation: f64,
    pub reconstruction: f64,
    /// `f_i − f̂_i`.
    pub residual: f64,
    /// Largest-magnitude interference terms, strongest first.
    pub contributions: Vec<Contribution>,
}

pub fn interference_breakdown(
    ae: &TiedAutoencoder,
    sample: ArrayView1<f64>,
    feature: usize,
    top_k: usize,
    labels: Option<&[String]>,
) -> Result<InterferenceBreakdown> {
    let d = ae.input_dim();
    if sample.len() != d {
        return Err(Error::Dimension(format!("sample of length {} for a model over {d} features", sample.len())));
    }
    if feature >= d {
        return Err(Error::InvalidParameter(format!("feature {feature} out of range")));
    }
    let wi = ae.w.column(feature);
    let mut terms: Vec<Contribution> = Vec::new();
    let mut interference = 0.0;
    let mut signal = 0.0;
    for j in 0..d {
        let fj = sample[j];
        if fj == 0.0 {
            continue;
        }
        let value = wi.dot(&ae.w.column(j)) * fj;
        if j == feature {
            signal = value;
        } else {
            interference += value;
            terms.push(Contribution { feature: j, label: labels.and_then(|l| l.get(j).cloned()), value });
        }
    }
    terms.sort_by(|a, b| b.value.abs().total_cmp(&a.value.abs()).then(a.feature.cmp(&b.feature)));
    terms.truncate(top_k);
    let bias = ae.b[feature];
    let (pre, recon) = ae.forward(sample)?;
    Ok(InterferenceBreakdown {
        feature,
        signal,
        interference,
        bias,
        preactivation: pre[feature],
        reconstruction: recon[feature],
        residual: sample[feature] - recon[feature],
        contributions: terms,
    })
}

/// Signal and interference for every (sample, feature) of a batch.
pub fn interference_terms(ae: &TiedAutoencoder, x: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    if x.ncols() != ae.input_dim() {
        return Err(Error::Dimension(format!("batch of width {} for a model over {} features", x.ncols(), ae.input_dim())));
    }
    let norms = ae.w.map_axis(ndarray::Axis(0), |c| c.dot(&c));
    let signal = &x * &norms;
    let interference = x.dot(&ae.gram()) - &signal;
    Ok((signal, interference))
}

pub fn breakdown_table(rows: &[(usize, InterferenceBreakdown)], labels: Option<&[String]>) -> Result<Table> {
    let mut t = Table::new(["sample", "feature", "label", "signal", "interference", "bias", "preactivation", "reconstruction", "residual", "top_contributions"]);
    for (sample, b) in rows {
        let label = labels.and_then(|l| l.get(b.feature).cloned()).map_or(Cell::Missing, Cell::Text);
        let top = b
            .contributions
            .iter()
            .map(|c| format!("{}:{}", c.label.clone().unwrap_or_else(|| c.feature.to_string()), crate::report::format_float(c.value)))
            .collect::<Vec<_>>()
            .join(";");
        t.push(vec![
            (*sample).into(),
            b.feature.into(),
            label,
            b.signal.into(),
            b.interference.into(),
            b.bias.into(),
            b.preactivation.into(),
            b.reconstruction.into(),
            b.residual.into(),
            top.into(),
        ])?;
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Activation;
    use ndarray::{Array1, Array2};
    use proptest::prelude::*;

    #[test]
    fn orthogonal_columns_have_no_interference() {
        let ae = TiedAutoencoder { w: Array2::eye(4) * 2.0, b: Array1::zeros(4), activation: Activation::Rectifier };
        let x = ndarray::array![1.0, 1.0, 0.0, 1.0];
        let br = interference_breakdown(&ae, x.view(), 0, 3, None).unwrap();
        assert_eq!(br.interference, 0.0);
        assert_eq!(br.signal, 4.0);
    }

    #[test]
    fn onehot_preactivation_is_gram_column() {
        let ae = TiedAutoencoder::init(3, 6, Activation::Identity, 11).unwrap();
        let g = ae.gram();
        let mut e = Array1::zeros(6);
        e[2] = 1.0;
        for j in 0..6 {
            let br = interference_breakdown(&ae, e.view(), j, 5, None).unwrap();
            assert!((br.preactivation - (g[[j, 2]] + ae.b[j])).abs() < 1e-12);
        }
    }

    #[test]
    fn contributions_are_labelled_and_ranked() {
        let w = ndarray::array![[1.0, 0.5, -0.9, 0.1]];
        let ae = TiedAutoencoder { w, b: Array1::zeros(4), activation: Activation::Identity };
        let labels: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let br = interference_breakdown(&ae, Array1::ones(4).view(), 0, 2, Some(&labels)).unwrap();
        let got: Vec<_> = br.contributions.iter().map(|c| (c.label.clone().unwrap(), c.value)).collect();
        assert_eq!(got, vec![("c".to_string(), -0.9), ("b".to_string(), 0.5)]);
    }

    proptest! {
        #[test]
        fn decomposition_sums_to_preactivation(seed in any::<u64>(), feature in 0usize..7) {
            use rand::{Rng, SeedableRng};
            let mut ae = TiedAutoencoder::init(4, 7, Activation::Rectifier, seed).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            ae.b.mapv_inplace(|_| rng.random::<f64>() - 0.5);
            let x = Array1::from_shape_simple_fn(7, || if rng.random::<bool>() { 1.0 } else { 0.0 });
            let br = interference_breakdown(&ae, x.view(), feature, 7, None).unwrap();
            prop_assert!((br.signal + br.interference + br.bias - br.preactivation).abs() < 1e-10);
            let term_sum: f64 = br.contributions.iter().map(|c| c.value).sum();
            prop_assert!((term_sum - br.interference).abs() < 1e-10);
            let (s, i) = interference_terms(&ae, x.view().insert_axis(ndarray::Axis(0))).unwrap();
            prop_assert!((s[[0, feature]] - br.signal).abs() < 1e-12);
            prop_assert!((i[[0, feature]] - br.interference).abs() < 1e-10);
        }
    }
}
