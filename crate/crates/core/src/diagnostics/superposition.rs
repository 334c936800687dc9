use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::models::{fit, AeBatch, Gradients, Parametric, TiedAutoencoder, TrainConfig};
use crate::sparse::SparseBinary;

use super::metrics::{fev, r2_per_feature};

/// Inner products at or below this magnitude count as orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-6;

/// Linear decoder from frozen latents, `x̂ = h P + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    /// `m × d`.
    pub coef: Array2<f64>,
    pub intercept: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProbeMethod {
    /// Exact least squares with a small ridge on `P`.
    ClosedForm { ridge: f64 },
    /// Gradient training from zero with the given schedule.
    Gradient(TrainConfig),
}

impl Default for ProbeMethod {
    fn default() -> Self {
        ProbeMethod::ClosedForm { ridge: 1e-6 }
    }
}

struct ProbeGrad {
    coef: Array2<f64>,
    intercept: Array1<f64>,
}

impl Gradients for ProbeGrad {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.coef.as_slice().expect("standard"), self.intercept.as_slice().expect("standard")]
    }
}

impl Parametric for LinearProbe {
    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.coef.as_slice_mut().expect("standard"), self.intercept.as_slice_mut().expect("standard")]
    }

    fn params(&self) -> Vec<&[f64]> {
        vec![self.coef.as_slice().expect("standard"), self.intercept.as_slice().expect("standard")]
    }
}

impl LinearProbe {
    pub fn predict(&self, h: ArrayView2<f64>) -> Array2<f64> {
        h.dot(&self.coef) + &self.intercept
    }

    /// Fits the probe on the latents of `data` under the frozen encoder.
    pub fn fit(ae: &TiedAutoencoder, data: &SparseBinary, method: &ProbeMethod) -> Result<LinearProbe> {
        if data.rows() == 0 {
            return Err(Error::EmptyDataset("probe training set is empty".into()));
        }
        match method {
            ProbeMethod::ClosedForm { ridge } => Self::fit_closed_form(ae, data, *ridge),
            ProbeMethod::Gradient(cfg) => Self::fit_gradient(ae, data, cfg),
        }
    }

    fn fit_closed_form(ae: &TiedAutoencoder, data: &SparseBinary, ridge: f64) -> Result<LinearProbe> {
        let n = data.rows() as f64;
        let (m, d) = (ae.latent_dim(), ae.input_dim());
        let rows: Vec<&[u32]> = data.iter_rows().collect();
        let h = ae.encode_sparse(&rows);
        let h_mean = h.mean_axis(Axis(0)).expect("non-empty");
        let x_mean = data.column_counts().mapv(|c| c as f64 / n);
        // Centered normal equations; HᵀX accumulated from active columns.
        let hc = &h - &h_mean;
        let mut a = hc.t().dot(&hc);
        for i in 0..m {
            a[[i, i]] += ridge;
        }
        let mut htx_t = Array2::<f64>::zeros((d, m));
        for (hr, row) in hc.rows().into_iter().zip(&rows) {
            for &j in *row {
                let mut t = htx_t.row_mut(j as usize);
                t += &hr;
            }
        }
        let coef = solve_spd(&a, &htx_t.t().to_owned())?;
        let intercept = &x_mean - &h_mean.dot(&coef);
        Ok(LinearProbe { coef, intercept })
    }

    fn fit_gradient(ae: &TiedAutoencoder, data: &SparseBinary, cfg: &TrainConfig) -> Result<LinearProbe> {
        let rows: Vec<&[u32]> = data.iter_rows().collect();
        let h = ae.encode_sparse(&rows);
        let mut probe = LinearProbe { coef: Array2::zeros((ae.latent_dim(), ae.input_dim())), intercept: Array1::zeros(ae.input_dim()) };
        fit(&mut probe, data.rows(), cfg, |p, idx| {
            let batch = AeBatch::sparse(data, idx);
            let hb = h.select(Axis(0), idx);
            let resid = &batch.x - &p.predict(hb.view());
            let n = idx.len() as f64;
            let loss = resid.iter().map(|e| e * e).sum::<f64>() / n;
            let delta = resid * (-2.0 / n);
            Ok((loss, ProbeGrad { coef: hb.t().dot(&delta), intercept: delta.sum_axis(Axis(0)) }))
        })?
        .into_result()?;
        Ok(probe)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SuperpositionClass {
    Linear,
    Nonlinear,
    Unrecovered,
}

impl SuperpositionClass {
    pub fn name(self) -> &'static str {
        match self {
            SuperpositionClass::Linear => "linear",
            SuperpositionClass::Nonlinear => "nonlinear",
            SuperpositionClass::Unrecovered => "unrecovered",
        }
    }

    /// Linear iff `r2_linear ≥ 1 − ε`; nonlinear iff only the model's own
    /// decoder reaches `1 − ε`. Undefined R² counts as not reaching it.
    pub fn classify(r2_linear: Option<f64>, r2_nonlinear: Option<f64>, eps: f64) -> Self {
        let floor = 1.0 - eps;
        if r2_linear.is_some_and(|r| r >= floor) {
            SuperpositionClass::Linear
        } else if r2_nonlinear.is_some_and(|r| r >= floor) {
            SuperpositionClass::Nonlinear
        } else {
            SuperpositionClass::Unrecovered
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVerdict {
    pub feature: usize,
    pub r2_linear: Option<f64>,
    pub r2_nonlinear: Option<f64>,
    pub class: SuperpositionClass,
    /// Feature with the largest-magnitude inner product, and that product.
    pub partner: Option<(usize, f64)>,
    /// Some other feature direction overlaps this one beyond the tolerance.
    pub interferes: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpositionVerdict {
    pub eps: f64,
    pub features: Vec<FeatureVerdict>,
    /// Probe FEV relative to the model's reconstructions on the evaluation set.
    pub fev: Option<f64>,
}

impl SuperpositionVerdict {
    pub fn all_interfere(&self) -> bool {
        self.features.iter().all(|f| f.interferes)
    }

    pub fn mean_r2_linear(&self) -> Option<f64> {
        let vals: Vec<f64> = self.features.iter().filter_map(|f| f.r2_linear).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Largest-magnitude off-diagonal Gram entry in column `i`.
pub fn strongest_partner(gram: &Array2<f64>, i: usize) -> Option<(usize, f64)> {
    (0..gram.ncols())
        .filter(|&j| j != i)
        .map(|j| (j, gram[[i, j]]))
        .fold(None, |best: Option<(usize, f64)>, (j, v)| match best {
            Some((_, b)) if b.abs() >= v.abs() => best,
            _ => Some((j, v)),
        })
}

/// Per-feature R² of the probe and of the model, on `eval`.
pub struct ProbeEvaluation {
    pub r2_linear: Vec<Option<f64>>,
    pub r2_nonlinear: Vec<Option<f64>>,
    pub fev: Option<f64>,
}

pub fn evaluate_probe(ae: &TiedAutoencoder, probe: &LinearProbe, eval: &SparseBinary) -> Result<ProbeEvaluation> {
    let x = eval.to_dense();
    let fwd = ae.forward_batch(&AeBatch::dense(x.view()))?;
    let probe_recon = probe.predict(fwd.hidden.view());
    Ok(ProbeEvaluation {
        r2_linear: r2_per_feature(probe_recon.view(), x.view())?,
        r2_nonlinear: r2_per_feature(fwd.recon.view(), x.view())?,
        fev: fev(probe_recon.view(), fwd.recon.view())?,
    })
}

/// Trains a linear decoder on the frozen latents of `train`, scores it on
/// `eval`, and classifies each feature in `features`.
pub fn linear_superposition_test(
    ae: &TiedAutoencoder,
    train: &SparseBinary,
    eval: &SparseBinary,
    features: &[usize],
    eps: f64,
    method: &ProbeMethod,
) -> Result<SuperpositionVerdict> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter("ε must lie in (0, 1)".into()));
    }
    if let Some(&f) = features.iter().find(|&&f| f >= ae.input_dim()) {
        return Err(Error::InvalidParameter(format!("feature {f} out of range")));
    }
    let probe = LinearProbe::fit(ae, train, method)?;
    let scores = evaluate_probe(ae, &probe, eval)?;
    let gram = ae.gram();
    let verdicts = features
        .iter()
        .map(|&i| {
            let partner = strongest_partner(&gram, i);
            FeatureVerdict {
                feature: i,
                r2_linear: scores.r2_linear[i],
                r2_nonlinear: scores.r2_nonlinear[i],
                class: SuperpositionClass::classify(scores.r2_linear[i], scores.r2_nonlinear[i], eps),
                partner,
                interferes: partner.is_some_and(|(_, v)| v.abs() > ORTHOGONALITY_TOL),
            }
        })
        .collect();
    Ok(SuperpositionVerdict { eps, features: verdicts, fev: scores.fev })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Census {
    pub linear: usize,
    pub nonlinear: usize,
    pub unrecovered: usize,
    /// Features below the occurrence floor, excluded from the tally.
    pub skipped: usize,
    pub eps: f64,
    /// Recoverability floor `1 − ε`.
    pub r2_threshold: f64,
    pub min_occurrences: usize,
    pub fev: Option<f64>,
    pub verdict: SuperpositionVerdict,
}

impl Census {
    pub fn tested(&self) -> usize {
        self.linear + self.nonlinear + self.unrecovered
    }
}

/// Classifies every feature that is active in at least `min_occurrences`
/// (and not all) evaluation samples.
pub fn census_superposition(
    ae: &TiedAutoencoder,
    train: &SparseBinary,
    eval: &SparseBinary,
    eps: f64,
    min_occurrences: usize,
    method: &ProbeMethod,
) -> Result<Census> {
    let counts = eval.column_counts();
    let n = eval.rows() as u64;
    let tested: Vec<usize> = (0..eval.cols()).filter(|&j| counts[j] >= min_occurrences as u64 && counts[j] < n).collect();
    let verdict = linear_superposition_test(ae, train, eval, &tested, eps, method)?;
    let tally = |c| verdict.features.iter().filter(|f| f.class == c).count();
    Ok(Census {
        linear: tally(SuperpositionClass::Linear),
        nonlinear: tally(SuperpositionClass::Nonlinear),
        unrecovered: tally(SuperpositionClass::Unrecovered),
        skipped: eval.cols() - tested.len(),
        eps,
        r2_threshold: 1.0 - eps,
        min_occurrences,
        fev: verdict.fev,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneHotContext {
    pub feature: usize,
    /// Evaluation samples in which the feature is active.
    pub occurrences: usize,
    /// `1 − (1 − f̂_i(e_i))²`.
    pub r2_onehot: f64,
    /// `1 − mean (1 − f̂_i)²` over samples containing the feature.
    pub r2_context: Option<f64>,
    /// Share of those samples reconstructed strictly closer to 1 than the
    /// one-hot input.
    pub fraction_context_better: Option<f64>,
    pub insufficient: bool,
}

pub const MIN_CONTEXT_OCCURRENCES: usize = 10;

pub fn onehot_vs_context(ae: &TiedAutoencoder, eval: &SparseBinary, feature: usize, min_occurrences: usize) -> Result<OneHotContext> {
    if feature >= ae.input_dim() {
        return Err(Error::InvalidParameter(format!("feature {feature} out of range")));
    }
    let mut onehot = Array1::zeros(ae.input_dim());
    onehot[feature] = 1.0;
    let alone = ae.forward(onehot.view())?.1[feature];
    let r2_onehot = 1.0 - (1.0 - alone).powi(2);
    let rows: Vec<usize> = (0..eval.rows()).filter(|&r| eval.get(r, feature)).collect();
    let insufficient = rows.len() < min_occurrences;
    if rows.is_empty() || insufficient {
        return Ok(OneHotContext { feature, occurrences: rows.len(), r2_onehot, r2_context: None, fraction_context_better: None, insufficient: true });
    }
    let batch = AeBatch::sparse(eval, &rows);
    let recon = ae.forward_batch(&batch)?.recon;
    let errs: Vec<f64> = recon.column(feature).iter().map(|&v| (1.0 - v).abs()).collect();
    let better = errs.iter().filter(|&&e| e < (1.0 - alone).abs()).count();
    let mse = errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64;
    Ok(OneHotContext {
        feature,
        occurrences: rows.len(),
        r2_onehot,
        r2_context: Some(1.0 - mse),
        fraction_context_better: Some(better as f64 / rows.len() as f64),
        insufficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Activation;

    fn orthonormal_model(d: usize) -> TiedAutoencoder {
        TiedAutoencoder { w: Array2::eye(d), b: Array1::zeros(d), activation: Activation::Identity }
    }

    fn random_sparse(n: usize, d: usize, seed: u64) -> SparseBinary {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dense = Array2::from_shape_simple_fn((n, d), || if rng.random::<f64>() < 0.3 { 1.0 } else { 0.0 });
        SparseBinary::from_dense(&dense)
    }

    #[test]
    fn classification_rule() {
        use SuperpositionClass::*;
        assert_eq!(SuperpositionClass::classify(Some(0.6), Some(0.9), 0.5), Linear);
        assert_eq!(SuperpositionClass::classify(Some(0.4), Some(0.9), 0.5), Nonlinear);
        assert_eq!(SuperpositionClass::classify(Some(0.4), Some(0.45), 0.5), Unrecovered);
        assert_eq!(SuperpositionClass::classify(None, None, 0.5), Unrecovered);
    }

    #[test]
    fn orthonormal_model_is_linear_everywhere() {
        let ae = orthonormal_model(5);
        let train = random_sparse(200, 5, 1);
        let eval = random_sparse(100, 5, 2);
        let v = linear_superposition_test(&ae, &train, &eval, &[0, 1, 2, 3, 4], 0.1, &ProbeMethod::default()).unwrap();
        for f in &v.features {
            assert_eq!(f.class, SuperpositionClass::Linear);
            assert!((f.r2_linear.unwrap() - 1.0).abs() < 1e-6);
            assert!(!f.interferes);
        }
        assert!((v.fev.unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gradient_probe_approaches_closed_form() {
        let ae = TiedAutoencoder::init(3, 6, Activation::Rectifier, 4).unwrap();
        let train = random_sparse(400, 6, 5);
        let exact = LinearProbe::fit(&ae, &train, &ProbeMethod::ClosedForm { ridge: 0.0 }).unwrap();
        let cfg = TrainConfig { epochs: 300, batch_size: 100, base_lr: 1e-2, ..Default::default() };
        let sgd = LinearProbe::fit(&ae, &train, &ProbeMethod::Gradient(cfg)).unwrap();
        let h = ae.encode(train.to_dense().view()).unwrap();
        let diff = (exact.predict(h.view()) - sgd.predict(h.view())).iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(diff < 1e-2, "{diff}");
    }

    #[test]
    fn census_partitions_tested_features() {
        let ae = orthonormal_model(6);
        let train = random_sparse(300, 6, 7);
        let eval = random_sparse(60, 6, 8);
        let c = census_superposition(&ae, &train, &eval, 0.5, 5, &ProbeMethod::default()).unwrap();
        assert_eq!(c.linear, 6);
        assert_eq!(c.tested() + c.skipped, 6);
        let c = census_superposition(&ae, &train, &eval, 0.5, 1000, &ProbeMethod::default()).unwrap();
        assert_eq!((c.tested(), c.skipped), (0, 6));
    }

    #[test]
    fn identity_gram_gives_no_context_advantage() {
        let ae = orthonormal_model(4);
        let eval = random_sparse(100, 4, 9);
        let r = onehot_vs_context(&ae, &eval, 2, 10).unwrap();
        assert_eq!(r.fraction_context_better, Some(0.0));
        assert_eq!(r.r2_context, Some(r.r2_onehot));
        assert!(onehot_vs_context(&ae, &eval, 2, 1000).unwrap().insufficient);
    }

    #[test]
    fn partner_is_largest_magnitude() {
        let g = ndarray::array![[1.0, 0.2, -0.7], [0.2, 1.0, 0.1], [-0.7, 0.1, 1.0]];
        assert_eq!(strongest_partner(&g, 0), Some((2, -0.7)));
        assert_eq!(strongest_partner(&g, 1), Some((0, 0.2)));
    }
}
