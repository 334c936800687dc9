//! Value-coding diagnostics for embedding tables: Fourier and coordinate
//! probes, and ablations that keep or remove the probed subspace.

use std::f64::consts::PI;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::{ridge_regression, RidgeFit};
use crate::models::{Evaluation, MlpClassifier};
use crate::report::Table;

use super::metrics::r2_per_feature;

#[derive(Debug, Clone)]
pub struct FrequencyFit {
    pub frequency: usize,
    /// Joint R² of the cosine and sine fits.
    pub r2: Option<f64>,
    /// `1 − (1 − R²)(n − 1)/(n − k − 1)`; undefined when `n ≤ k + 1`.
    pub adjusted_r2: Option<f64>,
    /// Share of the centered embedding variance carried by this frequency.
    pub energy: f64,
    /// The normal equations were singular.
    pub flagged: bool,
    /// Fitted readout directions: `embedding · cos_direction ≈ cos(2πqa/p)`.
    pub cos_direction: Array1<f64>,
    pub sin_direction: Array1<f64>,
    pub intercept: [f64; 2],
    /// Fourier coefficients of the embedding table, `(2/p) Σ_a cos(2πqa/p) e_a`:
    /// the directions along which the table itself varies at this frequency.
    pub cos_component: Array1<f64>,
    pub sin_component: Array1<f64>,
}

impl FrequencyFit {
    /// Fitted `(cos, sin)` coordinates of every token.
    pub fn project(&self, embeddings: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((embeddings.nrows(), 2));
        out.column_mut(0).assign(&(embeddings.dot(&self.cos_direction) + self.intercept[0]));
        out.column_mut(1).assign(&(embeddings.dot(&self.sin_direction) + self.intercept[1]));
        out
    }
}

#[derive(Debug, Clone)]
pub struct FourierReport {
    pub modulus: usize,
    pub fits: Vec<FrequencyFit>,
    /// Frequencies ordered by decreasing energy.
    pub ranking: Vec<usize>,
    /// `(frequency, p × 2 projection)` for the leading frequencies.
    pub projections: Vec<(usize, Array2<f64>)>,
}

impl FourierReport {
    pub fn fit(&self, q: usize) -> Option<&FrequencyFit> {
        self.fits.iter().find(|f| f.frequency == q)
    }

    pub fn top(&self, count: usize) -> Vec<&FrequencyFit> {
        self.ranking.iter().take(count).filter_map(|&q| self.fit(q)).collect()
    }

    pub fn table(&self) -> Result<Table> {
        let mut t = Table::new(["frequency", "energy", "r2", "adjusted_r2", "flagged"]);
        for f in &self.fits {
            t.push(vec![f.frequency.into(), f.energy.into(), f.r2.into(), f.adjusted_r2.into(), f.flagged.into()])?;
        }
        Ok(t)
    }
}

fn joint_r2(pred: &Array2<f64>, target: &Array2<f64>) -> Option<f64> {
    let mean = target.mean_axis(Axis(0))?;
    let sst: f64 = (target - &mean).iter().map(|x| x * x).sum();
    let sse: f64 = (pred - target).iter().map(|x| x * x).sum();
    (sst > 1e-12).then(|| 1.0 - sse / sst)
}

/// Least-squares fit of `cos(2πqa/p)` and `sin(2πqa/p)` from the embedding of
/// token `a`, for every frequency `q = 1..⌊p/2⌋`.
pub fn fourier_projection(embeddings: ArrayView2<f64>, modulus: usize, ridge: f64, top: usize) -> Result<FourierReport> {
    let (p, k) = embeddings.dim();
    if modulus < 3 {
        return Err(Error::InvalidParameter(format!("modulus must be ≥ 3, got {modulus}")));
    }
    if p != modulus {
        return Err(Error::Dimension(format!("{p} embedding rows for modulus {modulus}")));
    }
    let mean = embeddings.mean_axis(Axis(0)).expect("p ≥ 3 rows");
    let centered = &embeddings - &mean;
    let total: f64 = centered.iter().map(|v| v * v).sum();
    let mut fits = Vec::with_capacity(modulus / 2);
    for q in 1..=modulus / 2 {
        let target = Array2::from_shape_fn((p, 2), |(a, c)| {
            let t = 2.0 * PI * (q * a % modulus) as f64 / modulus as f64;
            if c == 0 { t.cos() } else { t.sin() }
        });
        let components = centered.t().dot(&target) * (2.0 / p as f64);
        let (cos_component, sin_component) = (components.column(0).to_owned(), components.column(1).to_owned());
        // At q = p/2 the sine vanishes and the cosine carries weight 1/p.
        let weight = if 2 * q == modulus { 0.25 } else { 0.5 };
        let energy = if total > 0.0 { p as f64 * weight * components.iter().map(|v| v * v).sum::<f64>() / total } else { 0.0 };
        match ridge_regression(embeddings, target.view(), ridge) {
            Ok(RidgeFit { coef, intercept }) => {
                let pred = embeddings.dot(&coef) + &intercept;
                let r2 = joint_r2(&pred, &target);
                let adjusted_r2 = r2.filter(|_| p > k + 1).map(|r| 1.0 - (1.0 - r) * (p - 1) as f64 / (p - k - 1) as f64);
                fits.push(FrequencyFit {
                    frequency: q,
                    r2,
                    adjusted_r2,
                    energy,
                    flagged: false,
                    cos_direction: coef.column(0).to_owned(),
                    sin_direction: coef.column(1).to_owned(),
                    intercept: [intercept[0], intercept[1]],
                    cos_component,
                    sin_component,
                });
            }
            Err(Error::Singular(_)) => fits.push(FrequencyFit {
                frequency: q,
                r2: None,
                adjusted_r2: None,
                energy,
                flagged: true,
                cos_direction: Array1::zeros(k),
                sin_direction: Array1::zeros(k),
                intercept: [0.0; 2],
                cos_component,
                sin_component,
            }),
            Err(e) => return Err(e),
        }
    }
    // R² saturates once the width approaches p, so rank by energy instead.
    let mut ranking: Vec<usize> = fits.iter().map(|f| f.frequency).collect();
    ranking.sort_by(|&a, &b| fits[b - 1].energy.total_cmp(&fits[a - 1].energy).then(a.cmp(&b)));
    let projections = ranking.iter().take(top).map(|&q| (q, fits[q - 1].project(embeddings))).collect();
    Ok(FourierReport { modulus, fits, ranking, projections })
}

/// Coefficient of variation of the distances from the centroid.
pub fn radius_cv(coords: &Array2<f64>) -> Option<f64> {
    let c = coords.mean_axis(Axis(0))?;
    let r: Vec<f64> = coords.rows().into_iter().map(|x| (&x - &c).dot(&(&x - &c)).sqrt()).collect();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / r.len() as f64;
    (mean > 0.0).then(|| var.sqrt() / mean)
}

/// Cosine and sine components of the `count` highest-energy frequencies.
pub fn fourier_vc_directions(report: &FourierReport, count: usize) -> Vec<Array1<f64>> {
    report
        .top(count)
        .into_iter()
        .filter(|f| f.energy > 0.0)
        .flat_map(|f| [f.cos_component.clone(), f.sin_component.clone()])
        .collect()
}

pub const MIN_PROBE_TRAIN: usize = 10;

/// Random disjoint (train, held-out) row sets for a probe; both sorted.
pub fn probe_split(n: usize, n_train: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_train >= n {
        return Err(Error::InvalidParameter(format!("probe training size {n_train} leaves no held-out rows out of {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::rng::stream(seed, crate::rng::Purpose::Split));
    let (mut train, mut held) = (order[..n_train].to_vec(), order[n_train..].to_vec());
    train.sort_unstable();
    held.sort_unstable();
    Ok((train, held))
}

#[derive(Debug, Clone)]
pub struct CoordinateProbe {
    pub fit: RidgeFit,
    pub r2_per_axis: Vec<Option<f64>>,
    pub mean_r2: Option<f64>,
}

impl CoordinateProbe {
    /// One weight vector per coordinate axis.
    pub fn directions(&self) -> Vec<Array1<f64>> {
        self.fit.coef.columns().into_iter().map(|c| c.to_owned()).collect()
    }
}

/// Ridge regression from embeddings to coordinates, scored on held-out rows.
pub fn coordinate_probe(
    x_train: ArrayView2<f64>,
    y_train: ArrayView2<f64>,
    x_heldout: ArrayView2<f64>,
    y_heldout: ArrayView2<f64>,
    ridge: f64,
) -> Result<CoordinateProbe> {
    if x_train.nrows() < MIN_PROBE_TRAIN {
        return Err(Error::InvalidParameter(format!("coordinate probe needs ≥ {MIN_PROBE_TRAIN} training rows, got {}", x_train.nrows())));
    }
    let fit = ridge_regression(x_train, y_train, ridge)?;
    let r2_per_axis = r2_per_feature(fit.predict(x_heldout).view(), y_heldout)?;
    let defined: Vec<f64> = r2_per_axis.iter().flatten().copied().collect();
    let mean_r2 = (defined.len() == r2_per_axis.len() && !defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(CoordinateProbe { fit, r2_per_axis, mean_r2 })
}

/// Probes a random `n_train` rows of an embedding table for their
/// coordinates and scores the remaining rows.
pub fn probe_table(embeddings: &Array2<f64>, coords: &Array2<f64>, n_train: usize, ridge: f64, seed: u64) -> Result<CoordinateProbe> {
    if embeddings.nrows() != coords.nrows() {
        return Err(Error::Dimension(format!("{} embeddings for {} coordinate rows", embeddings.nrows(), coords.nrows())));
    }
    let (train, held) = probe_split(embeddings.nrows(), n_train, seed)?;
    let pick = |m: &Array2<f64>, rows: &[usize]| m.select(Axis(0), rows);
    coordinate_probe(
        pick(embeddings, &train).view(),
        pick(coords, &train).view(),
        pick(embeddings, &held).view(),
        pick(coords, &held).view(),
        ridge,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationMode {
    /// Keep the value-coding subspace, replace its complement with the mean.
    Keep,
    /// Replace the value-coding coordinates with the mean.
    Remove,
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "keep" => Ok(AblationMode::Keep),
            "remove" => Ok(AblationMode::Remove),
            _ => Err(Error::InvalidParameter(format!("unknown ablation mode `{s}` (expected keep or remove)"))),
        }
    }
}

/// Gram–Schmidt (applied twice for stability); columns of the result are
/// orthonormal.
pub fn orthonormal_basis(directions: &[Array1<f64>], dim: usize) -> Result<Array2<f64>> {
    if directions.is_empty() {
        return Err(Error::InvalidParameter("no directions given".into()));
    }
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(directions.len());
    for (index, d) in directions.iter().enumerate() {
        if d.len() != dim {
            return Err(Error::Dimension(format!("direction {index} has length {}, expected {dim}", d.len())));
        }
        let norm0 = d.dot(d).sqrt();
        let mut v = d.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v.scaled_add(-c, b);
            }
        }
        let norm = v.dot(&v).sqrt();
        if !(norm > 1e-10 * norm0) || norm0 == 0.0 {
            return Err(Error::DependentDirections { index });
        }
        basis.push(v / norm);
    }
    let mut out = Array2::zeros((dim, basis.len()));
    for (k, b) in basis.iter().enumerate() {
        out.column_mut(k).assign(b);
    }
    Ok(out)
}

/// Rewrites every token embedding `e` (mean `μ`) as `μ + BBᵀ(e − μ)` in
/// keep-mode or `e − BBᵀ(e − μ)` in remove-mode.
pub fn ablate_embeddings(embeddings: &Array2<f64>, basis: &Array2<f64>, mode: AblationMode) -> Array2<f64> {
    let mu = embeddings.mean_axis(Axis(0)).expect("non-empty table");
    let centered = embeddings - &mu;
    let inside = centered.dot(basis).dot(&basis.t());
    match mode {
        AblationMode::Keep => inside + &mu,
        AblationMode::Remove => embeddings - &inside,
    }
}

pub fn vc_ablation(
    model: &MlpClassifier,
    directions: &[Array1<f64>],
    mode: AblationMode,
    pairs: &[(u32, u32)],
    labels: &[u32],
) -> Result<Evaluation> {
    let basis = orthonormal_basis(directions, model.embedding.ncols())?;
    let mut ablated = model.clone();
    ablated.embedding = ablate_embeddings(&model.embedding, &basis, mode);
    ablated.evaluate(pairs, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::MlpShape;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
    }

    #[test]
    fn planted_frequency_is_recovered() {
        let (p, q) = (31, 7);
        let mut e = gaussian(p, 6, 1) * 0.1;
        for a in 0..p {
            let t = 2.0 * PI * (q * a) as f64 / p as f64;
            e[[a, 0]] = t.cos();
            e[[a, 1]] = t.sin();
        }
        let r = fourier_projection(e.view(), p, 0.0, 2).unwrap();
        assert_eq!(r.ranking[0], q);
        assert!(r.fit(q).unwrap().r2.unwrap() > 0.999999);
        let others = r.fits.iter().filter(|f| f.frequency != q).map(|f| f.r2.unwrap()).fold(0.0, f64::max);
        assert!(others < 0.5, "{others}");
        let (fq, proj) = &r.projections[0];
        assert_eq!(*fq, q);
        assert!(radius_cv(proj).unwrap() < 1e-6);
    }

    #[test]
    fn random_embeddings_give_small_r2() {
        let r = fourier_projection(gaussian(113, 8, 2).view(), 113, 0.0, 0).unwrap();
        let max = r.fits.iter().map(|f| f.r2.unwrap()).fold(0.0, f64::max);
        assert!(max < 0.2, "{max}");
    }

    #[test]
    fn energies_partition_the_variance() {
        for p in [12, 13] {
            let r = fourier_projection(gaussian(p, 5, 7).view(), p, 0.0, 0).unwrap();
            let sum: f64 = r.fits.iter().map(|f| f.energy).sum();
            assert!((sum - 1.0).abs() < 1e-12, "p={p}: {sum}");
        }
    }

    #[test]
    fn components_span_the_planted_plane() {
        let (p, q) = (29, 4);
        let mut e = Array2::zeros((p, 5));
        for a in 0..p {
            let t = 2.0 * PI * (q * a) as f64 / p as f64;
            e[[a, 1]] = 3.0 * t.cos();
            e[[a, 3]] = 3.0 * t.sin();
        }
        let r = fourier_projection(e.view(), p, 1e-9, 1).unwrap();
        let f = r.fit(q).unwrap();
        assert!((f.energy - 1.0).abs() < 1e-12);
        let dirs = fourier_vc_directions(&r, 1);
        assert!((dirs[0][1] - 3.0).abs() < 1e-12 && (dirs[1][3] - 3.0).abs() < 1e-12);
        assert!(dirs[0][3].abs() < 1e-12 && dirs[1][1].abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_fit_is_flagged() {
        let r = fourier_projection(Array2::zeros((5, 2)).view(), 5, 0.0, 1).unwrap();
        assert!(r.fits.iter().all(|f| f.flagged));
    }

    #[test]
    fn coordinate_probe_on_linear_embedding() {
        let coords = gaussian(60, 2, 3);
        let mix = gaussian(2, 10, 4);
        let mut emb = coords.dot(&mix);
        let noise = gaussian(60, 1, 5);
        // Noise along a direction orthogonal to the mixing rows.
        let mut orth = gaussian(10, 1, 6).column(0).to_owned();
        for r in crate::diagnostics::value::orthonormal_basis(&[mix.row(0).to_owned(), mix.row(1).to_owned()], 10).unwrap().columns() {
            let c = r.dot(&orth);
            orth.scaled_add(-c, &r);
        }
        emb += &noise.dot(&orth.insert_axis(Axis(0)));
        let p = coordinate_probe(emb.slice(ndarray::s![..40, ..]), coords.slice(ndarray::s![..40, ..]), emb.slice(ndarray::s![40.., ..]), coords.slice(ndarray::s![40.., ..]), 1e-4).unwrap();
        assert!(1.0 - p.mean_r2.unwrap() < 1e-3);
    }

    #[test]
    fn too_few_cities() {
        let x = gaussian(5, 3, 1);
        assert!(coordinate_probe(x.view(), x.view(), x.view(), x.view(), 1e-4).is_err());
    }

    #[test]
    fn dependent_directions_rejected() {
        let a = ndarray::array![1.0, 0.0, 0.0];
        let b = ndarray::array![0.0, 1.0, 0.0];
        let err = orthonormal_basis(&[a.clone(), b.clone(), &a * 2.0 - &b], 3).unwrap_err();
        assert!(matches!(err, Error::DependentDirections { index: 2 }));
    }

    #[test]
    fn full_basis_keep_is_identity() {
        let shape = MlpShape { num_tokens: 7, embed_dim: 4, hidden: vec![8], num_classes: 7 };
        let model = MlpClassifier::init(&shape, 3).unwrap();
        let dirs: Vec<_> = gaussian(4, 4, 9).rows().into_iter().map(|r| r.to_owned()).collect();
        let pairs: Vec<(u32, u32)> = (0..7).flat_map(|a| (0..7).map(move |b| (a, b))).collect();
        let labels: Vec<u32> = pairs.iter().map(|&(a, b)| (a + b) % 7).collect();
        let base = model.evaluate(&pairs, &labels).unwrap();
        let kept = vc_ablation(&model, &dirs, AblationMode::Keep, &pairs, &labels).unwrap();
        assert!((base.loss - kept.loss).abs() < 1e-9);
        assert_eq!(base.accuracy, kept.accuracy);
        // Removing everything collapses every token onto the mean.
        let basis = orthonormal_basis(&dirs, 4).unwrap();
        let gone = ablate_embeddings(&model.embedding, &basis, AblationMode::Remove);
        let mu = model.embedding.mean_axis(Axis(0)).unwrap();
        assert!(gone.rows().into_iter().all(|r| (&r - &mu).iter().all(|x| x.abs() < 1e-9)));
    }
}
