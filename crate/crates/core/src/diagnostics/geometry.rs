use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::linalg::{classical_mds, correlation_to_chordal, offdiag_frobenius, pca_2d, second_moment, sym_eig, Components, MomentMode};
use crate::models::TiedAutoencoder;
use crate::report::{Cell, Table};
use crate::sparse::SparseBinary;

/// Fraction of cyclically consecutive labels (`k`, `k+1 mod n`) that sit next
/// to each other when the points are sorted by polar angle.
///
/// Equals 1 exactly when the angular order reproduces the label order up to
/// rotation and reflection.
pub fn ordering_score(coords: &Array2<f64>) -> Result<f64> {
    let n = coords.nrows();
    if n < 3 || coords.ncols() != 2 {
        return Err(Error::InvalidParameter(format!("ordering needs ≥ 3 points in 2D, got {:?}", coords.dim())));
    }
    let angle = |k: usize| coords[[k, 1]].atan2(coords[[k, 0]]);
    let mut by_angle: Vec<usize> = (0..n).collect();
    by_angle.sort_by(|&a, &b| angle(a).total_cmp(&angle(b)).then(a.cmp(&b)));
    let mut pos = vec![0; n];
    for (p, &k) in by_angle.iter().enumerate() {
        pos[k] = p;
    }
    let adjacent = (0..n)
        .filter(|&k| {
            let gap = (pos[k] + n - pos[(k + 1) % n]) % n;
            gap == 1 || gap == n - 1
        })
        .count();
    Ok(adjacent as f64 / n as f64)
}

#[derive(Debug, Clone)]
pub struct GeometryReport {
    pub name: String,
    pub features: Vec<usize>,
    pub labels: Vec<String>,
    /// One row per member.
    pub coords: Array2<f64>,
    pub variances: Array1<f64>,
    pub offdiag_frobenius: f64,
    pub ordering_score: f64,
    pub norms: Vec<f64>,
    pub degenerate: bool,
}

impl GeometryReport {
    pub fn table(&self) -> Result<Table> {
        let mut t = Table::new(["feature", "label", "pc1", "pc2", "norm"]);
        for (k, &f) in self.features.iter().enumerate() {
            t.push(vec![f.into(), self.labels[k].as_str().into(), self.coords[[k, 0]].into(), self.coords[[k, 1]].into(), self.norms[k].into()])?;
        }
        Ok(t)
    }
}

fn check_group(features: &[usize], labels: &[String], d: usize) -> Result<()> {
    if features.len() < 3 {
        return Err(Error::InvalidParameter(format!("a feature group needs ≥ 3 members, got {}", features.len())));
    }
    if labels.len() != features.len() {
        return Err(Error::Dimension(format!("{} labels for {} features", labels.len(), features.len())));
    }
    if let Some(&f) = features.iter().find(|&&f| f >= d) {
        return Err(Error::InvalidParameter(format!("feature {f} out of range")));
    }
    Ok(())
}

fn sub_gram(ae: &TiedAutoencoder, features: &[usize]) -> Array2<f64> {
    let cols = ae.w.select(Axis(1), features);
    cols.t().dot(&cols)
}

/// PCA of the selected encoder columns, with the group's overlap statistics.
/// The ordering score assumes `features` are listed in their natural order.
pub fn group_geometry(ae: &TiedAutoencoder, name: &str, features: &[usize], labels: &[String]) -> Result<GeometryReport> {
    check_group(features, labels, ae.input_dim())?;
    let points = ae.w.select(Axis(1), features).reversed_axes();
    let pca = pca_2d(points.view(), Components::Top2)?;
    let g = sub_gram(ae, features);
    Ok(GeometryReport {
        name: name.to_string(),
        features: features.to_vec(),
        labels: labels.to_vec(),
        ordering_score: ordering_score(&pca.coords)?,
        coords: pca.coords,
        variances: pca.variances,
        offdiag_frobenius: offdiag_frobenius(&g),
        norms: (0..features.len()).map(|k| g[[k, k]].sqrt()).collect(),
        degenerate: pca.degenerate,
    })
}

/// Geometry the data itself induces on a group of features.
///
/// With [`MomentMode::Correlation`] the correlation matrix becomes chordal
/// distances embedded by classical MDS; otherwise the moment matrix is read
/// as a Gram matrix and its top two scaled eigenvectors are the coordinates.
pub fn data_geometry(data: &SparseBinary, name: &str, features: &[usize], labels: &[String], mode: MomentMode) -> Result<GeometryReport> {
    check_group(features, labels, data.cols())?;
    let x = data.dense_columns(features);
    let moment = second_moment(x.view(), mode)?;
    if moment.degenerate.iter().any(|&d| d) {
        return Err(Error::Contract(format!("group members without variance: {:?}", moment.degenerate)));
    }
    let m = moment.matrix;
    let (coords, variances, degenerate) = match mode {
        MomentMode::Correlation => {
            let p = classical_mds(&correlation_to_chordal(&m)?, Components::Top2)?;
            (p.coords, p.variances, p.degenerate)
        }
        _ => {
            let dec = sym_eig(&m)?;
            let mut c = Array2::zeros((features.len(), 2));
            for k in 0..2 {
                c.column_mut(k).assign(&(&dec.eigenvectors.column(k) * dec.eigenvalues[k].max(0.0).sqrt()));
            }
            let degenerate = dec.eigenvalues[1] <= 1e-12 * dec.eigenvalues[0].abs();
            (c, dec.eigenvalues.clone(), degenerate)
        }
    };
    Ok(GeometryReport {
        name: name.to_string(),
        features: features.to_vec(),
        labels: labels.to_vec(),
        ordering_score: ordering_score(&coords)?,
        coords,
        variances,
        offdiag_frobenius: offdiag_frobenius(&m),
        norms: (0..features.len()).map(|k| m[[k, k]].sqrt()).collect(),
        degenerate,
    })
}

/// Off-diagonal Frobenius norm of the group's sub-Gram for each model.
pub fn frobenius_sweep(models: &[(usize, &TiedAutoencoder)], features: &[usize]) -> Result<Vec<(usize, f64)>> {
    if models.len() < 2 {
        return Err(Error::InvalidParameter("a sweep needs at least 2 models".into()));
    }
    models
        .iter()
        .map(|&(m, ae)| {
            if let Some(&f) = features.iter().find(|&&f| f >= ae.input_dim()) {
                return Err(Error::InvalidParameter(format!("feature {f} out of range")));
            }
            Ok((m, offdiag_frobenius(&sub_gram(ae, features))))
        })
        .collect()
}

pub fn sweep_table(groups: &[(String, Vec<(usize, f64)>)]) -> Result<Table> {
    let mut t = Table::new(["group", "latent_dim", "offdiag_frobenius"]);
    for (name, curve) in groups {
        for &(m, v) in curve {
            t.push(vec![Cell::Text(name.clone()), m.into(), v.into()])?;
        }
    }
    Ok(t)
}

/// Thresholds, as fractions of `‖w_i‖²`, for calling a feature paired.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairingRule {
    pub strong: f64,
    pub weak: f64,
}

impl Default for PairingRule {
    fn default() -> Self {
        PairingRule { strong: 0.5, weak: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AntipodalReport {
    /// Partner of each feature when it passes the rule.
    pub partners: Vec<Option<usize>>,
    pub paired: usize,
}

/// Feature `i` is antipodally paired with `j` when `G_ij` is its
/// largest-magnitude off-diagonal entry, is negative with
/// `|G_ij| ≥ strong·G_ii`, every other off-diagonal magnitude is at most
/// `weak·G_ii`, and `i` is likewise `j`'s largest-magnitude partner.
pub fn antipodal_pairs(gram: &Array2<f64>, rule: PairingRule) -> AntipodalReport {
    let n = gram.nrows();
    let top = |i: usize| super::superposition::strongest_partner(gram, i);
    let partners: Vec<Option<usize>> = (0..n)
        .map(|i| {
            let (j, v) = top(i)?;
            let norm = gram[[i, i]];
            let others_small = (0..n).filter(|&k| k != i && k != j).all(|k| gram[[i, k]].abs() <= rule.weak * norm);
            let mutual = top(j).map(|(k, _)| k) == Some(i);
            (v < 0.0 && v.abs() >= rule.strong * norm && others_small && mutual).then_some(j)
        })
        .collect();
    let paired = partners.iter().flatten().count();
    AntipodalReport { partners, paired }
}
