//! Token-pair classifier: shared embedding, concatenation, rectifier MLP,
//! softmax output.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

use super::{Gradients, Parametric};

/// Fully connected layer computing `x W + b`; `w` is `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Dense {
        Dense { w: Array2::zeros((fan_in, fan_out)), b: Array1::zeros(fan_out) }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpShape {
    pub num_tokens: usize,
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    /// `num_tokens × embed_dim`.
    pub embedding: Array2<f64>,
    pub hidden: Vec<Dense>,
    pub output: Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub embedding: Array2<f64>,
    pub hidden: Vec<Dense>,
    pub output: Dense,
}

impl Gradients for MlpGrad {
    fn slices(&self) -> Vec<&[f64]> {
        let mut out = vec![self.embedding.as_slice().expect("standard layout")];
        for l in self.hidden.iter().chain(std::iter::once(&self.output)) {
            out.push(l.w.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        out
    }
}

/// Mean cross-entropy and accuracy on a labeled set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

impl MlpClassifier {
    pub fn zeros(shape: &MlpShape) -> Self {
        let mut widths = vec![2 * shape.embed_dim];
        widths.extend(&shape.hidden);
        let hidden = widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        MlpClassifier {
            embedding: Array2::zeros((shape.num_tokens, shape.embed_dim)),
            hidden,
            output: Dense::zeros(*widths.last().expect("non-empty"), shape.num_classes),
        }
    }

    /// Standard normal embeddings; layer weights `N(0, 1/fan_in)`, zero biases.
    pub fn init(shape: &MlpShape, seed: u64) -> Result<Self> {
        if shape.num_tokens == 0 || shape.embed_dim == 0 || shape.num_classes == 0 || shape.hidden.contains(&0) {
            return Err(Error::InvalidParameter("classifier dimensions must be positive".into()));
        }
        let mut model = MlpClassifier::zeros(shape);
        let mut rng = rng::stream(seed, Purpose::Init);
        let unit = Normal::new(0.0, 1.0).expect("valid");
        model.embedding.mapv_inplace(|_| unit.sample(&mut rng));
        for layer in model.hidden.iter_mut().chain(std::iter::once(&mut model.output)) {
            let std = 1.0 / (layer.w.nrows() as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("valid");
            layer.w.mapv_inplace(|_| normal.sample(&mut rng));
        }
        Ok(model)
    }

    pub fn shape(&self) -> MlpShape {
        MlpShape {
            num_tokens: self.embedding.nrows(),
            embed_dim: self.embedding.ncols(),
            hidden: self.hidden.iter().map(|l| l.w.ncols()).collect(),
            num_classes: self.output.w.ncols(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.output.w.ncols()
    }

    fn check_tokens(&self, pairs: &[(u32, u32)]) -> Result<()> {
        let t = self.embedding.nrows();
        if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a as usize >= t || b as usize >= t) {
            return Err(Error::InvalidParameter(format!("token pair ({a}, {b}) outside vocabulary of {t}")));
        }
        Ok(())
    }

    fn inputs(&self, pairs: &[(u32, u32)]) -> Array2<f64> {
        let e = self.embedding.ncols();
        let mut x = Array2::zeros((pairs.len(), 2 * e));
        for (mut row, &(a, b)) in x.rows_mut().into_iter().zip(pairs) {
            row.slice_mut(s![..e]).assign(&self.embedding.row(a as usize));
            row.slice_mut(s![e..]).assign(&self.embedding.row(b as usize));
        }
        x
    }

    /// Class logits for a batch of ordered pairs.
    pub fn logits(&self, pairs: &[(u32, u32)]) -> Result<Array2<f64>> {
        self.check_tokens(pairs)?;
        let mut x = self.inputs(pairs);
        for layer in &self.hidden {
            x = layer.apply(&x).mapv(|v| v.max(0.0));
        }
        Ok(self.output.apply(&x))
    }

    pub fn forward(&self, a: u32, b: u32) -> Result<Array1<f64>> {
        Ok(self.logits(&[(a, b)])?.row(0).to_owned())
    }

    pub fn evaluate(&self, pairs: &[(u32, u32)], labels: &[u32]) -> Result<Evaluation> {
        if pairs.is_empty() {
            return Err(Error::EmptyDataset("evaluation set is empty".into()));
        }
        let logits = self.logits(pairs)?;
        let (loss, _) = cross_entropy(logits.view(), labels)?;
        let hits = logits
            .rows()
            .into_iter()
            .zip(labels)
            .filter(|(row, &y)| argmax(row.iter().copied()) == y as usize)
            .count();
        Ok(Evaluation { loss, accuracy: hits as f64 / pairs.len() as f64 })
    }

    /// Mean cross-entropy and exact gradients of every parameter.
    pub fn backward(&self, pairs: &[(u32, u32)], labels: &[u32]) -> Result<(f64, MlpGrad)> {
        self.check_tokens(pairs)?;
        if pairs.is_empty() || pairs.len() != labels.len() {
            return Err(Error::Dimension(format!("{} pairs with {} labels", pairs.len(), labels.len())));
        }
        let mut acts = vec![self.inputs(pairs)];
        let mut pres = Vec::with_capacity(self.hidden.len());
        for layer in &self.hidden {
            let z = layer.apply(acts.last().expect("non-empty"));
            acts.push(z.mapv(|v| v.max(0.0)));
            pres.push(z);
        }
        let logits = self.output.apply(acts.last().expect("non-empty"));
        let (loss, mut delta) = cross_entropy(logits.view(), labels)?;

        let top = acts.last().expect("non-empty");
        let output = Dense { w: top.t().dot(&delta), b: delta.sum_axis(Axis(0)) };
        let mut upstream = delta.dot(&self.output.w.t());
        let mut hidden = Vec::with_capacity(self.hidden.len());
        for (k, layer) in self.hidden.iter().enumerate().rev() {
            ndarray::Zip::from(&mut upstream).and(&pres[k]).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
            delta = upstream;
            hidden.push(Dense { w: acts[k].t().dot(&delta), b: delta.sum_axis(Axis(0)) });
            upstream = delta.dot(&layer.w.t());
        }
        hidden.reverse();

        let e = self.embedding.ncols();
        let mut embedding = Array2::zeros(self.embedding.dim());
        for (g, &(a, b)) in upstream.rows().into_iter().zip(pairs) {
            let mut ra = embedding.row_mut(a as usize);
            ra += &g.slice(s![..e]);
            let mut rb = embedding.row_mut(b as usize);
            rb += &g.slice(s![e..]);
        }
        Ok((loss, MlpGrad { embedding, hidden, output }))
    }
}

impl Parametric for MlpClassifier {
    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.embedding.as_slice_mut().expect("standard layout")];
        for l in self.hidden.iter_mut().chain(std::iter::once(&mut self.output)) {
            out.push(l.w.as_slice_mut().expect("standard layout"));
            out.push(l.b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    fn params(&self) -> Vec<&[f64]> {
        let mut out = vec![self.embedding.as_slice().expect("standard layout")];
        for l in self.hidden.iter().chain(std::iter::once(&self.output)) {
            out.push(l.w.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        out
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Mean cross-entropy of softmax(logits) and its gradient with respect to the
/// logits, `(softmax − onehot) / n`.
pub fn cross_entropy(logits: ArrayView2<f64>, labels: &[u32]) -> Result<(f64, Array2<f64>)> {
    let (n, k) = logits.dim();
    if labels.len() != n {
        return Err(Error::Dimension(format!("{n} logit rows with {} labels", labels.len())));
    }
    if let Some(&y) = labels.iter().find(|&&y| y as usize >= k) {
        return Err(Error::InvalidParameter(format!("label {y} outside {k} classes")));
    }
    let mut grad = Array2::zeros((n, k));
    let mut loss = 0.0;
    for ((row, mut g), &y) in logits.rows().into_iter().zip(grad.rows_mut()).zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[y as usize];
        for (gi, &v) in g.iter_mut().zip(row.iter()) {
            *gi = (v - log_z).exp() / n as f64;
        }
        g[y as usize] -= 1.0 / n as f64;
    }
    Ok((loss / n as f64, grad))
}
