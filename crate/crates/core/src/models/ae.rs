//! Tied-weight autoencoder `f̂ = σ(WᵀW f + b)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::sparse::SparseBinary;

use super::{Gradients, Parametric};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    /// `max(0, x)`; derivative at exactly 0 is taken as 0.
    Rectifier,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Rectifier => x.max(0.0),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Rectifier => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "linear",
            Activation::Rectifier => "relu",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "identity" => Ok(Activation::Identity),
            "relu" | "rectifier" => Ok(Activation::Rectifier),
            other => Err(Error::InvalidParameter(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TiedAutoencoder {
    /// `m × d`; column `i` is the direction of feature `i`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeGrad {
    pub dw: Array2<f64>,
    pub db: Array1<f64>,
}

impl Gradients for AeGrad {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.dw.as_slice().expect("standard layout"), self.db.as_slice().expect("standard layout")]
    }
}

/// A mini-batch: dense targets plus, for sparse data, the active columns of
/// each row (used to encode by summing columns instead of a dense product).
pub struct AeBatch<'a> {
    pub x: Array2<f64>,
    pub active: Option<Vec<&'a [u32]>>,
}

impl<'a> AeBatch<'a> {
    pub fn dense(x: ArrayView2<f64>) -> AeBatch<'static> {
        AeBatch { x: x.to_owned(), active: None }
    }

    pub fn sparse(data: &'a SparseBinary, rows: &[usize]) -> AeBatch<'a> {
        let mut x = Array2::zeros((rows.len(), data.cols()));
        let mut active = Vec::with_capacity(rows.len());
        for (r, &i) in rows.iter().enumerate() {
            let row = data.row(i);
            for &j in row {
                x[[r, j as usize]] = 1.0;
            }
            active.push(row);
        }
        AeBatch { x, active: Some(active) }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }
}

/// Intermediate values of a batch forward pass.
pub struct AeForward {
    /// Latent codes `W f`, one row per sample.
    pub hidden: Array2<f64>,
    pub pre: Array2<f64>,
    pub recon: Array2<f64>,
}

impl TiedAutoencoder {
    pub fn zeros(m: usize, d: usize, activation: Activation) -> Self {
        TiedAutoencoder { w: Array2::zeros((m, d)), b: Array1::zeros(d), activation }
    }

    /// Gaussian weights with standard deviation `1/√m`, zero bias.
    pub fn init(m: usize, d: usize, activation: Activation, seed: u64) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::InvalidParameter("autoencoder dimensions must be positive".into()));
        }
        let normal = Normal::new(0.0, 1.0 / (m as f64).sqrt()).expect("positive std");
        let mut rng = rng::stream(seed, Purpose::Init);
        let w = Array2::from_shape_simple_fn((m, d), || normal.sample(&mut rng));
        Ok(TiedAutoencoder { w, b: Array1::zeros(d), activation })
    }

    pub fn latent_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn gram(&self) -> Array2<f64> {
        self.w.t().dot(&self.w)
    }

    fn check_width(&self, d: usize) -> Result<()> {
        if d != self.input_dim() {
            return Err(Error::Dimension(format!("input has {d} features, model expects {}", self.input_dim())));
        }
        Ok(())
    }

    /// Pre-activation and reconstruction of one sample.
    pub fn forward(&self, f: ArrayView1<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        self.check_width(f.len())?;
        let pre = self.w.t().dot(&self.w.dot(&f)) + &self.b;
        let recon = pre.mapv(|x| self.activation.apply(x));
        Ok((pre, recon))
    }

    pub fn encode(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(x.ncols())?;
        Ok(x.dot(&self.w.t()))
    }

    /// Latent codes of sparse rows, by summing active columns.
    pub fn encode_sparse(&self, rows: &[&[u32]]) -> Array2<f64> {
        // Row-major copy of Wᵀ so each active column is a contiguous slice.
        let wt = self.w.t().as_standard_layout().into_owned();
        let wt = wt.as_slice().expect("standard layout");
        let m = self.latent_dim();
        let mut h = Array2::zeros((rows.len(), m));
        for (mut out, row) in h.rows_mut().into_iter().zip(rows) {
            let out = out.as_slice_mut().expect("standard layout");
            for &j in *row {
                let col = &wt[j as usize * m..(j as usize + 1) * m];
                out.iter_mut().zip(col).for_each(|(o, c)| *o += c);
            }
        }
        h
    }

    pub fn forward_batch(&self, batch: &AeBatch) -> Result<AeForward> {
        self.check_width(batch.x.ncols())?;
        let hidden = match &batch.active {
            Some(rows) => self.encode_sparse(rows),
            None => batch.x.dot(&self.w.t()),
        };
        let pre = hidden.dot(&self.w) + &self.b;
        let recon = pre.mapv(|x| self.activation.apply(x));
        Ok(AeForward { hidden, pre, recon })
    }

    pub fn reconstruct(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_batch(&AeBatch::dense(x))?.recon)
    }

    /// Mean over samples of the summed squared reconstruction error.
    pub fn loss(&self, batch: &AeBatch) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset("loss of an empty batch".into()));
        }
        let fwd = self.forward_batch(batch)?;
        let sq: f64 = (&batch.x - &fwd.recon).iter().map(|e| e * e).sum();
        Ok(sq / batch.len() as f64)
    }

    /// Loss and its exact gradient. `W` enters twice (encoder `h = W f` and
    /// decoder `Wᵀh`), so `dW = HᵀΔ + (ΔWᵀ)ᵀX` with `Δ = ∂L/∂pre`.
    pub fn backward(&self, batch: &AeBatch) -> Result<(f64, AeGrad)> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset("gradient of an empty batch".into()));
        }
        let n = batch.len() as f64;
        let fwd = self.forward_batch(batch)?;
        let resid = &batch.x - &fwd.recon;
        let loss = resid.iter().map(|e| e * e).sum::<f64>() / n;
        let mut delta = resid;
        ndarray::Zip::from(&mut delta).and(&fwd.pre).for_each(|d, &p| *d *= -2.0 / n * self.activation.derivative(p));
        let db = delta.sum_axis(Axis(0));
        let mut dw = fwd.hidden.t().dot(&delta);
        let back = delta.dot(&self.w.t());
        match &batch.active {
            Some(rows) => {
                let m = self.latent_dim();
                let mut dwt = Array2::<f64>::zeros((self.input_dim(), m));
                let acc = dwt.as_slice_mut().expect("standard layout");
                for (g, row) in back.rows().into_iter().zip(rows) {
                    let g = g.to_slice().expect("standard layout");
                    for &j in *row {
                        acc[j as usize * m..(j as usize + 1) * m].iter_mut().zip(g).for_each(|(a, v)| *a += v);
                    }
                }
                dw += &dwt.t();
            }
            None => dw += &back.t().dot(&batch.x),
        }
        Ok((loss, AeGrad { dw, db }))
    }
}

impl Parametric for TiedAutoencoder {
    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.as_slice_mut().expect("standard layout"), self.b.as_slice_mut().expect("standard layout")]
    }

    fn params(&self) -> Vec<&[f64]> {
        vec![self.w.as_slice().expect("standard layout"), self.b.as_slice().expect("standard layout")]
    }
}
