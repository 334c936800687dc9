//! Synthetic correlated binary features driven by a low-dimensional latent.
//!
//! Each sample picks a latent point `z` on a curve (circle, figure-8) or on
//! the unit sphere, scores every feature direction `w_k` with the log-odds
//! `β·⟨w_k, z⟩ + b`, and draws the feature bits independently from the
//! resulting sigmoid probabilities.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::container::Split;
use crate::corpus::{BowsDataset, Vocab};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::sparse::SparseBinary;

/// Samples per independently seeded shard.
pub const SHARD_SIZE: usize = 4096;

pub const MONTHS: [&str; 12] = [
    "january", "february", "march", "april", "may", "june", "july", "august", "september", "october",
    "november", "december",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Cyclic,
    Figure8,
    Sphere,
}

impl CurveKind {
    pub fn name(self) -> &'static str {
        match self {
            CurveKind::Cyclic => "cyclic",
            CurveKind::Figure8 => "figure8",
            CurveKind::Sphere => "sphere",
        }
    }
}

impl std::str::FromStr for CurveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cyclic" => Ok(CurveKind::Cyclic),
            "figure8" => Ok(CurveKind::Figure8),
            "sphere" => Ok(CurveKind::Sphere),
            other => Err(Error::InvalidParameter(format!("unknown curve kind `{other}`"))),
        }
    }
}

/// How the discrete phase is chosen for the curve generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseSelection {
    Uniform,
    /// Sample `i` uses phase `i mod F`.
    Cycling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentCurveSpec {
    pub kind: CurveKind,
    pub num_features: usize,
    /// Sharpness β.
    pub sharpness: f64,
    /// Base logit b; negative values make features sparse.
    pub base_logit: f64,
    /// Standard deviation of the Gaussian blur on the phase angle.
    pub angle_noise: f64,
    pub phase: PhaseSelection,
    pub seed: u64,
}

impl Default for LatentCurveSpec {
    fn default() -> Self {
        LatentCurveSpec {
            kind: CurveKind::Cyclic,
            num_features: 12,
            sharpness: 5.0,
            base_logit: -2.0,
            angle_noise: 0.1,
            phase: PhaseSelection::Uniform,
            seed: 42,
        }
    }
}

impl LatentCurveSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sharpness > 0.0) {
            return Err(Error::InvalidParameter("sharpness must be positive".into()));
        }
        if self.num_features < 2 {
            return Err(Error::InvalidParameter("need at least two features".into()));
        }
        if !(self.angle_noise >= 0.0) {
            return Err(Error::InvalidParameter("angle noise must be non-negative".into()));
        }
        Ok(())
    }

    /// Feature directions, one row per feature.
    pub fn directions(&self) -> Array2<f64> {
        let f = self.num_features;
        match self.kind {
            CurveKind::Cyclic => Array2::from_shape_fn((f, 2), |(k, c)| {
                let phi = 2.0 * PI * k as f64 / f as f64;
                if c == 0 { phi.cos() } else { phi.sin() }
            }),
            CurveKind::Figure8 => Array2::from_shape_fn((f, 2), |(k, c)| {
                let phi = 2.0 * PI * k as f64 / f as f64;
                if c == 0 { phi.sin() } else { (2.0 * phi).sin() }
            }),
            CurveKind::Sphere => fibonacci_sphere(f),
        }
    }

    /// Latent point on the curve at phase `theta` (curve kinds only).
    pub fn curve_point(&self, theta: f64) -> Array1<f64> {
        match self.kind {
            CurveKind::Cyclic => Array1::from(vec![theta.cos(), theta.sin()]),
            CurveKind::Figure8 => Array1::from(vec![theta.sin(), (2.0 * theta).sin()]),
            CurveKind::Sphere => panic!("sphere latents are not parameterized by a phase"),
        }
    }

    /// Log-odds of every feature for latent `z`.
    pub fn logits(&self, directions: &Array2<f64>, z: &Array1<f64>) -> Array1<f64> {
        directions.dot(z).mapv(|u| self.sharpness * u + self.base_logit)
    }

    pub fn feature_names(&self) -> Vec<String> {
        if self.kind == CurveKind::Cyclic && self.num_features == 12 {
            MONTHS.iter().map(|m| m.to_string()).collect()
        } else {
            (0..self.num_features).map(|k| format!("f{k}")).collect()
        }
    }
}

/// Approximately uniform unit directions from the spherical Fibonacci lattice.
pub fn fibonacci_sphere(n: usize) -> Array2<f64> {
    let golden = PI * (1.0 + 5f64.sqrt());
    Array2::from_shape_fn((n, 3), |(k, c)| {
        let t = k as f64 + 0.5;
        let polar = (1.0 - 2.0 * t / n as f64).acos();
        let azimuth = golden * t;
        match c {
            0 => azimuth.cos() * polar.sin(),
            1 => azimuth.sin() * polar.sin(),
            _ => polar.cos(),
        }
    })
}

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn latent(spec: &LatentCurveSpec, rng: &mut ChaCha8Rng, index: usize) -> Array1<f64> {
    match spec.kind {
        CurveKind::Sphere => loop {
            let v: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break Array1::from(v.iter().map(|x| x / norm).collect::<Vec<_>>());
            }
        },
        _ => {
            let f = spec.num_features;
            let phase = match spec.phase {
                PhaseSelection::Uniform => rng.random_range(0..f),
                PhaseSelection::Cycling => index % f,
            };
            let noise: f64 = if spec.angle_noise > 0.0 {
                let g: f64 = StandardNormal.sample(rng);
                g * spec.angle_noise
            } else {
                0.0
            };
            spec.curve_point(2.0 * PI * phase as f64 / f as f64 + noise)
        }
    }
}

fn generate_with(spec: &LatentCurveSpec, n: usize, purpose: Purpose) -> Result<SparseBinary> {
    spec.validate()?;
    let directions = spec.directions();
    let shards = n.div_ceil(SHARD_SIZE);
    let rows: Vec<Vec<Vec<u32>>> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = rng::shard(spec.seed, purpose, s as u64);
            let start = s * SHARD_SIZE;
            let end = (start + SHARD_SIZE).min(n);
            (start..end)
                .map(|i| {
                    let z = latent(spec, &mut rng, i);
                    let logits = spec.logits(&directions, &z);
                    logits
                        .iter()
                        .enumerate()
                        .filter_map(|(k, &l)| {
                            let u: f64 = rng.random();
                            (u < sigmoid(l)).then_some(k as u32)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut out = SparseBinary::empty(spec.num_features);
    for row in rows.iter().flatten() {
        out.push_row(row)?;
    }
    Ok(out)
}

/// `n` samples from the spec's generator; bit-identical for equal seeds.
pub fn generate(spec: &LatentCurveSpec, n: usize) -> Result<SparseBinary> {
    generate_with(spec, n, Purpose::Sample)
}

/// Held-out samples drawn from a stream disjoint from [`generate`]'s.
pub fn generate_validation(spec: &LatentCurveSpec, n: usize) -> Result<SparseBinary> {
    generate_with(spec, n, Purpose::Validation)
}

fn expect_kind(spec: &LatentCurveSpec, kind: CurveKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::InvalidParameter(format!("spec kind is {}, expected {}", spec.kind.name(), kind.name())));
    }
    Ok(())
}

pub fn gen_cyclic(spec: &LatentCurveSpec, n: usize) -> Result<SparseBinary> {
    expect_kind(spec, CurveKind::Cyclic)?;
    generate(spec, n)
}

pub fn gen_figure8(spec: &LatentCurveSpec, n: usize) -> Result<SparseBinary> {
    expect_kind(spec, CurveKind::Figure8)?;
    generate(spec, n)
}

pub fn gen_sphere(spec: &LatentCurveSpec, n: usize) -> Result<SparseBinary> {
    expect_kind(spec, CurveKind::Sphere)?;
    generate(spec, n)
}

/// Wraps generated samples in the dataset type shared with text corpora.
pub fn as_dataset(spec: &LatentCurveSpec, samples: SparseBinary, split: Split) -> BowsDataset {
    let vocab = Vocab::synthetic(spec.feature_names());
    BowsDataset { samples, vocab, context_size: 1, stride: 1, split, dropped_windows: 0 }
}
