//! Pair-classification tasks whose inputs carry a continuous value:
//! modular addition and relative compass direction between cities.

mod cities;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::container::Split;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

pub use cities::{bearing_degrees, bearing_label, load_cities, City, CityTable, Octant};

/// Labeled ordered token pairs with a per-pair split tag.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    pub pairs: Vec<(u32, u32)>,
    pub labels: Vec<u32>,
    pub split: Vec<Split>,
    pub num_tokens: usize,
    pub num_classes: usize,
    pub token_names: Vec<String>,
    /// Free-form task tag, e.g. `modadd` or `map`.
    pub task: String,
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Positions of the pairs in `split`, in storage order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == split).collect()
    }

    /// Pairs and labels of one split, in storage order.
    pub fn subset(&self, split: Split) -> (Vec<(u32, u32)>, Vec<u32>) {
        self.indices(split).into_iter().map(|i| (self.pairs[i], self.labels[i])).unzip()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.pairs.len();
        if self.labels.len() != n || self.split.len() != n {
            return Err(Error::Contract("pair, label and split lists differ in length".into()));
        }
        if self.token_names.len() != self.num_tokens {
            return Err(Error::Contract("token name count differs from num_tokens".into()));
        }
        if let Some(&(a, b)) = self.pairs.iter().find(|&&(a, b)| a as usize >= self.num_tokens || b as usize >= self.num_tokens) {
            return Err(Error::Contract(format!("token in pair ({a}, {b}) out of range")));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l as usize >= self.num_classes) {
            return Err(Error::Contract(format!("label {l} out of range")));
        }
        let mut seen = self.pairs.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Contract("a pair occurs more than once".into()));
        }
        Ok(())
    }
}

/// Every ordered pair `(a, b)` over `0..p`, labeled `(a + b) mod p`, shuffled
/// by `seed` and cut into a train prefix of `⌊train_fraction·p²⌋` pairs.
pub fn gen_modadd(p: usize, train_fraction: f64, seed: u64) -> Result<PairDataset> {
    if p < 2 {
        return Err(Error::InvalidParameter("modulus must be at least 2".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter("train fraction must lie in (0, 1)".into()));
    }
    let mut pairs: Vec<(u32, u32)> = (0..p as u32).flat_map(|a| (0..p as u32).map(move |b| (a, b))).collect();
    pairs.shuffle(&mut rng::stream(seed, Purpose::Split));
    let n_train = (train_fraction * (p * p) as f64).floor() as usize;
    let labels = pairs.iter().map(|&(a, b)| (a + b) % p as u32).collect();
    let split = (0..pairs.len()).map(|i| if i < n_train { Split::Train } else { Split::Validation }).collect();
    Ok(PairDataset {
        pairs,
        labels,
        split,
        num_tokens: p,
        num_classes: p,
        token_names: (0..p).map(|a| a.to_string()).collect(),
        task: "modadd".into(),
    })
}

/// Distinct ordered pairs of different cities, sampled without replacement.
/// The first `n_train` are training pairs; labels give the octant of `b` as
/// seen from `a`.
pub fn gen_map_pairs(cities: &CityTable, n_train: usize, n_val: usize, seed: u64) -> Result<PairDataset> {
    let k = cities.cities.len();
    let universe = k * k.saturating_sub(1);
    let total = n_train + n_val;
    if total > universe {
        return Err(Error::InvalidParameter(format!(
            "requested {total} pairs but {k} cities give only {universe} ordered pairs"
        )));
    }
    let mut rng = rng::stream(seed, Purpose::Split);
    let picks = rand::seq::index::sample(&mut rng, universe, total).into_vec();
    let pairs: Vec<(u32, u32)> = picks
        .into_iter()
        .map(|idx| {
            let a = idx / (k - 1);
            let r = idx % (k - 1);
            let b = if r >= a { r + 1 } else { r };
            (a as u32, b as u32)
        })
        .collect();
    let labels = pairs
        .par_iter()
        .map(|&(a, b)| bearing_label(&cities.cities[a as usize], &cities.cities[b as usize]).map(|o| o as u32))
        .collect::<Result<Vec<_>>>()?;
    let split = (0..total).map(|i| if i < n_train { Split::Train } else { Split::Validation }).collect();
    Ok(PairDataset {
        pairs,
        labels,
        split,
        num_tokens: k,
        num_classes: 8,
        token_names: cities.cities.iter().map(|c| c.name.clone()).collect(),
        task: "map".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn table(coords: &[(f64, f64)]) -> CityTable {
        CityTable {
            cities: coords
                .iter()
                .enumerate()
                .map(|(i, &(lat, lon))| City { name: format!("c{i}"), latitude: lat, longitude: lon, population: 100 })
                .collect(),
            short: false,
        }
    }

    #[test]
    fn modadd_labels_and_size() {
        let d = gen_modadd(7, 0.5, 3).unwrap();
        assert_eq!(d.len(), 49);
        let i = d.pairs.iter().position(|&p| p == (5, 2)).unwrap();
        assert_eq!(d.labels[i], 0);
        assert_eq!(gen_modadd(113, 0.5, 0).unwrap().len(), 12_769);
        d.validate().unwrap();
    }

    #[test]
    fn modadd_splits_are_disjoint_and_seeded() {
        let d = gen_modadd(31, 0.3, 9).unwrap();
        let train: HashSet<_> = d.indices(Split::Train).into_iter().map(|i| d.pairs[i]).collect();
        let val: HashSet<_> = d.indices(Split::Validation).into_iter().map(|i| d.pairs[i]).collect();
        assert_eq!(train.len(), (0.3f64 * 961.0).floor() as usize);
        assert!(train.is_disjoint(&val));
        assert_eq!(train.len() + val.len(), 961);
        assert_eq!(d, gen_modadd(31, 0.3, 9).unwrap());
        assert_ne!(d.pairs, gen_modadd(31, 0.3, 10).unwrap().pairs);
    }

    #[test]
    fn modadd_rejects_bad_parameters() {
        assert!(gen_modadd(1, 0.5, 0).is_err());
        assert!(gen_modadd(5, 1.0, 0).is_err());
        assert!(gen_modadd(5, 0.0, 0).is_err());
    }

    #[test]
    fn map_pairs_exhaustive_when_universe_requested() {
        let t = table(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (-1.0, -1.0)]);
        let d = gen_map_pairs(&t, 8, 4, 5).unwrap();
        let all: HashSet<_> = d.pairs.iter().copied().collect();
        assert_eq!(all.len(), 12);
        assert!(d.pairs.iter().all(|&(a, b)| a != b));
        assert!(gen_map_pairs(&t, 8, 5, 5).is_err());
        let i = d.pairs.iter().position(|&p| p == (0, 1)).unwrap();
        assert_eq!(d.labels[i], Octant::N as u32);
        d.validate().unwrap();
    }

    #[test]
    fn validate_catches_duplicates_and_ranges() {
        let mut d = gen_modadd(5, 0.5, 0).unwrap();
        d.pairs[1] = d.pairs[0];
        assert!(d.validate().is_err());
        let mut d = gen_modadd(5, 0.5, 0).unwrap();
        d.labels[0] = 5;
        assert!(d.validate().is_err());
    }
}
