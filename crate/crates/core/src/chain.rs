//! Finite-state Markov chains for channel gains and harvested energy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-stochasticity tolerance.
const TOL_ROW_SUM: f64 = 1e-12;

/// A finite-state chain: `values[s]` is the physical quantity attached to
/// state `s` (a channel gain or an energy amount), `rows` the row-stochastic
/// transition matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovChain {
    values: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl MarkovChain {
    pub fn new(values: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let chain = Self { values, rows };
        chain.validate()?;
        Ok(chain)
    }

    /// Checks the invariants; called both on construction and after
    /// deserialization from a config file.
    pub fn validate(&self) -> Result<()> {
        let n = self.values.len();
        if n == 0 {
            return Err(Error::Validation("chain must have at least one state".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("chain values must be finite".into()));
        }
        if self.rows.len() != n {
            return Err(Error::Validation(format!(
                "chain has {n} values but {} transition rows",
                self.rows.len()
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Validation(format!(
                    "transition row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Validation(format!(
                    "transition row {i} has entries outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > TOL_ROW_SUM {
                return Err(Error::Validation(format!(
                    "transition row {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, state: usize) -> f64 {
        self.values[state]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.rows[from][to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.rows[from]
    }

    /// Inverse-CDF sample of the successor of `current`; deterministic given
    /// the uniform draw `u ∈ [0, 1)`.
    pub fn step(&self, current: usize, u: f64) -> usize {
        let row = &self.rows[current];
        let mut acc = 0.0;
        for (next, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return next;
            }
        }
        // Rounding in the cumulative sum can leave u just past the total.
        row.len() - 1
    }
}

/// Free-function form of [`MarkovChain::step`].
pub fn chain_step(chain: &MarkovChain, current: usize, u: f64) -> usize {
    chain.step(current, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_chain_stays_put() {
        let chain = MarkovChain::new(
            vec![1.0, 2.0, 3.0],
            vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
        )
        .unwrap();
        for s in 0..3 {
            for u in [0.0, 0.3, 0.999] {
                assert_eq!(chain.step(s, u), s);
            }
        }
    }

    #[test]
    fn cdf_threshold() {
        let chain =
            MarkovChain::new(vec![0.0, 1.0], vec![vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap();
        assert_eq!(chain.step(0, 0.9), 1);
        assert_eq!(chain.step(0, 0.79), 0);
        assert_eq!(chain.step(0, 0.999999), 1);
    }

    #[test]
    fn empirical_frequencies_match_rows() {
        use rand::{Rng, SeedableRng};
        let chain =
            MarkovChain::new(vec![0.02, 0.09], vec![vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut counts = [[0u64; 2]; 2];
        let mut state = 0;
        let steps = 1_000_000;
        for _ in 0..steps {
            let next = chain.step(state, rng.random::<f64>());
            counts[state][next] += 1;
            state = next;
        }
        for from in 0..2 {
            let total: u64 = counts[from].iter().sum();
            for to in 0..2 {
                let freq = counts[from][to] as f64 / total as f64;
                assert!(
                    (freq - chain.prob(from, to)).abs() < 0.005,
                    "freq {freq} vs p {}",
                    chain.prob(from, to)
                );
            }
        }
    }

    #[test]
    fn validation_rejects_bad_rows() {
        assert!(MarkovChain::new(vec![1.0], vec![vec![0.9]]).is_err());
        assert!(MarkovChain::new(vec![1.0, 2.0], vec![vec![0.5, 0.5]]).is_err());
        assert!(MarkovChain::new(vec![1.0], vec![vec![1.5, -0.5]]).is_err());
        assert!(MarkovChain::new(vec![], vec![]).is_err());
    }

    proptest! {
        /// Row-stochasticity survives a serialization round trip, and
        /// sampling always returns a state with nonzero row probability.
        #[test]
        fn roundtrip_preserves_stochasticity(
            weights in proptest::collection::vec(
                proptest::collection::vec(0.01f64..1.0, 3), 3),
            values in proptest::collection::vec(-10.0f64..10.0, 3),
            u in 0.0f64..1.0,
        ) {
            let rows: Vec<Vec<f64>> = weights
                .iter()
                .map(|w| {
                    let s: f64 = w.iter().sum();
                    let mut row: Vec<f64> = w.iter().map(|x| x / s).collect();
                    let correction: f64 = 1.0 - row.iter().sum::<f64>();
                    row[2] += correction;
                    row
                })
                .collect();
            let chain = MarkovChain::new(values, rows).unwrap();
            let text = toml::to_string(&chain).unwrap();
            let back: MarkovChain = toml::from_str(&text).unwrap();
            back.validate().unwrap();
            prop_assert_eq!(back.len(), chain.len());
            for s in 0..chain.len() {
                let next = back.step(s, u);
                prop_assert!(back.prob(s, next) > 0.0);
            }
        }
    }
}
