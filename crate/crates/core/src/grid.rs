//! Rate grids: every integer flip count for RLS, the 151-point geometric
//! probability grid `rho_i = 2^(i/5 - 10) / n` for the EAs.

use crate::error::{Error, Result};
use crate::kernel::{MutationDistribution, RateParam};

/// Number of exponents in the EA grid before the (0,1) filter.
pub const EA_GRID_EXPONENTS: usize = 151;

/// Ordered, strictly increasing list of rate parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RateGrid {
    dist: MutationDistribution,
    values: Vec<RateParam>,
}

impl RateGrid {
    /// The standard grid for a distribution and problem size.
    pub fn standard(dist: MutationDistribution, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("problem size n must be >= 1".into()));
        }
        let values = match dist {
            MutationDistribution::Rls => (1..=n).map(RateParam::FlipCount).collect(),
            MutationDistribution::Sbm | MutationDistribution::Shift => {
                let mut vals = Vec::with_capacity(EA_GRID_EXPONENTS);
                for i in 0..EA_GRID_EXPONENTS {
                    let p = (i as f64 / 5.0 - 10.0).exp2() / n as f64;
                    // Points at or above 1 are dropped; p > 0 always holds.
                    if p < 1.0 {
                        vals.push(RateParam::Probability(p));
                    }
                }
                vals
            }
        };
        Ok(RateGrid { dist, values })
    }

    pub fn dist(&self) -> MutationDistribution {
        self.dist
    }

    pub fn values(&self) -> &[RateParam] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the grid point closest to `rho` (log-scale for probabilities,
    /// absolute for flip counts).
    pub fn nearest_index(&self, rho: RateParam) -> usize {
        let target = match rho {
            RateParam::FlipCount(k) => k as f64,
            RateParam::Probability(p) => p.ln(),
        };
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for (i, v) in self.values.iter().enumerate() {
            let x = match v {
                RateParam::FlipCount(k) => *k as f64,
                RateParam::Probability(p) => p.ln(),
            };
            let dist = (x - target).abs();
            if dist < best_dist {
                best_dist = dist;
                best = i;
            }
        }
        best
    }

    /// Exact position of an RLS flip count in the grid.
    pub fn position_of_flip_count(&self, k: usize) -> Option<usize> {
        self.values.iter().position(|v| matches!(v, RateParam::FlipCount(kk) if *kk == k))
    }
}
