//! Log-space combinatorics and numerically stable probability helpers.
//!
//! Everything downstream (transition rows, best-of-lambda powers) works with
//! probabilities that span hundreds of orders of magnitude once lambda reaches
//! 2^18, so sums of log-factorials are the only representation that survives.

use std::sync::{Arc, RwLock};

/// Cumulative log-factorial table: `table[m] = ln(m!)`.
///
/// Built once with Kahan summation and shared read-only; a table built for
/// some `n` serves every smaller `n`.
#[derive(Debug)]
pub struct LogFactorials {
    table: Vec<f64>,
}

impl LogFactorials {
    fn build(max_n: usize) -> Self {
        let mut table = Vec::with_capacity(max_n + 1);
        table.push(0.0);
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for m in 1..=max_n {
            // Kahan-compensated so the absolute error stays ~1 ulp even for
            // tables of length 10^6.
            let y = (m as f64).ln() - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            table.push(sum);
        }
        LogFactorials { table }
    }

    pub fn max_n(&self) -> usize {
        self.table.len() - 1
    }

    #[inline]
    pub fn ln_factorial(&self, m: usize) -> f64 {
        self.table[m]
    }

    /// `ln C(n, k)`; returns `f64::NEG_INFINITY` for k > n.
    #[inline]
    pub fn ln_binomial(&self, n: usize, k: usize) -> f64 {
        if k > n {
            return f64::NEG_INFINITY;
        }
        self.table[n] - self.table[k] - self.table[n - k]
    }
}

static TABLE: RwLock<Option<Arc<LogFactorials>>> = RwLock::new(None);

/// Shared log-factorial table covering at least `0..=min_n`.
pub fn log_factorials(min_n: usize) -> Arc<LogFactorials> {
    if let Some(t) = TABLE.read().unwrap().as_ref() {
        if t.max_n() >= min_n {
            return Arc::clone(t);
        }
    }
    let mut guard = TABLE.write().unwrap();
    // Re-check: another thread may have grown the table while we waited.
    if let Some(t) = guard.as_ref() {
        if t.max_n() >= min_n {
            return Arc::clone(t);
        }
    }
    // Grow with headroom to avoid rebuilding on every new problem size.
    let target = (min_n + 1).next_power_of_two().max(1024);
    let fresh = Arc::new(LogFactorials::build(target));
    *guard = Some(Arc::clone(&fresh));
    fresh
}

/// Stable `1 - (1 - q)^lambda` for an improvement probability `q` in [0, 1].
#[inline]
pub fn one_minus_pow_of_complement(q: f64, lambda: u64) -> f64 {
    if q >= 1.0 {
        return 1.0;
    }
    // (1-q)^lambda = exp(lambda * ln(1-q)); the outer 1-... must go through
    // expm1, otherwise lambda = 2^18 annihilates q below ~1e-12.
    -f64::exp_m1(lambda as f64 * f64::ln_1p(-q))
}

/// Window `[lo, hi]` plus pmf values of `Bin(len, p)` with both truncated
/// tails below `tail_eps` in total mass.
///
/// The pmf is evaluated in log space from the shared log-factorial table; the
/// window walks outward from the mode until the log-pmf falls below a cutoff
/// chosen so each dropped tail is < `tail_eps`.
pub fn binomial_pmf_window(len: usize, p: f64, tail_eps: f64) -> (usize, Vec<f64>) {
    debug_assert!((0.0..1.0).contains(&p) && p > 0.0);
    if len == 0 {
        return (0, vec![1.0]);
    }
    let lf = log_factorials(len);
    let ln_p = p.ln();
    let ln_q = f64::ln_1p(-p);
    let log_pmf = |k: usize| lf.ln_binomial(len, k) + k as f64 * ln_p + (len - k) as f64 * ln_q;

    // pmf is log-concave in k, so a single cutoff bounds each tail by
    // (number of dropped terms) * cutoff <= len * cutoff.
    let cutoff = (tail_eps / (2.0 * (len as f64 + 1.0))).ln();
    let mode = (((len + 1) as f64) * p).floor().min(len as f64) as usize;

    let mut lo = mode;
    while lo > 0 && log_pmf(lo - 1) >= cutoff {
        lo -= 1;
    }
    let mut hi = mode;
    while hi < len && log_pmf(hi + 1) >= cutoff {
        hi += 1;
    }
    let pmf: Vec<f64> = (lo..=hi).map(|k| log_pmf(k).exp()).collect();
    (lo, pmf)
}
