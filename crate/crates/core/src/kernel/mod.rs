//! Single-offspring transition rows under elitist collapse, best-of-lambda
//! order statistics, and one-step drift, for the three mutation distributions
//! (deterministic k-bit flips, standard bit mutation, shift mutation).
//!
//! A row for parent distance `d` stores probabilities for offspring distances
//! `d' in [0, d]`; everything at distance >= d is equivalent to staying under
//! elitist selection and is collapsed into the `d'` = d entry.

pub mod exact;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numeric::{binomial_pmf_window, log_factorials, one_minus_pow_of_complement};

/// Both truncated tails of the mutation-strength mixture stay below this.
const MIXTURE_TAIL_EPS: f64 = 1e-15;

/// Problem dimensions shared by every computation: bit-string length `n` and
/// offspring population size `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProblemContext {
    n: usize,
    lambda: u64,
}

impl ProblemContext {
    pub fn new(n: usize, lambda: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("problem size n must be >= 1".into()));
        }
        if lambda == 0 {
            return Err(Error::Domain("population size lambda must be >= 1".into()));
        }
        Ok(ProblemContext { n, lambda })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn lambda(&self) -> u64 {
        self.lambda
    }
}

/// Mutation-strength distribution of the offspring operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MutationDistribution {
    /// Deterministic k-bit flip (randomized local search).
    Rls,
    /// Standard bit mutation: strength ~ Bin(n, p).
    Sbm,
    /// Shift mutation: Bin(n, p) with the k=0 mass moved to k=1.
    Shift,
}

impl MutationDistribution {
    pub fn is_ea(self) -> bool {
        !matches!(self, MutationDistribution::Rls)
    }
}

impl fmt::Display for MutationDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MutationDistribution::Rls => "rls",
            MutationDistribution::Sbm => "sbm",
            MutationDistribution::Shift => "shift",
        };
        f.write_str(s)
    }
}

impl FromStr for MutationDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rls" => Ok(MutationDistribution::Rls),
            "sbm" => Ok(MutationDistribution::Sbm),
            "shift" => Ok(MutationDistribution::Shift),
            other => Err(Error::Usage(format!(
                "unknown distribution `{other}` (expected rls, sbm or shift)"
            ))),
        }
    }
}

/// One point of the rate axis: a flip count for RLS, a mutation probability
/// for the EAs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateParam {
    FlipCount(usize),
    Probability(f64),
}

impl RateParam {
    pub fn validate(&self, dist: MutationDistribution, n: usize) -> Result<()> {
        match (dist, self) {
            (MutationDistribution::Rls, RateParam::FlipCount(k)) => {
                if *k < 1 || *k > n {
                    Err(Error::Domain(format!("flip count {k} outside [1, {n}]")))
                } else {
                    Ok(())
                }
            }
            (MutationDistribution::Sbm | MutationDistribution::Shift, RateParam::Probability(p)) => {
                if p.is_finite() && *p > 0.0 && *p < 1.0 {
                    Ok(())
                } else {
                    Err(Error::Domain(format!("mutation rate {p} outside (0, 1)")))
                }
            }
            (d, r) => Err(Error::Usage(format!("rate {r} does not fit distribution {d}"))),
        }
    }

    /// CSV form: integer for flip counts, 17 significant digits for
    /// probabilities (lossless f64 round-trip).
    pub fn to_csv_field(&self) -> String {
        match self {
            RateParam::FlipCount(k) => k.to_string(),
            RateParam::Probability(p) => format!("{p:.16e}"),
        }
    }

    /// Numeric value on the rate axis (k or p).
    pub fn as_f64(&self) -> f64 {
        match self {
            RateParam::FlipCount(k) => *k as f64,
            RateParam::Probability(p) => *p,
        }
    }
}

impl fmt::Display for RateParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateParam::FlipCount(k) => write!(f, "{k}"),
            RateParam::Probability(p) => write!(f, "{p}"),
        }
    }
}

/// Numeric backend for transition-row computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumericBackend {
    Float64,
    /// Exact BigRational rows; permitted only for n <= 64 (cost guard).
    ExactRational,
}

/// Largest n for which the exact-rational backend is allowed.
pub const EXACT_BACKEND_MAX_N: usize = 64;

/// Distribution of the offspring distance `d'` for one parent distance `d`,
/// with the non-improving mass collapsed into the entry at `d'` = d.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRow {
    parent_distance: usize,
    probs: Vec<f64>,
    /// Sum of the strictly improving entries, accumulated directly (no
    /// cancellation) so that 1 - P(d,d,rho)^lambda survives even when the
    /// improving mass is far below one f64 ulp of 1.
    improving_mass: f64,
}

impl TransitionRow {
    fn from_improving(parent_distance: usize, mut probs: Vec<f64>, improving_mass: f64) -> Self {
        debug_assert_eq!(probs.len(), parent_distance + 1);
        let improving_mass = improving_mass.clamp(0.0, 1.0);
        probs[parent_distance] = (1.0 - improving_mass).max(0.0);
        TransitionRow { parent_distance, probs, improving_mass }
    }

    /// Absorbing row at distance 0.
    pub fn absorbing() -> Self {
        TransitionRow { parent_distance: 0, probs: vec![1.0], improving_mass: 0.0 }
    }

    #[inline]
    pub fn parent_distance(&self) -> usize {
        self.parent_distance
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn prob(&self, d_prime: usize) -> f64 {
        self.probs[d_prime]
    }

    /// Probability that one offspring strictly improves the parent.
    #[inline]
    pub fn improving_mass(&self) -> f64 {
        self.improving_mass
    }
}

fn check_distance(ctx: &ProblemContext, d: usize) -> Result<()> {
    if d > ctx.n {
        return Err(Error::Domain(format!("distance {d} outside [0, {}]", ctx.n)));
    }
    Ok(())
}

/// Transition row of the deterministic k-bit flip operator.
///
/// An offspring lands at `d' = d + k - 2b` where `b` of the k flipped bits
/// hit the d wrong positions; `P(b) = C(d,b) C(n-d,k-b) / C(n,k)`.
pub fn rls_row(ctx: &ProblemContext, d: usize, k: usize) -> Result<TransitionRow> {
    check_distance(ctx, d)?;
    RateParam::FlipCount(k).validate(MutationDistribution::Rls, ctx.n)?;
    if d == 0 {
        return Ok(TransitionRow::absorbing());
    }
    let n = ctx.n;
    let lf = log_factorials(n);
    let ln_total = lf.ln_binomial(n, k);

    let mut probs = vec![0.0f64; d + 1];
    let mut improving = 0.0f64;
    // Strict improvement needs b > k - b, i.e. b >= floor(k/2) + 1.
    let b_lo = (k / 2 + 1).max(k.saturating_sub(n - d));
    let b_hi = k.min(d);
    for b in b_lo..=b_hi {
        let d_prime = d + k - 2 * b;
        debug_assert!(d_prime < d);
        let p = (lf.ln_binomial(d, b) + lf.ln_binomial(n - d, k - b) - ln_total).exp();
        probs[d_prime] = p;
        improving += p;
    }
    Ok(TransitionRow::from_improving(d, probs, improving))
}

/// Shared mixture core of the two EA operators.
///
/// Standard bit mutation factorizes over the wrong/right bit sets: the number
/// of repaired bits is Bin(d, p) and the number of broken bits is an
/// independent Bin(n-d, p), which is algebraically identical to mixing the
/// hypergeometric k-flip rows with Bin(n, p) weights but costs only the
/// product of two truncated windows.
fn sbm_improving_probs(n: usize, d: usize, p: f64) -> Vec<f64> {
    let (b_lo, b_pmf) = binomial_pmf_window(d, p, MIXTURE_TAIL_EPS);
    let (j_lo, j_pmf) = binomial_pmf_window(n - d, p, MIXTURE_TAIL_EPS);
    let b_hi = b_lo + b_pmf.len() - 1;
    let j_hi = j_lo + j_pmf.len() - 1;

    let mut probs = vec![0.0f64; d + 1];
    // m = b - j >= 1 is the net improvement; d' = d - m.
    let m_max = d.min(b_hi.saturating_sub(j_lo));
    for m in 1..=m_max {
        let j_from = j_lo.max(b_lo.saturating_sub(m));
        let j_to = j_hi.min(b_hi - m);
        let mut s = 0.0f64;
        for j in j_from..=j_to {
            s += b_pmf[m + j - b_lo] * j_pmf[j - j_lo];
        }
        probs[d - m] = s;
    }
    probs
}

/// Transition row of standard bit mutation with rate `p`.
pub fn sbm_row(ctx: &ProblemContext, d: usize, p: f64) -> Result<TransitionRow> {
    check_distance(ctx, d)?;
    RateParam::Probability(p).validate(MutationDistribution::Sbm, ctx.n)?;
    if d == 0 {
        return Ok(TransitionRow::absorbing());
    }
    let probs = sbm_improving_probs(ctx.n, d, p);
    let improving = probs[..d].iter().sum();
    Ok(TransitionRow::from_improving(d, probs, improving))
}

/// Transition row of shift mutation: the zero-flip mass `(1-p)^n` behaves as
/// one uniformly random single-bit flip, so
/// `shift = sbm + (1-p)^n * (rls_1 - identity)`.
pub fn shift_row(ctx: &ProblemContext, d: usize, p: f64) -> Result<TransitionRow> {
    check_distance(ctx, d)?;
    RateParam::Probability(p).validate(MutationDistribution::Shift, ctx.n)?;
    if d == 0 {
        return Ok(TransitionRow::absorbing());
    }
    let n = ctx.n;
    let mut probs = sbm_improving_probs(n, d, p);
    let zero_flip = (n as f64 * f64::ln_1p(-p)).exp();
    probs[d - 1] += zero_flip * d as f64 / n as f64;
    let improving = probs[..d].iter().sum();
    Ok(TransitionRow::from_improving(d, probs, improving))
}

/// Row dispatch on the distribution kind.
pub fn transition_row(
    ctx: &ProblemContext,
    dist: MutationDistribution,
    d: usize,
    rho: RateParam,
) -> Result<TransitionRow> {
    match (dist, rho) {
        (MutationDistribution::Rls, RateParam::FlipCount(k)) => rls_row(ctx, d, k),
        (MutationDistribution::Sbm, RateParam::Probability(p)) => sbm_row(ctx, d, p),
        (MutationDistribution::Shift, RateParam::Probability(p)) => shift_row(ctx, d, p),
        (dist, rho) => Err(Error::Usage(format!("rate {rho} does not fit distribution {dist}"))),
    }
}

/// Row dispatch honoring the numeric backend; the exact backend computes the
/// row in rational arithmetic and converts the entries to f64.
pub fn transition_row_with(
    backend: NumericBackend,
    ctx: &ProblemContext,
    dist: MutationDistribution,
    d: usize,
    rho: RateParam,
) -> Result<TransitionRow> {
    match backend {
        NumericBackend::Float64 => transition_row(ctx, dist, d, rho),
        NumericBackend::ExactRational => {
            if ctx.n > EXACT_BACKEND_MAX_N {
                return Err(Error::Usage(format!(
                    "exact backend permitted only for n <= {EXACT_BACKEND_MAX_N} (got n = {})",
                    ctx.n
                )));
            }
            Ok(exact::transition_row(ctx.n, dist, d, rho)?.to_float())
        }
    }
}

/// Distribution of the best (minimum) distance among `lambda` independent
/// offspring: `P^lambda(d') = S(d')^lambda - S(d'+1)^lambda` with
/// `S(t) = sum_{u >= t} row[u]`.
///
/// Powers go through `exp(lambda * ln1p(-C))` on the improving prefix sums
/// `C(t) = sum_{u < t} row[u]`, and neighbor differences through `expm1`;
/// naive subtraction dies for lambda up to 2^18.
pub fn best_of_lambda(row: &TransitionRow, lambda: u64) -> TransitionRow {
    let d = row.parent_distance;
    if lambda == 1 {
        return row.clone();
    }
    let lam = lambda as f64;

    // prefix[t] = probability of strictly beating distance t with one
    // offspring, i.e. C(t); prefix[0] = 0, prefix[d] = improving mass.
    let mut prefix = vec![0.0f64; d + 1];
    let mut acc = 0.0f64;
    for t in 0..d {
        prefix[t] = acc;
        acc += row.probs[t];
    }
    if d > 0 {
        prefix[d] = row.improving_mass;
    }

    let mut probs = vec![0.0f64; d + 1];
    for t in 0..d {
        // S(t) = 1 - C(t); zero survivor mass above t means zero probability.
        let ln_s_t = f64::ln_1p(-prefix[t].min(1.0));
        if ln_s_t == f64::NEG_INFINITY {
            continue;
        }
        let ln_s_next = f64::ln_1p(-prefix[t + 1].min(1.0));
        let a = lam * ln_s_t;
        let delta = lam * (ln_s_next - ln_s_t);
        probs[t] = if delta == f64::NEG_INFINITY {
            a.exp()
        } else {
            a.exp() * (-f64::exp_m1(delta))
        };
    }
    // The improving mass in the stable form: the entry sum loses tiny-q
    // cases to rounding, 1 - (1-q)^lambda does not.
    let improving = one_minus_pow_of_complement(row.improving_mass, lambda);
    TransitionRow::from_improving(d, probs, improving)
}

/// Expected one-iteration distance decrease of a best-of-lambda row.
pub fn drift(row_best: &TransitionRow) -> f64 {
    let d = row_best.parent_distance;
    let mut s = 0.0f64;
    for (d_prime, &p) in row_best.probs[..d].iter().enumerate() {
        s += (d - d_prime) as f64 * p;
    }
    s
}

/// Debug CSV export of a row: columns `d,dprime,prob`.
pub fn write_row_csv<W: Write>(w: &mut W, row: &TransitionRow) -> std::io::Result<()> {
    writeln!(w, "d,dprime,prob")?;
    for (d_prime, p) in row.probs.iter().enumerate() {
        writeln!(w, "{},{},{}", row.parent_distance, d_prime, p)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(n: usize, lambda: u64) -> ProblemContext {
        ProblemContext::new(n, lambda).unwrap()
    }

    #[test]
    fn rls_row_single_flip_n2() {
        // One flip from d=1 hits the wrong bit with probability d/n.
        let row = rls_row(&ctx(2, 1), 1, 1).unwrap();
        assert!((row.prob(0) - 0.5).abs() < 1e-15);
        assert!((row.prob(1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rls_row_appendix_k1() {
        let row = rls_row(&ctx(30, 512), 7, 1).unwrap();
        assert!((row.prob(6) - 7.0 / 30.0).abs() < 1e-15);
        assert!((row.prob(7) - 23.0 / 30.0).abs() < 1e-15);
        assert_eq!(row.prob(0), 0.0);
    }

    #[test]
    fn rls_row_appendix_k7() {
        let row = rls_row(&ctx(30, 512), 7, 7).unwrap();
        let c30_7 = 2_035_800.0;
        assert!((row.prob(0) - 1.0 / c30_7).abs() < 1e-18);
        assert!((row.prob(2) - 161.0 / c30_7).abs() < 1e-16);
        assert!((row.prob(4) - 1771.0 / 678_600.0).abs() < 1e-15);
        assert!((row.prob(6) - 12_397.0 / 407_160.0).abs() < 1e-13);
        assert!((row.prob(7) - 98_417.0 / 101_790.0).abs() < 1e-12);
        for odd in [1usize, 3, 5] {
            assert_eq!(row.prob(odd), 0.0, "parity: d - d' must match k mod 2");
        }
    }

    #[test]
    fn rls_row_domain_errors() {
        assert!(rls_row(&ctx(10, 1), 3, 0).is_err());
        assert!(rls_row(&ctx(10, 1), 3, 11).is_err());
        assert!(rls_row(&ctx(10, 1), 11, 1).is_err());
    }

    #[test]
    fn rls_row_k_at_least_2d_cannot_improve() {
        let row = rls_row(&ctx(20, 1), 4, 8).unwrap();
        assert_eq!(row.improving_mass(), 0.0);
        assert_eq!(row.prob(4), 1.0);
    }

    #[test]
    fn sbm_row_keeps_zero_flip_mass() {
        let n = 40;
        let p = 2f64.powi(-10) / n as f64;
        let row = sbm_row(&ctx(n, 1), 17, p).unwrap();
        assert!(row.prob(17) >= (1.0 - p).powi(n as i32));
    }

    #[test]
    fn sbm_row_mask_oracle_value() {
        // All 8 masks at n=3, d=1: only the mask {wrong bit} improves, so
        // probs[0] = 1/8 for p = 1/2.
        let row = sbm_row(&ctx(3, 1), 1, 0.5).unwrap();
        assert!((row.prob(0) - 0.125).abs() < 1e-15, "got {}", row.prob(0));
    }

    #[test]
    fn sbm_row_rejects_bad_p() {
        assert!(sbm_row(&ctx(10, 1), 3, 0.0).is_err());
        assert!(sbm_row(&ctx(10, 1), 3, 1.0).is_err());
        assert!(sbm_row(&ctx(10, 1), 3, f64::NAN).is_err());
    }

    #[test]
    fn shift_row_single_flip_weight() {
        // At d = n every flip count k lands exactly at n - k, so the entry at
        // n-1 reads off the shifted P(K=1) = (1-p)^n + n p (1-p)^(n-1).
        let n = 10;
        let p = 0.1;
        let row = shift_row(&ctx(n, 1), n, p).unwrap();
        let expected = 0.9f64.powi(10) + 10.0 * 0.1 * 0.9f64.powi(9);
        assert!((row.prob(n - 1) - expected).abs() < 1e-14);
    }

    #[test]
    fn shift_row_small_p_approaches_single_flip() {
        let row = shift_row(&ctx(12, 1), 5, 1e-13).unwrap();
        let rls1 = rls_row(&ctx(12, 1), 5, 1).unwrap();
        for t in 0..=5 {
            assert!((row.prob(t) - rls1.prob(t)).abs() < 1e-10);
        }
    }

    #[test]
    fn shift_equals_sbm_plus_single_flip_term() {
        let n = 17;
        let d = 6;
        let p = 0.07;
        let c = ctx(n, 1);
        let shift = shift_row(&c, d, p).unwrap();
        let sbm = sbm_row(&c, d, p).unwrap();
        let w0 = (1.0 - p).powi(n as i32);
        for t in 0..d {
            let expected = sbm.prob(t) + if t == d - 1 { w0 * d as f64 / n as f64 } else { 0.0 };
            assert!((shift.prob(t) - expected).abs() < 1e-15);
        }
        let stay_expected = sbm.prob(d) - w0 * d as f64 / n as f64;
        assert!((shift.prob(d) - stay_expected).abs() < 1e-12);
    }

    #[test]
    fn best_of_one_is_identity() {
        let row = rls_row(&ctx(8, 1), 3, 2).unwrap();
        assert_eq!(best_of_lambda(&row, 1), row);
    }

    #[test]
    fn best_of_lambda_appendix_values() {
        let row = rls_row(&ctx(30, 512), 7, 7).unwrap();
        let best = best_of_lambda(&row, 512);
        let rel = |a: f64, b: f64| (a - b).abs() / b;
        assert!(rel(best.prob(0), 2.51e-4) < 5e-3);
        assert!(rel(best.prob(2), 3.97e-2) < 5e-3);
        assert!(rel(best.prob(4), 1.0 - 2.92e-1) < 5e-3);
        assert!(rel(best.prob(7), 3.21e-8) < 5e-3);
    }

    #[test]
    fn best_of_lambda_stable_for_huge_lambda() {
        let row = rls_row(&ctx(1000, 1), 1, 1).unwrap();
        let best = best_of_lambda(&row, 1 << 18);
        let q = one_minus_pow_of_complement(1.0 / 1000.0, 1 << 18);
        assert!((best.improving_mass() - q).abs() / q < 1e-12);
        assert!(best.prob(0) > 0.0);
    }

    #[test]
    fn drift_single_offspring_single_flip() {
        for n in [5usize, 30, 101] {
            for d in [1usize, 2, n / 2, n] {
                let row = rls_row(&ctx(n, 1), d, 1).unwrap();
                let g = drift(&best_of_lambda(&row, 1));
                assert!((g - d as f64 / n as f64).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn drift_appendix_table_values() {
        let c = ctx(30, 512);
        let d7k5 = drift(&best_of_lambda(&rls_row(&c, 7, 5).unwrap(), 512));
        assert!((d7k5 - 3.0434).abs() < 5e-5, "got {d7k5}");
        let d8k4 = drift(&best_of_lambda(&rls_row(&c, 8, 4).unwrap(), 512));
        assert!((d8k4 - 3.4601).abs() < 5e-5, "got {d8k4}");
    }

    #[test]
    fn row_csv_format() {
        let row = rls_row(&ctx(4, 1), 2, 1).unwrap();
        let mut buf = Vec::new();
        write_row_csv(&mut buf, &row).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("d,dprime,prob"));
        assert_eq!(lines.next(), Some("2,0,0"));
        assert!(lines.next().unwrap().starts_with("2,1,0.5"));
    }
}
