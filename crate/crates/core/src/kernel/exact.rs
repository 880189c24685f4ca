//! Exact BigRational backend for transition rows, best-of-lambda rows and
//! drifts. Used for golden-table verification at n=30, lambda=512 and for
//! cross-checking the float backend on small problems.
//!
//! The mixture rows evaluate the literal finite k-sum over Bin(n,p) weights,
//! deliberately NOT the factorized two-binomial form the float backend uses,
//! so the two backends are independent routes to the same distribution.

use std::cell::Cell;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::{MutationDistribution, RateParam, TransitionRow};
use crate::error::{Error, Result};

pub type Rational = BigRational;

thread_local! {
    static FAULT_INJECTION: Cell<bool> = const { Cell::new(false) };
}

/// Test hook: perturb the hypergeometric denominator C(n,k) by +1 in this
/// thread, so that verification against golden tables must fail.
pub fn set_fault_injection(on: bool) {
    FAULT_INJECTION.with(|f| f.set(on));
}

pub fn binomial_big(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    num_integer::binomial(BigInt::from(n), BigInt::from(k))
}

/// Exact transition row; entries sum to exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactRow {
    parent_distance: usize,
    probs: Vec<Rational>,
}

impl ExactRow {
    fn from_improving(parent_distance: usize, mut probs: Vec<Rational>) -> Self {
        let improving: Rational = probs[..parent_distance].iter().sum();
        probs[parent_distance] = Rational::one() - improving;
        ExactRow { parent_distance, probs }
    }

    pub fn absorbing() -> Self {
        ExactRow { parent_distance: 0, probs: vec![Rational::one()] }
    }

    pub fn parent_distance(&self) -> usize {
        self.parent_distance
    }

    pub fn probs(&self) -> &[Rational] {
        &self.probs
    }

    pub fn prob(&self, d_prime: usize) -> &Rational {
        &self.probs[d_prime]
    }

    pub fn improving_mass(&self) -> Rational {
        self.probs[..self.parent_distance].iter().sum()
    }

    /// Convert to the f64 representation used by the DP.
    pub fn to_float(&self) -> TransitionRow {
        let d = self.parent_distance;
        let probs: Vec<f64> = self.probs.iter().map(rational_to_f64).collect();
        let improving = rational_to_f64(&self.improving_mass());
        TransitionRow::from_improving(d, probs, improving)
    }
}

fn check_args(n: usize, d: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain("problem size n must be >= 1".into()));
    }
    if d > n {
        return Err(Error::Domain(format!("distance {d} outside [0, {n}]")));
    }
    Ok(())
}

/// Exact k-flip row: `P(d, d+k-2b, k) = C(d,b) C(n-d,k-b) / C(n,k)`.
pub fn rls_row(n: usize, d: usize, k: usize) -> Result<ExactRow> {
    check_args(n, d)?;
    if k < 1 || k > n {
        return Err(Error::Domain(format!("flip count {k} outside [1, {n}]")));
    }
    Ok(rls_row_unchecked(n, d, k))
}

/// Raw mixture component; `k = 0` is the identity row.
fn rls_row_unchecked(n: usize, d: usize, k: usize) -> ExactRow {
    if d == 0 {
        return ExactRow::absorbing();
    }
    let mut total = binomial_big(n, k);
    if FAULT_INJECTION.with(|f| f.get()) {
        total += BigInt::one();
    }
    let mut probs = vec![Rational::zero(); d + 1];
    if k == 0 {
        probs[d] = Rational::one();
        return ExactRow { parent_distance: d, probs };
    }
    let b_lo = (k / 2 + 1).max(k.saturating_sub(n - d));
    let b_hi = k.min(d);
    for b in b_lo..=b_hi {
        let d_prime = d + k - 2 * b;
        let num = binomial_big(d, b) * binomial_big(n - d, k - b);
        probs[d_prime] = Rational::new(num, total.clone());
    }
    ExactRow::from_improving(d, probs)
}

fn check_probability(p: &Rational) -> Result<()> {
    if p <= &Rational::zero() || p >= &Rational::one() {
        return Err(Error::Domain(format!("mutation rate {p} outside (0, 1)")));
    }
    Ok(())
}

/// Bin(n, p) weights as exact rationals, `w[k] = C(n,k) p^k (1-p)^(n-k)`.
fn binomial_weights(n: usize, p: &Rational) -> Vec<Rational> {
    let q = Rational::one() - p;
    let mut p_pow = Rational::one();
    let mut weights = Vec::with_capacity(n + 1);
    for k in 0..=n {
        weights.push(Rational::from(binomial_big(n, k)) * &p_pow);
        p_pow *= p;
    }
    let mut q_pow = Rational::one();
    for k in (0..=n).rev() {
        weights[k] *= &q_pow;
        q_pow *= &q;
    }
    weights
}

fn mixture_row(n: usize, d: usize, weights: &[Rational]) -> ExactRow {
    if d == 0 {
        return ExactRow::absorbing();
    }
    let mut probs = vec![Rational::zero(); d + 1];
    for (k, w) in weights.iter().enumerate() {
        if w.is_zero() {
            continue;
        }
        let component = rls_row_unchecked(n, d, k);
        for t in 0..d {
            if !component.probs[t].is_zero() {
                probs[t] += w * &component.probs[t];
            }
        }
    }
    ExactRow::from_improving(d, probs)
}

/// Exact standard-bit-mutation row: the full finite sum over strengths.
pub fn sbm_row(n: usize, d: usize, p: &Rational) -> Result<ExactRow> {
    check_args(n, d)?;
    check_probability(p)?;
    Ok(mixture_row(n, d, &binomial_weights(n, p)))
}

/// Exact shift-mutation row: the k=0 weight is moved to k=1.
pub fn shift_row(n: usize, d: usize, p: &Rational) -> Result<ExactRow> {
    check_args(n, d)?;
    check_probability(p)?;
    let mut weights = binomial_weights(n, p);
    let w0 = std::mem::replace(&mut weights[0], Rational::zero());
    weights[1] += w0;
    Ok(mixture_row(n, d, &weights))
}

/// Dispatch on the distribution kind; f64 probabilities convert to the exact
/// binary fraction they represent.
pub fn transition_row(
    n: usize,
    dist: MutationDistribution,
    d: usize,
    rho: RateParam,
) -> Result<ExactRow> {
    match (dist, rho) {
        (MutationDistribution::Rls, RateParam::FlipCount(k)) => rls_row(n, d, k),
        (MutationDistribution::Sbm, RateParam::Probability(p)) => {
            let p = Rational::from_float(p)
                .ok_or_else(|| Error::Domain(format!("mutation rate {p} is not finite")))?;
            sbm_row(n, d, &p)
        }
        (MutationDistribution::Shift, RateParam::Probability(p)) => {
            let p = Rational::from_float(p)
                .ok_or_else(|| Error::Domain(format!("mutation rate {p} is not finite")))?;
            shift_row(n, d, &p)
        }
        (dist, rho) => Err(Error::Usage(format!("rate {rho} does not fit distribution {dist}"))),
    }
}

/// Exact best-of-lambda row via suffix-sum powers.
pub fn best_of_lambda(row: &ExactRow, lambda: u64) -> ExactRow {
    let d = row.parent_distance;
    let lambda = usize::try_from(lambda).expect("lambda fits usize");
    // suffix[t] = S(t) = sum_{u >= t} probs[u]; S(d+1) = 0.
    let mut suffix = vec![Rational::zero(); d + 2];
    for t in (0..=d).rev() {
        suffix[t] = &suffix[t + 1] + &row.probs[t];
    }
    let mut pow: Vec<Rational> = suffix.iter().map(|s| num_traits::pow(s.clone(), lambda)).collect();
    let mut probs = Vec::with_capacity(d + 1);
    for t in 0..=d {
        let hi = std::mem::take(&mut pow[t]);
        probs.push(hi - &pow[t + 1]);
    }
    ExactRow::from_improving(d, probs)
}

/// Exact drift: `sum_{d' < d} (d - d') P(d')`.
pub fn drift(row_best: &ExactRow) -> Rational {
    let d = row_best.parent_distance;
    let mut s = Rational::zero();
    for (d_prime, p) in row_best.probs[..d].iter().enumerate() {
        if !p.is_zero() {
            s += Rational::from(BigInt::from(d - d_prime)) * p;
        }
    }
    s
}

/// Correctly scaled BigRational -> f64 conversion.
///
/// Scales the quotient into a ~64-bit integer first; a plain numer/denom
/// conversion overflows to inf/inf for the >1000-bit integers the lambda
/// powers produce.
pub fn rational_to_f64(r: &Rational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let negative = r.is_negative();
    let a = r.numer().abs();
    let b = r.denom().clone();
    // Shift so that the integer quotient carries ~64 significant bits.
    let t: i64 = 64 + b.bits() as i64 - a.bits() as i64;
    let q = if t >= 0 { (a << t as u64) / b } else { a / (b << (-t) as u64) };
    let q = q.to_f64().expect("64-bit quotient converts");
    let v = q * f64::powi(2.0, (-t).clamp(i32::MIN as i64, i32::MAX as i64) as i32);
    if negative {
        -v
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(num: i64, den: i64) -> Rational {
        Rational::new(BigInt::from(num), BigInt::from(den))
    }

    #[test]
    fn rls_row_appendix_fractions() {
        let row = rls_row(30, 7, 7).unwrap();
        assert_eq!(row.prob(0), &rat(1, 2_035_800));
        assert_eq!(row.prob(2), &rat(161, 2_035_800));
        assert_eq!(row.prob(4), &rat(1771, 678_600));
        assert_eq!(row.prob(6), &rat(12_397, 407_160));
        assert_eq!(row.prob(7), &rat(98_417, 101_790));
        assert!(row.prob(1).is_zero() && row.prob(3).is_zero() && row.prob(5).is_zero());
    }

    #[test]
    fn rows_sum_to_exactly_one() {
        let cases: Vec<ExactRow> = vec![
            rls_row(12, 5, 3).unwrap(),
            sbm_row(9, 4, &rat(1, 6)).unwrap(),
            shift_row(9, 4, &rat(1, 6)).unwrap(),
            best_of_lambda(&rls_row(12, 5, 3).unwrap(), 8),
        ];
        for row in cases {
            let total: Rational = row.probs().iter().sum();
            assert!(total.is_one());
        }
    }

    #[test]
    fn sbm_row_mask_oracle_value() {
        // n=3, d=1, p=1/2: of the 8 equally likely masks only {wrong bit}
        // improves, so probs[0] = 1/8.
        let row = sbm_row(3, 1, &rat(1, 2)).unwrap();
        assert_eq!(row.prob(0), &rat(1, 8));
        assert_eq!(row.prob(1), &rat(7, 8));
    }

    #[test]
    fn shift_row_moves_zero_mass_to_single_flip() {
        // n=3, d=1, p=1/2: shifted weights (0, 1/2, 3/8, 1/8); only k=1
        // improves with probability d/n = 1/3 -> probs[0] = 1/6.
        let row = shift_row(3, 1, &rat(1, 2)).unwrap();
        assert_eq!(row.prob(0), &rat(1, 6));
    }

    #[test]
    fn best_of_lambda_exact_small() {
        // d=1, single flip at n=2: improving mass 1/2; best of 2 improves
        // with 1 - (1/2)^2 = 3/4.
        let row = rls_row(2, 1, 1).unwrap();
        let best = best_of_lambda(&row, 2);
        assert_eq!(best.prob(0), &rat(3, 4));
        assert_eq!(best.prob(1), &rat(1, 4));
    }

    #[test]
    fn drift_exact_appendix_cell() {
        let best = best_of_lambda(&rls_row(30, 7, 5).unwrap(), 512);
        let g = drift(&best);
        let v = rational_to_f64(&g);
        assert!((v - 3.0434).abs() < 5e-5, "got {v}");
    }

    #[test]
    fn rational_to_f64_handles_huge_magnitudes() {
        let tiny = num_traits::pow(rat(23, 30), 512);
        let v = rational_to_f64(&tiny);
        assert!((v / 8.29e-60 - 1.0).abs() < 1e-2, "got {v}");
        assert_eq!(rational_to_f64(&Rational::zero()), 0.0);
        assert_eq!(rational_to_f64(&rat(-3, 2)), -1.5);
        let one_half = rat(1, 2);
        assert_eq!(rational_to_f64(&one_half), 0.5);
    }

    #[test]
    fn float_and_exact_backends_agree() {
        // Relative error <= 1e-10 on all entries >= 1e-200 for n <= 30.
        let ctx = crate::kernel::ProblemContext::new(30, 1).unwrap();
        for d in [1usize, 7, 8, 15, 30] {
            for k in 1..=10usize {
                let f = crate::kernel::rls_row(&ctx, d, k).unwrap();
                let e = rls_row(30, d, k).unwrap();
                for t in 0..=d {
                    let ev = rational_to_f64(e.prob(t));
                    if ev >= 1e-200 {
                        assert!(
                            (f.prob(t) - ev).abs() <= 1e-10 * ev,
                            "d={d} k={k} t={t}: {} vs {ev}",
                            f.prob(t)
                        );
                    }
                }
            }
        }
        let pf = 5.0 / 30.0;
        for d in [1usize, 7, 19] {
            let fs = crate::kernel::sbm_row(&ctx, d, pf).unwrap();
            let es = sbm_row(30, d, &Rational::from_float(pf).unwrap()).unwrap();
            for t in 0..=d {
                let ev = rational_to_f64(es.prob(t));
                if ev >= 1e-200 {
                    assert!((fs.prob(t) - ev).abs() <= 1e-12 * ev.max(1.0), "d={d} t={t}");
                }
            }
        }
    }

    #[test]
    fn fault_injection_perturbs_fractions() {
        let clean = rls_row(30, 7, 1).unwrap();
        set_fault_injection(true);
        let faulty = rls_row(30, 7, 1).unwrap();
        set_fault_injection(false);
        assert_ne!(clean.prob(6), faulty.prob(6));
        let after = rls_row(30, 7, 1).unwrap();
        assert_eq!(clean.prob(6), after.prob(6));
    }
}
