//! Dynamic program over distances: per-distance optimal (time-minimizing) and
//! drift-maximizing rate policies, optimal remaining times, and the full
//! remaining-time table over the rate grid.
//!
//! The recurrence for the expected remaining time at distance `d` with rate
//! `rho` held fixed at `d` and optimal behavior below is
//!
//! ```text
//! T(d, rho) = (1 + sum_{0 < d' < d} T*(d') P^lambda(d, d', rho))
//!             / (1 - P(d, d, rho)^lambda)
//! ```
//!
//! with the d'=0 term contributing nothing. Rates with no improving outcome
//! get the +inf sentinel and are excluded from minimization.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::RateGrid;
use crate::kernel::{
    best_of_lambda, drift, transition_row_with, MutationDistribution, NumericBackend,
    ProblemContext, RateParam, TransitionRow, EXACT_BACKEND_MAX_N,
};

/// Denominators below this are treated as "no improving outcome".
pub const IMPROVEMENT_UNDERFLOW: f64 = 1e-300;

/// Optimization criterion for the per-distance rate choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    /// Minimize the expected remaining time.
    Opt,
    /// Maximize the expected one-step distance decrease.
    Drift,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Opt => "opt",
            Criterion::Drift => "drift",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "opt" => Ok(Criterion::Opt),
            "drift" => Ok(Criterion::Drift),
            other => {
                Err(Error::Usage(format!("unknown criterion `{other}` (expected opt or drift)")))
            }
        }
    }
}

/// Per-distance chosen rate and expected remaining time for one
/// (n, lambda, distribution, criterion).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    ctx: ProblemContext,
    dist: MutationDistribution,
    crit: Criterion,
    /// rho*(d) for d = 1..=n at index d-1.
    rho: Vec<RateParam>,
    /// t*(d) for d = 0..=n; t[0] = 0.
    t: Vec<f64>,
}

impl PolicyTable {
    pub fn ctx(&self) -> &ProblemContext {
        &self.ctx
    }

    pub fn dist(&self) -> MutationDistribution {
        self.dist
    }

    pub fn crit(&self) -> Criterion {
        self.crit
    }

    pub fn rho_star(&self, d: usize) -> RateParam {
        self.rho[d - 1]
    }

    pub fn t_star(&self, d: usize) -> f64 {
        self.t[d]
    }

    /// t*(d) for d = 0..=n.
    pub fn t_star_all(&self) -> &[f64] {
        &self.t
    }
}

/// Remaining times over the whole rate grid for one distance.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSlice {
    pub d: usize,
    /// Aligned with the grid ordering.
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub backend: NumericBackend,
    /// One golden-section refinement pass between the best grid point's
    /// neighbors (EA distributions, OPT criterion only). Off by default so
    /// the stored tables are bit-compatible with the plain grid.
    pub refine_ea_grid: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { backend: NumericBackend::Float64, refine_ea_grid: false }
    }
}

/// T(d, rho) from a best-of-lambda row and the optimal times below d.
fn remaining_time_of_best(best: &TransitionRow, t_lower: &[f64]) -> f64 {
    let d = best.parent_distance();
    let q = best.improving_mass();
    if !(q >= IMPROVEMENT_UNDERFLOW) {
        return f64::INFINITY;
    }
    let mut acc = 1.0f64;
    for d_prime in 1..d {
        let p = best.prob(d_prime);
        if p > 0.0 {
            acc += t_lower[d_prime] * p;
        }
    }
    acc / q
}

/// Expected remaining time at distance `d` using rate `rho` at `d` and the
/// policy's optimal rates below.
pub fn remaining_time(
    ctx: &ProblemContext,
    dist: MutationDistribution,
    d: usize,
    rho: RateParam,
    lower_policy: &PolicyTable,
) -> Result<f64> {
    if lower_policy.ctx != *ctx || lower_policy.dist != dist {
        return Err(Error::Usage("lower policy was built for a different problem".into()));
    }
    if d == 0 || d > ctx.n() {
        return Err(Error::Domain(format!("distance {d} outside [1, {}]", ctx.n())));
    }
    rho.validate(dist, ctx.n())?;
    let row = transition_row_with(NumericBackend::Float64, ctx, dist, d, rho)?;
    let best = best_of_lambda(&row, ctx.lambda());
    Ok(remaining_time_of_best(&best, &lower_policy.t[..d]))
}

fn validate_grid(ctx: &ProblemContext, dist: MutationDistribution, grid: &RateGrid) -> Result<()> {
    if grid.dist() != dist {
        return Err(Error::Usage(format!(
            "grid built for {} used with distribution {dist}",
            grid.dist()
        )));
    }
    if grid.is_empty() {
        return Err(Error::Usage("empty rate grid".into()));
    }
    for v in grid.values() {
        v.validate(dist, ctx.n())?;
    }
    Ok(())
}

/// Iterates d = 1..n, choosing rho*(d) by the criterion (time argmin or drift
/// argmax; ties break toward the smaller rho) and retaining every grid
/// evaluation as a TimeSlice.
pub fn build_policy(
    ctx: &ProblemContext,
    dist: MutationDistribution,
    crit: Criterion,
    grid: &RateGrid,
    opts: BuildOptions,
) -> Result<(PolicyTable, Vec<TimeSlice>)> {
    validate_grid(ctx, dist, grid)?;
    if opts.backend == NumericBackend::ExactRational && ctx.n() > EXACT_BACKEND_MAX_N {
        return Err(Error::Usage(format!(
            "exact backend permitted only for n <= {EXACT_BACKEND_MAX_N}"
        )));
    }
    let n = ctx.n();
    let lambda = ctx.lambda();
    let mut t = vec![0.0f64; n + 1];
    let mut rho = Vec::with_capacity(n);
    let mut slices = Vec::with_capacity(n);

    for d in 1..=n {
        let t_lower = &t[..d];
        let evals: Result<Vec<(f64, f64)>> = grid
            .values()
            .par_iter()
            .map(|&r| {
                let row = transition_row_with(opts.backend, ctx, dist, d, r)?;
                let best = best_of_lambda(&row, lambda);
                let time = remaining_time_of_best(&best, t_lower);
                let gain = if crit == Criterion::Drift { drift(&best) } else { 0.0 };
                Ok((time, gain))
            })
            .collect();
        let evals = evals?;

        let pick = match crit {
            Criterion::Opt => {
                let mut best_i = 0usize;
                let mut best_t = f64::INFINITY;
                for (i, &(time, _)) in evals.iter().enumerate() {
                    if time < best_t {
                        best_t = time;
                        best_i = i;
                    }
                }
                best_i
            }
            Criterion::Drift => {
                let mut best_i = 0usize;
                let mut best_g = f64::NEG_INFINITY;
                for (i, &(_, gain)) in evals.iter().enumerate() {
                    if gain > best_g {
                        best_g = gain;
                        best_i = i;
                    }
                }
                best_i
            }
        };

        let mut chosen_rho = grid.values()[pick];
        let mut chosen_t = evals[pick].0;

        if opts.refine_ea_grid
            && dist.is_ea()
            && crit == Criterion::Opt
            && chosen_t.is_finite()
            && grid.len() >= 2
        {
            let lo = grid.values()[pick.saturating_sub(1)].as_f64();
            let hi = grid.values()[(pick + 1).min(grid.len() - 1)].as_f64();
            if let Some((p_ref, t_ref)) =
                refine_golden_section(ctx, dist, d, lo, hi, t_lower, opts.backend)?
            {
                if t_ref < chosen_t {
                    chosen_rho = RateParam::Probability(p_ref);
                    chosen_t = t_ref;
                }
            }
        }

        t[d] = chosen_t;
        rho.push(chosen_rho);
        slices.push(TimeSlice { d, times: evals.into_iter().map(|(time, _)| time).collect() });
    }

    Ok((PolicyTable { ctx: *ctx, dist, crit, rho, t }, slices))
}

/// One golden-section search over ln(p) in [lo, hi].
fn refine_golden_section(
    ctx: &ProblemContext,
    dist: MutationDistribution,
    d: usize,
    lo: f64,
    hi: f64,
    t_lower: &[f64],
    backend: NumericBackend,
) -> Result<Option<(f64, f64)>> {
    if !(lo > 0.0 && hi > lo && hi < 1.0) {
        return Ok(None);
    }
    let eval = |p: f64| -> Result<f64> {
        let row = transition_row_with(backend, ctx, dist, d, RateParam::Probability(p))?;
        Ok(remaining_time_of_best(&best_of_lambda(&row, ctx.lambda()), t_lower))
    };
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - (b - a) * INV_PHI;
    let mut e = a + (b - a) * INV_PHI;
    let mut fc = eval(c.exp())?;
    let mut fe = eval(e.exp())?;
    for _ in 0..48 {
        if fc <= fe {
            b = e;
            e = c;
            fe = fc;
            c = b - (b - a) * INV_PHI;
            fc = eval(c.exp())?;
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + (b - a) * INV_PHI;
            fe = eval(e.exp())?;
        }
    }
    let (x, fx) = if fc <= fe { (c, fc) } else { (e, fe) };
    Ok(Some((x.exp(), fx)))
}

/// Worst-case time disadvantage of the drift policy:
/// `max_d t*_drift(d) - t*_opt(d)`.
pub fn policy_diff(opt: &PolicyTable, drift_policy: &PolicyTable) -> Result<f64> {
    if opt.ctx != drift_policy.ctx || opt.dist != drift_policy.dist {
        return Err(Error::Usage("policies come from different problems".into()));
    }
    if opt.crit != Criterion::Opt || drift_policy.crit != Criterion::Drift {
        return Err(Error::Usage("expected an (opt, drift) pair of policies".into()));
    }
    let mut worst = 0.0f64;
    for d in 1..=opt.ctx.n() {
        worst = worst.max(drift_policy.t[d] - opt.t[d]);
    }
    Ok(worst)
}

/// Expected number of flipped bits for a rate: k for RLS, n*p for standard
/// bit mutation, n*p + (1-p)^n for shift mutation.
pub fn expected_strength(dist: MutationDistribution, rho: RateParam, n: usize) -> f64 {
    match (dist, rho) {
        (MutationDistribution::Rls, RateParam::FlipCount(k)) => k as f64,
        (MutationDistribution::Sbm, RateParam::Probability(p)) => n as f64 * p,
        (MutationDistribution::Shift, RateParam::Probability(p)) => {
            n as f64 * p + (n as f64 * f64::ln_1p(-p)).exp()
        }
        _ => f64::NAN,
    }
}

/// For each flip count in an RLS policy's image, the largest distance at
/// which it is chosen.
pub fn max_distance_per_k(policy: &PolicyTable) -> Result<BTreeMap<usize, usize>> {
    if policy.dist != MutationDistribution::Rls {
        return Err(Error::Usage("max_distance_per_k expects an RLS policy".into()));
    }
    let mut map = BTreeMap::new();
    for d in 1..=policy.ctx.n() {
        if let RateParam::FlipCount(k) = policy.rho_star(d) {
            map.insert(k, d);
        }
    }
    Ok(map)
}

// --- CSV serialization -----------------------------------------------------
//
// Policy CSV: header `n,lambda,dist,crit,d,rho,t_star`; RLS rho as integer,
// EA rho with 17 significant digits; the +inf sentinel serializes as `inf`.
// TimeSlice CSV: header `d,rho,t`.

pub fn write_policy_csv<W: Write>(w: &mut W, policy: &PolicyTable) -> std::io::Result<()> {
    writeln!(w, "n,lambda,dist,crit,d,rho,t_star")?;
    let (n, lambda) = (policy.ctx.n(), policy.ctx.lambda());
    for d in 1..=n {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            n,
            lambda,
            policy.dist,
            policy.crit,
            d,
            policy.rho_star(d).to_csv_field(),
            policy.t[d]
        )?;
    }
    Ok(())
}

fn parse_rate(dist: MutationDistribution, field: &str) -> Result<RateParam> {
    let bad = |_| Error::Parse { what: "rate".into(), detail: field.into() };
    match dist {
        MutationDistribution::Rls => Ok(RateParam::FlipCount(field.parse().map_err(bad)?)),
        _ => Ok(RateParam::Probability(field.parse().map_err(|_| Error::Parse {
            what: "rate".into(),
            detail: field.into(),
        })?)),
    }
}

pub fn read_policy_csv<R: BufRead>(r: R) -> Result<PolicyTable> {
    let parse_err = |detail: &str| Error::Parse { what: "policy csv".into(), detail: detail.into() };
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err("empty file"))?
        .map_err(|e| parse_err(&e.to_string()))?;
    if header.trim() != "n,lambda,dist,crit,d,rho,t_star" {
        return Err(parse_err("unexpected header"));
    }
    let mut meta: Option<(ProblemContext, MutationDistribution, Criterion)> = None;
    let mut rho = Vec::new();
    let mut t = vec![0.0f64];
    for line in lines {
        let line = line.map_err(|e| parse_err(&e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(parse_err(&format!("expected 7 fields, got {}", fields.len())));
        }
        let n: usize = fields[0].parse().map_err(|_| parse_err("bad n"))?;
        let lambda: u64 = fields[1].parse().map_err(|_| parse_err("bad lambda"))?;
        let dist: MutationDistribution = fields[2].parse()?;
        let crit: Criterion = fields[3].parse()?;
        let ctx = ProblemContext::new(n, lambda)?;
        match &meta {
            None => meta = Some((ctx, dist, crit)),
            Some((c, ds, cr)) => {
                if *c != ctx || *ds != dist || *cr != crit {
                    return Err(parse_err("inconsistent metadata across rows"));
                }
            }
        }
        let d: usize = fields[4].parse().map_err(|_| parse_err("bad d"))?;
        if d != rho.len() + 1 {
            return Err(parse_err("distances not contiguous from 1"));
        }
        rho.push(parse_rate(dist, fields[5])?);
        t.push(fields[6].parse().map_err(|_| parse_err("bad t_star"))?);
    }
    let (ctx, dist, crit) = meta.ok_or_else(|| parse_err("no data rows"))?;
    if rho.len() != ctx.n() {
        return Err(parse_err("row count does not match n"));
    }
    Ok(PolicyTable { ctx, dist, crit, rho, t })
}

pub fn write_slices_csv<W: Write>(
    w: &mut W,
    slices: &[TimeSlice],
    grid: &RateGrid,
) -> std::io::Result<()> {
    writeln!(w, "d,rho,t")?;
    for slice in slices {
        for (v, time) in grid.values().iter().zip(&slice.times) {
            writeln!(w, "{},{},{}", slice.d, v.to_csv_field(), time)?;
        }
    }
    Ok(())
}

pub fn read_slices_csv<R: BufRead>(r: R, grid: &RateGrid) -> Result<Vec<TimeSlice>> {
    let parse_err = |detail: &str| Error::Parse { what: "slices csv".into(), detail: detail.into() };
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err("empty file"))?
        .map_err(|e| parse_err(&e.to_string()))?;
    if header.trim() != "d,rho,t" {
        return Err(parse_err("unexpected header"));
    }
    let mut slices: Vec<TimeSlice> = Vec::new();
    for line in lines {
        let line = line.map_err(|e| parse_err(&e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err("expected 3 fields"));
        }
        let d: usize = fields[0].parse().map_err(|_| parse_err("bad d"))?;
        let time: f64 = fields[2].parse().map_err(|_| parse_err("bad t"))?;
        match slices.last_mut() {
            Some(s) if s.d == d => s.times.push(time),
            _ => slices.push(TimeSlice { d, times: vec![time] }),
        }
    }
    for s in &slices {
        if s.times.len() != grid.len() {
            return Err(parse_err("slice width does not match grid"));
        }
    }
    Ok(slices)
}
