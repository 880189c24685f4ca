//! Monte-Carlo execution of the elitist (1+lambda) loop with pluggable
//! mutation-rate controllers, for benchmarking real parameter-control
//! mechanisms against the DP lower bounds.
//!
//! The default mode works on the distance abstraction: by the symmetry of
//! OneMax the incumbent's Hamming distance is a sufficient statistic, so
//! offspring distances are sampled directly from the kernel distributions
//! (O(1) memory per run). An explicit bit-string mode implements the literal
//! flip loop for cross-validation.

use std::io::Write;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Hypergeometric};
use rayon::prelude::*;

use crate::dp::{Criterion, PolicyTable};
use crate::error::{Error, Result};
use crate::kernel::{
    best_of_lambda, transition_row, MutationDistribution, ProblemContext, RateParam,
    TransitionRow,
};
use crate::regret::RegretGrid;

/// Default guard against non-terminating configurations.
pub const DEFAULT_ITERATION_CAP: u64 = 1_000_000_000;

/// Generator contract recorded in benchmark metadata: counter-based ChaCha12,
/// one stream per run derived as seed_from_u64(base_seed + run_index).
pub const RNG_CONTRACT: &str = "chacha12:seed_from_u64(base_seed+run_index)";

/// Mutation-rate controller driving one run.
#[derive(Debug, Clone)]
pub enum Controller {
    /// Fixed rate for the whole run.
    Static(RateParam),
    /// Self-adjusting two-rate mechanism: half the offspring at 2*rho, half
    /// at rho/2, adopting the winning subpopulation's rate with probability
    /// 3/4 (1/2 deterministic + 1/2 uniform), clamped to [rho_min, rho_max].
    TwoRate { rho_init: f64, rho_min: f64, rho_max: f64 },
    /// Table-driven policy: rho*(d) at every distance.
    Oracle(PolicyTable),
}

impl Controller {
    pub fn validate(&self, ctx: &ProblemContext, dist: MutationDistribution) -> Result<()> {
        match self {
            Controller::Static(rho) => rho.validate(dist, ctx.n()),
            Controller::TwoRate { rho_init, rho_min, rho_max } => {
                if ctx.lambda() < 2 {
                    return Err(Error::Config(
                        "two-rate controller needs lambda >= 2 (two subpopulations)".into(),
                    ));
                }
                if dist != MutationDistribution::Shift {
                    return Err(Error::Config(
                        "two-rate controller drives shift mutation; use dist=shift".into(),
                    ));
                }
                if !(0.0 < *rho_min && rho_min <= rho_init && rho_init <= rho_max && *rho_max <= 0.5)
                {
                    return Err(Error::Config(format!(
                        "two-rate bounds must satisfy 0 < min <= init <= max <= 1/2 \
                         (got init={rho_init}, min={rho_min}, max={rho_max})"
                    )));
                }
                Ok(())
            }
            Controller::Oracle(policy) => {
                if policy.ctx() != ctx || policy.dist() != dist {
                    return Err(Error::Usage(
                        "oracle policy was built for a different (n, lambda, dist)".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Column value for the bench CSV (comma-free).
    pub fn label(&self) -> String {
        match self {
            Controller::Static(rho) => format!("static({rho})"),
            Controller::TwoRate { rho_init, rho_min, rho_max } => {
                format!("two-rate(init={rho_init};min={rho_min};max={rho_max})")
            }
            Controller::Oracle(policy) => match policy.crit() {
                Criterion::Opt => "oracle(opt)".to_string(),
                Criterion::Drift => "oracle(drift)".to_string(),
            },
        }
    }
}

/// Two-rate controller state for one run.
#[derive(Debug, Clone, Copy)]
pub struct TwoRateState {
    pub rho: f64,
    pub rho_min: f64,
    pub rho_max: f64,
}

impl TwoRateState {
    /// Subpopulation rates (2*rho, rho/2), clamped so probabilities stay in
    /// (0, 1) and within the configured bounds.
    pub fn subpop_rates(&self) -> (f64, f64) {
        let hi = (2.0 * self.rho).clamp(self.rho_min, self.rho_max);
        let lo = (self.rho / 2.0).clamp(self.rho_min, self.rho_max);
        (hi, lo)
    }
}

/// One adoption step of the two-rate mechanism, as a pure function of the
/// two uniform draws: with probability 1/2 adopt the best offspring's
/// subpopulation rate, otherwise pick 2*rho or rho/2 uniformly; result is
/// clamped to [rho_min, rho_max].
pub fn two_rate_step(
    state: &TwoRateState,
    best_from_high: bool,
    adopt_draw: f64,
    coin_draw: f64,
) -> f64 {
    let (hi, lo) = state.subpop_rates();
    let adopted = if adopt_draw < 0.5 {
        if best_from_high {
            hi
        } else {
            lo
        }
    } else if coin_draw < 0.5 {
        hi
    } else {
        lo
    };
    adopted.clamp(state.rho_min, state.rho_max)
}

/// One recorded improvement: the iteration that reached distance `d` and the
/// rate in effect once the controller has observed `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: u64,
    pub d: usize,
    pub rho: RateParam,
}

/// Time series of one run: the initial state plus improvement steps,
/// distances strictly decreasing, final distance 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub seed: u64,
    pub points: Vec<TracePoint>,
    pub total_iterations: u64,
}

/// Aggregate of repeated runs.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchStats {
    pub runs: usize,
    pub mean_iterations: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    /// Sample offspring distances from the kernel distributions.
    Distance,
    /// Materialize bit strings and flip distinct positions (cross-validation).
    BitString,
}

/// Per-iteration record of the instrumented run: distance at the start of
/// the iteration and the distinct rates the offspring were generated with.
#[derive(Debug, Clone)]
pub struct IterLog {
    pub d: usize,
    pub rates: Vec<f64>,
}

/// Inverse-CDF sampler over a best-of-lambda row.
struct RowSampler {
    cum: Vec<f64>,
}

impl RowSampler {
    fn new(row: &TransitionRow) -> Self {
        let mut cum = Vec::with_capacity(row.probs().len());
        let mut acc = 0.0f64;
        for &p in row.probs() {
            acc += p;
            cum.push(acc);
        }
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        RowSampler { cum }
    }

    fn sample(&self, rng: &mut ChaCha12Rng) -> usize {
        let u: f64 = rng.random();
        self.cum.partition_point(|&c| c <= u)
    }
}

/// State of one in-flight run.
struct RunState {
    d: usize,
    /// Bit-string mode only: mismatch flags against the hidden optimum.
    wrong: Vec<bool>,
    two_rate: Option<TwoRateState>,
}

pub struct Simulator<'c> {
    ctx: ProblemContext,
    dist: MutationDistribution,
    ctrl: &'c Controller,
    mode: SimMode,
    iteration_cap: u64,
    /// Distance-mode samplers per d for controllers whose rate is a function
    /// of d alone (static, oracle).
    samplers: Option<Vec<RowSampler>>,
}

impl<'c> Simulator<'c> {
    pub fn new(
        ctx: &ProblemContext,
        dist: MutationDistribution,
        ctrl: &'c Controller,
        mode: SimMode,
    ) -> Result<Self> {
        ctrl.validate(ctx, dist)?;
        let samplers = match (mode, ctrl) {
            (SimMode::Distance, Controller::Static(_) | Controller::Oracle(_)) => {
                let rows: Result<Vec<RowSampler>> = (0..=ctx.n())
                    .into_par_iter()
                    .map(|d| {
                        let rho = match ctrl {
                            Controller::Static(r) => *r,
                            Controller::Oracle(p) => p.rho_star(d.max(1)),
                            Controller::TwoRate { .. } => unreachable!(),
                        };
                        let row = transition_row(ctx, dist, d, rho)?;
                        Ok(RowSampler::new(&best_of_lambda(&row, ctx.lambda())))
                    })
                    .collect();
                Some(rows?)
            }
            _ => None,
        };
        Ok(Simulator { ctx: *ctx, dist, ctrl, mode, iteration_cap: DEFAULT_ITERATION_CAP, samplers })
    }

    pub fn set_iteration_cap(&mut self, cap: u64) {
        self.iteration_cap = cap;
    }

    pub fn run(&self, seed: u64) -> Result<RunTrace> {
        self.run_impl(seed, None)
    }

    /// Run with a per-iteration (distance, generation rates) log; used by the
    /// trajectory-regret checks.
    pub fn run_logged(&self, seed: u64) -> Result<(RunTrace, Vec<IterLog>)> {
        let mut log = Vec::new();
        let trace = self.run_impl(seed, Some(&mut log))?;
        Ok((trace, log))
    }

    /// Rate the controller exposes at distance `d` (for traces); `d` = 0
    /// falls back to the last level's rate at the call site.
    fn rate_at(&self, d: usize, state: &RunState) -> RateParam {
        match self.ctrl {
            Controller::Static(r) => *r,
            Controller::Oracle(p) => p.rho_star(d.max(1)),
            Controller::TwoRate { .. } => {
                RateParam::Probability(state.two_rate.expect("two-rate state").rho)
            }
        }
    }

    fn run_impl(&self, seed: u64, mut log: Option<&mut Vec<IterLog>>) -> Result<RunTrace> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let n = self.ctx.n();

        // Uniform random initial point: each bit mismatches the hidden
        // optimum independently with probability 1/2.
        let mut state = match self.mode {
            SimMode::Distance => RunState {
                d: Binomial::new(n as u64, 0.5).expect("valid binomial").sample(&mut rng) as usize,
                wrong: Vec::new(),
                two_rate: None,
            },
            SimMode::BitString => {
                let wrong: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
                let d = wrong.iter().filter(|&&w| w).count();
                RunState { d, wrong, two_rate: None }
            }
        };
        if let Controller::TwoRate { rho_init, rho_min, rho_max } = self.ctrl {
            state.two_rate = Some(TwoRateState {
                rho: rho_init.clamp(*rho_min, *rho_max),
                rho_min: *rho_min,
                rho_max: *rho_max,
            });
        }

        let mut points =
            vec![TracePoint { iteration: 0, d: state.d, rho: self.rate_at(state.d, &state) }];
        let mut iter: u64 = 0;

        while state.d > 0 {
            iter += 1;
            if iter > self.iteration_cap {
                return Err(Error::IterationCap(self.iteration_cap));
            }

            let (best, best_from_high) = match &self.samplers {
                Some(samplers) => {
                    if let Some(log) = log.as_deref_mut() {
                        log.push(IterLog {
                            d: state.d,
                            rates: vec![self.rate_at(state.d, &state).as_f64()],
                        });
                    }
                    (samplers[state.d].sample(&mut rng), false)
                }
                None => self.offspring_round(&mut rng, &mut state, log.as_deref_mut())?,
            };

            if let Some(tr) = &mut state.two_rate {
                let u1: f64 = rng.random();
                let u2: f64 = rng.random();
                tr.rho = two_rate_step(tr, best_from_high, u1, u2);
            }

            if best < state.d {
                state.d = best;
                let rho = if state.d == 0 {
                    points.last().expect("initial point").rho
                } else {
                    self.rate_at(state.d, &state)
                };
                points.push(TracePoint { iteration: iter, d: state.d, rho });
            }
        }

        Ok(RunTrace { seed, points, total_iterations: iter })
    }

    /// One generation of lambda offspring with per-offspring rates; returns
    /// the best offspring distance and which subpopulation it came from.
    /// Ties are broken uniformly among all achievers (reservoir draw).
    /// In bit-string mode the winning offspring's flips are applied whenever
    /// it is at least as good as the parent (elitist acceptance).
    fn offspring_round(
        &self,
        rng: &mut ChaCha12Rng,
        state: &mut RunState,
        log: Option<&mut Vec<IterLog>>,
    ) -> Result<(usize, bool)> {
        let lambda = self.ctx.lambda();
        let d = state.d;
        let (hi, lo, lambda_hi) = match &state.two_rate {
            Some(tr) => {
                let (hi, lo) = tr.subpop_rates();
                (hi, lo, lambda / 2)
            }
            None => {
                let r = self.rate_at(d, state).as_f64();
                (r, r, lambda)
            }
        };
        if let Some(log) = log {
            let rates = if hi == lo { vec![hi] } else { vec![hi, lo] };
            log.push(IterLog { d, rates });
        }

        let mut best = usize::MAX;
        let mut best_positions: Vec<usize> = Vec::new();
        let mut achievers = 0u64;
        let mut from_high = false;
        for i in 0..lambda {
            let rate = if i < lambda_hi { hi } else { lo };
            let strength = self.sample_strength(rng, rate);
            let (d_prime, positions) = match self.mode {
                SimMode::Distance => (self.offspring_distance(rng, d, strength), None),
                SimMode::BitString => {
                    let positions = rand::seq::index::sample(rng, self.ctx.n(), strength);
                    let mut dp = d;
                    for pos in positions.iter() {
                        dp = if state.wrong[pos] { dp - 1 } else { dp + 1 };
                    }
                    (dp, Some(positions))
                }
            };
            if d_prime < best {
                best = d_prime;
                achievers = 1;
                from_high = i < lambda_hi;
                if let Some(pos) = positions {
                    best_positions = pos.into_vec();
                }
            } else if d_prime == best {
                achievers += 1;
                if rng.random_range(0..achievers) == 0 {
                    from_high = i < lambda_hi;
                    if let Some(pos) = positions {
                        best_positions = pos.into_vec();
                    }
                }
            }
        }

        // Elitist acceptance mutates the incumbent whenever the winner is at
        // least as good; equal-distance moves leave the distance process
        // untouched, matching the distance abstraction.
        if self.mode == SimMode::BitString && best <= d {
            for &pos in &best_positions {
                state.wrong[pos] = !state.wrong[pos];
            }
        }
        Ok((best, from_high))
    }

    /// Mutation strength of one offspring.
    fn sample_strength(&self, rng: &mut ChaCha12Rng, rate: f64) -> usize {
        let n = self.ctx.n();
        match self.dist {
            MutationDistribution::Rls => rate as usize,
            MutationDistribution::Sbm => {
                Binomial::new(n as u64, rate).expect("valid p").sample(rng) as usize
            }
            MutationDistribution::Shift => {
                let k = Binomial::new(n as u64, rate).expect("valid p").sample(rng) as usize;
                k.max(1)
            }
        }
    }

    /// Distance-mode offspring distance: of `k` flips on distinct positions,
    /// the number hitting the d wrong bits is hypergeometric.
    fn offspring_distance(&self, rng: &mut ChaCha12Rng, d: usize, k: usize) -> usize {
        if k == 0 {
            return d;
        }
        let n = self.ctx.n();
        let repaired = Hypergeometric::new(n as u64, d as u64, k as u64)
            .expect("valid hypergeometric")
            .sample(rng) as usize;
        d + k - 2 * repaired
    }
}

/// Execute one run with a fresh controller state (distance mode).
pub fn run_once(
    ctx: &ProblemContext,
    dist: MutationDistribution,
    ctrl: &Controller,
    seed: u64,
) -> Result<RunTrace> {
    Simulator::new(ctx, dist, ctrl, SimMode::Distance)?.run(seed)
}

/// As [`run_once`] with an explicit simulation mode.
pub fn run_once_with_mode(
    ctx: &ProblemContext,
    dist: MutationDistribution,
    ctrl: &Controller,
    seed: u64,
    mode: SimMode,
) -> Result<RunTrace> {
    Simulator::new(ctx, dist, ctrl, mode)?.run(seed)
}

/// Aggregate `runs` independent runs over seeds base_seed..base_seed+runs-1.
pub fn bench(
    ctx: &ProblemContext,
    dist: MutationDistribution,
    ctrl: &Controller,
    runs: usize,
    base_seed: u64,
) -> Result<BenchStats> {
    if runs == 0 {
        return Err(Error::Config("runs must be >= 1".into()));
    }
    let sim = Simulator::new(ctx, dist, ctrl, SimMode::Distance)?;
    let totals: Result<Vec<u64>> = (0..runs)
        .into_par_iter()
        .map(|i| sim.run(base_seed + i as u64).map(|t| t.total_iterations))
        .collect();
    let totals = totals?;
    // Sum sequentially in run order: bench output must be byte-identical
    // across thread schedules.
    let mean = totals.iter().map(|&t| t as f64).sum::<f64>() / runs as f64;
    let std_error = if runs > 1 {
        let var = totals.iter().map(|&t| (t as f64 - mean).powi(2)).sum::<f64>()
            / (runs as f64 - 1.0);
        (var / runs as f64).sqrt()
    } else {
        0.0
    };
    Ok(BenchStats { runs, mean_iterations: mean, std_error })
}

/// Trace CSV: `iteration,d,rho`.
pub fn write_trace_csv<W: Write>(w: &mut W, trace: &RunTrace) -> std::io::Result<()> {
    writeln!(w, "iteration,d,rho")?;
    for p in &trace.points {
        writeln!(w, "{},{},{}", p.iteration, p.d, p.rho.to_csv_field())?;
    }
    Ok(())
}

/// Join trace points with the nearest grid rho's efficiency value:
/// CSV `iteration,d,rho,tau`. Points at d = 0 are outside the grid axes and
/// are skipped.
pub fn overlay_trace<W: Write>(trace: &RunTrace, grid: &RegretGrid, w: &mut W) -> Result<()> {
    for p in &trace.points {
        if p.d > grid.ctx().n() {
            return Err(Error::Usage(format!(
                "trace distance {} exceeds grid dimension n = {}",
                p.d,
                grid.ctx().n()
            )));
        }
    }
    let io_err = |e| Error::Io { path: "<writer>".into(), source: e };
    writeln!(w, "iteration,d,rho,tau").map_err(io_err)?;
    for p in &trace.points {
        if p.d == 0 {
            continue;
        }
        let tau = grid.tau_nearest(p.d, p.rho)?;
        writeln!(w, "{},{},{},{}", p.iteration, p.d, p.rho.to_csv_field(), tau).map_err(io_err)?;
    }
    Ok(())
}
