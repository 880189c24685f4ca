//! Regret landscapes: delta(d, rho) = T(d, rho) - T*(d) and its heatmap
//! transform tau = exp(-delta), plus modality analysis of the per-distance
//! remaining-time curves.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::dp::{Criterion, PolicyTable, TimeSlice};
use crate::error::{Error, Result};
use crate::grid::RateGrid;
use crate::kernel::{MutationDistribution, ProblemContext, RateParam};

/// Relative slack when checking that slices and policy belong together.
const PROVENANCE_TOL: f64 = 1e-9;

/// Per-(d, rho) regret and efficiency values for one build.
#[derive(Debug, Clone)]
pub struct RegretGrid {
    ctx: ProblemContext,
    dist: MutationDistribution,
    crit: Criterion,
    grid: RateGrid,
    /// t*(d), d = 0..=n.
    t_star: Vec<f64>,
    /// Row per distance d = 1..=n, aligned with the grid: raw times,
    /// delta = t - t*, tau = exp(-delta) with tau = 0 for infinite delta.
    t: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    tau: Vec<Vec<f64>>,
}

impl RegretGrid {
    pub fn ctx(&self) -> &ProblemContext {
        &self.ctx
    }

    pub fn dist(&self) -> MutationDistribution {
        self.dist
    }

    pub fn crit(&self) -> Criterion {
        self.crit
    }

    pub fn grid(&self) -> &RateGrid {
        &self.grid
    }

    pub fn delta(&self, d: usize, grid_index: usize) -> f64 {
        self.delta[d - 1][grid_index]
    }

    pub fn tau(&self, d: usize, grid_index: usize) -> f64 {
        self.tau[d - 1][grid_index]
    }

    pub fn time(&self, d: usize, grid_index: usize) -> f64 {
        self.t[d - 1][grid_index]
    }

    pub fn t_star(&self, d: usize) -> f64 {
        self.t_star[d]
    }

    /// tau for an arbitrary rate via nearest-grid lookup (exact match
    /// required for flip counts, nearest in log-space for probabilities).
    pub fn tau_nearest(&self, d: usize, rho: RateParam) -> Result<f64> {
        if d < 1 || d > self.ctx.n() {
            return Err(Error::Usage(format!("distance {d} outside grid axes [1, {}]", self.ctx.n())));
        }
        let idx = match rho {
            RateParam::FlipCount(k) => self
                .grid
                .position_of_flip_count(k)
                .ok_or_else(|| Error::Usage(format!("flip count {k} not on the grid")))?,
            p @ RateParam::Probability(_) => self.grid.nearest_index(p),
        };
        Ok(self.tau[d - 1][idx])
    }
}

/// Cellwise regret/efficiency from a policy and its retained TimeSlices.
///
/// Only OPT policies define a nonnegative regret (under DRIFT, off-policy
/// rates can undercut t*), so other criteria are a usage error.
pub fn build_grid(
    slices: &[TimeSlice],
    policy: &PolicyTable,
    grid: &RateGrid,
) -> Result<RegretGrid> {
    if policy.crit() != Criterion::Opt {
        return Err(Error::Usage("regret grids are defined for the opt criterion".into()));
    }
    if grid.dist() != policy.dist() {
        return Err(Error::Usage("grid and policy distributions differ".into()));
    }
    let n = policy.ctx().n();
    if slices.len() != n {
        return Err(Error::Usage(format!(
            "expected {n} slices for n = {n}, got {}",
            slices.len()
        )));
    }
    let mut t = Vec::with_capacity(n);
    let mut delta = Vec::with_capacity(n);
    let mut tau = Vec::with_capacity(n);
    for (i, slice) in slices.iter().enumerate() {
        if slice.d != i + 1 {
            return Err(Error::Usage("slices are not ordered by distance from 1".into()));
        }
        if slice.times.len() != grid.len() {
            return Err(Error::Usage("slice width does not match the grid".into()));
        }
        let ts = policy.t_star(slice.d);
        let min = slice.times.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min.is_infinite() && ts.is_infinite())
            && (min - ts).abs() > PROVENANCE_TOL * min.abs().max(1.0)
        {
            return Err(Error::Usage(format!(
                "slice at d={} does not attain the policy's t* (min {min} vs t* {ts}); \
                 slices and policy are from different builds",
                slice.d
            )));
        }
        let mut drow = Vec::with_capacity(grid.len());
        let mut trow = Vec::with_capacity(grid.len());
        for &time in &slice.times {
            let dl = if time.is_infinite() { f64::INFINITY } else { (time - ts).max(0.0) };
            drow.push(dl);
            trow.push(if dl.is_infinite() { 0.0 } else { (-dl).exp() });
        }
        t.push(slice.times.clone());
        delta.push(drow);
        tau.push(trow);
    }
    Ok(RegretGrid {
        ctx: *policy.ctx(),
        dist: policy.dist(),
        crit: policy.crit(),
        grid: grid.clone(),
        t_star: policy.t_star_all().to_vec(),
        t,
        delta,
        tau,
    })
}

/// Local-minimum structure of one remaining-time curve over the ordered grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityReport {
    pub d: usize,
    /// Strict local minima as (rho, t); plateaus collapse to one candidate
    /// represented by their smallest rho.
    pub local_minima: Vec<(RateParam, f64)>,
    pub is_unimodal: bool,
}

/// Strict local minima of a slice over the grid ordering. Infinite times
/// compare greater than any finite time; equal neighbors merge into one
/// plateau run.
pub fn modality(slice: &TimeSlice, grid: &RateGrid) -> Result<ModalityReport> {
    if grid.len() < 3 {
        return Err(Error::Usage("modality needs a grid with at least 3 points".into()));
    }
    if slice.times.len() != grid.len() {
        return Err(Error::Usage("slice width does not match the grid".into()));
    }
    // Runs of equal values: (start index, value).
    let mut runs: Vec<(usize, f64)> = Vec::new();
    for (i, &v) in slice.times.iter().enumerate() {
        match runs.last() {
            Some(&(_, last)) if last == v || (last.is_infinite() && v.is_infinite()) => {}
            _ => runs.push((i, v)),
        }
    }
    let mut local_minima = Vec::new();
    for (r, &(start, v)) in runs.iter().enumerate() {
        if v.is_infinite() {
            continue;
        }
        let left_higher = r == 0 || runs[r - 1].1 > v;
        let right_higher = r + 1 == runs.len() || runs[r + 1].1 > v;
        if left_higher && right_higher {
            local_minima.push((grid.values()[start], v));
        }
    }
    let is_unimodal = local_minima.len() == 1;
    Ok(ModalityReport { d: slice.d, local_minima, is_unimodal })
}

/// File name stem for heatmap artifacts.
pub fn heatmap_stem(dist: MutationDistribution, n: usize, lambda: u64) -> String {
    format!("heatmap_{dist}_{n}_{lambda}")
}

/// Writes the regret grid as CSV `d,rho,delta,tau` and optionally an ASCII
/// portable graymap (P2, maxval 255) with one row per grid rho (ascending
/// top-to-bottom), one column per distance (ascending), pixel =
/// round(255 * tau). Byte output is deterministic for a fixed grid.
pub fn export_heatmap(grid: &RegretGrid, dir: &Path, with_pgm: bool) -> Result<Vec<PathBuf>> {
    let stem = heatmap_stem(grid.dist, grid.ctx.n(), grid.ctx.lambda());
    let mut written = Vec::new();

    let csv_path = dir.join(format!("{stem}.csv"));
    let mut csv = Vec::new();
    writeln!(csv, "d,rho,delta,tau").expect("vec write");
    for d in 1..=grid.ctx.n() {
        for (gi, v) in grid.grid.values().iter().enumerate() {
            writeln!(
                csv,
                "{},{},{},{}",
                d,
                v.to_csv_field(),
                grid.delta[d - 1][gi],
                grid.tau[d - 1][gi]
            )
            .expect("vec write");
        }
    }
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    written.push(csv_path);

    if with_pgm {
        let pgm_path = dir.join(format!("{stem}.pgm"));
        let width = grid.ctx.n();
        let height = grid.grid.len();
        let mut pgm = String::new();
        pgm.push_str("P2\n");
        pgm.push_str(&format!("{width} {height}\n255\n"));
        for gi in 0..height {
            let mut line = String::with_capacity(width * 4);
            for d in 1..=width {
                if d > 1 {
                    line.push(' ');
                }
                let pixel = (255.0 * grid.tau[d - 1][gi]).round() as u32;
                line.push_str(&pixel.to_string());
            }
            pgm.push_str(&line);
            pgm.push('\n');
        }
        std::fs::write(&pgm_path, pgm).map_err(|e| Error::io(&pgm_path, e))?;
        written.push(pgm_path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{build_policy, BuildOptions};

    fn rls_build(n: usize, lambda: u64) -> (PolicyTable, Vec<TimeSlice>, RateGrid) {
        let ctx = ProblemContext::new(n, lambda).unwrap();
        let grid = RateGrid::standard(MutationDistribution::Rls, n).unwrap();
        let (p, s) = build_policy(
            &ctx,
            MutationDistribution::Rls,
            Criterion::Opt,
            &grid,
            BuildOptions::default(),
        )
        .unwrap();
        (p, s, grid)
    }

    #[test]
    fn tau_is_one_at_rho_star() {
        let (policy, slices, grid) = rls_build(12, 4);
        let rg = build_grid(&slices, &policy, &grid).unwrap();
        for d in 1..=12 {
            let RateParam::FlipCount(k) = policy.rho_star(d) else { panic!() };
            let gi = grid.position_of_flip_count(k).unwrap();
            assert_eq!(rg.tau(d, gi), 1.0);
            assert_eq!(rg.delta(d, gi), 0.0);
        }
    }

    #[test]
    fn regret_point_seven_maps_to_tau_half() {
        assert!(((-0.7f64).exp() - 0.5).abs() < 0.004);
        let (policy, slices, grid) = rls_build(20, 2);
        let rg = build_grid(&slices, &policy, &grid).unwrap();
        for d in 1..=20 {
            for gi in 0..grid.len() {
                let dl = rg.delta(d, gi);
                if (dl - 0.7).abs() < 0.05 {
                    assert!((rg.tau(d, gi) - 0.5).abs() < 0.03);
                }
            }
        }
    }

    #[test]
    fn infinite_delta_maps_to_tau_zero() {
        let (policy, slices, grid) = rls_build(6, 1);
        let rg = build_grid(&slices, &policy, &grid).unwrap();
        // k >= 2d has no improving outcome at distance d.
        let gi = grid.position_of_flip_count(6).unwrap();
        assert!(rg.delta(2, gi).is_infinite());
        assert_eq!(rg.tau(2, gi), 0.0);
    }

    #[test]
    fn rejects_foreign_slices() {
        let (policy, _, grid) = rls_build(8, 2);
        let (_, other_slices, _) = rls_build(8, 4);
        assert!(matches!(build_grid(&other_slices, &policy, &grid), Err(Error::Usage(_))));
    }

    #[test]
    fn rejects_drift_policy() {
        let ctx = ProblemContext::new(8, 2).unwrap();
        let grid = RateGrid::standard(MutationDistribution::Rls, 8).unwrap();
        let (policy, slices) = build_policy(
            &ctx,
            MutationDistribution::Rls,
            Criterion::Drift,
            &grid,
            BuildOptions::default(),
        )
        .unwrap();
        assert!(matches!(build_grid(&slices, &policy, &grid), Err(Error::Usage(_))));
    }

    #[test]
    fn modality_convex_slice_has_one_minimum() {
        let grid = RateGrid::standard(MutationDistribution::Rls, 7).unwrap();
        let slice =
            TimeSlice { d: 3, times: vec![9.0, 4.0, 2.0, 3.0, 5.0, 8.0, 13.0] };
        let report = modality(&slice, &grid).unwrap();
        assert!(report.is_unimodal);
        assert_eq!(report.local_minima, vec![(RateParam::FlipCount(3), 2.0)]);
    }

    #[test]
    fn modality_merges_plateaus_and_handles_inf() {
        let grid = RateGrid::standard(MutationDistribution::Rls, 8).unwrap();
        let inf = f64::INFINITY;
        let slice =
            TimeSlice { d: 4, times: vec![5.0, 2.0, 2.0, 6.0, 1.0, inf, inf, 3.0] };
        let report = modality(&slice, &grid).unwrap();
        // Plateau at k in {2,3} is one minimum (representative k=2); the
        // lone 1.0 before the inf wall is another; trailing 3.0 is a third
        // (bounded by inf on its left, boundary on its right).
        assert_eq!(report.local_minima.len(), 3);
        assert_eq!(report.local_minima[0].0, RateParam::FlipCount(2));
        assert!(!report.is_unimodal);
    }

    #[test]
    fn modality_rejects_tiny_grids() {
        let grid = RateGrid::standard(MutationDistribution::Rls, 2).unwrap();
        let slice = TimeSlice { d: 1, times: vec![1.0, 2.0] };
        assert!(matches!(modality(&slice, &grid), Err(Error::Usage(_))));
    }

    #[test]
    fn rls_lambda1_small_d_is_multimodal() {
        // Even flip counts are dead at small distances: the curve alternates.
        let (policy, slices, grid) = rls_build(40, 1);
        let rg = build_grid(&slices, &policy, &grid).unwrap();
        let report = modality(&slices[2], &grid).unwrap();
        assert!(!report.is_unimodal, "minima: {:?}", report.local_minima);
        assert!(report.local_minima.len() >= 2);
        let _ = rg;
    }

    #[test]
    fn heatmap_export_tiny_grid_pixels() {
        let dir = std::env::temp_dir().join(format!("regret_test_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let (policy, slices, grid) = rls_build(2, 1);
        let rg = build_grid(&slices, &policy, &grid).unwrap();
        let files = export_heatmap(&rg, &dir, true).unwrap();
        let pgm = std::fs::read_to_string(&files[1]).unwrap();
        let mut lines = pgm.lines();
        assert_eq!(lines.next(), Some("P2"));
        assert_eq!(lines.next(), Some("2 2"));
        assert_eq!(lines.next(), Some("255"));
        // Row for k=1: optimal at both distances -> tau = 1 -> 255.
        assert_eq!(lines.next(), Some("255 255"));
        // Row for k=2: no improving outcome at d=1 -> tau = 0 -> 0.
        let last = lines.next().unwrap();
        assert!(last.starts_with('0'), "{last}");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn heatmap_export_deterministic_bytes() {
        let dir = std::env::temp_dir().join(format!("regret_det_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let (policy, slices, grid) = rls_build(10, 4);
        let rg = build_grid(&slices, &policy, &grid).unwrap();
        let first = export_heatmap(&rg, &dir, true).unwrap();
        let bytes_a: Vec<Vec<u8>> =
            first.iter().map(|p| std::fs::read(p).unwrap()).collect();
        let second = export_heatmap(&rg, &dir, true).unwrap();
        let bytes_b: Vec<Vec<u8>> =
            second.iter().map(|p| std::fs::read(p).unwrap()).collect();
        assert_eq!(bytes_a, bytes_b);
        std::fs::remove_dir_all(&dir).ok();
    }
}
