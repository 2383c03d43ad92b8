//! Independent checks: exact-jump simulation of the chain and log–log slope
//! fitting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generator::PerturbedGenerator;

/// Default ε grid for slope fits.
pub const EPS_GRID: [f64; 5] = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4];

/// Hitting-time runs longer than this many jumps are abandoned.
pub const MAX_EVENTS_PER_SAMPLE: u64 = 1_000_000_000;

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub eps: f64,
    /// Jumps per trajectory.
    pub n_events: u64,
    pub n_trajectories: usize,
    /// Fraction of each trajectory's jumps discarded before averaging.
    pub burn_in: f64,
    pub seed: u64,
    pub start: usize,
}

impl SimConfig {
    pub fn new(eps: f64, n_events: u64, seed: u64) -> Self {
        SimConfig { eps, n_events, n_trajectories: 1, burn_in: 0.2, seed, start: 0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalResult {
    /// Time-averaged occupancy per state.
    pub occupancy: Vec<f64>,
    pub total_time: f64,
    pub events: u64,
    pub warnings: Vec<String>,
}

/// Outgoing (target, cumulative rate) tables of Q(ε).
struct JumpTable {
    exits: Vec<f64>,
    targets: Vec<Vec<usize>>,
    cumulative: Vec<Vec<f64>>,
}

impl JumpTable {
    fn new(gen: &PerturbedGenerator, eps: f64) -> Result<Self> {
        let q = gen.q_at(eps);
        let mut exits = Vec::with_capacity(gen.n);
        let mut targets = Vec::with_capacity(gen.n);
        let mut cumulative = Vec::with_capacity(gen.n);
        for x in 0..gen.n {
            let mut t = Vec::new();
            let mut c = Vec::new();
            let mut acc = 0.0;
            for y in 0..gen.n {
                if y != x && q[(x, y)] > 0.0 {
                    acc += q[(x, y)];
                    t.push(y);
                    c.push(acc);
                }
            }
            if acc.is_nan() {
                return Err(Error::InvalidArgument("rates are not finite".into()));
            }
            exits.push(acc);
            targets.push(t);
            cumulative.push(c);
        }
        Ok(JumpTable { exits, targets, cumulative })
    }

    /// Holding time and next state, or None if x has no exit.
    fn step(&self, x: usize, rng: &mut ChaCha8Rng) -> Option<(f64, usize)> {
        let total = self.exits[x];
        if !(total > 0.0) {
            return None;
        }
        let hold = -(1.0 - rng.gen::<f64>()).ln() / total;
        let u = rng.gen::<f64>() * total;
        let c = &self.cumulative[x];
        let k = c.partition_point(|&v| v <= u).min(c.len() - 1);
        Some((hold, self.targets[x][k]))
    }
}

fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Time-averaged occupancy from independent trajectories.
pub fn ssa_run(gen: &PerturbedGenerator, cfg: &SimConfig) -> Result<EmpiricalResult> {
    if !(cfg.eps > 0.0) || cfg.n_events == 0 || cfg.n_trajectories == 0 || !(0.0..1.0).contains(&cfg.burn_in) {
        return Err(Error::InvalidArgument("invalid simulation configuration".into()));
    }
    if cfg.start >= gen.n {
        return Err(Error::InvalidArgument("start state out of range".into()));
    }
    let table = JumpTable::new(gen, cfg.eps)?;
    let burn = (cfg.burn_in * cfg.n_events as f64) as u64;
    let runs: Vec<(Vec<f64>, u64, bool)> = (0..cfg.n_trajectories)
        .into_par_iter()
        .map(|t| {
            let mut rng = trajectory_rng(cfg.seed, t as u64);
            let mut occ = vec![0.0; gen.n];
            let mut x = cfg.start;
            let mut events = 0;
            let mut stuck = false;
            for e in 0..cfg.n_events {
                let Some((hold, y)) = table.step(x, &mut rng) else {
                    stuck = true;
                    break;
                };
                if e >= burn {
                    occ[x] += hold;
                }
                x = y;
                events += 1;
            }
            (occ, events, stuck)
        })
        .collect();
    let mut occupancy = vec![0.0; gen.n];
    let mut events = 0;
    let mut warnings = Vec::new();
    for (occ, ev, stuck) in &runs {
        for (o, v) in occupancy.iter_mut().zip(occ) {
            *o += v;
        }
        events += ev;
        if *stuck {
            warnings.push("trajectory reached a state without exits".to_string());
        }
    }
    let total_time: f64 = occupancy.iter().sum();
    if total_time > 0.0 {
        for o in &mut occupancy {
            *o /= total_time;
        }
    } else {
        warnings.push("horizon too short to leave the initial state".to_string());
        occupancy[cfg.start] = 1.0;
    }
    Ok(EmpiricalResult { occupancy, total_time, events, warnings })
}

#[derive(Debug, Clone, Serialize)]
pub struct HittingStats {
    pub samples: Vec<f64>,
    pub mean: f64,
    pub std_err: f64,
}

/// n independent hitting times of `target` from x0; sample i uses stream i.
pub fn hitting_time_sample(
    gen: &PerturbedGenerator,
    eps: f64,
    x0: usize,
    target: &[usize],
    n: usize,
    seed: u64,
) -> Result<HittingStats> {
    if n < 2 || !(eps > 0.0) || x0 >= gen.n || target.iter().any(|&b| b >= gen.n) {
        return Err(Error::InvalidArgument("invalid hitting-time request".into()));
    }
    let table = JumpTable::new(gen, eps)?;
    let mut in_b = vec![false; gen.n];
    for &b in target {
        in_b[b] = true;
    }
    let samples: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(seed, i as u64);
            let mut x = x0;
            let mut t = 0.0;
            let mut events = 0u64;
            while !in_b[x] {
                let (hold, y) = table
                    .step(x, &mut rng)
                    .ok_or_else(|| Error::InvalidArgument(format!("state {x} has no exit; target unreachable")))?;
                t += hold;
                x = y;
                events += 1;
                if events > MAX_EVENTS_PER_SAMPLE {
                    return Err(Error::InvalidArgument("hitting-time run exceeded the event cap".into()));
                }
            }
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(HittingStats { mean, std_err: (var / n as f64).sqrt(), samples })
}

/// Least-squares slope of log f against log ε and its r².
pub fn slope_fit(eps: &[f64], values: &[f64]) -> Result<(f64, f64)> {
    if eps.len() < 3 || eps.len() != values.len() {
        return Err(Error::InvalidArgument("slope fit needs at least three points".into()));
    }
    if values.iter().chain(eps).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument("slope fit needs positive values".into()));
    }
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((slope, r2))
}

/// `slope_fit` on f evaluated over the grid.
pub fn slope_fit_fn<F>(f: F, eps: &[f64]) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let values: Vec<f64> = eps.iter().map(|&e| f(e)).collect::<Result<_>>()?;
    slope_fit(eps, &values)
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn power_law_slope() {
        let (s, r2) = slope_fit_fn(|e| Ok(3.0 / e), &EPS_GRID).unwrap();
        assert!((s + 1.0).abs() < 1e-9 && (r2 - 1.0).abs() < 1e-12);
        assert!(slope_fit(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(slope_fit(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0]).is_err());
    }

    #[test]
    fn symmetric_two_state_occupancy() {
        let q1 = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let g = PerturbedGenerator::from_matrices(DMatrix::zeros(2, 2), q1).unwrap();
        let mut cfg = SimConfig::new(1.0, 200_000, 7);
        cfg.n_trajectories = 4;
        let r = ssa_run(&g, &cfg).unwrap();
        assert!((r.occupancy[0] - 0.5).abs() < 0.01);
        let again = ssa_run(&g, &cfg).unwrap();
        assert_eq!(r.occupancy, again.occupancy);
    }
}
