//! Annealed basin hopping over Newton-CG local minima.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::crystal::CrystalState;
use crate::error::{Error, Result};
use crate::minimize::{newton_cg, NcgOptions, NcgOutcome};
use crate::par::map_indices;
use crate::trap::Trap;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub n_steps: usize,
    pub t_start: f64,
    pub alpha_x: f64,
    /// Defaults to `alpha_x`.
    pub alpha_y: Option<f64>,
    /// Defaults to `alpha_x * beta`.
    pub alpha_z: Option<f64>,
    /// Rescale the nudge toward a one-half acceptance rate.
    pub adapt_alpha: bool,
    pub n_runs: usize,
    pub keep_lowest: usize,
    pub tol_grad: f64,
    pub max_ncg_iters: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            n_steps: 20,
            t_start: 0.048,
            alpha_x: 1.0,
            alpha_y: None,
            alpha_z: None,
            adapt_alpha: true,
            n_runs: 50,
            keep_lowest: 10,
            tol_grad: 1e-9,
            max_ncg_iters: 500,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_steps < 1 {
            return bad("n_steps must be at least 1");
        }
        if !(self.t_start >= 0.0) {
            return bad("t_start must be non-negative");
        }
        if !(self.alpha_x >= 0.0) || self.alpha_y.is_some_and(|a| !(a >= 0.0)) || self.alpha_z.is_some_and(|a| !(a >= 0.0)) {
            return bad("nudge scales must be non-negative");
        }
        if self.n_runs < 1 {
            return bad("n_runs must be at least 1");
        }
        if !(self.tol_grad > 0.0) {
            return bad("tol_grad must be positive");
        }
        Ok(())
    }

    pub fn ncg(&self) -> NcgOptions {
        NcgOptions { tol_grad: self.tol_grad, max_iters: self.max_ncg_iters, ..NcgOptions::default() }
    }

    /// Annealing temperatures, linear from `t_start` down to zero.
    pub fn schedule(&self) -> Vec<f64> {
        if self.n_steps == 1 {
            return vec![0.0];
        }
        let last = (self.n_steps - 1) as f64;
        (0..self.n_steps).map(|k| self.t_start * (1.0 - k as f64 / last)).collect()
    }
}

/// Statistics of one basin-hopping run.
#[derive(Clone, Debug)]
pub struct BasinRun {
    pub state: CrystalState,
    pub accepted: usize,
    pub attempted: usize,
    pub ncg_failures: usize,
    pub ncg_calls: usize,
    pub final_alpha_x: f64,
}

/// Random number stream for run `run_index` of an ensemble seeded with `seed`.
pub fn run_rng(seed: u64, run_index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(run_index);
    rng
}

pub fn basin_hop(trap: &Trap, config: &OptimizerConfig, seed: u64) -> Result<CrystalState> {
    basin_hop_run(trap, config, seed, 0).map(|r| r.state)
}

pub fn basin_hop_run(trap: &Trap, config: &OptimizerConfig, seed: u64, run_index: u64) -> Result<BasinRun> {
    config.validate()?;
    let mut rng = run_rng(seed, run_index);
    let n = trap.n_ions();
    let pot = trap.scaled();
    let opts = config.ncg();
    let half = (n as f64).cbrt();
    let x0: Vec<f64> = (0..3 * n).map(|_| rng.random_range(-half..half)).collect();

    let mut calls = 0usize;
    let mut failures = 0usize;
    let mut polish = |x: &[f64]| -> Result<NcgOutcome> {
        calls += 1;
        let out = newton_cg(&pot, x, &opts)?;
        if !out.converged {
            failures += 1;
        }
        Ok(out)
    };

    let mut current = polish(&x0)?;
    let mut best = current.clone();
    let mut ax = config.alpha_x;
    let mut ay = config.alpha_y;
    let mut az = config.alpha_z;
    let beta = pot.beta;
    let (mut accepted, mut attempted) = (0usize, 0usize);

    for t in config.schedule() {
        let sx = ax;
        let sy = ay.unwrap_or(ax);
        let sz = az.unwrap_or(ax * beta);
        let mut trial = current.x.clone();
        if t > 0.0 {
            for j in 0..n {
                for (a, s) in [sx, sy, sz].into_iter().enumerate() {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    trial[3 * j + a] += g * s * t;
                }
            }
        }
        let cand = match polish(&trial) {
            Ok(c) => c,
            // a nudge that lands two ions on top of each other is simply rejected
            Err(Error::CoincidentIons { .. }) => continue,
            Err(e) => return Err(e),
        };
        let accept = if t > 0.0 {
            attempted += 1;
            let u: f64 = rng.random();
            ((current.energy - cand.energy) / t).exp() > u
        } else {
            cand.energy < current.energy
        };
        if accept {
            if t > 0.0 {
                accepted += 1;
            }
            current = cand;
            if current.energy < best.energy {
                best = current.clone();
            }
        }
        if config.adapt_alpha && t > 0.0 {
            let f = if (accepted as f64) / (attempted as f64) > 0.5 { 1.2 } else { 0.8 };
            ax *= f;
            ay = ay.map(|a| a * f);
            az = az.map(|a| a * f);
        }
    }

    let state = CrystalState::from_scaled(trap.clone(), best.x.clone(), Some(seed))?;
    if failures == calls {
        return Err(Error::NonConvergence {
            iterations: best.iterations,
            grad_norm: best.grad_norm,
            best: Box::new(state),
        });
    }
    Ok(BasinRun {
        state,
        accepted,
        attempted,
        ncg_failures: failures,
        ncg_calls: calls,
        final_alpha_x: ax,
    })
}

/// Local minimization of a given start, in scaled coordinates.
pub fn local_minimize(trap: &Trap, start: &[f64], config: &OptimizerConfig) -> Result<CrystalState> {
    let out = newton_cg(&trap.scaled(), start, &config.ncg())?;
    let state = CrystalState::from_scaled(trap.clone(), out.x, None)?;
    if out.converged {
        Ok(state)
    } else {
        Err(Error::NonConvergence {
            iterations: out.iterations,
            grad_norm: out.grad_norm,
            best: Box::new(state),
        })
    }
}

/// Independent runs sorted by energy.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub runs: Vec<BasinRun>,
    pub keep_lowest: usize,
}

impl Ensemble {
    pub fn states(&self) -> impl Iterator<Item = &CrystalState> {
        self.runs.iter().map(|r| &r.state)
    }

    pub fn best(&self) -> &CrystalState {
        &self.runs[0].state
    }

    /// The lowest-energy runs used for statistics.
    pub fn kept(&self) -> &[BasinRun] {
        &self.runs[..self.keep_lowest.min(self.runs.len())]
    }

    /// Standard deviation of the kept energies (scaled units).
    pub fn energy_std(&self) -> f64 {
        let e: Vec<f64> = self.kept().iter().map(|r| r.state.energy).collect();
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        (e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / e.len() as f64).sqrt()
    }
}

pub fn equilibrate_ensemble(trap: &Trap, config: &OptimizerConfig) -> Result<Ensemble> {
    config.validate()?;
    let results = map_indices(config.n_runs, |i| basin_hop_run(trap, config, config.seed, i as u64));
    let mut runs = Vec::with_capacity(results.len());
    let mut last_err = None;
    for r in results {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => last_err = Some(e),
        }
    }
    if runs.is_empty() {
        return Err(last_err.expect("n_runs >= 1"));
    }
    runs.sort_by(|a, b| {
        a.state
            .energy
            .total_cmp(&b.state.energy)
            .then_with(|| a.state.positions.partial_cmp(&b.state.positions).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(Ensemble { runs, keep_lowest: config.keep_lowest.max(1) })
}
