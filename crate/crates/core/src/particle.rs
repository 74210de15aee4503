//! Euler-Maruyama simulation of the interacting particle system and the
//! stored empirical law it produces.

use std::borrow::Cow;
use std::f64::consts::FRAC_1_SQRT_2;
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, StateSet};
use crate::rng::{purpose, standard_normal, StreamKey};

/// Particle trajectories on a uniform grid `t_n = n T / N`, together with the
/// per-particle parameters and the standard normal draws that drove them.
#[derive(Debug, Clone)]
pub struct EmpiricalLaw {
    horizon: f64,
    levels: Vec<StateSet>,
    /// `increments[n * P + p]` drove particle `p` over step `n`.
    increments: Vec<f64>,
    parameters: Vec<f64>,
}

impl EmpiricalLaw {
    pub fn n_particles(&self) -> usize {
        self.parameters.len()
    }

    pub fn n_steps(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps() as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    /// States of all particles at grid time `t_n`.
    pub fn column(&self, n: usize) -> &[f64] {
        self.levels[n].states()
    }

    pub fn state_set(&self, n: usize) -> &StateSet {
        &self.levels[n]
    }

    pub fn trajectory(&self, particle: usize) -> Vec<f64> {
        self.levels.iter().map(|l| l.states()[particle]).collect()
    }

    pub fn parameters(&self) -> &[f64] {
        &self.parameters
    }

    /// Standard normal draws of step `n`, one per particle.
    pub fn increments(&self, n: usize) -> &[f64] {
        let p = self.n_particles();
        &self.increments[n * p..(n + 1) * p]
    }

    pub fn initial_states(&self) -> &[f64] {
        self.column(0)
    }

    /// Particle states at time `t`: the stored column at grid times, linear
    /// interpolation along each trajectory in between.
    pub fn law_at(&self, t: f64) -> Result<Vec<f64>> {
        match self.locate(t)? {
            Position::Node(n) => Ok(self.column(n).to_vec()),
            Position::Between(n, w) => Ok(self.interpolate(n, w)),
        }
    }

    /// `StateSet` at time `t`, borrowed when `t` is a grid time.
    pub fn state_set_at(&self, t: f64) -> Result<Cow<'_, StateSet>> {
        match self.locate(t)? {
            Position::Node(n) => Ok(Cow::Borrowed(&self.levels[n])),
            Position::Between(n, w) => Ok(Cow::Owned(StateSet::new(self.interpolate(n, w)))),
        }
    }

    /// The law sampled at `k T / n_points` for `k = 0..=n_points`.
    pub fn slices(&self, n_points: usize) -> Result<TimeSlices<'_>> {
        if n_points == 0 {
            return Err(Error::InvalidArgument("time slices need at least one step".into()));
        }
        let n1 = self.n_steps();
        let sets = (0..=n_points)
            .map(|k| {
                let num = k * n1;
                let (lo, rem) = (num / n_points, num % n_points);
                if rem == 0 {
                    Cow::Borrowed(&self.levels[lo])
                } else {
                    let w = rem as f64 / n_points as f64;
                    Cow::Owned(StateSet::new(self.interpolate(lo, w)))
                }
            })
            .collect();
        Ok(TimeSlices {
            horizon: self.horizon,
            sets,
        })
    }

    fn locate(&self, t: f64) -> Result<Position> {
        let horizon = self.horizon;
        if !(t >= 0.0 && t <= horizon * (1.0 + 1e-12)) {
            return Err(Error::TimeOutOfRange { t, horizon });
        }
        let n1 = self.n_steps();
        let s = (t / horizon * n1 as f64).min(n1 as f64);
        let nearest = s.round();
        if (s - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            return Ok(Position::Node(nearest as usize));
        }
        let lo = s.floor() as usize;
        Ok(Position::Between(lo, s - lo as f64))
    }

    fn interpolate(&self, lo: usize, w: f64) -> Vec<f64> {
        let a = self.levels[lo].states();
        let b = self.levels[lo + 1].states();
        a.iter().zip(b).map(|(x, y)| (1.0 - w) * x + w * y).collect()
    }

    /// Write `particle,time_index,state` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "particle,time_index,state")?;
        for p in 0..self.n_particles() {
            for (n, level) in self.levels.iter().enumerate() {
                writeln!(out, "{p},{n},{:e}", level.states()[p])?;
            }
        }
        Ok(())
    }
}

enum Position {
    Node(usize),
    Between(usize, f64),
}

/// An empirical law sampled on another uniform time grid.
#[derive(Debug, Clone)]
pub struct TimeSlices<'a> {
    horizon: f64,
    sets: Vec<Cow<'a, StateSet>>,
}

impl TimeSlices<'_> {
    pub fn n_steps(&self) -> usize {
        self.sets.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn at(&self, k: usize) -> &StateSet {
        &self.sets[k]
    }
}

/// Simulate `n_particles` interacting particles with `n_steps` Euler steps.
///
/// Particle `p` draws its initial state, parameter and normals from substreams
/// of `key.derive(p)`.
pub fn simulate_particles(
    model: &ModelSpec,
    n_particles: usize,
    n_steps: usize,
    key: StreamKey,
) -> Result<EmpiricalLaw> {
    let keys: Vec<StreamKey> = (0..n_particles as u64).map(|p| key.derive(p)).collect();
    simulate_particles_with_keys(model, &keys, n_steps)
}

/// Same as [`simulate_particles`] with an explicit stream per particle.
pub fn simulate_particles_with_keys(
    model: &ModelSpec,
    keys: &[StreamKey],
    n_steps: usize,
) -> Result<EmpiricalLaw> {
    let n_particles = keys.len();
    if n_particles == 0 {
        return Err(Error::InvalidParticleCount(0));
    }
    if n_steps == 0 {
        return Err(Error::InvalidArgument("need at least one time step".into()));
    }
    let mut initial = Vec::with_capacity(n_particles);
    let mut parameters = Vec::with_capacity(n_particles);
    let mut increments = vec![0.0; n_particles * n_steps];
    for (p, key) in keys.iter().enumerate() {
        initial.push(model.initial_law.sample(&mut key.derive(purpose::INITIAL_STATE).rng()));
        parameters.push(model.sample_parameter(&mut key.derive(purpose::PARAMETER).rng()));
        let mut noise = key.derive(purpose::NOISE).rng();
        for n in 0..n_steps {
            increments[n * n_particles + p] = standard_normal(&mut noise);
        }
    }
    evolve(model, initial, parameters, increments, n_steps)
}

/// Euler-Maruyama with prescribed initial states, parameters and normals.
fn evolve(
    model: &ModelSpec,
    initial: Vec<f64>,
    parameters: Vec<f64>,
    increments: Vec<f64>,
    n_steps: usize,
) -> Result<EmpiricalLaw> {
    let n_particles = initial.len();
    let dt = model.horizon / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let mut levels = Vec::with_capacity(n_steps + 1);
    levels.push(StateSet::new(initial));
    for n in 0..n_steps {
        let current = &levels[n];
        let eps = &increments[n * n_particles..(n + 1) * n_particles];
        let mut next = Vec::with_capacity(n_particles);
        for (p, &x) in current.states().iter().enumerate() {
            let m1 = current.kernel_mean(&model.drift_kernel, x);
            let m2 = current.kernel_mean(&model.diffusion_kernel, x);
            let drift = model.drift(x, m1, parameters[p]);
            let diffusion = model.diffusion(x, m2);
            let y = x + drift * dt + diffusion * sqrt_dt * eps[p];
            if !y.is_finite() {
                return Err(Error::NonFiniteParticle {
                    particle: p,
                    step: n,
                    state: x,
                    drift,
                    diffusion,
                    increment: eps[p],
                });
            }
            next.push(y);
        }
        levels.push(StateSet::new(next));
    }
    Ok(EmpiricalLaw {
        horizon: model.horizon,
        levels,
        increments,
        parameters,
    })
}

/// Split the particles into halves `0..P/2` and `P/2..P` and re-simulate each
/// half as its own system from the same initial states, parameters and noise.
/// With `coarsen_time` the halves run on the grid with `N/2` steps, driven by
/// the pairwise sums `(e_{2n} + e_{2n+1}) / sqrt(2)`.
pub fn split_particles(
    model: &ModelSpec,
    law: &EmpiricalLaw,
    coarsen_time: bool,
) -> Result<(EmpiricalLaw, EmpiricalLaw)> {
    let p = law.n_particles();
    if p < 2 || !p.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "antithetic split needs an even particle count, got {p}"
        )));
    }
    let half = p / 2;
    let first = restrict(model, law, 0..half, coarsen_time)?;
    let second = restrict(model, law, half..p, coarsen_time)?;
    Ok((first, second))
}

/// Antithetic coarse-level pair: halves of the particles on the grid with
/// half as many steps.
pub fn partition_antithetic(
    model: &ModelSpec,
    law_fine: &EmpiricalLaw,
) -> Result<(EmpiricalLaw, EmpiricalLaw)> {
    split_particles(model, law_fine, true)
}

/// Re-simulate all particles on the grid with half as many steps using the
/// aggregated normals.
pub fn coarsen_time(model: &ModelSpec, law: &EmpiricalLaw) -> Result<EmpiricalLaw> {
    restrict(model, law, 0..law.n_particles(), true)
}

fn restrict(
    model: &ModelSpec,
    law: &EmpiricalLaw,
    particles: std::ops::Range<usize>,
    coarsen: bool,
) -> Result<EmpiricalLaw> {
    let n_fine = law.n_steps();
    if coarsen && !n_fine.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "time coarsening needs an even step count, got {n_fine}"
        )));
    }
    let initial = law.initial_states()[particles.clone()].to_vec();
    let parameters = law.parameters()[particles.clone()].to_vec();
    let n_steps = if coarsen { n_fine / 2 } else { n_fine };
    let mut increments = Vec::with_capacity(particles.len() * n_steps);
    for n in 0..n_steps {
        if coarsen {
            let a = &law.increments(2 * n)[particles.clone()];
            let b = &law.increments(2 * n + 1)[particles.clone()];
            increments.extend(a.iter().zip(b).map(|(x, y)| (x + y) * FRAC_1_SQRT_2));
        } else {
            increments.extend_from_slice(&law.increments(n)[particles.clone()]);
        }
    }
    evolve(model, initial, parameters, increments, n_steps)
}
