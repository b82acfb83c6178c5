//! Group-level simulation of supernet training under a sharing mapping.
//!
//! Each step samples a width uniformly from `1..=l`, then every group the
//! mapping assigns to that width receives one update and `1/j` influence.
//! No weights or losses are involved; the state is what the fairness and
//! uniformity conditions are about.

use num_traits::Float;
use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mapping::ChannelMapping;

/// How the two blocks of a bilateral mapping are trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SideSchedule {
    /// Both blocks every step (twice the cost of a single-sided mapping).
    #[default]
    Both,
    /// Block `t mod 2` at step `t`.
    Alternating,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimState {
    pub counts: Vec<u64>,
    pub influence_acc: Vec<f64>,
    pub steps: u64,
    pub seed: u64,
    /// Total group updates, i.e. training cost in group units.
    pub group_updates: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub step: u64,
    pub counts: Vec<u64>,
    pub influence_acc: Vec<f64>,
}

pub fn simulate(mapping: &ChannelMapping, steps: u64, seed: u64) -> SimState {
    simulate_traced(mapping, steps, seed, SideSchedule::Both, 0).0
}

/// Runs the simulation and records a snapshot every `every` steps (and at
/// the end); `every = 0` records nothing.
pub fn simulate_traced(
    mapping: &ChannelMapping,
    steps: u64,
    seed: u64,
    schedule: SideSchedule,
    every: u64,
) -> (SimState, Vec<Snapshot>) {
    let l = mapping.l();
    let groups: Vec<Vec<Vec<usize>>> =
        mapping.blocks().iter().map(|b| (1..=l).map(|w| b.groups_for(w)).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = SimState { counts: vec![0; l], influence_acc: vec![0.0; l], steps: 0, seed, group_updates: 0 };
    let mut trace = Vec::new();
    for t in 0..steps {
        let width = rng.gen_range(1..=l);
        let psi = 1.0 / width as f64;
        let blocks: &[Vec<Vec<usize>>] = match schedule {
            SideSchedule::Both => &groups,
            SideSchedule::Alternating => {
                let b = (t as usize) % groups.len();
                &groups[b..b + 1]
            }
        };
        for block in blocks {
            for &g in &block[width - 1] {
                state.counts[g] += 1;
                state.influence_acc[g] += psi;
                state.group_updates += 1;
            }
        }
        state.steps += 1;
        if every > 0 && (state.steps.is_multiple_of(every) || state.steps == steps) {
            trace.push(Snapshot {
                step: state.steps,
                counts: state.counts.clone(),
                influence_acc: state.influence_acc.clone(),
            });
        }
    }
    (state, trace)
}

/// Monte Carlo estimate of `E[y_1 / Σ_k y_k]` for `y_k = w_k x_k` with
/// `w_k, x_k ~ U(0.5, 1.5)` i.i.d.; by exchangeability this is `1/j`.
pub fn empirical_influence(width: usize, trials: u64, seed: u64) -> Result<f64> {
    if width == 0 || trials == 0 {
        return Err(Error::invalid("width and trials must be positive"));
    }
    let dist = Uniform::new(0.5, 1.5);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..trials {
        let y1 = dist.sample(&mut rng) * dist.sample(&mut rng);
        let mut total = y1;
        for _ in 1..width {
            total += dist.sample(&mut rng) * dist.sample(&mut rng);
        }
        acc += y1 / total;
    }
    Ok(acc / trials as f64)
}

/// Single output `y = Σ w_i x_i` of a fully connected layer of width `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyFc<T> {
    pub w: Vec<T>,
    pub x: Vec<T>,
}

impl<T: Float> TinyFc<T> {
    pub fn new(w: Vec<T>, x: Vec<T>) -> Result<Self> {
        if w.len() != x.len() || w.is_empty() {
            return Err(Error::invalid("weights and inputs must be non-empty and equal length"));
        }
        Ok(Self { w, x })
    }

    /// Weights and inputs drawn from U(-1, 1).
    pub fn random(width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || T::from(rng.gen_range(-1.0..1.0)).unwrap();
        let w = (0..width).map(|_| draw()).collect();
        let x = (0..width).map(|_| draw()).collect();
        Self { w, x }
    }

    pub fn width(&self) -> usize {
        self.w.len()
    }

    pub fn forward(&self) -> T {
        self.w.iter().zip(&self.x).fold(T::zero(), |acc, (&w, &x)| acc + w * x)
    }

    /// `∂y/∂w_i = x_i`.
    pub fn grad_w(&self) -> Vec<T> {
        self.x.clone()
    }
}

/// Largest relative error between the analytic weight gradient and central
/// finite differences. Entries where both are zero count as exact.
pub fn grad_check<T: Float>(fc: &TinyFc<T>, epsilon: T) -> Result<T> {
    if !(epsilon > T::zero()) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let analytic = fc.grad_w();
    let mut probe = fc.clone();
    let two = T::one() + T::one();
    let mut worst = T::zero();
    for i in 0..fc.width() {
        let w0 = fc.w[i];
        probe.w[i] = w0 + epsilon;
        let up = probe.forward();
        probe.w[i] = w0 - epsilon;
        let down = probe.forward();
        probe.w[i] = w0;
        let numeric = (up - down) / (two * epsilon);
        let scale = analytic[i].abs().max(numeric.abs());
        if scale > T::zero() {
            worst = worst.max((analytic[i] - numeric).abs() / scale);
        }
    }
    Ok(worst)
}
