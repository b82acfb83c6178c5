//! NSGA-II search under a FLOPs budget.
//!
//! The default mode has two objectives (maximise score, minimise FLOPs)
//! with the budget as a hard constraint; [`Objectives::ScoreOnly`] ranks by
//! score alone. Every individual is canonical before it is evaluated, and
//! evaluations inside a generation run in parallel but are collected in
//! index order, so a seed fully determines the trajectory.

mod evaluator;
mod pareto;
mod variation;

pub use evaluator::{CommandEvaluator, Evaluator, InfluenceEvaluator, ProxyEvaluator};
pub use pareto::{crowding_distance, dominates, hypervolume_2d, nondominated_sort};
pub use variation::{crossover, crossover_with, mutate, mutate_with, repair, MAX_REPAIR_STEPS};

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cost::{estimate_with, CostOptions};
use crate::error::{Error, Result};
use crate::space::{canonicalize, sample_with, ArchEncoding, SpaceSpec};

/// Draws allowed while looking for feasible initial architectures.
pub const INIT_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Objectives {
    /// Maximise score and minimise FLOPs, budget as hard constraint.
    ScoreAndFlops,
    /// Maximise score only, budget as hard constraint.
    ScoreOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub population: usize,
    pub generations: usize,
    pub parents: usize,
    pub budget_gflops: f64,
    pub mutation_rate: f64,
    pub seed: u64,
    pub input_hw: (u32, u32),
    pub objectives: Objectives,
    /// Score floor of the hypervolume reference point.
    pub score_ref: f64,
    pub cost: CostOptions,
}

impl SearchConfig {
    pub fn new(budget_gflops: f64) -> Self {
        SearchConfig {
            population: 50,
            generations: 40,
            parents: 20,
            budget_gflops,
            mutation_rate: 0.1,
            seed: 0,
            input_hw: (224, 224),
            objectives: Objectives::ScoreAndFlops,
            score_ref: 0.0,
            cost: CostOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.generations == 0 {
            return Err(Error::invalid("population and generations must be positive"));
        }
        if self.parents == 0 || self.parents > self.population {
            return Err(Error::invalid(format!("parents must be in 1..={} (got {})", self.population, self.parents)));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::invalid(format!("mutation rate {} outside [0, 1]", self.mutation_rate)));
        }
        if self.budget_gflops.is_nan() || self.budget_gflops < 0.0 {
            return Err(Error::invalid("budget must be a non-negative number"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Individual {
    pub arch: ArchEncoding,
    pub score: f64,
    pub flops: f64,
    pub params: f64,
    pub feasible: bool,
    pub rank: usize,
    pub crowding: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub evaluations: usize,
    pub best_score: f64,
    pub hypervolume: f64,
    pub front_size: usize,
}

/// Outcome of a search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoFront {
    /// Non-dominated feasible architectures over everything evaluated,
    /// sorted by FLOPs.
    pub front: Vec<Individual>,
    /// Highest-scoring feasible architecture seen.
    pub best: Individual,
    pub history: Vec<GenerationStats>,
    pub evaluations: usize,
}

impl ParetoFront {
    pub fn hypervolume(&self, score_ref: f64, budget: f64) -> f64 {
        let pts: Vec<_> = self.front.iter().map(|i| (i.score, i.flops)).collect();
        hypervolume_2d(&pts, score_ref, budget)
    }
}

struct Engine<'a, E: Evaluator + ?Sized> {
    spec: &'a SpaceSpec,
    cfg: &'a SearchConfig,
    evaluator: &'a E,
    cache: Mutex<HashMap<ArchEncoding, f64>>,
}

impl<E: Evaluator + ?Sized> Engine<'_, E> {
    fn flops(&self, arch: &ArchEncoding) -> Result<f64> {
        Ok(estimate_with(self.spec, arch, self.cfg.input_hw, &self.cfg.cost)?.flops)
    }

    fn feasible(&self, arch: &ArchEncoding) -> Result<bool> {
        Ok(self.flops(arch)? <= self.cfg.budget_gflops)
    }

    fn evaluate(&self, arch: &ArchEncoding) -> Result<Individual> {
        let cost = estimate_with(self.spec, arch, self.cfg.input_hw, &self.cfg.cost)?;
        let cached = self.cache.lock().expect("cache lock").get(arch).copied();
        let score = match cached {
            Some(s) => s,
            None => {
                let s = self.evaluator.score(arch, &cost)?;
                if !s.is_finite() {
                    return Err(Error::Evaluator(format!("non-finite score {s}")));
                }
                self.cache.lock().expect("cache lock").insert(arch.clone(), s);
                s
            }
        };
        Ok(Individual {
            arch: arch.clone(),
            score,
            flops: cost.flops,
            params: cost.params,
            feasible: cost.flops <= self.cfg.budget_gflops,
            rank: 0,
            crowding: 0.0,
        })
    }

    fn evaluate_all(&self, archs: &[ArchEncoding]) -> Result<Vec<Individual>> {
        archs.par_iter().map(|a| self.evaluate(a)).collect()
    }

    fn objectives(&self, ind: &Individual) -> Vec<f64> {
        match self.cfg.objectives {
            Objectives::ScoreAndFlops => vec![ind.score, -ind.flops],
            Objectives::ScoreOnly => vec![ind.score],
        }
    }

    /// Assigns rank and crowding, then returns indices in selection order:
    /// feasible before infeasible, then rank, then crowding (descending),
    /// then position.
    fn rank(&self, pop: &mut [Individual]) -> Vec<usize> {
        let pts: Vec<Vec<f64>> = pop.iter().map(|i| self.objectives(i)).collect();
        let (feas, infeas): (Vec<usize>, Vec<usize>) = (0..pop.len()).partition(|&i| pop[i].feasible);
        let feas_pts: Vec<Vec<f64>> = feas.iter().map(|&i| pts[i].clone()).collect();
        let fronts = nondominated_sort(&feas_pts);
        let n_fronts = fronts.len();
        for (r, front) in fronts.iter().enumerate() {
            let cd = crowding_distance(&feas_pts, front);
            for (&k, d) in front.iter().zip(cd) {
                pop[feas[k]].rank = r;
                pop[feas[k]].crowding = d;
            }
        }
        for &i in &infeas {
            pop[i].rank = n_fronts;
            pop[i].crowding = 0.0;
        }
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| {
            let (x, y) = (&pop[a], &pop[b]);
            y.feasible
                .cmp(&x.feasible)
                .then(x.rank.cmp(&y.rank))
                .then(y.crowding.partial_cmp(&x.crowding).unwrap_or(Ordering::Equal))
                .then(a.cmp(&b))
        });
        order
    }

    fn initial(&self, rng: &mut ChaCha8Rng) -> Result<Vec<ArchEncoding>> {
        let mut out = Vec::with_capacity(self.cfg.population);
        let mut seen = HashSet::new();
        let mut attempts = 0;
        while out.len() < self.cfg.population && attempts < INIT_ATTEMPTS {
            attempts += 1;
            let a = sample_with(self.spec, true, rng);
            if self.feasible(&a)? && seen.insert(a.clone()) {
                out.push(a);
            }
        }
        if out.is_empty() {
            return Err(Error::InfeasibleBudget { budget_gflops: self.cfg.budget_gflops, attempts });
        }
        // Small feasible regions may hold fewer distinct architectures than
        // the population; recycle what was found.
        let found = out.len();
        let mut k = 0;
        while out.len() < self.cfg.population {
            out.push(out[k % found].clone());
            k += 1;
        }
        Ok(out)
    }

    fn offspring(&self, parents: &[&ArchEncoding], rng: &mut ChaCha8Rng) -> Result<ArchEncoding> {
        let a = parents.choose(rng).expect("parents non-empty");
        let b = parents.choose(rng).expect("parents non-empty");
        let child = crossover_with(self.spec, a, b, rng)?;
        let child = mutate_with(self.spec, &child, self.cfg.mutation_rate, rng)?;
        if self.feasible(&child)? {
            return Ok(child);
        }
        if let Some(fixed) = repair(self.spec, &child, self.cfg.input_hw, self.cfg.budget_gflops, &self.cfg.cost)? {
            return Ok(canonicalize(&fixed));
        }
        for _ in 0..1000 {
            let s = sample_with(self.spec, true, rng);
            if self.feasible(&s)? {
                return Ok(s);
            }
        }
        Ok((*a).clone())
    }
}

/// Archive of feasible, non-dominated `(score, flops)` individuals.
#[derive(Default)]
struct Archive {
    members: Vec<Individual>,
    seen: HashSet<ArchEncoding>,
}

impl Archive {
    fn offer(&mut self, ind: &Individual) {
        if !ind.feasible || !self.seen.insert(ind.arch.clone()) {
            return;
        }
        let p = [ind.score, -ind.flops];
        if self
            .members
            .iter()
            .any(|m| dominates(&[m.score, -m.flops], &p) || (m.score == ind.score && m.flops == ind.flops))
        {
            return;
        }
        self.members.retain(|m| !dominates(&p, &[m.score, -m.flops]));
        self.members.push(ind.clone());
    }

    fn sorted(&self) -> Vec<Individual> {
        let mut v = self.members.clone();
        v.sort_by(|a, b| {
            a.flops
                .partial_cmp(&b.flops)
                .unwrap_or(Ordering::Equal)
                .then(b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal))
                .then(a.arch.cmp(&b.arch))
        });
        v
    }
}

fn better(a: &Individual, b: &Individual) -> bool {
    a.score > b.score || (a.score == b.score && a.flops < b.flops)
}

/// Runs NSGA-II for `generations × population` evaluations.
pub fn nsga2_search<E: Evaluator + ?Sized>(spec: &SpaceSpec, cfg: &SearchConfig, evaluator: &E) -> Result<ParetoFront> {
    cfg.validate()?;
    let engine = Engine { spec, cfg, evaluator, cache: Mutex::new(HashMap::new()) };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut archive = Archive::default();
    let mut best: Option<Individual> = None;
    let mut history = Vec::with_capacity(cfg.generations);
    let mut evaluations = 0;

    let mut record = |batch: &[Individual], generation: usize, evaluations: usize, archive: &mut Archive| {
        for ind in batch {
            archive.offer(ind);
            if ind.feasible && best.as_ref().is_none_or(|b| better(ind, b)) {
                best = Some(ind.clone());
            }
        }
        let pts: Vec<_> = archive.members.iter().map(|i| (i.score, i.flops)).collect();
        history.push(GenerationStats {
            generation,
            evaluations,
            best_score: best.as_ref().map_or(f64::NEG_INFINITY, |b| b.score),
            hypervolume: hypervolume_2d(&pts, cfg.score_ref, cfg.budget_gflops),
            front_size: archive.members.len(),
        });
    };

    let init = engine.initial(&mut rng)?;
    let mut pop = engine.evaluate_all(&init)?;
    evaluations += pop.len();
    record(&pop, 0, evaluations, &mut archive);

    for generation in 1..cfg.generations {
        let order = engine.rank(&mut pop);
        let parents: Vec<&ArchEncoding> =
            order.iter().filter(|&&i| pop[i].feasible).take(cfg.parents).map(|&i| &pop[i].arch).collect();
        let parents =
            if parents.is_empty() { order.iter().take(cfg.parents).map(|&i| &pop[i].arch).collect() } else { parents };
        let children = (0..cfg.population).map(|_| engine.offspring(&parents, &mut rng)).collect::<Result<Vec<_>>>()?;
        let children = engine.evaluate_all(&children)?;
        evaluations += children.len();
        record(&children, generation, evaluations, &mut archive);

        // Elitist replacement over parents ∪ children, duplicates last.
        let mut merged: Vec<Individual> = pop.into_iter().chain(children).collect();
        let mut seen = HashSet::new();
        let unique: Vec<bool> = merged.iter().map(|i| seen.insert(i.arch.clone())).collect();
        let order = engine.rank(&mut merged);
        let (first, dups): (Vec<usize>, Vec<usize>) = order.into_iter().partition(|&i| unique[i]);
        let keep: Vec<usize> = first.into_iter().chain(dups).take(cfg.population).collect();
        let mut slots: Vec<Option<Individual>> = merged.into_iter().map(Some).collect();
        pop = keep.iter().map(|&i| slots[i].take().expect("index used once")).collect();
    }
    engine.rank(&mut pop);

    let best = best.ok_or(Error::InfeasibleBudget { budget_gflops: cfg.budget_gflops, attempts: evaluations })?;
    Ok(ParetoFront { front: archive.sorted(), best, history, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{is_canonical, load_space};

    fn small_cfg(budget: f64) -> SearchConfig {
        SearchConfig { population: 12, generations: 5, parents: 6, ..SearchConfig::new(budget) }
    }

    #[test]
    fn evaluation_count_and_budget() {
        let spec = load_space("deit-tiny").unwrap();
        let cfg = small_cfg(2.0);
        let r = nsga2_search(&spec, &cfg, &ProxyEvaluator::new(&spec)).unwrap();
        assert_eq!(r.evaluations, 60);
        assert_eq!(r.history.len(), 5);
        assert!(r.best.flops <= 2.0);
        assert!(r.front.iter().all(|i| i.feasible && i.flops <= 2.0 && is_canonical(&i.arch)));
        for w in r.history.windows(2) {
            assert!(w[1].best_score >= w[0].best_score);
            assert!(w[1].hypervolume >= w[0].hypervolume);
        }
    }

    #[test]
    fn deterministic() {
        let spec = load_space("twins-small").unwrap();
        let cfg = small_cfg(1.5);
        let ev = ProxyEvaluator::new(&spec);
        assert_eq!(nsga2_search(&spec, &cfg, &ev).unwrap(), nsga2_search(&spec, &cfg, &ev).unwrap());
    }

    #[test]
    fn infeasible_budget() {
        let spec = load_space("deit-tiny").unwrap();
        let cfg = small_cfg(0.0);
        let e = nsga2_search(&spec, &cfg, &ProxyEvaluator::new(&spec)).unwrap_err();
        assert!(matches!(e, Error::InfeasibleBudget { .. }));
    }

    #[test]
    fn bad_config() {
        let spec = load_space("deit-tiny").unwrap();
        let mut cfg = small_cfg(1.0);
        cfg.parents = 13;
        assert!(nsga2_search(&spec, &cfg, &ProxyEvaluator::new(&spec)).is_err());
    }

    #[test]
    fn minus_flops_collapses_to_cheap() {
        let spec = load_space("deit-tiny").unwrap();
        let mut cfg = small_cfg(5.0);
        cfg.objectives = Objectives::ScoreOnly;
        cfg.generations = 10;
        let ev = |_: &ArchEncoding, c: &crate::cost::CostReport| Ok(-c.flops);
        let r = nsga2_search(&spec, &cfg, &ev).unwrap();
        let (lo, _) = crate::cost::min_max_cost(&spec, (224, 224)).unwrap();
        assert!(r.best.flops < 0.05, "{} vs min {}", r.best.flops, lo.flops);
    }
}
