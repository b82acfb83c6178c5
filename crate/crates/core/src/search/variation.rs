use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::{estimate_with, CostOptions};
use crate::error::{Error, Result};
use crate::space::{canonicalize, ArchEncoding, GeneLayout, LayerChoice, SpaceSpec};

/// Resamples each gene with probability `rate`, then canonicalizes.
pub fn mutate_with<R: Rng + ?Sized>(
    spec: &SpaceSpec,
    arch: &ArchEncoding,
    rate: f64,
    rng: &mut R,
) -> Result<ArchEncoding> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!("mutation rate {rate} outside [0, 1]")));
    }
    arch.check_space(spec)?;
    let layout = GeneLayout::new(spec);
    let mut genes = layout.to_genes(arch);
    for (g, &card) in genes.iter_mut().zip(&layout.cardinality) {
        if rng.gen_bool(rate) {
            *g = rng.gen_range(0..card);
        }
    }
    Ok(canonicalize(&layout.from_genes(spec, &genes)?))
}

pub fn mutate(spec: &SpaceSpec, arch: &ArchEncoding, rate: f64, seed: u64) -> Result<ArchEncoding> {
    mutate_with(spec, arch, rate, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Uniform crossover: every gene comes from either parent with equal odds.
pub fn crossover_with<R: Rng + ?Sized>(
    spec: &SpaceSpec,
    a: &ArchEncoding,
    b: &ArchEncoding,
    rng: &mut R,
) -> Result<ArchEncoding> {
    a.check_space(spec)?;
    b.check_space(spec)?;
    let layout = GeneLayout::new(spec);
    let ga = layout.to_genes(a);
    let gb = layout.to_genes(b);
    let child: Vec<usize> = ga.iter().zip(&gb).map(|(&x, &y)| if rng.gen_bool(0.5) { x } else { y }).collect();
    Ok(canonicalize(&layout.from_genes(spec, &child)?))
}

pub fn crossover(spec: &SpaceSpec, a: &ArchEncoding, b: &ArchEncoding, seed: u64) -> Result<ArchEncoding> {
    crossover_with(spec, a, b, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub const MAX_REPAIR_STEPS: usize = 50;

/// Lowers ratio genes until the architecture fits `budget_gflops`.
///
/// Each step decrements the single ratio index (embedding, attention or
/// MLP) whose reduction saves the most FLOPs. Gives up after
/// [`MAX_REPAIR_STEPS`] steps or when nothing can be lowered.
pub fn repair(
    spec: &SpaceSpec,
    arch: &ArchEncoding,
    input_hw: (u32, u32),
    budget_gflops: f64,
    opts: &CostOptions,
) -> Result<Option<ArchEncoding>> {
    let mut cur = arch.clone();
    let mut flops = estimate_with(spec, &cur, input_hw, opts)?.flops;
    for _ in 0..=MAX_REPAIR_STEPS {
        if flops <= budget_gflops {
            return Ok(Some(cur));
        }
        let mut best: Option<(f64, ArchEncoding)> = None;
        for cand in ratio_decrements(&cur) {
            let f = estimate_with(spec, &cand, input_hw, opts)?.flops;
            if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                best = Some((f, cand));
            }
        }
        match best {
            Some((f, cand)) => {
                cur = cand;
                flops = f;
            }
            None => return Ok(None),
        }
    }
    Ok(None)
}

/// Every encoding obtained by lowering one ratio index by one.
fn ratio_decrements(arch: &ArchEncoding) -> Vec<ArchEncoding> {
    let mut out = Vec::new();
    for s in 0..arch.stages.len() {
        if arch.stages[s].embed_ratio > 0 {
            let mut c = arch.clone();
            c.stages[s].embed_ratio -= 1;
            out.push(c);
        }
        for k in 0..arch.stages[s].layers.len() {
            if let LayerChoice::Op { attn, mlp, .. } = arch.stages[s].layers[k] {
                if attn > 0 {
                    let mut c = arch.clone();
                    if let LayerChoice::Op { attn, .. } = &mut c.stages[s].layers[k] {
                        *attn -= 1;
                    }
                    out.push(c);
                }
                if mlp > 0 {
                    let mut c = arch.clone();
                    if let LayerChoice::Op { mlp, .. } = &mut c.stages[s].layers[k] {
                        *mlp -= 1;
                    }
                    out.push(c);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::estimate;
    use crate::space::{is_canonical, load_space, sample_uniform};

    #[test]
    fn zero_rate_is_identity() {
        let spec = load_space("twins-small").unwrap();
        for seed in 0..10 {
            let a = sample_uniform(&spec, true, seed);
            assert_eq!(mutate(&spec, &a, 0.0, seed).unwrap(), a);
        }
    }

    #[test]
    fn full_rate_changes_and_stays_canonical() {
        let spec = load_space("deit-small").unwrap();
        let a = sample_uniform(&spec, true, 1);
        let b = mutate(&spec, &a, 1.0, 2).unwrap();
        assert!(is_canonical(&b));
        assert_ne!(a, b);
        assert!(mutate(&spec, &a, 1.5, 0).is_err());
    }

    #[test]
    fn self_crossover() {
        let spec = load_space("twins-small").unwrap();
        let a = sample_uniform(&spec, true, 4);
        assert_eq!(crossover(&spec, &a, &a, 9).unwrap(), a);
    }

    #[test]
    fn mismatched_spaces() {
        let a = load_space("twins-small").unwrap();
        let b = load_space("deit-small").unwrap();
        let x = sample_uniform(&a, true, 0);
        let y = sample_uniform(&b, true, 0);
        assert!(matches!(crossover(&a, &x, &y, 0), Err(Error::IncompatibleArch(_))));
        assert!(matches!(mutate(&b, &x, 0.1, 0), Err(Error::IncompatibleArch(_))));
    }

    #[test]
    fn repair_meets_budget() {
        let spec = load_space("deit-small").unwrap();
        let hw = (224, 224);
        let arch = ArchEncoding::maximal(&spec);
        let budget = estimate(&spec, &arch, hw).unwrap().flops * 0.8;
        let fixed = repair(&spec, &arch, hw, budget, &CostOptions::default()).unwrap().unwrap();
        assert!(estimate(&spec, &fixed, hw).unwrap().flops <= budget);
        // Nothing left to lower.
        let min = ArchEncoding::minimal(&spec);
        assert_eq!(repair(&spec, &min, hw, 0.0, &CostOptions::default()).unwrap(), None);
    }
}
