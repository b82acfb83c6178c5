use num_bigint::{BigUint, RandBigInt};
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ArchEncoding, LayerChoice, SpaceSpec, StageChoice, StageSpec};

/// Exact number of architectures in a space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceCount {
    pub total: BigUint,
    pub per_stage: Vec<BigUint>,
}

/// Moves every Identity slot to the tail of its stage, keeping the order of
/// the parametric layers.
pub fn canonicalize(arch: &ArchEncoding) -> ArchEncoding {
    let mut out = arch.clone();
    for stage in &mut out.stages {
        // Stable partition: parametric first, Identity last.
        stage.layers.sort_by_key(LayerChoice::is_identity);
    }
    out
}

pub fn is_canonical(arch: &ArchEncoding) -> bool {
    arch.stages.iter().all(|s| s.layers.windows(2).all(|w| !(w[0].is_identity() && !w[1].is_identity())))
}

/// Counts architectures. With `canonical` set, a stage of `L` slots and `P`
/// parametric combinations contributes `Σ_{d=0}^{L} P^d`, otherwise
/// `(P+1)^L`; both are scaled by the stage's embedding choices.
pub fn count_space(spec: &SpaceSpec, canonical: bool) -> SpaceCount {
    let per_stage: Vec<BigUint> = spec
        .stages
        .iter()
        .map(|st| {
            let p = BigUint::from(st.per_layer_choices());
            let layers =
                if canonical { depth_weights(st).into_iter().sum() } else { num_traits::pow(p + 1u32, st.layers) };
            layers * BigUint::from(st.embed.choices())
        })
        .collect();
    let total = per_stage.iter().fold(BigUint::one(), |acc, c| acc * c);
    SpaceCount { total, per_stage }
}

/// `P^d` for every depth `d = 0..=L`.
fn depth_weights(st: &StageSpec) -> Vec<BigUint> {
    let p = BigUint::from(st.per_layer_choices());
    let mut w = Vec::with_capacity(st.layers + 1);
    let mut cur = BigUint::one();
    for _ in 0..=st.layers {
        w.push(cur.clone());
        cur *= &p;
    }
    w
}

/// Decodes a parametric combination index `0..P` into field indices.
pub(crate) fn layer_from_index(st: &StageSpec, mut k: usize) -> LayerChoice {
    let mlp = k % st.mlp_ratios.len();
    k /= st.mlp_ratios.len();
    let attn = k % st.attn_ratios.len();
    k /= st.attn_ratios.len();
    let heads = k % st.heads.len();
    let op = k / st.heads.len();
    LayerChoice::Op { op, heads, attn, mlp }
}

fn sample_stage<R: Rng + ?Sized>(st: &StageSpec, canonical: bool, rng: &mut R) -> StageChoice {
    let patch = rng.gen_range(0..st.embed.patch_choices.len());
    let embed_ratio = rng.gen_range(0..st.embed.ratio_choices.len());
    let p = st.per_layer_choices();
    let layers = if canonical {
        let weights = depth_weights(st);
        let total: BigUint = weights.iter().sum();
        let mut r = rng.gen_biguint_below(&total);
        let mut depth = 0;
        for (d, w) in weights.iter().enumerate() {
            if r < *w {
                depth = d;
                break;
            }
            r -= w;
        }
        (0..st.layers)
            .map(|i| if i < depth { layer_from_index(st, rng.gen_range(0..p)) } else { LayerChoice::Identity })
            .collect()
    } else {
        (0..st.layers)
            .map(|_| match rng.gen_range(0..=p) {
                0 => LayerChoice::Identity,
                k => layer_from_index(st, k - 1),
            })
            .collect()
    };
    StageChoice { patch, embed_ratio, layers }
}

/// Draws one architecture using the caller's RNG. With `canonical` set the
/// draw is uniform over canonical forms; otherwise uniform over raw slot
/// assignments.
pub fn sample_with<R: Rng + ?Sized>(spec: &SpaceSpec, canonical: bool, rng: &mut R) -> ArchEncoding {
    let stages = spec.stages.iter().map(|st| sample_stage(st, canonical, rng)).collect();
    ArchEncoding::new(spec, stages).expect("sampled indices are in range")
}

pub fn sample_uniform(spec: &SpaceSpec, canonical: bool, seed: u64) -> ArchEncoding {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(spec, canonical, &mut rng)
}
