//! Closed-form FLOPs and parameter estimates.
//!
//! One multiply-accumulate counts as one FLOP. Softmax, normalisation and
//! activations are ignored. For a layer with `N` query tokens, `N_kv` key
//! tokens, embedding width `D`, attention width `A` and MLP width `M`:
//!
//! * attention: `3·N·D·A` (QKV) + `2·N·N_kv·A` (scores and aggregation) +
//!   `N·A·D` (projection)
//! * MLP: `2·N·D·M`
//! * patch embedding of patch `P` from `C` channels: `N·D·C·P²`
//!
//! Local attention restricts `N_kv` to a window, global attention
//! sub-samples keys/values by the stage's patch stride, and DeiT-style
//! blocks attend over every token (class token included). The classifier
//! head is charged to the last stage.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::space::{ArchEncoding, LayerChoice, OpKind, SpaceSpec};

/// Tunable accounting conventions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostOptions {
    /// Tokens visible to a local-attention query (7×7 by default).
    pub local_window: u64,
    /// Key/value sub-sampling stride of global attention; `None` uses the
    /// stage's own patch size.
    pub global_stride: Option<u32>,
    pub num_classes: u64,
}

impl Default for CostOptions {
    fn default() -> Self {
        CostOptions { local_window: 49, global_stride: None, num_classes: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageCost {
    /// Giga-MACs.
    pub flops: f64,
    /// Millions of parameters.
    pub params: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub flops: f64,
    pub params: f64,
    pub per_stage: Vec<StageCost>,
}

/// A concrete layer with resolved widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolvedLayer {
    pub op: OpKind,
    pub heads: u32,
    /// Per-projection attention width (Q, K and V each have this width).
    pub attn_dim: u64,
    pub mlp_dim: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedStage {
    pub patch: u32,
    pub dim: u64,
    pub layers: Vec<ResolvedLayer>,
}

/// An architecture with all choices turned into widths. Reference models
/// that do not live in any built-in space can be built directly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedArch {
    pub in_channels: u32,
    pub class_token: bool,
    pub stages: Vec<ResolvedStage>,
}

impl ResolvedArch {
    /// Isotropic DeiT-style model: one patch embedding, `depth` blocks.
    pub fn deit(dim: u64, heads: u32, depth: usize, mlp_dim: u64, patch: u32) -> Self {
        ResolvedArch {
            in_channels: 3,
            class_token: true,
            stages: vec![ResolvedStage {
                patch,
                dim,
                layers: vec![ResolvedLayer { op: OpKind::Block, heads, attn_dim: dim, mlp_dim }; depth],
            }],
        }
    }

    /// DeiT-Tiny: width 192, 3 heads, 12 blocks, patch 16.
    pub fn deit_tiny() -> Self {
        Self::deit(192, 3, 12, 768, 16)
    }

    /// DeiT-Small: width 384, 6 heads, 12 blocks, patch 16.
    pub fn deit_small() -> Self {
        Self::deit(384, 6, 12, 1536, 16)
    }
}

/// Turns index choices into widths.
pub fn resolve(spec: &SpaceSpec, arch: &ArchEncoding) -> Result<ResolvedArch> {
    arch.check_space(spec)?;
    let stages = spec
        .stages
        .iter()
        .zip(&arch.stages)
        .map(|(st, sc)| ResolvedStage {
            patch: st.embed.patch_choices[sc.patch],
            dim: st.embed.dim(st.embed.ratio_choices[sc.embed_ratio]),
            layers: sc
                .layers
                .iter()
                .filter_map(|l| match *l {
                    LayerChoice::Identity => None,
                    LayerChoice::Op { op, heads, attn, mlp } => Some(ResolvedLayer {
                        op: st.ops[op],
                        heads: st.heads[heads],
                        attn_dim: st.attn_inner_dim(st.attn_ratios[attn]),
                        mlp_dim: st.mlp_hidden_dim(st.mlp_ratios[mlp]),
                    }),
                })
                .collect(),
        })
        .collect();
    Ok(ResolvedArch { in_channels: spec.in_channels, class_token: spec.class_token, stages })
}

/// Cost of a resolved architecture at `input_hw` pixels.
pub fn estimate_resolved(arch: &ResolvedArch, input_hw: (u32, u32), opts: &CostOptions) -> Result<CostReport> {
    let (mut h, mut w) = (u64::from(input_hw.0), u64::from(input_hw.1));
    let mut in_dim = u64::from(arch.in_channels);
    let mut stride = 1u64;
    let mut per_stage = Vec::with_capacity(arch.stages.len());

    for (s, st) in arch.stages.iter().enumerate() {
        let p = u64::from(st.patch);
        stride *= p;
        if h % p != 0 || w % p != 0 {
            return Err(Error::Resolution(format!(
                "input {}x{} not divisible by cumulative stride {stride} at stage {}",
                input_hw.0,
                input_hw.1,
                s + 1
            )));
        }
        h /= p;
        w /= p;
        let d = st.dim as f64;
        let grid = (h * w) as f64;
        let cls = arch.class_token && s == 0;
        let n = grid + if cls { 1.0 } else { 0.0 };

        let mut flops = grid * d * (in_dim * p * p) as f64;
        let mut params = (in_dim * p * p) as f64 * d + d;
        if cls {
            // class token plus learned position embeddings
            params += d + n * d;
        }

        for (k, layer) in st.layers.iter().enumerate() {
            let a = layer.attn_dim;
            if layer.heads == 0 || a % u64::from(layer.heads) != 0 {
                return Err(Error::Divisibility(format!(
                    "stage {} layer {}: attention width {a} not divisible by {} heads",
                    s + 1,
                    k + 1,
                    layer.heads
                )));
            }
            let n_kv = match layer.op {
                OpKind::Block => n,
                OpKind::Local => n.min(opts.local_window as f64),
                OpKind::Global => {
                    let g = u64::from(opts.global_stride.unwrap_or(st.patch)).max(1);
                    (h.div_ceil(g) * w.div_ceil(g)) as f64
                }
            };
            let (a, m) = (a as f64, layer.mlp_dim as f64);
            flops += 3.0 * n * d * a + 2.0 * n * n_kv * a + n * a * d + 2.0 * n * d * m;
            params += 3.0 * (d * a + a) + (a * d + d) + (d * m + m) + (m * d + d) + 4.0 * d;
        }

        in_dim = st.dim;
        per_stage.push(StageCost { flops, params });
    }

    if let Some(last) = per_stage.last_mut() {
        let d = in_dim as f64;
        let c = opts.num_classes as f64;
        last.flops += d * c;
        last.params += d * c + c + 2.0 * d;
    }
    for sc in &mut per_stage {
        sc.flops /= 1e9;
        sc.params /= 1e6;
    }
    Ok(CostReport {
        flops: per_stage.iter().map(|s| s.flops).sum(),
        params: per_stage.iter().map(|s| s.params).sum(),
        per_stage,
    })
}

/// Cost of an encoding from `spec`, with default conventions.
pub fn estimate(spec: &SpaceSpec, arch: &ArchEncoding, input_hw: (u32, u32)) -> Result<CostReport> {
    estimate_with(spec, arch, input_hw, &CostOptions::default())
}

pub fn estimate_with(
    spec: &SpaceSpec,
    arch: &ArchEncoding,
    input_hw: (u32, u32),
    opts: &CostOptions,
) -> Result<CostReport> {
    estimate_resolved(&resolve(spec, arch)?, input_hw, opts)
}

pub fn check_budget(spec: &SpaceSpec, arch: &ArchEncoding, input_hw: (u32, u32), budget_gflops: f64) -> Result<bool> {
    Ok(estimate(spec, arch, input_hw)?.flops <= budget_gflops)
}

/// Every combination of one index per list, in odometer order.
fn index_product(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &n in sizes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..n).map(move |i| {
                    let mut v = prefix.clone();
                    v.push(i);
                    v
                })
            })
            .collect();
    }
    out
}

/// Cheapest and most expensive architectures of a space.
///
/// The minimum is all-Identity with the smallest embedding ratios; the
/// maximum is full depth with the largest ratios. Cost is monotone in
/// those, but not in patch size or op kind, so those are searched over
/// (ties broken by parameter count).
pub fn min_max_cost(spec: &SpaceSpec, input_hw: (u32, u32)) -> Result<(CostReport, CostReport)> {
    let patch_sizes: Vec<usize> = spec.stages.iter().map(|s| s.embed.patch_choices.len()).collect();
    let op_sizes: Vec<usize> = spec.stages.iter().map(|s| s.ops.len().max(1)).collect();
    let key = |r: &CostReport| (r.flops, r.params);
    let mut lo: Option<CostReport> = None;
    let mut hi: Option<CostReport> = None;

    for patches in index_product(&patch_sizes) {
        let mut min_arch = ArchEncoding::minimal(spec);
        for (sc, &p) in min_arch.stages.iter_mut().zip(&patches) {
            sc.patch = p;
        }
        let min_arch = ArchEncoding::new(spec, min_arch.stages)?;
        let r = estimate(spec, &min_arch, input_hw)?;
        if lo.as_ref().is_none_or(|b| key(&r) < key(b)) {
            lo = Some(r);
        }

        for ops in index_product(&op_sizes) {
            let mut max_arch = ArchEncoding::maximal(spec);
            for ((sc, &p), &o) in max_arch.stages.iter_mut().zip(&patches).zip(&ops) {
                sc.patch = p;
                for layer in &mut sc.layers {
                    if let LayerChoice::Op { op, .. } = layer {
                        *op = o;
                    }
                }
            }
            let max_arch = ArchEncoding::new(spec, max_arch.stages)?;
            let r = estimate(spec, &max_arch, input_hw)?;
            if hi.as_ref().is_none_or(|b| key(&r) > key(b)) {
                hi = Some(r);
            }
        }
    }
    Ok((lo.expect("at least one patch combination"), hi.expect("at least one patch combination")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{load_space, parse_space_spec};

    const HW: (u32, u32) = (224, 224);

    #[test]
    fn deit_references() {
        let opts = CostOptions::default();
        let t = estimate_resolved(&ResolvedArch::deit_tiny(), HW, &opts).unwrap();
        let s = estimate_resolved(&ResolvedArch::deit_small(), HW, &opts).unwrap();
        assert!((t.flops - 1.3).abs() <= 0.13, "{}", t.flops);
        assert!((s.flops - 4.6).abs() <= 0.46, "{}", s.flops);
        assert!((t.params - 5.7).abs() < 0.2, "{}", t.params);
        assert!((s.params - 22.1).abs() < 0.5, "{}", s.params);
    }

    #[test]
    fn embeddings_only() {
        let spec = load_space("deit-tiny").unwrap();
        let arch = ArchEncoding::minimal(&spec);
        let r = estimate(&spec, &arch, HW).unwrap();
        // patch 14 → 16×16 tokens, width 384/10 → 38
        let expected = (256.0 * 38.0 * 3.0 * 196.0 + 38.0 * 1000.0) / 1e9;
        assert!((r.flops - expected).abs() < 1e-15, "{} vs {expected}", r.flops);
    }

    #[test]
    fn resolution_must_divide() {
        let spec = load_space("deit-tiny").unwrap();
        let arch = ArchEncoding::minimal(&spec);
        assert!(matches!(estimate(&spec, &arch, (225, 224)), Err(Error::Resolution(_))));
    }

    #[test]
    fn indivisible_heads() {
        let mut arch = ResolvedArch::deit_tiny();
        arch.stages[0].layers[0].heads = 5;
        let e = estimate_resolved(&arch, HW, &CostOptions::default());
        assert!(matches!(e, Err(Error::Divisibility(_))));
    }

    #[test]
    fn budget_edges() {
        let spec = load_space("twins-small").unwrap();
        let arch = ArchEncoding::maximal(&spec);
        assert!(check_budget(&spec, &arch, HW, f64::INFINITY).unwrap());
        assert!(!check_budget(&spec, &ArchEncoding::minimal(&spec), HW, 0.0).unwrap());
    }

    #[test]
    fn min_below_max() {
        for name in ["twins-small", "deit-small"] {
            let spec = load_space(name).unwrap();
            let (lo, hi) = min_max_cost(&spec, HW).unwrap();
            assert!(lo.flops < hi.flops && lo.params < hi.params);
            assert!(hi.flops.is_finite() && hi.params.is_finite());
        }
    }

    #[test]
    fn ranges_against_published_figures() {
        let within = |ours: f64, theirs: f64| ours / theirs <= 2.0 && theirs / ours <= 2.0;
        let (lo, hi) = min_max_cost(&load_space("twins-small").unwrap(), HW).unwrap();
        eprintln!(
            "twins-small: min {:.4}G/{:.3}M (published 0.02G/0.16M), max {:.2}G/{:.1}M (published 11.2G/86.1M)",
            lo.flops, lo.params, hi.flops, hi.params
        );
        assert!(within(hi.flops, 11.2) && within(hi.params, 86.1));
        assert!(within(lo.params, 0.16));
        // Depth-0 stages make our minimum cheaper than the published one.
        assert!(lo.flops < 0.02);

        let (_, hi) = min_max_cost(&load_space("deit-small").unwrap(), HW).unwrap();
        eprintln!("deit-small: max {:.2}G/{:.1}M (published 20.0G/97.5M)", hi.flops, hi.params);
        assert!(within(hi.params, 97.5));
    }

    #[test]
    fn global_subsamples_keys() {
        let text = "family = twins\n[stage]\nembed_patch = 4\nembed_max_dim = 64\nlayers = 1\n\
                    ops = local,global\nheads = 1\nmax_attn_dim = 192\nmax_mlp_dim = 64\n\
                    attn_ratios = 1\nmlp_ratios = 1\n";
        let spec = parse_space_spec(text).unwrap();
        let mut arch = ArchEncoding::maximal(&spec);
        let global = estimate(&spec, &arch, HW).unwrap().flops;
        if let LayerChoice::Op { op, .. } = &mut arch.stages[0].layers[0] {
            *op = 0;
        }
        let local = estimate(&spec, &arch, HW).unwrap().flops;
        // 56×56 tokens; global sees 14×14 = 196 keys, local 49.
        let n = 3136.0;
        let diff = 2.0 * n * (196.0 - 49.0) * 64.0 / 1e9;
        assert!((global - local - diff).abs() < 1e-12);
    }
}
