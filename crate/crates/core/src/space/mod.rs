//! Transformer search spaces: specification, architecture encodings,
//! identity-shifting canonicalization, exact counting and uniform sampling.
//!
//! A [`SpaceSpec`] is a list of stages. Every stage starts with a patch
//! embedding (never skippable) followed by `layers` to-be-searched slots.
//! Each slot picks either Identity or a parametric op together with a head
//! count, an attention-width ratio and an MLP-width ratio.

mod canonical;
mod config;
mod encode;

pub use canonical::{canonicalize, count_space, is_canonical, sample_uniform, sample_with, SpaceCount};
pub use config::{builtin_names, builtin_source, load_space, parse_space_spec};
pub use encode::{decode, encode, GeneLayout, GENES_PER_LAYER};

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

/// Exact width ratio such as `3/10`.
pub type DimRatio = Ratio<u64>;

/// Which macro architecture a space is built around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Family {
    /// Pyramid of stages with local and global attention layers.
    TwinsLike,
    /// Single isotropic stage of MHSA+MLP blocks with a class token.
    DeiTLike,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::TwinsLike => "twins",
            Family::DeiTLike => "deit",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "twins" | "twinslike" => Ok(Family::TwinsLike),
            "deit" | "deitlike" => Ok(Family::DeiTLike),
            other => Err(Error::invalid(format!("unknown family `{other}`"))),
        }
    }
}

/// Parametric operation kinds a TBS slot may choose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum OpKind {
    /// Windowed self-attention followed by an MLP.
    Local,
    /// Self-attention over sub-sampled keys/values followed by an MLP.
    Global,
    /// Full multi-head self-attention followed by an MLP.
    Block,
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OpKind::Local => "local",
            OpKind::Global => "global",
            OpKind::Block => "block",
        })
    }
}

impl FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "local" => Ok(OpKind::Local),
            "global" => Ok(OpKind::Global),
            "block" | "mhsa+mlp" => Ok(OpKind::Block),
            other => Err(Error::invalid(format!("unknown op `{other}`"))),
        }
    }
}

/// Patch-embedding choices of one stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbedSpec {
    pub patch_choices: Vec<u32>,
    pub max_dim: u64,
    pub ratio_choices: Vec<DimRatio>,
}

impl EmbedSpec {
    pub fn choices(&self) -> usize {
        self.patch_choices.len() * self.ratio_choices.len()
    }
}

/// One stage of a space: an embedding plus `layers` searchable slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSpec {
    pub embed: EmbedSpec,
    pub layers: usize,
    pub ops: Vec<OpKind>,
    pub heads: Vec<u32>,
    pub max_attn_dim: u64,
    pub max_mlp_dim: u64,
    pub attn_ratios: Vec<DimRatio>,
    pub mlp_ratios: Vec<DimRatio>,
}

impl StageSpec {
    /// Number of parametric combinations per slot (Identity excluded).
    pub fn per_layer_choices(&self) -> usize {
        if self.layers == 0 {
            return 0;
        }
        self.ops.len() * self.heads.len() * self.attn_ratios.len() * self.mlp_ratios.len()
    }

    /// Inner attention width for a ratio/heads pair; `max_attn_dim` is the
    /// fused Q/K/V width, so the per-projection width is a third of it.
    pub fn attn_inner_dim(&self, ratio: DimRatio) -> u64 {
        (Ratio::from_integer(self.max_attn_dim) * ratio / 3).to_integer()
    }

    /// MLP hidden width, rounded to the nearest integer (at least 1) since
    /// tables such as `512 × 1/10` do not divide evenly.
    pub fn mlp_hidden_dim(&self, ratio: DimRatio) -> u64 {
        round_dim(self.max_mlp_dim, ratio)
    }
}

impl EmbedSpec {
    /// Embedding width for a ratio, rounded to nearest (at least 1).
    pub fn dim(&self, ratio: DimRatio) -> u64 {
        round_dim(self.max_dim, ratio)
    }
}

fn round_dim(max: u64, ratio: DimRatio) -> u64 {
    (Ratio::from_integer(max) * ratio).round().to_integer().max(1)
}

/// A complete, validated search space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceSpec {
    pub name: String,
    pub family: Family,
    pub class_token: bool,
    pub in_channels: u32,
    pub stages: Vec<StageSpec>,
}

fn check_ratios(ctx: &str, field: &str, ratios: &[DimRatio]) -> Result<()> {
    let bad = |message: String| Error::Validation { context: ctx.to_string(), message };
    if ratios.is_empty() {
        return Err(bad(format!("`{field}` is empty")));
    }
    for r in ratios {
        if r <= &DimRatio::zero() || r > &DimRatio::one() {
            return Err(bad(format!("`{field}` value {r} outside (0, 1]")));
        }
    }
    if ratios.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad(format!("`{field}` must be strictly increasing")));
    }
    Ok(())
}

impl SpaceSpec {
    /// Checks every structural invariant; called by the parser.
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Validation { context: self.name.clone(), message: "space has no stages".into() });
        }
        if self.class_token && self.family != Family::DeiTLike {
            return Err(Error::Validation {
                context: self.name.clone(),
                message: "class_token is only meaningful for deit spaces".into(),
            });
        }
        if self.in_channels == 0 {
            return Err(Error::Validation {
                context: self.name.clone(),
                message: "in_channels must be positive".into(),
            });
        }
        for (s, st) in self.stages.iter().enumerate() {
            let ctx = format!("stage {}", s + 1);
            let bad = |message: String| Error::Validation { context: ctx.clone(), message };
            if st.embed.patch_choices.is_empty() || st.embed.patch_choices.contains(&0) {
                return Err(bad("`embed_patch` needs positive choices".into()));
            }
            if st.embed.max_dim == 0 {
                return Err(bad("`embed_max_dim` must be positive".into()));
            }
            check_ratios(&ctx, "embed_ratios", &st.embed.ratio_choices)?;
            if st.layers == 0 {
                continue;
            }
            if st.ops.is_empty() {
                return Err(bad("`ops` is empty".into()));
            }
            for op in &st.ops {
                let ok = match self.family {
                    Family::TwinsLike => matches!(op, OpKind::Local | OpKind::Global),
                    Family::DeiTLike => matches!(op, OpKind::Block),
                };
                if !ok {
                    return Err(bad(format!("op `{op}` not allowed in a {} space", self.family)));
                }
            }
            if st.heads.is_empty() || st.heads.contains(&0) {
                return Err(bad("`heads` needs positive choices".into()));
            }
            if st.max_attn_dim == 0 || st.max_mlp_dim == 0 {
                return Err(bad("max dims must be positive".into()));
            }
            check_ratios(&ctx, "attn_ratios", &st.attn_ratios)?;
            check_ratios(&ctx, "mlp_ratios", &st.mlp_ratios)?;
            for &r in &st.attn_ratios {
                let width = Ratio::from_integer(st.max_attn_dim) * r;
                for &h in &st.heads {
                    let unit = 3 * u64::from(h);
                    if !width.is_integer() || width.to_integer() % unit != 0 {
                        return Err(bad(format!(
                            "max_attn_dim {} × {r} is not divisible by 3 × {h} heads",
                            st.max_attn_dim
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn total_layers(&self) -> usize {
        self.stages.iter().map(|s| s.layers).sum()
    }
}

/// Choice made for one searchable slot. Indices point into the stage's
/// choice lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum LayerChoice {
    Identity,
    Op { op: usize, heads: usize, attn: usize, mlp: usize },
}

impl LayerChoice {
    pub fn is_identity(&self) -> bool {
        matches!(self, LayerChoice::Identity)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct StageChoice {
    pub patch: usize,
    pub embed_ratio: usize,
    pub layers: Vec<LayerChoice>,
}

/// One concrete architecture drawn from a [`SpaceSpec`].
///
/// `class_token` is the patch size the private class token belongs to
/// (DeiT-like spaces only); it is derived from the first stage's patch
/// choice and takes part in equality and hashing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ArchEncoding {
    pub space: String,
    pub stages: Vec<StageChoice>,
    pub class_token: Option<u32>,
}

impl ArchEncoding {
    /// Builds an encoding after checking every index against `spec`.
    pub fn new(spec: &SpaceSpec, stages: Vec<StageChoice>) -> Result<Self> {
        check_indices(spec, &stages)?;
        let class_token = spec.class_token.then(|| spec.stages[0].embed.patch_choices[stages[0].patch]);
        Ok(ArchEncoding { space: spec.name.clone(), stages, class_token })
    }

    /// Smallest choice everywhere: minimal embeddings, all Identity.
    pub fn minimal(spec: &SpaceSpec) -> Self {
        let stages = spec
            .stages
            .iter()
            .map(|st| StageChoice { patch: 0, embed_ratio: 0, layers: vec![LayerChoice::Identity; st.layers] })
            .collect();
        ArchEncoding::new(spec, stages).expect("minimal encoding is always in range")
    }

    /// Full depth with the largest index in every field.
    pub fn maximal(spec: &SpaceSpec) -> Self {
        let stages = spec
            .stages
            .iter()
            .map(|st| StageChoice {
                patch: st.embed.patch_choices.len() - 1,
                embed_ratio: st.embed.ratio_choices.len() - 1,
                layers: vec![
                    LayerChoice::Op {
                        op: st.ops.len().saturating_sub(1),
                        heads: st.heads.len().saturating_sub(1),
                        attn: st.attn_ratios.len().saturating_sub(1),
                        mlp: st.mlp_ratios.len().saturating_sub(1),
                    };
                    st.layers
                ],
            })
            .collect();
        ArchEncoding::new(spec, stages).expect("maximal encoding is always in range")
    }

    /// Errors unless this encoding belongs to `spec`.
    pub fn check_space(&self, spec: &SpaceSpec) -> Result<()> {
        if self.space != spec.name {
            return Err(Error::IncompatibleArch(format!(
                "encoding from `{}` used with space `{}`",
                self.space, spec.name
            )));
        }
        check_indices(spec, &self.stages).map_err(|e| Error::IncompatibleArch(e.to_string()))
    }

    pub fn depth(&self) -> usize {
        self.stages.iter().flat_map(|s| &s.layers).filter(|l| !l.is_identity()).count()
    }
}

fn check_indices(spec: &SpaceSpec, stages: &[StageChoice]) -> Result<()> {
    let oob = |field: String, got: usize, n: usize| Error::Decode {
        field,
        message: format!("index {got} out of range 0..{n}"),
    };
    if stages.len() != spec.stages.len() {
        return Err(Error::Decode {
            field: "stages".into(),
            message: format!("expected {} stages, got {}", spec.stages.len(), stages.len()),
        });
    }
    for (s, (sc, st)) in stages.iter().zip(&spec.stages).enumerate() {
        let s = s + 1;
        if sc.patch >= st.embed.patch_choices.len() {
            return Err(oob(format!("stage{s}.patch"), sc.patch, st.embed.patch_choices.len()));
        }
        if sc.embed_ratio >= st.embed.ratio_choices.len() {
            return Err(oob(format!("stage{s}.embed_ratio"), sc.embed_ratio, st.embed.ratio_choices.len()));
        }
        if sc.layers.len() != st.layers {
            return Err(Error::Decode {
                field: format!("stage{s}.layers"),
                message: format!("expected {} layers, got {}", st.layers, sc.layers.len()),
            });
        }
        for (k, layer) in sc.layers.iter().enumerate() {
            if let LayerChoice::Op { op, heads, attn, mlp } = *layer {
                let k = k + 1;
                for (name, got, n) in [
                    ("op", op, st.ops.len()),
                    ("heads", heads, st.heads.len()),
                    ("attn", attn, st.attn_ratios.len()),
                    ("mlp", mlp, st.mlp_ratios.len()),
                ] {
                    if got >= n {
                        return Err(oob(format!("stage{s}.layer{k}.{name}"), got, n));
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        for name in builtin_names() {
            let spec = load_space(name).unwrap();
            spec.validate().unwrap();
        }
    }

    #[test]
    fn minimal_and_maximal_are_in_range() {
        let spec = load_space("deit-tiny").unwrap();
        let lo = ArchEncoding::minimal(&spec);
        let hi = ArchEncoding::maximal(&spec);
        assert_eq!(lo.depth(), 0);
        assert_eq!(hi.depth(), 14);
        assert_eq!(lo.class_token, Some(14));
        assert_eq!(hi.class_token, Some(32));
    }

    #[test]
    fn class_token_distinguishes_encodings() {
        let spec = load_space("deit-small").unwrap();
        let mut a = ArchEncoding::minimal(&spec);
        let b = a.clone();
        a.class_token = Some(16);
        assert_ne!(a, b);
    }

    #[test]
    fn indivisible_attention_width_is_rejected() {
        let text = "name = bad\nfamily = twins\n[stage]\nembed_patch = 4\nembed_max_dim = 64\n\
                    layers = 1\nops = local\nheads = 7\nmax_attn_dim = 480\nmax_mlp_dim = 64\n\
                    attn_ratios = 1/2\nmlp_ratios = 1/2\n";
        let err = parse_space_spec(text).unwrap_err();
        match err {
            Error::Validation { context, .. } => assert_eq!(context, "stage 1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn check_space_rejects_foreign_encoding() {
        let a = load_space("twins-small").unwrap();
        let b = load_space("deit-small").unwrap();
        let arch = ArchEncoding::minimal(&a);
        assert!(matches!(arch.check_space(&b), Err(Error::IncompatibleArch(_))));
    }
}
