//! Flat integer form of an [`ArchEncoding`].
//!
//! Each stage contributes `patch, embed_ratio` followed by four genes per
//! slot: `op, heads, attn, mlp`, where op `0` is Identity and `k ≥ 1`
//! selects `ops[k-1]`. Identity slots carry zeros in the remaining three
//! genes. Stages are separated by `|` in the text form.

use super::{ArchEncoding, LayerChoice, SpaceSpec, StageChoice};
use crate::error::{Error, Result};

/// Per-gene cardinalities of a space, in flattening order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneLayout {
    /// Number of choices for every gene.
    pub cardinality: Vec<usize>,
    /// Gene index where each stage starts.
    pub stage_start: Vec<usize>,
}

pub const GENES_PER_LAYER: usize = 4;

impl GeneLayout {
    pub fn new(spec: &SpaceSpec) -> Self {
        let mut cardinality = Vec::new();
        let mut stage_start = Vec::new();
        for st in &spec.stages {
            stage_start.push(cardinality.len());
            cardinality.push(st.embed.patch_choices.len());
            cardinality.push(st.embed.ratio_choices.len());
            for _ in 0..st.layers {
                cardinality.extend([st.ops.len() + 1, st.heads.len(), st.attn_ratios.len(), st.mlp_ratios.len()]);
            }
        }
        GeneLayout { cardinality, stage_start }
    }

    pub fn len(&self) -> usize {
        self.cardinality.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cardinality.is_empty()
    }

    /// Flattens an encoding into genes.
    pub fn to_genes(&self, arch: &ArchEncoding) -> Vec<usize> {
        let mut g = Vec::with_capacity(self.len());
        for stage in &arch.stages {
            g.push(stage.patch);
            g.push(stage.embed_ratio);
            for layer in &stage.layers {
                match *layer {
                    LayerChoice::Identity => g.extend([0, 0, 0, 0]),
                    LayerChoice::Op { op, heads, attn, mlp } => g.extend([op + 1, heads, attn, mlp]),
                }
            }
        }
        g
    }

    /// Rebuilds an encoding from genes. Sub-genes of Identity slots are
    /// ignored, so any in-range gene vector is accepted.
    pub fn from_genes(&self, spec: &SpaceSpec, genes: &[usize]) -> Result<ArchEncoding> {
        if genes.len() != self.len() {
            return Err(Error::LengthMismatch { left: genes.len(), right: self.len() });
        }
        let mut stages = Vec::with_capacity(spec.stages.len());
        for (st, &start) in spec.stages.iter().zip(&self.stage_start) {
            let layers = (0..st.layers)
                .map(|k| {
                    let g = &genes[start + 2 + GENES_PER_LAYER * k..][..GENES_PER_LAYER];
                    if g[0] == 0 {
                        LayerChoice::Identity
                    } else {
                        LayerChoice::Op { op: g[0] - 1, heads: g[1], attn: g[2], mlp: g[3] }
                    }
                })
                .collect();
            stages.push(StageChoice { patch: genes[start], embed_ratio: genes[start + 1], layers });
        }
        ArchEncoding::new(spec, stages)
    }
}

/// Text form: comma-separated genes per stage, stages joined by `|`.
pub fn encode(arch: &ArchEncoding) -> String {
    arch.stages
        .iter()
        .map(|stage| {
            let mut g = vec![stage.patch, stage.embed_ratio];
            for layer in &stage.layers {
                match *layer {
                    LayerChoice::Identity => g.extend([0, 0, 0, 0]),
                    LayerChoice::Op { op, heads, attn, mlp } => g.extend([op + 1, heads, attn, mlp]),
                }
            }
            g.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
        })
        .collect::<Vec<_>>()
        .join("|")
}

/// Parses the text form against `spec`, rejecting out-of-range indices and
/// non-zero sub-genes on Identity slots.
pub fn decode(spec: &SpaceSpec, text: &str) -> Result<ArchEncoding> {
    let parts: Vec<&str> = text.trim().split('|').collect();
    if parts.len() != spec.stages.len() {
        return Err(Error::Decode {
            field: "stages".into(),
            message: format!("expected {} stages, got {}", spec.stages.len(), parts.len()),
        });
    }
    let mut stages = Vec::with_capacity(parts.len());
    for (s, (part, st)) in parts.iter().zip(&spec.stages).enumerate() {
        let s = s + 1;
        let genes = part
            .split(',')
            .enumerate()
            .map(|(i, tok)| {
                tok.trim().parse::<usize>().map_err(|_| Error::Decode {
                    field: format!("stage{s}[{i}]"),
                    message: format!("`{}` is not a non-negative integer", tok.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let want = 2 + GENES_PER_LAYER * st.layers;
        if genes.len() != want {
            return Err(Error::Decode {
                field: format!("stage{s}"),
                message: format!("expected {want} indices, got {}", genes.len()),
            });
        }
        let mut layers = Vec::with_capacity(st.layers);
        for (k, g) in genes[2..].chunks(GENES_PER_LAYER).enumerate() {
            let k = k + 1;
            if g[0] > st.ops.len() {
                return Err(Error::Decode {
                    field: format!("stage{s}.layer{k}.op"),
                    message: format!("index {} out of range 0..{}", g[0], st.ops.len() + 1),
                });
            }
            if g[0] == 0 {
                if let Some(pos) = g[1..].iter().position(|&v| v != 0) {
                    let name = ["heads", "attn", "mlp"][pos];
                    return Err(Error::Decode {
                        field: format!("stage{s}.layer{k}.{name}"),
                        message: "must be 0 on an identity slot".into(),
                    });
                }
                layers.push(LayerChoice::Identity);
            } else {
                layers.push(LayerChoice::Op { op: g[0] - 1, heads: g[1], attn: g[2], mlp: g[3] });
            }
        }
        stages.push(StageChoice { patch: genes[0], embed_ratio: genes[1], layers });
    }
    ArchEncoding::new(spec, stages)
}
