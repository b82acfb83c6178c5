use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};

use crate::cost::CostReport;
use crate::error::{Error, Result};
use crate::mapping::{build_cyclic, ChannelMapping};
use crate::space::{encode, ArchEncoding, LayerChoice, SpaceSpec};

/// Scores an architecture; higher is better. Must be deterministic for a
/// given encoding because results are cached and searches are replayed.
pub trait Evaluator: Sync {
    fn score(&self, arch: &ArchEncoding, cost: &CostReport) -> Result<f64>;
}

impl<F> Evaluator for F
where
    F: Fn(&ArchEncoding, &CostReport) -> Result<f64> + Sync,
{
    fn score(&self, arch: &ArchEncoding, cost: &CostReport) -> Result<f64> {
        self(arch, cost)
    }
}

/// Fraction `(i+1)/n` of a choice index, so the smallest choice is `1/n`.
fn frac(i: usize, n: usize) -> f64 {
    (i + 1) as f64 / n as f64
}

/// Smooth synthetic score for exercising the search without a trainer.
///
/// Each parametric layer contributes `sqrt(attn · mlp)` of its width
/// fractions, saturating through `1 − exp(−x)`; wider embeddings and more
/// heads add small bonuses. Scores lie in `[0, 100)`.
#[derive(Debug, Clone)]
pub struct ProxyEvaluator {
    spec: SpaceSpec,
}

impl ProxyEvaluator {
    pub fn new(spec: &SpaceSpec) -> Self {
        ProxyEvaluator { spec: spec.clone() }
    }
}

impl Evaluator for ProxyEvaluator {
    fn score(&self, arch: &ArchEncoding, _cost: &CostReport) -> Result<f64> {
        arch.check_space(&self.spec)?;
        let total_layers = self.spec.total_layers().max(1) as f64;
        let mut capacity = 0.0;
        let mut embed = 0.0;
        let mut heads = 0.0;
        for (st, sc) in self.spec.stages.iter().zip(&arch.stages) {
            embed += frac(sc.embed_ratio, st.embed.ratio_choices.len());
            for layer in &sc.layers {
                if let LayerChoice::Op { heads: h, attn, mlp, .. } = *layer {
                    capacity += (frac(attn, st.attn_ratios.len()) * frac(mlp, st.mlp_ratios.len())).sqrt();
                    heads += frac(h, st.heads.len());
                }
            }
        }
        let stages = self.spec.stages.len() as f64;
        let body = 1.0 - (-3.0 * capacity / total_layers).exp();
        Ok(90.0 * body + 7.0 * embed / stages + 3.0 * heads / total_layers)
    }
}

/// Scores how evenly the widths an architecture picks would train the
/// channel groups of a cyclic weight-sharing pattern.
///
/// Every ratio choice `i` out of `n` is read as width `i+1` over `n`
/// groups; the ψ = 1/j influence of each pick is accumulated per group and
/// the score is `1 / (1 + cv)` of the accumulated influence, averaged over
/// group counts and weighted by number of picks.
#[derive(Debug, Clone)]
pub struct InfluenceEvaluator {
    spec: SpaceSpec,
    mappings: BTreeMap<usize, ChannelMapping>,
}

impl InfluenceEvaluator {
    pub fn new(spec: &SpaceSpec) -> Result<Self> {
        let mut mappings = BTreeMap::new();
        for st in &spec.stages {
            let mut sizes = vec![st.embed.ratio_choices.len()];
            if st.layers > 0 {
                sizes.extend([st.attn_ratios.len(), st.mlp_ratios.len()]);
            }
            for l in sizes {
                if let std::collections::btree_map::Entry::Vacant(e) = mappings.entry(l) {
                    e.insert(build_cyclic(l, true)?);
                }
            }
        }
        Ok(InfluenceEvaluator { spec: spec.clone(), mappings })
    }
}

impl Evaluator for InfluenceEvaluator {
    fn score(&self, arch: &ArchEncoding, _cost: &CostReport) -> Result<f64> {
        arch.check_space(&self.spec)?;
        let mut acc: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
        let mut pick = |l: usize, idx: usize| {
            let mapping = &self.mappings[&l];
            let width = idx + 1;
            let (v, n) = acc.entry(l).or_insert_with(|| (vec![0.0; l], 0));
            for g in mapping.beta().groups_for(width) {
                v[g] += 1.0 / width as f64;
            }
            *n += 1;
        };
        for (st, sc) in self.spec.stages.iter().zip(&arch.stages) {
            pick(st.embed.ratio_choices.len(), sc.embed_ratio);
            for layer in &sc.layers {
                if let LayerChoice::Op { attn, mlp, .. } = *layer {
                    pick(st.attn_ratios.len(), attn);
                    pick(st.mlp_ratios.len(), mlp);
                }
            }
        }
        let mut num = 0.0;
        let mut den = 0usize;
        for (v, n) in acc.values() {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
            num += *n as f64 / (1.0 + var.sqrt() / mean);
            den += n;
        }
        Ok(if den == 0 { 0.0 } else { num / den as f64 })
    }
}

/// Runs an external program once per architecture. The encoding's text
/// form is written to its stdin; the first non-empty stdout line must be a
/// number.
#[derive(Debug, Clone)]
pub struct CommandEvaluator {
    program: PathBuf,
}

impl CommandEvaluator {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        CommandEvaluator { program: program.into() }
    }
}

impl Evaluator for CommandEvaluator {
    fn score(&self, arch: &ArchEncoding, _cost: &CostReport) -> Result<f64> {
        let fail = |msg: String| Error::Evaluator(format!("{}: {msg}", self.program.display()));
        let mut child = Command::new(&self.program)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| fail(e.to_string()))?;
        {
            let mut stdin = child.stdin.take().expect("stdin is piped");
            // A program that exits without reading stdin is fine.
            let _ = writeln!(stdin, "{}", encode(arch));
        }
        let out = child.wait_with_output().map_err(|e| fail(e.to_string()))?;
        if !out.status.success() {
            return Err(fail(format!("exited with {}", out.status)));
        }
        let text = String::from_utf8_lossy(&out.stdout);
        let line = text.lines().map(str::trim).find(|l| !l.is_empty()).ok_or_else(|| fail("no output".into()))?;
        let score: f64 = line.parse().map_err(|_| fail(format!("`{line}` is not a number")))?;
        if !score.is_finite() {
            return Err(fail(format!("non-finite score {score}")));
        }
        Ok(score)
    }
}
