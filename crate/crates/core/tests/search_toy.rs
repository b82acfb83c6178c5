//! NSGA-II against an exhaustively enumerated toy space.

use vitas_core::cost::estimate;
use vitas_core::search::{hypervolume_2d, nondominated_sort, nsga2_search, SearchConfig};
use vitas_core::space::{parse_space_spec, ArchEncoding, LayerChoice, SpaceSpec, StageChoice};
use vitas_core::Result;

const TOY: &str = "name = toy\nfamily = twins\n[stage]\nembed_patch = 4\nembed_max_dim = 64\n\
                   embed_ratios = 1/2,1\nlayers = 3\nops = local\nheads = 1\nmax_attn_dim = 36\n\
                   max_mlp_dim = 128\nattn_ratios = 1/3,2/3,1\nmlp_ratios = 1/4,1/2,1\n";

/// All canonical encodings, built independently of the crate's sampler.
fn enumerate(spec: &SpaceSpec) -> Vec<ArchEncoding> {
    let st = &spec.stages[0];
    let combos: Vec<LayerChoice> = (0..st.attn_ratios.len())
        .flat_map(|a| (0..st.mlp_ratios.len()).map(move |m| LayerChoice::Op { op: 0, heads: 0, attn: a, mlp: m }))
        .collect();
    let mut prefixes: Vec<Vec<LayerChoice>> = vec![vec![]];
    let mut all = Vec::new();
    for depth in 0..=st.layers {
        for p in &prefixes {
            let mut layers = p.clone();
            layers.resize(st.layers, LayerChoice::Identity);
            for e in 0..st.embed.ratio_choices.len() {
                all.push(
                    ArchEncoding::new(spec, vec![StageChoice { patch: 0, embed_ratio: e, layers: layers.clone() }])
                        .unwrap(),
                );
            }
        }
        if depth < st.layers {
            prefixes = prefixes
                .iter()
                .flat_map(|p| {
                    combos.iter().map(move |c| {
                        let mut q = p.clone();
                        q.push(*c);
                        q
                    })
                })
                .collect();
        }
    }
    all
}

fn synthetic(arch: &ArchEncoding, flops: f64) -> f64 {
    // Concave in FLOPs with a deterministic per-architecture penalty.
    let mut h = 0u64;
    for l in &arch.stages[0].layers {
        h = h * 31
            + match *l {
                LayerChoice::Identity => 0,
                LayerChoice::Op { attn, mlp, .. } => 1 + 3 * attn + mlp,
            } as u64;
    }
    h = h * 31 + arch.stages[0].embed_ratio as u64;
    (flops * 100.0).sqrt() * (1.0 - 0.15 * ((h % 11) as f64 / 10.0))
}

#[test]
fn toy_front_hypervolume() {
    let spec = parse_space_spec(TOY).unwrap();
    let all = enumerate(&spec);
    assert_eq!(all.len(), 2 * (1 + 9 + 81 + 729));
    let hw = (224, 224);
    let pts: Vec<(f64, f64)> = all
        .iter()
        .map(|a| {
            let f = estimate(&spec, a, hw).unwrap().flops;
            (synthetic(a, f), f)
        })
        .collect();
    let max_f = pts.iter().map(|p| p.1).fold(0.0, f64::max);
    let budget = 0.6 * max_f;
    let feasible: Vec<Vec<f64>> = pts.iter().filter(|p| p.1 <= budget).map(|p| vec![p.0, -p.1]).collect();
    let front = &nondominated_sort(&feasible)[0];
    let true_pts: Vec<(f64, f64)> = front.iter().map(|&i| (feasible[i][0], -feasible[i][1])).collect();
    let true_hv = hypervolume_2d(&true_pts, 0.0, budget);

    let ev = |a: &ArchEncoding, c: &vitas_core::cost::CostReport| -> Result<f64> { Ok(synthetic(a, c.flops)) };
    let cfg = SearchConfig { seed: 7, ..SearchConfig::new(budget) };
    let r = nsga2_search(&spec, &cfg, &ev).unwrap();
    let hv = r.hypervolume(0.0, budget);
    eprintln!(
        "true front {} pts hv {true_hv:.6}; found {} pts hv {hv:.6} ratio {:.4}",
        true_pts.len(),
        r.front.len(),
        hv / true_hv
    );
    assert!(hv >= 0.95 * true_hv);
}
