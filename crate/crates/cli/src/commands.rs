use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use serde_json::json;
use vitas_core::cost::{estimate, estimate_resolved, CostOptions, CostReport, ResolvedArch};
use vitas_core::mapping::{
    build_bilateral, build_cyclic, build_ordinal, enumerate_optimal, metrics, parse_mapping, refine_local_search,
    write_mapping, ChannelMapping,
};
use vitas_core::rank::{grouped_budget_eval, uniform_budgets};
use vitas_core::search::{
    nsga2_search, CommandEvaluator, Evaluator, Individual, InfluenceEvaluator, Objectives, ProxyEvaluator, SearchConfig,
};
use vitas_core::simshare::{simulate_traced, SideSchedule};
use vitas_core::space::{
    builtin_source, canonicalize, count_space, decode, encode, parse_space_spec, sample_with, ArchEncoding, SpaceSpec,
};
use vitas_core::{Error, Metrics};

use crate::args::{
    CostArgs, KindArg, MappingCommand, RankArgs, Reference, SearchArgs, Seed, SimulateArgs, SpaceCommand,
};

/// A failed command together with its exit code.
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

impl Failure {
    fn validation(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: EXIT_VALIDATION, error: error.into() }
    }

    fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: EXIT_RUNTIME, error: error.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::validation(e)
        } else {
            Failure::runtime(e)
        }
    }
}

pub type CmdResult = Result<String, Failure>;

/// Process environment the commands may consult.
#[derive(Debug, Clone, Default)]
pub struct Env {
    /// Value of `VITAS_KIT_SEED`, the seed used when `--seed` is absent.
    pub seed: Option<String>,
}

impl Env {
    fn seed(&self, flag: &Seed) -> Result<u64, Failure> {
        match (flag.seed, &self.seed) {
            (Some(s), _) => Ok(s),
            (None, None) => Ok(0),
            (None, Some(text)) => text.trim().parse().map_err(|_| {
                Failure::validation(anyhow::anyhow!("VITAS_KIT_SEED=`{text}` is not an unsigned integer"))
            }),
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> CmdResult {
    let mut s = serde_json::to_string_pretty(value).map_err(Failure::runtime)?;
    s.push('\n');
    Ok(s)
}

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).map_err(Failure::validation)
}

fn write_output(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display())).map_err(Failure::runtime)
}

fn construct(kind: KindArg, l: usize, contiguous: bool) -> Result<ChannelMapping, Failure> {
    Ok(match kind {
        KindArg::Ordinal => build_ordinal(l)?,
        KindArg::Bilateral => build_bilateral(l)?,
        KindArg::Cyclic => build_cyclic(l, contiguous)?,
    })
}

#[derive(Serialize)]
struct MappingReport {
    l: usize,
    kind: String,
    contiguous: bool,
    cost_factor: usize,
    training_counts: Vec<usize>,
    influence: Vec<f64>,
    influence_gap: f64,
    matrix: Vec<Vec<Vec<u8>>>,
}

fn mapping_output(mapping: &ChannelMapping, out: Option<&Path>, json: bool) -> CmdResult {
    if let Some(path) = out {
        write_output(path, &write_mapping(mapping))?;
    }
    let m: Metrics = metrics(mapping);
    let l = mapping.l();
    let report = MappingReport {
        l,
        kind: mapping.kind().to_string(),
        contiguous: mapping.is_contiguous(),
        cost_factor: mapping.cost_factor(),
        training_counts: m.training_counts,
        influence: m.influence,
        influence_gap: m.influence_gap,
        matrix: mapping
            .blocks()
            .iter()
            .map(|b| (0..l).map(|g| b.row(g).iter().map(|&u| u8::from(u)).collect()).collect())
            .collect(),
    };
    if json {
        return to_json(&report);
    }
    let mut s = String::new();
    let _ = writeln!(s, "kind          {}", report.kind);
    let _ = writeln!(s, "groups        {l}");
    let _ = writeln!(s, "contiguous    {}", report.contiguous);
    let _ = writeln!(s, "cost factor   {}", report.cost_factor);
    let _ = writeln!(s, "influence gap {:.6}", report.influence_gap);
    let _ = writeln!(s, "group  count  influence");
    for g in 0..l {
        let _ = writeln!(s, "{:>5}  {:>5}  {:>9.6}", g + 1, report.training_counts[g], report.influence[g]);
    }
    s.push('\n');
    s.push_str(&write_mapping(mapping));
    Ok(s)
}

pub fn mapping(cmd: MappingCommand, env: &Env) -> CmdResult {
    match cmd {
        MappingCommand::Build { kind, l, contiguous, out, fmt } => {
            let m = construct(kind, l, contiguous)?;
            mapping_output(&m, out.mapping_out.as_deref(), fmt.json)
        }
        MappingCommand::Refine { input, l, from, iters, seed, out, fmt } => {
            let start = match input {
                Some(path) => parse_mapping(&read_input(&path)?)?,
                None => construct(from, l.expect("clap requires --l without --input"), true)?,
            };
            let m = refine_local_search(&start, iters, env.seed(&seed)?)?;
            mapping_output(&m, out.mapping_out.as_deref(), fmt.json)
        }
        MappingCommand::Enumerate { l, out, fmt } => {
            let m = enumerate_optimal(l)?;
            mapping_output(&m, out.mapping_out.as_deref(), fmt.json)
        }
    }
}

fn load(space: &str) -> Result<SpaceSpec, Failure> {
    let text = match builtin_source(space) {
        Some(t) => t.to_string(),
        None => {
            let path = Path::new(space);
            if !path.exists() {
                return Err(Failure::validation(anyhow::anyhow!(
                    "`{space}` is neither a built-in space nor a readable file"
                )));
            }
            read_input(path)?
        }
    };
    Ok(parse_space_spec(&text)?)
}

pub fn space(cmd: SpaceCommand, env: &Env) -> CmdResult {
    match cmd {
        SpaceCommand::Count { space, canonical, fmt } => {
            let spec = load(&space.space)?;
            let c = count_space(&spec, canonical);
            if fmt.json {
                return to_json(&json!({
                    "space": spec.name,
                    "canonical": canonical,
                    "total": c.total.to_string(),
                    "per_stage": c.per_stage.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
                }));
            }
            Ok(format!("{}\n", c.total))
        }
        SpaceCommand::Sample { space, raw, count, seed, fmt } => {
            use rand::SeedableRng;
            let spec = load(&space.space)?;
            let seed = env.seed(&seed)?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let encodings: Vec<String> = (0..count).map(|_| encode(&sample_with(&spec, !raw, &mut rng))).collect();
            if fmt.json {
                return to_json(&json!({
                    "space": spec.name,
                    "canonical": !raw,
                    "seed": seed,
                    "encodings": encodings,
                }));
            }
            Ok(encodings.iter().map(|e| format!("{e}\n")).collect())
        }
        SpaceCommand::Canonicalize { space, encoding, fmt } => {
            let spec = load(&space.space)?;
            let arch = decode(&spec, &encoding)?;
            let canon = encode(&canonicalize(&arch));
            if fmt.json {
                return to_json(&json!({
                    "space": spec.name,
                    "input": encode(&arch),
                    "canonical": canon,
                }));
            }
            Ok(format!("{canon}\n"))
        }
    }
}

fn cost_json(report: &CostReport) -> serde_json::Value {
    json!({
        "flops_g": report.flops,
        "params_m": report.params,
        "per_stage": report.per_stage.iter().map(|s| json!({"flops_g": s.flops, "params_m": s.params})).collect::<Vec<_>>(),
    })
}

pub fn cost(args: CostArgs) -> CmdResult {
    let hw = (args.resolution, args.resolution);
    let report = match args.reference {
        Some(r) => {
            let arch = match r {
                Reference::DeitTiny => ResolvedArch::deit_tiny(),
                Reference::DeitSmall => ResolvedArch::deit_small(),
            };
            estimate_resolved(&arch, hw, &CostOptions::default())?
        }
        None => {
            let spec = load(args.space.as_deref().expect("clap requires --space"))?;
            let text = args.encoding.expect("clap requires --encoding");
            let arch = match text.as_str() {
                "min" => ArchEncoding::minimal(&spec),
                "max" => ArchEncoding::maximal(&spec),
                _ => decode(&spec, &text)?,
            };
            estimate(&spec, &arch, hw)?
        }
    };
    if args.fmt.json {
        return to_json(&cost_json(&report));
    }
    let mut s = format!("flops   {:.4} G\nparams  {:.4} M\nstage  flops_g     params_m\n", report.flops, report.params);
    for (i, st) in report.per_stage.iter().enumerate() {
        let _ = writeln!(s, "{:>5}  {:<10.4} {:.4}", i + 1, st.flops, st.params);
    }
    Ok(s)
}

pub fn simulate(args: SimulateArgs, env: &Env) -> CmdResult {
    let mapping = construct(args.kind, args.l, false)?;
    let schedule = if args.alternating { SideSchedule::Alternating } else { SideSchedule::Both };
    let every = if args.every == 0 { args.steps.max(1) } else { args.every };
    let (state, mut trace) = simulate_traced(&mapping, args.steps, env.seed(&args.seed)?, schedule, every);
    if trace.is_empty() {
        // steps = 0: report the untouched state.
        trace.push(vitas_core::simshare::Snapshot {
            step: 0,
            counts: state.counts.clone(),
            influence_acc: state.influence_acc.clone(),
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Failure::runtime(e);
    w.write_record(["step", "group", "count", "influence"]).map_err(csv_err)?;
    for snap in &trace {
        for g in 0..args.l {
            w.write_record([
                snap.step.to_string(),
                (g + 1).to_string(),
                snap.counts[g].to_string(),
                format!("{:.9}", snap.influence_acc[g]),
            ])
            .map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Failure::runtime(anyhow::anyhow!("{e}")))?;
    String::from_utf8(bytes).map_err(Failure::runtime)
}

#[derive(serde::Deserialize)]
struct PathRow {
    flops: f64,
    score: f64,
}

pub fn rank(args: RankArgs) -> CmdResult {
    let text = read_input(&args.input)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut paths = Vec::new();
    for (i, row) in reader.deserialize::<PathRow>().enumerate() {
        let row =
            row.with_context(|| format!("{} row {}", args.input.display(), i + 1)).map_err(Failure::validation)?;
        paths.push((row.flops, row.score));
    }
    if paths.is_empty() {
        return Err(Failure::validation(anyhow::anyhow!("{} has no rows", args.input.display())));
    }
    if args.groups == 0 {
        return Err(Failure::validation(anyhow::anyhow!("--groups must be positive")));
    }
    let lo = args.lo.unwrap_or_else(|| paths.iter().map(|p| p.0).fold(f64::INFINITY, f64::min));
    let hi = args.hi.unwrap_or_else(|| paths.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max));
    if !(lo <= hi) {
        return Err(Failure::validation(anyhow::anyhow!("empty FLOPs range [{lo}, {hi}]")));
    }
    let groups = grouped_budget_eval(&paths, &uniform_budgets(lo, hi, args.groups))?;
    if args.fmt.json {
        let groups: Vec<_> = groups
            .iter()
            .map(|g| {
                json!({
                    "lo": g.range.lo,
                    "hi": g.range.hi,
                    "n": g.n,
                    "pearson": g.stats.map(|s| s.pearson),
                    "spearman": g.stats.map(|s| s.spearman),
                    "kendall": g.stats.map(|s| s.kendall),
                    "warning": g.warning,
                })
            })
            .collect();
        return to_json(&json!({ "paths": paths.len(), "groups": groups }));
    }
    let mut s = String::from("range                  n  pearson  spearman  kendall\n");
    for g in &groups {
        let range = format!("[{:.3}, {:.3}]", g.range.lo, g.range.hi);
        match (&g.stats, &g.warning) {
            (Some(st), _) => {
                let _ = writeln!(
                    s,
                    "{range:<20} {:>3}  {:>7.4}  {:>8.4}  {:>7.4}",
                    g.n, st.pearson, st.spearman, st.kendall
                );
            }
            (None, w) => {
                let _ =
                    writeln!(s, "{range:<20} {:>3}  -        -         -        ({})", g.n, w.as_deref().unwrap_or(""));
            }
        }
    }
    Ok(s)
}

fn individual_json(ind: &Individual) -> serde_json::Value {
    json!({
        "encoding": encode(&ind.arch),
        "score": ind.score,
        "flops_g": ind.flops,
        "params_m": ind.params,
    })
}

pub fn search(args: SearchArgs, env: &Env) -> CmdResult {
    let spec = load(&args.space.space)?;
    let evaluator: Box<dyn Evaluator> = match args.evaluator.as_str() {
        "proxy" => Box::new(ProxyEvaluator::new(&spec)),
        "influence" => Box::new(InfluenceEvaluator::new(&spec)?),
        other => match other.strip_prefix("cmd:") {
            Some(path) if !path.is_empty() => Box::new(CommandEvaluator::new(path)),
            _ => {
                return Err(Failure::validation(anyhow::anyhow!(
                    "unknown evaluator `{other}` (expected proxy, influence or cmd:<path>)"
                )))
            }
        },
    };
    let cfg = SearchConfig {
        population: args.population,
        generations: args.generations,
        parents: args.parents,
        mutation_rate: args.mutation_rate,
        seed: env.seed(&args.seed)?,
        input_hw: (args.resolution, args.resolution),
        objectives: if args.score_only { Objectives::ScoreOnly } else { Objectives::ScoreAndFlops },
        ..SearchConfig::new(args.budget_gflops)
    };
    let result = nsga2_search(&spec, &cfg, evaluator.as_ref())?;
    if args.fmt.json {
        return to_json(&json!({
            "space": spec.name,
            "budget_gflops": cfg.budget_gflops,
            "seed": cfg.seed,
            "evaluations": result.evaluations,
            "generations": result.history.iter().map(|g| json!({
                "generation": g.generation,
                "evaluations": g.evaluations,
                "best_score": g.best_score,
                "hypervolume": g.hypervolume,
                "front_size": g.front_size,
            })).collect::<Vec<_>>(),
            "front": result.front.iter().map(individual_json).collect::<Vec<_>>(),
            "best": individual_json(&result.best),
        }));
    }
    let mut s = format!(
        "space {}  budget {} GFLOPs  evaluations {}\n\ngen  best_score  hypervolume  front\n",
        spec.name, cfg.budget_gflops, result.evaluations
    );
    for g in &result.history {
        let _ =
            writeln!(s, "{:>3}  {:>10.4}  {:>11.4}  {:>5}", g.generation, g.best_score, g.hypervolume, g.front_size);
    }
    let _ = writeln!(
        s,
        "\nbest  score {:.4}  flops {:.4} G  params {:.4} M",
        result.best.score, result.best.flops, result.best.params
    );
    let _ = writeln!(s, "      {}", encode(&result.best.arch));
    let _ = writeln!(s, "\nfront ({} architectures)", result.front.len());
    for ind in &result.front {
        let _ = writeln!(s, "  {:>8.4}  {:>8.4} G  {}", ind.score, ind.flops, encode(&ind.arch));
    }
    Ok(s)
}
