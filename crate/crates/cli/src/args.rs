use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Channel weight-sharing and architecture-search toolkit for vision
/// transformers.
#[derive(Debug, Parser)]
#[command(name = "vitas-kit", version, about, propagate_version = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build, refine or enumerate channel mappings and report their metrics.
    #[command(subcommand)]
    Mapping(MappingCommand),
    /// Inspect search spaces.
    #[command(subcommand)]
    Space(SpaceCommand),
    /// Estimate FLOPs and parameters of one architecture.
    Cost(CostArgs),
    /// Simulate weight-sharing training of a mapping (CSV output).
    Simulate(SimulateArgs),
    /// Rank coefficients of score against FLOPs per budget group.
    Rank(RankArgs),
    /// NSGA-II search under a FLOPs budget.
    Search(SearchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Ordinal,
    Bilateral,
    Cyclic,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Emit machine-readable JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct Seed {
    /// RNG seed [default: $VITAS_KIT_SEED, else 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct MappingOut {
    /// Also write the mapping matrix to this file.
    #[arg(long, value_name = "PATH")]
    pub mapping_out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum MappingCommand {
    /// Construct an ordinal, bilateral or cyclic mapping.
    Build {
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Number of channel groups.
        #[arg(long)]
        l: usize,
        /// Keep cyclic windows contiguous (skip local-search refinement).
        #[arg(long)]
        contiguous: bool,
        #[command(flatten)]
        out: MappingOut,
        #[command(flatten)]
        fmt: Output,
    },
    /// Improve a mapping by local search.
    Refine {
        /// Start from a mapping file instead of a constructed one.
        #[arg(long, value_name = "PATH", conflicts_with_all = ["l", "from"])]
        input: Option<PathBuf>,
        #[arg(long, required_unless_present = "input")]
        l: Option<usize>,
        /// Constructed starting point when no input file is given.
        #[arg(long, value_enum, default_value = "ordinal")]
        from: KindArg,
        #[arg(long, default_value_t = 100_000)]
        iters: usize,
        #[command(flatten)]
        seed: Seed,
        #[command(flatten)]
        out: MappingOut,
        #[command(flatten)]
        fmt: Output,
    },
    /// Exhaustively find the minimum-gap mapping (l ≤ 6).
    Enumerate {
        #[arg(long)]
        l: usize,
        #[command(flatten)]
        out: MappingOut,
        #[command(flatten)]
        fmt: Output,
    },
}

#[derive(Debug, Args)]
pub struct SpaceArg {
    /// Built-in space name or path to a space config file.
    #[arg(long)]
    pub space: String,
}

#[derive(Debug, Subcommand)]
pub enum SpaceCommand {
    /// Count architectures exactly.
    Count {
        #[command(flatten)]
        space: SpaceArg,
        /// Count identity-shifted canonical forms only.
        #[arg(long)]
        canonical: bool,
        #[command(flatten)]
        fmt: Output,
    },
    /// Draw architectures uniformly.
    Sample {
        #[command(flatten)]
        space: SpaceArg,
        /// Sample raw slot assignments instead of canonical forms.
        #[arg(long)]
        raw: bool,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[command(flatten)]
        seed: Seed,
        #[command(flatten)]
        fmt: Output,
    },
    /// Shift identity layers to the end of each stage.
    Canonicalize {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        encoding: String,
        #[command(flatten)]
        fmt: Output,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Reference {
    DeitTiny,
    DeitSmall,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Built-in space name or config path.
    #[arg(long, required_unless_present = "reference")]
    pub space: Option<String>,
    /// Encoding in text form; `min`/`max` select the space's corners.
    #[arg(long, required_unless_present = "reference")]
    pub encoding: Option<String>,
    /// Cost a published reference model instead of an encoding.
    #[arg(long, value_enum, conflicts_with_all = ["space", "encoding"])]
    pub reference: Option<Reference>,
    /// Square input resolution in pixels.
    #[arg(long, default_value_t = 224)]
    pub resolution: u32,
    #[command(flatten)]
    pub fmt: Output,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub l: usize,
    #[arg(long)]
    pub steps: u64,
    /// Emit a row block every N steps (0: final state only).
    #[arg(long, default_value_t = 0)]
    pub every: u64,
    /// Train one bilateral block per step instead of both.
    #[arg(long)]
    pub alternating: bool,
    #[command(flatten)]
    pub seed: Seed,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// CSV file with `flops,score` columns (header required).
    #[arg(long)]
    pub input: PathBuf,
    /// Number of equal-width budget groups.
    #[arg(long, default_value_t = 8)]
    pub groups: usize,
    /// Lower FLOPs bound of the groups (default: data minimum).
    #[arg(long)]
    pub lo: Option<f64>,
    /// Upper FLOPs bound of the groups (default: data maximum).
    #[arg(long)]
    pub hi: Option<f64>,
    #[command(flatten)]
    pub fmt: Output,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub space: SpaceArg,
    #[arg(long)]
    pub budget_gflops: f64,
    #[arg(long, default_value_t = 50)]
    pub population: usize,
    #[arg(long, default_value_t = 40)]
    pub generations: usize,
    #[arg(long, default_value_t = 20)]
    pub parents: usize,
    #[arg(long, default_value_t = 0.1)]
    pub mutation_rate: f64,
    /// `proxy`, `influence` or `cmd:<path>`.
    #[arg(long, default_value = "proxy")]
    pub evaluator: String,
    /// Rank by score only, keeping FLOPs as a hard constraint.
    #[arg(long)]
    pub score_only: bool,
    #[arg(long, default_value_t = 224)]
    pub resolution: u32,
    #[command(flatten)]
    pub seed: Seed,
    #[command(flatten)]
    pub fmt: Output,
}
