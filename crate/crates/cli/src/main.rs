use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use loopcull::characterizer::LoopFeatures;
use loopcull::error::{ConfigError, Error, Result};
use loopcull::loopfinder::{loop_table, Loop};
use loopcull::pipeline::{
    characterize, detect, generate_suite, load_input, profile_artifacts, read_json, run_pipeline, select_loops,
    synthesize_and_verify, workload_name, Artifacts, LoopSelection, ReportFormat, RunConfig, SuiteConfig, SuiteKind,
};
use loopcull::profile::{import_callgrind, DynamicProfile};
use loopcull::reducer::{random_subset_rank, reduce, Reduction};
use loopcull::report;
use loopcull::toyvm::asm::{format_program, parse_program};
use loopcull::toyvm::execute_with;

#[derive(Parser)]
#[command(name = "loopcull", version, about = "Loop-centric workload characterization and subsetting")]
struct Cli {
    /// Seed for every randomized step; required by run, reduce, synthesize and pipeline.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Halving,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Selection {
    All,
    Core,
    Final,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Tsv,
    Svg,
}

#[derive(Args)]
struct ReduceFlags {
    #[arg(long)]
    dominance: Option<f64>,
    #[arg(long)]
    min_share: Option<f64>,
    #[arg(long)]
    retention: Option<f64>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Elimination policy: lower or higher.
    #[arg(long)]
    policy: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write generated workload programs.
    Generate {
        #[arg(long, value_enum, default_value = "halving")]
        suite: Suite,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        /// Workload count of the random suite.
        #[arg(long, default_value_t = 18)]
        count: usize,
    },
    /// Execute programs on the toy machine and write native profiles.
    Run { programs: Vec<PathBuf> },
    /// Convert callgrind profiles to native profiles.
    Import {
        files: Vec<PathBuf>,
        #[arg(long)]
        event: Option<String>,
    },
    /// Find loops in profiles (native, callgrind or program text).
    Detect { inputs: Vec<PathBuf> },
    /// Characterize the loops of each profile.
    Characterize {
        inputs: Vec<PathBuf>,
        /// Loops from `detect`; detected afresh when absent.
        #[arg(long)]
        loops: Option<PathBuf>,
        /// Cache as total:line:ways; repeatable.
        #[arg(long = "cache")]
        caches: Vec<String>,
    },
    /// Clean, project, cluster and eliminate redundant workloads.
    Reduce {
        #[arg(long)]
        features: PathBuf,
        #[command(flatten)]
        flags: ReduceFlags,
        #[arg(long = "cache")]
        caches: Vec<String>,
        #[arg(long, value_enum)]
        format: Vec<Format>,
    },
    /// Build a micro-benchmark from loops and verify its mix.
    Synthesize {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        loops: PathBuf,
        /// Reduction from `reduce`, needed for core and final selection.
        #[arg(long)]
        reduction: Option<PathBuf>,
        #[arg(long, value_enum)]
        select: Option<Selection>,
        #[arg(long)]
        buffer_size: Option<u64>,
    },
    /// Render reports of a saved reduction.
    Report {
        #[arg(long)]
        reduction: PathBuf,
        #[arg(long, value_enum)]
        format: Vec<Format>,
    },
    /// Run every stage end to end.
    Pipeline {
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum)]
        suite: Option<Suite>,
        #[arg(long)]
        eps: Option<f64>,
        #[command(flatten)]
        flags: ReduceFlags,
        #[arg(long)]
        no_synth: bool,
        #[arg(long, value_enum)]
        format: Vec<Format>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(out) = &cli.out {
        cfg.out.clone_from(out);
    }
    Ok(cfg)
}

fn apply_reduce(cfg: &mut RunConfig, f: &ReduceFlags) {
    let r = &mut cfg.reduce;
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = f.$field.clone() { r.$field = v; })* };
    }
    set!(dominance, min_share, retention, k_min, k_max, threshold, policy);
}

fn apply_formats(cfg: &mut RunConfig, formats: &[Format]) {
    if !formats.is_empty() {
        cfg.formats = formats
            .iter()
            .map(|f| match f {
                Format::Tsv => ReportFormat::Tsv,
                Format::Svg => ReportFormat::Svg,
            })
            .collect();
    }
}

fn apply_caches(cfg: &mut RunConfig, caches: &[String]) {
    if !caches.is_empty() {
        cfg.caches = caches.to_vec();
    }
}

fn suite_kind(s: Suite) -> SuiteKind {
    match s {
        Suite::Halving => SuiteKind::Halving,
        Suite::Random => SuiteKind::Random,
    }
}

fn require_inputs(inputs: &[PathBuf]) -> Result<()> {
    if inputs.is_empty() {
        return Err(ConfigError::Invalid("no input files given".into()).into());
    }
    Ok(())
}

/// Profiles of the inputs, sorted by workload, with duplicate names rejected.
fn load_profiles(inputs: &[PathBuf], cfg: &RunConfig) -> Result<Vec<DynamicProfile>> {
    require_inputs(inputs)?;
    // Program inputs run with the configured seed; profiles need none.
    let seed = cfg.seed.unwrap_or(0);
    let mut profiles = inputs
        .iter()
        .map(|p| load_input(p, cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    profiles.sort_by(|a, b| a.workload.cmp(&b.workload));
    if let Some(w) = profiles.windows(2).find(|w| w[0].workload == w[1].workload) {
        return Err(ConfigError::Invalid(format!("workload `{}` appears twice", w[0].workload)).into());
    }
    Ok(profiles)
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = base_config(&cli)?;
    let mut out = Artifacts::default();
    match &cli.command {
        Command::Generate { suite, eps, count } => {
            let seed = cfg.require_seed()?;
            let suite = SuiteConfig {
                kind: suite_kind(*suite),
                count: *count,
                eps: *eps,
            };
            for (name, program) in generate_suite(&suite, seed)? {
                out.add(format!("{name}.tvm"), format_program(&program));
            }
        }
        Command::Run { programs } => {
            let seed = cfg.require_seed()?;
            require_inputs(programs)?;
            let mut profiles = Vec::new();
            for path in programs {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let program = parse_program(&text)?;
                profiles.push(execute_with(&program, &workload_name(path), seed, &cfg.exec_config())?);
            }
            out = profile_artifacts(&profiles);
        }
        Command::Import { files, event } => {
            require_inputs(files)?;
            let event = event.clone().unwrap_or_else(|| cfg.callgrind_event.clone());
            let mut profiles = Vec::new();
            for path in files {
                let imported = import_callgrind(path, &event)?;
                for w in &imported.warnings {
                    log::warn!("{}: {w}", path.display());
                }
                profiles.push(imported.profile);
            }
            out = profile_artifacts(&profiles);
        }
        Command::Detect { inputs } => {
            let profiles = load_profiles(inputs, &cfg)?;
            let loops = detect(&profiles)?;
            out.add("loops.tsv", loop_table(&loops));
            out.add_json("loops.json", &loops);
        }
        Command::Characterize { inputs, loops, caches } => {
            apply_caches(&mut cfg, caches);
            cfg.validate()?;
            let profiles = load_profiles(inputs, &cfg)?;
            let loops: Vec<Loop> = match loops {
                Some(p) => read_json(p)?,
                None => detect(&profiles)?,
            };
            let caches = cfg.cache_configs()?;
            let features = characterize(&profiles, &loops, caches.clone(), cfg.latencies()?)?;
            out.add_json("features.json", &features);
            out.add("features.tsv", report::features_tsv(&features, &caches));
            out.add("characterize_report.txt", report::characterization_report(&features, &caches));
        }
        Command::Reduce {
            features,
            flags,
            caches,
            format,
        } => {
            apply_reduce(&mut cfg, flags);
            apply_caches(&mut cfg, caches);
            apply_formats(&mut cfg, format);
            cfg.validate()?;
            let seed = cfg.require_seed()?;
            let features: Vec<LoopFeatures> = read_json(features)?;
            let r = reduce(&features, &cfg.cache_configs()?, &cfg.reduce, seed)?;
            report::reduction_artifacts(&mut out, &r, &cfg.formats);
            if cfg.random_subsets > 0 && !r.trace.final_set.is_empty() {
                let rank = random_subset_rank(&r.fvs, &r.trace.final_set, cfg.random_subsets, seed);
                out.add("subset_rank.txt", report::subset_rank_text(&rank));
            }
        }
        Command::Synthesize {
            inputs,
            loops,
            reduction,
            select,
            buffer_size,
        } => {
            let seed = cfg.require_seed()?;
            if let Some(b) = buffer_size {
                cfg.synth.buffer_size = *b;
            }
            let which = match select {
                Some(Selection::All) => LoopSelection::All,
                Some(Selection::Core) => LoopSelection::Core,
                Some(Selection::Final) => LoopSelection::Final,
                None if reduction.is_none() => LoopSelection::All,
                None => cfg.synth.loops,
            };
            let reduction: Option<Reduction> = reduction.as_deref().map(read_json).transpose()?;
            if which != LoopSelection::All && reduction.is_none() {
                return Err(ConfigError::Invalid("core and final selection need --reduction".into()).into());
            }
            let profiles = load_profiles(inputs, &cfg)?;
            let loops: Vec<Loop> = read_json(loops)?;
            let chosen = select_loops(&loops, reduction.as_ref(), which);
            let s = synthesize_and_verify(&chosen, &profiles, &cfg.synth.config(), seed)?;
            out.add("micro.tvm", format_program(&s.micro.program));
            out.add_json("micro.json", &s.micro.provenance);
            out.add("mix_report.tsv", s.report.to_text());
        }
        Command::Report { reduction, format } => {
            apply_formats(&mut cfg, format);
            let r: Reduction = read_json(reduction)?;
            report::reduction_artifacts(&mut out, &r, &cfg.formats);
            out.files.remove("reduction.json");
        }
        Command::Pipeline {
            inputs,
            suite,
            eps,
            flags,
            no_synth,
            format,
        } => {
            cfg.inputs.extend(inputs.iter().cloned());
            if let Some(s) = suite {
                let mut sc = cfg.suite.clone().unwrap_or_default();
                sc.kind = suite_kind(*s);
                cfg.suite = Some(sc);
            }
            if let (Some(e), Some(sc)) = (eps, cfg.suite.as_mut()) {
                sc.eps = *e;
            }
            apply_reduce(&mut cfg, flags);
            apply_formats(&mut cfg, format);
            if *no_synth {
                cfg.synth.enabled = false;
            }
            out = run_pipeline(&cfg)?.artifacts;
        }
    }
    write(&out, &cfg.out)
}

fn write(out: &Artifacts, dir: &Path) -> Result<()> {
    out.write_all(dir)?;
    for name in out.files.keys() {
        println!("{}", dir.join(name).display());
    }
    Ok(())
}
