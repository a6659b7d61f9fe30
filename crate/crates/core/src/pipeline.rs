//! End-to-end orchestration and the file artifacts of each stage.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characterizer::{Characterizer, LoopFeatures};
use crate::error::{ConfigError, Error, ProfileError, Result};
use crate::loopfinder::{find_loops, loop_table, Loop};
use crate::profile::{import_callgrind, parse_native, write_native, DynamicProfile};
use crate::reducer::{random_subset_rank, reduce, ReduceConfig, Reduction};
use crate::report;
use crate::synth::{run_micro, synthesize, verify_mix, MicroBenchmark, MixReport, SynthConfig};
use crate::toyvm::asm::{format_program, parse_program};
use crate::toyvm::{
    execute_with, generate_workload, halving_suite, CacheConfig, ExecConfig, GeneratorParams, LatencyTable, Program,
    WorkloadSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteKind {
    /// Nine near-duplicate pairs.
    Halving,
    /// Independently sampled workloads.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub kind: SuiteKind,
    /// Workload count for `random`.
    pub count: usize,
    /// Trip-count perturbation for `halving`.
    pub eps: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            kind: SuiteKind::Halving,
            count: 18,
            eps: 0.05,
        }
    }
}

/// Which loops the micro-benchmark reproduces.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoopSelection {
    All,
    /// Loops that survive cleaning.
    #[default]
    Core,
    /// Loops that survive cleaning, restricted to the final workload set.
    Final,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthStage {
    pub enabled: bool,
    pub loops: LoopSelection,
    pub buffer_size: u64,
    pub max_body: usize,
    pub counter: u8,
}

impl Default for SynthStage {
    fn default() -> Self {
        let c = SynthConfig::default();
        SynthStage {
            enabled: true,
            loops: LoopSelection::Core,
            buffer_size: c.buffer_size,
            max_body: c.max_body,
            counter: c.counter,
        }
    }
}

impl SynthStage {
    pub fn config(&self) -> SynthConfig {
        SynthConfig {
            buffer_size: self.buffer_size,
            max_body: self.max_body,
            counter: self.counter,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Tsv,
    Svg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Program text, native profiles or callgrind files.
    pub inputs: Vec<PathBuf>,
    /// Generated workloads added to the inputs.
    pub suite: Option<SuiteConfig>,
    /// `total:line:ways` per cache.
    pub caches: Vec<String>,
    pub latency_table: Option<PathBuf>,
    pub callgrind_event: String,
    pub max_dyn: u64,
    pub reduce: ReduceConfig,
    pub synth: SynthStage,
    /// Random subsets drawn for the subset-ranking report; 0 disables it.
    pub random_subsets: usize,
    pub out: PathBuf,
    pub formats: Vec<ReportFormat>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            inputs: Vec::new(),
            suite: None,
            caches: vec!["4096:64:4".into()],
            latency_table: None,
            callgrind_event: "Ir".into(),
            max_dyn: ExecConfig::default().max_dyn,
            reduce: ReduceConfig::default(),
            synth: SynthStage::default(),
            random_subsets: 1000,
            out: PathBuf::from("out"),
            formats: vec![ReportFormat::Tsv],
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> std::result::Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_toml(&text)?)
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        self.reduce.validate()?;
        self.cache_configs()?;
        if let Some(s) = &self.suite {
            if !(0.0..1.0).contains(&s.eps) {
                return Err(ConfigError::Invalid(format!("suite eps {} outside [0, 1)", s.eps)));
            }
        }
        if self.max_dyn == 0 {
            return Err(ConfigError::Invalid("max-dyn must be positive".into()));
        }
        Ok(())
    }

    pub fn cache_configs(&self) -> std::result::Result<Vec<CacheConfig>, ConfigError> {
        if self.caches.is_empty() {
            return Err(ConfigError::Invalid("at least one cache configuration is required".into()));
        }
        self.caches.iter().map(|c| c.parse()).collect()
    }

    pub fn latencies(&self) -> Result<LatencyTable> {
        match &self.latency_table {
            None => Ok(LatencyTable::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Ok(LatencyTable::from_toml(&text)?)
            }
        }
    }

    pub fn require_seed(&self) -> std::result::Result<u64, ConfigError> {
        self.seed
            .ok_or_else(|| ConfigError::Invalid("a seed is required (set `seed` or pass --seed)".into()))
    }

    pub fn exec_config(&self) -> ExecConfig {
        ExecConfig {
            max_dyn: self.max_dyn,
            ..ExecConfig::default()
        }
    }
}

/// Generated programs of a suite with their workload names.
pub fn generate_suite(suite: &SuiteConfig, seed: u64) -> Result<Vec<(String, Program)>> {
    let specs: Vec<(WorkloadSpec, u64)> = match suite.kind {
        SuiteKind::Halving => halving_suite(suite.eps, seed),
        SuiteKind::Random => (0..suite.count)
            .map(|i| {
                let s = seed.wrapping_mul(10_007).wrapping_add(i as u64);
                (WorkloadSpec::sample(format!("r{i:03}"), &GeneratorParams::default(), s), s)
            })
            .collect(),
    };
    specs
        .into_iter()
        .map(|(spec, body_seed)| Ok((spec.name.clone(), generate_workload(&spec, body_seed)?)))
        .collect()
}

/// What an input file holds, judged by content.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputKind {
    Native,
    Callgrind,
    Program,
}

pub fn sniff(text: &str) -> InputKind {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if first.starts_with("loopcull-profile") {
        InputKind::Native
    } else if text
        .lines()
        .any(|l| l.starts_with("events:") || l.starts_with("positions:") || l.starts_with("# callgrind format"))
    {
        InputKind::Callgrind
    } else {
        InputKind::Program
    }
}

pub fn workload_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "workload".into())
}

/// Profiles every input, sorted by workload name.
pub fn ingest(cfg: &RunConfig, seed: u64) -> Result<Vec<DynamicProfile>> {
    let exec = cfg.exec_config();
    let mut profiles = Vec::new();
    if let Some(suite) = &cfg.suite {
        for (name, program) in generate_suite(suite, seed)? {
            profiles.push(execute_with(&program, &name, seed, &exec)?);
        }
    }
    for path in &cfg.inputs {
        profiles.push(load_input(path, cfg, seed)?);
    }
    profiles.sort_by(|a, b| a.workload.cmp(&b.workload));
    if let Some(w) = profiles.windows(2).find(|w| w[0].workload == w[1].workload) {
        return Err(ConfigError::Invalid(format!("workload `{}` appears twice", w[0].workload)).into());
    }
    if profiles.is_empty() {
        return Err(ConfigError::Invalid("no inputs: give input files or a suite".into()).into());
    }
    Ok(profiles)
}

pub fn load_input(path: &Path, cfg: &RunConfig, seed: u64) -> Result<DynamicProfile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match sniff(&text) {
        InputKind::Native => Ok(parse_native(&text)?),
        InputKind::Callgrind => {
            let imported = import_callgrind(path, &cfg.callgrind_event)?;
            for w in &imported.warnings {
                log::warn!("{}: {w}", path.display());
            }
            Ok(imported.profile)
        }
        InputKind::Program => {
            let program = parse_program(&text)?;
            Ok(execute_with(&program, &workload_name(path), seed, &cfg.exec_config())?)
        }
    }
}

pub fn detect(profiles: &[DynamicProfile]) -> Result<Vec<Loop>> {
    let mut loops = Vec::new();
    for p in profiles {
        loops.extend(find_loops(p)?.loops);
    }
    Ok(loops)
}

pub fn characterize(
    profiles: &[DynamicProfile],
    loops: &[Loop],
    caches: Vec<CacheConfig>,
    latencies: LatencyTable,
) -> Result<Vec<LoopFeatures>> {
    let ch = Characterizer {
        caches,
        latencies,
        ..Characterizer::default()
    };
    let per_workload: Vec<Vec<LoopFeatures>> = profiles
        .par_iter()
        .map(|p| {
            let own: Vec<Loop> = loops.iter().filter(|l| l.workload == p.workload).cloned().collect();
            ch.characterize_all(&own, p)
        })
        .collect::<std::result::Result<_, _>>()?;
    Ok(per_workload.into_iter().flatten().collect())
}

pub fn select_loops(loops: &[Loop], reduction: Option<&Reduction>, which: LoopSelection) -> Vec<Loop> {
    let Some(r) = reduction else {
        return loops.to_vec();
    };
    let keep = |l: &Loop| {
        let core = r
            .cleaned
            .rows
            .iter()
            .any(|m| m.workload == l.workload && m.loop_id == l.id);
        match which {
            LoopSelection::All => true,
            LoopSelection::Core => core,
            LoopSelection::Final => core && r.trace.final_set.contains(&l.workload),
        }
    };
    loops.iter().filter(|l| keep(l)).cloned().collect()
}

pub struct Synthesis {
    pub micro: MicroBenchmark,
    pub report: MixReport,
}

pub fn synthesize_and_verify(
    loops: &[Loop],
    profiles: &[DynamicProfile],
    cfg: &SynthConfig,
    seed: u64,
) -> Result<Synthesis> {
    let micro = synthesize(loops, cfg)?;
    let run = run_micro(&micro, seed)?;
    let refs: Vec<&DynamicProfile> = profiles.iter().collect();
    let report = verify_mix(&micro, &run, &refs)?;
    Ok(Synthesis { micro, report })
}

/// File name to content, written together or not at all.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Artifacts {
    pub files: BTreeMap<String, String>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, content: impl Into<String>) {
        self.files.insert(name.into(), content.into());
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let text = serde_json::to_string_pretty(value).expect("stage artifacts serialize");
        self.add(name, text + "\n");
    }

    /// Stages every file in a sibling directory, then moves them into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let staging = dir.join(format!(".staging-{}", std::process::id()));
        let result = (|| {
            fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
            for (name, content) in &self.files {
                let p = staging.join(name);
                fs::write(&p, content).map_err(|e| Error::io(&p, e))?;
            }
            for name in self.files.keys() {
                let to = dir.join(name);
                fs::rename(staging.join(name), &to).map_err(|e| Error::io(&to, e))?;
            }
            Ok(())
        })();
        let _ = fs::remove_dir_all(&staging);
        result
    }
}

/// Everything a full run produces.
pub struct PipelineOutput {
    pub profiles: Vec<DynamicProfile>,
    pub loops: Vec<Loop>,
    pub features: Vec<LoopFeatures>,
    pub reduction: Reduction,
    pub synthesis: Option<Synthesis>,
    pub artifacts: Artifacts,
}

/// ingest, detect, characterize, reduce, then optionally synthesize.
/// Nothing is written here; see [`Artifacts::write_all`].
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let caches = cfg.cache_configs()?;
    let profiles = ingest(cfg, seed)?;
    let loops = detect(&profiles)?;
    let features = characterize(&profiles, &loops, caches.clone(), cfg.latencies()?)?;
    let reduction = reduce(&features, &caches, &cfg.reduce, seed)?;
    let synthesis = if cfg.synth.enabled {
        let chosen = select_loops(&loops, Some(&reduction), cfg.synth.loops);
        Some(synthesize_and_verify(&chosen, &profiles, &cfg.synth.config(), seed)?)
    } else {
        None
    };
    let mut artifacts = Artifacts::default();
    artifacts.add("loops.tsv", loop_table(&loops));
    artifacts.add_json("loops.json", &loops);
    artifacts.add_json("features.json", &features);
    artifacts.add("features.tsv", report::features_tsv(&features, &caches));
    artifacts.add("characterize_report.txt", report::characterization_report(&features, &caches));
    report::reduction_artifacts(&mut artifacts, &reduction, &cfg.formats);
    if cfg.random_subsets > 0 && !reduction.trace.final_set.is_empty() {
        let rank = random_subset_rank(&reduction.fvs, &reduction.trace.final_set, cfg.random_subsets, seed);
        artifacts.add("subset_rank.txt", report::subset_rank_text(&rank));
    }
    if let Some(s) = &synthesis {
        artifacts.add("micro.tvm", format_program(&s.micro.program));
        artifacts.add_json("micro.json", &s.micro.provenance);
        artifacts.add("mix_report.tsv", s.report.to_text());
    }
    Ok(PipelineOutput {
        profiles,
        loops,
        features,
        reduction,
        synthesis,
        artifacts,
    })
}

/// Native text of every profile, keyed `<workload>.prof`.
pub fn profile_artifacts(profiles: &[DynamicProfile]) -> Artifacts {
    let mut a = Artifacts::default();
    for p in profiles {
        a.add(format!("{}.prof", p.workload), write_native(p));
    }
    a
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Profile(ProfileError::Parse {
            line: e.line(),
            record: path.display().to_string(),
            message: e.to_string(),
        })
    })
}
