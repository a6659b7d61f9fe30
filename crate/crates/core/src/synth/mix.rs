use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::MicroBenchmark;
use crate::error::SynthError;
use crate::profile::DynamicProfile;
use crate::toyvm::{execute_with, ExecConfig, Opcode};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixRow {
    pub opcode: Opcode,
    pub control: bool,
    /// Dynamic count over the source loops.
    pub original: u64,
    /// Dynamic count of the body copies (control rows: synthesized back-branches).
    pub synthesized: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixReport {
    pub rows: Vec<MixRow>,
    /// Counter initialization, calls, returns and halt of the micro-benchmark.
    pub scaffold: BTreeMap<Opcode, u64>,
    pub original_control: u64,
    pub synthesized_control: u64,
    /// Dynamic count of the whole source workloads.
    pub workload_total: u64,
    /// Dynamic count of the source loops alone.
    pub loop_total: u64,
    pub micro_total: u64,
}

impl MixReport {
    pub fn non_control_matches(&self) -> bool {
        self.rows.iter().filter(|r| !r.control).all(|r| r.original == r.synthesized)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("opcode\tclass\toriginal\tsynthesized\tdelta\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.opcode,
                if r.control { "control" } else { "non-control" },
                r.original,
                r.synthesized,
                r.synthesized as i128 - r.original as i128
            );
        }
        for (op, n) in &self.scaffold {
            let _ = writeln!(out, "{op}\tscaffold\t0\t{n}\t{n}");
        }
        let _ = writeln!(out, "# control original {} synthesized {}", self.original_control, self.synthesized_control);
        let _ = writeln!(
            out,
            "# totals workload {} loops {} micro {}",
            self.workload_total, self.loop_total, self.micro_total
        );
        out
    }
}

pub fn run_micro(micro: &MicroBenchmark, seed: u64) -> Result<DynamicProfile, SynthError> {
    let config = ExecConfig {
        max_dyn: micro.dynamic_bound(),
        ..ExecConfig::default()
    };
    Ok(execute_with(&micro.program, "micro", seed, &config)?)
}

/// Compares the micro-benchmark's run against the source profiles, per
/// function and per opcode. Non-control counts must match exactly.
pub fn verify_mix(
    micro: &MicroBenchmark,
    run: &DynamicProfile,
    profiles: &[&DynamicProfile],
) -> Result<MixReport, SynthError> {
    let lookup = |w: &str| {
        profiles
            .iter()
            .find(|p| p.workload == w)
            .copied()
            .ok_or_else(|| SynthError::MissingProfile(w.to_string()))
    };
    let listing = &micro.program.listing;
    let mut rows: BTreeMap<(bool, Opcode), (u64, u64)> = BTreeMap::new();
    let mut loop_total = 0;
    let mut synthesized_control = 0;
    let mut workloads = BTreeSet::new();
    let mut body_ids = BTreeSet::new();
    for p in &micro.provenance {
        let orig = lookup(&p.workload)?;
        workloads.insert(p.workload.as_str());
        for (k, &src) in p.body_sources.iter().enumerate() {
            let copy = p.body_start + k;
            body_ids.insert(copy);
            let insn = &orig.listing.instructions[src];
            let (o, s) = (orig.aec[src], run.aec[copy]);
            if o != s {
                return Err(SynthError::Verification {
                    scope: p.function.clone(),
                    opcode: insn.opcode,
                    original: o,
                    synthesized: s,
                });
            }
            let e = rows.entry((false, insn.opcode)).or_default();
            e.0 += o;
            e.1 += s;
            loop_total += o;
        }
        for &src in &p.stripped {
            let insn = &orig.listing.instructions[src];
            rows.entry((true, insn.opcode)).or_default().0 += orig.aec[src];
            loop_total += orig.aec[src];
        }
        let back = p.body_start + p.body_sources.len();
        body_ids.insert(back);
        rows.entry((true, Opcode::Loop)).or_default().1 += run.aec[back];
        synthesized_control += run.aec[back];
    }
    let mut scaffold = BTreeMap::new();
    for insn in &listing.instructions {
        if !body_ids.contains(&insn.id) && run.aec[insn.id] > 0 {
            *scaffold.entry(insn.opcode).or_insert(0) += run.aec[insn.id];
        }
    }
    let rows: Vec<MixRow> = rows
        .into_iter()
        .map(|((control, opcode), (original, synthesized))| MixRow {
            opcode,
            control,
            original,
            synthesized,
        })
        .collect();
    let original_control = rows.iter().filter(|r| r.control).map(|r| r.original).sum();
    let mut workload_total = 0;
    for w in workloads {
        workload_total += lookup(w)?.total_dyn;
    }
    Ok(MixReport {
        rows,
        scaffold,
        original_control,
        synthesized_control,
        workload_total,
        loop_total,
        micro_total: run.total_dyn,
    })
}
