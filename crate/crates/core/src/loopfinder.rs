//! Loop detection from execution counts.
//!
//! Each instruction's ECR is its execution count divided by its enclosing
//! function's call count. Maximal runs of equal ECR above 1 are linear loops;
//! two equal runs separated only by higher-ECR runs (an inner loop) are one
//! loop, and conditional arms split into their own runs.

use std::fmt::{self, Write as _};
use std::ops::Range;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::LoopError;
use crate::profile::DynamicProfile;
use crate::toyvm::Instruction;

pub type Ecr = Ratio<u64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EcrClass {
    Conditional,
    Serial,
    Loop,
}

impl EcrClass {
    pub fn of(ecr: Ecr) -> EcrClass {
        match ecr.cmp(&Ratio::from_integer(1)) {
            std::cmp::Ordering::Less => EcrClass::Conditional,
            std::cmp::Ordering::Equal => EcrClass::Serial,
            std::cmp::Ordering::Greater => EcrClass::Loop,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EcrAnnotation {
    pub instruction: usize,
    pub function: usize,
    pub aec: u64,
    pub tec: u64,
    pub ecr: Ecr,
    pub class: EcrClass,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EcrReport {
    pub annotations: Vec<EcrAnnotation>,
    /// Instructions of never-called functions that also never executed.
    pub skipped: Vec<usize>,
}

pub fn compute_ecr(profile: &DynamicProfile) -> Result<EcrReport, LoopError> {
    let mut report = EcrReport::default();
    for (f, func) in profile.listing.functions.iter().enumerate() {
        let tec = profile.function_calls[f];
        for id in func.range() {
            let aec = profile.aec[id];
            if tec == 0 {
                if aec > 0 {
                    return Err(LoopError::Inconsistent {
                        function: func.name.clone(),
                        instruction: id,
                        aec,
                    });
                }
                report.skipped.push(id);
                continue;
            }
            let ecr = Ratio::new(aec, tec);
            report.annotations.push(EcrAnnotation {
                instruction: id,
                function: f,
                aec,
                tec,
                ecr,
                class: EcrClass::of(ecr),
            });
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Loop {
    /// Position among the workload's loops, ordered by first instruction.
    pub id: usize,
    pub workload: String,
    pub function: String,
    /// Disjoint instruction ranges in listing order.
    pub ranges: Vec<Range<usize>>,
    pub ecr: Ecr,
    /// Total body executions (the shared AEC of the body).
    pub iterations: u64,
    pub body: Vec<Instruction>,
}

impl Loop {
    pub fn instruction_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.ranges.iter().flat_map(|r| r.clone())
    }

    pub fn static_len(&self) -> usize {
        self.body.len()
    }

    /// `workload#id`, unique across a suite.
    pub fn key(&self) -> String {
        format!("{}#{}", self.workload, self.id)
    }
}

/// A run with ECR at most 1 lying between loop runs of the same function.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidueRun {
    pub function: String,
    pub range: Range<usize>,
    pub ecr: Ecr,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Segmentation {
    pub loops: Vec<Loop>,
    pub residue: Vec<ResidueRun>,
}

struct Run {
    range: Range<usize>,
    ecr: Ecr,
    aec: u64,
}

fn runs_of(annotations: &[EcrAnnotation]) -> Vec<(usize, Vec<Run>)> {
    let mut out: Vec<(usize, Vec<Run>)> = Vec::new();
    for a in annotations {
        let same_function = matches!(out.last(), Some((f, _)) if *f == a.function);
        if !same_function {
            out.push((a.function, Vec::new()));
        }
        let runs = &mut out.last_mut().expect("pushed").1;
        match runs.last_mut() {
            Some(run) if run.range.end == a.instruction && run.ecr == a.ecr => {
                run.range.end += 1;
            }
            _ => runs.push(Run {
                range: a.instruction..a.instruction + 1,
                ecr: a.ecr,
                aec: a.aec,
            }),
        }
    }
    out
}

pub fn segment_loops(report: &EcrReport, profile: &DynamicProfile) -> Segmentation {
    struct Group {
        ecr: Ecr,
        aec: u64,
        ranges: Vec<Range<usize>>,
    }
    let mut groups: Vec<(usize, Group)> = Vec::new();
    let mut residue = Vec::new();
    let one = Ratio::from_integer(1u64);

    for (f, runs) in runs_of(&report.annotations) {
        // Strictly increasing ECR from bottom to top.
        let mut stack: Vec<Group> = Vec::new();
        for (i, run) in runs.iter().enumerate() {
            if run.ecr <= one {
                groups.extend(stack.drain(..).map(|g| (f, g)));
                let loop_before = runs[..i].iter().any(|r| r.ecr > one);
                let loop_after = runs[i + 1..].iter().any(|r| r.ecr > one);
                if loop_before && loop_after {
                    residue.push(ResidueRun {
                        function: profile.listing.functions[f].name.clone(),
                        range: run.range.clone(),
                        ecr: run.ecr,
                    });
                }
                continue;
            }
            while stack.last().is_some_and(|g| g.ecr > run.ecr) {
                groups.push((f, stack.pop().expect("non-empty")));
            }
            match stack.last_mut() {
                Some(g) if g.ecr == run.ecr => match g.ranges.last_mut() {
                    Some(last) if last.end == run.range.start => last.end = run.range.end,
                    _ => g.ranges.push(run.range.clone()),
                },
                _ => stack.push(Group {
                    ecr: run.ecr,
                    aec: run.aec,
                    ranges: vec![run.range.clone()],
                }),
            }
        }
        groups.extend(stack.into_iter().map(|g| (f, g)));
    }

    groups.sort_by_key(|(_, g)| g.ranges[0].start);
    let loops = groups
        .into_iter()
        .enumerate()
        .map(|(id, (f, g))| {
            let body = g
                .ranges
                .iter()
                .flat_map(|r| profile.listing.instructions[r.clone()].iter().cloned())
                .collect();
            Loop {
                id,
                workload: profile.workload.clone(),
                function: profile.listing.functions[f].name.clone(),
                ranges: g.ranges,
                ecr: g.ecr,
                iterations: g.aec,
                body,
            }
        })
        .collect();
    Segmentation { loops, residue }
}

/// Convenience: ECR annotation followed by segmentation.
pub fn find_loops(profile: &DynamicProfile) -> Result<Segmentation, LoopError> {
    let report = compute_ecr(profile)?;
    Ok(segment_loops(&report, profile))
}

pub struct RangeList<'a>(pub &'a [Range<usize>]);

impl fmt::Display for RangeList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}..{}", r.start, r.end)?;
        }
        Ok(())
    }
}

/// Tab-separated loop table: id, function, ranges, ECR, iterations.
pub fn loop_table(loops: &[Loop]) -> String {
    let mut out = String::from("workload\tloop\tfunction\tranges\tecr\titerations\n");
    for l in loops {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            l.workload,
            l.id,
            l.function,
            RangeList(&l.ranges),
            l.ecr,
            l.iterations
        );
    }
    out
}
