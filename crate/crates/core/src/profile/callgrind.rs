//! Best-effort import of Callgrind profile text dumped with instruction-level
//! positions (`--dump-instr=yes`).
//!
//! Supported subset: `positions:`/`events:` headers, `fn=`/`cfn=` with name
//! compression, `calls=` lines, absolute/relative/`*` positions and
//! `totals:`/`summary:` lines. Everything the format cannot carry (opcodes,
//! address samples, branch outcomes, bytes) is left absent.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::DynamicProfile;
use crate::error::ProfileError;
use crate::toyvm::{Function, Instruction, Listing, Opcode};

#[derive(Clone, Debug, PartialEq)]
pub struct CallgrindImport {
    pub profile: DynamicProfile,
    /// Functions with cost but no incoming `calls=` lines; given call count 1.
    pub roots: Vec<String>,
    pub warnings: Vec<String>,
}

fn parse_err(line: usize, record: &str, message: impl Into<String>) -> ProfileError {
    ProfileError::Parse {
        line,
        record: record.to_string(),
        message: message.into(),
    }
}

fn parse_number(s: &str) -> Option<u64> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

/// Resolves `(id) name` / `(id)` / `name` against the compression table.
fn resolve_name(spec: &str, table: &mut HashMap<String, String>) -> String {
    let spec = spec.trim();
    if let Some(rest) = spec.strip_prefix('(') {
        if let Some((id, name)) = rest.split_once(')') {
            let name = name.trim();
            if name.is_empty() {
                return table.get(id).cloned().unwrap_or_else(|| format!("({id})"));
            }
            table.insert(id.to_string(), name.to_string());
            return name.to_string();
        }
    }
    spec.to_string()
}

pub fn import_callgrind(path: &Path, event: &str) -> Result<CallgrindImport, ProfileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ProfileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "imported".into());
    parse_callgrind(&text, &name, event)
}

pub fn parse_callgrind(text: &str, workload: &str, event: &str) -> Result<CallgrindImport, ProfileError> {
    const HINT: &str = "re-profile with `valgrind --tool=callgrind --dump-instr=yes`";
    let mut positions: Vec<String> = vec!["line".into()];
    let mut events: Option<Vec<String>> = None;
    let mut event_col = 0usize;
    let mut names: HashMap<String, String> = HashMap::new();
    let mut files: HashMap<String, String> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    // function -> address -> cost
    let mut costs: HashMap<String, BTreeMap<u64, u64>> = HashMap::new();
    let mut calls: HashMap<String, u64> = HashMap::new();
    let mut current: Option<String> = None;
    let mut callee: Option<String> = None;
    let mut skip_next_cost = false;
    let mut last_pos: Vec<u64> = Vec::new();
    let mut declared_totals: Vec<(usize, u64)> = Vec::new();
    let mut saw_fn = false;
    let mut warnings = Vec::new();

    let touch = |f: &str, order: &mut Vec<String>, costs: &mut HashMap<String, BTreeMap<u64, u64>>| {
        if !costs.contains_key(f) {
            order.push(f.to_string());
            costs.insert(f.to_string(), BTreeMap::new());
        }
    };

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        if let Some((key, value)) = l.split_once(':') {
            let key = key.trim();
            if !key.contains(char::is_whitespace) && !key.contains('=') && !key.is_empty()
                && key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            {
                let value = value.trim();
                match key {
                    "positions" => positions = value.split_whitespace().map(String::from).collect(),
                    "events" => {
                        let ev: Vec<String> = value.split_whitespace().map(String::from).collect();
                        event_col = ev.iter().position(|e| e == event).ok_or_else(|| {
                            ProfileError::UnknownEvent {
                                event: event.to_string(),
                                available: ev.clone(),
                            }
                        })?;
                        events = Some(ev);
                    }
                    "totals" | "summary" => {
                        if let Some(v) = value.split_whitespace().nth(event_col).and_then(parse_number) {
                            declared_totals.push((line, v));
                        }
                    }
                    _ => {}
                }
                continue;
            }
        }
        if let Some((key, value)) = l.split_once('=') {
            match key {
                "fn" => {
                    if !positions.iter().any(|p| p == "instr") {
                        return Err(ProfileError::UnsupportedFormat(format!(
                            "positions are `{}`, without instruction addresses; {HINT}",
                            positions.join(" ")
                        )));
                    }
                    saw_fn = true;
                    let f = resolve_name(value, &mut names);
                    touch(&f, &mut order, &mut costs);
                    current = Some(f);
                }
                "cfn" => callee = Some(resolve_name(value, &mut names)),
                "calls" => {
                    let count = value
                        .split_whitespace()
                        .next()
                        .and_then(parse_number)
                        .ok_or_else(|| parse_err(line, "calls", "missing call count"))?;
                    let target = callee
                        .clone()
                        .ok_or_else(|| parse_err(line, "calls", "no preceding cfn="))?;
                    touch(&target, &mut order, &mut costs);
                    *calls.entry(target).or_default() += count;
                    skip_next_cost = true;
                }
                // file and object names live in their own compression table
                "fl" | "fi" | "fe" | "ob" | "cob" | "cfi" | "cfl" | "jump" | "jcnd" => {
                    if key != "jump" && key != "jcnd" {
                        resolve_name(value, &mut files);
                    }
                }
                _ => warnings.push(format!("line {line}: ignored record `{key}=`")),
            }
            continue;
        }

        // Cost line: positions then event costs.
        let fields: Vec<&str> = l.split_whitespace().collect();
        let np = positions.len();
        if events.is_none() {
            return Err(parse_err(line, "cost", "cost line before the `events:` header"));
        }
        if fields.len() < np {
            return Err(parse_err(line, "cost", "fewer fields than declared positions"));
        }
        if last_pos.len() != np {
            last_pos = vec![0; np];
        }
        let mut pos = Vec::with_capacity(np);
        for (k, field) in fields[..np].iter().enumerate() {
            let v = if *field == "*" {
                last_pos[k]
            } else if let Some(d) = field.strip_prefix('+') {
                last_pos[k]
                    + parse_number(d).ok_or_else(|| parse_err(line, "cost", format!("bad position `{field}`")))?
            } else if let Some(d) = field.strip_prefix('-') {
                last_pos[k]
                    .checked_sub(parse_number(d).ok_or_else(|| {
                        parse_err(line, "cost", format!("bad position `{field}`"))
                    })?)
                    .ok_or_else(|| parse_err(line, "cost", "relative position below zero"))?
            } else {
                parse_number(field).ok_or_else(|| parse_err(line, "cost", format!("bad position `{field}`")))?
            };
            pos.push(v);
        }
        last_pos = pos.clone();
        if skip_next_cost {
            // Inclusive cost of the preceding call; not this instruction's own count.
            skip_next_cost = false;
            continue;
        }
        let cost = match fields.get(np + event_col) {
            Some(s) => parse_number(s).ok_or_else(|| parse_err(line, "cost", format!("bad cost `{s}`")))?,
            None => 0,
        };
        let f = current
            .as_ref()
            .ok_or_else(|| parse_err(line, "cost", "cost line outside a fn= block"))?;
        let instr_col = positions.iter().position(|p| p == "instr").expect("checked at fn=");
        *costs.get_mut(f).expect("touched").entry(pos[instr_col]).or_default() += cost;
    }

    if !saw_fn {
        return Err(ProfileError::UnsupportedFormat(format!(
            "no `fn=` records found; {HINT}"
        )));
    }

    let mut listing = Listing::default();
    let mut aec = Vec::new();
    let mut addrs = Vec::new();
    let mut function_calls = Vec::new();
    let mut roots = Vec::new();
    for f in &order {
        let start = listing.instructions.len();
        for (&addr, &cost) in &costs[f] {
            let mut insn = Instruction::new(Opcode::Unknown);
            insn.id = listing.instructions.len();
            listing.instructions.push(insn);
            aec.push(cost);
            addrs.push(addr);
        }
        let end = listing.instructions.len();
        let called = calls.get(f).copied();
        let count = match called {
            Some(c) => c,
            None if aec[start..end].iter().any(|&c| c > 0) => {
                roots.push(f.clone());
                1
            }
            None => 0,
        };
        function_calls.push(count);
        listing.functions.push(Function {
            name: f.clone(),
            start,
            end,
        });
    }
    let total: u64 = aec.iter().sum();
    for (line, declared) in declared_totals {
        if declared != total {
            warnings.push(format!(
                "line {line}: declared total {declared} differs from the sum of costs {total}; left as is"
            ));
        }
    }
    let mut profile = DynamicProfile::empty(workload);
    profile.listing = listing;
    profile.aec = aec;
    profile.function_calls = function_calls;
    profile.total_dyn = total;
    profile.bytes_loaded = None;
    profile.bytes_stored = None;
    profile.address_samples = None;
    profile.branches = None;
    profile.opcode_histogram = None;
    profile.source_addresses = Some(addrs);
    Ok(CallgrindImport {
        profile,
        roots,
        warnings,
    })
}
