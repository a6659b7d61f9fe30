//! Native profile files: versioned, one record per line.
//!
//! ```text
//! loopcull-profile 1
//! workload "name"
//! total-dyn 1234
//! sample-cap 4096
//! present bytes-loaded bytes-stored samples branches histogram
//! func main 0 12 1                 ; name start end calls
//! insn 3 10 ld r3, [r2]            ; id aec text (targets as @id)
//! source 3 4198400                 ; imported instruction address
//! loaded 3 80                      ; nonzero bytes-loaded entries
//! stored 5 80
//! samples 3 0 8 16 24              ; id then addresses
//! branch 9 9 1 tttttttttn          ; id taken not-taken order (`-` if empty)
//! hist ld 10
//! end
//! ```
//!
//! Optional fields not named on the `present` line are absent (unavailable).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{BranchRecord, DynamicProfile};
use crate::error::ProfileError;
use crate::toyvm::asm::{parse_instruction, render_absolute};
use crate::toyvm::{Function, Opcode};

pub const NATIVE_VERSION: u32 = 1;
const MAGIC: &str = "loopcull-profile";

pub fn write_native(p: &DynamicProfile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {NATIVE_VERSION}");
    let _ = writeln!(
        out,
        "workload {}",
        serde_json::to_string(&p.workload).expect("string serializes")
    );
    let _ = writeln!(out, "total-dyn {}", p.total_dyn);
    let _ = writeln!(out, "sample-cap {}", p.sample_cap);
    let mut present = vec!["present"];
    for (name, has) in [
        ("bytes-loaded", p.bytes_loaded.is_some()),
        ("bytes-stored", p.bytes_stored.is_some()),
        ("samples", p.address_samples.is_some()),
        ("branches", p.branches.is_some()),
        ("histogram", p.opcode_histogram.is_some()),
        ("sources", p.source_addresses.is_some()),
    ] {
        if has {
            present.push(name);
        }
    }
    let _ = writeln!(out, "{}", present.join(" "));
    for (f, calls) in p.listing.functions.iter().zip(&p.function_calls) {
        let _ = writeln!(out, "func {} {} {} {calls}", f.name, f.start, f.end);
    }
    for (insn, aec) in p.listing.instructions.iter().zip(&p.aec) {
        let _ = writeln!(out, "insn {} {aec} {}", insn.id, render_absolute(insn));
    }
    if let Some(src) = &p.source_addresses {
        for (id, a) in src.iter().enumerate() {
            let _ = writeln!(out, "source {id} {a}");
        }
    }
    for (tag, bytes) in [("loaded", &p.bytes_loaded), ("stored", &p.bytes_stored)] {
        for (id, b) in bytes.iter().flatten().enumerate() {
            if *b != 0 {
                let _ = writeln!(out, "{tag} {id} {b}");
            }
        }
    }
    for (id, s) in p.address_samples.iter().flatten() {
        let _ = write!(out, "samples {id}");
        for a in s {
            let _ = write!(out, " {a}");
        }
        out.push('\n');
    }
    for (id, b) in p.branches.iter().flatten() {
        let order: String = if b.order.is_empty() {
            "-".into()
        } else {
            b.order.iter().map(|&t| if t { 't' } else { 'n' }).collect()
        };
        let _ = writeln!(out, "branch {id} {} {} {order}", b.taken, b.not_taken);
    }
    for (op, n) in p.opcode_histogram.iter().flatten() {
        let _ = writeln!(out, "hist {op} {n}");
    }
    out.push_str("end\n");
    out
}

pub fn save_native(p: &DynamicProfile, path: &Path) -> Result<(), ProfileError> {
    std::fs::write(path, write_native(p)).map_err(|source| ProfileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_native(path: &Path) -> Result<DynamicProfile, ProfileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ProfileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_native(&text)
}

struct Cursor {
    line: usize,
    record: String,
}

impl Cursor {
    fn err(&self, message: impl Into<String>) -> ProfileError {
        ProfileError::Parse {
            line: self.line,
            record: self.record.clone(),
            message: message.into(),
        }
    }

    fn num<T: std::str::FromStr>(&self, field: Option<&str>, what: &str) -> Result<T, ProfileError> {
        let s = field.ok_or_else(|| self.err(format!("missing {what}")))?;
        s.parse().map_err(|_| self.err(format!("bad {what} `{s}`")))
    }

    fn index(&self, id: usize, len: usize) -> Result<usize, ProfileError> {
        if id < len {
            Ok(id)
        } else {
            Err(self.err(format!("instruction {id} not declared")))
        }
    }
}

pub fn parse_native(text: &str) -> Result<DynamicProfile, ProfileError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or(ProfileError::Parse {
        line: 1,
        record: "header".into(),
        message: "empty file".into(),
    })?;
    let mut head = header.split_whitespace();
    if head.next() != Some(MAGIC) {
        return Err(ProfileError::Parse {
            line: 1,
            record: "header".into(),
            message: format!("expected `{MAGIC} <version>`"),
        });
    }
    let found = head.next().unwrap_or("").to_string();
    if found != NATIVE_VERSION.to_string() {
        return Err(ProfileError::Version {
            found,
            expected: NATIVE_VERSION,
        });
    }

    let mut p = DynamicProfile::empty("");
    p.bytes_loaded = None;
    p.bytes_stored = None;
    p.address_samples = None;
    p.branches = None;
    p.opcode_histogram = None;
    let mut total_dyn: Option<u64> = None;
    let mut ended = false;
    let mut last_line = 1;

    for (line, raw) in lines {
        last_line = line;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        if ended {
            return Err(ProfileError::Parse {
                line,
                record: "end".into(),
                message: "content after end record".into(),
            });
        }
        let (record, rest) = raw.split_once(' ').unwrap_or((raw, ""));
        let c = Cursor {
            line,
            record: record.to_string(),
        };
        let mut f = rest.split_whitespace();
        let n = p.listing.instructions.len();
        match record {
            "workload" => {
                p.workload = serde_json::from_str(rest).map_err(|e| c.err(e.to_string()))?;
            }
            "total-dyn" => total_dyn = Some(c.num(f.next(), "count")?),
            "sample-cap" => p.sample_cap = c.num(f.next(), "cap")?,
            "present" => {
                for name in f {
                    match name {
                        "bytes-loaded" => p.bytes_loaded = Some(Vec::new()),
                        "bytes-stored" => p.bytes_stored = Some(Vec::new()),
                        "samples" => p.address_samples = Some(BTreeMap::new()),
                        "branches" => p.branches = Some(BTreeMap::new()),
                        "histogram" => p.opcode_histogram = Some(BTreeMap::new()),
                        "sources" => p.source_addresses = Some(Vec::new()),
                        other => return Err(c.err(format!("unknown field `{other}`"))),
                    }
                }
            }
            "func" => {
                let name = f.next().ok_or_else(|| c.err("missing name"))?.to_string();
                let start = c.num(f.next(), "start")?;
                let end = c.num(f.next(), "end")?;
                let calls = c.num(f.next(), "call count")?;
                p.listing.functions.push(Function { name, start, end });
                p.function_calls.push(calls);
            }
            "insn" => {
                let mut parts = rest.splitn(3, ' ');
                let id: usize = c.num(parts.next(), "id")?;
                let aec: u64 = c.num(parts.next(), "count")?;
                if id != n {
                    return Err(c.err(format!("expected instruction {n}, found {id}")));
                }
                let body = parts.next().ok_or_else(|| c.err("missing instruction text"))?;
                let mut insn = parse_instruction(body, &|_| None).map_err(|e| c.err(e))?;
                insn.id = id;
                p.listing.instructions.push(insn);
                p.aec.push(aec);
            }
            "source" => {
                let id = c.index(c.num(f.next(), "id")?, n)?;
                let addr = c.num(f.next(), "address")?;
                let src = p
                    .source_addresses
                    .as_mut()
                    .ok_or_else(|| c.err("sources not declared present"))?;
                if id != src.len() {
                    return Err(c.err("source records out of order"));
                }
                src.push(addr);
            }
            "loaded" | "stored" => {
                let id = c.index(c.num(f.next(), "id")?, n)?;
                let b = c.num(f.next(), "bytes")?;
                let v = if record == "loaded" {
                    p.bytes_loaded.as_mut()
                } else {
                    p.bytes_stored.as_mut()
                }
                .ok_or_else(|| c.err("field not declared present"))?;
                v.resize(n, 0);
                v[id] = b;
            }
            "samples" => {
                let id = c.index(c.num(f.next(), "id")?, n)?;
                let addrs = f
                    .map(|a| a.parse::<u64>().map_err(|_| c.err(format!("bad address `{a}`"))))
                    .collect::<Result<Vec<_>, _>>()?;
                p.address_samples
                    .as_mut()
                    .ok_or_else(|| c.err("samples not declared present"))?
                    .insert(id, addrs);
            }
            "branch" => {
                let id = c.index(c.num(f.next(), "id")?, n)?;
                let taken = c.num(f.next(), "taken count")?;
                let not_taken = c.num(f.next(), "not-taken count")?;
                let order = match f.next() {
                    Some("-") => Vec::new(),
                    Some(s) => s
                        .chars()
                        .map(|ch| match ch {
                            't' => Ok(true),
                            'n' => Ok(false),
                            _ => Err(c.err(format!("bad outcome `{ch}`"))),
                        })
                        .collect::<Result<_, _>>()?,
                    None => return Err(c.err("missing outcome order")),
                };
                p.branches
                    .as_mut()
                    .ok_or_else(|| c.err("branches not declared present"))?
                    .insert(
                        id,
                        BranchRecord {
                            taken,
                            not_taken,
                            order,
                        },
                    );
            }
            "hist" => {
                let op: Opcode = f
                    .next()
                    .ok_or_else(|| c.err("missing opcode"))?
                    .parse()
                    .map_err(|e: String| c.err(e))?;
                let count = c.num(f.next(), "count")?;
                p.opcode_histogram
                    .as_mut()
                    .ok_or_else(|| c.err("histogram not declared present"))?
                    .insert(op, count);
            }
            "end" => ended = true,
            other => return Err(c.err(format!("unknown record `{other}`"))),
        }
    }
    if !ended {
        return Err(ProfileError::Parse {
            line: last_line,
            record: "end".into(),
            message: "file truncated before the end record".into(),
        });
    }
    let n = p.listing.instructions.len();
    for v in [&mut p.bytes_loaded, &mut p.bytes_stored].into_iter().flatten() {
        v.resize(n, 0);
    }
    p.total_dyn = total_dyn.ok_or(ProfileError::Parse {
        line: last_line,
        record: "total-dyn".into(),
        message: "missing".into(),
    })?;
    p.listing.validate().map_err(|message| ProfileError::Parse {
        line: last_line,
        record: "func".into(),
        message,
    })?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_round_trip() {
        let p = DynamicProfile::empty("nothing here");
        assert_eq!(parse_native(&write_native(&p)).unwrap(), p);
    }

    #[test]
    fn version_mismatch() {
        let text = write_native(&DynamicProfile::empty("x")).replacen(" 1\n", " 7\n", 1);
        assert!(matches!(
            parse_native(&text),
            Err(ProfileError::Version { found, expected: 1 }) if found == "7"
        ));
    }

    #[test]
    fn missing_end_is_truncation() {
        let text = "loopcull-profile 1\nworkload \"x\"\ntotal-dyn 0\n";
        let e = parse_native(text).unwrap_err();
        assert!(e.to_string().contains("truncated"), "{e}");
    }
}
