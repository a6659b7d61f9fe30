//! Text form of toy-ISA programs.
//!
//! ```text
//! ; comment
//! .data 4096            ; bytes of addressable memory
//! .entry main           ; optional, defaults to `main` or the first function
//! .func main
//!     mov r1, 0
//! top:
//!     ld r4, [r2 + r1 + 8]
//!     add r1, r1, 8
//!     cmp r1, 80
//!     jlt top
//!     call helper
//!     halt
//! .endfunc
//! .truth 2..6 10        ; ground-truth loop: ranges, iterations
//! ```
//!
//! Branch and call targets are either labels, function names (calls) or
//! absolute instruction ids written `@<id>`. Memory operands take the form
//! `[base (+ index)? (+|- offset)? (% modulus)?]`.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use super::isa::*;
use crate::error::AsmError;

fn err(line: usize, message: impl Into<String>) -> AsmError {
    AsmError {
        line,
        message: message.into(),
    }
}

fn parse_int(s: &str) -> Result<i64, String> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest.trim()),
        None => (false, s),
    };
    let value = if let Some(hex) = body.strip_prefix("0x") {
        i64::from_str_radix(hex, 16)
    } else {
        body.parse::<i64>()
    }
    .map_err(|_| format!("bad integer `{s}`"))?;
    Ok(if neg { -value } else { value })
}

fn parse_operand(s: &str) -> Result<Operand, String> {
    let s = s.trim();
    if s.starts_with(|c: char| c.is_ascii_alphabetic()) {
        s.parse::<Reg>().map(Operand::Reg)
    } else {
        parse_int(s).map(Operand::Imm)
    }
}

fn parse_mem(s: &str) -> Result<MemOperand, String> {
    let inner = s
        .trim()
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| format!("bad memory operand `{s}`"))?;
    let (addr, wrap) = match inner.split_once('%') {
        Some((a, m)) => {
            let m = parse_int(m)?;
            if m <= 0 {
                return Err(format!("modulus must be positive in `{s}`"));
            }
            (a, Some(m as u64))
        }
        None => (inner, None),
    };
    // Split into signed terms.
    let mut terms: Vec<(bool, String)> = Vec::new();
    let mut current = String::new();
    let mut negative = false;
    for c in addr.chars() {
        match c {
            '+' | '-' => {
                if !current.trim().is_empty() {
                    terms.push((negative, current.trim().to_string()));
                }
                current.clear();
                negative = c == '-';
            }
            _ => current.push(c),
        }
    }
    if !current.trim().is_empty() {
        terms.push((negative, current.trim().to_string()));
    }
    let mut regs = Vec::new();
    let mut offset = 0i64;
    for (neg, term) in terms {
        if term.starts_with(|c: char| c.is_ascii_alphabetic()) {
            if neg {
                return Err(format!("register terms cannot be subtracted in `{s}`"));
            }
            regs.push(term.parse::<Reg>()?);
        } else {
            let v = parse_int(&term)?;
            offset += if neg { -v } else { v };
        }
    }
    match regs.as_slice() {
        [base] => Ok(MemOperand {
            base: *base,
            index: None,
            offset,
            wrap,
        }),
        [base, index] => Ok(MemOperand {
            base: *base,
            index: Some(*index),
            offset,
            wrap,
        }),
        _ => Err(format!("memory operand needs a base and at most one index: `{s}`")),
    }
}

/// Parses one instruction. `resolve` maps label and function names to ids;
/// `@<id>` targets are always accepted.
pub fn parse_instruction(
    text: &str,
    resolve: &dyn Fn(&str) -> Option<usize>,
) -> Result<Instruction, String> {
    let text = text.trim();
    let (mnemonic, rest) = match text.split_once(char::is_whitespace) {
        Some((m, r)) => (m, r.trim()),
        None => (text, ""),
    };
    let opcode: Opcode = mnemonic.parse()?;
    let args: Vec<&str> = if rest.is_empty() {
        Vec::new()
    } else {
        rest.split(',').map(str::trim).collect()
    };
    let target = |s: &str| -> Result<usize, String> {
        if let Some(id) = s.strip_prefix('@') {
            id.parse().map_err(|_| format!("bad target `{s}`"))
        } else {
            resolve(s).ok_or_else(|| format!("undefined target `{s}`"))
        }
    };
    let mut insn = Instruction::new(opcode);
    let cat = opcode.category();
    match cat {
        Category::Load | Category::VectorLoad => {
            let [d, m] = args[..] else {
                return Err(format!("{mnemonic} expects `dest, [mem]`"));
            };
            insn.dest = Some(d.parse()?);
            insn.mem = Some(parse_mem(m)?);
        }
        Category::Store | Category::VectorStore => {
            let [m, s] = args[..] else {
                return Err(format!("{mnemonic} expects `[mem], src`"));
            };
            insn.mem = Some(parse_mem(m)?);
            insn.sources = vec![parse_operand(s)?];
        }
        Category::Branch => {
            let Some((last, init)) = args.split_last() else {
                return Err(format!("{mnemonic} expects a target"));
            };
            insn.target = Some(target(last)?);
            insn.sources = init
                .iter()
                .map(|a| parse_operand(a))
                .collect::<Result<_, _>>()?;
        }
        Category::Call => {
            let [t] = args[..] else {
                return Err("call expects one target".into());
            };
            insn.target = Some(target(t)?);
        }
        Category::Compare | Category::Ret | Category::Halt | Category::Unknown => {
            insn.sources = args
                .iter()
                .map(|a| parse_operand(a))
                .collect::<Result<_, _>>()?;
        }
        _ => {
            let Some((d, srcs)) = args.split_first() else {
                return Err(format!("{mnemonic} expects a destination"));
            };
            insn.dest = Some(d.parse()?);
            insn.sources = srcs
                .iter()
                .map(|a| parse_operand(a))
                .collect::<Result<_, _>>()?;
        }
    }
    insn.validate()?;
    Ok(insn)
}

/// Renders one instruction; `target` formats branch and call targets.
pub fn render_instruction(insn: &Instruction, target: &dyn Fn(&Instruction) -> String) -> String {
    let mut parts: Vec<String> = Vec::new();
    let cat = insn.category();
    if cat.is_store() {
        parts.push(insn.mem.expect("validated store").to_string());
        parts.extend(insn.sources.iter().map(|s| s.to_string()));
    } else {
        parts.extend(insn.dest.iter().map(|d| d.to_string()));
        if let Some(mem) = &insn.mem {
            parts.push(mem.to_string());
        }
        parts.extend(insn.sources.iter().map(|s| s.to_string()));
    }
    if insn.target.is_some() {
        parts.push(target(insn));
    }
    if parts.is_empty() {
        insn.opcode.mnemonic().to_string()
    } else {
        format!("{} {}", insn.opcode.mnemonic(), parts.join(", "))
    }
}

/// Renders with `@<id>` targets; the form used inside profile files.
pub fn render_absolute(insn: &Instruction) -> String {
    render_instruction(insn, &|i| format!("@{}", i.target.unwrap_or_default()))
}

pub fn parse_program(text: &str) -> Result<Program, AsmError> {
    struct Pending {
        line: usize,
        text: String,
    }
    let mut functions: Vec<Function> = Vec::new();
    let mut pending: Vec<Pending> = Vec::new();
    let mut labels: HashMap<String, usize> = HashMap::new();
    let mut data_size: Option<u64> = None;
    let mut entry: Option<String> = None;
    let mut truth: Vec<TruthLoop> = Vec::new();
    let mut open: Option<(String, usize, usize)> = None;

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let mut s = raw.split(';').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(dir) = s.strip_prefix('.') {
            let (name, arg) = match dir.split_once(char::is_whitespace) {
                Some((a, b)) => (a, b.trim()),
                None => (dir, ""),
            };
            match name {
                "data" => {
                    let v = parse_int(arg).map_err(|e| err(line, e))?;
                    if v < 0 {
                        return Err(err(line, "negative data size"));
                    }
                    data_size = Some(v as u64);
                }
                "entry" => entry = Some(arg.to_string()),
                "func" => {
                    if open.is_some() {
                        return Err(err(line, "nested .func"));
                    }
                    if arg.is_empty() {
                        return Err(err(line, ".func needs a name"));
                    }
                    open = Some((arg.to_string(), pending.len(), line));
                }
                "endfunc" => {
                    let (fname, start, _) = open.take().ok_or_else(|| err(line, "stray .endfunc"))?;
                    if functions.iter().any(|f| f.name == fname) {
                        return Err(err(line, format!("function `{fname}` defined twice")));
                    }
                    functions.push(Function {
                        name: fname,
                        start,
                        end: pending.len(),
                    });
                }
                "truth" => {
                    let (ranges, iters) = arg
                        .rsplit_once(char::is_whitespace)
                        .ok_or_else(|| err(line, ".truth expects `ranges iterations`"))?;
                    let iterations = iters
                        .trim()
                        .parse::<u64>()
                        .map_err(|_| err(line, "bad iteration count"))?;
                    let mut rs = Vec::new();
                    for r in ranges.split(',') {
                        let (a, b) = r
                            .trim()
                            .split_once("..")
                            .ok_or_else(|| err(line, format!("bad range `{r}`")))?;
                        let a = a.parse::<usize>().map_err(|_| err(line, "bad range start"))?;
                        let b = b.parse::<usize>().map_err(|_| err(line, "bad range end"))?;
                        rs.push(a..b);
                    }
                    truth.push(TruthLoop {
                        ranges: rs,
                        iterations,
                    });
                }
                other => return Err(err(line, format!("unknown directive `.{other}`"))),
            }
            continue;
        }
        // Leading labels.
        while let Some((label, rest)) = s.split_once(':') {
            let label = label.trim();
            if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                break;
            }
            if open.is_none() {
                return Err(err(line, "label outside .func"));
            }
            if labels.insert(label.to_string(), pending.len()).is_some() {
                return Err(err(line, format!("label `{label}` defined twice")));
            }
            s = rest.trim();
        }
        if s.is_empty() {
            continue;
        }
        if open.is_none() {
            return Err(err(line, "instruction outside .func"));
        }
        pending.push(Pending {
            line,
            text: s.to_string(),
        });
    }
    if let Some((name, _, line)) = open {
        return Err(err(line, format!("function `{name}` is missing .endfunc")));
    }

    let starts: HashMap<&str, usize> = functions
        .iter()
        .map(|f| (f.name.as_str(), f.start))
        .collect();
    let resolve = |name: &str| labels.get(name).copied().or_else(|| starts.get(name).copied());
    let mut instructions = Vec::with_capacity(pending.len());
    for (id, p) in pending.iter().enumerate() {
        let mut insn = parse_instruction(&p.text, &resolve).map_err(|e| err(p.line, e))?;
        insn.id = id;
        instructions.push(insn);
    }
    let entry = match entry {
        Some(e) => e,
        None if functions.iter().any(|f| f.name == "main") => "main".to_string(),
        None => functions
            .first()
            .map(|f| f.name.clone())
            .ok_or_else(|| err(0, "program defines no functions"))?,
    };
    let program = Program {
        listing: Listing {
            functions,
            instructions,
        },
        entry,
        data_size: data_size.unwrap_or(0),
        ground_truth: if truth.is_empty() { None } else { Some(truth) },
    };
    program.validate().map_err(|e| err(0, e))?;
    Ok(program)
}

pub fn format_program(program: &Program) -> String {
    let listing = &program.listing;
    let targets: BTreeSet<usize> = listing
        .instructions
        .iter()
        .filter(|i| i.category() == Category::Branch)
        .filter_map(|i| i.target)
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, ".data {}", program.data_size);
    let _ = writeln!(out, ".entry {}", program.entry);
    let name_of = |id: usize| {
        listing
            .functions
            .iter()
            .find(|f| f.start == id && !f.is_empty())
            .map(|f| f.name.clone())
            .unwrap_or_else(|| format!("@{id}"))
    };
    for f in &listing.functions {
        let _ = writeln!(out, ".func {}", f.name);
        for insn in &listing.instructions[f.range()] {
            if targets.contains(&insn.id) {
                let _ = writeln!(out, "L{}:", insn.id);
            }
            let text = render_instruction(insn, &|i| match i.category() {
                Category::Call => name_of(i.target.unwrap_or_default()),
                _ => format!("L{}", i.target.unwrap_or_default()),
            });
            let _ = writeln!(out, "    {text}");
        }
        let _ = writeln!(out, ".endfunc");
    }
    for t in program.ground_truth.iter().flatten() {
        let ranges: Vec<String> = t.ranges.iter().map(|r| format!("{}..{}", r.start, r.end)).collect();
        let _ = writeln!(out, ".truth {} {}", ranges.join(","), t.iterations);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
.data 1024
.func main
    mov r1, 0          ; counter
    mov r2, 64
top: ld r4, [r2 + r1 - 8]
    fld f1, [r2 + 16 % 512]
    st [r2 + r1], r4
    add r1, r1, 8
    cmp r1, 80
    jlt top
    call helper
    halt
.endfunc
.func helper
    vadd v0, v1, v2
    ret
.endfunc
.truth 2..8 10
";

    #[test]
    fn parses_and_round_trips() {
        let p = parse_program(SAMPLE).unwrap();
        assert_eq!(p.data_size, 1024);
        assert_eq!(p.entry, "main");
        assert_eq!(p.listing.functions.len(), 2);
        let ld = &p.listing.instructions[2];
        assert_eq!(ld.opcode, Opcode::Ld);
        let mem = ld.mem.unwrap();
        assert_eq!((mem.base, mem.index, mem.offset), (Reg::int(2), Some(Reg::int(1)), -8));
        assert_eq!(p.listing.instructions[3].mem.unwrap().wrap, Some(512));
        assert_eq!(p.listing.instructions[7].target, Some(2));
        assert_eq!(p.listing.instructions[8].target, Some(10));
        assert_eq!(p.ground_truth.as_ref().unwrap()[0].iterations, 10);
        let again = parse_program(&format_program(&p)).unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn absolute_targets() {
        let insn = parse_instruction("jne @7", &|_| None).unwrap();
        assert_eq!(insn.target, Some(7));
        assert_eq!(render_absolute(&insn), "jne @7");
        let l = parse_instruction("loop r15, 2727, @3", &|_| None).unwrap();
        assert_eq!(render_absolute(&l), "loop r15, 2727, @3");
    }

    #[test]
    fn reports_line_numbers() {
        let e = parse_program(".func main\n  add r1, r2\n.endfunc\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_program(".func main\n  jmp nowhere\n.endfunc\n").unwrap_err();
        assert!(e.message.contains("nowhere"));
        assert!(parse_program(".func main\n  halt\n").is_err());
    }

    #[test]
    fn branch_may_not_leave_function() {
        let text = ".func main\nx: halt\n.endfunc\n.func g\n  jmp x\n.endfunc\n";
        assert!(parse_program(text).is_err());
    }
}
