//! Micro-benchmark synthesis: one counted-loop function per source loop,
//! called once each from a driver, then checked for mix equivalence.

use serde::{Deserialize, Serialize};

use crate::error::SynthError;
use crate::loopfinder::Loop;
use crate::toyvm::{Function, Instruction, Listing, Opcode, Operand, Program, Reg, INT_REGS};

mod mix;

pub use mix::{run_micro, verify_mix, MixReport, MixRow};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub buffer_size: u64,
    pub max_body: usize,
    /// Preferred loop counter; integer register index.
    pub counter: u8,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            buffer_size: 1 << 20,
            max_body: 4096,
            counter: INT_REGS - 1,
        }
    }
}

/// Where a synthesized function came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub function: String,
    pub workload: String,
    pub loop_id: usize,
    pub iterations: u64,
    pub counter: Reg,
    /// Register merged into another to free a counter, as (from, into).
    pub renamed: Option<(Reg, Reg)>,
    /// Source ids of the body copies, in emitted order.
    pub body_sources: Vec<usize>,
    /// Synthesized id of the first body copy.
    pub body_start: usize,
    /// Source ids of control instructions dropped from the body.
    pub stripped: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MicroBenchmark {
    pub program: Program,
    pub provenance: Vec<Provenance>,
    pub buffer_size: u64,
    pub warnings: Vec<String>,
}

impl MicroBenchmark {
    /// Upper bound on the dynamic instructions of one run.
    pub fn dynamic_bound(&self) -> u64 {
        let loops: u64 = self
            .provenance
            .iter()
            .map(|p| p.iterations * (p.body_sources.len() as u64 + 1) + 3)
            .sum();
        loops + self.provenance.len() as u64 + 1
    }
}

/// Widest access of the instruction set.
pub fn max_data_width() -> u32 {
    Opcode::ALL.iter().map(|o| o.data_width()).max().unwrap_or(0)
}

/// Removes every control instruction, returning the kept body and the
/// removed instructions.
pub fn strip_inner_control(body: &[Instruction]) -> (Vec<Instruction>, Vec<Instruction>) {
    body.iter().cloned().partition(|i| !i.category().is_control())
}

fn rename(insn: &mut Instruction, from: Reg, into: Reg) {
    let swap = |r: &mut Reg| {
        if *r == from {
            *r = into;
        }
    };
    if let Some(d) = &mut insn.dest {
        swap(d);
    }
    for s in &mut insn.sources {
        if let Operand::Reg(r) = s {
            swap(r);
        }
    }
    if let Some(m) = &mut insn.mem {
        swap(&mut m.base);
        if let Some(i) = &mut m.index {
            swap(i);
        }
    }
}

/// Picks a counter register the body does not touch. When the body uses
/// every integer register, the preferred counter's uses are merged into the
/// lowest other register first.
pub fn fix_counter_conflict(body: &[Instruction], preferred: Reg) -> (Vec<Instruction>, Reg, Option<(Reg, Reg)>) {
    let touched = |r: Reg| body.iter().any(|i| i.touches(r));
    if !touched(preferred) {
        return (body.to_vec(), preferred, None);
    }
    if let Some(free) = (0..INT_REGS).map(Reg::int).find(|r| !touched(*r)) {
        return (body.to_vec(), free, None);
    }
    let into = (0..INT_REGS)
        .map(Reg::int)
        .find(|r| *r != preferred)
        .expect("more than one integer register");
    let mut out = body.to_vec();
    for insn in &mut out {
        rename(insn, preferred, into);
    }
    (out, preferred, Some((preferred, into)))
}

/// Reduces every effective address into `[0, buffer - max width)`.
pub fn clamp_memory(body: &[Instruction], buffer_size: u64) -> Result<Vec<Instruction>, SynthError> {
    let width = max_data_width();
    if buffer_size <= width as u64 {
        return Err(SynthError::BufferTooSmall {
            buffer: buffer_size,
            width,
        });
    }
    let limit = buffer_size - width as u64;
    Ok(body
        .iter()
        .cloned()
        .map(|mut insn| {
            if let Some(m) = &mut insn.mem {
                m.wrap = Some(match m.wrap {
                    Some(w) if w <= limit => w,
                    _ => limit,
                });
            }
            insn
        })
        .collect())
}

fn function_name(index: usize, lp: &Loop) -> String {
    let clean: String = lp
        .workload
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    format!("m{index}_{clean}_{}", lp.id)
}

pub fn synthesize(loops: &[Loop], cfg: &SynthConfig) -> Result<MicroBenchmark, SynthError> {
    if cfg.counter >= INT_REGS {
        return Err(SynthError::Vm(crate::error::VmError::Invalid(format!(
            "counter register r{} does not exist",
            cfg.counter
        ))));
    }
    let mut warnings = Vec::new();
    let mut usable = Vec::new();
    for lp in loops {
        if lp.iterations == 0 {
            warnings.push(format!("loop {} has no iterations; skipped", lp.key()));
            continue;
        }
        if lp.body.len() > cfg.max_body {
            return Err(SynthError::BodyTooLong {
                loop_id: lp.key(),
                len: lp.body.len(),
                limit: cfg.max_body,
            });
        }
        if let Some(i) = lp.body.iter().find(|i| i.opcode == Opcode::Unknown) {
            return Err(SynthError::Unsupported {
                loop_id: lp.key(),
                instruction: i.id,
            });
        }
        usable.push(lp);
    }
    if usable.is_empty() {
        return Err(SynthError::NoLoops);
    }
    let mut listing = Listing::default();
    let mut provenance = Vec::new();
    let push = |listing: &mut Listing, mut insn: Instruction| {
        insn.id = listing.instructions.len();
        listing.instructions.push(insn);
        listing.instructions.len() - 1
    };
    for (index, lp) in usable.iter().enumerate() {
        let (kept, removed) = strip_inner_control(&lp.body);
        let (kept, counter, renamed) = fix_counter_conflict(&kept, Reg::int(cfg.counter));
        let kept = clamp_memory(&kept, cfg.buffer_size)?;
        let name = function_name(index, lp);
        let start = listing.instructions.len();
        push(
            &mut listing,
            Instruction::new(Opcode::Mov).with_dest(counter).with_sources([Operand::Imm(0)]),
        );
        let body_start = listing.instructions.len();
        for insn in &kept {
            push(&mut listing, insn.clone());
        }
        push(
            &mut listing,
            Instruction::new(Opcode::Loop)
                .with_sources([Operand::Reg(counter), Operand::Imm(lp.iterations as i64)])
                .with_target(body_start),
        );
        push(&mut listing, Instruction::new(Opcode::Ret));
        listing.functions.push(Function {
            name: name.clone(),
            start,
            end: listing.instructions.len(),
        });
        provenance.push(Provenance {
            function: name,
            workload: lp.workload.clone(),
            loop_id: lp.id,
            iterations: lp.iterations,
            counter,
            renamed,
            body_sources: kept.iter().map(|i| i.id).collect(),
            body_start,
            stripped: removed.iter().map(|i| i.id).collect(),
        });
    }
    let main_start = listing.instructions.len();
    for f in listing.functions.clone() {
        push(&mut listing, Instruction::new(Opcode::Call).with_target(f.start));
    }
    push(&mut listing, Instruction::new(Opcode::Halt));
    listing.functions.push(Function {
        name: "main".into(),
        start: main_start,
        end: listing.instructions.len(),
    });
    let program = Program {
        listing,
        entry: "main".into(),
        data_size: cfg.buffer_size,
        ground_truth: None,
    };
    program
        .validate()
        .map_err(|e| SynthError::Vm(crate::error::VmError::Invalid(e)))?;
    Ok(MicroBenchmark {
        program,
        provenance,
        buffer_size: cfg.buffer_size,
        warnings,
    })
}

/// Integer registers an instruction list touches.
pub fn touched_int_regs(body: &[Instruction]) -> Vec<Reg> {
    (0..INT_REGS)
        .map(Reg::int)
        .filter(|r| body.iter().any(|i| i.touches(*r)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loopfinder::Ecr;
    use crate::toyvm::MemOperand;

    fn add(d: u8, a: u8) -> Instruction {
        Instruction::new(Opcode::Add)
            .with_dest(Reg::int(d))
            .with_sources([Operand::Reg(Reg::int(a)), Operand::Imm(1)])
    }

    fn lp(body: Vec<Instruction>, iterations: u64) -> Loop {
        Loop {
            id: 0,
            workload: "w".into(),
            function: "f".into(),
            ranges: vec![0..body.len()],
            ecr: Ecr::from_integer(iterations),
            iterations,
            body,
        }
    }

    #[test]
    fn counter_choice() {
        let (b, c, r) = fix_counter_conflict(&[add(0, 0)], Reg::int(0));
        assert_eq!((c, r), (Reg::int(1), None));
        assert_eq!(b, vec![add(0, 0)]);
        let (_, c, _) = fix_counter_conflict(&[add(7, 3)], Reg::int(15));
        assert_eq!(c, Reg::int(15));
        let all: Vec<Instruction> = (0..INT_REGS).map(|r| add(r, r)).collect();
        let (b, c, r) = fix_counter_conflict(&all, Reg::int(15));
        assert_eq!(c, Reg::int(15));
        assert_eq!(r, Some((Reg::int(15), Reg::int(0))));
        assert!(!b.iter().any(|i| i.touches(Reg::int(15))));
        assert_eq!(b.len(), all.len());
    }

    #[test]
    fn strips_branches() {
        let body = vec![add(1, 1), Instruction::new(Opcode::Jge).with_target(0), add(2, 2)];
        let (kept, removed) = strip_inner_control(&body);
        assert_eq!(kept, vec![add(1, 1), add(2, 2)]);
        assert_eq!(removed.len(), 1);
        let (kept, removed) = strip_inner_control(&kept);
        assert_eq!((kept.len(), removed.len()), (2, 0));
    }

    #[test]
    fn clamping() {
        let ld = Instruction::new(Opcode::Ld)
            .with_dest(Reg::int(1))
            .with_mem(MemOperand::base(Reg::int(2), (1 << 20) + 8));
        let out = clamp_memory(&[ld], 1 << 20).unwrap();
        let m = out[0].mem.unwrap();
        assert_eq!(m.wrap, Some((1 << 20) - max_data_width() as u64));
        let ea = (m.offset as u64) % m.wrap.unwrap();
        assert!(ea + 8 <= 1 << 20);
        assert!(matches!(clamp_memory(&[], 16), Err(SynthError::BufferTooSmall { .. })));
    }

    #[test]
    fn empty_and_zero_iteration_inputs() {
        assert!(matches!(synthesize(&[], &SynthConfig::default()), Err(SynthError::NoLoops)));
        assert!(matches!(
            synthesize(&[lp(vec![add(1, 1)], 0)], &SynthConfig::default()),
            Err(SynthError::NoLoops)
        ));
    }

    #[test]
    fn idempotent() {
        let l = [lp(vec![add(1, 1), add(2, 1)], 2727)];
        let cfg = SynthConfig::default();
        assert_eq!(synthesize(&l, &cfg).unwrap(), synthesize(&l, &cfg).unwrap());
    }
}
