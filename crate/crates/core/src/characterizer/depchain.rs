//! Latency-weighted dependency chains over a loop body.
//!
//! A forward pass assigns each written location the cycle its value becomes
//! available: `t[dest] = max(t[src] for all inputs) + latency`. Inputs are
//! source and address registers, the flags for conditional branches, and
//! for loads the last store through an identical static memory operand.
//! The longest chain is the latest completion over the body.

use std::collections::HashMap;

use crate::error::ConfigError;
use crate::toyvm::{Category, Instruction, LatencyTable, MemOperand, Opcode, Reg};

/// A storage location an instruction can read or write.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Location {
    Reg(Reg),
    Flags,
    Memory(MemOperand),
}

pub fn inputs(insn: &Instruction) -> Vec<Location> {
    let mut v: Vec<Location> = insn.reads().into_iter().map(Location::Reg).collect();
    if insn.opcode.is_conditional_branch() && insn.opcode != Opcode::Loop {
        v.push(Location::Flags);
    }
    if insn.category().is_load() {
        v.push(Location::Memory(insn.mem.expect("load has a memory operand")));
    }
    v
}

pub fn outputs(insn: &Instruction) -> Vec<Location> {
    let mut v: Vec<Location> = insn.writes().into_iter().map(Location::Reg).collect();
    if insn.category() == Category::Compare {
        v.push(Location::Flags);
    }
    if insn.category().is_store() {
        v.push(Location::Memory(insn.mem.expect("store has a memory operand")));
    }
    v
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepChain {
    pub longest: u64,
    pub ilp: f64,
}

pub fn dependency_chain(body: &[Instruction], latencies: &LatencyTable) -> Result<DepChain, ConfigError> {
    let mut ready: HashMap<Location, u64> = HashMap::new();
    let mut longest = 0u64;
    for insn in body {
        let start = inputs(insn)
            .iter()
            .map(|l| ready.get(l).copied().unwrap_or(0))
            .max()
            .unwrap_or(0);
        let done = start + latencies.get(insn.opcode)? as u64;
        for out in outputs(insn) {
            ready.insert(out, done);
        }
        longest = longest.max(done);
    }
    let ilp = if longest == 0 {
        0.0
    } else {
        body.len() as f64 / longest as f64
    };
    Ok(DepChain { longest, ilp })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toyvm::asm::parse_instruction;

    fn body(lines: &[&str]) -> Vec<Instruction> {
        lines
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let mut insn = parse_instruction(l, &|_| Some(0)).unwrap();
                insn.id = i;
                insn
            })
            .collect()
    }

    #[test]
    fn add_then_mul() {
        let c = dependency_chain(&body(&["add r1, r2, 1", "mul r3, r1, r1"]), &LatencyTable::default()).unwrap();
        assert_eq!(c.longest, 4);
    }

    #[test]
    fn independent_adds() {
        let c = dependency_chain(&body(&["add r1, r2, 1", "add r3, r4, 1"]), &LatencyTable::default()).unwrap();
        assert_eq!(c.longest, 1);
        assert_eq!(c.ilp, 2.0);
    }

    #[test]
    fn single_instruction() {
        let c = dependency_chain(&body(&["fdiv f1, f2, f3"]), &LatencyTable::default()).unwrap();
        assert_eq!(c.longest, 15);
        assert_eq!(c.ilp, 1.0 / 15.0);
    }

    #[test]
    fn memory_chains_only_through_identical_operands() {
        let lat = LatencyTable::default();
        let same = body(&["mul r1, r1, 3", "st [r2 + 8], r1", "ld r3, [r2 + 8]"]);
        assert_eq!(dependency_chain(&same, &lat).unwrap().longest, 3 + 1 + 4);
        let other = body(&["mul r1, r1, 3", "st [r2 + 8], r1", "ld r3, [r2 + 16]"]);
        assert_eq!(dependency_chain(&other, &lat).unwrap().longest, 4);
    }

    #[test]
    fn branch_waits_on_compare() {
        let c = dependency_chain(&body(&["mul r1, r1, 3", "cmp r1, 5", "jlt @0"]), &LatencyTable::default()).unwrap();
        assert_eq!(c.longest, 5);
    }
}
