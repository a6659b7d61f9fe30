use serde::{Deserialize, Serialize};

use crate::toyvm::{Category, Instruction, Reg};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub addr_calc: usize,
    pub control: usize,
    pub compute: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.addr_calc + self.control + self.compute
    }

    /// (addr-calc, control, compute) fractions; compute absorbs rounding so
    /// the three sum to exactly 1.
    pub fn fractions(&self) -> (f64, f64, f64) {
        let n = self.total();
        if n == 0 {
            return (0.0, 0.0, 1.0);
        }
        let a = self.addr_calc as f64 / n as f64;
        let c = self.control as f64 / n as f64;
        (a, c, 1.0 - a - c)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Use {
    None,
    AddressOnly,
    Other,
}

/// Splits a body into address-calculation, control and compute instructions.
///
/// A backward pass tracks how each register is used before it is next
/// overwritten. An instruction is address-calc when it is `lea` or when its
/// destination feeds only memory base/index operands; a register also used as
/// an ordinary source makes its producer compute.
pub fn classify_instructions(body: &[Instruction]) -> ClassCounts {
    let mut state = [Use::None; Reg::SLOTS];
    let mut counts = ClassCounts::default();
    for insn in body.iter().rev() {
        let cat = insn.category();
        if cat.is_control() {
            counts.control += 1;
        } else if cat == Category::AddressCalc
            || insn.dest.is_some_and(|d| state[d.slot()] == Use::AddressOnly)
        {
            counts.addr_calc += 1;
        } else {
            counts.compute += 1;
        }
        for w in insn.writes() {
            state[w.slot()] = Use::None;
        }
        if let Some(mem) = &insn.mem {
            for r in mem.regs() {
                if state[r.slot()] == Use::None {
                    state[r.slot()] = Use::AddressOnly;
                }
            }
        }
        for r in insn.sources.iter().filter_map(|s| s.reg()) {
            state[r.slot()] = Use::Other;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toyvm::asm::parse_instruction;

    fn body(lines: &[&str]) -> Vec<Instruction> {
        lines
            .iter()
            .map(|l| parse_instruction(l, &|_| Some(0)).unwrap())
            .collect()
    }

    #[test]
    fn five_instruction_body() {
        let b = body(&["lea r1, r2, 8", "ld r2, [r1]", "fadd f0, f0, f2", "cmp r2, 10", "jlt @0"]);
        let c = classify_instructions(&b);
        assert_eq!((c.addr_calc, c.control, c.compute), (1, 1, 3));
    }

    #[test]
    fn producer_of_address_only_register() {
        let b = body(&["add r1, r2, 16", "ld r3, [r1 + 8]", "add r4, r3, 1"]);
        assert_eq!(classify_instructions(&b).addr_calc, 1);
    }

    #[test]
    fn dual_use_is_compute() {
        let b = body(&["add r1, r2, 16", "ld r3, [r1]", "add r4, r1, 1"]);
        assert_eq!(classify_instructions(&b).addr_calc, 0);
    }

    #[test]
    fn overwritten_before_use() {
        let b = body(&["add r1, r2, 16", "mov r1, 0", "ld r3, [r1]"]);
        let c = classify_instructions(&b);
        // Only `mov r1, 0` feeds the load.
        assert_eq!(c.addr_calc, 1);
    }

    #[test]
    fn no_memory_no_addr_calc() {
        let b = body(&["add r1, r2, 16", "mul r3, r1, r1", "cmp r3, 4"]);
        assert_eq!(classify_instructions(&b).addr_calc, 0);
        let (a, c, k) = classify_instructions(&b).fractions();
        assert_eq!(a + c + k, 1.0);
    }
}
