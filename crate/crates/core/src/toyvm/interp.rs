//! Deterministic interpreter producing a [`DynamicProfile`].

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::isa::*;
use crate::error::VmError;
use crate::profile::{BranchRecord, DynamicProfile, DEFAULT_SAMPLE_CAP};

#[derive(Clone, Debug)]
pub struct ExecConfig {
    pub max_dyn: u64,
    /// Effective addresses kept per memory instruction.
    pub sample_cap: usize,
    /// Outcomes kept in order per branch.
    pub branch_cap: usize,
    pub max_call_depth: usize,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            max_dyn: 50_000_000,
            sample_cap: DEFAULT_SAMPLE_CAP,
            branch_cap: DEFAULT_SAMPLE_CAP,
            max_call_depth: 1024,
        }
    }
}

/// Runs `program` with memory filled from `seed`.
pub fn execute(program: &Program, seed: u64, max_dyn: u64) -> Result<DynamicProfile, VmError> {
    let config = ExecConfig {
        max_dyn,
        ..ExecConfig::default()
    };
    execute_with(program, &program.entry, seed, &config)
}

pub fn execute_with(
    program: &Program,
    workload: &str,
    seed: u64,
    config: &ExecConfig,
) -> Result<DynamicProfile, VmError> {
    program.validate().map_err(VmError::Invalid)?;
    Machine::new(program, seed, config).run(workload)
}

struct Machine<'a> {
    program: &'a Program,
    config: &'a ExecConfig,
    owner: Vec<usize>,
    int: [i64; INT_REGS as usize],
    float: [f64; FLOAT_REGS as usize],
    vector: [[f64; VEC_LANES]; VEC_REGS as usize],
    flags: Ordering,
    memory: Vec<u8>,
    aec: Vec<u64>,
    calls: Vec<u64>,
    samples: BTreeMap<usize, Vec<u64>>,
    branches: BTreeMap<usize, BranchRecord>,
}

impl<'a> Machine<'a> {
    fn new(program: &'a Program, seed: u64, config: &'a ExecConfig) -> Self {
        let listing = &program.listing;
        let mut owner = vec![0; listing.instructions.len()];
        for (f, func) in listing.functions.iter().enumerate() {
            owner[func.range()].fill(f);
        }
        let mut memory = vec![0u8; program.data_size as usize];
        ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut memory);
        Machine {
            program,
            config,
            owner,
            int: [0; INT_REGS as usize],
            float: [0.0; FLOAT_REGS as usize],
            vector: [[0.0; VEC_LANES]; VEC_REGS as usize],
            flags: Ordering::Equal,
            memory,
            aec: vec![0; listing.instructions.len()],
            calls: vec![0; listing.functions.len()],
            samples: BTreeMap::new(),
            branches: BTreeMap::new(),
        }
    }

    fn function_name(&self, pc: usize) -> String {
        self.program.listing.functions[self.owner[pc]].name.clone()
    }

    fn int_operand(&self, op: &Operand) -> i64 {
        match op {
            Operand::Reg(r) => self.int[r.index as usize],
            Operand::Imm(v) => *v,
        }
    }

    fn address(&self, insn: &Instruction) -> Result<usize, VmError> {
        let mem = insn.mem.as_ref().expect("memory instruction");
        let mut ea = self.int[mem.base.index as usize] as i128 + mem.offset as i128;
        if let Some(index) = mem.index {
            ea += self.int[index.index as usize] as i128;
        }
        if let Some(m) = mem.wrap {
            ea = ea.rem_euclid(m as i128);
        }
        let width = insn.opcode.data_width();
        if ea < 0 || ea + width as i128 > self.memory.len() as i128 {
            return Err(VmError::MemoryFault {
                instruction: insn.id,
                address: ea,
                width,
                data_size: self.program.data_size,
            });
        }
        Ok(ea as usize)
    }

    fn read_word(&self, at: usize) -> [u8; 8] {
        self.memory[at..at + 8].try_into().expect("8 bytes")
    }

    fn record_branch(&mut self, id: usize, taken: bool) {
        let rec = self.branches.entry(id).or_default();
        if taken {
            rec.taken += 1;
        } else {
            rec.not_taken += 1;
        }
        if rec.order.len() < self.config.branch_cap {
            rec.order.push(taken);
        }
    }

    fn run(mut self, workload: &str) -> Result<DynamicProfile, VmError> {
        let listing = &self.program.listing;
        let entry = listing
            .function_index(&self.program.entry)
            .ok_or_else(|| VmError::Invalid(format!("no entry `{}`", self.program.entry)))?;
        let mut pc = listing.functions[entry].start;
        self.calls[entry] += 1;
        let mut stack: Vec<usize> = Vec::new();
        let mut total: u64 = 0;

        loop {
            let Some(insn) = listing.instructions.get(pc) else {
                return Err(VmError::Invalid(format!("control reached {pc}, past the listing")));
            };
            let func = &listing.functions[self.owner[pc]];
            if pc >= func.end {
                return Err(VmError::Invalid(format!("fell off the end of `{}`", func.name)));
            }
            total += 1;
            if total > self.config.max_dyn {
                return Err(VmError::Truncated {
                    function: self.function_name(pc),
                    limit: self.config.max_dyn,
                });
            }
            self.aec[pc] += 1;
            let mut next = pc + 1;
            let d = insn.dest.map(|r| r.index as usize);
            use Opcode::*;
            match insn.opcode {
                Add | Sub | Mul | Div | Rem | And | Xor | Shl => {
                    let a = self.int_operand(&insn.sources[0]);
                    let b = self.int_operand(&insn.sources[1]);
                    let v = match insn.opcode {
                        Add => a.wrapping_add(b),
                        Sub => a.wrapping_sub(b),
                        Mul => a.wrapping_mul(b),
                        Div => {
                            if b == 0 {
                                0
                            } else {
                                a.wrapping_div(b)
                            }
                        }
                        Rem => {
                            if b == 0 {
                                0
                            } else {
                                a.wrapping_rem(b)
                            }
                        }
                        And => a & b,
                        Xor => a ^ b,
                        _ => a.wrapping_shl((b & 63) as u32),
                    };
                    self.int[d.unwrap()] = v;
                }
                Mov => self.int[d.unwrap()] = self.int_operand(&insn.sources[0]),
                Lea => {
                    let v = insn
                        .sources
                        .iter()
                        .fold(0i64, |acc, s| acc.wrapping_add(self.int_operand(s)));
                    self.int[d.unwrap()] = v;
                }
                Cmp => {
                    let a = self.int_operand(&insn.sources[0]);
                    let b = self.int_operand(&insn.sources[1]);
                    self.flags = a.cmp(&b);
                }
                Fadd | Fsub | Fmul | Fdiv => {
                    let a = self.float[insn.sources[0].reg().unwrap().index as usize];
                    let b = self.float[insn.sources[1].reg().unwrap().index as usize];
                    self.float[d.unwrap()] = match insn.opcode {
                        Fadd => a + b,
                        Fsub => a - b,
                        Fmul => a * b,
                        _ => a / b,
                    };
                }
                Fmov => {
                    self.float[d.unwrap()] = self.float[insn.sources[0].reg().unwrap().index as usize]
                }
                Vadd | Vmul => {
                    let a = self.vector[insn.sources[0].reg().unwrap().index as usize];
                    let b = self.vector[insn.sources[1].reg().unwrap().index as usize];
                    let mut out = [0.0; VEC_LANES];
                    for lane in 0..VEC_LANES {
                        out[lane] = if insn.opcode == Vadd {
                            a[lane] + b[lane]
                        } else {
                            a[lane] * b[lane]
                        };
                    }
                    self.vector[d.unwrap()] = out;
                }
                Ld | Fld | Vld | St | Fst | Vst => {
                    let at = self.address(insn)?;
                    let cap = self.config.sample_cap;
                    let s = self.samples.entry(pc).or_default();
                    if s.len() < cap {
                        s.push(at as u64);
                    }
                    match insn.opcode {
                        Ld => self.int[d.unwrap()] = i64::from_le_bytes(self.read_word(at)),
                        Fld => {
                            self.float[d.unwrap()] = f64::from_le_bytes(self.read_word(at));
                        }
                        Vld => {
                            let mut v = [0.0; VEC_LANES];
                            for (lane, x) in v.iter_mut().enumerate() {
                                *x = f64::from_le_bytes(self.read_word(at + 8 * lane));
                            }
                            self.vector[d.unwrap()] = v;
                        }
                        St => {
                            let v = self.int_operand(&insn.sources[0]);
                            self.memory[at..at + 8].copy_from_slice(&v.to_le_bytes());
                        }
                        Fst => {
                            let v = self.float[insn.sources[0].reg().unwrap().index as usize];
                            self.memory[at..at + 8].copy_from_slice(&v.to_le_bytes());
                        }
                        _ => {
                            let v = self.vector[insn.sources[0].reg().unwrap().index as usize];
                            for (lane, x) in v.iter().enumerate() {
                                let o = at + 8 * lane;
                                self.memory[o..o + 8].copy_from_slice(&x.to_le_bytes());
                            }
                        }
                    }
                }
                Jmp | Jeq | Jne | Jlt | Jle | Jgt | Jge => {
                    let taken = match insn.opcode {
                        Jmp => true,
                        Jeq => self.flags == Ordering::Equal,
                        Jne => self.flags != Ordering::Equal,
                        Jlt => self.flags == Ordering::Less,
                        Jle => self.flags != Ordering::Greater,
                        Jgt => self.flags == Ordering::Greater,
                        _ => self.flags != Ordering::Less,
                    };
                    self.record_branch(pc, taken);
                    if taken {
                        next = insn.target.unwrap();
                    }
                }
                Loop => {
                    let r = insn.sources[0].reg().unwrap().index as usize;
                    let bound = self.int_operand(&insn.sources[1]);
                    self.int[r] = self.int[r].wrapping_add(1);
                    let taken = self.int[r] < bound;
                    self.record_branch(pc, taken);
                    if taken {
                        next = insn.target.unwrap();
                    }
                }
                Call => {
                    if stack.len() >= self.config.max_call_depth {
                        return Err(VmError::StackOverflow(self.config.max_call_depth));
                    }
                    stack.push(pc + 1);
                    let target = insn.target.unwrap();
                    self.calls[self.owner[target]] += 1;
                    next = target;
                }
                Ret => match stack.pop() {
                    Some(r) => next = r,
                    None => break,
                },
                Halt => break,
                Unknown => {
                    return Err(VmError::Invalid(format!(
                        "instruction {pc} has no executable encoding"
                    )))
                }
            }
            pc = next;
        }

        let instructions = &listing.instructions;
        let bytes = |pick: fn(Category) -> bool| -> Vec<u64> {
            instructions
                .iter()
                .map(|i| {
                    if pick(i.category()) {
                        self.aec[i.id] * i.opcode.data_width() as u64
                    } else {
                        0
                    }
                })
                .collect()
        };
        let bytes_loaded = bytes(Category::is_load);
        let bytes_stored = bytes(Category::is_store);
        let mut histogram: BTreeMap<Opcode, u64> = BTreeMap::new();
        for i in instructions {
            if self.aec[i.id] > 0 {
                *histogram.entry(i.opcode).or_default() += self.aec[i.id];
            }
        }
        Ok(DynamicProfile {
            workload: workload.to_string(),
            listing: listing.clone(),
            total_dyn: total,
            aec: self.aec,
            function_calls: self.calls,
            sample_cap: self.config.sample_cap,
            bytes_loaded: Some(bytes_loaded),
            bytes_stored: Some(bytes_stored),
            address_samples: Some(self.samples),
            branches: Some(self.branches),
            opcode_histogram: Some(histogram),
            source_addresses: None,
        })
    }
}
