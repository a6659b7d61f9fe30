//! Synthetic workloads with ground-truth loop labels.
//!
//! Register conventions of generated code:
//! `r1..r4` loop counters (one per nesting level), `r5..r7` stream pointers,
//! `r8`/`r9` scratch, `r10..r14` integer compute, `r15` unused.
//! Each loop structure lives in its own function, called `calls` times from
//! `main`, so its ECR equals the per-call trip product.

use std::ops::{Range, RangeInclusive};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::isa::*;
use crate::error::SpecError;

/// Nesting levels supported by the generator (one counter register each).
pub const MAX_DEPTH: usize = 4;
/// Upper bound on generated data memory.
pub const MAX_DATA: u64 = 256 << 20;

const STENCIL_WIDTH: i64 = 32;
const TRANSPOSE_ROWS: i64 = 8;
const RANDOM_TABLE: i64 = 512;
const HISTOGRAM_BINS: i64 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mix {
    pub int: f64,
    pub float: f64,
    pub vector: f64,
}

impl Default for Mix {
    fn default() -> Self {
        Mix {
            int: 0.6,
            float: 0.3,
            vector: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PatternKind {
    None,
    FixedStride { stride: i64 },
    Alternating,
    Random,
    Stencil,
    Transpose,
    Histogram,
    MultiStream,
}

impl PatternKind {
    pub fn touches_memory(self) -> bool {
        self != PatternKind::None
    }

    pub fn name(self) -> &'static str {
        match self {
            PatternKind::None => "none",
            PatternKind::FixedStride { .. } => "fixed-stride",
            PatternKind::Alternating => "alternating",
            PatternKind::Random => "random",
            PatternKind::Stencil => "stencil",
            PatternKind::Transpose => "transpose",
            PatternKind::Histogram => "histogram",
            PatternKind::MultiStream => "multi-stream",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "shape")]
pub enum LoopShape {
    Linear { trip: u64 },
    /// Trip counts from the outermost level inwards.
    Nested { trips: Vec<u64> },
    /// `taken` of the `trip` iterations run the then-arm, the rest the else-arm.
    Conditional { trip: u64, taken: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopSpec {
    pub shape: LoopShape,
    pub calls: u64,
    /// Compute instructions in the innermost (or always-executed) body.
    pub body_len: usize,
    pub mix: Mix,
    pub pattern: PatternKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub name: String,
    /// Serial instructions at the start of `main`.
    pub prologue: usize,
    /// Fixed data size; computed from the loops when absent.
    pub data_size: Option<u64>,
    pub loops: Vec<LoopSpec>,
}

/// Ranges from which [`WorkloadSpec::sample`] draws a workload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub linear: RangeInclusive<usize>,
    pub nested: RangeInclusive<usize>,
    pub conditional: RangeInclusive<usize>,
    pub depth: RangeInclusive<usize>,
    pub trip: RangeInclusive<u64>,
    pub calls: RangeInclusive<u64>,
    pub body_len: RangeInclusive<usize>,
    pub prologue: RangeInclusive<usize>,
    pub mix: Mix,
    pub patterns: Vec<PatternKind>,
    /// Chance that an inner nesting level gets trip count 1.
    pub tie_probability: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            linear: 1..=3,
            nested: 0..=2,
            conditional: 0..=2,
            depth: 2..=3,
            trip: 2..=40,
            calls: 1..=4,
            body_len: 1..=12,
            prologue: 4..=32,
            mix: Mix::default(),
            patterns: vec![
                PatternKind::None,
                PatternKind::FixedStride { stride: 8 },
                PatternKind::FixedStride { stride: -16 },
                PatternKind::Alternating,
                PatternKind::Random,
                PatternKind::Stencil,
                PatternKind::Transpose,
                PatternKind::Histogram,
                PatternKind::MultiStream,
            ],
            tie_probability: 0.1,
        }
    }
}

impl WorkloadSpec {
    pub fn sample(name: impl Into<String>, params: &GeneratorParams, seed: u64) -> WorkloadSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
        let mut loops = Vec::new();
        let counts = [
            rng.random_range(params.linear.clone()),
            rng.random_range(params.nested.clone()),
            rng.random_range(params.conditional.clone()),
        ];
        for (kind, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                let shape = match kind {
                    0 => LoopShape::Linear {
                        trip: rng.random_range(params.trip.clone()),
                    },
                    1 => {
                        let depth = rng.random_range(params.depth.clone()).clamp(2, MAX_DEPTH);
                        let trips = (0..depth)
                            .map(|level| {
                                if level > 0 && rng.random_bool(params.tie_probability) {
                                    1
                                } else {
                                    // Keep the product moderate.
                                    let hi = (*params.trip.end() / (level as u64 + 1)).max(2);
                                    rng.random_range(2..=hi.max(*params.trip.start()))
                                }
                            })
                            .collect();
                        LoopShape::Nested { trips }
                    }
                    _ => {
                        let trip = rng.random_range(params.trip.clone()).max(2);
                        LoopShape::Conditional {
                            trip,
                            taken: rng.random_range(1..trip),
                        }
                    }
                };
                let pattern = params.patterns[rng.random_range(0..params.patterns.len())];
                loops.push(LoopSpec {
                    shape,
                    calls: rng.random_range(params.calls.clone()),
                    body_len: rng.random_range(params.body_len.clone()),
                    mix: params.mix,
                    pattern,
                });
            }
        }
        WorkloadSpec {
            name: name.into(),
            prologue: rng.random_range(params.prologue.clone()),
            data_size: None,
            loops,
        }
    }

    /// A near-duplicate whose trip counts differ by at most a factor `1 ± eps`.
    /// Bodies are unchanged when generated from the same seed.
    pub fn perturb(&self, name: impl Into<String>, eps: f64, seed: u64) -> WorkloadSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0dd_ba11);
        let mut scale = |t: u64| -> u64 {
            let f = 1.0 + rng.random_range(-eps..=eps);
            ((t as f64 * f).round() as u64).max(1)
        };
        let mut out = self.clone();
        out.name = name.into();
        for l in &mut out.loops {
            l.shape = match &l.shape {
                LoopShape::Linear { trip } => LoopShape::Linear { trip: scale(*trip) },
                LoopShape::Nested { trips } => LoopShape::Nested {
                    trips: trips
                        .iter()
                        .map(|&t| if t == 1 { 1 } else { scale(t).max(2) })
                        .collect(),
                },
                LoopShape::Conditional { trip, taken } => {
                    let t = scale(*trip).max(2);
                    let k = ((*taken as f64 * t as f64 / *trip as f64).round() as u64).clamp(1, t - 1);
                    LoopShape::Conditional { trip: t, taken: k }
                }
            };
        }
        out
    }

    fn validate(&self) -> Result<(), SpecError> {
        for (i, l) in self.loops.iter().enumerate() {
            let err = |m: &str| Err(SpecError(format!("loop {i}: {m}")));
            if l.calls == 0 {
                return err("calls must be at least 1");
            }
            match &l.shape {
                LoopShape::Linear { trip } if *trip == 0 => return err("trip count 0"),
                LoopShape::Nested { trips } => {
                    if trips.is_empty() || trips.len() > MAX_DEPTH {
                        return err(&format!("nesting depth must be 1..={MAX_DEPTH}"));
                    }
                    if trips.contains(&0) {
                        return err("trip count 0");
                    }
                }
                LoopShape::Conditional { trip, taken } => {
                    if *trip < 2 || *taken == 0 || *taken >= *trip {
                        return err("conditional needs trip >= 2 and 1 <= taken < trip");
                    }
                }
                _ => {}
            }
            let m = l.mix;
            if !(m.int >= 0.0 && m.float >= 0.0 && m.vector >= 0.0) || m.int + m.float + m.vector <= 0.0 {
                return err("mix proportions must be non-negative with a positive sum");
            }
            if let PatternKind::FixedStride { stride } = l.pattern {
                if stride == 0 {
                    return err("fixed stride must be nonzero");
                }
            }
        }
        Ok(())
    }
}

/// Iterations of the innermost body per call.
fn inner_iterations(shape: &LoopShape) -> u64 {
    match shape {
        LoopShape::Linear { trip } => *trip,
        LoopShape::Nested { trips } => trips.iter().product(),
        LoopShape::Conditional { trip, .. } => *trip,
    }
}

fn r(i: u8) -> Reg {
    Reg::int(i)
}

fn reg(x: Reg) -> Operand {
    Operand::Reg(x)
}

fn imm(v: i64) -> Operand {
    Operand::Imm(v)
}

fn op3(op: Opcode, d: Reg, a: Operand, b: Operand) -> Instruction {
    Instruction::new(op).with_dest(d).with_sources([a, b])
}

fn mov(d: Reg, v: i64) -> Instruction {
    Instruction::new(Opcode::Mov).with_dest(d).with_sources([imm(v)])
}

fn bump(p: Reg, by: i64) -> Instruction {
    op3(Opcode::Add, p, reg(p), imm(by))
}

fn load(op: Opcode, d: Reg, mem: MemOperand) -> Instruction {
    Instruction::new(op).with_dest(d).with_mem(mem)
}

fn store(op: Opcode, s: Reg, mem: MemOperand) -> Instruction {
    Instruction::new(op).with_sources([reg(s)]).with_mem(mem)
}

fn cmp(a: Reg, b: i64) -> Instruction {
    Instruction::new(Opcode::Cmp).with_sources([reg(a), imm(b)])
}

fn branch(op: Opcode) -> Instruction {
    Instruction::new(op).with_target(usize::MAX)
}

struct Alloc {
    next: u64,
}

impl Alloc {
    fn take(&mut self, bytes: i64) -> i64 {
        let at = self.next;
        self.next += (bytes.max(0) as u64).div_ceil(64) * 64 + 64;
        at as i64
    }
}

/// Pointer setup and per-iteration code for one access pattern.
fn pattern_code(kind: PatternKind, n: i64, mix: Mix, alloc: &mut Alloc) -> (Vec<Instruction>, Vec<Instruction>) {
    let (pa, pb, pc, t1, t2) = (r(5), r(6), r(7), r(8), r(9));
    let f = Reg::float;
    let mut setup = Vec::new();
    let body = match kind {
        PatternKind::None => Vec::new(),
        PatternKind::FixedStride { stride } => {
            let op = if mix.vector > mix.int && mix.vector > mix.float {
                Opcode::Vld
            } else if mix.float > mix.int {
                Opcode::Fld
            } else {
                Opcode::Ld
            };
            let dest = match op {
                Opcode::Vld => Reg::vector(0),
                Opcode::Fld => f(1),
                _ => r(10),
            };
            let span = n * stride.abs() + op.data_width() as i64;
            let start = alloc.take(span);
            let base = if stride < 0 { start + (n - 1) * stride.abs() } else { start };
            setup.push(mov(pa, base));
            vec![load(op, dest, MemOperand::base(pa, 0)), bump(pa, stride)]
        }
        PatternKind::Alternating => {
            setup.push(mov(pa, alloc.take(n * 8 + 24)));
            vec![
                load(Opcode::Ld, r(10), MemOperand::base(pa, 0)),
                load(Opcode::Ld, r(11), MemOperand::base(pa, 16)),
                bump(pa, 8),
            ]
        }
        PatternKind::Random => {
            setup.push(mov(pa, alloc.take(n * 8)));
            setup.push(mov(pc, alloc.take(RANDOM_TABLE * 8)));
            vec![
                load(Opcode::Ld, t1, MemOperand::base(pa, 0)),
                op3(Opcode::And, t1, reg(t1), imm(RANDOM_TABLE - 1)),
                op3(Opcode::Shl, t1, reg(t1), imm(3)),
                load(Opcode::Ld, r(10), MemOperand::indexed(pc, t1, 0)),
                bump(pa, 8),
            ]
        }
        PatternKind::Stencil => {
            let row = 8 * STENCIL_WIDTH;
            setup.push(mov(pa, alloc.take(n * 8 + 2 * row + 8) + row));
            setup.push(mov(pb, alloc.take(n * 8)));
            vec![
                load(Opcode::Fld, f(1), MemOperand::base(pa, -row)),
                load(Opcode::Fld, f(2), MemOperand::base(pa, -8)),
                load(Opcode::Fld, f(3), MemOperand::base(pa, 8)),
                load(Opcode::Fld, f(4), MemOperand::base(pa, row)),
                op3(Opcode::Fadd, f(5), reg(f(1)), reg(f(2))),
                op3(Opcode::Fadd, f(5), reg(f(5)), reg(f(3))),
                op3(Opcode::Fadd, f(5), reg(f(5)), reg(f(4))),
                store(Opcode::Fst, f(5), MemOperand::base(pb, 0)),
                bump(pa, 8),
                bump(pb, 8),
            ]
        }
        PatternKind::Transpose => {
            setup.push(mov(pa, alloc.take(n * 8)));
            setup.push(mov(pb, alloc.take(n * 8 * TRANSPOSE_ROWS)));
            vec![
                load(Opcode::Ld, r(10), MemOperand::base(pa, 0)),
                store(Opcode::St, r(10), MemOperand::base(pb, 0)),
                bump(pa, 8),
                bump(pb, 8 * TRANSPOSE_ROWS),
            ]
        }
        PatternKind::Histogram => {
            setup.push(mov(pa, alloc.take(n * 8)));
            setup.push(mov(pc, alloc.take(HISTOGRAM_BINS * 8)));
            vec![
                load(Opcode::Ld, t1, MemOperand::base(pa, 0)),
                op3(Opcode::And, t1, reg(t1), imm(HISTOGRAM_BINS - 1)),
                op3(Opcode::Shl, t1, reg(t1), imm(3)),
                load(Opcode::Ld, t2, MemOperand::indexed(pc, t1, 0)),
                op3(Opcode::Add, t2, reg(t2), imm(1)),
                store(Opcode::St, t2, MemOperand::indexed(pc, t1, 0)),
                bump(pa, 8),
            ]
        }
        PatternKind::MultiStream => {
            setup.push(mov(pa, alloc.take(n * 8)));
            setup.push(mov(pc, alloc.take(n * 8)));
            setup.push(mov(pb, alloc.take(n * 8)));
            vec![
                load(Opcode::Fld, f(1), MemOperand::base(pa, 0)),
                load(Opcode::Fld, f(2), MemOperand::base(pc, 0)),
                op3(Opcode::Fmul, f(3), reg(f(1)), reg(f(2))),
                store(Opcode::Fst, f(3), MemOperand::base(pb, 0)),
                bump(pa, 8),
                bump(pc, 8),
                bump(pb, 8),
            ]
        }
    };
    (setup, body)
}

/// Class counts follow `mix` exactly (largest remainder); order is shuffled.
fn class_counts(mix: Mix, n: usize) -> [usize; 3] {
    let w = [mix.int.max(0.0), mix.float.max(0.0), mix.vector.max(0.0)];
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return [n, 0, 0];
    }
    let exact: Vec<f64> = w.iter().map(|x| x / total * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let short = n - counts.iter().sum::<usize>();
    for &c in order.iter().take(short) {
        counts[c] += 1;
    }
    counts
}

fn compute(rng: &mut ChaCha8Rng, mix: Mix, n: usize) -> Vec<Instruction> {
    let counts = class_counts(mix, n);
    let mut classes: Vec<usize> = (0..3).flat_map(|c| std::iter::repeat_n(c, counts[c])).collect();
    classes.shuffle(rng);
    classes
        .into_iter()
        .map(|class| match class {
            0 => {
                let ops = [Opcode::Add, Opcode::Sub, Opcode::Mul, Opcode::Xor, Opcode::And];
                let op = ops[rng.random_range(0..ops.len())];
                let d = r(rng.random_range(10..15));
                let a = reg(r(rng.random_range(10..15)));
                let b = if rng.random_bool(0.5) {
                    imm(rng.random_range(1..100))
                } else {
                    reg(r(rng.random_range(10..15)))
                };
                op3(op, d, a, b)
            }
            1 => {
                let ops = [Opcode::Fadd, Opcode::Fsub, Opcode::Fmul];
                let op = ops[rng.random_range(0..ops.len())];
                let d = Reg::float(rng.random_range(6..16));
                op3(
                    op,
                    d,
                    reg(Reg::float(rng.random_range(0..16))),
                    reg(Reg::float(rng.random_range(0..16))),
                )
            }
            _ => {
                let op = if rng.random_bool(0.5) { Opcode::Vadd } else { Opcode::Vmul };
                op3(
                    op,
                    Reg::vector(rng.random_range(1..8)),
                    reg(Reg::vector(rng.random_range(0..8))),
                    reg(Reg::vector(rng.random_range(0..8))),
                )
            }
        })
        .collect()
}

struct Builder {
    insns: Vec<Instruction>,
    functions: Vec<Function>,
    truth: Vec<TruthLoop>,
}

impl Builder {
    fn here(&self) -> usize {
        self.insns.len()
    }

    fn push(&mut self, mut insn: Instruction) -> usize {
        let id = self.insns.len();
        insn.id = id;
        self.insns.push(insn);
        id
    }

    fn extend(&mut self, insns: Vec<Instruction>) {
        for i in insns {
            self.push(i);
        }
    }

    fn jump(&mut self, op: Opcode, target: usize) -> usize {
        let mut insn = branch(op);
        insn.target = Some(target);
        self.push(insn)
    }

    fn patch(&mut self, at: usize, target: usize) {
        self.insns[at].target = Some(target);
    }

    /// Records a labeled loop, coalescing touching ranges.
    fn label(&mut self, mut ranges: Vec<Range<usize>>, iterations: u64) {
        ranges.sort_by_key(|r| r.start);
        let mut merged: Vec<Range<usize>> = Vec::new();
        for r in ranges {
            match merged.last_mut() {
                Some(last) if last.end == r.start => last.end = r.end,
                _ => merged.push(r),
            }
        }
        self.truth.push(TruthLoop {
            ranges: merged,
            iterations,
        });
    }
}

fn emit_loop(b: &mut Builder, spec: &LoopSpec, rng: &mut ChaCha8Rng, alloc: &mut Alloc) {
    let n = inner_iterations(&spec.shape) as i64;
    let (setup, pattern) = pattern_code(spec.pattern, n, spec.mix, alloc);
    b.extend(setup);
    let calls = spec.calls;
    match &spec.shape {
        LoopShape::Linear { trip } => {
            b.push(mov(r(1), 0));
            let top = b.here();
            b.extend(pattern);
            b.extend(compute(rng, spec.mix, spec.body_len));
            b.push(bump(r(1), 1));
            b.push(cmp(r(1), *trip as i64));
            let end = b.jump(Opcode::Jlt, top) + 1;
            if *trip > 1 {
                b.label(vec![top..end], trip * calls);
            }
        }
        LoopShape::Nested { trips } => {
            let depth = trips.len();
            let side = (spec.body_len / 4).max(1);
            b.push(mov(r(1), 0));
            let mut tops = Vec::new();
            let mut heads = Vec::new();
            for level in 0..depth - 1 {
                let top = b.here();
                tops.push(top);
                b.extend(compute(rng, spec.mix, side));
                b.push(mov(r(level as u8 + 2), 0));
                heads.push(top..b.here());
            }
            let top = b.here();
            tops.push(top);
            b.extend(pattern);
            b.extend(compute(rng, spec.mix, spec.body_len));
            let counter = r(depth as u8);
            b.push(bump(counter, 1));
            b.push(cmp(counter, trips[depth - 1] as i64));
            b.jump(Opcode::Jlt, top);
            let mut bodies: Vec<Vec<Range<usize>>> = vec![Vec::new(); depth];
            bodies[depth - 1].push(top..b.here());
            for level in (0..depth - 1).rev() {
                let start = b.here();
                b.extend(compute(rng, spec.mix, side));
                let counter = r(level as u8 + 1);
                b.push(bump(counter, 1));
                b.push(cmp(counter, trips[level] as i64));
                b.jump(Opcode::Jlt, tops[level]);
                bodies[level].push(heads[level].clone());
                bodies[level].push(start..b.here());
            }
            // Levels with trip 1 execute as often as their parent and merge with it.
            let mut product = 1u64;
            let mut group: Vec<Range<usize>> = Vec::new();
            let mut group_product = 1u64;
            for level in 0..depth {
                product *= trips[level];
                if product != group_product && !group.is_empty() {
                    if group_product > 1 {
                        b.label(std::mem::take(&mut group), group_product * calls);
                    }
                    group.clear();
                }
                group_product = product;
                group.extend(bodies[level].iter().cloned());
            }
            if group_product > 1 {
                b.label(group, group_product * calls);
            }
        }
        LoopShape::Conditional { trip, taken } => {
            let t = *trip as i64;
            let p = [7i64, 11, 13, 17, 19, 23, 29, 31, 37, 41]
                .into_iter()
                .find(|p| gcd(*p, t) == 1 && p % t != 1)
                .unwrap_or(1);
            b.push(mov(r(1), 0));
            let top = b.here();
            b.extend(pattern);
            b.extend(compute(rng, spec.mix, spec.body_len));
            b.push(bump(r(1), 1));
            b.push(op3(Opcode::Mul, r(9), reg(r(1)), imm(p)));
            b.push(op3(Opcode::Rem, r(9), reg(r(9)), imm(t)));
            b.push(cmp(r(9), *taken as i64));
            let to_else = b.push(branch(Opcode::Jge));
            let then_start = b.here();
            let arm = (spec.body_len / 2).max(1);
            b.extend(compute(rng, spec.mix, arm));
            b.push(cmp(r(1), t));
            b.jump(Opcode::Jlt, top);
            let then_end = b.here();
            let to_end = b.push(branch(Opcode::Jmp));
            let else_start = b.here();
            b.patch(to_else, else_start);
            b.extend(compute(rng, spec.mix, arm));
            b.push(cmp(r(1), t));
            b.jump(Opcode::Jlt, top);
            let else_end = b.here();
            b.patch(to_end, else_end);
            b.label(vec![top..then_start], trip * calls);
            if *taken > 1 {
                b.label(vec![then_start..then_end], taken * calls);
            }
            if trip - taken > 1 {
                b.label(vec![else_start..else_end], (trip - taken) * calls);
            }
        }
    }
    b.push(Instruction::new(Opcode::Ret));
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Builds the program described by `spec`. Instruction choice inside bodies
/// is drawn from `seed`.
pub fn generate_workload(spec: &WorkloadSpec, seed: u64) -> Result<Program, SpecError> {
    spec.validate()?;
    if spec.data_size == Some(0) && spec.loops.iter().any(|l| l.pattern.touches_memory()) {
        return Err(SpecError("data size 0 with memory-accessing loops".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alloc = Alloc { next: 64 };
    let mut b = Builder {
        insns: Vec::new(),
        functions: Vec::new(),
        truth: Vec::new(),
    };

    // main: prologue, unrolled calls, halt. Call targets are patched below.
    let mut call_sites = Vec::new();
    b.extend(compute(
        &mut rng,
        Mix {
            int: 1.0,
            float: 0.0,
            vector: 0.0,
        },
        spec.prologue,
    ));
    for (i, l) in spec.loops.iter().enumerate() {
        for _ in 0..l.calls {
            call_sites.push((b.push(branch(Opcode::Call)), i));
        }
    }
    b.push(Instruction::new(Opcode::Halt));
    b.functions.push(Function {
        name: "main".into(),
        start: 0,
        end: b.here(),
    });

    let mut entries = Vec::new();
    for (i, l) in spec.loops.iter().enumerate() {
        let start = b.here();
        entries.push(start);
        emit_loop(&mut b, l, &mut rng, &mut alloc);
        let shape = match l.shape {
            LoopShape::Linear { .. } => "linear",
            LoopShape::Nested { .. } => "nested",
            LoopShape::Conditional { .. } => "cond",
        };
        b.functions.push(Function {
            name: format!("{shape}{i}"),
            start,
            end: b.here(),
        });
    }
    for (site, i) in call_sites {
        b.patch(site, entries[i]);
    }

    let needed = if spec.loops.iter().any(|l| l.pattern.touches_memory()) {
        alloc.next
    } else {
        0
    };
    let data_size = match spec.data_size {
        Some(d) if d < needed => {
            return Err(SpecError(format!("data size {d} below the {needed} bytes the loops need")))
        }
        Some(d) => d,
        None => needed,
    };
    if data_size > MAX_DATA {
        return Err(SpecError(format!("workload needs {data_size} bytes, above {MAX_DATA}")));
    }
    let program = Program {
        listing: Listing {
            functions: b.functions,
            instructions: b.insns,
        },
        entry: "main".into(),
        data_size,
        ground_truth: Some(b.truth),
    };
    program
        .validate()
        .map_err(|e| SpecError(format!("generated program invalid: {e}")))?;
    Ok(program)
}

/// Workload archetypes of the halving suite; each has a distinct loop kind.
fn archetypes() -> Vec<(LoopShape, usize, Mix, PatternKind)> {
    let mix = |int, float, vector| Mix { int, float, vector };
    vec![
        (LoopShape::Linear { trip: 200 }, 4, mix(1.0, 0.0, 0.0), PatternKind::None),
        (LoopShape::Linear { trip: 260 }, 12, mix(0.2, 0.8, 0.0), PatternKind::Stencil),
        (LoopShape::Linear { trip: 340 }, 6, mix(0.7, 0.3, 0.0), PatternKind::Transpose),
        (LoopShape::Linear { trip: 440 }, 3, mix(1.0, 0.0, 0.0), PatternKind::Histogram),
        (LoopShape::Linear { trip: 570 }, 9, mix(0.1, 0.9, 0.0), PatternKind::MultiStream),
        (LoopShape::Linear { trip: 740 }, 16, mix(0.1, 0.1, 0.8), PatternKind::FixedStride { stride: 32 }),
        (LoopShape::Linear { trip: 960 }, 20, mix(0.5, 0.5, 0.0), PatternKind::Random),
        (LoopShape::Linear { trip: 1250 }, 8, mix(0.6, 0.2, 0.2), PatternKind::Alternating),
        (LoopShape::Linear { trip: 1620 }, 14, mix(0.4, 0.3, 0.3), PatternKind::FixedStride { stride: 8 }),
    ]
}

/// Eighteen workloads built as nine near-duplicate pairs `wNN-a`/`wNN-b`.
/// Returns each spec with the seed its bodies are generated from.
pub fn halving_suite(eps: f64, seed: u64) -> Vec<(WorkloadSpec, u64)> {
    let mut out = Vec::new();
    for (i, (shape, body_len, mix, pattern)) in archetypes().into_iter().enumerate() {
        // Eight loops of the same kind per workload, so each cluster has more
        // members than retained dimensions; trips spread by up to 4%.
        let loops = (0..8)
            .map(|j| LoopSpec {
                shape: match &shape {
                    LoopShape::Linear { trip } => LoopShape::Linear {
                        trip: (*trip as f64 * (1.0 + 0.0114 * (j as f64 - 3.5))).round() as u64,
                    },
                    other => other.clone(),
                },
                calls: 1,
                body_len,
                mix,
                pattern,
            })
            .collect();
        let base = WorkloadSpec {
            name: format!("w{i:02}-a"),
            prologue: 24,
            data_size: None,
            loops,
        };
        let body_seed = seed.wrapping_mul(1000).wrapping_add(i as u64);
        let twin = base.perturb(format!("w{i:02}-b"), eps, body_seed);
        out.push((base, body_seed));
        out.push((twin, body_seed));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toyvm::interp::execute;

    fn one(shape: LoopShape, pattern: PatternKind) -> WorkloadSpec {
        WorkloadSpec {
            name: "t".into(),
            prologue: 3,
            data_size: None,
            loops: vec![LoopSpec {
                shape,
                calls: 1,
                body_len: 4,
                mix: Mix::default(),
                pattern,
            }],
        }
    }

    fn check_labels(p: &Program) {
        let prof = execute(p, 3, 10_000_000).unwrap();
        for t in p.ground_truth.as_ref().unwrap() {
            for r in &t.ranges {
                for id in r.clone() {
                    assert_eq!(prof.aec[id], t.iterations, "instruction {id} of {t:?}");
                }
            }
        }
    }

    #[test]
    fn linear_ten() {
        let p = generate_workload(&one(LoopShape::Linear { trip: 10 }, PatternKind::None), 1).unwrap();
        let truth = p.ground_truth.as_ref().unwrap();
        assert_eq!(truth.len(), 1);
        assert_eq!(truth[0].iterations, 10);
        check_labels(&p);
    }

    #[test]
    fn nested_five_by_eight() {
        let spec = one(
            LoopShape::Nested { trips: vec![5, 8] },
            PatternKind::Stencil,
        );
        let p = generate_workload(&spec, 1).unwrap();
        let truth = p.ground_truth.as_ref().unwrap();
        let mut iters: Vec<u64> = truth.iter().map(|t| t.iterations).collect();
        iters.sort();
        assert_eq!(iters, vec![5, 40]);
        let outer = truth.iter().find(|t| t.iterations == 5).unwrap();
        assert_eq!(outer.ranges.len(), 2);
        check_labels(&p);
    }

    #[test]
    fn every_pattern_runs_in_bounds() {
        for pattern in GeneratorParams::default().patterns {
            for shape in [
                LoopShape::Linear { trip: 30 },
                LoopShape::Nested { trips: vec![3, 1, 4] },
                LoopShape::Conditional { trip: 10, taken: 6 },
            ] {
                let p = generate_workload(&one(shape, pattern), 2).unwrap();
                check_labels(&p);
            }
        }
    }

    #[test]
    fn infeasible_specs() {
        let mut spec = one(LoopShape::Linear { trip: 10 }, PatternKind::Random);
        spec.data_size = Some(0);
        assert!(generate_workload(&spec, 0).is_err());
        let spec = one(LoopShape::Conditional { trip: 5, taken: 5 }, PatternKind::None);
        assert!(generate_workload(&spec, 0).is_err());
        let spec = one(LoopShape::Nested { trips: vec![2; 5] }, PatternKind::None);
        assert!(generate_workload(&spec, 0).is_err());
    }

    #[test]
    fn deterministic() {
        let spec = WorkloadSpec::sample("x", &GeneratorParams::default(), 9);
        assert_eq!(generate_workload(&spec, 4).unwrap(), generate_workload(&spec, 4).unwrap());
    }
}
