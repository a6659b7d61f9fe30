//! Instruction set of the toy register machine.
//!
//! The machine has 16 integer registers (`r0`..`r15`), 16 float registers
//! (`f0`..`f15`) and 8 vector registers (`v0`..`v7`) of four 8-byte lanes.
//! Memory is a flat byte array addressed through `[base + index + offset]`
//! operands.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const INT_REGS: u8 = 16;
pub const FLOAT_REGS: u8 = 16;
pub const VEC_REGS: u8 = 8;
pub const VEC_LANES: usize = 4;
pub const WORD_BYTES: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    IntArith,
    FloatArith,
    VectorArith,
    Load,
    Store,
    VectorLoad,
    VectorStore,
    Move,
    AddressCalc,
    Compare,
    Branch,
    Call,
    Ret,
    Halt,
    /// Imported instructions whose encoding is not known.
    Unknown,
}

impl Category {
    pub fn is_load(self) -> bool {
        matches!(self, Category::Load | Category::VectorLoad)
    }

    pub fn is_store(self) -> bool {
        matches!(self, Category::Store | Category::VectorStore)
    }

    pub fn is_memory(self) -> bool {
        self.is_load() || self.is_store()
    }

    pub fn is_vector(self) -> bool {
        matches!(
            self,
            Category::VectorArith | Category::VectorLoad | Category::VectorStore
        )
    }

    /// Instructions that change the flow of execution.
    pub fn is_control(self) -> bool {
        matches!(
            self,
            Category::Branch | Category::Call | Category::Ret | Category::Halt
        )
    }
}

macro_rules! opcodes {
    ($( $variant:ident => $mnemonic:literal, $cat:ident, $width:expr; )*) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum Opcode {
            $( $variant, )*
        }

        impl Opcode {
            pub const ALL: &'static [Opcode] = &[$( Opcode::$variant, )*];

            pub fn mnemonic(self) -> &'static str {
                match self {
                    $( Opcode::$variant => $mnemonic, )*
                }
            }

            pub fn category(self) -> Category {
                match self {
                    $( Opcode::$variant => Category::$cat, )*
                }
            }

            /// Bytes moved per execution; zero for non-memory operations.
            pub fn data_width(self) -> u32 {
                match self {
                    $( Opcode::$variant => $width, )*
                }
            }
        }

        impl FromStr for Opcode {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $( $mnemonic => Ok(Opcode::$variant), )*
                    other => Err(format!("unknown mnemonic `{other}`")),
                }
            }
        }
    };
}

opcodes! {
    Add => "add", IntArith, 0;
    Sub => "sub", IntArith, 0;
    Mul => "mul", IntArith, 0;
    Div => "div", IntArith, 0;
    Rem => "rem", IntArith, 0;
    And => "and", IntArith, 0;
    Xor => "xor", IntArith, 0;
    Shl => "shl", IntArith, 0;
    Mov => "mov", Move, 0;
    Lea => "lea", AddressCalc, 0;
    Cmp => "cmp", Compare, 0;
    Fadd => "fadd", FloatArith, 0;
    Fsub => "fsub", FloatArith, 0;
    Fmul => "fmul", FloatArith, 0;
    Fdiv => "fdiv", FloatArith, 0;
    Fmov => "fmov", Move, 0;
    Vadd => "vadd", VectorArith, 0;
    Vmul => "vmul", VectorArith, 0;
    Ld => "ld", Load, WORD_BYTES;
    Fld => "fld", Load, WORD_BYTES;
    St => "st", Store, WORD_BYTES;
    Fst => "fst", Store, WORD_BYTES;
    Vld => "vld", VectorLoad, WORD_BYTES * VEC_LANES as u32;
    Vst => "vst", VectorStore, WORD_BYTES * VEC_LANES as u32;
    Jmp => "jmp", Branch, 0;
    Jeq => "jeq", Branch, 0;
    Jne => "jne", Branch, 0;
    Jlt => "jlt", Branch, 0;
    Jle => "jle", Branch, 0;
    Jgt => "jgt", Branch, 0;
    Jge => "jge", Branch, 0;
    Loop => "loop", Branch, 0;
    Call => "call", Call, 0;
    Ret => "ret", Ret, 0;
    Halt => "halt", Halt, 0;
    Unknown => "unknown", Unknown, 0;
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

impl Opcode {
    pub fn is_conditional_branch(self) -> bool {
        matches!(
            self,
            Opcode::Jeq
                | Opcode::Jne
                | Opcode::Jlt
                | Opcode::Jle
                | Opcode::Jgt
                | Opcode::Jge
                | Opcode::Loop
        )
    }

    /// Register file of the destination and register sources.
    fn reg_kind(self) -> Option<RegKind> {
        use Opcode::*;
        match self {
            Add | Sub | Mul | Div | Rem | And | Xor | Shl | Mov | Lea | Cmp | Ld | St | Loop => {
                Some(RegKind::Int)
            }
            Fadd | Fsub | Fmul | Fdiv | Fmov | Fld | Fst => Some(RegKind::Float),
            Vadd | Vmul | Vld | Vst => Some(RegKind::Vector),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegKind {
    Int,
    Float,
    Vector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Reg {
    pub kind: RegKind,
    pub index: u8,
}

impl Reg {
    pub const fn int(index: u8) -> Reg {
        Reg { kind: RegKind::Int, index }
    }

    pub const fn float(index: u8) -> Reg {
        Reg { kind: RegKind::Float, index }
    }

    pub const fn vector(index: u8) -> Reg {
        Reg { kind: RegKind::Vector, index }
    }

    pub fn file_size(kind: RegKind) -> u8 {
        match kind {
            RegKind::Int => INT_REGS,
            RegKind::Float => FLOAT_REGS,
            RegKind::Vector => VEC_REGS,
        }
    }

    /// Dense index over all three register files.
    pub fn slot(self) -> usize {
        match self.kind {
            RegKind::Int => self.index as usize,
            RegKind::Float => INT_REGS as usize + self.index as usize,
            RegKind::Vector => (INT_REGS + FLOAT_REGS) as usize + self.index as usize,
        }
    }

    pub const SLOTS: usize = (INT_REGS + FLOAT_REGS + VEC_REGS) as usize;
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.kind {
            RegKind::Int => 'r',
            RegKind::Float => 'f',
            RegKind::Vector => 'v',
        };
        write!(f, "{prefix}{}", self.index)
    }
}

impl FromStr for Reg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        let kind = match chars.next() {
            Some('r') => RegKind::Int,
            Some('f') => RegKind::Float,
            Some('v') => RegKind::Vector,
            _ => return Err(format!("bad register `{s}`")),
        };
        let index: u8 = chars
            .as_str()
            .parse()
            .map_err(|_| format!("bad register `{s}`"))?;
        if index >= Reg::file_size(kind) {
            return Err(format!("register `{s}` out of range"));
        }
        Ok(Reg { kind, index })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    Reg(Reg),
    Imm(i64),
}

impl Operand {
    pub fn reg(self) -> Option<Reg> {
        match self {
            Operand::Reg(r) => Some(r),
            Operand::Imm(_) => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => write!(f, "{r}"),
            Operand::Imm(v) => write!(f, "{v}"),
        }
    }
}

/// `[base + index + offset]`, optionally reduced modulo `wrap`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemOperand {
    pub base: Reg,
    pub index: Option<Reg>,
    pub offset: i64,
    pub wrap: Option<u64>,
}

impl MemOperand {
    pub fn base(base: Reg, offset: i64) -> MemOperand {
        MemOperand {
            base,
            index: None,
            offset,
            wrap: None,
        }
    }

    pub fn indexed(base: Reg, index: Reg, offset: i64) -> MemOperand {
        MemOperand {
            base,
            index: Some(index),
            offset,
            wrap: None,
        }
    }

    pub fn regs(&self) -> impl Iterator<Item = Reg> + '_ {
        std::iter::once(self.base).chain(self.index)
    }
}

impl fmt::Display for MemOperand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}", self.base)?;
        if let Some(index) = self.index {
            write!(f, " + {index}")?;
        }
        match self.offset {
            0 => {}
            o if o < 0 => write!(f, " - {}", o.unsigned_abs())?,
            o => write!(f, " + {o}")?,
        }
        if let Some(m) = self.wrap {
            write!(f, " % {m}")?;
        }
        f.write_str("]")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub id: usize,
    pub opcode: Opcode,
    pub dest: Option<Reg>,
    pub sources: Vec<Operand>,
    pub mem: Option<MemOperand>,
    pub target: Option<usize>,
}

impl Instruction {
    pub fn new(opcode: Opcode) -> Instruction {
        Instruction {
            id: 0,
            opcode,
            dest: None,
            sources: Vec::new(),
            mem: None,
            target: None,
        }
    }

    pub fn with_dest(mut self, dest: Reg) -> Self {
        self.dest = Some(dest);
        self
    }

    pub fn with_sources(mut self, sources: impl IntoIterator<Item = Operand>) -> Self {
        self.sources = sources.into_iter().collect();
        self
    }

    pub fn with_mem(mut self, mem: MemOperand) -> Self {
        self.mem = Some(mem);
        self
    }

    pub fn with_target(mut self, target: usize) -> Self {
        self.target = Some(target);
        self
    }

    pub fn category(&self) -> Category {
        self.opcode.category()
    }

    /// Registers read by this instruction, including address registers.
    pub fn reads(&self) -> Vec<Reg> {
        let mut regs: Vec<Reg> = self.sources.iter().filter_map(|s| s.reg()).collect();
        if let Some(mem) = &self.mem {
            regs.extend(mem.regs());
        }
        regs
    }

    /// Registers written by this instruction. `loop` writes its counter.
    pub fn writes(&self) -> Vec<Reg> {
        let mut regs: Vec<Reg> = self.dest.into_iter().collect();
        if self.opcode == Opcode::Loop {
            regs.extend(self.sources.first().and_then(|s| s.reg()));
        }
        regs
    }

    pub fn touches(&self, reg: Reg) -> bool {
        self.reads().contains(&reg) || self.writes().contains(&reg)
    }

    /// Checks the operand shape against the opcode.
    pub fn validate(&self) -> Result<(), String> {
        use Opcode::*;
        let op = self.opcode;
        let cat = op.category();
        let kind = op.reg_kind();
        let bad = |msg: &str| Err(format!("{op}: {msg}"));

        if cat.is_memory() != self.mem.is_some() {
            return bad("memory operand required iff the opcode is a load or store");
        }
        let wants_target = matches!(cat, Category::Branch | Category::Call);
        if wants_target != self.target.is_some() {
            return bad("branch target required iff the opcode is a branch or call");
        }
        let no_dest = matches!(
            cat,
            Category::Store
                | Category::VectorStore
                | Category::Branch
                | Category::Compare
                | Category::Call
                | Category::Ret
                | Category::Halt
                | Category::Unknown
        );
        if no_dest && self.dest.is_some() {
            return bad("this opcode takes no destination");
        }
        if !no_dest && self.dest.is_none() {
            return bad("missing destination");
        }
        if let (Some(d), Some(k)) = (self.dest, kind) {
            if d.kind != k {
                return bad("destination register has the wrong kind");
            }
        }
        if let Some(mem) = &self.mem {
            if mem.regs().any(|r| r.kind != RegKind::Int) {
                return bad("address registers must be integer registers");
            }
        }

        let n = self.sources.len();
        let reg_ok = |o: &Operand| matches!(o, Operand::Reg(r) if Some(r.kind) == kind);
        let reg_or_imm = |o: &Operand| matches!(o, Operand::Imm(_)) || reg_ok(o);
        match op {
            Add | Sub | Mul | Div | Rem | And | Xor | Shl | Cmp => {
                if n != 2 || !reg_ok(&self.sources[0]) || !reg_or_imm(&self.sources[1]) {
                    return bad("expects `reg, reg|imm` sources");
                }
            }
            Mov => {
                if n != 1 || !reg_or_imm(&self.sources[0]) {
                    return bad("expects one `reg|imm` source");
                }
            }
            Lea => {
                if !(1..=3).contains(&n)
                    || !reg_ok(&self.sources[0])
                    || !self.sources.iter().all(reg_or_imm)
                {
                    return bad("expects `reg[, reg|imm[, reg|imm]]` sources");
                }
            }
            Fadd | Fsub | Fmul | Fdiv | Vadd | Vmul => {
                if n != 2 || !self.sources.iter().all(reg_ok) {
                    return bad("expects two register sources");
                }
            }
            Fmov => {
                if n != 1 || !reg_ok(&self.sources[0]) {
                    return bad("expects one register source");
                }
            }
            St | Fst | Vst => {
                if n != 1 || !reg_ok(&self.sources[0]) {
                    return bad("expects one stored register");
                }
            }
            Loop => {
                if n != 2
                    || !reg_ok(&self.sources[0])
                    || !matches!(self.sources[1], Operand::Imm(v) if v > 0)
                {
                    return bad("expects `counter, positive-bound` sources");
                }
            }
            Ld | Fld | Vld | Jmp | Jeq | Jne | Jlt | Jle | Jgt | Jge | Call | Ret | Halt
            | Unknown => {
                if n != 0 {
                    return bad("takes no register sources");
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

impl Function {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Instructions grouped by function.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Listing {
    pub functions: Vec<Function>,
    pub instructions: Vec<Instruction>,
}

impl Listing {
    pub fn function_of(&self, id: usize) -> Option<usize> {
        self.functions.iter().position(|f| f.range().contains(&id))
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.functions.iter().position(|f| f.name == name)
    }

    /// Checks id numbering, function ranges and branch targets.
    pub fn validate(&self) -> Result<(), String> {
        for (i, insn) in self.instructions.iter().enumerate() {
            if insn.id != i {
                return Err(format!("instruction {i} carries id {}", insn.id));
            }
        }
        let mut next = 0;
        for f in &self.functions {
            if f.start != next || f.end < f.start {
                return Err(format!(
                    "function `{}` range {}..{} does not continue the listing at {next}",
                    f.name, f.start, f.end
                ));
            }
            next = f.end;
        }
        if next != self.instructions.len() {
            return Err(format!(
                "functions cover {next} of {} instructions",
                self.instructions.len()
            ));
        }
        for f in &self.functions {
            for insn in &self.instructions[f.range()] {
                insn.validate().map_err(|e| format!("instruction {}: {e}", insn.id))?;
                if let Some(t) = insn.target {
                    match insn.category() {
                        Category::Call => {
                            if !self.functions.iter().any(|g| g.start == t && !g.is_empty()) {
                                return Err(format!(
                                    "instruction {}: call target {t} is not a function entry",
                                    insn.id
                                ));
                            }
                        }
                        _ => {
                            if !f.range().contains(&t) {
                                return Err(format!(
                                    "instruction {}: branch target {t} leaves function `{}`",
                                    insn.id, f.name
                                ));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// A labeled loop of a generated workload: body ranges and total body executions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthLoop {
    pub ranges: Vec<Range<usize>>,
    pub iterations: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub listing: Listing,
    pub entry: String,
    pub data_size: u64,
    pub ground_truth: Option<Vec<TruthLoop>>,
}

impl Program {
    pub fn validate(&self) -> Result<(), String> {
        self.listing.validate()?;
        if self.listing.function_index(&self.entry).is_none() {
            return Err(format!("entry function `{}` not defined", self.entry));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn opcode_invariants() {
        for &op in Opcode::ALL {
            let cat = op.category();
            assert_eq!(op.data_width() > 0, cat.is_memory(), "{op}");
            assert_eq!(op.mnemonic().parse::<Opcode>().unwrap(), op);
        }
        assert_eq!(Opcode::Vld.data_width() % Opcode::Ld.data_width(), 0);
        assert_eq!(Opcode::Vst.data_width(), VEC_LANES as u32 * Opcode::St.data_width());
    }

    #[test]
    fn register_parsing() {
        assert_eq!("r15".parse::<Reg>().unwrap(), Reg::int(15));
        assert_eq!("v7".parse::<Reg>().unwrap(), Reg::vector(7));
        assert!("r16".parse::<Reg>().is_err());
        assert!("v8".parse::<Reg>().is_err());
        assert!("x1".parse::<Reg>().is_err());
    }

    #[test]
    fn shape_validation() {
        let ld = Instruction::new(Opcode::Ld)
            .with_dest(Reg::int(1))
            .with_mem(MemOperand::base(Reg::int(2), 8));
        assert!(ld.validate().is_ok());
        assert!(Instruction::new(Opcode::Ld).with_dest(Reg::int(1)).validate().is_err());
        let st = Instruction::new(Opcode::St)
            .with_dest(Reg::int(1))
            .with_mem(MemOperand::base(Reg::int(2), 0));
        assert!(st.validate().is_err());
        let jmp = Instruction::new(Opcode::Jmp);
        assert!(jmp.validate().is_err());
        let fadd = Instruction::new(Opcode::Fadd)
            .with_dest(Reg::float(0))
            .with_sources([Operand::Reg(Reg::float(1)), Operand::Reg(Reg::int(1))]);
        assert!(fadd.validate().is_err());
    }
}
