//! Independent reference models shared by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use loopcull::toyvm::asm::parse_instruction;
use loopcull::toyvm::cache::{Access, AccessKind, CacheConfig};
use loopcull::toyvm::{Instruction, LatencyTable, Opcode};
use rand::Rng;

/// Misses of a set-associative LRU cache, each set kept as a recency queue.
pub fn reference_lru_misses(stream: &[Access], cfg: &CacheConfig) -> u64 {
    let sets = (cfg.total_size / (cfg.line_size * cfg.associativity)) as usize;
    let mut queues: Vec<VecDeque<u64>> = vec![VecDeque::new(); sets];
    let mut misses = 0;
    for a in stream {
        let bytes = u64::from(a.bytes.max(1));
        let first = a.address / cfg.line_size;
        let last = (a.address + bytes - 1) / cfg.line_size;
        for line in first..=last {
            let q = &mut queues[(line % sets as u64) as usize];
            if let Some(pos) = q.iter().position(|&l| l == line) {
                q.remove(pos);
            } else {
                misses += 1;
                if q.len() == cfg.associativity as usize {
                    q.pop_back();
                }
            }
            q.push_front(line);
        }
    }
    misses
}

/// Mixed-locality trace: strided sweeps, a hot region and random far accesses.
pub fn random_trace(rng: &mut impl Rng, len: usize) -> Vec<Access> {
    let mut out = Vec::with_capacity(len);
    let mut cursor = 0u64;
    while out.len() < len {
        let mode = rng.random_range(0..3);
        let run = rng.random_range(1..200);
        let stride = [4u64, 8, 16, 64, 256][rng.random_range(0..5)];
        for _ in 0..run {
            let address = match mode {
                0 => {
                    cursor = (cursor + stride) % (1 << 18);
                    cursor
                }
                1 => rng.random_range(0..2048),
                _ => rng.random_range(0..1 << 20),
            };
            let kind = if rng.random_bool(0.3) {
                AccessKind::Store
            } else {
                AccessKind::Load
            };
            out.push(Access {
                address,
                bytes: [1, 4, 8, 32][rng.random_range(0..4)],
                kind,
            });
        }
    }
    out.truncate(len);
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Found {
    pub pattern: Vec<i64>,
    pub occurrences: usize,
    pub start: usize,
}

fn primitive(w: &[i64]) -> bool {
    let n = w.len();
    !(1..n).any(|q| n % q == 0 && (0..n).all(|i| w[i] == w[i % q]))
}

/// Greedy mining by exhaustive enumeration of every (start, period, repeats)
/// window over uncovered deltas: longest first, then shorter period, then
/// earlier start.
pub fn brute_patterns(d: &[i64], max_period: usize, min_repeats: usize) -> Vec<Found> {
    let mut covered = vec![false; d.len()];
    let mut out = Vec::new();
    loop {
        let mut best: Option<(usize, usize, usize)> = None;
        for s in 0..d.len() {
            for p in 1..=max_period {
                if !primitive_window(d, s, p) {
                    continue;
                }
                let mut r = 1;
                loop {
                    let end = s + (r + 1) * p;
                    if end > d.len() || (s + r * p..end).any(|i| d[i] != d[i - p]) {
                        break;
                    }
                    r += 1;
                }
                for reps in min_repeats..=r {
                    let len = reps * p;
                    if (s..s + len).any(|i| covered[i]) {
                        break;
                    }
                    let cand = (len, p, s);
                    let better = match best {
                        None => true,
                        Some((bl, bp, bs)) => len > bl || (len == bl && (p < bp || (p == bp && s < bs))),
                    };
                    if better {
                        best = Some(cand);
                    }
                }
            }
        }
        let Some((len, p, s)) = best else { break };
        for c in &mut covered[s..s + len] {
            *c = true;
        }
        out.push(Found {
            pattern: d[s..s + p].to_vec(),
            occurrences: len / p,
            start: s,
        });
    }
    out.sort_by_key(|f| f.start);
    out
}

fn primitive_window(d: &[i64], s: usize, p: usize) -> bool {
    s + p <= d.len() && primitive(&d[s..s + p])
}

/// Delta stream stitched from repeated short words and noise.
pub fn random_deltas(rng: &mut impl Rng, len: usize) -> Vec<i64> {
    let alphabet = [-5i64, -1, 1, 2, 6, 8, 64];
    let mut d = Vec::with_capacity(len);
    while d.len() < len {
        if rng.random_bool(0.3) {
            d.push(alphabet[rng.random_range(0..alphabet.len())]);
            continue;
        }
        let p = rng.random_range(1..=9);
        let word: Vec<i64> = (0..p).map(|_| alphabet[rng.random_range(0..3)]).collect();
        let reps = rng.random_range(1..=6);
        for _ in 0..reps {
            d.extend_from_slice(&word);
        }
    }
    d.truncate(len);
    d
}

pub fn addresses_from(start: u64, deltas: &[i64]) -> Vec<u64> {
    let mut a = vec![start];
    for &x in deltas {
        a.push(a.last().unwrap().wrapping_add(x as u64));
    }
    a
}

/// Location an abstract instruction reads or writes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Loc {
    Reg(String),
    Flags,
    Mem(&'static str),
}

/// An instruction as text plus its read and write sets, stated by construction.
#[derive(Clone, Debug)]
pub struct AbstractInsn {
    pub text: String,
    pub opcode: Opcode,
    pub reads: Vec<Loc>,
    pub writes: Vec<Loc>,
}

const MEMS: [(&str, &[&str]); 3] = [("[r1 + 8]", &["r1"]), ("[r2 + 16]", &["r2"]), ("[r1 + r2]", &["r1", "r2"])];

pub fn random_body(rng: &mut impl Rng, len: usize) -> Vec<AbstractInsn> {
    let ir = |rng: &mut dyn rand::RngCore| format!("r{}", rng.random_range(1..=4));
    let fr = |rng: &mut dyn rand::RngCore| format!("f{}", rng.random_range(1..=3));
    let reg = |r: &str| Loc::Reg(r.to_string());
    (0..len)
        .map(|_| {
            let pick = rng.random_range(0..12);
            let (text, opcode, reads, writes) = match pick {
                0..=2 => {
                    let op = [Opcode::Add, Opcode::Mul, Opcode::Div][pick];
                    let (d, a, b) = (ir(rng), ir(rng), ir(rng));
                    (format!("{op} {d}, {a}, {b}"), op, vec![reg(&a), reg(&b)], vec![reg(&d)])
                }
                3 => {
                    let (d, a) = (ir(rng), ir(rng));
                    (format!("sub {d}, {a}, 3"), Opcode::Sub, vec![reg(&a)], vec![reg(&d)])
                }
                4 => {
                    let (d, a) = (ir(rng), ir(rng));
                    (format!("mov {d}, {a}"), Opcode::Mov, vec![reg(&a)], vec![reg(&d)])
                }
                5 | 6 => {
                    let op = [Opcode::Fadd, Opcode::Fmul][pick - 5];
                    let (d, a, b) = (fr(rng), fr(rng), fr(rng));
                    (format!("{op} {d}, {a}, {b}"), op, vec![reg(&a), reg(&b)], vec![reg(&d)])
                }
                7 | 8 => {
                    let (m, mregs) = MEMS[rng.random_range(0..3)];
                    let (op, d) = if pick == 7 { (Opcode::Ld, ir(rng)) } else { (Opcode::Fld, fr(rng)) };
                    let mut reads: Vec<Loc> = mregs.iter().map(|r| reg(r)).collect();
                    reads.push(Loc::Mem(m));
                    (format!("{op} {d}, {m}"), op, reads, vec![reg(&d)])
                }
                9 => {
                    let (m, mregs) = MEMS[rng.random_range(0..3)];
                    let s = ir(rng);
                    let mut reads: Vec<Loc> = mregs.iter().map(|r| reg(r)).collect();
                    reads.push(reg(&s));
                    (format!("st {m}, {s}"), Opcode::St, reads, vec![Loc::Mem(m)])
                }
                10 => {
                    let (a, b) = (ir(rng), ir(rng));
                    (format!("cmp {a}, {b}"), Opcode::Cmp, vec![reg(&a), reg(&b)], vec![Loc::Flags])
                }
                _ => ("jlt @0".to_string(), Opcode::Jlt, vec![Loc::Flags], vec![]),
            };
            AbstractInsn {
                text,
                opcode,
                reads,
                writes,
            }
        })
        .collect()
}

pub fn parse_body(body: &[AbstractInsn]) -> Vec<Instruction> {
    body.iter()
        .enumerate()
        .map(|(i, a)| {
            let mut insn = parse_instruction(&a.text, &|_| Some(0)).unwrap();
            insn.id = i;
            insn
        })
        .collect()
}

/// Longest latency-weighted path in the explicit dependence DAG, found by
/// repeated edge relaxation.
pub fn dag_longest_path(body: &[AbstractInsn], lat: &LatencyTable) -> u64 {
    let n = body.len();
    let w: Vec<u64> = body.iter().map(|a| u64::from(lat.get(a.opcode).unwrap())).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for loc in &body[i].reads {
            if let Some(j) = (0..i).rev().find(|&j| body[j].writes.contains(loc)) {
                edges.push((j, i));
            }
        }
    }
    let mut dist = w.clone();
    for _ in 0..n {
        for &(j, i) in &edges {
            dist[i] = dist[i].max(dist[j] + w[i]);
        }
    }
    dist.into_iter().max().unwrap_or(0)
}
