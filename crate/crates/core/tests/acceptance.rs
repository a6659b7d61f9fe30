//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the output.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use loopcull::characterizer::patterns::{MAX_PERIOD, MIN_REPEATS};
use loopcull::characterizer::{dependency_chain, detect_patterns, StreamKind};
use loopcull::loopfinder::{compute_ecr, find_loops, EcrClass};
use loopcull::pipeline::{run_pipeline, RunConfig, SuiteConfig};
use loopcull::profile::DynamicProfile;
use loopcull::reducer::*;
use loopcull::synth::{run_micro, synthesize, verify_mix, MicroBenchmark, SynthConfig};
use loopcull::toyvm::{
    execute, generate_workload, simulate_cache, CacheConfig, GeneratorParams, LatencyTable, Opcode, Program,
    WorkloadSpec,
};
use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($fmt:tt)*) => {
        if !$cond {
            return Err(format!($($fmt)*));
        }
    };
}

fn corpus(seed: u64) -> (Program, DynamicProfile) {
    let spec = WorkloadSpec::sample(format!("w{seed}"), &GeneratorParams::default(), seed);
    let program = generate_workload(&spec, seed).unwrap();
    let profile = execute(&program, seed, 50_000_000).unwrap();
    (program, profile)
}

fn loop_recovery() -> Outcome {
    let t = Instant::now();
    let mut total = 0;
    for seed in 1..=50 {
        let (program, profile) = corpus(seed);
        let truth = program.ground_truth.clone().unwrap();
        let key = |r: &[std::ops::Range<usize>], it: u64| (r.iter().map(|r| (r.start, r.end)).collect::<Vec<_>>(), it);
        let mut found: Vec<_> = find_loops(&profile).unwrap().loops.iter().map(|l| key(&l.ranges, l.iterations)).collect();
        let mut expected: Vec<_> = truth.iter().map(|l| key(&l.ranges, l.iterations)).collect();
        found.sort();
        expected.sort();
        check!(found == expected, "seed {seed}: found {found:?}, expected {expected:?}");
        total += expected.len();
    }
    let el = t.elapsed();
    check!(el < Duration::from_secs(60), "took {el:?}");
    Ok(format!("{total} loops over 50 workloads in {:.1}s", el.as_secs_f64()))
}

fn ecr_trichotomy() -> Outcome {
    let mut n = 0;
    for seed in 1..=50 {
        let (_, profile) = corpus(seed);
        for a in compute_ecr(&profile).unwrap().annotations {
            let expected = match u128::from(a.aec).cmp(&u128::from(a.tec)) {
                std::cmp::Ordering::Less => EcrClass::Conditional,
                std::cmp::Ordering::Equal => EcrClass::Serial,
                std::cmp::Ordering::Greater => EcrClass::Loop,
            };
            check!(a.class == expected, "seed {seed} instruction {}: {:?} vs {expected:?}", a.instruction, a.class);
            check!(*a.ecr.numer() * a.tec == a.aec * *a.ecr.denom(), "seed {seed}: ecr {} != {}/{}", a.ecr, a.aec, a.tec);
            n += 1;
        }
    }
    Ok(format!("0 violations over {n} instructions"))
}

fn dependency_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lat = LatencyTable::default();
    for i in 0..1000 {
        let len = rng.random_range(1..=32);
        let body = random_body(&mut rng, len);
        let chain = dependency_chain(&parse_body(&body), &lat).unwrap();
        let oracle = dag_longest_path(&body, &lat);
        check!(chain.longest == oracle, "body {i}: {} vs oracle {oracle}", chain.longest);
        check!(chain.ilp == len as f64 / oracle as f64, "body {i}: ilp {}", chain.ilp);
    }
    Ok("1000 bodies equal".into())
}

fn cache_oracle() -> Outcome {
    let configs = [
        CacheConfig::new(4096, 64, 4).unwrap(),
        CacheConfig::new(8192, 32, 2).unwrap(),
        CacheConfig::new(2048, 64, 1).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut misses = 0;
    for t in 0..10 {
        let trace = random_trace(&mut rng, 100_000);
        for c in &configs {
            let got = simulate_cache(&trace, c).unwrap().misses;
            let want = reference_lru_misses(&trace, c);
            check!(got == want, "trace {t} {c}: {got} vs reference {want}");
            misses += got;
            let mut prev = got;
            for d in 1..=3 {
                let bigger = CacheConfig::new(c.total_size << d, c.line_size, c.associativity).unwrap();
                let m = simulate_cache(&trace, &bigger).unwrap().misses;
                check!(m <= prev, "trace {t} {bigger}: {m} misses after doubling, was {prev}");
                prev = m;
            }
        }
    }
    Ok(format!("30 trace/config runs equal, {misses} misses total, monotone in size"))
}

fn pattern_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut found = 0;
    for s in 0..200 {
        let len = rng.random_range(10..300);
        let d = random_deltas(&mut rng, len);
        let got: Vec<Found> = detect_patterns(&addresses_from(1 << 40, &d), StreamKind::Load)
            .into_iter()
            .map(|p| Found {
                pattern: p.pattern,
                occurrences: p.occurrences,
                start: p.start,
            })
            .collect();
        let want = brute_patterns(&d, MAX_PERIOD, MIN_REPEATS);
        check!(got == want, "stream {s}: {got:?} vs {want:?}");
        found += got.len();
    }
    let stride = detect_patterns(&(0..20).map(|i| 100 + 8 * i).collect::<Vec<u64>>(), StreamKind::Load);
    check!(
        stride.len() == 1 && stride[0].pattern == [8] && stride[0].occurrences == 19,
        "(+8)*: {stride:?}"
    );
    let alt = detect_patterns(&addresses_from(1000, &[-5, 6, -5, 6, -5, 6]), StreamKind::Load);
    check!(
        alt.len() == 1 && alt[0].pattern == [-5, 6] && alt[0].occurrences >= 3,
        "(-5,+6)*: {alt:?}"
    );
    Ok(format!("200 streams equal ({found} patterns), (+8)* and (-5,+6)* found"))
}

fn pca_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let matrix = |values: Vec<Vec<f64>>| {
        let d = values[0].len();
        FeatureMatrix {
            stage: Stage::Normalized,
            rows: (0..values.len())
                .map(|i| RowMeta {
                    workload: "w".into(),
                    loop_id: i,
                    time_share: 0.0,
                    workload_loop_share: 0.0,
                })
                .collect(),
            columns: (0..d).map(|j| format!("c{j}")).collect(),
            values,
        }
    };
    for t in 0..50 {
        let d = rng.random_range(2..7);
        let n = rng.random_range(d + 3..40);
        let values: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        let retention = rng.random_range(0.5..0.99);
        let (model, _) = pca(&matrix(values.clone()), retention).map_err(|e| e.to_string())?;
        let v = model.component_matrix();
        let gram = v.transpose() * &v;
        for i in 0..model.retained {
            for j in 0..model.retained {
                let e = f64::from(u8::from(i == j));
                check!((gram[(i, j)] - e).abs() < 1e-9, "case {t}: V'V[{i},{j}] = {}", gram[(i, j)]);
            }
        }
        let p = model.project(&values);
        let c = DMatrix::from_fn(p.nrows(), p.ncols(), |i, j| p[(i, j)] - p.column(j).mean());
        let cov = c.transpose() * &c / (n as f64 - 1.0);
        for i in 0..model.retained {
            for j in (0..model.retained).filter(|&j| j != i) {
                check!(cov[(i, j)].abs() < 1e-9, "case {t}: cov[{i},{j}] = {}", cov[(i, j)]);
            }
        }
        check!(model.retained_variance() >= retention, "case {t}: retained {}", model.retained_variance());

        let dup: Vec<Vec<f64>> = values
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.push(r[0]);
                r
            })
            .collect();
        let (full, _) = pca(&matrix(values.clone()), 1.0 - 1e-9).map_err(|e| e.to_string())?;
        let (with_dup, _) = pca(&matrix(dup), 1.0 - 1e-9).map_err(|e| e.to_string())?;
        check!(full.retained == d, "case {t}: full-rank data kept {} of {d}", full.retained);
        check!(
            with_dup.retained == d && with_dup.eigenvalues.len() == d + 1,
            "case {t}: duplicated column kept {} of {}",
            with_dup.retained,
            d + 1
        );
    }
    Ok("50 random matrices; duplicated column drops exactly one dimension".into())
}

fn blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let centers = [[0.0, 0.0], [10.0, 0.0], [5.0, 10.0 * 0.75f64.sqrt()]];
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (c, ctr) in centers.iter().enumerate() {
        for _ in 0..100 {
            data.push(vec![ctr[0] + noise.sample(&mut rng), ctr[1] + noise.sample(&mut rng)]);
            labels.push(c);
        }
    }
    (data, labels)
}

/// Majority-vote label agreement; each found cluster maps to its most common true label.
fn agreement(found: &[usize], truth: &[usize]) -> f64 {
    let mut votes: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (f, t) in found.iter().zip(truth) {
        *votes.entry(*f).or_default().entry(*t).or_default() += 1;
    }
    let mut used = Vec::new();
    let mut hit = 0;
    for v in votes.values() {
        let (label, n) = v.iter().max_by_key(|(_, n)| **n).unwrap();
        if !used.contains(label) {
            used.push(*label);
            hit += n;
        }
    }
    hit as f64 / truth.len() as f64
}

fn em_recovery() -> Outcome {
    let mut worst = 1.0f64;
    for seed in 0..10 {
        let (data, labels) = blobs(seed);
        let m = em_cluster(&data, &EmConfig { seed, ..EmConfig::default() }).map_err(|e| e.to_string())?;
        check!(m.k == 3, "seed {seed}: K = {}", m.k);
        let a = agreement(&m.assignments, &labels);
        check!(a >= 0.95, "seed {seed}: agreement {a}");
        worst = worst.min(a);
        for w in m.trace.windows(2) {
            check!(w[1] >= w[0] - 1e-9, "seed {seed}: log-likelihood {} -> {}", w[0], w[1]);
        }
    }
    Ok(format!("K = 3 on 10/10 seeds, worst agreement {worst:.3}"))
}

fn fv_similarity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows: Vec<RowMeta> = (0..60)
        .map(|i| RowMeta {
            workload: format!("w{}", i % 7),
            loop_id: i,
            time_share: rng.random_range(1e-4..1.0),
            workload_loop_share: 0.0,
        })
        .collect();
    let assign: Vec<usize> = (0..rows.len()).map(|_| rng.random_range(0..4)).collect();
    let (fvs, _) = build_fvs(&rows, &assign, 4);
    for f in &fvs {
        let s: f64 = f.vector.iter().sum();
        check!((s - 1.0).abs() < 1e-12, "{} sums to {s}", f.workload);
    }
    let m = similarity_matrix(&fvs).map_err(|e| e.to_string())?;
    for i in 0..m.len() {
        for j in 0..m.len() {
            check!(m.get(i, j) == m.get(j, i), "asymmetric at {i},{j}");
            check!((0.0..=1.0).contains(&m.get(i, j)), "entry {i},{j} = {}", m.get(i, j));
        }
    }
    let sim = |a: &[f64], b: &[f64]| similarity(a, b).unwrap();
    check!(sim(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]) == 1.0, "identical one-hot");
    check!(sim(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]) == 0.0, "disjoint one-hot");
    let ex = sim(&[0.5, 0.5, 0.0], &[0.5, 0.0, 0.5]);
    check!(ex == 0.25, "worked example gave {ex}");
    Ok(format!("{} FVs, {}x{} matrix, 0.25 example exact", fvs.len(), m.len(), m.len()))
}

fn halving_config(seed: u64) -> RunConfig {
    RunConfig {
        seed: Some(seed),
        suite: Some(SuiteConfig::default()),
        ..RunConfig::default()
    }
}

fn halving() -> Outcome {
    let mut notes = Vec::new();
    for seed in 1..=5 {
        let t = Instant::now();
        let mut cfg = halving_config(seed);
        cfg.synth.enabled = false;
        cfg.random_subsets = 0;
        let out = run_pipeline(&cfg).map_err(|e| e.to_string())?;
        let el = t.elapsed();
        let r = &out.reduction;
        let alive = |w: &str| r.trace.final_set.iter().any(|f| f == w);
        let halved = (0..9)
            .filter(|p| alive(&format!("w{p:02}-a")) != alive(&format!("w{p:02}-b")))
            .count();
        let n = r.trace.final_set.len();
        check!(halved >= 8, "seed {seed}: only {halved}/9 pairs halved; final {:?}", r.trace.final_set);
        check!((8..=10).contains(&n), "seed {seed}: final size {n}");
        let mut kept = vec![0usize; r.clusters.k];
        for f in r.fvs.iter().filter(|f| alive(&f.workload)) {
            for (c, l) in f.loops.iter().enumerate() {
                kept[c] += l;
            }
        }
        for (c, init) in r.trace.initial_counts.iter().enumerate() {
            check!(2 * kept[c] >= *init, "seed {seed}: cluster {c} kept {} of {init}", kept[c]);
        }
        check!(el < Duration::from_secs(120), "seed {seed}: took {el:?}");
        notes.push(format!("seed {seed}: {halved}/9 pairs, final {n}, {:.1}s", el.as_secs_f64()));
    }
    Ok(notes.join("; "))
}

fn random_picking() -> Outcome {
    let mut notes = Vec::new();
    for seed in 1..=5 {
        let mut cfg = halving_config(seed);
        cfg.synth.enabled = false;
        cfg.random_subsets = 0;
        let r = run_pipeline(&cfg).map_err(|e| e.to_string())?.reduction;
        let k = r.clusters.k;
        // Mean cluster-time vector of a set of workload indices.
        let mass = |idx: &[usize]| -> Vec<f64> {
            let mut m = vec![0.0; k];
            for &i in idx {
                for c in 0..k {
                    m[c] += r.fvs[i].vector[c] / idx.len() as f64;
                }
            }
            m
        };
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
        let all: Vec<usize> = (0..r.fvs.len()).collect();
        let reference = mass(&all);
        let chosen: Vec<usize> = all.iter().copied().filter(|&i| r.trace.final_set.contains(&r.fvs[i].workload)).collect();
        let h = dist(&mass(&chosen), &reference);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let better = (0..1000)
            .filter(|_| dist(&mass(&sample(&mut rng, all.len(), chosen.len()).into_vec()), &reference) < h - 1e-12)
            .count();
        let frac = better as f64 / 1000.0;
        check!(frac <= 0.15, "seed {seed}: {better}/1000 random subsets closer (distance {h:.4})");
        let lib = random_subset_rank(&r.fvs, &r.trace.final_set, 1000, seed);
        check!((lib.heuristic_distance - h).abs() < 1e-12, "seed {seed}: library distance {}", lib.heuristic_distance);
        check!(lib.fraction_better <= 0.15, "seed {seed}: library rank {}", lib.fraction_better);
        notes.push(format!("seed {seed}: {better}/1000 closer"));
    }
    Ok(notes.join("; "))
}

/// Non-control dynamic count per opcode over the given instruction ids.
fn mix(profile: &DynamicProfile, ids: impl Iterator<Item = usize>) -> BTreeMap<Opcode, u64> {
    let mut m = BTreeMap::new();
    for id in ids {
        let insn = &profile.listing.instructions[id];
        if !insn.category().is_control() && profile.aec[id] > 0 {
            *m.entry(insn.opcode).or_insert(0) += profile.aec[id];
        }
    }
    m
}

fn micro_bodies(micro: &MicroBenchmark) -> Vec<usize> {
    micro
        .provenance
        .iter()
        .flat_map(|p| p.body_start..p.body_start + p.body_sources.len())
        .collect()
}

fn micro_equivalence() -> Outcome {
    let mut runs = 0;
    for seed in 1..=5 {
        let (_, profile) = corpus(100 + seed);
        let loops = find_loops(&profile).unwrap().loops;
        let micro = synthesize(&loops, &SynthConfig::default()).map_err(|e| e.to_string())?;
        let source = mix(&profile, loops.iter().flat_map(|l| l.instruction_ids()));
        for run_seed in 1..=100 {
            let run = run_micro(&micro, run_seed).map_err(|e| format!("workload {seed}, run seed {run_seed}: {e}"))?;
            let got = mix(&run, micro_bodies(&micro).into_iter());
            check!(got == source, "workload {seed}, run seed {run_seed}: {got:?} vs {source:?}");
            check!(
                run.total_dyn < profile.total_dyn,
                "workload {seed}: micro {} >= workload {}",
                run.total_dyn,
                profile.total_dyn
            );
            if run_seed == 1 {
                let report = verify_mix(&micro, &run, &[&profile]).map_err(|e| e.to_string())?;
                check!(report.non_control_matches(), "workload {seed}: report mismatch");
            }
            runs += 1;
        }
    }
    Ok(format!("{runs} runs, mixes exact, no faults, all below source totals"))
}

fn determinism() -> Outcome {
    let mut cfg = halving_config(9);
    cfg.formats = vec![loopcull::pipeline::ReportFormat::Tsv, loopcull::pipeline::ReportFormat::Svg];
    let a = run_pipeline(&cfg).map_err(|e| e.to_string())?.artifacts;
    let b = run_pipeline(&cfg).map_err(|e| e.to_string())?.artifacts;
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    a.write_all(da.path()).map_err(|e| e.to_string())?;
    b.write_all(db.path()).map_err(|e| e.to_string())?;
    let mut n = 0;
    for name in a.files.keys() {
        let x = std::fs::read(da.path().join(name)).unwrap();
        let y = std::fs::read(db.path().join(name)).map_err(|_| format!("{name} missing in second run"))?;
        check!(x == y, "{name} differs");
        n += 1;
    }
    check!(a.files.len() == b.files.len(), "artifact sets differ");
    check!(a.files.contains_key("micro.tvm"), "no micro-benchmark written");
    Ok(format!("{n} artifacts byte-identical"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("loop recovery", loop_recovery),
        ("ECR trichotomy", ecr_trichotomy),
        ("dependency-chain oracle", dependency_oracle),
        ("cache oracle", cache_oracle),
        ("pattern oracle", pattern_oracle),
        ("PCA properties", pca_properties),
        ("EM recovery", em_recovery),
        ("FV and similarity contracts", fv_similarity),
        ("halving suite", halving),
        ("better than random picking", random_picking),
        ("micro-benchmark mix", micro_equivalence),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
