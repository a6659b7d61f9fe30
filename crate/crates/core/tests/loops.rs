use loopcull::loopfinder::{compute_ecr, find_loops, segment_loops, EcrClass};
use loopcull::toyvm::{execute, generate_workload, GeneratorParams, WorkloadSpec};
use num_rational::Ratio;

fn corpus(seed: u64) -> (loopcull::toyvm::Program, loopcull::profile::DynamicProfile) {
    let spec = WorkloadSpec::sample(format!("w{seed}"), &GeneratorParams::default(), seed);
    let program = generate_workload(&spec, seed).unwrap();
    let profile = execute(&program, seed, 50_000_000).unwrap();
    (program, profile)
}

fn pairs(r: &[std::ops::Range<usize>]) -> Vec<(usize, usize)> {
    r.iter().map(|r| (r.start, r.end)).collect()
}

#[test]
fn recovers_ground_truth_on_corpus() {
    for seed in 1..=50 {
        let (program, profile) = corpus(seed);
        let truth = program.ground_truth.clone().unwrap();
        let loops = find_loops(&profile).unwrap().loops;
        let mut found: Vec<_> = loops.iter().map(|l| (pairs(&l.ranges), l.iterations)).collect();
        let mut expected: Vec<_> = truth.iter().map(|t| (pairs(&t.ranges), t.iterations)).collect();
        found.sort();
        expected.sort();
        assert_eq!(found, expected, "seed {seed}");
    }
}

#[test]
fn ecr_trichotomy_and_partition() {
    for seed in 1..=50 {
        let (_, profile) = corpus(seed);
        let report = compute_ecr(&profile).unwrap();
        let one = Ratio::from_integer(1u64);
        for a in &report.annotations {
            // Cross-multiplied integer comparison, independent of Ratio ordering.
            let expected = match (a.aec as u128).cmp(&(a.tec as u128)) {
                std::cmp::Ordering::Less => EcrClass::Conditional,
                std::cmp::Ordering::Equal => EcrClass::Serial,
                std::cmp::Ordering::Greater => EcrClass::Loop,
            };
            assert_eq!(a.class, expected);
            assert_eq!(a.ecr > one, expected == EcrClass::Loop);
        }
        let seg = segment_loops(&report, &profile);
        let mut owner = vec![0usize; profile.aec.len()];
        for l in &seg.loops {
            for id in l.instruction_ids() {
                owner[id] += 1;
                assert_eq!(profile.aec[id], l.iterations);
            }
        }
        for a in &report.annotations {
            let expect = usize::from(a.class == EcrClass::Loop);
            assert_eq!(owner[a.instruction], expect, "seed {seed} insn {}", a.instruction);
        }
    }
}
