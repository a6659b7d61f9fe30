use std::path::PathBuf;

use loopcull::error::ProfileError;
use loopcull::loopfinder::find_loops;
use loopcull::profile::callgrind::parse_callgrind;
use loopcull::profile::{import_callgrind, parse_native, write_native};
use loopcull::toyvm::{execute, generate_workload, GeneratorParams, WorkloadSpec};
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn callgrind_fixture_matches_hand_parse() {
    let imp = import_callgrind(&fixture("two_functions.callgrind"), "Ir").unwrap();
    let p = &imp.profile;
    assert_eq!(p.workload, "two_functions");
    let names: Vec<&str> = p.listing.functions.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(names, ["main", "kernel"]);
    // main: four instructions once each; the inclusive cost after calls= is not its own.
    // kernel: entry, three body instructions at 10 trips per call, exit.
    assert_eq!(p.aec, [1, 1, 1, 1, 10, 100, 100, 100, 10]);
    assert_eq!(p.function_calls, [1, 10]);
    assert_eq!(p.total_dyn, 324);
    assert_eq!(
        p.source_addresses.as_deref().unwrap(),
        [0x1000, 0x1004, 0x1008, 0x100c, 0x2000, 0x2004, 0x2008, 0x200c, 0x2010]
    );
    assert_eq!(imp.roots, ["main"]);
    assert!(imp.warnings.is_empty(), "{:?}", imp.warnings);
    assert!(p.check_invariants().is_empty());
    assert!(p.address_samples.is_none() && p.branches.is_none() && p.opcode_histogram.is_none());

    let loops = find_loops(p).unwrap().loops;
    assert_eq!(loops.len(), 1);
    assert_eq!(loops[0].function, "kernel");
    assert_eq!(loops[0].ranges, [5..8]);
    assert_eq!(loops[0].iterations, 100);
}

#[test]
fn callgrind_selects_event_column() {
    let imp = import_callgrind(&fixture("two_functions.callgrind"), "Dr").unwrap();
    assert_eq!(imp.profile.aec, [0, 0, 0, 0, 0, 100, 0, 0, 10]);
    assert!(imp.warnings.is_empty(), "{:?}", imp.warnings);
    match import_callgrind(&fixture("two_functions.callgrind"), "Bc") {
        Err(ProfileError::UnknownEvent { available, .. }) => assert_eq!(available, ["Ir", "Dr"]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn callgrind_native_round_trip_keeps_absent_fields() {
    let imp = import_callgrind(&fixture("two_functions.callgrind"), "Ir").unwrap();
    assert_eq!(parse_native(&write_native(&imp.profile)).unwrap(), imp.profile);
}

#[test]
fn callgrind_without_instruction_positions_is_rejected() {
    let text = "events: Ir\npositions: line\nfn=main\n3 10\n";
    assert!(matches!(
        parse_callgrind(text, "w", "Ir"),
        Err(ProfileError::UnsupportedFormat(_))
    ));
    assert!(matches!(
        parse_callgrind("events: Ir\n", "w", "Ir"),
        Err(ProfileError::UnsupportedFormat(_))
    ));
}

#[test]
fn callgrind_mismatched_total_warns() {
    let text = "positions: instr\nevents: Ir\nfn=f\n0x10 5\n+2 5\ntotals: 11\n";
    let imp = parse_callgrind(text, "w", "Ir").unwrap();
    assert_eq!(imp.profile.total_dyn, 10);
    assert_eq!(imp.warnings.len(), 1);
}

#[test]
fn callgrind_malformed_cost_names_line() {
    let text = "positions: instr\nevents: Ir\nfn=f\n0x10 zz\n";
    match parse_callgrind(text, "w", "Ir") {
        Err(ProfileError::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn native_round_trip(seed in 0u64..10_000, drop_optional in any::<bool>()) {
        let spec = WorkloadSpec::sample("rt", &GeneratorParams::default(), seed);
        let program = generate_workload(&spec, seed).unwrap();
        let mut p = execute(&program, seed, 50_000_000).unwrap();
        if drop_optional {
            p.branches = None;
            p.address_samples = None;
            p.bytes_loaded = None;
        }
        let text = write_native(&p);
        let back = parse_native(&text).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(write_native(&back), text);
    }
}
