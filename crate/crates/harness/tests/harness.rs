use std::path::PathBuf;
use std::process::Command;

use bichore::bench::{bench, bench_csv, BenchCell, BenchGrid, HEADER};
use bichore::format::{
    instance_to_string, load_instance, parse_instance, parse_json, save_instance, to_json, InstanceFile,
};
use bichore::gen::{gen_instance, GenParams};
use bichore::pipeline::{audit_report, normalize, Mode, PipelineOptions};
use bichore::trace::{replay, TraceFile};
use bichore::{run_pipeline, HarnessError, RunReport};
use bichore_core::{Beta, RawInstance, Rational};
use proptest::prelude::*;

fn r(n: i128, d: i128) -> Rational {
    Rational::new(n, d).unwrap()
}

fn params(seed: u64) -> GenParams {
    GenParams { n: 4, m: 7, k: r(5, 2), high_prob: r(1, 2), seed }
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn opts() -> PipelineOptions {
    PipelineOptions { trace: true, ..PipelineOptions::default() }
}

#[test]
fn gen_is_deterministic() {
    let a = instance_to_string(&InstanceFile::from_raw(&gen_instance(&params(9)).unwrap()));
    let b = instance_to_string(&InstanceFile::from_raw(&gen_instance(&params(9)).unwrap()));
    assert_eq!(a, b);
    assert_ne!(gen_instance(&params(9)).unwrap(), gen_instance(&params(10)).unwrap());
}

#[test]
fn gen_extreme_probabilities() {
    let zero = gen_instance(&GenParams { high_prob: Rational::ZERO, ..params(1) }).unwrap();
    assert!((0..4).all(|i| zero.row(i).iter().all(|&c| c == Rational::ONE)));
    let one = gen_instance(&GenParams { high_prob: Rational::ONE, ..params(1) }).unwrap();
    let lows: usize = (0..4).map(|i| one.row(i).iter().filter(|&&c| c == Rational::ONE).count()).sum();
    assert_eq!(lows, 4);
}

#[test]
fn gen_rejects_bad_params() {
    assert!(gen_instance(&GenParams { k: Rational::ONE, ..params(0) }).is_err());
    assert!(gen_instance(&GenParams { high_prob: r(3, 2), ..params(0) }).is_err());
    assert!(gen_instance(&GenParams { n: 0, ..params(0) }).is_err());
}

#[test]
fn instance_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.json");
    let raw = gen_instance(&params(3)).unwrap();
    save_instance(&path, &InstanceFile::from_raw(&raw)).unwrap();
    let loaded = load_instance(&path).unwrap();
    assert_eq!(loaded.raw, raw);
    assert!(loaded.start.is_none());
}

#[test]
fn parse_errors_name_line_and_field() {
    let bad_k = "{\n  \"format_version\": 1,\n  \"n\": 1,\n  \"m\": 1,\n  \"k\": [2, 0],\n  \"costs\": [[[1, 1]]]\n}";
    match parse_instance(bad_k) {
        Err(HarnessError::Parse { line, field, .. }) => {
            assert_eq!(line, 5);
            assert_eq!(field, "k");
        }
        other => panic!("unexpected {other:?}"),
    }
    let ragged = r#"{"format_version": 1, "n": 2, "m": 2, "costs": [[[1,1],[2,1]], [[1,1]]]}"#;
    assert!(matches!(parse_instance(ragged), Err(HarnessError::Field { field, .. }) if field == "costs[1]"));
    let wrong_k = r#"{"format_version": 1, "n": 1, "m": 2, "k": [3,1], "costs": [[[1,1],[2,1]]]}"#;
    assert!(matches!(parse_instance(wrong_k), Err(HarnessError::Field { field, .. }) if field == "k"));
    let version = r#"{"format_version": 7, "n": 1, "m": 1, "costs": [[[1,1]]]}"#;
    assert!(matches!(parse_instance(version), Err(HarnessError::Field { field, .. }) if field == "format_version"));
    let text = r#"{"format_version": 1, "n": 1, "m": 1, "costs": [[[1,"x"]]]}"#;
    assert!(matches!(parse_instance(text), Err(HarnessError::Parse { .. })));
}

#[test]
fn approx_example_meets_its_bound() {
    let file = load_instance(&data("example_approx_k6.json")).unwrap();
    let out = run_pipeline(&file.raw, Mode::Approx, file.start.as_ref(), &opts());
    assert!(out.report.success);
    assert!(out.report.beta_efx().unwrap() <= Beta::Finite(r(11, 6)));
}

#[test]
fn move_example_dispatches_exact2() {
    let file = load_instance(&data("example_move_k2.json")).unwrap();
    let out = run_pipeline(&file.raw, Mode::Auto, file.start.as_ref(), &opts());
    assert_eq!(out.report.stage, "exact2");
    assert!(out.report.success);
    assert_eq!(out.report.beta_efx(), Some(Beta::Finite(Rational::ONE)));
}

#[test]
fn example_instances_from_scratch() {
    for name in ["example_approx_k6.json", "example_swap_k2.json", "example_move_k2.json", "two_agents.json"] {
        let file = load_instance(&data(name)).unwrap();
        let out = run_pipeline(&file.raw, Mode::Auto, None, &opts());
        assert!(out.report.success, "{name}: {:?}", out.report.error);
    }
}

#[test]
fn single_agent_succeeds_in_every_mode() {
    let raw = RawInstance::from_integers(&[&[1, 3, 3]]).unwrap();
    for mode in [Mode::Pef1, Mode::Approx, Mode::Auto] {
        let out = run_pipeline(&raw, mode, None, &opts());
        assert!(out.report.success, "{mode}");
    }
    let two = RawInstance::from_integers(&[&[1, 2, 2]]).unwrap();
    assert!(run_pipeline(&two, Mode::Exact2, None, &opts()).report.success);
    let uniform = RawInstance::from_integers(&[&[4, 4]]).unwrap();
    let out = run_pipeline(&uniform, Mode::Exact2, None, &opts());
    assert_eq!(out.report.stage, "uniform");
    assert!(out.report.success);
}

#[test]
fn exact2_rejects_other_k() {
    let raw = RawInstance::from_integers(&[&[1, 3], &[3, 1]]).unwrap();
    let out = run_pipeline(&raw, Mode::Exact2, None, &opts());
    assert!(!out.report.success);
    assert!(out.report.error.unwrap().contains("k must equal 2"));
}

#[test]
fn uniform_instances_get_a_balanced_allocation() {
    let raw = RawInstance::from_integers(&[&[1, 1, 1], &[6, 6, 6]]).unwrap();
    assert_eq!(normalize(&raw).unwrap(), None);
    let out = run_pipeline(&raw, Mode::Auto, None, &opts());
    assert_eq!(out.report.stage, "uniform");
    assert_eq!(out.report.final_state.unwrap().owners, vec![1, 2, 1]);
    assert!(out.report.success);
}

#[test]
fn reports_are_deterministic_and_replayable() {
    for seed in 0..30 {
        let raw = gen_instance(&GenParams { k: Rational::integer(2), ..params(seed) }).unwrap();
        let a = run_pipeline(&raw, Mode::Auto, None, &opts());
        let b = run_pipeline(&raw, Mode::Auto, None, &opts());
        assert_eq!(a.report.without_timings(), b.report.without_timings());
        assert_eq!(a.trace, b.trace);
        let trace = a.trace.unwrap();
        let back: TraceFile = parse_json(&to_json(&trace)).unwrap();
        assert_eq!(back, trace);
        let inst = normalize(&raw).unwrap().unwrap();
        let fin = a.report.final_state.as_ref().unwrap();
        assert_eq!(replay(&inst, &back).unwrap(), (fin.owners.clone(), fin.payments.clone()));
        let report: RunReport = parse_json(&to_json(&a.report)).unwrap();
        assert_eq!(report, a.report);
        assert!(audit_report(&raw, &report).unwrap().is_empty());
    }
}

#[test]
fn audit_catches_tampering() {
    let raw = gen_instance(&params(5)).unwrap();
    let mut report = run_pipeline(&raw, Mode::Auto, None, &opts()).report;
    let st = report.final_state.as_mut().unwrap();
    st.owners.iter_mut().for_each(|o| *o = 1);
    assert!(!audit_report(&raw, &report).unwrap().is_empty());
}

fn grid(k: Rational, seeds: std::ops::Range<u64>) -> BenchGrid {
    BenchGrid {
        cells: vec![
            BenchCell { n: 3, m: 7, k, high_prob: r(1, 2) },
            BenchCell { n: 5, m: 10, k, high_prob: r(1, 3) },
        ],
        seeds,
        mode: Mode::Auto,
        oracle_budget: 0,
    }
}

fn max_beta(g: &BenchGrid) -> String {
    let rows = bench(g);
    assert!(rows.iter().filter(|r| r.kind == "run").all(|r| r.pass == Some(true)));
    rows.iter().find(|r| r.kind == "max_beta").unwrap().beta_efx.clone().unwrap()
}

#[test]
fn bench_k2_reaches_efx() {
    assert_eq!(max_beta(&grid(Rational::integer(2), 0..100)), "1");
}

#[test]
fn bench_k3_stays_within_bound() {
    let max: Rational = max_beta(&grid(Rational::integer(3), 0..100)).parse().unwrap();
    assert!(max <= r(5, 3));
}

#[test]
fn bench_empty_seed_range_is_header_only() {
    let csv = bench_csv(&grid(Rational::integer(2), 5..5));
    assert_eq!(csv, HEADER.join(",") + "\n");
}

#[test]
fn bench_rows_follow_grid_order() {
    let rows = bench(&grid(Rational::integer(3), 0..20));
    let keys: Vec<(Option<usize>, Option<u64>)> = rows.iter().map(|r| (r.n, r.seed)).collect();
    let mut expect: Vec<(Option<usize>, Option<u64>)> =
        [3, 5].iter().flat_map(|&n| (0..20).map(move |s| (Some(n), Some(s)))).collect();
    expect.push((None, None));
    assert_eq!(keys, expect);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bichore"))
}

#[test]
fn cli_gen_solve_verify() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("i.json");
    let report = dir.path().join("r.json");
    let trace = dir.path().join("t.json");
    let st = bin()
        .args(["gen", "--n", "3", "--m", "6", "--k", "2", "--seed", "11", "--out"])
        .arg(&inst)
        .status()
        .unwrap();
    assert!(st.success());
    let st = bin().arg("solve").arg(&inst).arg("--out").arg(&report).arg("--trace").arg(&trace).status().unwrap();
    assert!(st.success());
    let out = bin().arg("verify").arg(&inst).arg(&report).arg("--trace").arg(&trace).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "OK");

    let mut rep: RunReport = parse_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    rep.final_state.as_mut().unwrap().owners.iter_mut().for_each(|o| *o = 1);
    std::fs::write(&report, to_json(&rep)).unwrap();
    let out = bin().arg("verify").arg(&inst).arg(&report).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));

    let out = bin().args(["solve", "--mode", "exact2"]).arg(data("example_approx_k6.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["solve", "missing.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_oracle_and_bench() {
    let out = bin().arg("oracle").arg(data("two_agents.json")).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["efx_po_witness"], serde_json::json!([1, 2]));
    assert_eq!(v["best_efx_beta_over_po"], "1");
    let out = bin().args(["bench", "--n", "3", "--m", "5", "--k", "2,5/2", "--seeds", "4"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 8 + 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_instances_round_trip(seed in any::<u64>(), n in 1usize..6, m in 1usize..10, p in 0i128..=8) {
        let raw = gen_instance(&GenParams { n, m, k: r(7, 3), high_prob: r(p, 8), seed }).unwrap();
        let text = instance_to_string(&InstanceFile::from_raw(&raw));
        prop_assert_eq!(parse_instance(&text).unwrap().raw, raw.clone());
        for i in 0..n {
            prop_assert!(raw.row(i).contains(&Rational::ONE));
        }
    }
}
