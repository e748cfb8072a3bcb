use dlo_msd::io::{
    analyze_run_dir, read_dataset, write_dataset, write_traces, DatasetContext, RunConfig,
};
use dlo_msd::parallel::Execution;
use dlo_msd::scenario::{run_experiment, sweep, RunSettings};
use dlo_msd::{CableSpec, Classification, Scenario};

fn short_scenario() -> Scenario {
    Scenario {
        settle_duration: 0.02,
        ramp_duration: 0.02,
        total_duration: 0.1,
        ..Scenario::default()
    }
}

#[test]
fn reanalysis_of_stored_traces_matches_the_live_report() {
    for spec in [
        CableSpec {
            time_step: 2e-5,
            ..CableSpec::default()
        },
        // Beyond the explicit limit: diverges, and must still agree.
        CableSpec {
            youngs_modulus: 1002.6e6,
            time_step: 1e-4,
            ..CableSpec::default()
        },
    ] {
        let settings = RunSettings::default();
        let record = run_experiment(&spec, &short_scenario(), &settings).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_traces(&record, dir.path()).unwrap();
        let stored = analyze_run_dir(dir.path(), &settings.analysis).unwrap();
        assert_eq!(stored.classification, record.report.classification);
        if record.report.classification == Classification::Unstable {
            // Stored traces only cover the monitored nodes, so detection can
            // only come later, never earlier.
            assert!(stored.time_to_instability >= record.report.time_to_instability);
        } else {
            assert_eq!(stored, record.report);
        }
    }
}

#[test]
fn dataset_lines_parse_back() {
    let cfg = RunConfig {
        scenario: short_scenario(),
        ..RunConfig::default()
    };
    let ranges = dlo_msd::RandomizationRanges {
        time_step: [1e-5, 2e-5],
        ..cfg.ranges.clone()
    };
    let records = sweep(
        &ranges,
        &cfg.spec,
        &cfg.scenario,
        3,
        &cfg.settings,
        Execution::Sequential,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let context = DatasetContext {
        ranges: Some(&ranges),
        base: &cfg.spec,
        scenario: &cfg.scenario,
    };
    write_dataset(&records, dir.path(), context).unwrap();
    let lines = read_dataset(&dir.path().join("dataset.jsonl")).unwrap();
    assert_eq!(lines.len(), 3);
    for (line, record) in lines.iter().zip(&records) {
        assert_eq!(line.index, record.index);
        assert_eq!(line.classification, record.report.classification);
        assert_eq!(
            line.time_to_instability_s.to_bits(),
            record.report.time_to_instability.to_bits()
        );
        assert_eq!(CableSpec::from(&line.params), record.sampled_spec);
        for rel in line.traces.values() {
            assert!(dir.path().join(rel).is_file(), "{rel}");
        }
    }
    let manifest = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    assert!(manifest.starts_with("generated_at_unix_s = "));
    assert!(manifest.contains("seed = 42"));
}

#[test]
fn sweep_of_one_reproduces_a_single_run() {
    let ranges = dlo_msd::RandomizationRanges {
        time_step: [1e-5, 2e-5],
        ..Default::default()
    };
    let base = CableSpec::default();
    let settings = RunSettings::default();
    let swept = sweep(
        &ranges,
        &base,
        &short_scenario(),
        1,
        &settings,
        Execution::Parallel,
    )
    .unwrap();
    let direct = run_experiment(&swept[0].sampled_spec, &short_scenario(), &settings).unwrap();
    assert_eq!(swept[0].trace, direct.trace);
    assert_eq!(swept[0].report, direct.report);
}
