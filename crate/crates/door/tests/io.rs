use door::io::{load_csv, read_csv, save_csv, write_csv, ColumnMap};
use door_core::rng::stream_rng;
use door_core::simulation::{simulate_dataset, SimConfig};
use door_core::summarize;
use proptest::prelude::*;

fn sim_map() -> ColumnMap {
    ColumnMap {
        outcome: "y".into(),
        treatment: "z".into(),
        covariates: ["x1", "x2", "x3", "x4"].iter().map(|s| s.to_string()).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn write_then_read_is_identity(seed in any::<u64>(), n in 50usize..300) {
        let cfg = SimConfig { n, seed, ..SimConfig::default() };
        let ds = simulate_dataset(&cfg, &mut stream_rng(seed, 0)).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, "y", "z", &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &sim_map(), 4, false).unwrap();
        prop_assert_eq!(back.dropped, 0);
        prop_assert_eq!(&back.dataset, &ds);
    }
}

#[test]
fn file_round_trip_preserves_row_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let ds = simulate_dataset(&SimConfig { n: 120, ..SimConfig::default() }, &mut stream_rng(1, 0)).unwrap();
    save_csv(&ds, "y", "z", &path).unwrap();
    let back = load_csv(&path, &sim_map(), 4, false).unwrap().dataset;
    assert_eq!(back, ds);
    assert!(load_csv(&dir.path().join("missing.csv"), &sim_map(), 4, false).is_err());
}

#[test]
fn summary_matches_streaming_means() {
    let ds = simulate_dataset(&SimConfig { n: 777, ..SimConfig::default() }, &mut stream_rng(2, 0)).unwrap();
    let s = summarize(&ds);
    let (n0, n1) = ds.arm_sizes();
    assert_eq!(s.control.level_counts.iter().sum::<usize>(), n0);
    assert_eq!(s.treated.level_counts.iter().sum::<usize>(), n1);
    for (arm, summary) in [(0u8, &s.control), (1u8, &s.treated)] {
        for j in 0..4 {
            // Welford-style running mean.
            let mut mean = 0.0;
            let mut count = 0.0;
            for i in (0..ds.n()).filter(|&i| ds.treatment(i) == arm) {
                count += 1.0;
                mean += (ds.covariate(i, j) - mean) / count;
            }
            assert!((summary.covariate_means[j] - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn summary_reports_empty_levels() {
    let data = "y,z\n1,0\n1,0\n3,0\n2,1\n3,1\n";
    let map = ColumnMap {
        outcome: "y".into(),
        treatment: "z".into(),
        covariates: vec![],
    };
    let ds = read_csv(data.as_bytes(), &map, 4, false).unwrap().dataset;
    let s = summarize(&ds);
    assert_eq!(s.control.level_counts, [2, 0, 1, 0]);
    assert_eq!(s.treated.level_counts, [0, 1, 1, 0]);
    assert_eq!((s.control.size, s.treated.size), (3, 2));
}
