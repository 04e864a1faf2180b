use std::fs;

use lmcorr_core::dataset::{write_pts, write_wflw_line};
use lmcorr_core::search::{subsample_indices, SweepConfig};
use lmcorr_core::synth::{generate, LatentModelSpec};
use lmcorr_core::{
    export_matrix, import_matrix, load_dataset, parse_pts, parse_wflw_line, sweep, Dataset, Error, InputFormat,
    LandmarkSet, MatrixLayout, Method, SquareMatrix, DEFAULT_RIDGE,
};
use proptest::prelude::*;

fn ring(m: usize, k: usize) -> Vec<[f64; 2]> {
    (0..m)
        .map(|j| {
            let t = j as f64 / m as f64 * std::f64::consts::TAU;
            [
                100.0 + 40.0 * t.cos() + k as f64,
                80.0 + 50.0 * t.sin() - 0.5 * k as f64,
            ]
        })
        .collect()
}

#[test]
fn directory_of_pts_files_loads_in_path_order() {
    let dir = tempfile::tempdir().unwrap();
    for k in (0..10).rev() {
        let set = LandmarkSet::new(format!("img{k:02}"), ring(68, k));
        fs::write(dir.path().join(format!("img{k:02}.pts")), write_pts(&set)).unwrap();
    }
    fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let d = load_dataset(dir.path(), InputFormat::Auto).unwrap();
    assert_eq!(d.len(), 10);
    assert_eq!(d.m_size(), 68);
    let ids: Vec<_> = d.records().iter().map(|r| r.image_id.as_str()).collect();
    let expected: Vec<String> = (0..10).map(|k| format!("img{k:02}")).collect();
    assert_eq!(ids, expected);
    assert_eq!(d.records()[3].points, ring(68, 3));
    assert_eq!(load_dataset(dir.path(), InputFormat::Auto).unwrap(), d);
}

#[test]
fn nested_directories_use_relative_ids() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("b")).unwrap();
    fs::create_dir(dir.path().join("a")).unwrap();
    for (sub, k) in [("b", 0), ("a", 1), ("a", 2)] {
        let set = LandmarkSet::new("x", ring(5, k));
        fs::write(dir.path().join(sub).join(format!("f{k}.pts")), write_pts(&set)).unwrap();
    }
    let d = load_dataset(dir.path(), InputFormat::Pts).unwrap();
    let ids: Vec<_> = d.records().iter().map(|r| r.image_id.as_str()).collect();
    assert_eq!(ids, ["a/f1", "a/f2", "b/f0"]);
}

#[test]
fn empty_directory_reports_no_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_dataset(dir.path(), InputFormat::Auto).unwrap_err();
    assert!(matches!(err, Error::NoAnnotations(_)));
    assert!(err.to_string().contains("no annotations found"), "{err}");
}

#[test]
fn mixed_point_counts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for k in 0..3 {
        fs::write(
            dir.path().join(format!("a{k}.pts")),
            write_pts(&LandmarkSet::new("", ring(68, k))),
        )
        .unwrap();
    }
    fs::write(
        dir.path().join("odd.pts"),
        write_pts(&LandmarkSet::new("", ring(98, 0))),
    )
    .unwrap();
    match load_dataset(dir.path(), InputFormat::Auto).unwrap_err() {
        Error::MixedPointCounts { expected, offenders } => {
            assert_eq!(expected, 68);
            assert_eq!(offenders.len(), 1);
            assert!(offenders[0].contains("odd"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn malformed_pts_reports_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("good.pts"),
        write_pts(&LandmarkSet::new("", ring(3, 0))),
    )
    .unwrap();
    fs::write(
        dir.path().join("bad.pts"),
        "version: 1\nn_points: 2\n{\n1 2\n3 oops\n}\n",
    )
    .unwrap();
    let err = load_dataset(dir.path(), InputFormat::Auto).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("bad") && text.contains(":5:"), "{text}");
}

#[test]
fn wflw_file_and_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let records: Vec<_> = (0..4)
        .map(|k| LandmarkSet::new(format!("dir/img_{k}.jpg"), ring(98, k)))
        .collect();
    let text: String = records.iter().map(|r| write_wflw_line(r) + "\n").collect();
    let path = dir.path().join("list_98pt.txt");
    fs::write(&path, text).unwrap();
    let d = load_dataset(&path, InputFormat::Auto).unwrap();
    assert_eq!(d.records(), records.as_slice());

    let json = dir.path().join("data.json");
    fs::write(&json, d.to_json_string().unwrap()).unwrap();
    assert_eq!(load_dataset(&json, InputFormat::Auto).unwrap(), d);
}

#[test]
fn missing_path_is_an_io_error() {
    let err = load_dataset(std::path::Path::new("/nonexistent/lmcorr"), InputFormat::Auto).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

fn small_face(n: usize, seed: u64) -> Dataset {
    generate(&LatentModelSpec::face_like(10, 2, 0.5, n, seed)).unwrap()
}

fn cfg(ratio: f64, runs: usize, seed: u64) -> SweepConfig {
    SweepConfig {
        ratio,
        runs,
        seed,
        method: Method::Exact,
        time_limit: None,
        ridge: DEFAULT_RIDGE,
    }
}

#[test]
fn sweep_with_full_data_single_run_has_zero_variance() {
    let d = small_face(80, 1);
    let curve = sweep(&d, 1..=10, &cfg(1.0, 1, 3)).unwrap();
    assert_eq!(curve.points.len(), 10);
    assert!(curve.points.iter().all(|p| p.c_hat_var == 0.0 && p.runs == 1));
    assert_eq!(curve.points.last().unwrap().c_hat_mean, 1.0);
    for w in curve.points.windows(2) {
        assert!(w[0].c_hat_mean <= w[1].c_hat_mean);
    }
}

#[test]
fn sweep_is_reproducible_from_seed() {
    let d = small_face(120, 2);
    let a = sweep(&d, 2..=6, &cfg(0.5, 4, 17)).unwrap();
    let b = sweep(&d, 2..=6, &cfg(0.5, 4, 17)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
    assert!(a.to_csv().starts_with("m,mean,var\n"));
    let c = sweep(&d, 2..=6, &cfg(0.5, 4, 18)).unwrap();
    assert_ne!(a, c);
    assert!(a.points.iter().any(|p| p.c_hat_var > 0.0));
}

#[test]
fn sweep_rejects_bad_configuration() {
    let d = small_face(20, 3);
    assert!(sweep(&d, 0..=3, &cfg(0.5, 2, 0)).is_err());
    assert!(sweep(&d, 1..=11, &cfg(0.5, 2, 0)).is_err());
    assert!(sweep(&d, 1..=3, &cfg(0.0, 2, 0)).is_err());
    assert!(sweep(&d, 1..=3, &cfg(0.5, 0, 0)).is_err());
    assert!(matches!(
        sweep(&d, 1..=3, &cfg(0.05, 1, 0)),
        Err(Error::TooFewRecords { .. })
    ));
}

#[test]
fn subsamples_are_sorted_distinct_and_seeded() {
    let a = subsample_indices(100, 0.25, 9, 0);
    assert_eq!(a.len(), 25);
    assert!(a.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(a, subsample_indices(100, 0.25, 9, 0));
    assert_ne!(a, subsample_indices(100, 0.25, 9, 1));
    assert_eq!(subsample_indices(7, 1.0, 9, 3), (0..7).collect::<Vec<_>>());
}

fn coord() -> impl Strategy<Value = f64> {
    prop_oneof![-1e4f64..1e4, (-1000i32..1000).prop_map(f64::from)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pts_round_trip(points in prop::collection::vec((coord(), coord()), 1..100)) {
        let set = LandmarkSet::new("img", points.into_iter().map(|(x, y)| [x, y]).collect());
        prop_assert_eq!(parse_pts(&write_pts(&set), "img").unwrap(), set);
    }

    #[test]
    fn wflw_round_trip(points in prop::collection::vec((coord(), coord()), 98)) {
        let set = LandmarkSet::new("a/b.png", points.into_iter().map(|(x, y)| [x, y]).collect());
        prop_assert_eq!(parse_wflw_line(&write_wflw_line(&set), "f", 1).unwrap(), set);
    }

    #[test]
    fn json_round_trip(n in 2usize..8, m in 1usize..20, seed in any::<u32>()) {
        let records = (0..n)
            .map(|k| LandmarkSet::new(format!("id{k}"), (0..m).map(|j| [(seed as f64).sqrt() + j as f64 * 0.1, k as f64 / 3.0]).collect()))
            .collect();
        let d = Dataset::new("generic", records).unwrap();
        prop_assert_eq!(Dataset::from_json_str(&d.to_json_string().unwrap()).unwrap(), d);
    }

    #[test]
    fn matrix_round_trip_within_nine_digits(m in 1usize..12, seed in any::<u64>()) {
        let a = SquareMatrix::from_fn(m, |i, j| ((seed % 1000) as f64 + (i * 31 + j * 17) as f64).sin());
        for layout in [MatrixLayout::Csv, MatrixLayout::Json] {
            let mut buf = Vec::new();
            export_matrix(&a, &mut buf, layout).unwrap();
            let back = import_matrix(std::str::from_utf8(&buf).unwrap(), layout).unwrap();
            for (x, y) in a.as_slice().iter().zip(back.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-8 * x.abs().max(1e-300));
            }
        }
    }
}
