mod common;

use std::path::PathBuf;

use keypoint3d::eval::{evaluate, EvalConfig};
use keypoint3d::geometry::CameraCalib;
use keypoint3d::kitti_io::{
    list_frames, load_label_dir, parse_calib, parse_label_file, serialize_split, write_label_dir, SplitSpec,
};
use keypoint3d::Error;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn read(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

#[test]
fn calib_fixture_selects_left_color_camera() {
    let calib = parse_calib(&read("calib_000000.txt")).unwrap();
    assert_eq!(calib, CameraCalib::kitti_reference());
}

#[test]
fn label_fixture_parses() {
    let labels = parse_label_file(&read("label_000000.txt")).unwrap();
    assert_eq!(labels.len(), 5);
    assert_eq!(labels[2].kind, "Cyclist");
    assert_eq!(labels[2].occluded, 3);
    assert_eq!(labels.iter().filter(|l| l.is_dont_care()).count(), 2);
    let gts: Vec<_> = labels.iter().filter_map(|l| l.to_ground_truth(0)).collect();
    assert_eq!(gts.len(), 3);
}

#[test]
fn short_line_reports_line_number() {
    let err = parse_label_file(&read("bad_label.txt")).unwrap_err();
    assert!(matches!(err, Error::FieldCount { line: 2, found: 14 }), "{err}");
}

#[test]
fn directory_listing_is_sorted() {
    let dir = tempfile::tempdir().unwrap();
    for id in [7u32, 0, 12, 3] {
        std::fs::write(dir.path().join(format!("{id:06}.txt")), "").unwrap();
    }
    std::fs::write(dir.path().join("notes.md"), "ignored").unwrap();
    std::fs::write(dir.path().join("12.txt"), "ignored").unwrap();
    assert_eq!(list_frames(dir.path()).unwrap(), vec![0, 3, 7, 12]);
}

#[test]
fn corpus_survives_directory_round_trip() {
    let src = tempfile::tempdir().unwrap();
    common::write_label_corpus(src.path(), 30, 4);
    let frames = load_label_dir(src.path()).unwrap();
    let dst = tempfile::tempdir().unwrap();
    write_label_dir(dst.path(), &frames).unwrap();
    let again = load_label_dir(dst.path()).unwrap();
    assert_eq!(frames.len(), 30);
    let ids: Vec<u32> = again.iter().map(|(id, _)| *id).collect();
    assert_eq!(ids, (0..30).collect::<Vec<_>>());
    write_label_dir(src.path(), &again).unwrap();
    assert_eq!(load_label_dir(src.path()).unwrap(), again);
}

#[test]
fn fixture_against_itself_is_perfect() {
    let labels = parse_label_file(&read("label_000000.txt")).unwrap();
    let gts: Vec<_> = labels.iter().filter_map(|l| l.to_ground_truth(0)).collect();
    let dets: Vec<_> = labels
        .iter()
        .filter(|l| !l.is_dont_care())
        .map(|l| l.to_detection(0).unwrap())
        .collect();
    let cfg = EvalConfig {
        difficulty: keypoint3d::eval::Difficulty::Hard,
        ..EvalConfig::default()
    };
    assert_eq!(evaluate(&dets, &gts, &cfg).unwrap().ap, 100.0);
}

#[test]
fn split_files_load_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let (train, val) = common::synthetic_split(3712, 3769, 9);
    std::fs::write(dir.path().join("train.txt"), serialize_split(&train)).unwrap();
    std::fs::write(dir.path().join("val.txt"), serialize_split(&val)).unwrap();
    let spec = SplitSpec::load(dir.path()).unwrap();
    assert_eq!((spec.train.len(), spec.val.len()), (3712, 3769));

    std::fs::write(dir.path().join("val.txt"), serialize_split(&val[1..])).unwrap();
    assert!(matches!(SplitSpec::load(dir.path()), Err(Error::SplitFormat(_))));
    assert!(matches!(
        SplitSpec::load(&dir.path().join("missing")),
        Err(Error::Io { .. })
    ));
}
