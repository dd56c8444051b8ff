use std::collections::BTreeSet;

use emgttl::dataset::{
    batches, build_split, epoch_seed, load_dataset, read_segments, segment_count, segment_starts,
    segment_trial, synth_generate, write_dataset, write_segments, Geometry, SegmentationConfig,
    SplitSpec, SynthSpec,
};
use emgttl::dsp::SignalTrial;
use proptest::prelude::*;

fn spec(classes: usize, trials: usize, duration_s: f64, fs: f64, channels: usize) -> SynthSpec {
    SynthSpec {
        num_classes: classes,
        subjects: 1,
        trials_per_class: trials,
        duration_s,
        sample_rate_hz: fs,
        channels,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn segment_count_matches_enumeration(s in 1usize..40, dw in 0usize..60, dt in 0usize..400) {
        let w = s + dw;
        let t = w + dt;
        let naive: Vec<usize> = (0..t).filter(|i| i % s == 0 && i + w <= t).collect();
        prop_assert_eq!(segment_count(t, w, s), naive.len());
        prop_assert_eq!(segment_starts(t, w, s).collect::<Vec<_>>(), naive.clone());
        let last = *naive.last().unwrap();
        prop_assert!(last + w <= t);
    }
}

#[test]
fn standard_geometries_give_expected_counts() {
    let trial = SignalTrial::new(vec![0.0; 5 * 40_000], 5, 4000.0, "s", 1, 0).unwrap();
    let g = SegmentationConfig::standard().geometry(4000.0, 5).unwrap();
    assert_eq!(segment_trial(&trial, g).unwrap().segments.len(), 39);
    let g = SegmentationConfig::short().geometry(4000.0, 5).unwrap();
    assert_eq!(segment_trial(&trial, g).unwrap().segments.len(), 98);
}

#[test]
fn synthetic_shape_and_determinism() {
    let s = spec(4, 5, 4.0, 2000.0, 5);
    let (manifest, trials) = synth_generate(&s, 11).unwrap();
    assert_eq!(trials.len(), 20);
    assert_eq!(manifest.trials.len(), 20);
    assert!(trials.iter().all(|t| t.channels() == 5 && t.len() == 8000));
    let (_, again) = synth_generate(&s, 11).unwrap();
    assert_eq!(trials, again);
    let (_, other) = synth_generate(&s, 12).unwrap();
    assert_ne!(trials[0].samples(), other[0].samples());
    let class0 = trials.iter().find(|t| t.label == 0).unwrap();
    let class1 = trials.iter().find(|t| t.label == 1).unwrap();
    assert_ne!(class0.samples(), class1.samples());
    // physical-like scale, not pre-normalized
    let peak = class0.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(peak > 10.0, "peak {peak}");
}

#[test]
fn file_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data").join("manifest.json");
    let (manifest, trials) = synth_generate(&spec(2, 1, 2.0, 2000.0, 5), 5).unwrap();
    write_dataset(&path, &manifest, &trials).unwrap();
    let (loaded_manifest, loaded) = load_dataset(&path).unwrap();
    assert_eq!(loaded_manifest, manifest);
    assert_eq!(loaded.len(), 2);
    for (a, b) in trials.iter().zip(&loaded) {
        assert_eq!(b.channels(), 5);
        assert_eq!(b.len(), 4000);
        let same = a
            .samples()
            .iter()
            .zip(b.samples())
            .all(|(x, y)| x.to_bits() == y.to_bits());
        assert!(same);
        assert_eq!((a.label, a.trial_id, &a.subject_id), (b.label, b.trial_id, &b.subject_id));
    }
}

#[test]
fn empty_manifest_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(
        &path,
        r#"{"name":"e","channels":5,"sample_rate_hz":2000,"classes":["a"],"trials":[]}"#,
    )
    .unwrap();
    let (m, trials) = load_dataset(&path).unwrap();
    assert!(trials.is_empty() && m.trials.is_empty());
}

#[test]
fn load_errors_name_the_offender() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(
        &path,
        r#"{"name":"e","channels":2,"sample_rate_hz":100,"classes":["a"],
           "trials":[{"file":"absent.f32","subject_id":"s1","trial_id":1,"class_index":0}]}"#,
    )
    .unwrap();
    let err = load_dataset(&path).unwrap_err().to_string();
    assert!(err.contains("absent.f32"), "{err}");

    std::fs::write(dir.path().join("odd.f32"), [0u8; 12]).unwrap();
    std::fs::write(
        &path,
        r#"{"name":"e","channels":2,"sample_rate_hz":100,"classes":["a"],
           "trials":[{"file":"odd.f32","subject_id":"s1","trial_id":4,"class_index":0}]}"#,
    )
    .unwrap();
    let err = load_dataset(&path).unwrap_err().to_string();
    assert!(err.contains("s1/4") && err.contains("12 bytes"), "{err}");

    std::fs::write(
        &path,
        r#"{"name":"e","channels":2,"sample_rate_hz":100,"classes":["a"],
           "trials":[{"file":"odd.f32","subject_id":"s1","trial_id":4,"class_index":3}]}"#,
    )
    .unwrap();
    let err = load_dataset(&path).unwrap_err().to_string();
    assert!(err.contains("unknown class"), "{err}");
}

fn geometry() -> Geometry {
    SegmentationConfig::standard().geometry(200.0, 5).unwrap()
}

#[test]
fn db1_split_routes_whole_trials() {
    let (_, trials) = synth_generate(&spec(2, 10, 3.0, 200.0, 5), 2).unwrap();
    let split = SplitSpec::preset("db1-paper").unwrap();
    let out = build_split(&trials, &split, geometry()).unwrap();
    let per_trial = segment_count(600, 100, 50);
    assert_eq!(out.train.len(), 2 * 7 * per_trial);
    assert_eq!(out.test.len(), 2 * 3 * per_trial);
    let train_ids: BTreeSet<u32> = out.train.iter().map(|s| s.trial_id).collect();
    let test_ids: BTreeSet<u32> = out.test.iter().map(|s| s.trial_id).collect();
    assert!(train_ids.is_disjoint(&test_ids));
    assert_eq!(train_ids, BTreeSet::from([1, 3, 4, 6, 8, 9, 10]));
    assert_eq!(test_ids, BTreeSet::from([2, 5, 7]));
}

#[test]
fn db4_split_routes_whole_trials() {
    let (_, trials) = synth_generate(&spec(3, 5, 2.0, 200.0, 5), 2).unwrap();
    let split = SplitSpec::preset("db4-paper").unwrap();
    let out = build_split(&trials, &split, geometry()).unwrap();
    let per_trial = segment_count(400, 100, 50);
    assert_eq!(out.train.len(), 3 * 3 * per_trial);
    assert_eq!(out.test.len(), 3 * 2 * per_trial);
}

#[test]
fn split_with_absent_trial_is_rejected() {
    let (_, trials) = synth_generate(&spec(1, 10, 1.0, 200.0, 5), 2).unwrap();
    let split = SplitSpec::new([1, 2, 11], [3]);
    let err = build_split(&trials, &split, geometry()).unwrap_err().to_string();
    assert!(err.contains("11"), "{err}");
}

#[test]
fn short_trials_are_flagged_not_fatal() {
    let (_, trials) = synth_generate(&spec(1, 2, 0.25, 200.0, 5), 2).unwrap();
    let out = build_split(&trials, &SplitSpec::new([1], [2]), geometry()).unwrap();
    assert!(out.train.is_empty() && out.test.is_empty());
    assert_eq!(out.short_trials.len(), 2);
}

#[test]
fn archive_round_trip_and_corruption() {
    let (_, trials) = synth_generate(&spec(2, 2, 1.0, 200.0, 5), 9).unwrap();
    let out = build_split(&trials, &SplitSpec::new([1], [2]), geometry()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("seg.emgs");
    write_segments(&path, &out.train).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"EMGS");
    assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 5);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 100);
    assert_eq!(
        u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize,
        out.train.len()
    );
    assert_eq!(read_segments(&path).unwrap(), out.train);

    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    let err = read_segments(&path).unwrap_err().to_string();
    assert!(err.contains("byte") && err.contains("truncated"), "{err}");
    let mut bad = bytes.clone();
    bad[0] = b'X';
    std::fs::write(&path, bad).unwrap();
    assert!(read_segments(&path).unwrap_err().to_string().contains("magic"));
}

#[test]
fn batching_sizes_and_order() {
    let trial = SignalTrial::new((0..5 * 14).map(|v| v as f64).collect(), 5, 10.0, "s", 1, 0)
        .unwrap();
    let g = Geometry {
        channels: 5,
        window: 5,
        step: 1,
    };
    let segments = segment_trial(&trial, g).unwrap().segments;
    assert_eq!(segments.len(), 10);
    let sizes: Vec<usize> = batches(&segments, 4, None).unwrap().map(|b| b.len()).collect();
    assert_eq!(sizes, vec![4, 4, 2]);
    let plain = batches(&segments, 4, None).unwrap();
    assert_eq!(plain.order(), (0..10).collect::<Vec<_>>().as_slice());
    let first: Vec<_> = batches(&segments, 3, Some(7)).unwrap().collect();
    let second: Vec<_> = batches(&segments, 3, Some(7)).unwrap().collect();
    assert_eq!(first, second);
    let a = batches(&segments, 3, Some(epoch_seed(7, 0))).unwrap().order().to_vec();
    let b = batches(&segments, 3, Some(epoch_seed(7, 1))).unwrap().order().to_vec();
    assert_ne!(a, b);
    let mut sorted = a.clone();
    sorted.sort();
    assert_eq!(sorted, (0..10).collect::<Vec<_>>());
    let batch = batches(&segments, 10, None).unwrap().next().unwrap();
    assert_eq!(batch.x.len(), 10 * 25);
    assert_eq!(&batch.x[25..30], segments[1].data[..5].to_vec().as_slice());
    assert!(batches(&segments, 0, None).is_err());
    assert_eq!(batches(&[], 4, None).unwrap().count(), 0);
}
