use ftl_core::datalog::*;
use ftl_core::sim::Identity;
use ftl_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SHAPE: [usize; 3] = [6, 12, 16];

fn random_records(n: usize, seed: u64) -> Vec<FrameRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tick = 0;
    (0..n)
        .map(|_| {
            tick += rng.gen_range(1..4);
            let image = Tensor::from_fn(SHAPE, |_| rng.gen::<f64>());
            let id = [None, Some(Identity::A), Some(Identity::B)][rng.gen_range(0..3)];
            FrameRecord::new(tick, tick as f64 * 0.1, &image, rng.gen_range(-100.0..100.0), rng.gen_range(0.0..100.0), id.is_some(), id)
        })
        .collect()
}

fn log_of(records: Vec<FrameRecord>) -> LogFile {
    LogFile {
        header: LogHeader::new(SHAPE, 0.1, "script = lap\nseed = 4\n"),
        records,
    }
}

#[test]
fn hundred_records_round_trip_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ftllog");
    let log = log_of(random_records(100, 1));
    write_log(&path, &log).unwrap();
    let back = read_log(&path).unwrap();
    assert_eq!(back, log);
    assert_eq!(std::fs::read(&path).unwrap(), encode_log(&log).unwrap());
}

#[test]
fn unsealed_writer_count_is_zero_then_patched() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stream.ftllog");
    let log = log_of(random_records(3, 2));
    let mut w = LogWriter::create(&path, log.header.clone()).unwrap();
    for r in &log.records {
        w.append(r).unwrap();
    }
    assert_eq!(w.finish().unwrap(), 3);
    assert_eq!(read_log(&path).unwrap(), log);
}

#[test]
fn truncation_fails_closed_with_offset() {
    let bytes = encode_log(&log_of(random_records(4, 3))).unwrap();
    let rec_len = 34 + 6 * 12 * 16;
    let body = bytes.len() - 4 * rec_len;
    for cut in [bytes.len() - 1, bytes.len() - rec_len, body + 10, 20, 5] {
        match decode_log(&bytes[..cut]) {
            Err(LogError::Corrupt { offset, .. }) => assert!(offset as usize <= cut, "cut {cut} reported {offset}"),
            other => panic!("cut {cut}: expected corruption error, got {other:?}"),
        }
    }
    // Losing the last record points at where that record should start.
    match decode_log(&bytes[..bytes.len() - 1]) {
        Err(LogError::Corrupt { offset, .. }) => assert_eq!(offset as usize, body + 3 * rec_len),
        other => panic!("{other:?}"),
    }
}

#[test]
fn streaming_reader_matches_whole_file_reader() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.ftllog");
    let log = log_of(random_records(40, 8));
    write_log(&path, &log).unwrap();
    let reader = LogReader::open(&path).unwrap();
    assert_eq!(reader.header(), &log.header);
    assert_eq!(reader.len(), 40);
    let records: Vec<FrameRecord> = reader.collect::<Result<_, _>>().unwrap();
    assert_eq!(records, log.records);

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 100]).unwrap();
    assert!(matches!(LogReader::open(&path), Err(LogError::Corrupt { .. })));
}

#[test]
fn bad_magic_is_offset_zero() {
    let mut bytes = encode_log(&log_of(vec![])).unwrap();
    bytes[3] = b'X';
    assert!(matches!(decode_log(&bytes), Err(LogError::Corrupt { offset: 0, .. })));
}

#[test]
fn pixel_quantization_error_is_at_most_one_level() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let image = Tensor::from_fn(SHAPE, |_| rng.gen::<f64>());
    let rec = FrameRecord::new(0, 0.0, &image, 0.0, 0.0, false, None);
    let back = rec.image_tensor(SHAPE);
    assert!(back.max_abs_diff(&image) <= 1.0 / 255.0);
}

#[test]
fn eighteen_laps_split_sixteen_two_deterministically() {
    let a = split_train_test(18, SplitPolicy::Laps { test_laps: 2 }, 11).unwrap();
    let b = split_train_test(18, SplitPolicy::Laps { test_laps: 2 }, 11).unwrap();
    assert_eq!(a, b);
    assert_eq!((a.train.len(), a.test.len()), (16, 2));
    assert!(a.test.iter().all(|t| !a.train.contains(t)));
}

#[test]
fn stratified_split_holds_out_per_group() {
    let groups: Vec<&str> = (0..20).map(|i| if i % 2 == 0 { "cw" } else { "ccw" }).collect();
    let s = split_laps_stratified(&groups, 2, 3).unwrap();
    assert_eq!(s.test.len(), 4);
    assert_eq!(s.test.iter().filter(|&&i| groups[i] == "cw").count(), 2);
    assert_eq!(s.train.len() + s.test.len(), 20);
    assert!(s.test.iter().all(|t| !s.train.contains(t)));
}

#[test]
fn windows_stay_inside_their_lap() {
    let laps: Vec<Vec<FrameRecord>> = (0..6).map(|k| random_records(5 + 7 * k, k as u64)).collect();
    for lap in &laps {
        let seqs = make_sequences(lap, 5).unwrap();
        assert_eq!(seqs.len(), lap.len() - 4);
        for s in &seqs {
            assert!(s.frames().end <= lap.len());
            let last = &lap[s.frames().end - 1];
            assert_eq!(denormalize_target(s.target), (last.steering, last.throttle));
        }
    }
    assert_eq!(make_sequences(&laps[0], 5).unwrap().len(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn logs_round_trip(n in 0usize..12, seed in any::<u64>()) {
        let log = log_of(random_records(n, seed));
        prop_assert_eq!(decode_log(&encode_log(&log).unwrap()).unwrap(), log);
    }

    #[test]
    fn logged_commands_denormalize_exactly(s in -100.0f64..=100.0, t in 0.0f64..=100.0) {
        let rec = FrameRecord::new(0, 0.0, &Tensor::zeros(SHAPE), s, t, true, Some(Identity::A));
        prop_assert_eq!(denormalize_target(rec.normalized_target()), (rec.steering, rec.throttle));
    }

    #[test]
    fn frame_splits_partition(n in 1usize..400, frac in 0.05f64..0.95, seed in any::<u64>()) {
        let s = split_train_test(n, SplitPolicy::Frames { test_fraction: frac }, seed).unwrap();
        prop_assert_eq!(s.test.len(), (n as f64 * frac).round() as usize);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}
