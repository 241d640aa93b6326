use ftl_core::control::ControlParams;
use ftl_core::models::{build_mcn, build_rn, Mcn, McnConfig, Rn, RnConfig};
use ftl_harness::drive::{check_trace, read_trace, run_drive, summarize, write_trace, Pilot, TraceRow};
use ftl_harness::scenario::Scenario;

fn untrained_pilot(seed: u64) -> Pilot {
    Pilot::learned(
        Mcn::new(build_mcn(&McnConfig::desk(), seed).unwrap()).unwrap(),
        Rn::new(build_rn(&RnConfig::desk(), seed).unwrap()).unwrap(),
        ControlParams::default(),
    )
}

#[test]
fn expert_follows_a_lap() {
    let scn = Scenario::parse("script = lap\nstart = 6\ndirection = cw\nidentity = B\n").unwrap();
    let rows = run_drive(scn.world().unwrap(), &mut Pilot::Expert, scn.drive_duration());
    let s = summarize(&rows, 5.0);
    assert!(s.min_distance.unwrap() >= 0.5 && s.max_distance.unwrap() <= 4.0, "{s:?}");
    check_trace(&rows, &ControlParams::default()).unwrap();
}

#[test]
fn untrained_controller_traces_are_legal() {
    for (seed, script) in [(1, "lap"), (2, "vanish"), (3, "random_walk")] {
        let scn = Scenario::parse(&format!("script = {script}\nseed = {seed}\nduration = 25\nvanish_at = 3\n")).unwrap();
        let rows = run_drive(scn.world().unwrap(), &mut untrained_pilot(seed), 25.0);
        assert_eq!(rows.len(), 250);
        check_trace(&rows, &ControlParams::default()).unwrap_or_else(|e| panic!("{script}: {e}"));
    }
}

#[test]
fn trace_csv_round_trips() {
    let scn = Scenario::parse("script = vanish\nvanish_at = 1\n").unwrap();
    let rows = run_drive(scn.world().unwrap(), &mut untrained_pilot(5), 3.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_trace(&path, &rows).unwrap();
    assert_eq!(read_trace(&path).unwrap(), rows);
}

fn row(tick: u64, mode: &str, present: bool, rs: f64, steering: f64, throttle: f64) -> TraceRow {
    TraceRow {
        tick,
        time: tick as f64 * 0.1,
        av_x: 0.0,
        av_y: 0.0,
        av_heading: 0.0,
        av_speed: 0.0,
        ped_x: None,
        ped_y: None,
        visible: present,
        distance: None,
        p_present: Some(if present { 0.9 } else { 0.1 }),
        present: Some(present),
        regressor_steering: Some(rs),
        mode: mode.into(),
        steering,
        throttle,
        source: String::new(),
    }
}

#[test]
fn illegal_traces_are_rejected() {
    let p = ControlParams::default();
    // Lost for 11 frames with small steering: the 11th must start a sweep.
    let mut rows: Vec<_> = (0..11).map(|t| row(t, "tracking", false, 5.0, 5.0, 10.0)).collect();
    assert!(check_trace(&rows, &p).unwrap_err().contains("tick 10"));
    rows[10] = row(10, "sweep_search", false, 5.0, -100.0, 30.0);
    check_trace(&rows, &p).unwrap();
    // A sweep cannot flip direction.
    rows.push(row(11, "sweep_search", false, 5.0, 100.0, 30.0));
    assert!(check_trace(&rows, &p).unwrap_err().contains("direction"));
    rows[11] = row(11, "sweep_search", false, 5.0, -100.0, 30.0);
    check_trace(&rows, &p).unwrap();
    // Out-of-range command.
    rows.push(row(12, "tracking", true, 5.0, 5.0, 120.0));
    assert!(check_trace(&rows, &p).unwrap_err().contains("out of range"));
    rows.pop();
    // Emergency stop is absorbing and silent.
    rows.push(row(12, "emergency_stop", false, 5.0, 0.0, 0.0));
    assert!(check_trace(&rows, &p).is_err(), "stop before the timeout is illegal");
    let mut stopped: Vec<_> = rows[..12].to_vec();
    for t in 12..110 {
        stopped.push(row(t, "sweep_search", false, 5.0, -100.0, 30.0));
    }
    stopped.push(row(110, "emergency_stop", false, 5.0, 0.0, 0.0));
    check_trace(&stopped, &p).unwrap();
    stopped.push(row(111, "tracking", true, 50.0, 50.0, 10.0));
    assert!(check_trace(&stopped, &p).unwrap_err().contains("EmergencyStop"));
}
