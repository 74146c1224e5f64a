use std::path::{Path, PathBuf};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pumptrack::config::ScenarioConfig;
use pumptrack::mocap::{accel_series, extract_bounds, rider_com, BoundsReport, MarkerSeries, ScalarSeries, SegmentModel};
use pumptrack::simulate::rollout;
use pumptrack::{Bounds, Scenario, Vec3};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn fixtures() -> (ScalarSeries, ScalarSeries) {
    (ScalarSeries::read_csv(&data("fig4_l.csv")).unwrap(), ScalarSeries::read_csv(&data("fig5_a.csv")).unwrap())
}

#[test]
fn fixture_layout() {
    let (l, a) = fixtures();
    assert_eq!(l.len(), 162);
    assert_eq!(a.len(), 162);
    assert_eq!(l.values()[0], 0.312363791644014);
    assert!((l.sample_rate - 100.0).abs() < 1e-9);
    assert_eq!(l.start_time, 0.0);
}

#[test]
fn fixture_bounds_are_the_scenario_defaults() {
    let (l, a) = fixtures();
    assert_eq!(extract_bounds(&l, &a).unwrap(), Bounds::default());
    assert_eq!(
        BoundsReport(&extract_bounds(&l, &a).unwrap()).to_string(),
        "l_min = 0.278028432325324\nl_max = 0.595589962783839\nu_min = -8.66483516272901\nu_max = 30.1478116762068\n"
    );
}

#[test]
fn bounds_ignore_sample_order() {
    let (l, a) = fixtures();
    let reference = extract_bounds(&l, &a).unwrap();
    let rev = |s: &ScalarSeries| ScalarSeries::new(s.sample_rate, s.values().iter().rev().copied().collect()).unwrap();
    assert_eq!(extract_bounds(&rev(&l), &rev(&a)).unwrap(), reference);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let mut lv = l.values().to_vec();
        let mut av = a.values().to_vec();
        lv.shuffle(&mut rng);
        av.shuffle(&mut rng);
        let b = extract_bounds(&ScalarSeries::new(100.0, lv).unwrap(), &ScalarSeries::new(100.0, av).unwrap()).unwrap();
        assert_eq!(b, reference);
    }
}

#[test]
fn differentiated_distance_is_not_the_measured_acceleration() {
    // the two fixtures come from different measurements, so the fallback
    // differentiation path cannot stand in for the measured series
    let (l, a) = fixtures();
    let d = accel_series(&l, None).unwrap();
    let b = extract_bounds(&l, &d).unwrap();
    assert_ne!(b.u_max, Bounds::default().u_max);
    let gap = d.values().iter().zip(a.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(gap > 1.0, "{gap}");
}

#[test]
fn extracted_bounds_drive_a_rollout() {
    let (l, a) = fixtures();
    let report = BoundsReport(&extract_bounds(&l, &a).unwrap()).to_string();
    let cfg = ScenarioConfig::default().overlay(&report, Path::new("report")).unwrap();
    cfg.validate().unwrap();
    let traj = rollout(&cfg.scenario, &vec![0.0; cfg.scenario.steps()]).unwrap();
    assert!(traj.terminal().phi > std::f64::consts::TAU);
}

#[test]
fn default_scenario_text_reparses() {
    let text = ScenarioConfig::default().to_text();
    let back = ScenarioConfig::parse(&text, Path::new("default")).unwrap();
    assert_eq!(back.scenario, Scenario::default());
}

proptest! {
    #[test]
    fn config_round_trip(
        r_major in 2.0f64..5.0,
        tube in 0.2f64..1.5,
        stretch in 1.0f64..4.0,
        m_r in 40.0f64..120.0,
        q in prop::array::uniform4(-100.0f64..100.0),
        phi0 in -3.0f64..3.0,
        frac in 0.0f64..1.0,
        n in 1usize..1000,
    ) {
        let mut cfg = ScenarioConfig::default();
        cfg.scenario.geom.major_radius = r_major;
        cfg.scenario.geom.tube_radius = tube;
        cfg.scenario.geom.stretch = stretch;
        cfg.scenario.params.rider_mass = m_r;
        cfg.scenario.q = q;
        cfg.scenario.x0.phi = phi0;
        let b = cfg.scenario.bounds;
        cfg.scenario.x0.l = b.l_min + frac * (b.l_max - b.l_min);
        cfg.scenario.horizon = n as f64 * 0.01;
        let text = cfg.to_text();
        let back = ScenarioConfig::parse(&text, Path::new("p")).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_text(), text);
    }
}

fn random_capture(rng: &mut ChaCha8Rng, model: &SegmentModel, frames: usize) -> MarkerSeries {
    use rand::Rng;
    let mut names: Vec<String> =
        model.segments().iter().flat_map(|s| [s.proximal.clone(), s.distal.clone()]).collect();
    names.sort();
    names.dedup();
    let mut m = MarkerSeries::new(100.0, names.clone()).unwrap();
    for _ in 0..frames {
        let frame = names
            .iter()
            .map(|_| Some(Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0))))
            .collect();
        m.push_frame(frame).unwrap();
    }
    m
}

fn transformed(m: &MarkerSeries, f: impl Fn(Vec3) -> Vec3) -> MarkerSeries {
    let mut out = MarkerSeries::new(m.sample_rate, m.names().to_vec()).unwrap();
    for k in 0..m.len() {
        out.push_frame((0..m.names().len()).map(|j| m.get(k, j).map(&f)).collect()).unwrap();
    }
    out
}

#[test]
fn com_follows_rigid_motions() {
    let model = SegmentModel::default_16();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = random_capture(&mut rng, &model, 20);
    let com = rider_com(&m, &model).unwrap();

    let d = Vec3::new(0.3, -1.2, 0.05);
    let shifted = rider_com(&transformed(&m, |p| p + d), &model).unwrap();
    for (a, b) in com.iter().zip(&shifted) {
        assert!((*b - (*a + d)).norm() < 1e-12);
    }

    let (s, c) = 0.7f64.sin_cos();
    let rot = |p: Vec3| Vec3::new(c * p.x1 - s * p.x2, s * p.x1 + c * p.x2, p.x3);
    let rotated = rider_com(&transformed(&m, rot), &model).unwrap();
    for (a, b) in com.iter().zip(&rotated) {
        assert!((*b - rot(*a)).norm() < 1e-12);
    }
}
