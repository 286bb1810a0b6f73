use gkflab::geomcore::{gauss_tail, SpaceDescriptor};
use gkflab::gmf::DomainDescriptor;
use gkflab::mcharness::{
    run_ec_experiment, run_experiment, run_kff_sphere_experiment, run_poincare_experiment,
    run_sup_experiment, run_tube_experiment, run_volume_experiment, Experiment, ExperimentConfig,
    FieldExperiment, KffExperiment, PoincareExperiment, RunSettings, ThresholdFamily,
    TubeExperiment,
};
use gkflab::GkfError;

fn rect(side: f64) -> SpaceDescriptor {
    SpaceDescriptor::rectangle(vec![side, side], 1.0).unwrap()
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let exp = FieldExperiment::new(rect(4.0), ThresholdFamily::Gaussian, vec![0.5, 1.5]);
    let run = |workers| {
        let mut s = RunSettings::new(40, 123);
        s.workers = workers;
        run_ec_experiment(&exp, &s).unwrap().without_timing()
    };
    let one = run(1);
    for other in [run(3), run(0)] {
        assert_eq!(one.cases, other.cases);
        assert_eq!(one.checks, other.checks);
    }
    assert_ne!(
        one.cases[0].empirical_mean,
        run_ec_experiment(&exp, &RunSettings::new(40, 124))
            .unwrap()
            .cases[0]
            .empirical_mean
    );
}

#[test]
fn very_low_threshold_fills_the_rectangle() {
    let exp = FieldExperiment::new(rect(10.0), ThresholdFamily::Gaussian, vec![-8.0]);
    let s = RunSettings::new(5, 1);
    let ec = run_ec_experiment(&exp, &s).unwrap();
    let c = &ec.cases[0];
    assert_eq!((c.empirical_mean, c.stderr, c.z), (1.0, 0.0, 0.0));
    assert!(c.passed);
    let vol = run_volume_experiment(&exp, &s).unwrap();
    assert_eq!(vol.cases[0].empirical_mean, 100.0);
    assert_eq!(vol.cases[0].stderr, 0.0);
}

#[test]
fn single_replicate_is_rejected() {
    let exp = FieldExperiment::new(rect(4.0), ThresholdFamily::Gaussian, vec![1.0]);
    assert!(matches!(
        run_ec_experiment(&exp, &RunSettings::new(1, 0)),
        Err(GkfError::InvalidArgument(_))
    ));
}

#[test]
fn kinematic_prediction_is_seed_independent() {
    let exp = KffExperiment {
        alpha: 0.6,
        beta: 0.9,
    };
    let a = run_kff_sphere_experiment(&exp, &RunSettings::new(200, 1)).unwrap();
    let b = run_kff_sphere_experiment(&exp, &RunSettings::new(300, 2)).unwrap();
    for (x, y) in a.cases.iter().zip(&b.cases) {
        assert_eq!(x.label, y.label);
        assert_eq!(x.predicted, y.predicted);
    }
    assert!(
        (a.cases[0].predicted - 2.0 * std::f64::consts::PI * (1.0 - 1.5f64.cos())).abs() < 1e-12
    );
}

#[test]
fn point_space_sup_is_the_gaussian_tail() {
    let exp = FieldExperiment::new(
        SpaceDescriptor::point(),
        ThresholdFamily::Gaussian,
        vec![1.8],
    );
    let r = run_sup_experiment(&exp, &RunSettings::new(20_000, 9)).unwrap();
    let c = &r.cases[0];
    assert_eq!(c.predicted, gauss_tail(1.8));
    assert!(
        (c.empirical_mean - c.predicted).abs() <= 3.0 * c.stderr,
        "{c:?}"
    );
    assert_eq!(r.z_gate, 3.0);
}

#[test]
fn point_space_is_rejected_for_ec() {
    let exp = FieldExperiment::new(
        SpaceDescriptor::point(),
        ThresholdFamily::Gaussian,
        vec![1.0],
    );
    assert!(run_ec_experiment(&exp, &RunSettings::new(10, 0)).is_err());
}

#[test]
fn report_serializations_agree() {
    let exp = FieldExperiment::new(rect(4.0), ThresholdFamily::Gaussian, vec![1.0]);
    let r = run_ec_experiment(&exp, &RunSettings::new(20, 5)).unwrap();
    let csv = r.to_csv();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "label,predicted,empirical_mean,stderr,z,replicates"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "u=1.000000");
    assert_eq!(row[1], format!("{:.6}", r.cases[0].predicted));
    assert_eq!(row[5], "20");
    let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(json["experiment"], "ec");
    assert_eq!(json["seed"], 5);
    assert!(json["verdict"] == "PASS" || json["verdict"] == "FAIL");
    assert_eq!(json["cases"][0]["replicates"], 20);
}

#[test]
fn poincare_needs_room_above_k() {
    let exp = PoincareExperiment {
        n_list: vec![2, 10],
        k: 1,
        mesh_level: 2,
        u: 1.0,
    };
    assert!(run_poincare_experiment(&exp, &RunSettings::new(10, 0)).is_err());
    let exp = PoincareExperiment {
        n_list: vec![10, 10],
        k: 1,
        mesh_level: 2,
        u: 1.0,
    };
    assert!(run_poincare_experiment(&exp, &RunSettings::new(10, 0)).is_err());
}

#[test]
fn coarse_spacing_trips_the_resolution_guard() {
    let mut exp = FieldExperiment::new(rect(6.0), ThresholdFamily::Gaussian, vec![1.0]);
    exp.spacing = 0.3;
    assert!(matches!(
        run_ec_experiment(&exp, &RunSettings::new(10, 0)),
        Err(GkfError::Resolution(_))
    ));
}

#[test]
fn tube_radius_beyond_reach_is_rejected() {
    let d = DomainDescriptor::interval(0.0, 0.5).unwrap();
    let r = DomainDescriptor::ball_complement(2, 0.4).unwrap();
    let mut exp = TubeExperiment::new(r, vec![0.5], 2);
    exp.numeric_check = false;
    assert!(matches!(
        run_tube_experiment(&exp, &RunSettings::new(10, 0)),
        Err(GkfError::OutsideReach { .. })
    ));
    let mut ok = TubeExperiment::new(d, vec![0.2], 2);
    ok.numeric_check = false;
    let cfg = ExperimentConfig {
        experiment: Experiment::Tube(ok),
        settings: RunSettings::new(50_000, 3),
    };
    let rep = run_experiment(&cfg).unwrap();
    assert_eq!(rep.experiment, "tube");
    assert!(rep.passed(), "{:?}", rep.cases);
}
