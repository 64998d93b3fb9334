use stemprolif::estimation::{run_pipeline, PipelineOptions, Stage};
use stemprolif::io::{
    aggregate_events, read_counts, read_event_log, series_of, starting_cells, subsample, write_counts,
    write_event_log_to, EventLogRow, EventTiming, Outcome,
};
use stemprolif::metrics::ratio_metrics;
use stemprolif::model::{DivisionKind, ProbGenConfig, ProliferationCoeffs, RateConstant};
use stemprolif::ode::ode_reference;
use stemprolif::regression::FitMethod;
use stemprolif::simulator::{
    expected_cohort, generate_cohort, plan_run, SampleSchedule, SimConfig, DEFAULT_DECAY_FRACTION,
    DEFAULT_HORIZON_CAP, DEFAULT_MAX_EVENTS,
};
use stemprolif::trajectory::trajectory;

fn reference_cohort(seed: u64) -> stemprolif::simulator::Cohort {
    let coeffs = ProliferationCoeffs::new(1.25, -0.055, 0.004);
    let plan = plan_run(&coeffs, 0.15, 3.0, 0.01, DEFAULT_DECAY_FRACTION, DEFAULT_HORIZON_CAP).unwrap();
    let cfg = SimConfig {
        s0: 2000,
        r: RateConstant::new(0.15).unwrap(),
        coeffs,
        probgen: plan.probgen,
        horizon: plan.horizon.horizon,
        max_events: DEFAULT_MAX_EVENTS,
        seed,
    };
    let schedule = SampleSchedule::equally_spaced(plan.horizon.horizon, 8).unwrap();
    generate_cohort(&cfg, &schedule, 10, seed).unwrap()
}

#[test]
fn cohort_file_round_trip_preserves_estimates() {
    let cohort = reference_cohort(3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cohort.csv");
    write_counts(&cohort, &path).unwrap();
    let back = read_counts(&path).unwrap();
    assert_eq!(back, cohort);

    let opts = PipelineOptions::default();
    let a = run_pipeline(&cohort, &opts).unwrap();
    let b = run_pipeline(&back, &opts).unwrap();
    assert_eq!(a.r_hat, b.r_hat);
    assert_eq!(a.s0_hat, b.s0_hat);
    assert_eq!(a.coeffs_hat, b.coeffs_hat);
}

#[test]
fn both_fit_methods_recover_a_stochastic_cohort() {
    let cohort = reference_cohort(5);
    for method in [FitMethod::Qr, FitMethod::Wls] {
        let opts = PipelineOptions {
            method,
            ..PipelineOptions::default()
        };
        let report = run_pipeline(&cohort, &opts).unwrap();
        assert!((report.r_hat - 0.15).abs() < 0.04, "{method:?} r_hat {}", report.r_hat);
        assert!((report.s0_hat / 2000.0 - 1.0).abs() < 0.2, "{method:?} S0_hat {}", report.s0_hat);
        let m = ratio_metrics(&cohort, &report.predicted).unwrap();
        assert!((m.f_hat - 1.0).abs() < 0.1, "{method:?} f_hat {}", m.f_hat);
        assert!(m.s_hat_viable.is_some());
    }
}

#[test]
fn closed_form_tracks_ode_on_a_sampling_grid() {
    let coeffs = ProliferationCoeffs::new(1.2, -0.11, 0.005);
    let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 1.5).collect();
    let closed = trajectory(&coeffs, 0.1, 500.0, &grid).unwrap();
    let ode = ode_reference(&coeffs, 0.1, 500.0, &grid).unwrap();
    for (a, b) in closed.iter().zip(&ode) {
        assert!((a.s_star - b.s_star).abs() <= 1e-6 * b.s_star);
        assert!((a.f - b.f).abs() <= 1e-5 * b.f.max(1.0));
    }
}

#[test]
fn noise_free_cohort_is_predicted_back() {
    let coeffs = ProliferationCoeffs::new(1.3, 0.0, 0.0);
    let schedule = SampleSchedule::equally_spaced(30.0, 10).unwrap();
    let cohort = expected_cohort(&coeffs, 0.2, 5000.0, &schedule, 3).unwrap();
    let report = run_pipeline(&cohort, &PipelineOptions::default()).unwrap();
    assert!((report.r_hat - 0.2).abs() < 0.01, "r_hat {}", report.r_hat);
    let m = ratio_metrics(&cohort, &report.predicted).unwrap();
    assert!((m.f_hat - 1.0).abs() < 0.02 && (m.s_hat - 1.0).abs() < 0.02);
}

#[test]
fn pipeline_errors_name_their_stage() {
    let coeffs = ProliferationCoeffs::new(1.3, 0.0, 0.0);
    let schedule = SampleSchedule::equally_spaced(30.0, 2).unwrap();
    let mut cohort = expected_cohort(&coeffs, 0.2, 100.0, &schedule, 3).unwrap();
    for s in &mut cohort.subjects {
        s.observations.truncate(1);
    }
    let err = run_pipeline(&cohort, &PipelineOptions::default()).unwrap_err();
    assert_eq!(err.stage, Stage::FiniteDifferences);
}

#[test]
fn simulated_lineage_log_ingests_and_estimates() {
    // One long realisation written as a division log, one row per event.
    let coeffs = ProliferationCoeffs::new(1.3, 0.0, 0.0);
    let cfg = SimConfig {
        s0: 40,
        r: RateConstant::new(0.1).unwrap(),
        coeffs,
        probgen: ProbGenConfig::new(3.0, 0.0).unwrap(),
        horizon: 140.0,
        max_events: DEFAULT_MAX_EVENTS,
        seed: 17,
    };
    let run = stemprolif::simulator::gillespie_run(&cfg).unwrap();
    let mut log: Vec<EventLogRow> = (0..40)
        .map(|i| EventLogRow {
            cell_id: format!("root{i}"),
            generation: 1,
            time_first_observed: 0.0,
            time_last_observed: 0.0,
            outcome: Outcome::None,
            lineage: None,
        })
        .collect();
    let mut previous = 0.0;
    for (i, e) in run.events.iter().enumerate() {
        let outcome = match e.kind {
            DivisionKind::SymmetricRenewal | DivisionKind::ViableNonviablePair => Outcome::SymmetricSelfRenewal,
            DivisionKind::AsymmetricDivision => Outcome::AsymmetricSelfRenewal,
            DivisionKind::SymmetricDifferentiation => Outcome::Differentiation,
        };
        log.push(EventLogRow {
            cell_id: format!("e{i}"),
            generation: 2,
            time_first_observed: previous,
            time_last_observed: e.t,
            outcome,
            lineage: None,
        });
        previous = e.t;
    }
    let mut buf = Vec::new();
    write_event_log_to(&log, &mut buf).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    std::fs::write(&path, buf).unwrap();

    let log = read_event_log(&path).unwrap();
    assert_eq!(starting_cells(&log), 40);
    let series = aggregate_events(&log, 40, EventTiming::LastObserved).unwrap();
    let last = series.last().unwrap();
    let fin = run.final_state();
    assert_eq!((last.stem, last.diff), (fin.s_star(), fin.f));

    let cohort = subsample(&series, 20.0).unwrap();
    assert_eq!(series_of(&cohort.subjects[0]).len(), cohort.subjects[0].observations.len());
    let report = run_pipeline(&cohort, &PipelineOptions::default()).unwrap();
    assert!(report.r_hat > 0.0 && report.r_hat < 0.3, "r_hat {}", report.r_hat);
}
