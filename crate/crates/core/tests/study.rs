use recruit_core::estimation::{fit, OptimizerSettings};
use recruit_core::study::{export_figure_data, named_estimates, FigureKind};
use recruit_core::{
    generate_trial, recruitment_stop_time, run_study, take_snapshot, ModelTag, StudyPlan,
};

fn small_plan(base: StudyPlan, reps: usize) -> StudyPlan {
    let mut plan = base;
    plan.n_replications = reps;
    plan.forecast.n_paths = 300;
    plan.forecast.grid_points = 20;
    plan
}

#[test]
fn estimates_inside_the_study_equal_standalone_fits() {
    let plan = small_plan(StudyPlan::part_two(), 2);
    let report = run_study(&plan, Some(1)).unwrap();
    for rec in &report.records {
        let trial = generate_trial(&plan.config, plan.replication_rng(rec.replication).child(0)).unwrap();
        assert_eq!(recruitment_stop_time(&trial, &plan.config), Some(rec.observed_duration));
        for cell in &rec.cells {
            let snap = take_snapshot(&trial, plan.config.screening_window, cell.t1).unwrap();
            let fm = fit(&snap, cell.model, &OptimizerSettings::default()).unwrap();
            assert_eq!(named_estimates(&fm), cell.estimates);
        }
    }
}

#[test]
fn figure_data_shape_and_aggregation() {
    let mut plan = small_plan(StudyPlan::part_one(), 3);
    plan.interim_times = vec![1.0, 2.0];
    plan.models = vec![ModelTag::A1];
    let report = run_study(&plan, None).unwrap();
    assert_eq!(report.completed, 3);
    assert!(report.failures.is_empty());

    let params = export_figure_data(&report.records, FigureKind::ParamDist);
    for q in ["alpha", "mu", "r"] {
        assert_eq!(params.iter().filter(|r| r.quantity == q).count(), 6, "{q}");
    }

    let durations = export_figure_data(&report.records, FigureKind::DurationDist);
    for d in &report.durations {
        let xs: Vec<f64> = durations
            .iter()
            .filter(|r| r.model == d.model && r.t1 == d.t1 && r.quantity == "forecast_mean")
            .map(|r| r.value)
            .collect();
        assert_eq!(xs.len(), 3);
        let mean = xs.iter().sum::<f64>() / 3.0;
        assert!((mean - d.mean).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&d.coverage));
    }
}

#[test]
fn worker_count_does_not_change_the_report() {
    let plan = small_plan(StudyPlan::part_one(), 4);
    let one = run_study(&plan, Some(1)).unwrap();
    let many = run_study(&plan, Some(3)).unwrap();
    assert_eq!(one, many);
}

#[test]
fn artifacts_have_fixed_headers() {
    let plan = small_plan(StudyPlan::part_two(), 2);
    let report = run_study(&plan, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    report.write_artifacts(dir.path()).unwrap();
    let first_line = |name: &str| {
        std::fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string()
    };
    assert_eq!(first_line("table2.csv"), "parameter,model,t1,mean,sd");
    assert_eq!(first_line("table4.csv"), "model,t1,mean,sd,pct_bias,coverage");
    assert_eq!(first_line("figures/param_dist.csv"), "replication,t1,model,quantity,value");
    assert_eq!(first_line("figures/duration_dist.csv"), "replication,t1,model,quantity,value");
    let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let back: recruit_core::StudyReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
}

#[test]
fn invalid_plans_are_rejected() {
    let mut plan = StudyPlan::part_one();
    plan.interim_times = vec![2.0, 1.0];
    assert!(run_study(&plan, None).is_err());
    let mut plan = StudyPlan::part_one();
    plan.models = vec![ModelTag::B2];
    assert!(run_study(&plan, None).is_err());
}
