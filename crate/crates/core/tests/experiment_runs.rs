use helmsweep::experiment::{
    export_slice, extract_slice, read_report, run, sweep_study, ExperimentConfig, Plane,
    PreconditionerKind, VaryGrid, CSV_COLUMNS,
};
use helmsweep::media::hsw;

fn small(omega_over_2pi: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::paper_replica();
    cfg.omega_over_2pi = omega_over_2pi;
    cfg
}

#[test]
fn sweeping_beats_no_preconditioner() {
    let mut cfg = small(4.0);
    cfg.gmres.max_iter = 300;
    cfg.preconditioner = PreconditionerKind::None;
    let plain = run(&cfg).unwrap();
    cfg.preconditioner = PreconditionerKind::Recursive;
    let swept = run(&cfg).unwrap();
    assert!(swept.report.converged);
    assert!(swept.report.iterations <= 6, "{}", swept.report.iterations);
    assert!(plain.report.iterations > 5 * swept.report.iterations, "{}", plain.report.iterations);
}

#[test]
fn exact_sweep_preset_needs_one_iteration() {
    let mut cfg = ExperimentConfig::parse(
        "omega_over_2pi = 1.25\npreconditioner = exact_sweep\npml_faces = two\nboundary_layers = 2\ngroup_size = 2\ntol = 1e-10\n",
    )
    .unwrap();
    cfg.confine_source = false;
    let out = run(&cfg).unwrap();
    assert_eq!(out.problem.grid.n(), 9);
    assert_eq!(out.report.iterations, 1);
    assert!(out.report.final_residual <= 1e-10);
}

#[test]
fn study_writes_one_row_per_point_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("study.csv");
    let mut base = ExperimentConfig::paper_replica();
    base.q = 4;
    base.sweep.boundary_layers = 3;
    base.sweep.aux_layers = 2;
    base.sweep.group_size = 2;
    let vary: VaryGrid = "omega_over_2pi=2,4,8".parse().unwrap();
    let first = sweep_study(&base, &vary, &csv).unwrap();
    assert_eq!(first.rows.len(), 3);
    assert_eq!(first.failed, 0);
    let rows = read_report(&csv).unwrap();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        assert_eq!(row.unknowns, row.n.pow(3));
        assert!(row.converged, "{row:?}");
    }
    assert_eq!(rows[2].n, 31);

    let again = sweep_study(&base, &vary, &csv).unwrap();
    assert_eq!(again.skipped, 3);
    assert!(again.rows.is_empty());
    assert_eq!(read_report(&csv).unwrap().len(), 3);
}

#[test]
fn empty_study_writes_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    let summary = sweep_study(&ExperimentConfig::paper_replica(), &VaryGrid::default(), &csv).unwrap();
    assert!(summary.rows.is_empty());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.trim_end(), CSV_COLUMNS.join(","));
}

#[test]
fn recursive_setup_is_cheaper_than_nonrecursive() {
    let mut cfg = small(4.0);
    let rec = run(&cfg).unwrap();
    cfg.preconditioner = PreconditionerKind::NonRecursive;
    let non = run(&cfg).unwrap();
    assert!(rec.report.setup_seconds < non.report.setup_seconds);
}

#[test]
fn slices_locate_the_source_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(4.0);
    cfg.output_dir = Some(dir.path().to_path_buf());
    cfg.save_solution = true;
    let out = run(&cfg).unwrap();
    let grid = out.problem.grid;
    let center = cfg.source.default_center();
    let node = |x: f64| (x / grid.h()).round() as usize - 1;
    let k = node(center[2]);
    let (dims, values) = extract_slice(&out.solution, grid.dims(), Plane::X3, k).unwrap();
    let (argmax, _) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .unwrap();
    let (s, t) = (argmax % dims[0], argmax / dims[0]);
    assert!(s.abs_diff(node(center[0])) <= 2 && t.abs_diff(node(center[1])) <= 2, "peak at {s},{t}");

    let path = dir.path().join("cut.hsw");
    export_slice(&out.solution, grid.dims(), Plane::X3, k, &path).unwrap();
    let back = hsw::load(&path).unwrap();
    assert_eq!(back.dims(), dims);
    assert_eq!(back.to_complex(), values);
    assert!(path.with_extension("pgm").exists());
    assert!(dir.path().join("report.csv").exists());
    let stored = hsw::load(&dir.path().join("solution.hsw")).unwrap();
    assert_eq!(stored.to_complex(), out.solution);

    assert!(extract_slice(&out.solution, grid.dims(), Plane::X1, grid.n()).is_err());
}
