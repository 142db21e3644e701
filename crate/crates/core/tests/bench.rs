use sgf::bench::{
    csv_string, eig_error_study, loglog_slope, run, summarize, sweep, write_csv, CsvRow, ModeKind, ProblemSpec,
    RunConfig, CSV_HEADER,
};
use sgf::factor::Scheme;
use sgf::SgfError;

fn untimed(r: &CsvRow) -> CsvRow {
    CsvRow { t_f: None, t_s: None, ..r.clone() }
}

#[test]
fn lowrank_sweep_emits_both_rows_per_size() {
    let mut c = RunConfig::new(ProblemSpec::poisson(0), Scheme::GenAllAll, 0);
    c.mode = ModeKind::LowrankEquiv;
    let r = sweep(&c, &[8, 12]);
    assert_eq!(r.rows.len(), 4);
    for pair in r.rows.chunks(2) {
        assert_eq!(pair[0].mode, ModeKind::Polynomial);
        assert_eq!(pair[1].mode, ModeKind::LowrankEquiv);
        assert_eq!(pair[0].status, "ok");
        assert_eq!(pair[1].status, "ok");
        assert_eq!(pair[0].n, pair[1].n);
        assert_eq!(pair[0].max_node_size, pair[1].max_node_size);
    }
}

#[test]
fn failures_are_recorded_and_the_sweep_continues() {
    let c = RunConfig::new(ProblemSpec::poisson(0), Scheme::Nest22, 2);
    let r = sweep(&c, &[1, 10]);
    assert_eq!(r.rows.len(), 2);
    assert!(r.rows[0].status.starts_with("failed"));
    assert!(r.rows[0].n.is_none() && r.rows[0].it_c.is_none());
    assert_eq!(r.rows[1].status, "ok");
    assert_eq!(r.summary.runs, 2);
    assert_eq!(r.summary.failures, 1);
    assert!(r.summary.it_ratio.is_none());

    let bad = RunConfig::new(ProblemSpec::Mtx { matrix: "a".into(), coords: "b".into() }, Scheme::Nest22, 0);
    let r = sweep(&bad, &[4]);
    assert_eq!(r.rows.len(), 1);
    assert!(r.rows[0].status.contains("ladder"));
}

#[test]
fn sweep_rows_match_individual_runs() {
    let c = RunConfig::new(ProblemSpec::darcy(0, 1e4), Scheme::Nest2All, 1);
    let r = sweep(&c, &[8, 12]);
    for (row, d) in r.rows.iter().zip([8, 12]) {
        let single = run(&RunConfig { problem: c.problem.with_size(d).unwrap(), ..c.clone() }).unwrap();
        assert_eq!(untimed(row), untimed(&CsvRow::ok(&single.record, Some(d))));
    }
}

#[test]
fn csv_layout_is_stable() {
    let c = RunConfig::new(ProblemSpec::poisson(0), Scheme::NestAllAll, 0);
    let r = sweep(&c, &[6]);
    let text = csv_string(&r.rows).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    let row = lines.next().unwrap();
    assert_eq!(row.split(',').count(), CSV_HEADER.len());
    assert!(lines.next().is_none());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    write_csv(&path, &r.rows).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
    write_csv(&path, &[]).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().trim_end(), CSV_HEADER.join(","));
}

#[test]
fn summary_slopes_come_from_successful_rows() {
    let c = RunConfig::new(ProblemSpec::poisson(0), Scheme::GenAllAll, 0);
    let r = sweep(&c, &[8, 12, 16]);
    let s = summarize(&r.rows);
    assert_eq!(s, r.summary);
    let pts: Vec<(f64, f64)> =
        r.rows.iter().map(|row| (row.n.unwrap() as f64, row.flops_factorize.unwrap() as f64)).collect();
    assert_eq!(s.flops_factorize_slope, loglog_slope(&pts));
    let first = r.rows[0].it_c.unwrap() as f64;
    let last = r.rows[2].it_c.unwrap() as f64;
    assert_eq!(s.it_ratio, Some(last / first));
}

#[test]
fn run_is_deterministic_and_reproduces_its_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::new(ProblemSpec::darcy(10, 1e5), Scheme::GenAllAll, 1);
    c.seed = 9;
    let a = run(&c).unwrap();
    let b = run(&c).unwrap();
    assert_eq!(untimed(&CsvRow::ok(&a.record, None)), untimed(&CsvRow::ok(&b.record, None)));
    assert_eq!(a.solution, b.solution);
    assert_eq!(a.report.residual_history, b.report.residual_history);
    assert!(!a.trace.is_empty());
    let path = dir.path().join("t.json");
    a.trace.write(&path).unwrap();
    let lr = run(&RunConfig { mode: ModeKind::LowrankEquiv, rank_trace: Some(path), ..c }).unwrap();
    assert_eq!(lr.trace, a.trace);
}

#[test]
fn counters_are_sane() {
    let c = RunConfig::new(ProblemSpec::elasticity(2), Scheme::NestAllAll, 1);
    let out = run(&c).unwrap();
    let r = &out.record;
    assert!(r.converged);
    assert!(r.it_c <= c.maxit);
    assert!(r.flops_factorize > 0 && r.flops_apply > 0 && r.peak_blocks_bytes > 0);
    assert!(r.levels >= 1);
    assert_eq!(r.n, out.solution.len());
}

#[test]
fn eigen_study_modes() {
    let mut c = RunConfig::new(ProblemSpec::poisson(10), Scheme::NestAllAll, 2);
    c.mode = ModeKind::Exact;
    let r = eig_error_study(&c).unwrap();
    assert!(r.e1 <= 1e-10 && r.en <= 1e-10);
    assert!(r.en_lowrank.is_none());
    assert!(r.lambda_1 > r.lambda_n);

    let c = RunConfig::new(ProblemSpec::poisson(16), Scheme::GenAllAll, 1);
    let r = eig_error_study(&c).unwrap();
    assert!(r.en_lowrank.is_some());
    assert_eq!(r.en_ratio, Some(r.en / r.en_lowrank.unwrap()));

    let d = RunConfig::new(ProblemSpec::darcy(6, 1e3), Scheme::NestAllAll, 0);
    assert!(matches!(eig_error_study(&d), Err(SgfError::Config(_))));
}

#[test]
fn json_config_defaults() {
    let c = RunConfig::from_json(r#"{"problem": {"name": "darcy", "dims": [6, 6, 6]}, "scheme": "nest22"}"#).unwrap();
    assert_eq!(c.scheme, Scheme::Nest22);
    assert_eq!(c.degree, 0);
    assert_eq!(c.mode, ModeKind::Polynomial);
    assert_eq!(c.tol, 1e-10);
    assert_eq!(
        c.problem,
        ProblemSpec::Darcy { dims: [6; 3], contrast: 1e5, layers: 4, field_seed: 0, field: None, tile: None }
    );
    assert!(RunConfig::from_json(r#"{"problem": {"name": "poisson", "dims": [6, 6, 6]}, "scheme": "x"}"#).is_err());
}
