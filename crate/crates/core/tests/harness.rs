use grpca::datagen::column_stats;
use grpca::graphs::Topology;
use grpca::harness::*;
use grpca::metrics::MetricsReport;
use grpca::precision::oracle_precision;
use grpca::Error;

fn tiny(methods: &str) -> ExperimentConfig {
    parse_config(
        &format!(
            r#"{{"regime":"anisotropic","p":24,"n":200,"s":6,"r":3,"topologies":["ER"],
                "density_grid":[0.3],"seeds":[7],"folds":2,"methods":{methods}}}"#
        ),
        None,
    )
    .unwrap()
}

#[test]
fn minimal_sweep_has_one_row_per_fold() {
    let cfg = tiny(r#"["pca"]"#);
    let result = run_experiment(&cfg).unwrap();
    assert_eq!(result.rows.len(), 2);
    assert_eq!(result.overall.len(), 1);
    let agg = &result.overall[0];
    let mean = (result.rows[0].selectivity + result.rows[1].selectivity) / 2.0;
    assert!((agg.selectivity.mean - mean).abs() < 1e-12);
    assert_eq!((agg.total, agg.failed), (2, 0));
}

#[test]
fn anisotropic_preset_expands() {
    let cfg = parse_config(r#"{"regime":"anisotropic"}"#, None).unwrap();
    let g = &cfg.generator;
    assert_eq!((g.r, g.s, g.p, g.n), (8, 25, 60, 2000));
    assert_eq!((g.gamma, g.omega), (16.0, 0.4));
    assert_eq!((g.tau, g.beta, g.sigma_e, g.q_ratio), (0.10, 2.50, 3.0, Some(2.0)));
    assert_eq!(cfg.folds, 5);
    assert_eq!(cfg.methods, Arm::ALL.to_vec());

    let paper = parse_config(r#"{"regime":"anisotropic","preset":"paper"}"#, None).unwrap();
    assert_eq!((paper.generator.p, paper.generator.n, paper.generator.s), (144, 10_000, 60));
    let forced = parse_config(r#"{"preset":"paper"}"#, Some(Preset::Desk)).unwrap();
    assert_eq!(forced.generator.p, 60);
}

#[test]
fn isotropic_override_keeps_the_rest() {
    let cfg = parse_config(r#"{"regime":"isotropic","tau":0.6}"#, None).unwrap();
    assert_eq!(cfg.generator.tau, 0.6);
    assert_eq!((cfg.generator.beta, cfg.generator.sigma_e), (1.15, 1.0));
    assert_eq!(cfg.generator.q_ratio, Some(0.1));
}

#[test]
fn table_symbols_are_accepted_verbatim() {
    let text = r#"{"p":30,"n":100,"r":2,"gamma":4.0,"omega":0.1,"s":5,"q_ratio":1.0,
                   "tau":0.3,"beta":1.0,"sigma_E":2.0}"#;
    let cfg = parse_config(text, None).unwrap();
    assert_eq!(cfg.generator.sigma_e, 2.0);
    assert_eq!(cfg.generator.p, 30);
}

#[test]
fn config_errors() {
    assert!(matches!(parse_config(r#"{"folds":1}"#, None), Err(Error::RangeViolation { .. })));
    assert!(matches!(parse_config(r#"{"density_grid":[0.0]}"#, None), Err(Error::RangeViolation { .. })));
    assert!(matches!(parse_config(r#"{"density_grid":[1.2]}"#, None), Err(Error::RangeViolation { .. })));
    assert!(matches!(parse_config(r#"{"seeds":[]}"#, None), Err(Error::RangeViolation { .. })));
    match parse_config(r#"{"sigma_e":1.0}"#, None) {
        Err(Error::UnknownKey(k)) => assert_eq!(k, "sigma_e"),
        other => panic!("expected UnknownKey, got {other:?}"),
    }
    match parse_config("{\n  \"p\": \"sixty\"\n}", None) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected Parse, got {other:?}"),
    }
}

#[test]
fn load_config_reads_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, r#"{"regime":"isotropic","seeds":[1,2]}"#).unwrap();
    let cfg = load_config(&path).unwrap();
    assert_eq!(cfg.regime, Regime::Isotropic);
    assert_eq!(cfg.seeds, vec![1, 2]);
    assert!(load_config(&dir.path().join("missing.json")).is_err());
}

#[test]
fn folds_partition_rows_and_use_training_statistics() {
    let cfg = tiny(r#"["pca"]"#);
    let bundle = point_bundle(&cfg, 7, Topology::ErdosRenyi, 0.3).unwrap();
    let perm = fold_permutation(&bundle);
    let mut seen = perm.clone();
    seen.sort_unstable();
    assert_eq!(seen, (0..bundle.x.nrows()).collect::<Vec<_>>());

    let folds = make_folds(&bundle.x, &perm, 5);
    assert_eq!(folds.len(), 5);
    let total: usize = folds.iter().map(|f| f.test.nrows()).sum();
    assert_eq!(total, bundle.x.nrows());
    let mut test_means_nonzero = 0;
    for f in &folds {
        assert_eq!(f.train.nrows() + f.test.nrows(), bundle.x.nrows());
        let (m, s) = column_stats(&f.train);
        assert!(m.iter().all(|v| v.abs() < 1e-10));
        assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-8));
        let (tm, _) = column_stats(&f.test);
        if tm.iter().any(|v| v.abs() > 1e-6) {
            test_means_nonzero += 1;
        }
    }
    assert_eq!(test_means_nonzero, 5, "test folds look standardized on their own");
}

#[test]
fn aggregates_are_reproducible_from_rows() {
    let mut cfg = tiny(r#"["pca","sparse_pca","grpca_oracle"]"#);
    cfg.density_grid = vec![0.2, 0.4];
    cfg.seeds = vec![1, 2];
    let result = run_experiment(&cfg).unwrap();
    assert_eq!(result.rows.len(), 2 * 2 * 2 * 3);
    for agg in result.overall.iter().chain(&result.by_density) {
        let members: Vec<&MetricsReport> = result
            .rows
            .iter()
            .filter(|r| r.method == agg.method && r.topology == agg.topology && r.regime == agg.regime)
            .filter(|r| agg.target_density.map_or(true, |d| r.target_density == d))
            .filter(|r| !r.failed())
            .collect();
        let mean = members.iter().map(|r| r.alignment).sum::<f64>() / members.len() as f64;
        assert!((agg.alignment.mean - mean).abs() <= 1e-12);
        let mean = members.iter().map(|r| r.r2_global).sum::<f64>() / members.len() as f64;
        assert!((agg.r2_global.mean - mean).abs() <= 1e-12);
    }
    let rebuilt = SweepResult::from_rows(result.rows.clone());
    assert_eq!(rebuilt, result);
}

#[test]
fn rows_survive_a_csv_round_trip() {
    let cfg = tiny(r#"["pca","grpca_oracle"]"#);
    let result = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rows.csv");
    std::fs::write(&path, rows_to_csv(&result.rows)).unwrap();
    let back = read_rows(&path).unwrap();
    assert_eq!(back.len(), result.rows.len());
    for (a, b) in back.iter().zip(&result.rows) {
        assert_eq!(a.method, b.method);
        assert_eq!(a.selectivity.to_bits(), b.selectivity.to_bits());
        assert_eq!(a.matching, b.matching);
    }
}

#[test]
fn rerun_is_byte_identical() {
    let cfg = tiny(r#"["pca","sparse_pca","grpca_oracle"]"#);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_outputs(&cfg, &run_experiment(&cfg).unwrap(), a.path()).unwrap();
    let threaded = run_experiment_with_threads(&cfg, Some(2)).unwrap();
    write_outputs(&cfg, &threaded, b.path()).unwrap();
    for name in ["rows.csv", "tables_selectivity.csv", "tables_alignment.txt", "tables_r2.csv", "manifest.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn point_seeds_do_not_depend_on_the_grid() {
    let mut small = tiny(r#"["pca"]"#);
    let mut wide = small.clone();
    wide.density_grid = vec![0.1, 0.3, 0.5];
    wide.seeds = vec![3, 7];
    small.density_grid = vec![0.3];
    let a = run_experiment(&small).unwrap();
    let b = run_experiment(&wide).unwrap();
    let picked: Vec<_> = b
        .rows
        .iter()
        .filter(|r| r.seed == 7 && r.target_density == 0.3)
        .collect();
    assert_eq!(picked.len(), a.rows.len());
    for (x, y) in a.rows.iter().zip(picked) {
        assert_eq!(x.r2_global.to_bits(), y.r2_global.to_bits());
    }
}

#[test]
fn oracle_injected_into_learned_path_matches_oracle_arm() {
    let cfg = tiny(r#"["grpca_oracle"]"#);
    let bundle = point_bundle(&cfg, 7, Topology::ErdosRenyi, 0.3).unwrap();
    let folds = make_folds(&bundle.x, &fold_permutation(&bundle), 2);
    let oracle = oracle_precision(&bundle.theta_true).unwrap();
    let (arm, _) = run_arm(Arm::GrpcaOracle, &folds[0], &bundle, &cfg, &oracle).unwrap();
    // the learned arm hands its estimate to the same routine
    let model = fit_with_precision(&folds[0].train, &oracle, &cfg.model).unwrap();
    let injected = score_model(&model, &folds[0].test, &bundle).unwrap();
    assert_eq!(arm.selectivity.to_bits(), injected.selectivity.to_bits());
    assert_eq!(arm.alignment.to_bits(), injected.alignment.to_bits());
    assert_eq!(arm.r2_global.to_bits(), injected.r2_global.to_bits());
}

#[test]
fn learned_arm_runs_end_to_end() {
    let mut cfg = tiny(r#"["grpca_learned"]"#);
    cfg.glasso.path_len = 4;
    cfg.glasso.folds = 3;
    let result = run_experiment(&cfg).unwrap();
    assert_eq!(result.rows.len(), 2);
    assert!(result.rows.iter().all(|r| !r.failed()));
}

#[test]
fn infeasible_points_become_failure_rows() {
    // a complete graph has no sub-maximal-degree nodes to carry nuisance spikes
    let mut cfg = tiny(r#"["pca","grpca_oracle"]"#);
    cfg.density_grid = vec![0.3, 1.0];
    let result = run_experiment(&cfg).unwrap();
    assert_eq!(result.rows.len(), 2 * 2 * 2);
    let failed: Vec<_> = result.rows.iter().filter(|r| r.failed()).collect();
    assert_eq!(failed.len(), 4);
    assert!(failed.iter().all(|r| r.target_density == 1.0 && r.selectivity.is_nan()));
    let m = manifest(&cfg, &result).unwrap();
    assert_eq!(m.attrition.values().map(|a| a.failed).sum::<usize>(), 4);
    let tables = aggregate_tables(&result);
    let pca = tables.selectivity.rows.iter().find(|r| r.method == "pca").unwrap();
    assert_eq!((pca.failed, pca.total), (2, 4));
    let ok: Vec<f64> = result
        .rows
        .iter()
        .filter(|r| r.method == "pca" && !r.failed())
        .map(|r| r.selectivity)
        .collect();
    assert!((pca.cells[0].unwrap() - ok.iter().sum::<f64>() / 2.0).abs() < 1e-12);
}

fn hand_row(method: &str, topology: &str, density: f64, fold: usize, sel: f64, failure: Option<&str>) -> MetricsReport {
    MetricsReport {
        method: method.into(),
        regime: "anisotropic".into(),
        topology: topology.into(),
        target_density: density,
        achieved_density: density + 0.01,
        seed: 0,
        fold,
        r2_true: 0.5,
        r2_nuis: 0.5 - sel,
        selectivity: sel,
        alignment: sel * 2.0,
        r2_global: 1.0 - sel,
        laplacian_energy: 1.0,
        matching: vec![],
        converged: true,
        failure: failure.map(String::from),
    }
}

#[test]
fn hand_built_tables() {
    let rows = vec![
        hand_row("pca", "ER", 0.1, 0, 0.10, None),
        hand_row("pca", "ER", 0.2, 0, 0.30, None),
        hand_row("pca", "BA", 0.1, 0, 0.05, None),
        hand_row("grpca_oracle", "ER", 0.1, 0, 0.40, None),
    ];
    let result = SweepResult::from_rows(rows);
    let t = aggregate_tables(&result);
    assert_eq!(
        t.selectivity.columns,
        vec![
            ("anisotropic".to_string(), "ER".to_string()),
            ("anisotropic".to_string(), "BA".to_string())
        ]
    );
    let pca = &t.selectivity.rows[0];
    assert_eq!(pca.method, "pca");
    assert!((pca.cells[0].unwrap() - 0.2).abs() < 1e-15);
    assert!((pca.cells[1].unwrap() - 0.05).abs() < 1e-15);
    let gr = &t.selectivity.rows[1];
    assert_eq!(gr.cells[1], None);
    assert!((t.alignment.rows[0].cells[0].unwrap() - 0.4).abs() < 1e-15);
    assert!((t.r2.rows[0].cells[0].unwrap() - 0.8).abs() < 1e-15);

    let csv = t.selectivity.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("method,anisotropic/ER,anisotropic/BA,failed,total"));
    assert_eq!(lines.nth(1), Some("grpca_oracle,0.4,,0,1"));
    let text = t.selectivity.to_text();
    assert!(text.contains("0.200"));
    assert!(text.contains("0/1"));
}

#[test]
fn single_cell_table() {
    let result = SweepResult::from_rows(vec![
        hand_row("pca", "WS", 0.1, 0, 0.2, None),
        hand_row("pca", "WS", 0.1, 1, 0.4, Some("boom")),
    ]);
    let t = aggregate_tables(&result);
    assert_eq!(t.selectivity.columns.len(), 1);
    assert_eq!(t.selectivity.rows.len(), 1);
    let row = &t.selectivity.rows[0];
    assert!((row.cells[0].unwrap() - 0.2).abs() < 1e-15);
    assert_eq!((row.failed, row.total), (1, 2));
}

fn ordinates(svg: &str) -> Vec<Vec<f64>> {
    svg.lines()
        .filter(|l| l.contains("class=\"series\""))
        .map(|l| {
            let pts = l.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
            pts.split_whitespace()
                .map(|p| p.split(',').nth(1).unwrap().parse::<f64>().unwrap())
                .collect()
        })
        .collect()
}

#[test]
fn plot_of_monotone_values_is_monotone() {
    let rows: Vec<MetricsReport> = [0.1, 0.3, 0.5, 0.7]
        .iter()
        .enumerate()
        .map(|(i, &d)| hand_row("pca", "ER", d, 0, 0.1 * i as f64, None))
        .collect();
    let svg = emit_density_plot(&SweepResult::from_rows(rows), PlotMetric::Selectivity).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.trim_end().ends_with("</svg>"));
    let ys = ordinates(&svg);
    assert_eq!(ys.len(), 1);
    assert_eq!(ys[0].len(), 4);
    // larger values sit higher, i.e. at smaller SVG y
    assert!(ys[0].windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn two_density_plot_has_one_two_point_line() {
    let rows = vec![hand_row("pca", "BA", 0.1, 0, 0.1, None), hand_row("pca", "BA", 0.2, 0, 0.2, None)];
    let svg = emit_density_plot(&SweepResult::from_rows(rows), PlotMetric::Alignment).unwrap();
    let ys = ordinates(&svg);
    assert_eq!(ys.len(), 1);
    assert_eq!(ys[0].len(), 2);
    assert!(svg.contains("data-topology=\"BA\""));
    assert!(svg.contains("stroke-dasharray"));
}

#[test]
fn plot_needs_data() {
    let one = SweepResult::from_rows(vec![hand_row("pca", "ER", 0.1, 0, 0.1, None)]);
    assert!(matches!(
        emit_density_plot(&one, PlotMetric::R2Global),
        Err(Error::InsufficientData(_))
    ));
    let failed = SweepResult::from_rows(vec![
        hand_row("pca", "ER", 0.1, 0, f64::NAN, Some("x")),
        hand_row("pca", "ER", 0.2, 0, f64::NAN, Some("x")),
    ]);
    assert!(matches!(
        emit_density_plot(&failed, PlotMetric::Selectivity),
        Err(Error::InsufficientData(_))
    ));
}

#[test]
fn outputs_are_complete() {
    let mut cfg = tiny(r#"["pca","grpca_oracle"]"#);
    cfg.density_grid = vec![0.2, 0.4];
    let result = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&cfg, &result, dir.path()).unwrap();
    for name in [
        "rows.csv",
        "manifest.json",
        "tables_selectivity.csv",
        "tables_selectivity.txt",
        "tables_alignment.csv",
        "tables_alignment.txt",
        "tables_r2.csv",
        "tables_r2.txt",
        "plots/selectivity.svg",
        "plots/alignment.svg",
        "plots/r2_global.svg",
    ] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config_hash"].as_str().unwrap(), config_hash(&cfg).unwrap());
    assert_eq!(m["rows"].as_u64().unwrap(), result.rows.len() as u64);
}

#[test]
fn penalty_search_respects_the_cap() {
    let cfg = tiny(r#"["pca"]"#);
    let search = PenaltySearch {
        grid: vec![(0.01, 0.0), (0.01, 1e4)],
        max_r2_loss: None,
    };
    let free = select_penalties(&cfg, &search).unwrap();
    assert_eq!(free.candidates.len(), 2);
    let best = free
        .candidates
        .iter()
        .max_by(|a, b| a.selectivity.total_cmp(&b.selectivity))
        .unwrap();
    assert_eq!(free.lambda, best.lambda);

    let capped = select_penalties(
        &cfg,
        &PenaltySearch {
            max_r2_loss: Some(-1.0),
            ..search
        },
    );
    assert!(capped.is_err());
}
