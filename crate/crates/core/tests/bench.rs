use sgdd::bench::{run_study, write_study, StudyTable};
use sgdd::config::{PreconditionerKind, Problem, RunConfig, StudyKind, StudySpec};
use sgdd::io::read_config_line;

fn base() -> RunConfig {
    RunConfig {
        mesh_n: 16,
        nvars: 2,
        p_in: 2,
        p_out: 2,
        ..RunConfig::default()
    }
}

fn spec(
    study: StudyKind,
    sweep: &[&[usize]],
    pcs: &[PreconditionerKind],
    base: RunConfig,
) -> StudySpec {
    StudySpec {
        study,
        sweep: sweep.iter().map(|s| s.to_vec()).collect(),
        preconditioners: pcs.to_vec(),
        base,
        output: "study".into(),
    }
}

fn outer(table: &StudyTable, kind: PreconditionerKind) -> Vec<usize> {
    table
        .for_preconditioner(kind)
        .iter()
        .map(|r| r.outer_iterations)
        .collect()
}

#[test]
fn strong_scaling_rows() {
    use PreconditionerKind::*;
    let s = spec(
        StudyKind::Strong,
        &[&[1], &[2], &[4], &[8]],
        &[TwoGridV2, TwoGridV3],
        base(),
    );
    let t = run_study(&s).unwrap();
    assert_eq!(t.len(), 8);
    let v3 = t.for_preconditioner(TwoGridV3);
    assert_eq!(v3[0].nsub, 1);
    assert_eq!(v3[0].speedup, 1.0);
    assert_eq!(v3[0].efficiency, Some(1.0));
    for r in &v3 {
        assert!((r.efficiency.unwrap() - r.speedup / r.nsub as f64).abs() < 1e-12);
        assert!(r.converged);
        assert_eq!(r.terms, 6);
    }
    let (o2, o3) = (outer(&t, TwoGridV2), outer(&t, TwoGridV3));
    assert!(
        o3.iter().max().unwrap() - o3.iter().min().unwrap() <= 1,
        "{o3:?}"
    );
    assert!(o2.iter().zip(&o3).all(|(a, b)| a >= b), "{o2:?} {o3:?}");
}

#[test]
fn weak_scaling_rows() {
    let s = spec(
        StudyKind::Weak,
        &[&[8, 1], &[16, 4], &[24, 9]],
        &[PreconditionerKind::TwoGridV3],
        base(),
    );
    let t = run_study(&s).unwrap();
    let rows = t.solve_rows().unwrap();
    assert_eq!(
        rows.iter().map(|r| (r.mesh_n, r.nsub)).collect::<Vec<_>>(),
        vec![(8, 1), (16, 4), (24, 9)]
    );
    for r in rows {
        assert_eq!(r.efficiency, Some(r.speedup));
    }
    let o = outer(&t, PreconditionerKind::TwoGridV3);
    assert!(
        o.iter().max().unwrap() - o.iter().min().unwrap() <= 1,
        "{o:?}"
    );
}

#[test]
fn weak_scaling_nonlinear_picard_constant() {
    let b = RunConfig {
        problem: Problem::NonlinearStochastic,
        ..base()
    };
    let s = spec(
        StudyKind::Weak,
        &[&[8, 1], &[16, 4], &[24, 9]],
        &[PreconditionerKind::TwoGridV3],
        b,
    );
    let t = run_study(&s).unwrap();
    let picard: Vec<usize> = t
        .solve_rows()
        .unwrap()
        .iter()
        .map(|r| r.picard_iterations)
        .collect();
    assert!(
        picard.iter().max().unwrap() - picard.iter().min().unwrap() <= 1,
        "{picard:?}"
    );
}

#[test]
fn term_counts_follow_basis_size() {
    let b = RunConfig {
        mesh_n: 8,
        p_out: 3,
        nsub: 2,
        ..base()
    };
    let s = spec(
        StudyKind::RandomVars,
        &[&[3], &[5]],
        &[PreconditionerKind::TwoGridLu],
        b.clone(),
    );
    let t = run_study(&s).unwrap();
    let terms: Vec<usize> = t.solve_rows().unwrap().iter().map(|r| r.terms).collect();
    assert_eq!(terms, vec![20, 56]);
    assert!(t
        .solve_rows()
        .unwrap()
        .iter()
        .all(|r| r.efficiency.is_none()));
    let s = spec(
        StudyKind::Order,
        &[&[1], &[2], &[3]],
        &[PreconditionerKind::TwoGridLu],
        b,
    );
    let t = run_study(&s).unwrap();
    let rows = t.solve_rows().unwrap();
    assert_eq!(
        rows.iter().map(|r| r.terms).collect::<Vec<_>>(),
        vec![3, 6, 10]
    );
    assert_eq!(rows[2].ndofs, 81 * 10);
}

#[test]
fn coarse_ratio_trend() {
    let b = RunConfig {
        mesh_n: 24,
        ..base()
    };
    let s = spec(
        StudyKind::CoarseRatio,
        &[&[1], &[4], &[16], &[64]],
        &[PreconditionerKind::TwoGridLu],
        b,
    );
    let t = run_study(&s).unwrap();
    let o = outer(&t, PreconditionerKind::TwoGridLu);
    assert_eq!(o[0], 1);
    assert!(o.windows(2).all(|w| w[0] <= w[1]), "{o:?}");
    assert_eq!(o[1..].iter().min(), Some(&o[1]));
}

#[test]
fn condition_ratio_sigma_zero_is_norm_ratio() {
    let b = RunConfig {
        mesh_n: 2,
        sigma: 0.0,
        p_out: 3,
        ..base()
    };
    let s = spec(StudyKind::CondRatio, &[&[2]], &[], b);
    let t = run_study(&s).unwrap();
    let row = &t.cond_rows().unwrap()[0];
    assert_eq!(row.terms, 10);
    assert_eq!(row.dim, 9 * 10);
    assert!(row.cond_deterministic.is_finite() && row.cond_deterministic > 1.0);
    // Block k is ⟨Ψk²⟩ times the deterministic matrix; max ⟨Ψk²⟩ = 3! = 6.
    assert!((row.ratio - 6.0).abs() < 1e-8 * 6.0, "{}", row.ratio);
}

#[test]
fn condition_ratio_increases_with_m() {
    let b = RunConfig {
        mesh_n: 4,
        p_out: 3,
        ..base()
    };
    let s = spec(StudyKind::CondRatio, &[&[1], &[2], &[3]], &[], b);
    let t = run_study(&s).unwrap();
    let ratios: Vec<f64> = t.cond_rows().unwrap().iter().map(|r| r.ratio).collect();
    assert!(ratios.windows(2).all(|w| w[0] < w[1]), "{ratios:?}");
}

#[test]
fn csv_schema_and_reproducible_iterations() {
    let s = spec(
        StudyKind::Strong,
        &[&[1], &[4]],
        &[PreconditionerKind::TwoGridV3],
        base(),
    );
    let a = run_study(&s).unwrap();
    let b = run_study(&s).unwrap();
    let iters = |t: &StudyTable| {
        t.solve_rows()
            .unwrap()
            .iter()
            .map(|r| (r.outer_iterations, r.coarse_iterations))
            .collect::<Vec<_>>()
    };
    assert_eq!(iters(&a), iters(&b));
    let dir = tempfile::tempdir().unwrap();
    let csv = write_study(&s, &a, dir.path()).unwrap();
    assert_eq!(csv.file_name().unwrap(), "strong.csv");
    let text = std::fs::read_to_string(&csv).unwrap();
    let cfg = read_config_line(&text).unwrap();
    assert_eq!(cfg["study"], "strong");
    assert_eq!(
        text.lines().nth(1).unwrap(),
        "preconditioner,mesh_n,nsub,M,p_out,terms,ndofs,coarse_ratio,outer_iterations,coarse_iterations,\
         picard_iterations,pc_setup_seconds,solve_seconds,total_seconds,speedup,efficiency,converged"
    );
    assert_eq!(text.lines().count(), 4);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["csv"], "strong.csv");
    assert_eq!(manifest["rows"].as_array().unwrap().len(), 2);

    let c = spec(
        StudyKind::CondRatio,
        &[&[1]],
        &[],
        RunConfig {
            mesh_n: 2,
            ..base()
        },
    );
    let t = run_study(&c).unwrap();
    let mut out = Vec::new();
    t.write_csv(&mut out, &c).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(
        text.lines().nth(1),
        Some("M,terms,dim,cond_stochastic,cond_deterministic,ratio")
    );
}

#[test]
fn invalid_specs_rejected() {
    let s = spec(
        StudyKind::Strong,
        &[],
        &[PreconditionerKind::TwoGridV3],
        base(),
    );
    assert!(run_study(&s).is_err());
    let s = spec(
        StudyKind::Weak,
        &[&[8]],
        &[PreconditionerKind::TwoGridV3],
        base(),
    );
    assert!(run_study(&s).is_err());
    let s = spec(StudyKind::Strong, &[&[2]], &[], base());
    assert!(run_study(&s).is_err());
}
