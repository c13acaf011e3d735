mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgdd::assembly::{assemble_stochastic_linear, BcSpec};
use sgdd::chaos::{ChaosBasis, TripleTensor};
use sgdd::config::{PreconditionerKind, RunConfig};
use sgdd::dd::{
    build_twogrid, partition_overlap, CoarseVariant, LocalSolver, OneLevelRas, Partition,
    TwoGridOptions,
};
use sgdd::mesh::{NestedPair, TriMesh};
use sgdd::randomfield::{kle_2d, lognormal_pce, ExpKernel};
use sgdd::solvers::solve;
use sgdd::sparsela::{fgmres, CsrMatrix, KrylovConfig, Preconditioner, SparseLu};

fn stochastic_matrix(n: usize, nvars: usize, p: usize) -> (CsrMatrix, Vec<f64>, usize) {
    let mesh = TriMesh::unit_square(n).unwrap();
    let kle = kle_2d(ExpKernel::new(0.3, 1.0, 1.0).unwrap(), 0.0, nvars).unwrap();
    let input = ChaosBasis::new(nvars, p).unwrap();
    let output = ChaosBasis::new(nvars, p).unwrap();
    let c = lognormal_pce(&kle, &input, &mesh).unwrap();
    let m = TripleTensor::new(&input, &output).unwrap();
    let f = vec![1.0; mesh.nvertices()];
    let sys = assemble_stochastic_linear(&mesh, &c, &m, &output, &f, &BcSpec::left_right(0.0, 1.0))
        .unwrap();
    (sys.matrix, sys.rhs, output.len())
}

/// Dense `Rᵢ` (local × global) of one subdomain.
fn restriction(p: &Partition, s: usize) -> DMatrix<f64> {
    let sub = &p.subdomains[s];
    let mut r = DMatrix::zeros(sub.dofs.len(), p.ndofs);
    for (row, &d) in sub.dofs.iter().enumerate() {
        r[(row, d)] = 1.0;
    }
    r
}

fn ownership(p: &Partition, s: usize) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        p.subdomains[s].owned.len(),
        p.subdomains[s].owned.iter().map(|&o| o as u8 as f64),
    ))
}

fn apply(pc: &dyn Preconditioner, r: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; r.len()];
    pc.apply(r, &mut z);
    z
}

fn dense_operator(pc: &dyn Preconditioner, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        for (i, v) in apply(pc, &e).into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    m
}

#[test]
fn partition_of_unity_dense() {
    let mesh = TriMesh::unit_square(5).unwrap();
    for nsub in [1, 2, 3, 4, 6, 9] {
        for overlap in [1, 2] {
            let p = partition_overlap(&mesh, 3, nsub, overlap).unwrap();
            let mut sum = DMatrix::zeros(p.ndofs, p.ndofs);
            for s in 0..nsub {
                let r = restriction(&p, s);
                sum += r.transpose() * ownership(&p, s) * &r;
            }
            assert_eq!(
                sum,
                DMatrix::identity(p.ndofs, p.ndofs),
                "nsub {nsub} overlap {overlap}"
            );
            let covered: std::collections::BTreeSet<usize> = p
                .subdomains
                .iter()
                .flat_map(|s| s.dofs.iter().copied())
                .collect();
            assert_eq!(covered.len(), p.ndofs);
        }
    }
}

#[test]
fn single_subdomain_covers_everything() {
    let mesh = TriMesh::unit_square(4).unwrap();
    let p = partition_overlap(&mesh, 2, 1, 1).unwrap();
    assert_eq!(p.subdomains[0].dofs, (0..p.ndofs).collect::<Vec<_>>());
    assert!(p.subdomains[0].owned.iter().all(|&o| o));
}

#[test]
fn four_subdomains_multiplicity_at_most_four() {
    let mesh = TriMesh::unit_square(8).unwrap();
    let p = partition_overlap(&mesh, 2, 4, 1).unwrap();
    let mut count = vec![0usize; p.ndofs];
    for s in &p.subdomains {
        for &d in &s.dofs {
            count[d] += 1;
        }
    }
    assert!(count.iter().all(|&c| (1..=4).contains(&c)));
    assert!(count.contains(&4));
    let mut csv = Vec::new();
    p.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next(), Some("dof,node,pc,owner,multiplicity"));
    assert_eq!(text.lines().count(), p.ndofs + 1);
}

#[test]
fn partition_errors() {
    let mesh = TriMesh::unit_square(2).unwrap();
    assert!(partition_overlap(&mesh, 1, 0, 1).is_err());
    assert!(partition_overlap(&mesh, 1, 2, 0).is_err());
    assert!(partition_overlap(&mesh, 1, 5, 1).is_err());
}

#[test]
fn ras_matches_dense_formula() {
    let (a, _, nb) = stochastic_matrix(4, 1, 1);
    let mesh = TriMesh::unit_square(4).unwrap();
    let p = partition_overlap(&mesh, nb, 2, 1).unwrap();
    let ras = OneLevelRas::new(&a, &p, LocalSolver::Lu).unwrap();
    let ad = a.to_dense();
    let mut oracle = DMatrix::zeros(p.ndofs, p.ndofs);
    for s in 0..2 {
        let r = restriction(&p, s);
        let local = (&r * &ad * r.transpose()).try_inverse().unwrap();
        oracle += r.transpose() * ownership(&p, s) * local * &r;
    }
    let got = dense_operator(&ras, p.ndofs);
    assert!(common::max_abs_diff(&got, &oracle) < 1e-12);
    assert_eq!(apply(&ras, &vec![0.0; p.ndofs]), vec![0.0; p.ndofs]);
}

#[test]
fn ras_single_subdomain_exact_inverse() {
    let (a, b, nb) = stochastic_matrix(5, 2, 2);
    let mesh = TriMesh::unit_square(5).unwrap();
    let p = partition_overlap(&mesh, nb, 1, 1).unwrap();
    let ras = OneLevelRas::new(&a, &p, LocalSolver::Lu).unwrap();
    let x = apply(&ras, &b);
    let oracle = SparseLu::new(&a).unwrap().solve(&b).unwrap();
    assert!(x.iter().zip(&oracle).all(|(p, q)| (p - q).abs() < 1e-12));
}

#[test]
fn coarse_operator_matches_dense_triple_product() {
    let (a, _, nb) = stochastic_matrix(4, 2, 1);
    let pair = NestedPair::from_fine(TriMesh::unit_square(4).unwrap(), 2).unwrap();
    let p = partition_overlap(pair.fine(), nb, 2, 1).unwrap();
    let tg = build_twogrid(
        &a,
        nb,
        &pair,
        &p,
        &TwoGridOptions::new(CoarseVariant::Lu, 1e-5),
    )
    .unwrap();
    let r0 = tg.restriction().to_dense();
    let oracle = &r0 * a.to_dense() * r0.transpose();
    assert_eq!(tg.coarse_operator().nrows(), nb * pair.coarse().nvertices());
    assert!(common::max_abs_diff(&tg.coarse_operator().to_dense(), &oracle) < 1e-12);
}

#[test]
fn twogrid_lu_matches_dense_vcycle() {
    let (a, _, nb) = stochastic_matrix(4, 1, 1);
    let pair = NestedPair::from_fine(TriMesh::unit_square(4).unwrap(), 2).unwrap();
    let p = partition_overlap(pair.fine(), nb, 2, 1).unwrap();
    let mut opts = TwoGridOptions::new(CoarseVariant::Lu, 1e-5);
    opts.local_solver = LocalSolver::Lu;
    let tg = build_twogrid(&a, nb, &pair, &p, &opts).unwrap();
    let n = a.nrows();
    let ad = a.to_dense();
    let m = dense_operator(tg.smoother(), n);
    let r0 = tg.restriction().to_dense();
    let q = r0.transpose() * (&r0 * &ad * r0.transpose()).try_inverse().unwrap() * &r0;
    let id = DMatrix::<f64>::identity(n, n);
    // z = M r + Q (I − A M) r, then z += M (r − A z).
    let z2 = &m + &q * (&id - &ad * &m);
    let oracle = &z2 + &m * (&id - &ad * &z2);
    let got = dense_operator(&tg, n);
    assert!(common::max_abs_diff(&got, &oracle) < 1e-10 * oracle.abs().max());
}

#[test]
fn twogrid_coarse_equals_fine_is_exact() {
    let (a, b, nb) = stochastic_matrix(6, 2, 2);
    let pair = NestedPair::from_fine(TriMesh::unit_square(6).unwrap(), 1).unwrap();
    let p = partition_overlap(pair.fine(), nb, 4, 1).unwrap();
    let tg = build_twogrid(
        &a,
        nb,
        &pair,
        &p,
        &TwoGridOptions::new(CoarseVariant::Lu, 1e-5),
    )
    .unwrap();
    let (_, rep) = fgmres(&a, &b, None, &tg, &KrylovConfig::with_tol(1e-10)).unwrap();
    assert!(rep.converged);
    assert_eq!(rep.iterations, 1);
    assert_eq!(apply(&tg, &vec![0.0; a.nrows()]), vec![0.0; a.nrows()]);
}

#[test]
fn twogrid_beats_one_level_on_9x9() {
    let (a, b, nb) = stochastic_matrix(8, 2, 2);
    let pair = NestedPair::from_fine(TriMesh::unit_square(8).unwrap(), 2).unwrap();
    let p = partition_overlap(pair.fine(), nb, 4, 1).unwrap();
    let cfg = KrylovConfig::with_tol(1e-8);
    let ras = OneLevelRas::new(&a, &p, LocalSolver::Ilu0).unwrap();
    let (_, one) = fgmres(&a, &b, None, &ras, &cfg).unwrap();
    let tg = build_twogrid(
        &a,
        nb,
        &pair,
        &p,
        &TwoGridOptions::new(CoarseVariant::Lu, 1e-5),
    )
    .unwrap();
    let (_, two) = fgmres(&a, &b, None, &tg, &cfg).unwrap();
    assert!(one.converged && two.converged);
    assert!(
        two.iterations < one.iterations,
        "{} vs {}",
        two.iterations,
        one.iterations
    );
}

#[test]
fn inner_variants_record_coarse_iterations() {
    let (a, b, nb) = stochastic_matrix(8, 2, 2);
    let pair = NestedPair::from_fine(TriMesh::unit_square(8).unwrap(), 2).unwrap();
    let p = partition_overlap(pair.fine(), nb, 4, 1).unwrap();
    for variant in [CoarseVariant::GmresRas, CoarseVariant::GmresAmg] {
        let tg = build_twogrid(&a, nb, &pair, &p, &TwoGridOptions::new(variant, 1e-5)).unwrap();
        let (_, rep) = fgmres(&a, &b, None, &tg, &KrylovConfig::with_tol(1e-8)).unwrap();
        assert!(rep.converged);
        let stats = tg.stats();
        assert!(stats.applications > 0 && stats.iterations > 0);
        assert_eq!(stats.unconverged, 0);
        assert_eq!(tg.amg().is_some(), variant == CoarseVariant::GmresAmg);
        tg.reset_stats();
        assert_eq!(tg.stats().applications, 0);
    }
}

#[test]
fn two_grid_fixes_one_level_scalability() {
    // Exact local solves: with ILU(0) the local error hides the growth.
    let (a, b, nb) = stochastic_matrix(32, 2, 2);
    let pair = NestedPair::from_fine(TriMesh::unit_square(32).unwrap(), 2).unwrap();
    let cfg = KrylovConfig::with_tol(1e-5);
    let mut opts = TwoGridOptions::new(CoarseVariant::GmresAmg, 1e-5);
    opts.local_solver = LocalSolver::Lu;
    let (mut one, mut v3) = (Vec::new(), Vec::new());
    for nsub in [2, 4, 8, 16] {
        let p = partition_overlap(pair.fine(), nb, nsub, 1).unwrap();
        let ras = OneLevelRas::new(&a, &p, LocalSolver::Lu).unwrap();
        let (_, rep) = fgmres(&a, &b, None, &ras, &cfg).unwrap();
        assert!(rep.converged);
        one.push(rep.iterations);
        let tg = build_twogrid(&a, nb, &pair, &p, &opts).unwrap();
        let (_, rep) = fgmres(&a, &b, None, &tg, &cfg).unwrap();
        assert!(rep.converged);
        v3.push(rep.iterations);
    }
    assert!(one.windows(2).all(|w| w[0] < w[1]), "{one:?}");
    assert!(
        v3.iter().max().unwrap() - v3.iter().min().unwrap() <= 2,
        "{v3:?}"
    );
}

#[test]
fn solver_pipeline_two_grid_is_flat_in_nsub() {
    let counts: Vec<usize> = [2, 4, 8, 16]
        .iter()
        .map(|&nsub| {
            let cfg = RunConfig {
                mesh_n: 32,
                nvars: 2,
                p_in: 2,
                p_out: 2,
                nsub,
                preconditioner: PreconditionerKind::TwoGridV3,
                ..RunConfig::default()
            };
            let (_, rep) = solve(&cfg).unwrap();
            assert!(rep.converged);
            rep.outer_iterations
        })
        .collect();
    assert!(
        counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 2,
        "{counts:?}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn pou_holds_for_any_partition(n in 2usize..12, nsub in 1usize..10, overlap in 1usize..3, nb in 1usize..4) {
        let mesh = TriMesh::unit_square(n).unwrap();
        if let Ok(p) = partition_overlap(&mesh, nb, nsub, overlap) {
            prop_assert!(p.is_partition_of_unity());
            prop_assert_eq!(p.subdomains.len(), nsub);
        }
    }

    #[test]
    fn twogrid_lu_is_linear(seed in any::<u64>(), alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
        let (a, _, nb) = stochastic_matrix(6, 2, 1);
        let pair = NestedPair::from_fine(TriMesh::unit_square(6).unwrap(), 2).unwrap();
        let p = partition_overlap(pair.fine(), nb, 4, 1).unwrap();
        let tg = build_twogrid(&a, nb, &pair, &p, &TwoGridOptions::new(CoarseVariant::Lu, 1e-5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r1: Vec<f64> = (0..a.nrows()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r2: Vec<f64> = (0..a.nrows()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let comb: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| alpha * x + beta * y).collect();
        let (z1, z2, z) = (apply(&tg, &r1), apply(&tg, &r2), apply(&tg, &comb));
        for i in 0..z.len() {
            prop_assert!((z[i] - (alpha * z1[i] + beta * z2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn ras_order_independent_of_thread_count(seed in any::<u64>()) {
        let (a, _, nb) = stochastic_matrix(6, 1, 1);
        let mesh = TriMesh::unit_square(6).unwrap();
        let p = partition_overlap(&mesh, nb, 6, 1).unwrap();
        let ras = OneLevelRas::new(&a, &p, LocalSolver::Ilu0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r: Vec<f64> = (0..a.nrows()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| apply(&ras, &r));
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| apply(&ras, &r));
        prop_assert_eq!(one, four);
    }
}
