//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its observed margin (run with `--nocapture` to see them).

use std::sync::LazyLock;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use gspca::bench::{
    generate_data, ranking_tables, run_experiment, scalar_vs_group, Algorithm,
    ComponentAlignment, ExperimentSpec, GroundTruthSpec, SolverSettings,
};
use gspca::grouped::{GroupStructure, GroupedMatrix, LoadingBlock};
use gspca::linalg::{polar, qr_norm_ordered, rv_coefficient, svd};
use gspca::solver::{
    block_solve, deflation_solve, gradient_f, nominal_gammas, SolverConfig, SparsityParams,
    Weights,
};
use gspca::variance::{
    adjusted_variance, optimal_variance, subspace_variance, variance_report,
};
use gspca::{GspcaResult, OrthonormalBlock};

fn gaussian(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal))
}

fn orthonormal(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    qr_norm_ordered(&gaussian(n, m, rng)).unwrap().q
}

/// A = U·diag(σ)·V^T with prescribed singular values; returns (A, V).
fn with_spectrum(
    n: usize,
    p: usize,
    sigmas: &[f64],
    rng: &mut ChaCha8Rng,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let r = sigmas.len();
    let u = orthonormal(n, r, rng);
    let v = orthonormal(p, r, rng);
    let a = &u * DMatrix::from_diagonal(&DVector::from_row_slice(sigmas)) * v.transpose();
    (a, v)
}

fn unit_columns(mut z: DMatrix<f64>) -> DMatrix<f64> {
    for j in 0..z.ncols() {
        let norm = z.column(j).norm();
        z.column_mut(j).scale_mut(1.0 / norm);
    }
    z
}

// ---------------------------------------------------------------- shared runs

struct PcaEquivalenceRun {
    objective: f64,
    target: f64,
    rv: f64,
    result: GspcaResult,
}

/// Criterion 1's 50 solves, shared with criterion 4.
static PCA_RUNS: LazyLock<Vec<PcaEquivalenceRun>> = LazyLock::new(|| {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let m = 4;
    (0..50)
        .map(|_| {
            // distinct leading singular values with comfortable gaps
            let sigmas: Vec<f64> = (0..20)
                .map(|j| (21 - j) as f64 + 0.3 * rng.random::<f64>())
                .collect();
            let (a, v) = with_spectrum(50, 20, &sigmas, &mut rng);
            let data = GroupedMatrix::new(a, GroupStructure::singletons(20)).unwrap();
            let cfg = SolverConfig::new(Weights::inverse_index(m), SparsityParams::zero(m));
            let result = block_solve(&data, m, &cfg).unwrap();
            let target: f64 = (0..m)
                .map(|j| sigmas[j] * sigmas[j] / ((j + 1) * (j + 1)) as f64)
                .collect::<Vec<f64>>()
                .iter()
                .sum();
            let rv = rv_coefficient(result.z.matrix(), &v.columns(0, m).into_owned()).unwrap();
            PcaEquivalenceRun {
                objective: result.objective(),
                target,
                rv,
                result,
            }
        })
        .collect()
});

fn bench_spec() -> ExperimentSpec {
    ExperimentSpec {
        ground_truth: GroundTruthSpec::default(),
        n_samples: 3000,
        n_replicates: 20,
        lambda_grid: vec![0.05, 0.1, 0.2, 0.4],
        algorithms: Algorithm::ALL.to_vec(),
        seed: 7,
        zero_tol: 0.0,
        alignment: ComponentAlignment::Direct,
        solver: SolverSettings {
            max_iterations: 2000,
            rel_tol: 1e-9,
        },
    }
}

/// Criterion 5's experiment, shared with criteria 6 and 7.
static BENCH: LazyLock<gspca::bench::ExperimentResult> =
    LazyLock::new(|| run_experiment(&bench_spec()).unwrap());

/// The objective traces of every solve behind the criterion-5 run
/// (solves are deterministic, so re-running them reproduces the traces).
static BENCH_TRACES: LazyLock<Vec<(Vec<f64>, Vec<usize>)>> = LazyLock::new(|| {
    let spec = bench_spec();
    let gt = spec.ground_truth.resolve().unwrap();
    let mut traces = Vec::new();
    for rep in 0..spec.n_replicates {
        let seed = gspca::bench::replicate_seed(spec.seed, rep);
        let data = generate_data(&gt, spec.n_samples, seed).unwrap();
        let gammas = nominal_gammas(&data, gt.m()).unwrap();
        for &alg in &spec.algorithms {
            for &lam in &spec.lambda_grid {
                let sparsity = SparsityParams::from_reduced(lam, &gammas).unwrap();
                let weights = match alg {
                    Algorithm::BlockSameMu => Weights::uniform(gt.m()),
                    _ => Weights::inverse_index(gt.m()),
                };
                let cfg = SolverConfig::new(weights, sparsity);
                let result = match alg {
                    Algorithm::Deflation => deflation_solve(&data, gt.m(), &cfg).unwrap(),
                    _ => block_solve(&data, gt.m(), &cfg).unwrap(),
                };
                traces.push((result.objective_trace, result.segment_lengths));
            }
        }
    }
    traces
});

// ---------------------------------------------------------------- criteria

#[test]
fn criterion_01_pca_equivalence() {
    let mut worst_rel = 0.0f64;
    let mut worst_rv = 1.0f64;
    for run in PCA_RUNS.iter() {
        let rel = (run.objective - run.target).abs() / run.target;
        worst_rel = worst_rel.max(rel);
        worst_rv = worst_rv.min(run.rv);
        assert!(
            rel <= 1e-8,
            "objective {} vs Σ μ²σ² {} (rel {rel:.2e})",
            run.objective,
            run.target
        );
        assert!(run.rv >= 1.0 - 1e-8, "rv = {}", run.rv);
    }
    println!(
        "criterion 01 PCA equivalence: PASS (50 instances, max rel err {worst_rel:.2e}, min rv 1-{:.2e})",
        1.0 - worst_rv
    );
}

#[test]
fn criterion_02_variance_inequality_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let slack = 1e-10;
    for k in 0..1000 {
        let m = 1 + (k % 5);
        let p = rng.random_range(m + 1..=20);
        let n = rng.random_range((m + 2).max(6)..=40);
        let a = gaussian(n, p, &mut rng);
        let z = unit_columns(gaussian(p, m, &mut rng));
        let data = GroupedMatrix::new(a, GroupStructure::singletons(p)).unwrap();
        let loadings = LoadingBlock::new(z, GroupStructure::singletons(p)).unwrap();
        let rep = variance_report(&data, &loadings).unwrap();
        assert!(rep.adjusted <= rep.optimal + slack, "adj {} > opt {}", rep.adjusted, rep.optimal);
        assert!(rep.optimal <= rep.subspace + slack, "opt {} > subsp {}", rep.optimal, rep.subspace);
        assert!(rep.subspace <= rep.pca_bound + slack);
        assert!(rep.pca_bound <= rep.total_variance + slack);
        assert!(rep.qr_normalized <= rep.subspace + slack);
        assert!(rep.up_normalized <= rep.subspace + slack);
    }
    println!("criterion 02 variance inequality chain: PASS (1000 instances, slack 1e-10)");
}

#[test]
fn criterion_03_orthogonal_components_property() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for k in 0..200 {
        let m = 2 + (k % 3);
        let p = rng.random_range(m + 2..=14);
        let n = rng.random_range(p..=30);
        let a = gaussian(n, p, &mut rng);
        // orthogonalize Y0 = A·Z0, pull the basis back to loadings, and
        // rescale to unit columns; column scaling keeps Y orthogonal
        let z0 = gaussian(p, m, &mut rng);
        let y0 = &a * &z0;
        let qr = y0.qr();
        let z = unit_columns(z0 * qr.r().try_inverse().unwrap());
        let y = &a * &z;

        let gram = y.transpose() * &y;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    assert!(gram[(i, j)].abs() <= 1e-8 * gram[(i, i)].abs().max(1.0));
                }
            }
        }

        let yf = y.norm_squared();
        let adj = adjusted_variance(&y).unwrap();
        let opt = optimal_variance(&y).unwrap();
        let data = GroupedMatrix::new(a.clone(), GroupStructure::singletons(p)).unwrap();
        let loadings = LoadingBlock::new(z, GroupStructure::singletons(p)).unwrap();
        let subsp = subspace_variance(&data, &loadings).unwrap();
        let bound = svd(&a).unwrap().leading_energy(m);

        let tol = 1e-10 * yf.max(1.0);
        assert!((adj - yf).abs() <= tol, "adjusted {adj} vs ‖Y‖² {yf}");
        assert!((opt - yf).abs() <= tol, "optimal {opt} vs ‖Y‖² {yf}");
        assert!(yf <= subsp + tol, "‖Y‖² {yf} > subspace {subsp}");
        assert!(subsp <= bound + 1e-10 * bound.max(1.0));
    }
    println!("criterion 03 orthogonal components: PASS (200 instances, equalities at 1e-10)");
}

#[test]
fn criterion_04_ascent_monotonicity() {
    let mut checked = 0usize;
    let mut check = |trace: &[f64]| {
        for w in trace.windows(2) {
            assert!(
                w[1] >= w[0] * (1.0 - 1e-12),
                "objective decreased: {} -> {}",
                w[0],
                w[1]
            );
            checked += 1;
        }
    };
    for run in PCA_RUNS.iter() {
        for segment in run.result.trace_segments() {
            check(segment);
        }
    }
    for (trace, segments) in BENCH_TRACES.iter() {
        let mut start = 0;
        for &len in segments {
            check(&trace[start..start + len]);
            start += len;
        }
    }
    println!("criterion 04 ascent monotonicity: PASS ({checked} iteration steps, rel slack 1e-12)");
}

#[test]
fn criterion_05_sparsity_recovery() {
    let lam = 0.1;
    for alg in [Algorithm::Deflation, Algorithm::BlockDifferentMu] {
        let tpr = BENCH.mean_of(alg, lam, "tpr").expect("tpr defined");
        let fpr = BENCH.mean_of(alg, lam, "fpr").expect("fpr defined");
        assert!(tpr >= 0.95, "{} mean tpr {tpr}", alg.label());
        assert!(fpr <= 0.05, "{} mean fpr {fpr}", alg.label());
    }
    let dt = BENCH.mean_of(Algorithm::Deflation, lam, "tpr").unwrap();
    let bt = BENCH.mean_of(Algorithm::BlockDifferentMu, lam, "tpr").unwrap();
    println!(
        "criterion 05 sparsity recovery: PASS (λ=0.1, n=3000: deflation tpr {dt:.3}, block tpr {bt:.3}, fpr ≤ 0.05)"
    );
}

#[test]
fn criterion_06_mean_pev_ordering() {
    let spec = bench_spec();
    for &alg in &spec.algorithms {
        for &lam in &spec.lambda_grid {
            let mean = |metric: &str| BENCH.mean_of(alg, lam, metric).expect("pev defined");
            let subsp = mean("pev_subspVar");
            let opt = mean("pev_optVar");
            let adj = mean("pev_adjVar");
            let qrn = mean("pev_QRnormVar");
            let upn = mean("pev_UPnormVar");
            let tol = 1e-12;
            assert!(subsp >= opt - tol, "{} λ={lam}: subsp {subsp} < opt {opt}", alg.label());
            assert!(opt >= adj - tol, "{} λ={lam}: opt {opt} < adj {adj}", alg.label());
            assert!(qrn <= subsp + tol);
            assert!(upn <= subsp + tol);
        }
    }
    println!("criterion 06 mean pev ordering: PASS (3 algorithms × 4 λ values)");
}

#[test]
fn criterion_07_ranking_agreement() {
    let tables = ranking_tables(&BENCH, &[0.0, 1e-3, 1e-2]).unwrap();
    let at_eps = tables
        .agreement
        .iter()
        .find(|a| a.epsilon == 1e-2)
        .unwrap();
    let mut min_agreement = 100.0f64;
    for row in &at_eps.percent {
        for cell in row.iter().flatten() {
            min_agreement = min_agreement.min(*cell);
            assert!(*cell >= 99.0, "pairwise agreement {cell} < 99%");
        }
    }
    println!(
        "criterion 07 ranking agreement: PASS (ε=1e-2: {} distinguishable couples, min agreement {:.2}%)",
        at_eps.distinguishable,
        if at_eps.distinguishable == 0 { 100.0 } else { min_agreement }
    );
}

#[test]
fn criterion_08_group_information_benefit() {
    let spec = ExperimentSpec {
        ground_truth: GroundTruthSpec::default(),
        n_samples: 300,
        n_replicates: 20,
        lambda_grid: vec![0.02, 0.03, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5],
        algorithms: vec![Algorithm::BlockDifferentMu],
        seed: 99,
        zero_tol: 0.0,
        alignment: ComponentAlignment::Direct,
        solver: SolverSettings {
            max_iterations: 2000,
            rel_tol: 1e-9,
        },
    };
    let pair = scalar_vs_group(&spec).unwrap();
    let alg = Algorithm::BlockDifferentMu;
    let stats = |res: &gspca::bench::ExperimentResult, lam: f64| {
        (
            res.mean_of(alg, lam, "tpr").unwrap(),
            res.mean_of(alg, lam, "fpr").unwrap(),
        )
    };
    // group tpr must beat the best scalar tpr achievable at an equal or
    // lower false positive rate, by at least 0.1
    let mut witness = None;
    for &lam in &spec.lambda_grid {
        let (gt, gf) = stats(&pair.group, lam);
        let comparable: Vec<f64> = spec
            .lambda_grid
            .iter()
            .map(|&l| stats(&pair.scalar, l))
            .filter(|&(_, sf)| sf <= gf)
            .map(|(st, _)| st)
            .collect();
        if let Some(best_scalar) = comparable.iter().cloned().reduce(f64::max) {
            if gt - best_scalar >= 0.1 {
                witness = Some((lam, gt, best_scalar, gf));
                break;
            }
        }
    }
    let (lam, gt, st, gf) = witness.expect("no λ with a ≥0.1 group tpr advantage at equal or lower fpr");
    println!(
        "criterion 08 group information benefit: PASS (λ={lam}: group tpr {gt:.3} vs best scalar tpr {st:.3} at fpr ≤ {gf:.3})"
    );
}

#[test]
fn criterion_09_generalized_rayleigh_quotient_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst_gap = f64::NEG_INFINITY;
    for k in 0..1000 {
        let m = 1 + (k % 5);
        let p = rng.random_range(m + 1..=16);
        let n = rng.random_range(p..=30);
        let a = gaussian(n, p, &mut rng);
        let bound = svd(&a).unwrap().leading_energy(m);

        // direct evaluation of tr{(Z^T A^T A Z)(Z^T Z)^{-1}}
        let quotient = |z: &DMatrix<f64>| -> f64 {
            let az = &a * z;
            ((az.transpose() * &az) * (z.transpose() * z).try_inverse().unwrap()).trace()
        };

        let z = gaussian(p, m, &mut rng);
        let q = quotient(&z);
        worst_gap = worst_gap.max(q - bound);
        assert!(q <= bound + 1e-10, "quotient {q} exceeds bound {bound}");

        // equality for an invertible recombination of the leading
        // right singular vectors
        let dec = svd(&a).unwrap();
        let mix = orthonormal(m, m, &mut rng)
            * DMatrix::from_diagonal(&DVector::from_fn(m, |_, _| 1.0 + rng.random::<f64>()));
        let z_lead = dec.right_block(m) * mix;
        let q_lead = quotient(&z_lead);
        assert!(
            (q_lead - bound).abs() <= 1e-8 * bound.max(1.0),
            "equality case off: {q_lead} vs {bound}"
        );
    }
    println!(
        "criterion 09 generalized Rayleigh quotient bound: PASS (1000 instances, worst slack {worst_gap:.2e})"
    );
}

#[test]
fn criterion_10_gradient_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);

    // independent evaluation of the objective, valid at any X
    fn brute_objective(
        data: &GroupedMatrix,
        x: &DMatrix<f64>,
        mu: &[f64],
        gamma: &[f64],
    ) -> f64 {
        let mut total = 0.0;
        for j in 0..x.ncols() {
            let xj = x.column(j);
            let mut inner = 0.0;
            for i in 0..data.groups().count() {
                let alpha = (data.group_slice(i).unwrap().transpose() * &xj).norm();
                inner += (alpha - gamma[j]).max(0.0).powi(2);
            }
            total += mu[j] * mu[j] * inner;
        }
        total
    }

    let mut checked = 0;
    let mut worst = 0.0f64;
    'outer: while checked < 100 {
        let m = 1 + (checked % 3);
        let p_groups = rng.random_range(2..=4usize);
        let sizes: Vec<usize> = (0..p_groups).map(|_| rng.random_range(1..=3)).collect();
        let total: usize = sizes.iter().sum();
        let n = rng.random_range((total.max(m) + 1)..=12);
        let groups = GroupStructure::new(sizes).unwrap();
        let data = GroupedMatrix::new(gaussian(n, total, &mut rng), groups).unwrap();
        let x = orthonormal(n, m, &mut rng);
        let mu: Vec<f64> = (0..m).map(|_| 0.3 + rng.random::<f64>()).collect();
        let gamma: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 1.5).collect();

        // keep away from thresholding kinks
        for i in 0..data.groups().count() {
            for j in 0..m {
                let alpha = (data.group_slice(i).unwrap().transpose() * x.column(j)).norm();
                if (alpha - gamma[j]).abs() < 1e-3 {
                    continue 'outer;
                }
            }
        }

        let cfg = SolverConfig::new(
            Weights::new(mu.clone()).unwrap(),
            SparsityParams::explicit(gamma.clone()).unwrap(),
        );
        let grad = gradient_f(&data, &OrthonormalBlock::new(x.clone()).unwrap(), &cfg).unwrap();

        let d = {
            let raw = gaussian(n, m, &mut rng);
            let norm = raw.norm();
            raw / norm
        };
        let h = 1e-6;
        let plus = brute_objective(&data, &(&x + &d * h), &mu, &gamma);
        let minus = brute_objective(&data, &(&x - &d * h), &mu, &gamma);
        let fd = (plus - minus) / (2.0 * h);
        let inner: f64 = grad.iter().zip(d.iter()).map(|(a, b)| a * b).sum();
        let err = (fd - inner).abs();
        worst = worst.max(err);
        assert!(err <= 1e-5, "directional derivative {fd} vs gradient {inner}");
        checked += 1;
    }
    println!("criterion 10 gradient correctness: PASS (100 non-kink points, worst abs err {worst:.2e})");
}

#[test]
fn criterion_11_projection_basis_optimality() {
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let mut polar_beaten = 0usize;
    for _ in 0..100 {
        let n = rng.random_range(4..=10);
        let y = gaussian(n, 2, &mut rng);
        let opt = optimal_variance(&y).unwrap();
        let basis = qr_norm_ordered(&y).unwrap().q;

        // the closed-form polar value, for reporting how often plain polar
        // alignment is itself beaten by a random frame
        let polar_value = {
            let u = polar(&y).unwrap().unitary;
            (0..2).map(|j| y.column(j).dot(&u.column(j)).powi(2)).sum::<f64>()
        };

        let scale = y.norm_squared();
        for _ in 0..10_000 {
            let phi = rng.random::<f64>() * std::f64::consts::TAU;
            let flip = rng.random::<bool>();
            let (c, s) = (phi.cos(), phi.sin());
            let o = if flip {
                DMatrix::from_column_slice(2, 2, &[c, s, s, -c])
            } else {
                DMatrix::from_column_slice(2, 2, &[c, s, -s, c])
            };
            let frame = &basis * o;
            let value: f64 = (0..2)
                .map(|j| y.column(j).dot(&frame.column(j)).powi(2))
                .sum();
            assert!(
                opt + 1e-9 * scale >= value,
                "random frame value {value} exceeds optimal {opt}"
            );
            if value > polar_value {
                polar_beaten += 1;
            }
        }
    }
    println!(
        "criterion 11 projection-basis optimality: PASS (100×10000 frames; raw polar alignment was beaten {polar_beaten} times, the maximizing basis never)"
    );
}
