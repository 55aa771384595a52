// scratch probe for benchmark calibration (removed before release)
use gspca::bench::*;

fn model_from_args(args: &[String]) -> GroundTruthSpec {
    // probe <mode> [w_strong w_weak taper]
    if args.len() >= 5 {
        let gt = GroundTruth::chain_model(
            (args[2].parse().unwrap(), args[3].parse().unwrap()),
            args[4].parse().unwrap(),
            0x6773_7063,
        );
        let loadings = (0..gt.m())
            .map(|j| gt.z_true().matrix().column(j).iter().copied().collect())
            .collect();
        GroundTruthSpec::Explicit {
            groups: gt.groups().sizes().to_vec(),
            eigenvalues: gt.sigma_sq().to_vec(),
            loadings,
        }
    } else {
        GroundTruthSpec::default()
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("recovery");
    let gt_spec = model_from_args(&args);

    match mode {
        "recovery" => {
            let spec = ExperimentSpec {
                ground_truth: gt_spec,
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
            };
            let t0 = std::time::Instant::now();
            let res = run_experiment(&spec).unwrap();
            println!("run took {:?}", t0.elapsed());
            for alg in Algorithm::ALL {
                for &lam in &spec.lambda_grid {
                    println!(
                        "{:<20} λ={:<5} tpr={:.3} fpr={:.3} iters={:.0}",
                        alg.label(),
                        lam,
                        res.mean_of(alg, lam, "tpr").unwrap_or(-1.0),
                        res.mean_of(alg, lam, "fpr").unwrap_or(-1.0),
                        res.mean_of(alg, lam, "iterations").unwrap_or(-1.0),
                    );
                }
            }
        }
        "theta" => {
            let base = ExperimentSpec {
                ground_truth: gt_spec,
                n_samples: 300,
                n_replicates: 20,
                lambda_grid: vec![0.5],
                algorithms: vec![Algorithm::BlockSameMu],
                seed: 2024,
                zero_tol: 0.0,
                alignment: ComponentAlignment::Direct,
                solver: SolverSettings {
                    max_iterations: 2000,
                    rel_tol: 1e-9,
                },
            };
            for lam in [0.0f64, 0.1, 0.3, 0.5] {
                let spec = ExperimentSpec {
                    lambda_grid: vec![lam.max(1e-9 * 0.0)],
                    ..base.clone()
                };
                let spec = ExperimentSpec {
                    lambda_grid: vec![lam],
                    ..spec
                };
                let res = run_experiment(&spec).unwrap();
                print!("λ={lam:<6}");
                for j in 1..=4 {
                    let mean = res
                        .aggregates
                        .iter()
                        .find(|r| r.metric == "theta_optVar" && r.component == Some(j))
                        .and_then(|r| r.mean)
                        .unwrap_or(f64::NAN);
                    print!(" θ{j}={mean:<8.4}");
                }
                println!();
            }
        }
        "group" => {
            let spec = ExperimentSpec {
                ground_truth: gt_spec,
                n_samples: 300,
                n_replicates: 20,
                lambda_grid: vec![0.02, 0.03, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6],
                algorithms: vec![Algorithm::BlockDifferentMu],
                seed: 99,
                zero_tol: 0.0,
                alignment: ComponentAlignment::Direct,
                solver: SolverSettings {
                    max_iterations: 2000,
                    rel_tol: 1e-9,
                },
            };
            let t0 = std::time::Instant::now();
            let pair = scalar_vs_group(&spec).unwrap();
            println!("run took {:?}", t0.elapsed());
            let stats = |res: &ExperimentResult, lam: f64| {
                (
                    res.mean_of(Algorithm::BlockDifferentMu, lam, "tpr").unwrap_or(-1.0),
                    res.mean_of(Algorithm::BlockDifferentMu, lam, "fpr").unwrap_or(-1.0),
                )
            };
            for &lam in &spec.lambda_grid {
                let (gt, gf) = stats(&pair.group, lam);
                let (st, sf) = stats(&pair.scalar, lam);
                // best scalar tpr among operating points with fpr ≤ group's
                let best_scalar = spec
                    .lambda_grid
                    .iter()
                    .map(|&l| stats(&pair.scalar, l))
                    .filter(|&(_, f)| f <= gf)
                    .map(|(t, _)| t)
                    .fold(f64::NEG_INFINITY, f64::max);
                let roc_gap = gt - best_scalar;
                println!(
                    "λ={lam:<5} group {gt:.3}/{gf:.3}  scalar {st:.3}/{sf:.3}  sameλΔ={:+.3} rocΔ={:+.3}{}",
                    gt - st,
                    roc_gap,
                    if roc_gap >= 0.1 { "  <== criterion gap" } else { "" }
                );
            }
        }
        other => eprintln!("unknown mode {other}"),
    }
}
