use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use gspca::bench::{
    ranking_tables, run_experiment, scalar_vs_group, write_long_csv, write_summary_json,
    ExperimentSpec,
};
use gspca::grouped::{sparsity_pattern, GroupStructure, GroupedMatrix, LoadingBlock};
use gspca::linalg::orthogonality_volume;
use gspca::solver::{
    block_solve, deflation_solve, nominal_gammas, GspcaResult, Init, SolverConfig,
    SparsityParams, Weights,
};
use gspca::variance::{variance_report, VarianceReport};

use crate::error::{CliError, Result};
use crate::io::{center_columns, read_groups, read_matrix, write_matrix, write_vector};
use crate::{AlgoArg, BenchArgs, CompareArgs, FitArgs, InitArg, MuArg, SweepArgs, VarianceArgs};

fn load_grouped(
    path: &Path,
    groups: Option<&Path>,
    center: bool,
) -> Result<GroupedMatrix> {
    let mut data = read_matrix(path)?;
    if center {
        center_columns(&mut data);
    }
    let structure = match groups {
        Some(p) => read_groups(p)?,
        None => GroupStructure::singletons(data.ncols()),
    };
    Ok(GroupedMatrix::new(data, structure)?)
}

fn weights_for(mu: MuArg, m: usize) -> Weights {
    match mu {
        MuArg::Decreasing => Weights::inverse_index(m),
        MuArg::Uniform => Weights::uniform(m),
    }
}

fn solve(
    algo: AlgoArg,
    data: &GroupedMatrix,
    m: usize,
    cfg: &SolverConfig,
) -> Result<GspcaResult> {
    let result = match algo {
        AlgoArg::Block => block_solve(data, m, cfg),
        AlgoArg::Deflation => deflation_solve(data, m, cfg),
    };
    result.map_err(CliError::from)
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn fit(args: FitArgs) -> Result<()> {
    if args.components == 0 {
        return Err(CliError::usage("--components must be at least 1"));
    }
    let m = args.components;
    let data = load_grouped(&args.input, args.groups.as_deref(), args.center)?;

    let gamma_scales = nominal_gammas(&data, m)?;
    let sparsity = match (&args.gammas, args.lambda) {
        (Some(gammas), _) => {
            if gammas.len() != m {
                return Err(CliError::usage(format!(
                    "--gammas needs {m} values, got {}",
                    gammas.len()
                )));
            }
            SparsityParams::explicit(gammas.clone())?
        }
        (None, lambda) => {
            let lambda = lambda.unwrap_or(0.0);
            if !(0.0..=1.0).contains(&lambda) {
                return Err(CliError::usage(format!(
                    "--lambda must lie in [0, 1], got {lambda}"
                )));
            }
            SparsityParams::from_reduced(lambda, &gamma_scales)?
        }
    };

    // γ at or above the strongest group norm thresholds everything away
    let gamma_max = gamma_scales[0];
    let min_gamma = sparsity
        .as_slice()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_gamma >= gamma_max {
        eprintln!(
            "warning: every sparsity parameter is at least the strongest group norm \
             ({gamma_max:.6}); the zero solution is optimal and all loadings vanish"
        );
    }

    let init = match args.init {
        InitArg::Svd => Init::LeftSingularVectors,
        InitArg::Random => Init::Seeded(args.seed),
    };
    let cfg = SolverConfig::new(weights_for(args.mu, m), sparsity)
        .with_rel_tol(args.tol)
        .with_max_iterations(args.max_iter)
        .with_init(init);
    let result = solve(args.algo, &data, m, &cfg)?;
    if !result.converged {
        eprintln!(
            "warning: solver stopped after {} iterations without meeting the tolerance",
            result.iterations
        );
    }

    ensure_out_dir(&args.out_dir)?;
    write_matrix(&args.out_dir.join("loadings.csv"), result.z.matrix())?;
    write_matrix(&args.out_dir.join("components.csv"), &result.y)?;
    write_matrix(&args.out_dir.join("basis.csv"), &result.x)?;
    write_vector(
        &args.out_dir.join("objective_trace.csv"),
        &result.objective_trace,
    )?;

    // support pattern: 1 marks a group active in a loading
    let pattern = sparsity_pattern(&result.z, 0.0);
    let support = DMatrix::from_fn(pattern.nrows(), pattern.ncols(), |i, j| {
        f64::from(u8::from(!pattern[(i, j)]))
    });
    write_matrix(&args.out_dir.join("pattern.csv"), &support)?;

    let report = match variance_report(&data, &result.z) {
        Ok(rep) => {
            write_json(&args.out_dir.join("variance_report.json"), &rep)?;
            Some(rep)
        }
        Err(gspca::Error::RankDeficient(msg)) => {
            eprintln!(
                "warning: no variance report — components are rank deficient ({msg})"
            );
            None
        }
        Err(e) => return Err(e.into()),
    };

    let nonzero = result.nonzero_loadings();
    let groups_active = support.iter().filter(|&&v| v != 0.0).count();
    println!(
        "F* = {:.6e}, pev_optVar = {}, nonzero loadings = {nonzero}/{m}, active groups = {groups_active}/{}, seed = {}",
        result.objective(),
        report
            .as_ref()
            .map(|r| format!("{:.6}", r.pev_optimal))
            .unwrap_or_else(|| "n/a".into()),
        data.groups().count() * m,
        args.seed
    );
    Ok(())
}

pub fn variance(args: VarianceArgs) -> Result<()> {
    let data = load_grouped(&args.data, args.groups.as_deref(), args.center)?;
    let z = read_matrix(&args.loadings)?;
    let loadings = LoadingBlock::new(z, data.groups().clone())?;
    let report: VarianceReport = variance_report(&data, &loadings).map_err(|e| match e {
        gspca::Error::RankDeficient(msg) => CliError::Numerical(format!(
            "explained variance is defined for full-rank loading and component blocks: {msg}"
        )),
        other => CliError::from(other),
    })?;
    if let Some(parent) = args.output.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_out_dir(parent)?;
        }
    }
    write_json(&args.output, &report)?;
    println!(
        "pev: subspVar {:.6}, optVar {:.6}, adjVar {:.6}, QRnormVar {:.6}, UPnormVar {:.6}",
        report.pev_subspace,
        report.pev_optimal,
        report.pev_adjusted,
        report.pev_qr_normalized,
        report.pev_up_normalized
    );
    Ok(())
}

fn parse_lambda_grid(text: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::usage(format!(
                "grid must be start:end:step, got '{text}'"
            )));
        }
        let bad = |e: std::num::ParseFloatError| CliError::usage(format!("bad grid value: {e}"));
        let start: f64 = parts[0].parse().map_err(bad)?;
        let end: f64 = parts[1].parse().map_err(bad)?;
        let step: f64 = parts[2].parse().map_err(bad)?;
        if step <= 0.0 || end < start {
            return Err(CliError::usage("grid needs end >= start and step > 0"));
        }
        let count = ((end - start) / step).round() as usize + 1;
        (0..count)
            .map(|k| (start + k as f64 * step).min(end))
            .collect()
    } else {
        text.split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| CliError::usage(format!("bad grid value '{v}': {e}")))
            })
            .collect::<Result<Vec<f64>>>()?
    };
    if values.is_empty() || values.iter().any(|&l| !(0.0..=1.0).contains(&l)) {
        return Err(CliError::usage("lambda values must lie in [0, 1]"));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::usage("lambda grid must be strictly ascending"));
    }
    Ok(values)
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    if args.components == 0 {
        return Err(CliError::usage("--components must be at least 1"));
    }
    let m = args.components;
    let grid = parse_lambda_grid(&args.lambdas)?;
    let data = load_grouped(&args.input, args.groups.as_deref(), args.center)?;
    let gamma_scales = nominal_gammas(&data, m)?;

    ensure_out_dir(&args.out_dir)?;
    let path = args.out_dir.join("sweep.csv");
    let file = File::create(&path)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "lambda,metric,component,value")?;

    let mut write_row = |lambda: f64, metric: &str, component: Option<usize>, value: f64| {
        writeln!(
            out,
            "{lambda},{metric},{},{value}",
            component.map(|c| c.to_string()).unwrap_or_default()
        )
    };

    for &lambda in &grid {
        let cfg = SolverConfig::new(
            weights_for(args.mu, m),
            SparsityParams::from_reduced(lambda, &gamma_scales)?,
        )
        .with_rel_tol(args.tol)
        .with_max_iterations(args.max_iter);
        let result = solve(args.algo, &data, m, &cfg)?;

        write_row(lambda, "objective", None, result.objective())?;
        write_row(lambda, "iterations", None, result.iterations as f64)?;
        write_row(lambda, "converged", None, f64::from(u8::from(result.converged)))?;
        write_row(
            lambda,
            "nonzero_loadings",
            None,
            result.nonzero_loadings() as f64,
        )?;
        if let Ok(vol) = orthogonality_volume(&result.y) {
            write_row(lambda, "vol", None, vol)?;
        }
        if let Ok(rep) = variance_report(&data, &result.z) {
            write_row(lambda, "pev_subspVar", None, rep.pev_subspace)?;
            write_row(lambda, "pev_optVar", None, rep.pev_optimal)?;
            write_row(lambda, "pev_adjVar", None, rep.pev_adjusted)?;
            write_row(lambda, "pev_QRnormVar", None, rep.pev_qr_normalized)?;
            write_row(lambda, "pev_UPnormVar", None, rep.pev_up_normalized)?;
            for (j, theta) in rep.theta.optimal.iter().enumerate() {
                write_row(lambda, "theta_optVar", Some(j + 1), *theta)?;
            }
        }
    }
    out.flush()?;
    println!(
        "swept {} lambda values, wrote {}",
        grid.len(),
        path.display()
    );
    Ok(())
}

fn read_spec(path: &Path) -> Result<ExperimentSpec> {
    let file = File::open(path)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    let spec: ExperimentSpec = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    spec.validate().map_err(CliError::from)?;
    Ok(spec)
}

pub fn bench(args: BenchArgs) -> Result<()> {
    let spec = read_spec(&args.spec)?;
    let result = run_experiment(&spec).map_err(CliError::from)?;
    ensure_out_dir(&args.out_dir)?;

    let csv_path = args.out_dir.join("results.csv");
    let csv_file = File::create(&csv_path)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", csv_path.display())))?;
    write_long_csv(&result, BufWriter::new(csv_file))?;

    let ranking = if spec.algorithms.len() >= 2 {
        Some(ranking_tables(&result, &args.epsilons)?)
    } else {
        None
    };
    let json_path = args.out_dir.join("summary.json");
    let json_file = File::create(&json_path)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", json_path.display())))?;
    write_summary_json(&result, ranking.as_ref(), BufWriter::new(json_file))?;

    let failures = result.cells.iter().filter(|c| c.error.is_some()).count();
    println!(
        "ran {} cells ({} failed), wrote {} and {}",
        result.cells.len(),
        failures,
        csv_path.display(),
        json_path.display()
    );
    Ok(())
}

pub fn compare_groups(args: CompareArgs) -> Result<()> {
    let spec = read_spec(&args.spec)?;
    let pair = scalar_vs_group(&spec).map_err(CliError::from)?;
    ensure_out_dir(&args.out_dir)?;

    for (name, result) in [("group", &pair.group), ("scalar", &pair.scalar)] {
        let csv_path = args.out_dir.join(format!("{name}_results.csv"));
        let file = File::create(&csv_path)
            .map_err(|e| CliError::data(format!("cannot create {}: {e}", csv_path.display())))?;
        write_long_csv(result, BufWriter::new(file))?;

        let json_path = args.out_dir.join(format!("{name}_summary.json"));
        let file = File::create(&json_path)
            .map_err(|e| CliError::data(format!("cannot create {}: {e}", json_path.display())))?;
        write_summary_json(result, None, BufWriter::new(file))?;
    }
    println!(
        "wrote group/scalar results and summaries under {}",
        args.out_dir.display()
    );
    Ok(())
}
