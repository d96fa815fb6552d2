//! Subcommand bodies. Each reads its inputs through `Run`, writes every output
//! through `Run`, and leaves the manifest to the caller.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use aggrex_core::chain::{
    bin_trip_records, estimate_transition, generate_block_chain, generate_ground_truth, simulate_trajectory,
    EmpiricalChain,
};
use aggrex_core::dense::{DenseMatrix, ProbVector, RngStream};
use aggrex_core::diagnostics::{diagnose, DiagnosticsRecord};
use aggrex_core::experiments::{geometric_grid, partition_states, run_path, PartitionMethod, PathConfig, PathPoint};
use aggrex_core::io::{
    format_float, read_matrix_csv, read_trajectory, read_trip_records, read_vector_csv, write_matrix_csv,
    write_trajectory, write_vector_csv,
};
use aggrex_core::objective::{FactorPair, LossContext};
use aggrex_core::rank::{adapt_rank, Certificate, RankEvent, SolveReport, Termination};

use crate::error::CliError;
use crate::run::Run;

fn matrix_bytes(m: &DenseMatrix) -> Vec<u8> {
    let mut buf = Vec::new();
    write_matrix_csv(&mut buf, m).expect("writing to memory");
    buf
}

fn vector_bytes(v: &[f64]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_vector_csv(&mut buf, v).expect("writing to memory");
    buf
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Numeric(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn read_matrix(run: &mut Run, path: &Path) -> Result<DenseMatrix, CliError> {
    let bytes = run.read(path)?;
    read_matrix_csv(bytes.as_slice()).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn read_chain(run: &mut Run, p: &Path, xi: &Path) -> Result<EmpiricalChain, CliError> {
    let p_hat = read_matrix(run, p)?;
    let bytes = run.read(xi)?;
    let xi_hat = read_vector_csv(bytes.as_slice()).map_err(|e| CliError::Input(format!("{}: {e}", xi.display())))?;
    Ok(EmpiricalChain::new(p_hat, ProbVector::new(xi_hat)?)?)
}

fn write_chain(run: &mut Run, chain: &EmpiricalChain) -> Result<(), CliError> {
    run.write("p_hat.csv", &matrix_bytes(chain.p_hat()))?;
    run.write("xi_hat.csv", &vector_bytes(chain.xi_hat()))
}

fn write_factors(run: &mut Run, fp: &FactorPair) -> Result<(), CliError> {
    run.write("u.csv", &matrix_bytes(fp.u()))?;
    run.write("v.csv", &matrix_bytes(fp.v()))
}

pub fn estimate(run: &mut Run, trajectory: &Path, states: Option<usize>) -> Result<(), CliError> {
    let bytes = run.read(trajectory)?;
    let traj = read_trajectory(bytes.as_slice(), states)
        .map_err(|e| CliError::Input(format!("{}: {e}", trajectory.display())))?;
    let chain = run.timed("estimate", |_| Ok(estimate_transition(&traj)))?;
    write_chain(run, &chain)
}

pub struct SynthArgs {
    pub d: Option<usize>,
    pub r: Option<usize>,
    pub n: usize,
    pub blocks: Option<Vec<usize>>,
}

pub fn synth(run: &mut Run, args: &SynthArgs) -> Result<(), CliError> {
    let mut rng = RngStream::new(run.seed);
    let (truth, labels) = match (&args.blocks, args.d, args.r) {
        (Some(sizes), None, None) => {
            let (gt, labels) = generate_block_chain(&mut rng, sizes)?;
            (gt, Some(labels))
        }
        (None, Some(d), Some(r)) => (generate_ground_truth(&mut rng, d, r)?, None),
        _ => {
            return Err(CliError::Input(
                "synth needs either --d and --r, or --blocks alone".into(),
            ))
        }
    };
    run.write("u_star.csv", &matrix_bytes(truth.u()))?;
    run.write("v_star.csv", &matrix_bytes(truth.v()))?;
    run.write("p_star.csv", &matrix_bytes(truth.p()))?;
    run.write("xi_star.csv", &vector_bytes(truth.xi()))?;
    if let Some(labels) = labels {
        let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
        run.write("blocks.csv", text.as_bytes())?;
    }
    if args.n > 0 {
        let traj = run.timed("simulate", |_| Ok(simulate_trajectory(&mut rng, &truth, args.n)?))?;
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &traj)?;
        run.write("trajectory.txt", &buf)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FactorFiles {
    u: &'static str,
    v: &'static str,
}

#[derive(Serialize)]
struct SolveDocument<'a> {
    lambda: f64,
    config: std::collections::BTreeMap<String, String>,
    seed: u64,
    s0: usize,
    rank: usize,
    objective: f64,
    palm_iterations: usize,
    termination: &'a Termination,
    events: &'a [RankEvent],
    last_certificate: &'a Option<Certificate>,
    diagnostics: Option<DiagnosticsRecord>,
    diagnostics_error: Option<String>,
    factors: FactorFiles,
    traces: Vec<String>,
}

fn write_report(
    run: &mut Run,
    ctx: &LossContext,
    report: &SolveReport,
    s0: usize,
    truth: Option<&DenseMatrix>,
    rng: &mut RngStream,
) -> Result<(), CliError> {
    write_factors(run, &report.factors)?;
    let mut traces = Vec::new();
    for (k, trace) in report.palm_traces().enumerate() {
        let name = format!("traces/palm_{k:03}.csv");
        let mut buf = Vec::new();
        trace.write_csv(&mut buf)?;
        run.write(&name, &buf)?;
        traces.push(name);
    }
    let restarts = run.config.count("diagnostics_restarts")?;
    let (diagnostics, diagnostics_error) = match run.timed("diagnose", |_| {
        Ok(diagnose(ctx, &report.factors, truth, None, rng, restarts))
    })? {
        Ok(d) => (Some(d), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let doc = SolveDocument {
        lambda: ctx.lambda(),
        config: run.config.echo(),
        seed: run.seed,
        s0,
        rank: report.rank(),
        objective: report.objective,
        palm_iterations: report.palm_iterations(),
        termination: &report.termination,
        events: &report.events,
        last_certificate: &report.last_certificate,
        diagnostics,
        diagnostics_error,
        factors: FactorFiles { u: "u.csv", v: "v.csv" },
        traces,
    };
    run.write("report.json", &json_bytes(&doc)?)
}

fn solve_chain(run: &mut Run, chain: EmpiricalChain, s0: usize, rng: &mut RngStream) -> Result<(LossContext, SolveReport), CliError> {
    let ctx = LossContext::new(chain, run.config.real("lambda")?).map_err(|e| CliError::Config(e.to_string()))?;
    let solver = run.config.solver()?;
    let rank = run.config.rank()?;
    let fp0 = FactorPair::random(rng, ctx.dim(), s0);
    let report = run.timed("solve", |_| Ok(adapt_rank(&ctx, &fp0, &solver, &rank, rng)?))?;
    Ok((ctx, report))
}

fn fail_if_failed(report: &SolveReport) -> Result<(), CliError> {
    match &report.termination {
        Termination::Failed { message } => Err(CliError::Numeric(message.clone())),
        _ => Ok(()),
    }
}

pub fn solve(run: &mut Run, p: &Path, xi: &Path, truth: Option<&Path>) -> Result<(), CliError> {
    let chain = read_chain(run, p, xi)?;
    let truth = truth.map(|t| read_matrix(run, t)).transpose()?;
    let mut rng = RngStream::new(run.seed);
    let s0 = run.config.count("s0")?;
    let (ctx, report) = solve_chain(run, chain, s0, &mut rng)?;
    write_report(run, &ctx, &report, s0, truth.as_ref(), &mut rng)?;
    fail_if_failed(&report)
}

#[derive(Serialize)]
struct PathDocument<'a> {
    grid: &'a [f64],
    lambda_star: Option<f64>,
    #[serde(rename = "relRE_star")]
    rel_re_star: Option<f64>,
    points: &'a [PathPoint],
}

pub fn path(run: &mut Run, p: &Path, xi: &Path, truth: Option<&Path>, grid: Option<Vec<f64>>) -> Result<(), CliError> {
    let chain = read_chain(run, p, xi)?;
    let truth = truth.map(|t| read_matrix(run, t)).transpose()?;
    let grid = match grid {
        Some(g) => g,
        None => geometric_grid(
            run.config.real("grid_hi")?,
            run.config.real("grid_lo")?,
            run.config.count("grid_per_decade")?,
        )
        .map_err(|e| CliError::Config(e.to_string()))?,
    };
    let cfg = PathConfig {
        solver: run.config.solver()?,
        rank: run.config.rank()?,
        s0: run.config.count("s0")?,
        diagnostics: run.config.flag("path_diagnostics")?,
        diagnostics_restarts: run.config.count("diagnostics_restarts")?,
    };
    let mut rng = RngStream::new(run.seed);
    let result = run.timed("path", |_| Ok(run_path(&chain, &grid, &cfg, truth.as_ref(), &mut rng)?))?;
    let mut csv = Vec::new();
    result.write_csv(&mut csv)?;
    run.write("path.csv", &csv)?;
    let doc = PathDocument {
        grid: &grid,
        lambda_star: result.lambda_star,
        rel_re_star: result.rel_re_star,
        points: &result.points,
    };
    run.write("path.json", &json_bytes(&doc)?)
}

pub enum PartitionInput<'a> {
    Trips(&'a Path),
    Chain { p: &'a Path, xi: &'a Path, coords: Option<&'a Path> },
}

pub fn partition(run: &mut Run, input: PartitionInput, k: usize, method: PartitionMethod) -> Result<(), CliError> {
    let (chain, coords): (EmpiricalChain, Option<Vec<(String, String)>>) = match input {
        PartitionInput::Trips(path) => {
            let bytes = run.read(path)?;
            let records = read_trip_records(bytes.as_slice(), run.config.flag("trips_header")?)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let binned = bin_trip_records(
                &records,
                run.config.real("cell")?,
                run.config.bbox()?,
                run.config.real("min_freq")?,
            )?;
            write_chain(run, &binned.chain)?;
            let coords = binned.cells.iter().map(|c| (c.x.to_string(), c.y.to_string())).collect();
            (binned.chain, Some(coords))
        }
        PartitionInput::Chain { p, xi, coords } => {
            let chain = read_chain(run, p, xi)?;
            let coords = match coords {
                Some(path) => {
                    let m = read_matrix(run, path)?;
                    if m.shape() != (chain.dim(), 2) {
                        return Err(CliError::Input(format!(
                            "{}: expected {} rows of x,y, found {:?}",
                            path.display(),
                            chain.dim(),
                            m.shape()
                        )));
                    }
                    Some((0..m.rows()).map(|i| (format_float(m[(i, 0)]), format_float(m[(i, 1)]))).collect())
                }
                None => None,
            };
            (chain, coords)
        }
    };
    let mut rng = RngStream::new(run.seed);
    let factors = match method {
        PartitionMethod::Aggregation => {
            // Partition runs default to the early rule from a single column.
            if !run.config.is_explicit("stopping_rule") {
                run.config.set("stopping_rule", "early")?;
            }
            if !run.config.is_explicit("s0") {
                run.config.set("s0", "1")?;
            }
            let s0 = run.config.count("s0")?;
            let (ctx, report) = solve_chain(run, chain.clone(), s0, &mut rng)?;
            write_report(run, &ctx, &report, s0, None, &mut rng)?;
            fail_if_failed(&report)?;
            Some(report.factors)
        }
        PartitionMethod::SvdBaseline => None,
    };
    let replicates = run.config.count("kmeans_replicates")?;
    let result = run.timed("cluster", |_| {
        Ok(partition_states(&chain, factors.as_ref(), k, method, replicates, &mut rng)?)
    })?;
    run.write("embedding.csv", &matrix_bytes(&result.embedding))?;
    let mut csv = String::from("state,x,y,cluster\n");
    for (i, label) in result.labels.iter().enumerate() {
        let (x, y) = coords.as_ref().map_or((String::new(), String::new()), |c| c[i].clone());
        writeln!(csv, "{i},{x},{y},{label}").expect("writing to a string");
    }
    run.write("partition.csv", csv.as_bytes())
}

pub struct DiagnoseArgs<'a> {
    pub p: &'a Path,
    pub xi: &'a Path,
    pub u: &'a Path,
    pub v: &'a Path,
    pub truth: Option<&'a Path>,
    pub rank: Option<usize>,
}

pub fn diagnose_cmd(run: &mut Run, args: &DiagnoseArgs) -> Result<(), CliError> {
    let chain = read_chain(run, args.p, args.xi)?;
    let u = read_matrix(run, args.u)?;
    let v = read_matrix(run, args.v)?;
    let truth = args.truth.map(|t| read_matrix(run, t)).transpose()?;
    let fp = FactorPair::new(u, v)?;
    let ctx = LossContext::new(chain, run.config.real("lambda")?).map_err(|e| CliError::Config(e.to_string()))?;
    let mut rng = RngStream::new(run.seed);
    let restarts = run.config.count("diagnostics_restarts")?;
    let record = run.timed("diagnose", |_| {
        Ok(diagnose(&ctx, &fp, truth.as_ref(), args.rank, &mut rng, restarts)?)
    })?;
    run.write("diagnostics.json", &json_bytes(&record)?)
}
