//! Command-line surface: `simulate`, `frechet`, `anova` and `pca`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use covtransport_core::simgen::{
    growth_style_bases, make_barycentric_family, midpoint_grid, origin_covariance, perturbed_family,
    sample_gaussian_curves, GenModelConfig, PerturbConfig, PerturbKind,
};
use covtransport_core::{
    admissible_range, baseline_sqrt_test, basis_reduce, bw_distance, empirical_covariance, frechet_mean,
    permutation_test, principal_mode_samples, stream_rng, tangent_pca, AnovaConfig, BasisReduction, Combine,
    CovOperator, CurveGroupSet, DescentConfig, Mat, NormKind, RankPolicy, TransportResult,
};

use crate::io::{self, IoError};
use crate::report::{write_report, RunReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{name}: {0}", name = .0.name())]
    Core(#[from] covtransport_core::Error),
}

impl CliError {
    /// 2 usage, 3 bad data or files, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(IoError::Data { source, .. }) | CliError::Core(source) => {
                if source.is_data_error() {
                    3
                } else {
                    4
                }
            }
            CliError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "covtransport", version, about = "Transport-based ANOVA and PCA for covariance operators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw grouped Gaussian curves from a simulation model.
    Simulate(SimulateArgs),
    /// Fréchet mean, optimal maps and deviations of the group covariances.
    Frechet(FrechetArgs),
    /// Permutation test for equality of the group covariances.
    Anova(AnovaArgs),
    /// Principal components in the tangent space at the Fréchet mean.
    Pca(PcaArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Generative,
    BerkeleyStyle,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Geodesic,
    Additive,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormArg {
    Op,
    Hs,
    Trace,
}

impl From<NormArg> for NormKind {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Op => NormKind::Operator,
            NormArg::Hs => NormKind::HilbertSchmidt,
            NormArg::Trace => NormKind::Trace,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    None,
    Sqrt,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineArg {
    Sum,
    Sup,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = Model::Generative)]
    pub model: Model,
    /// Grid size [default: 50 generative, 31 berkeley-style]
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub groups: usize,
    /// Curves per group.
    #[arg(long, default_value_t = 20)]
    pub curves: usize,
    /// χ² degrees of freedom of the map weights; `inf` gives identity maps.
    #[arg(long, default_value_t = 20.0)]
    pub concentration: f64,
    /// Von Mises concentration of the phase shift.
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    /// Sine terms in each map [default: dim/2]
    #[arg(long)]
    pub n_terms: Option<usize>,
    /// Make the maps average to the identity exactly.
    #[arg(long)]
    pub exact_mean_identity: bool,
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[arg(long, value_enum, default_value_t = Kind::Geodesic)]
    pub kind: Kind,
    /// Number of perturbed groups (berkeley-style).
    #[arg(long, default_value_t = 1)]
    pub perturbed: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// How many pooled principal directions to keep; the default keeps a
/// fraction 1 − 1e-8 of the energy.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ReduceArgs {
    #[arg(long, conflicts_with = "energy")]
    pub rank: Option<usize>,
    #[arg(long)]
    pub energy: Option<f64>,
}

impl ReduceArgs {
    fn policy(&self) -> RankPolicy {
        match (self.rank, self.energy) {
            (Some(m), _) => RankPolicy::FixedRank(m),
            (None, Some(tau)) => RankPolicy::Energy(tau),
            (None, None) => RankPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DescentArgs {
    /// Gradient tolerance relative to the trace of the starting point.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
}

impl DescentArgs {
    fn config(&self) -> DescentConfig {
        DescentConfig {
            max_iters: self.max_iters,
            grad_tol: self.tol,
            ..DescentConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FrechetArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub reduce: ReduceArgs,
    #[command(flatten)]
    pub descent: DescentArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnovaArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = NormArg::Hs)]
    pub norm: NormArg,
    #[arg(long, default_value_t = 200)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Baseline::None)]
    pub baseline: Baseline,
    /// Sum of squared norms, or their maximum over groups.
    #[arg(long, value_enum, default_value_t = CombineArg::Sum)]
    pub combine: CombineArg,
    #[command(flatten)]
    pub reduce: ReduceArgs,
    #[command(flatten)]
    pub descent: DescentArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PcaArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub components: usize,
    /// Points along each principal geodesic.
    #[arg(long, default_value_t = 5)]
    pub mode_steps: usize,
    #[command(flatten)]
    pub reduce: ReduceArgs,
    #[command(flatten)]
    pub descent: DescentArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `argv`, runs the command and returns the process exit code,
/// reporting errors on stderr.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli.command) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: &Command) -> Result<RunReport, CliError> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Frechet(a) => frechet(a),
        Command::Anova(a) => anova(a),
        Command::Pca(a) => pca(a),
    }
}

fn config_echo<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments are serializable")
}

struct Timer(Instant);

impl Timer {
    fn start() -> Self {
        Timer(Instant::now())
    }

    fn lap(&mut self, report: &mut RunReport, phase: &str) {
        report.timings.insert(phase.to_string(), self.0.elapsed().as_secs_f64());
        self.0 = Instant::now();
    }
}

fn simulate(a: &SimulateArgs) -> Result<RunReport, CliError> {
    let mut report = RunReport::new("simulate", Some(a.seed), config_echo(a));
    let mut timer = Timer::start();
    if a.groups == 0 || a.curves < 2 {
        return Err(CliError::Usage("--groups must be ≥ 1 and --curves ≥ 2".into()));
    }
    let (covs, extra) = match a.model {
        Model::Generative => {
            let q = a.dim.unwrap_or(50);
            let mut cfg = GenModelConfig::new(q, a.groups);
            cfg.concentration = a.concentration;
            cfg.vonmises_kappa = a.kappa;
            cfg.n_terms = a.n_terms.unwrap_or(cfg.n_terms);
            cfg.exact_mean_identity = a.exact_mean_identity;
            cfg.seed = a.seed;
            if q == 0 {
                return Err(CliError::Usage("--dim must be positive".into()));
            }
            let origin = origin_covariance(q, &mut stream_rng(a.seed, 0));
            let (maps, covs) = make_barycentric_family(&cfg, &origin, &mut stream_rng(a.seed, 1))?;
            (covs, Some((origin, maps)))
        }
        Model::BerkeleyStyle => {
            let q = a.dim.unwrap_or(31);
            if q == 0 {
                return Err(CliError::Usage("--dim must be positive".into()));
            }
            if a.perturbed > a.groups {
                return Err(CliError::Usage(format!(
                    "--perturbed {} exceeds --groups {}",
                    a.perturbed, a.groups
                )));
            }
            let (m, f) = growth_style_bases(q);
            let cfg = PerturbConfig {
                gamma: a.gamma,
                kind: match a.kind {
                    Kind::Geodesic => PerturbKind::Geodesic,
                    Kind::Additive => PerturbKind::Additive,
                },
                k1: a.perturbed,
                k2: a.groups - a.perturbed,
            };
            (perturbed_family(&m, Some(&f), &cfg)?, None)
        }
    };
    let q = covs[0].dim();
    let labels: Vec<String> = (1..=covs.len()).map(|j| format!("g{j}")).collect();
    let groups = covs
        .iter()
        .enumerate()
        .map(|(j, c)| sample_gaussian_curves(c, a.curves, &mut stream_rng(a.seed, 2 + j as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let set = CurveGroupSet::new(labels.clone(), groups, Some(midpoint_grid(q)))?;
    timer.lap(&mut report, "sample");

    std::fs::create_dir_all(&a.out).map_err(|e| IoError::io(&a.out, e))?;
    io::write_curves(a.out.join("curves.csv"), &set)?;
    let mut files = vec!["curves.csv".to_string()];
    for (j, c) in covs.iter().enumerate() {
        let name = format!("cov_{}.csv", j + 1);
        io::write_matrix(a.out.join(&name), c)?;
        files.push(name);
    }
    if let Some((origin, maps)) = &extra {
        io::write_matrix(a.out.join("origin.csv"), origin)?;
        files.push("origin.csv".into());
        for (j, t) in maps.iter().enumerate() {
            let name = format!("true_map_{}.csv", j + 1);
            io::write_matrix(a.out.join(&name), t)?;
            files.push(name);
        }
    }
    report.results = json!({
        "labels": labels,
        "dim": q,
        "curves_per_group": a.curves,
        "files": files,
    });
    timer.lap(&mut report, "write");
    write_report(&report, &a.out)?;
    Ok(report)
}

struct Prepared {
    set: CurveGroupSet,
    reduction: BasisReduction,
    covs: Vec<CovOperator>,
}

fn prepare(input: &Path, reduce: &ReduceArgs, cfg: &AnovaConfig, report: &mut RunReport) -> Result<Prepared, CliError> {
    let set = io::load_curves(input)?;
    let reduction = basis_reduce(&set, reduce.policy())?;
    if reduction.rank_capped {
        report.warnings.push(format!(
            "requested rank exceeds the pooled rank {}; reduced to {}",
            reduction.pooled_rank,
            reduction.basis.cols()
        ));
    }
    let covs = reduction
        .reduced
        .groups()
        .iter()
        .map(|g| empirical_covariance(g, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Prepared { set, reduction, covs })
}

fn reduction_summary(p: &Prepared) -> serde_json::Value {
    json!({
        "labels": p.set.labels(),
        "group_sizes": p.set.group_sizes(),
        "input_dim": p.set.dim(),
        "reduced_dim": p.reduction.basis.cols(),
        "pooled_rank": p.reduction.pooled_rank,
        "rank_capped": p.reduction.rank_capped,
    })
}

fn transport_summary(res: &TransportResult, covs: &[CovOperator]) -> Result<serde_json::Value, CliError> {
    let distances = covs
        .iter()
        .map(|c| bw_distance(&res.mean, c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(json!({
        "iterations": res.iterations,
        "converged": res.converged,
        "grad_norm": res.grad_norm,
        "mean_identity_residual": res.mean_identity_residual(),
        "functional_history": res.functional_history,
        "distances_to_mean": distances,
    }))
}

fn frechet(a: &FrechetArgs) -> Result<RunReport, CliError> {
    let mut report = RunReport::new("frechet", None, config_echo(a));
    let mut timer = Timer::start();
    let p = prepare(&a.input, &a.reduce, &AnovaConfig::default(), &mut report)?;
    timer.lap(&mut report, "load");
    let res = frechet_mean(&p.covs, &a.descent.config())?;
    if !res.converged {
        report.warnings.push(format!("descent did not converge in {} iterations", res.iterations));
    }
    timer.lap(&mut report, "descent");

    std::fs::create_dir_all(&a.out).map_err(|e| IoError::io(&a.out, e))?;
    io::write_matrix(a.out.join("mean.csv"), &res.mean)?;
    io::write_matrix(a.out.join("basis.csv"), &p.reduction.basis)?;
    for (j, (t, d)) in res.maps.iter().zip(&res.deviations).enumerate() {
        io::write_matrix(a.out.join(format!("map_{}.csv", j + 1)), t)?;
        io::write_matrix(a.out.join(format!("delta_{}.csv", j + 1)), d)?;
    }
    report.results = json!({
        "data": reduction_summary(&p),
        "transport": transport_summary(&res, &p.covs)?,
    });
    timer.lap(&mut report, "write");
    write_report(&report, &a.out)?;
    Ok(report)
}

fn anova(a: &AnovaArgs) -> Result<RunReport, CliError> {
    let mut report = RunReport::new("anova", Some(a.seed), config_echo(a));
    let mut timer = Timer::start();
    let cfg = AnovaConfig {
        norm: a.norm.into(),
        permutations: a.permutations,
        seed: a.seed,
        descent: a.descent.config(),
        combine: match a.combine {
            CombineArg::Sum => Combine::Sum,
            CombineArg::Sup => Combine::Supremum,
        },
        ..AnovaConfig::default()
    };
    let p = prepare(&a.input, &a.reduce, &cfg, &mut report)?;
    timer.lap(&mut report, "load");
    let res = permutation_test(&p.reduction.reduced, &cfg)?;
    if res.converged_fraction < 1.0 {
        report.warnings.push(format!(
            "{:.1}% of permutation replicates did not converge",
            100.0 * (1.0 - res.converged_fraction)
        ));
    }
    timer.lap(&mut report, "permutations");
    let baseline = match a.baseline {
        Baseline::None => None,
        Baseline::Sqrt => {
            let b = baseline_sqrt_test(&p.reduction.reduced, &cfg)?;
            timer.lap(&mut report, "baseline");
            Some(b)
        }
    };

    std::fs::create_dir_all(&a.out).map_err(|e| IoError::io(&a.out, e))?;
    io::write_column(a.out.join("perm_stats.csv"), &res.perm_statistics)?;
    if let Some(b) = &baseline {
        io::write_column(a.out.join("perm_stats_sqrt.csv"), &b.perm_statistics)?;
    }
    report.results = json!({
        "data": reduction_summary(&p),
        "statistic": res.statistic,
        "p_value": res.p_value,
        "norm": res.norm,
        "permutations": res.perm_statistics.len(),
        "converged_fraction": res.converged_fraction,
        "baseline": baseline.as_ref().map(|b| json!({
            "statistic": b.statistic,
            "p_value": b.p_value,
        })),
    });
    timer.lap(&mut report, "write");
    write_report(&report, &a.out)?;
    Ok(report)
}

/// Steps along a component: ±2 standard deviations, kept inside 90% of the
/// range where the geodesic stays in the cone.
fn mode_steps(eigenvalue: f64, range: (f64, f64), steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![0.0];
    }
    let half = (2.0 * eigenvalue.sqrt()).min(0.9 * range.1).min(0.9 * -range.0);
    (0..steps)
        .map(|i| -half + 2.0 * half * i as f64 / (steps - 1) as f64)
        .collect()
}

fn pca(a: &PcaArgs) -> Result<RunReport, CliError> {
    let mut report = RunReport::new("pca", None, config_echo(a));
    let mut timer = Timer::start();
    if a.components == 0 {
        return Err(CliError::Usage("--components must be at least 1".into()));
    }
    let p = prepare(&a.input, &a.reduce, &AnovaConfig::default(), &mut report)?;
    timer.lap(&mut report, "load");
    let res = frechet_mean(&p.covs, &a.descent.config())?;
    if !res.converged {
        report.warnings.push(format!("descent did not converge in {} iterations", res.iterations));
    }
    let pcs = tangent_pca(&res.deviations, &res.mean)?;
    let m = a.components.min(pcs.num_components());
    if m < a.components {
        report.warnings.push(format!(
            "requested {} components but only {} are nonzero (at most K - 1 = {}); truncated",
            a.components,
            pcs.num_components(),
            p.covs.len() - 1
        ));
    }
    timer.lap(&mut report, "pca");

    std::fs::create_dir_all(&a.out).map_err(|e| IoError::io(&a.out, e))?;
    let mut header = vec!["group".to_string()];
    header.extend((1..=m).map(|k| format!("pc{k}")));
    let rows: Vec<(String, Vec<f64>)> = p
        .set
        .labels()
        .iter()
        .enumerate()
        .map(|(j, l)| (l.clone(), (0..m).map(|k| pcs.scores[(j, k)]).collect()))
        .collect();
    io::write_labelled_rows(a.out.join("scores.csv"), &header, &rows)?;
    let eig_rows: Vec<(String, Vec<f64>)> = pcs
        .eigenvalues
        .iter()
        .zip(&pcs.variance_proportions)
        .enumerate()
        .map(|(k, (l, v))| (format!("{}", k + 1), vec![*l, *v]))
        .collect();
    io::write_labelled_rows(
        a.out.join("eigenvalues.csv"),
        &["component".into(), "eigenvalue".into(), "proportion".into()],
        &eig_rows,
    )?;

    let basis = &p.reduction.basis;
    let mut modes = Vec::with_capacity(m);
    for k in 0..m {
        let range = admissible_range(&pcs.components[k])?;
        let ts = mode_steps(pcs.eigenvalues[k], range, a.mode_steps);
        let samples = principal_mode_samples(&pcs, k, &ts)?;
        let path = a.out.join(format!("mode_{}.csv", k + 1));
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| IoError::io(&path, e))?);
        for (t, c) in ts.iter().zip(&samples) {
            let lifted: Mat = basis.matmul(c).matmul_t(basis);
            let mut row = vec![*t];
            row.extend_from_slice(lifted.as_slice());
            io::write_row(&mut w, &row).map_err(|e| IoError::io(&path, e))?;
        }
        std::io::Write::flush(&mut w).map_err(|e| IoError::io(&path, e))?;
        modes.push(json!({ "t": ts, "admissible_range": [range.0, range.1] }));
    }
    report.results = json!({
        "data": reduction_summary(&p),
        "transport": transport_summary(&res, &p.covs)?,
        "eigenvalues": pcs.eigenvalues,
        "variance_proportions": pcs.variance_proportions,
        "components": m,
        "modes": modes,
        "grid_dim": basis.rows(),
    });
    timer.lap(&mut report, "write");
    write_report(&report, &a.out)?;
    Ok(report)
}
