//! Report builders behind the `qevents` binary.
//!
//! Every subcommand produces a JSON report
//! `{schema_version, command, config, results}` (plus `duration_seconds`,
//! added by the binary unless `--no-timing` is given) and an equivalent CSV
//! table. Reports for a fixed configuration and seed are byte-identical
//! apart from the duration field.
//!
//! Monte Carlo replicas: replica `r` of a run with seed `s` draws from a
//! ChaCha8 stream seeded with `s` and stream number `r`; the runs are split
//! as evenly as possible with the first replicas taking the remainder.

pub mod scenario;

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use qevents_core::ensemble::{
    self, matching_width, packet_mixture_density, h_lambda_formula, thermal_density, EnsembleError,
    LatticeModel, PacketFamily, ReferenceComparison,
};
use qevents_core::epr::{self, build_epr, joint_distribution, sample_outcomes, Direction, OUTCOME_PAIRS};
use qevents_core::quasilocal::{self, spread_sweep, MomentumGrid, QuasilocalError, SweepConfig};

pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or unreadable input: exit code 2.
    Usage(String),
    /// A scenario or model invariant does not hold: exit code 3.
    Invariant(String),
    /// Anything else: exit code 1.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Invariant(_) => 3,
            CliError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violated: {m}"),
            CliError::Internal(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Seed for all sampling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Monte Carlo runs.
    #[arg(long, global = true, default_value_t = 100_000)]
    pub runs: u64,
    /// Parallel replicas sharing the runs.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub replicas: u64,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Leave the wall-clock duration out of the report.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub no_timing: bool,
}

/// A finished report and its CSV rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub report: Value,
    pub csv: String,
    /// Extra files requested by the command, with their contents.
    pub side_files: Vec<(PathBuf, String)>,
}

impl Output {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.report).expect("reports serialize");
                s.push('\n');
                s
            }
            Format::Csv => self.csv.clone(),
        }
    }

    pub fn set_duration(&mut self, seconds: f64) {
        if let Value::Object(map) = &mut self.report {
            map.insert("duration_seconds".into(), json!(seconds));
        }
    }
}

fn report(command: &str, common: &Common, args: &impl Serialize, results: &impl Serialize) -> Value {
    let mut config = serde_json::to_value(common).expect("config serializes");
    if let (Value::Object(c), Value::Object(a)) = (&mut config, serde_json::to_value(args).expect("args serialize")) {
        c.extend(a);
    }
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "results": results,
    })
}

/// Shortest round-trip decimal form, as in the JSON reports.
pub(crate) fn num(x: f64) -> String {
    Value::from(x).to_string()
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn angle(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = v.parse().map_err(|e| format!("{e}"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err("angle must be finite".into())
    }
}

fn polar_angle(v: &str) -> std::result::Result<f64, String> {
    let x = angle(v)?;
    if (0.0..=180.0).contains(&x) {
        Ok(x)
    } else {
        Err(format!("{x} is outside 0..=180 degrees"))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EprArgs {
    /// Angle between the two magnets in degrees (repeatable).
    #[arg(long = "theta", value_parser = polar_angle, value_delimiter = ',',
          default_values_t = [0.0, 30.0, 60.0, 90.0, 120.0, 180.0])]
    pub theta_deg: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Probabilities {
    pub p_pp: f64,
    pub p_pm: f64,
    pub p_mp: f64,
    pub p_mm: f64,
    #[serde(rename = "E")]
    pub e: f64,
}

impl Probabilities {
    fn from_array(p: [f64; 4]) -> Self {
        Self {
            p_pp: p[0],
            p_pm: p[1],
            p_mp: p[2],
            p_mm: p[3],
            e: p[0] + p[3] - p[1] - p[2],
        }
    }

    fn as_array(&self) -> [f64; 4] {
        [self.p_pp, self.p_pm, self.p_mp, self.p_mm]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EprRecord {
    pub theta_deg: f64,
    #[serde(flatten)]
    pub analytic: Probabilities,
    pub counts: [u64; 4],
    pub empirical: Probabilities,
    pub max_deviation: f64,
    pub within_three_sigma: bool,
}

/// Whether every count lies within three binomial standard deviations.
pub fn within_three_sigma(counts: &[u64], probabilities: &[f64], runs: u64) -> bool {
    let n = runs as f64;
    counts.iter().zip(probabilities).all(|(&c, &p)| {
        let sd = (n * p * (1.0 - p)).max(0.0).sqrt();
        (c as f64 - n * p).abs() <= 3.0 * sd + 1e-9
    })
}

pub fn run_epr(common: &Common, args: &EprArgs) -> Result<Output> {
    let records = args
        .theta_deg
        .iter()
        .map(|&theta| {
            let setup = build_epr(Direction::z(), Direction::in_plane_deg(theta));
            let analytic = joint_distribution(&setup).map_err(|e| CliError::Internal(e.to_string()))?;
            let counts = sample_outcomes(&setup, common.runs, common.seed, common.replicas)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            let freq = counts.map(|c| if common.runs == 0 { 0.0 } else { c as f64 / common.runs as f64 });
            let p = analytic.as_array();
            let max_deviation = p.iter().zip(&freq).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            Ok(EprRecord {
                theta_deg: theta,
                analytic: Probabilities::from_array(p),
                counts,
                empirical: Probabilities::from_array(freq),
                max_deviation,
                within_three_sigma: within_three_sigma(&counts, &p, common.runs),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let outcomes: Vec<String> = OUTCOME_PAIRS
        .iter()
        .map(|(a, b)| format!("{}{}", a.symbol(), b.symbol()))
        .collect();
    let csv = csv_table(
        &[
            "theta_deg", "p_pp", "p_pm", "p_mp", "p_mm", "E", "f_pp", "f_pm", "f_mp", "f_mm", "E_empirical",
            "max_deviation", "within_three_sigma",
        ],
        records.iter().map(|r| {
            let mut row = vec![num(r.theta_deg)];
            row.extend(r.analytic.as_array().iter().map(|&x| num(x)));
            row.push(num(r.analytic.e));
            row.extend(r.empirical.as_array().iter().map(|&x| num(x)));
            row.push(num(r.empirical.e));
            row.push(num(r.max_deviation));
            row.push(r.within_three_sigma.to_string());
            row
        }),
    );
    let results = json!({ "outcome_order": outcomes, "records": records });
    Ok(Output {
        report: report("epr", common, args, &results),
        csv,
        side_files: Vec::new(),
    })
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ChshArgs {
    /// First-side settings and second-side settings, in degrees within the
    /// x-z plane measured from +z.
    #[arg(long = "a", value_parser = angle, default_value_t = 0.0)]
    pub a_deg: f64,
    #[arg(long = "a-prime", value_parser = angle, default_value_t = 90.0)]
    pub a_prime_deg: f64,
    #[arg(long = "b", value_parser = angle, default_value_t = 225.0)]
    pub b_deg: f64,
    #[arg(long = "b-prime", value_parser = angle, default_value_t = 315.0)]
    pub b_prime_deg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChshResults {
    #[serde(rename = "S_quantum")]
    pub s_quantum: f64,
    #[serde(rename = "S_classical_max")]
    pub s_classical_max: f64,
    pub gap: f64,
    pub correlations: [f64; 4],
}

pub fn run_chsh(common: &Common, args: &ChshArgs) -> Result<Output> {
    let [a, a2, b, b2] = [args.a_deg, args.a_prime_deg, args.b_deg, args.b_prime_deg].map(Direction::in_plane_deg);
    let e = |x, y| epr::correlation(&build_epr(x, y)).map_err(|e| CliError::Internal(e.to_string()));
    let correlations = [e(a, b)?, e(a, b2)?, e(a2, b)?, e(a2, b2)?];
    let s_quantum = epr::chsh(a, a2, b, b2).map_err(|e| CliError::Internal(e.to_string()))?;
    let s_classical_max = epr::best_classical(a, a2, b, b2);
    let results = ChshResults {
        s_quantum,
        s_classical_max,
        gap: s_quantum.abs() - s_classical_max,
        correlations,
    };
    let csv = csv_table(
        &["S_quantum", "S_classical_max", "gap", "E_ab", "E_ab_prime", "E_a_prime_b", "E_a_prime_b_prime"],
        [vec![
            num(results.s_quantum),
            num(results.s_classical_max),
            num(results.gap),
            num(correlations[0]),
            num(correlations[1]),
            num(correlations[2]),
            num(correlations[3]),
        ]],
    );
    Ok(Output {
        report: report("chsh", common, args, &results),
        csv,
        side_files: Vec::new(),
    })
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ThermalArgs {
    /// Inverse temperature in 1/erg; protons at 1 K when absent.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Particle mass in grams.
    #[arg(long, default_value_t = ensemble::PROTON_MASS_G)]
    pub mass: f64,
    #[arg(long, default_value_t = ensemble::DEFAULT_SITES)]
    pub sites: usize,
    /// Box length in cm; 48 matching widths when absent.
    #[arg(long = "box")]
    pub box_length: Option<f64>,
    #[arg(long, default_value_t = ensemble::HBAR_CGS)]
    pub hbar: f64,
    /// Write both momentum diagonals as CSV to this file.
    #[arg(long)]
    #[serde(skip)]
    pub diagonals: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThermalResults {
    pub sigma_star: f64,
    pub fitted_sigma: f64,
    pub residual_sup_norm: f64,
    pub max_off_diagonal: f64,
    pub reference_lambda: f64,
    pub ratio: f64,
    pub within_factor_4: bool,
    pub h_formula_lambda: f64,
    pub box_length: f64,
    pub beta: f64,
}

pub fn run_thermal(common: &Common, args: &ThermalArgs) -> Result<Output> {
    let usage = |e: EnsembleError| CliError::Usage(e.to_string());
    let beta = args
        .beta
        .unwrap_or(1.0 / ensemble::BOLTZMANN_ERG_PER_K);
    if args.sites < 2 {
        return Err(CliError::Usage(format!("--sites must be at least 2, got {}", args.sites)));
    }
    let model = match args.box_length {
        Some(l) => LatticeModel::new(args.sites, l, args.mass, args.hbar, beta),
        None => LatticeModel::with_default_box(args.sites, args.mass, args.hbar, beta),
    }
    .map_err(usage)?;
    let fit = matching_width(&model).map_err(|e| match e {
        EnsembleError::NoMatch { .. } => CliError::Invariant(e.to_string()),
        other => usage(other),
    })?;
    let family = PacketFamily::uniform(&model, fit.sigma_star).map_err(usage)?;
    let mixture = packet_mixture_density(&model, &family, true);
    let thermal = thermal_density(&model);
    let cmp = ReferenceComparison::new(fit.sigma_star);
    let results = ThermalResults {
        sigma_star: fit.sigma_star,
        fitted_sigma: fit.fitted_sigma,
        residual_sup_norm: fit.residual_sup_norm,
        max_off_diagonal: mixture.max_off_diagonal(),
        reference_lambda: cmp.reference_lambda,
        ratio: cmp.ratio,
        within_factor_4: cmp.within_factor(4.0),
        h_formula_lambda: h_lambda_formula(model.beta, model.mass),
        box_length: model.box_length,
        beta: model.beta,
    };
    let mut side_files = Vec::new();
    if let Some(path) = &args.diagonals {
        let table = csv_table(
            &["p", "thermal", "mixture"],
            thermal
                .momenta
                .iter()
                .zip(&thermal.diagonal)
                .zip(&mixture.diagonal)
                .map(|((p, t), m)| vec![num(*p), num(*t), num(*m)]),
        );
        side_files.push((path.clone(), table));
    }
    let csv = csv_table(
        &["sigma_star", "residual_sup_norm", "reference_lambda", "ratio"],
        [vec![
            num(results.sigma_star),
            num(results.residual_sup_norm),
            num(results.reference_lambda),
            num(results.ratio),
        ]],
    );
    Ok(Output {
        report: report("thermal-ambiguity", common, args, &results),
        csv,
        side_files,
    })
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CellsArgs {
    /// Grid points (spacing 1, hbar 1).
    #[arg(long, default_value_t = 1 << 15)]
    pub sites: usize,
    /// Cell widths; L/4, L/8, .., L/512 when absent.
    #[arg(long = "cell-width", value_delimiter = ',')]
    pub cell_width: Vec<f64>,
    /// Momentum scale of the Gaussian kernel.
    #[arg(long = "tau-scale", default_value_t = 1.0)]
    pub tau_scale: f64,
    /// Smoothing length as a fraction of the cell width.
    #[arg(long, default_value_t = quasilocal::DEFAULT_SMOOTHING)]
    pub smoothing: f64,
}

pub const SLOPE_TOL: f64 = 0.05;

pub fn run_cells(common: &Common, args: &CellsArgs) -> Result<Output> {
    let usage = |e: QuasilocalError| CliError::Usage(e.to_string());
    let grid = MomentumGrid::new(args.sites, 1.0, 1.0).map_err(usage)?;
    let widths = if args.cell_width.is_empty() {
        SweepConfig::default_widths(&grid)
    } else {
        args.cell_width.clone()
    };
    let cfg = SweepConfig {
        grid,
        tau_scale: args.tau_scale,
        smoothing: args.smoothing,
    };
    let sweep = spread_sweep(&cfg, &widths).map_err(|e| match e {
        QuasilocalError::ZeroNormBranch { .. } => CliError::Invariant(e.to_string()),
        other => usage(other),
    })?;
    let slope = (sweep.rows.len() >= 2).then_some(sweep.slope);
    let results = json!({
        "rows": sweep.rows,
        "slope": slope,
        "slope_within_tolerance": slope.map(|s| (s + 1.0).abs() <= SLOPE_TOL),
        "h": grid.planck(),
    });
    let csv = csv_table(
        &["a", "dP", "dP_a_over_h", "coherence_defect", "slope"],
        sweep.rows.iter().map(|r| {
            vec![
                num(r.a),
                num(r.delta_p),
                num(r.delta_p_a_over_h),
                num(r.coherence_defect),
                slope.map_or(String::new(), num),
            ]
        }),
    );
    Ok(Output {
        report: report("cells", common, args, &results),
        csv,
        side_files: Vec::new(),
    })
}
