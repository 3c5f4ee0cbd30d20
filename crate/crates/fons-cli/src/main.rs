use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use fons::besov::{besov_seminorm, effective_exponent, structure_function, DirectionSet};
use fons::grid::{PeriodicGrid, TimeField};
use fons::harness::{
    materialize, run_experiment, threshold_sweep, write_report_dir, ExperimentConfig, FieldKind,
    FluxProbe, Integrability, RegimeVerdict, SetDescriptor,
};
use fons::io::{read_field_path, write_field_path};
use fons::numeric::{dyadic_ladder, fmt_g17};
use fons::sets::{default_dimension_ladder, minkowski_dimension};
use fons::synthesis::{verify_hypotheses, AmplitudeProfile};

#[derive(Parser)]
#[command(
    name = "fons",
    version,
    about = "Fractal singular sets, Hölder velocity fields, and energy-flux experiments on the torus"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// JSON config file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (the FONS_OUT environment variable wins over this)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Override the config's RNG seed
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Also print the JSON document written to the output directory
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SetKindArg {
    Empty,
    Full,
    PointCloud,
    Hyperplane,
    Cantor,
    GammaTarget,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a singular set, fit its Minkowski dimension, write the mask
    GenSet {
        #[command(flatten)]
        common: Common,
        /// Set generator (overrides the config's descriptor)
        #[arg(long, value_enum)]
        kind: Option<SetKindArg>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        /// Cantor recursion depth
        #[arg(long)]
        depth: Option<u32>,
        /// Cantor middle fraction removed per level
        #[arg(long)]
        removed: Option<f64>,
        /// Axes carrying the Cantor construction, comma separated
        #[arg(long, value_delimiter = ',')]
        axes: Option<Vec<usize>>,
        /// Point count for point-cloud sets
        #[arg(long)]
        count: Option<usize>,
        /// Normal axis for hyperplane sets
        #[arg(long)]
        axis: Option<usize>,
        /// Dimension target for gamma-target sets
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Synthesize a velocity field over a set and check the hypotheses
    GenField {
        #[command(flatten)]
        common: Common,
    },
    /// Besov seminorm, structure functions, and the effective exponent
    Besov {
        #[command(flatten)]
        common: Common,
        /// Analyze existing field artifacts instead of synthesizing
        #[arg(long = "field", value_name = "FONS")]
        fields: Vec<PathBuf>,
        /// Hölder exponent for the seminorm (required with --field)
        #[arg(long)]
        theta: Option<f64>,
        /// Lebesgue exponent for the seminorm and effective-exponent fit
        #[arg(long)]
        p: Option<f64>,
        /// Structure-function orders, comma separated
        #[arg(long, value_delimiter = ',')]
        orders: Option<Vec<f64>>,
        /// Time horizon when loading artifacts
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Mollified energy flux split at the singular set, over a δ = ε ladder
    Flux {
        #[command(flatten)]
        common: Common,
    },
    /// Full experiment: set, field, hypotheses, increment decomposition, verdict
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run the experiment across γ targets and report the α̂ trend
    Sweep {
        #[command(flatten)]
        common: Common,
        /// γ targets, comma separated (overrides the config's list)
        #[arg(long, value_delimiter = ',')]
        targets: Option<Vec<f64>>,
    },
}

impl Cmd {
    fn common(&self) -> &Common {
        match self {
            Cmd::GenSet { common, .. }
            | Cmd::GenField { common }
            | Cmd::Besov { common, .. }
            | Cmd::Flux { common }
            | Cmd::Run { common }
            | Cmd::Sweep { common, .. } => common,
        }
    }
}

/// Synthesis-only config: an experiment config minus the increment ladder.
#[derive(Clone, Deserialize)]
struct SynthConfig {
    d: usize,
    n: usize,
    theta: f64,
    #[serde(default = "default_r")]
    r: Integrability,
    kappa: f64,
    set: SetDescriptor,
    #[serde(default = "default_field")]
    field: FieldKind,
    #[serde(default = "default_slices")]
    slices: usize,
    #[serde(default = "default_horizon")]
    horizon: f64,
    #[serde(default = "default_amplitude")]
    amplitude: AmplitudeProfile,
    seed: u64,
}

fn default_r() -> Integrability {
    Integrability::Infinite
}

fn default_field() -> FieldKind {
    FieldKind::Singular
}

fn default_slices() -> usize {
    1
}

fn default_horizon() -> f64 {
    1.0
}

fn default_amplitude() -> AmplitudeProfile {
    AmplitudeProfile::Constant { value: 1.0 }
}

impl SynthConfig {
    /// The ladder fields are never read on the synthesis path; they are
    /// filled with placeholders to satisfy the struct.
    fn to_experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            d: self.d,
            n: self.n,
            theta: self.theta,
            r: self.r,
            kappa: self.kappa,
            set: self.set.clone(),
            field: self.field.clone(),
            slices: self.slices,
            horizon: self.horizon,
            h_ladder: Vec::new(),
            eps0: 0.25,
            amplitude: self.amplitude,
            seed: self.seed,
            flux: None,
        }
    }
}

#[derive(Deserialize)]
struct GenSetConfig {
    d: usize,
    n: usize,
    #[serde(default)]
    seed: u64,
    set: Option<SetDescriptor>,
    /// Explicit ε rungs for the dimension fit; the default ladder's coarse
    /// rungs swallow fine-level gaps and bias lacunary sets upward.
    #[serde(default)]
    ladder: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct BesovConfig {
    #[serde(flatten)]
    synth: SynthConfig,
    #[serde(default = "default_p")]
    p: f64,
    #[serde(default = "default_orders")]
    orders: Vec<f64>,
    #[serde(default)]
    ladder: Option<Vec<f64>>,
    #[serde(default = "default_extra_directions")]
    extra_directions: usize,
}

fn default_p() -> f64 {
    3.0
}

fn default_orders() -> Vec<f64> {
    vec![1.0, 2.0, 3.0]
}

fn default_extra_directions() -> usize {
    2
}

#[derive(Deserialize)]
struct FluxConfig {
    #[serde(flatten)]
    synth: SynthConfig,
    /// Either a top-level ladder or a full run config's probe block works.
    #[serde(default)]
    deltas: Vec<f64>,
    #[serde(default)]
    flux: Option<FluxProbe>,
}

impl FluxConfig {
    fn deltas(&self) -> anyhow::Result<&[f64]> {
        if !self.deltas.is_empty() {
            return Ok(&self.deltas);
        }
        if let Some(probe) = &self.flux {
            return Ok(&probe.deltas);
        }
        bail!("config carries no delta ladder (\"deltas\" or \"flux\": {{\"deltas\": ...}})")
    }
}

#[derive(Deserialize)]
struct SweepConfig {
    #[serde(flatten)]
    base: ExperimentConfig,
    #[serde(default)]
    targets: Vec<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Cmd) -> anyhow::Result<ExitCode> {
    let common = cmd.common();
    if let Some(workers) = common.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("initializing the worker pool")?;
    }
    let out = out_dir(common);
    match cmd {
        Cmd::GenSet {
            common,
            kind,
            d,
            n,
            depth,
            removed,
            axes,
            count,
            axis,
            gamma,
        } => {
            let file: Option<GenSetConfig> = common
                .config
                .as_deref()
                .map(load_config)
                .transpose()?;
            let d = d.or(file.as_ref().map(|c| c.d)).unwrap_or(1);
            let n = n
                .or(file.as_ref().map(|c| c.n))
                .context("--n (or a config with n) is required")?;
            let seed = common
                .seed
                .or(file.as_ref().map(|c| c.seed))
                .unwrap_or(0);
            let ladder = file.as_ref().and_then(|c| c.ladder.clone());
            let desc = match kind {
                Some(k) => descriptor_from_flags(k, d, depth, removed, axes, count, axis, gamma)?,
                None => file
                    .and_then(|c| c.set)
                    .context("a set descriptor is required: pass --kind or a config with a set")?,
            };
            cmd_gen_set(&out, &common, d, n, seed, desc, ladder)
        }
        Cmd::GenField { common } => {
            let mut cfg: SynthConfig = load_required(&common)?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            cmd_gen_field(&out, &common, &cfg)
        }
        Cmd::Besov {
            common,
            fields,
            theta,
            p,
            orders,
            horizon,
        } => {
            if !fields.is_empty() && common.config.is_some() {
                bail!("pass either --field artifacts or --config, not both");
            }
            if !fields.is_empty() {
                let theta =
                    theta.context("--theta is required when analyzing field artifacts")?;
                let slices = fields
                    .iter()
                    .map(read_field_path)
                    .collect::<fons::Result<Vec<_>>>()?;
                let v = TimeField::new(slices, horizon.unwrap_or(1.0))?;
                let params = BesovParams {
                    theta,
                    p: p.unwrap_or_else(default_p),
                    orders: orders.unwrap_or_else(default_orders),
                    ladder: None,
                    extra_directions: default_extra_directions(),
                    seed: common.seed.unwrap_or(0),
                };
                cmd_besov(&out, &common, &v, &params)
            } else {
                let mut cfg: BesovConfig = load_required(&common)?;
                if let Some(s) = common.seed {
                    cfg.synth.seed = s;
                }
                let (v, _) = materialize(&cfg.synth.to_experiment())?;
                let params = BesovParams {
                    theta: theta.unwrap_or(cfg.synth.theta),
                    p: p.unwrap_or(cfg.p),
                    orders: orders.unwrap_or(cfg.orders),
                    ladder: cfg.ladder,
                    extra_directions: cfg.extra_directions,
                    seed: cfg.synth.seed,
                };
                cmd_besov(&out, &common, &v, &params)
            }
        }
        Cmd::Flux { common } => {
            let mut cfg: FluxConfig = load_required(&common)?;
            if let Some(s) = common.seed {
                cfg.synth.seed = s;
            }
            cmd_flux(&out, &common, &cfg)
        }
        Cmd::Run { common } => {
            let mut cfg: ExperimentConfig = load_required(&common)?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            cmd_run(&out, &common, &cfg)
        }
        Cmd::Sweep { common, targets } => {
            let mut cfg: SweepConfig = load_required(&common)?;
            if let Some(s) = common.seed {
                cfg.base.seed = s;
            }
            if let Some(t) = targets {
                cfg.targets = t;
            }
            cmd_sweep(&out, &common, &cfg)
        }
    }
}

fn out_dir(common: &Common) -> PathBuf {
    std::env::var_os("FONS_OUT")
        .map(PathBuf::from)
        .or_else(|| common.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load_config<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_required<T: DeserializeOwned>(common: &Common) -> anyhow::Result<T> {
    let path = common
        .config
        .as_deref()
        .context("--config is required for this subcommand")?;
    load_config(path)
}

fn write_json(path: &Path, doc: &impl Serialize) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    fs::write(path, &s).with_context(|| format!("writing {}", path.display()))?;
    Ok(s)
}

fn emit(common: &Common, path: &Path, doc: &impl Serialize) -> anyhow::Result<()> {
    let s = write_json(path, doc)?;
    if common.verbose {
        print!("{s}");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn descriptor_from_flags(
    kind: SetKindArg,
    d: usize,
    depth: Option<u32>,
    removed: Option<f64>,
    axes: Option<Vec<usize>>,
    count: Option<usize>,
    axis: Option<usize>,
    gamma: Option<f64>,
) -> anyhow::Result<SetDescriptor> {
    Ok(match kind {
        SetKindArg::Empty => SetDescriptor::Empty,
        SetKindArg::Full => SetDescriptor::Full,
        SetKindArg::PointCloud => SetDescriptor::PointCloud {
            count: count.unwrap_or(1),
        },
        SetKindArg::Hyperplane => SetDescriptor::Hyperplane {
            axis: axis.unwrap_or(0),
        },
        SetKindArg::Cantor => SetDescriptor::Cantor {
            removed: removed.unwrap_or(1.0 / 3.0),
            depth: depth.unwrap_or(8),
            axes: axes.unwrap_or_else(|| (0..d).collect()),
        },
        SetKindArg::GammaTarget => SetDescriptor::GammaTarget {
            gamma: gamma.context("--gamma is required for kind gamma-target")?,
        },
    })
}

fn field_label(kind: &FieldKind) -> &'static str {
    match kind {
        FieldKind::Singular => "singular",
        FieldKind::Weierstrass { .. } => "weierstrass",
        FieldKind::Smooth { .. } => "smooth",
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".into(), fmt_g17)
}

fn cmd_gen_set(
    out: &Path,
    common: &Common,
    d: usize,
    n: usize,
    seed: u64,
    desc: SetDescriptor,
    ladder: Option<Vec<f64>>,
) -> anyhow::Result<ExitCode> {
    let grid = PeriodicGrid::new(d, n)?;
    let set = desc.build(grid, seed)?;
    let (ladder, fit) = if set.is_empty() {
        (Vec::new(), None)
    } else {
        let ladder = ladder.unwrap_or_else(|| default_dimension_ladder(&grid));
        let fit = minkowski_dimension(&set, &ladder)?;
        (ladder, Some(fit))
    };
    fs::create_dir_all(out)?;
    write_field_path(out.join("set.fons"), &set.to_field())?;
    let doc = json!({
        "d": d,
        "n": n,
        "seed": seed,
        "descriptor": desc,
        "generator": set.tag(),
        "occupied": set.occupied_count(),
        "analytic_dim": set.analytic_dim(),
        "gamma_hat": fit.as_ref().map(|f| f.exponent),
        "dimension_fit": fit,
        "ladder": ladder,
    });
    emit(common, &out.join("set.json"), &doc)?;
    println!(
        "gen-set: {} d={d} n={n} occupied={} gamma_hat={} analytic={}",
        set.tag().kind,
        set.occupied_count(),
        fmt_opt(fit.as_ref().map(|f| f.exponent)),
        fmt_opt(set.analytic_dim()),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen_field(out: &Path, common: &Common, cfg: &SynthConfig) -> anyhow::Result<ExitCode> {
    let exp = cfg.to_experiment();
    let (v, fam) = materialize(&exp)?;
    let spec = exp.synthesis_spec(&fam);
    let report = verify_hypotheses(&v, &fam, &spec, cfg.r)?;
    fs::create_dir_all(out)?;
    let fields = out.join("fields");
    fs::create_dir_all(&fields)?;
    for (k, slice) in v.slices().iter().enumerate() {
        write_field_path(fields.join(format!("slice_{k:03}.fons")), slice)?;
    }
    emit(common, &out.join("hypotheses.json"), &report)?;
    let pass = report.dim_ok && report.kappa_ok && report.holder_ok;
    println!(
        "gen-field: {} d={} n={} slices={} gamma_hat={} theta_hat={} kappa_hat={} hypotheses={}",
        field_label(&cfg.field),
        cfg.d,
        cfg.n,
        cfg.slices,
        fmt_opt(report.gamma_hat),
        fmt_g17(report.theta_hat),
        fmt_opt(report.kappa_hat),
        if pass { "pass" } else { "FAIL" },
    );
    Ok(if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

struct BesovParams {
    theta: f64,
    p: f64,
    orders: Vec<f64>,
    ladder: Option<Vec<f64>>,
    extra_directions: usize,
    seed: u64,
}

/// Fits on all-zero tables (constant fields) have nothing to regress; they
/// are reported as null rather than failing the command.
fn fit_or_null(fit: fons::Result<fons::ScalingFit>) -> serde_json::Value {
    match fit {
        Ok(f) => serde_json::to_value(f).unwrap_or(serde_json::Value::Null),
        Err(_) => serde_json::Value::Null,
    }
}

fn cmd_besov(
    out: &Path,
    common: &Common,
    v: &TimeField,
    params: &BesovParams,
) -> anyhow::Result<ExitCode> {
    let grid = v.grid();
    let ladder = match &params.ladder {
        Some(l) => l.clone(),
        None => dyadic_ladder(2, grid.n().trailing_zeros().min(11)),
    };
    let dirs = DirectionSet::with_random(grid, params.extra_directions, params.seed);
    let table = structure_function(v, &ladder, &params.orders, params.extra_directions, params.seed)?;
    let mut seminorm_best: Option<(usize, fons::besov::BesovSeminorm)> = None;
    for (k, slice) in v.slices().iter().enumerate() {
        let s = besov_seminorm(slice, params.theta, params.p, &ladder, &dirs)?;
        if seminorm_best
            .as_ref()
            .map_or(true, |(_, b)| s.value > b.value)
        {
            seminorm_best = Some((k, s));
        }
    }
    let effective = effective_exponent(v, params.p, &ladder, &dirs);
    fs::create_dir_all(out)?;
    let mut csv = Vec::new();
    table.to_csv(&mut csv)?;
    fs::write(out.join("structure.csv"), &csv)?;
    let fits: Vec<serde_json::Value> = (0..params.orders.len())
        .map(|pi| {
            json!({
                "p": params.orders[pi],
                "fit": fit_or_null(table.fit_order(pi)),
            })
        })
        .collect();
    let (slice_idx, seminorm) = seminorm_best.context("no time slices")?;
    let effective_doc = match &effective {
        Ok(e) => serde_json::to_value(e)?,
        Err(_) => serde_json::Value::Null,
    };
    let doc = json!({
        "theta": params.theta,
        "p": params.p,
        "orders": params.orders,
        "ladder": ladder,
        "direction_count": dirs.len(),
        "seminorm": seminorm,
        "seminorm_slice": slice_idx,
        "structure_fits": fits,
        "effective": effective_doc,
    });
    emit(common, &out.join("besov.json"), &doc)?;
    let eff_str = match &effective {
        Ok(e) => format!(
            "exponent={} verdict={}",
            fmt_g17(e.fit.exponent),
            match e.verdict {
                fons::besov::RegularityVerdict::Conservative => "conservative",
                fons::besov::RegularityVerdict::NonConservative => "non-conservative",
                fons::besov::RegularityVerdict::Inconclusive => "inconclusive",
            }
        ),
        Err(_) => "exponent=none verdict=degenerate".into(),
    };
    println!(
        "besov: theta={} p={} seminorm={} {}",
        fmt_g17(params.theta),
        fmt_g17(params.p),
        fmt_g17(seminorm.value),
        eff_str,
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_flux(out: &Path, common: &Common, cfg: &FluxConfig) -> anyhow::Result<ExitCode> {
    let exp = cfg.synth.to_experiment();
    let (v, fam) = materialize(&exp)?;
    let report = fons::flux_scaling(&v.slices()[0], fam.set_for_slice(0), cfg.deltas()?)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("flux.csv"), report.to_csv())?;
    emit(common, &out.join("flux.json"), &report)?;
    println!(
        "flux: {} d={} n={} rungs={} inner_slope={} total_slope={}",
        field_label(&cfg.synth.field),
        cfg.synth.d,
        cfg.synth.n,
        report.rows.len(),
        fmt_opt(report.inner_fit.as_ref().map(|f| f.exponent)),
        fmt_opt(report.total_fit.as_ref().map(|f| f.exponent)),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(out: &Path, common: &Common, cfg: &ExperimentConfig) -> anyhow::Result<ExitCode> {
    let report = run_experiment(cfg)?;
    let (v, fam) = materialize(cfg)?;
    write_report_dir(out, &report, &v, &fam)?;
    if common.verbose {
        let mut s = serde_json::to_string_pretty(&report)?;
        s.push('\n');
        print!("{s}");
    }
    println!(
        "run: verdict \"{}\" gamma_hat={} threshold={} alpha_hat={} exponent={}",
        report.verdict,
        fmt_opt(report.gamma_hat),
        fmt_g17(report.threshold),
        fmt_g17(report.alpha_hat),
        fmt_g17(report.exponent_fit.exponent),
    );
    Ok(verdict_exit(report.verdict))
}

/// The verdict's serialized token; Display forms contain commas.
fn verdict_token(v: RegimeVerdict) -> &'static str {
    match v {
        RegimeVerdict::ConservativeLipschitz => "conservative_lipschitz",
        RegimeVerdict::TheoremRegimeConservative => "theorem_regime_conservative",
        RegimeVerdict::OutsideRegime => "outside_regime",
        RegimeVerdict::Inconclusive => "inconclusive",
    }
}

fn verdict_exit(v: RegimeVerdict) -> ExitCode {
    match v {
        RegimeVerdict::ConservativeLipschitz | RegimeVerdict::TheoremRegimeConservative => {
            ExitCode::SUCCESS
        }
        RegimeVerdict::OutsideRegime | RegimeVerdict::Inconclusive => ExitCode::from(2),
    }
}

fn cmd_sweep(out: &Path, common: &Common, cfg: &SweepConfig) -> anyhow::Result<ExitCode> {
    if cfg.targets.is_empty() {
        bail!("a sweep needs gamma targets: pass --targets or a config with a targets list");
    }
    let table = threshold_sweep(&cfg.base, &cfg.targets)?;
    fs::create_dir_all(out)?;
    let mut csv = String::from("gamma_target,gamma_hat,alpha_hat,alpha_err,verdict,inconclusive\n");
    for row in &table.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_g17(row.gamma_target),
            row.gamma_hat.map_or_else(|| "".into(), fmt_g17),
            fmt_g17(row.alpha_hat),
            fmt_g17(row.alpha_err),
            verdict_token(row.verdict),
            row.inconclusive,
        ));
    }
    fs::write(out.join("sweep.csv"), csv)?;
    emit(common, &out.join("sweep.json"), &table)?;
    println!(
        "sweep: threshold={} targets={} alpha_decreasing={} crossing={}",
        fmt_g17(table.threshold),
        table.rows.len(),
        table.decreasing_within_error,
        fmt_opt(table.crossing_estimate),
    );
    Ok(if table.decreasing_within_error {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}
