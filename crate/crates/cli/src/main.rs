//! `cutofflab`: moments, sweeps, simulation and self-checks from the shell.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use cutofflab_core::analysis::{self, TableSource, Thresholds};
use cutofflab_core::asymptotics::{self, Constants};
use cutofflab_core::sde::{self, Scheme, SimConfig};
use cutofflab_core::stats::{ks_critical_1pct, ks_statistic};
use cutofflab_core::tables::{build_grid, build_table, IntegralTable, DEFAULT_BASE_COUNT};
use cutofflab_core::verify::{self, Level, VerifyOptions};
use cutofflab_core::{green, LabError, TableCache, WeightFamily, WeightFn};

use output::{Outputs, Usage};

const CACHE_ENV: &str = "CUTOFFLAB_CACHE_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "cutofflab",
    version,
    about = "Separation cut-off laboratory for rotationally symmetric manifolds"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Build every table from scratch and leave the cache untouched.
    #[arg(long, global = true)]
    no_cache: bool,
    /// Table cache directory.
    #[arg(long, global = true, env = CACHE_ENV)]
    cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Moments of the strong stationary time from quadrature.
    Moments(MomentsArgs),
    /// Dimension sweep with the cut-off verdict, or a phase table over `--a`.
    Sweep(SweepArgs),
    /// Monte Carlo samples of the dual radius hitting time.
    Simulate(SimulateArgs),
    /// Empirical separation profile with Chebyshev bounds.
    Profile(ProfileArgs),
    /// Regime and limit constants.
    Asymptotics(AsymptoticsArgs),
    /// Run the self-check suites.
    Verify(VerifyArgs),
    /// Inspect or clear the table cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand, Debug)]
enum CacheAction {
    List,
    Clear,
}

/// Family descriptor: `sphere` or `power:a=<decimal>:m=<decimal>`.
fn parse_family(s: &str) -> std::result::Result<WeightFamily, String> {
    s.parse::<WeightFamily>().map_err(|e| e.to_string())
}

#[derive(Args, Debug)]
struct MomentsArgs {
    #[arg(long, value_parser = parse_family)]
    family: WeightFamily,
    #[arg(long)]
    n: u32,
    /// Highest moment order.
    #[arg(long = "k", default_value_t = 2)]
    k_max: usize,
    /// Base node count of the graded grid.
    #[arg(long, default_value_t = DEFAULT_BASE_COUNT)]
    grid: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_parser = parse_family, conflicts_with = "a")]
    family: Option<WeightFamily>,
    /// Comma-separated dimensions.
    #[arg(long = "n", value_delimiter = ',', num_args = 1..)]
    n_list: Vec<u32>,
    /// Dyadic range `lo:hi:step` of exponents, e.g. `8:20:2` for 2^8..2^20.
    #[arg(long, conflicts_with = "n_list")]
    n_range: Option<String>,
    /// Comma-separated curvature exponents: emit a phase table instead.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    a: Vec<f64>,
    /// Scale of the power family in phase mode.
    #[arg(long, default_value_t = 1.0)]
    m: f64,
    #[arg(long, default_value_t = Thresholds::default().decay)]
    decay: f64,
    #[arg(long, default_value_t = Thresholds::default().plateau)]
    plateau: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct SimArgs {
    #[arg(long, value_parser = parse_family)]
    family: WeightFamily,
    #[arg(long)]
    n: u32,
    #[arg(long)]
    paths: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest step (default `1e-4/n`).
    #[arg(long)]
    dt_base: Option<f64>,
    /// Absorption offset from `L` (default `1e-4 L`).
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = sde::DEFAULT_KAPPA)]
    kappa: f64,
    /// Extra dyadic refinement of `dt_base`.
    #[arg(long, default_value_t = 0)]
    refine: u32,
    /// Sign of the shared noise in the full coupling.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    sigma: f64,
    #[arg(long, default_value_t = sde::DEFAULT_MAX_STEPS)]
    max_steps: u64,
}

impl SimArgs {
    fn config(&self, w: &WeightFn, scheme: Scheme) -> SimConfig {
        let base = SimConfig::new(w, self.n, scheme, self.paths, self.seed);
        SimConfig {
            dt_base: self.dt_base.unwrap_or(base.dt_base),
            eps_abs: self.eps.unwrap_or(base.eps_abs),
            kappa: self.kappa,
            refine: self.refine,
            sigma: self.sigma,
            max_steps: self.max_steps,
            ..base
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// autonomous, full-coupling (coupled) or full-decoupling (decoupled).
    #[arg(long, default_value = "autonomous", value_parser = |s: &str| s.parse::<Scheme>().map_err(|e| e.to_string()))]
    scheme: Scheme,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ProfileArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Comma-separated times; default is an even grid on `[0, t_max]`.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    times: Vec<f64>,
    #[arg(long, default_value_t = 31)]
    points: usize,
    /// End of the default grid (default `3 E[tau]`).
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AsymptoticsArgs {
    #[arg(long, value_parser = parse_family)]
    family: WeightFamily,
    /// Dimensions at which to report the predicted mixing time.
    #[arg(long = "n", value_delimiter = ',', num_args = 1.., default_values_t = [100u32, 10_000, 1_000_000])]
    n_list: Vec<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value = "fast")]
    level: Level,
    /// Corrupt one table before checking it.
    #[arg(long, hide = true)]
    corrupt_table: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Process-wide state: optional cache and output bookkeeping.
struct Ctx {
    cache: Option<TableCache>,
    outputs: Outputs,
}

impl Ctx {
    fn table(&self, w: &WeightFn, n: u32, base: usize) -> Result<Arc<IntegralTable>> {
        Ok(match &self.cache {
            Some(c) => c.load_or_build(w, n, base)?,
            None => Arc::new(build_table(w, n, build_grid(w, n, base)?)?),
        })
    }

    fn source(&self) -> TableSource<'_> {
        match &self.cache {
            Some(c) => TableSource::Cache(c),
            None => TableSource::Build,
        }
    }
}

fn default_cache_dir() -> PathBuf {
    if let Some(x) = std::env::var_os("XDG_CACHE_HOME") {
        return PathBuf::from(x).join("cutofflab");
    }
    if let Some(h) = std::env::var_os("HOME") {
        return PathBuf::from(h).join(".cache").join("cutofflab");
    }
    std::env::temp_dir().join("cutofflab-cache")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 usage, 3 numerical gate, 4 step budget, 1 anything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match e.downcast_ref::<LabError>() {
        Some(LabError::FamilyKey(_) | LabError::InvalidParameter(_) | LabError::Domain { .. }) => 2,
        Some(LabError::Numerical(_)) => 3,
        Some(LabError::StepBudget { .. }) => 4,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!(Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cache_dir = cli.cache_dir.clone().unwrap_or_else(default_cache_dir);
    if let Cmd::Cache { action } = &cli.cmd {
        let cache = TableCache::new(&cache_dir);
        match action {
            CacheAction::List => {
                for p in cache.list()? {
                    println!("{}", p.display());
                }
            }
            CacheAction::Clear => println!(
                "removed {} tables from {}",
                cache.clear()?,
                cache_dir.display()
            ),
        }
        return Ok(0);
    }
    let ctx = Ctx {
        cache: (!cli.no_cache).then(|| TableCache::new(&cache_dir)),
        outputs: Outputs::start(),
    };
    match cli.cmd {
        Cmd::Moments(a) => moments(&ctx, a),
        Cmd::Sweep(a) => sweep(&ctx, a),
        Cmd::Simulate(a) => simulate(&ctx, a),
        Cmd::Profile(a) => profile(&ctx, a),
        Cmd::Asymptotics(a) => asymptotics_cmd(&ctx, a),
        Cmd::Verify(a) => verify_cmd(&ctx, a),
        Cmd::Cache { .. } => unreachable!(),
    }
}

fn moments(ctx: &Ctx, a: MomentsArgs) -> Result<u8> {
    let w = a.family.build()?;
    let t = ctx.table(&w, a.n, a.grid)?;
    let report = green::moment_report(&t, a.k_max)?;
    let body = output::json_string(&report)?;
    let params = json!({"family": a.family.key(), "n": a.n, "k": a.k_max, "grid": a.grid});
    ctx.outputs.emit(
        ctx,
        "moments",
        params,
        a.out.as_deref(),
        &body,
        &[],
        Value::Null,
    )?;
    Ok(0)
}

fn n_list_from(a: &SweepArgs) -> Result<Vec<u32>> {
    if let Some(r) = &a.n_range {
        let parts: Vec<u32> = r
            .split(':')
            .map(|p| p.trim().parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Usage(format!("--n-range `{r}`: expected lo:hi:step")))?;
        let [lo, hi, step] = parts[..] else {
            bail!(Usage(format!("--n-range `{r}`: expected lo:hi:step")));
        };
        if step == 0 || lo > hi || hi > 31 {
            bail!(Usage(format!(
                "--n-range `{r}`: need step >= 1 and lo <= hi <= 31"
            )));
        }
        return Ok(analysis::dyadic_list(lo, hi, step));
    }
    if a.n_list.is_empty() {
        bail!(Usage("empty n list: give --n or --n-range".into()));
    }
    Ok(a.n_list.clone())
}

fn sweep(ctx: &Ctx, a: SweepArgs) -> Result<u8> {
    let n_list = n_list_from(&a)?;
    let th = Thresholds {
        decay: a.decay,
        plateau: a.plateau,
    };
    if !a.a.is_empty() {
        let rows = analysis::phase_sweep(&a.a, a.m, &n_list, ctx.source())?;
        let body = output::phase_csv(&rows);
        let params = json!({"a": a.a, "m": a.m, "n": n_list});
        let side = output::json_string(&rows)?;
        ctx.outputs.emit(
            ctx,
            "sweep",
            params,
            a.out.as_deref(),
            &body,
            &[("phase.json", side)],
            Value::Null,
        )?;
        for r in &rows {
            eprintln!(
                "a={}: {} (exponent {:.4}, predicted {:.4})",
                r.a, r.verdict, r.fitted_exponent, r.predicted_exponent
            );
        }
        return Ok(0);
    }
    let family = a
        .family
        .ok_or_else(|| Usage("sweep needs --family or --a".into()))?;
    let w = family.build()?;
    let v = analysis::cutoff_verdict_with(&w, &n_list, th, ctx.source())?;
    let prediction = asymptotics::predict(&w)?;
    let verdict = json!({
        "verdict": v,
        "prediction": prediction_json(&prediction, &[]),
    });
    let params =
        json!({"family": family.key(), "n": n_list, "decay": th.decay, "plateau": th.plateau});
    ctx.outputs.emit(
        ctx,
        "sweep",
        params,
        a.out.as_deref(),
        &analysis::sweep_csv(&v),
        &[(
            "verdict.json",
            serde_json::to_string_pretty(&verdict)? + "\n",
        )],
        Value::Null,
    )?;
    eprintln!("{}: {}", v.family, v.verdict);
    Ok(0)
}

fn simulate(ctx: &Ctx, a: SimulateArgs) -> Result<u8> {
    let w = a.sim.family.build()?;
    let cfg = a.sim.config(&w, a.scheme);
    cfg.validate()?;
    let t = ctx.table(&w, cfg.n, DEFAULT_BASE_COUNT)?;
    let s = sde::sample(&t, &cfg)?;
    let mut summary = json!({"containment_violations": s.containment_violations});
    if a.scheme != Scheme::Autonomous {
        let auto = sde::sample_tau(
            &t,
            &SimConfig {
                scheme: Scheme::Autonomous,
                ..cfg.clone()
            },
        )?;
        let ks = ks_statistic(&auto.samples, &s.samples);
        let crit = ks_critical_1pct(auto.len(), s.len());
        eprintln!("KS vs autonomous: {ks:.5} (1% critical {crit:.5})");
        summary["ks_vs_autonomous"] = json!(ks);
        summary["ks_critical_1pct"] = json!(crit);
    }
    eprintln!(
        "mean {:.6e} +- {:.2e} (quadrature {:.6e})",
        s.mean(),
        s.se(),
        green::mean_tau(&t)
    );
    let params = json!({"sim": cfg, "scheme": a.scheme});
    let side = output::json_string(&s.sidecar())?;
    ctx.outputs.emit(
        ctx,
        "simulate",
        params,
        a.out.as_deref(),
        &s.to_csv(),
        &[("json", side)],
        summary,
    )?;
    Ok(0)
}

fn profile(ctx: &Ctx, a: ProfileArgs) -> Result<u8> {
    let w = a.sim.family.build()?;
    let cfg = a.sim.config(&w, Scheme::Autonomous);
    cfg.validate()?;
    let t = ctx.table(&w, cfg.n, DEFAULT_BASE_COUNT)?;
    let times = if a.times.is_empty() {
        if a.points < 2 {
            bail!(Usage("--points must be at least 2".into()));
        }
        let t_max = a.t_max.unwrap_or(3.0 * green::mean_tau(&t));
        (0..a.points)
            .map(|i| t_max * i as f64 / (a.points - 1) as f64)
            .collect()
    } else {
        a.times.clone()
    };
    let s = sde::sample_tau(&t, &cfg)?;
    let p = analysis::separation_profile(&t, &s, &times)?;
    let meta = json!({"n": p.n, "family": p.family, "a_n": p.a_n, "window": p.window});
    let params = json!({"sim": cfg, "times": times});
    ctx.outputs.emit(
        ctx,
        "profile",
        params,
        a.out.as_deref(),
        &analysis::profile_csv(&p),
        &[("json", serde_json::to_string_pretty(&meta)? + "\n")],
        Value::Null,
    )?;
    Ok(0)
}

fn prediction_json(p: &asymptotics::RegimePrediction, n_list: &[u32]) -> Value {
    let mut v = json!({"regime": p.regime.to_string(), "a": p.a});
    match &p.constants {
        Constants::Subcritical { c1 } => v["C1"] = json!(c1),
        Constants::Critical { c2 } => v["C2"] = json!(c2),
        Constants::SupercriticalEven {
            k,
            cf2k,
            c2k,
            mean_coefficient,
            ratio_limit_candidates,
        } => {
            v["k"] = json!(k);
            v["Cf2k"] = json!(cf2k);
            v["C2k"] = json!(c2k);
            v["mean_coefficient"] = json!(mean_coefficient);
            v["ratio_limit_candidates"] = json!(ratio_limit_candidates);
        }
        Constants::SupercriticalScale { exponent } => v["scale_exponent"] = json!(exponent),
    }
    if !n_list.is_empty() {
        let an: Vec<Value> = n_list
            .iter()
            .map(|&n| json!({"n": n, "an": p.mixing_time(n).ok(), "window_scale": p.window_scale(n)}))
            .collect();
        v["an"] = json!(an);
    }
    v
}

fn asymptotics_cmd(ctx: &Ctx, a: AsymptoticsArgs) -> Result<u8> {
    let w = a.family.build()?;
    let p = asymptotics::predict(&w)?;
    let mut v = prediction_json(&p, &a.n_list);
    if let Constants::SupercriticalEven { k, .. } = p.constants {
        let lim = asymptotics::ratio_limit(k, &w)?;
        v["ratio_limit_observed"] = json!(lim.observed);
        v["ratio_limit_selected"] = json!(lim.selected_value());
    }
    let params = json!({"family": a.family.key(), "n": a.n_list});
    let body = serde_json::to_string_pretty(&v)? + "\n";
    ctx.outputs.emit(
        ctx,
        "asymptotics",
        params,
        a.out.as_deref(),
        &body,
        &[],
        Value::Null,
    )?;
    Ok(0)
}

fn verify_cmd(ctx: &Ctx, a: VerifyArgs) -> Result<u8> {
    let opts = VerifyOptions {
        corrupt_table: a.corrupt_table,
    };
    let mut checks = verify::fast_suite(opts);
    for c in &checks {
        println!("{c}");
    }
    if a.level == Level::Full {
        checks.extend(verify::print_criteria(verify::CRITERIA.iter().map(|c| c.0)));
    }
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).collect();
    if let Some(out) = &a.out {
        let params = json!({"level": format!("{:?}", a.level).to_lowercase()});
        ctx.outputs.emit(
            ctx,
            "verify",
            params,
            Some(out),
            &output::json_string(&checks)?,
            &[],
            Value::Null,
        )?;
    }
    if failed.is_empty() {
        println!("all {} checks passed", checks.len());
        Ok(0)
    } else {
        for c in &failed {
            eprintln!("failed: [{}] {}: {}", c.id, c.name, c.detail);
        }
        Ok(3)
    }
}
