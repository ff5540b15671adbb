//! `uichan`: generate models, build and audit their channel families, and
//! run the strategy/channel/behaviour pipeline from the command line.
//!
//! Exit codes: 0 success, 1 numerical check failure, 2 input error.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use uichan_core::bell::{
    behaviour_direct, bell_value, chsh_optimal_strategy, extract_behaviour, BellFunctional, Behaviour,
};
use uichan_core::channels::{
    apply, channel_direct_with_limit, channel_from_moments_with_limit, cptp_report, max_n_from_env,
    moment_table_with_limit, ChannelFamily, CptpReport,
};
use uichan_core::matcore::{seeded_rng, wishart_density};
use uichan_core::models::{
    diagonal_fourier_lift, embed_tensor_as_commuting, random_model, swap_model, validate_commuting, Model, ModelKind,
    StateKind, Strategy,
};
use uichan_core::seesaw::{lift_and_verify, optimize_bell, SeesawConfig};

use manifest::{digest_file, sidecar_path, RunManifest};

#[derive(Debug, Parser, Serialize)]
#[command(name = "uichan", version, about = "Unitary induced channels and Bell behaviours")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Serialize)]
struct Common {
    /// Output file; a `<out>.manifest.json` sidecar is written next to it.
    /// Without it the payload goes to stdout.
    #[arg(short = 'o', long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Override the pass threshold of the command's numerical checks.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Spaces per indent level; 0 writes compact JSON.
    #[arg(long, global = true, default_value_t = 2)]
    json_indent: usize,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Random model with Haar unitaries.
    Gen(GenArgs),
    /// Channel family of a model.
    Channel(ChannelArgs),
    /// Audit a model file.
    Verify(InputArgs),
    /// Behaviour extracted from a channel family.
    Bell(BellArgs),
    /// Born-rule behaviour of a strategy.
    BellDirect(BellArgs),
    /// See-saw maximization of a Bell functional.
    Seesaw(SeesawArgs),
    /// Strategy to lifted channel to behaviour, compared with the Born rule.
    Pipeline(PipelineArgs),
    /// Check that the SWAP model gives a constant channel.
    SwapDemo(SwapArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum KindArg {
    Tensor,
    Commuting,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum StateArg {
    Vector,
    Density,
}

#[derive(Debug, Args, Serialize)]
struct GenArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Tensor)]
    kind: KindArg,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long = "dA", default_value_t = 2)]
    d_a: usize,
    #[arg(long = "dB", default_value_t = 2)]
    d_b: usize,
    #[arg(long, value_enum, default_value_t = StateArg::Vector)]
    state: StateArg,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Method {
    Direct,
    Moments,
}

#[derive(Debug, Args, Serialize)]
struct ChannelArgs {
    #[arg(short = 'i', long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Direct)]
    method: Method,
    /// Run the CPTP audit; a failed audit exits with 1.
    #[arg(long)]
    audit: bool,
}

#[derive(Debug, Args, Serialize)]
struct InputArgs {
    #[arg(short = 'i', long)]
    input: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct BellArgs {
    #[arg(short = 'i', long)]
    input: PathBuf,
    /// Bell functional to evaluate on the behaviour.
    #[arg(short = 'f', long)]
    functional: Option<PathBuf>,
    /// Also write the behaviour table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Preset {
    Chsh,
}

#[derive(Debug, Args, Serialize)]
struct SeesawArgs {
    #[arg(short = 'f', long, conflicts_with = "preset", required_unless_present = "preset")]
    functional: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long = "dA", default_value_t = 2)]
    d_a: usize,
    #[arg(long = "dB", default_value_t = 2)]
    d_b: usize,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    rel_tol: f64,
}

#[derive(Debug, Args, Serialize)]
struct PipelineArgs {
    #[arg(short = 's', long, requires = "functional", conflicts_with = "preset", required_unless_present = "preset")]
    strategy: Option<PathBuf>,
    #[arg(short = 'f', long, requires = "strategy")]
    functional: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SwapArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
}

/// Result of one command before it is written out.
struct Outcome {
    payload: Value,
    passed: bool,
    /// One-line summary for stderr.
    summary: Option<String>,
    inputs: Vec<PathBuf>,
    extra_outputs: Vec<PathBuf>,
    report: Option<Value>,
}

impl Outcome {
    fn new(payload: Value) -> Self {
        Self { payload, passed: true, summary: None, inputs: Vec::new(), extra_outputs: Vec::new(), report: None }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn to_json_bytes<T: Serialize>(value: &T, indent: usize) -> Result<Vec<u8>> {
    if indent == 0 {
        let mut out = serde_json::to_vec(value)?;
        out.push(b'\n');
        return Ok(out);
    }
    let pad = vec![b' '; indent];
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, serde_json::ser::PrettyFormatter::with_indent(&pad));
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(out)
}

fn check(name: &str, defect: f64, tol: f64) -> Value {
    let status = if defect <= tol { "PASS" } else { "FAIL" };
    json!({ "name": name, "defect": defect, "tol": tol, "status": status })
}

fn skipped(name: &str, reason: String) -> Value {
    json!({ "name": name, "status": "SKIP", "reason": reason })
}

fn cmd_gen(a: &GenArgs, seed: u64) -> Result<Outcome> {
    if a.n == 0 || a.m == 0 || a.d_a == 0 || a.d_b == 0 {
        bail!("n, m, dA, dB must be positive");
    }
    let kind = match a.kind {
        KindArg::Tensor => ModelKind::Tensor,
        KindArg::Commuting => ModelKind::CommutingViaEmbedding,
    };
    let state = match a.state {
        StateArg::Vector => StateKind::Vector,
        StateArg::Density => StateKind::Density,
    };
    let model = random_model(kind, a.n, a.m, a.d_a, a.d_b, state, seed);
    Ok(Outcome::new(serde_json::to_value(&model)?))
}

fn load_model(path: &Path) -> Result<Model> {
    let model: Model = read_json(path)?;
    match &model {
        Model::Tensor(t) => t.check_shapes()?,
        Model::Commuting(c) => c.check_shapes()?,
    }
    Ok(model)
}

fn build_channel(model: &Model, method: Method, max_n: usize) -> Result<ChannelFamily> {
    Ok(match method {
        Method::Direct => channel_direct_with_limit(model, max_n)?,
        Method::Moments => channel_from_moments_with_limit(&moment_table_with_limit(model, max_n)?, max_n)?,
    })
}

fn cmd_channel(a: &ChannelArgs) -> Result<Outcome> {
    let model = load_model(&a.input)?;
    let channel = build_channel(&model, a.method, max_n_from_env())?;
    let mut out = Outcome::new(serde_json::to_value(&channel)?);
    out.inputs.push(a.input.clone());
    if a.audit {
        let r: CptpReport = cptp_report(&channel)?;
        out.passed = r.passed;
        out.summary = Some(format!(
            "CPTP audit {}: min Choi eigenvalue {:.3e}, trace defect {:.3e}",
            if r.passed { "PASS" } else { "FAIL" },
            r.min_choi_eigenvalue,
            r.trace_defect
        ));
        out.report = Some(serde_json::to_value(&r)?);
    }
    Ok(out)
}

fn cmd_verify(a: &InputArgs, tol: Option<f64>) -> Result<Outcome> {
    let model = load_model(&a.input)?;
    let max_n = max_n_from_env();
    let mut checks = Vec::new();
    let (kind, report) = match &model {
        Model::Tensor(t) => ("tensor", t.report()),
        Model::Commuting(c) => ("commuting", validate_commuting(c)),
    };
    let base = tol.unwrap_or(report.tol);
    checks.push(check("unitarity", report.max_unitarity_defect, base));
    checks.push(check("state", report.state_defect, base));
    if let Model::Commuting(_) = model {
        checks.push(check("commutation", report.max_commutator, base));
        checks.push(check("adjoint-commutation", report.max_adjoint_commutator, base));
    }

    match channel_direct_with_limit(&model, max_n) {
        Ok(direct) => {
            let r = cptp_report(&direct)?;
            let choi_tol = tol.unwrap_or(uichan_core::channels::CHOI_TOL);
            checks.push(check("choi-positivity", (-r.min_choi_eigenvalue).max(0.0), choi_tol));
            checks.push(check("trace-preservation", r.trace_defect, tol.unwrap_or(uichan_core::channels::TP_TOL)));
            let dual = channel_from_moments_with_limit(&moment_table_with_limit(&model, max_n)?, max_n)?;
            checks.push(check("dual-formula", direct.max_abs_diff(&dual), tol.unwrap_or(1e-10)));
            if let Model::Tensor(t) = &model {
                let embedded = Model::Commuting(embed_tensor_as_commuting(t));
                let lc = channel_direct_with_limit(&embedded, max_n)?;
                checks.push(check("embedding-invariance", direct.max_abs_diff(&lc), tol.unwrap_or(1e-12)));
            }
        }
        Err(e) => checks.push(skipped("channel", e.to_string())),
    }

    let passed = checks.iter().all(|c| c["status"] == "PASS");
    let mut out = Outcome::new(json!({ "model_kind": kind, "checks": checks, "passed": passed }));
    out.passed = passed;
    out.summary = Some(format!("verify {}", if passed { "PASS" } else { "FAIL" }));
    out.inputs.push(a.input.clone());
    Ok(out)
}

fn attach_value(out: &mut Outcome, b: &Behaviour, functional: Option<&PathBuf>) -> Result<()> {
    if let Some(path) = functional {
        let f: BellFunctional = read_json(path)?;
        out.payload["value"] = json!(bell_value(b, &f)?);
        out.inputs.push(path.clone());
    }
    Ok(())
}

fn write_csv(out: &mut Outcome, b: &Behaviour, csv: Option<&PathBuf>) -> Result<()> {
    if let Some(path) = csv {
        fs::write(path, b.to_csv()).with_context(|| format!("writing {}", path.display()))?;
        out.extra_outputs.push(path.clone());
    }
    Ok(())
}

fn cmd_bell(a: &BellArgs) -> Result<Outcome> {
    let raw: ChannelFamily = read_json(&a.input)?;
    let channel = ChannelFamily::new(raw.n, raw.superops)?;
    if channel.m != raw.m {
        bail!("channel file declares m = {} but holds a {}×{} grid", raw.m, channel.m, channel.m);
    }
    let ex = extract_behaviour(&channel)?;
    let mut out = Outcome::new(serde_json::to_value(&ex)?);
    out.inputs.push(a.input.clone());
    attach_value(&mut out, &ex.behaviour, a.functional.as_ref())?;
    write_csv(&mut out, &ex.behaviour, a.csv.as_ref())?;
    Ok(out)
}

fn load_strategy(path: &Path) -> Result<Strategy> {
    let s: Strategy = read_json(path)?;
    Ok(Strategy::new(s.alice, s.bob, s.state)?)
}

fn cmd_bell_direct(a: &BellArgs) -> Result<Outcome> {
    let s = load_strategy(&a.input)?;
    let b = behaviour_direct(&s.alice, &s.bob, &s.state)?;
    let mut out = Outcome::new(json!({ "behaviour": b }));
    out.inputs.push(a.input.clone());
    attach_value(&mut out, &b, a.functional.as_ref())?;
    write_csv(&mut out, &b, a.csv.as_ref())?;
    Ok(out)
}

fn cmd_seesaw(a: &SeesawArgs, seed: u64) -> Result<Outcome> {
    let mut inputs = Vec::new();
    let f = match (&a.functional, a.preset) {
        (Some(path), _) => {
            inputs.push(path.clone());
            read_json::<BellFunctional>(path)?
        }
        (None, Some(Preset::Chsh)) => BellFunctional::chsh(),
        (None, None) => bail!("either -f or --preset is required"),
    };
    if a.d_a == 0 || a.d_b == 0 || a.restarts == 0 {
        bail!("dA, dB and restarts must be positive");
    }
    let cfg = SeesawConfig {
        d_a: a.d_a,
        d_b: a.d_b,
        n: f.n,
        m: f.m,
        max_iters: a.max_iters,
        rel_tol: a.rel_tol,
        restarts: a.restarts,
        seed,
    };
    let result = optimize_bell(&f, &cfg)?;
    let lift = lift_and_verify(&result)?;
    let mut out = Outcome::new(json!({ "result": result, "lift": lift }));
    out.passed = lift.passed;
    out.summary = Some(format!(
        "seesaw value {:.10} (restart {}, lift deviation {:.3e}{})",
        result.value,
        result.restart,
        lift.deviation,
        if result.heuristic { ", heuristic" } else { "" }
    ));
    out.inputs = inputs;
    Ok(out)
}

fn cmd_pipeline(a: &PipelineArgs, tol: Option<f64>) -> Result<Outcome> {
    let mut inputs = Vec::new();
    let (s, f) = match (&a.strategy, &a.functional, a.preset) {
        (Some(sp), Some(fp), _) => {
            inputs.push(sp.clone());
            inputs.push(fp.clone());
            (load_strategy(sp)?, read_json::<BellFunctional>(fp)?)
        }
        (None, None, Some(Preset::Chsh)) => (chsh_optimal_strategy(), BellFunctional::chsh()),
        _ => bail!("give either --strategy and --functional, or --preset"),
    };
    let tol = tol.unwrap_or(1e-8);
    let lifted = diagonal_fourier_lift(&s.alice, &s.bob, &s.state)?;
    let channel = channel_direct_with_limit(&Model::Tensor(lifted), max_n_from_env())?;
    let ex = extract_behaviour(&channel)?;
    let direct = behaviour_direct(&s.alice, &s.bob, &s.state)?;
    let value_channel = bell_value(&ex.behaviour, &f)?;
    let value_direct = bell_value(&direct, &f)?;
    let deviation = ex.behaviour.max_abs_diff(&direct);
    let passed = deviation <= tol;
    let mut out = Outcome::new(json!({
        "extracted": ex.behaviour,
        "direct": direct,
        "value_channel": value_channel,
        "value_direct": value_direct,
        "deviation": deviation,
        "tol": tol,
        "imag_residue": ex.imag_residue,
        "completion_size": ex.completion_size,
        "passed": passed,
    }));
    out.passed = passed;
    out.summary = Some(format!(
        "pipeline {}: value {value_channel:.10}, deviation {deviation:.3e}",
        if passed { "PASS" } else { "FAIL" }
    ));
    out.inputs = inputs;
    write_csv(&mut out, &ex.behaviour, a.csv.as_ref())?;
    Ok(out)
}

fn cmd_swap_demo(a: &SwapArgs, seed: u64, tol: Option<f64>) -> Result<Outcome> {
    if !(2..=4).contains(&a.n) {
        bail!("swap-demo needs n in {{2, 3, 4}}, got {}", a.n);
    }
    let n = a.n;
    let tol = tol.unwrap_or(1e-12);
    let mut rng = seeded_rng(seed);
    let sigma = wishart_density(n * n, &mut rng);
    let model = Model::Tensor(swap_model(n, sigma.clone())?);
    let channel = channel_direct_with_limit(&model, max_n_from_env().max(4))?;
    let mut defect = 0.0f64;
    for _ in 0..10 {
        let rho = wishart_density(n * n, &mut rng);
        defect = defect.max(apply(&channel, &rho)?[0][0].max_abs_diff(&sigma));
    }
    let passed = defect <= tol;
    let mut out = Outcome::new(json!({ "n": n, "seed": seed, "trials": 10, "defect": defect, "tol": tol, "passed": passed }));
    out.passed = passed;
    out.summary = Some(format!("swap-demo n={n}: {} (defect {defect:.3e})", if passed { "PASS" } else { "FAIL" }));
    Ok(out)
}

fn run(cli: &Cli) -> Result<bool> {
    let start = Instant::now();
    let c = &cli.common;
    let (name, outcome) = match &cli.command {
        Command::Gen(a) => ("gen", cmd_gen(a, c.seed)?),
        Command::Channel(a) => ("channel", cmd_channel(a)?),
        Command::Verify(a) => ("verify", cmd_verify(a, c.tol)?),
        Command::Bell(a) => ("bell", cmd_bell(a)?),
        Command::BellDirect(a) => ("bell-direct", cmd_bell_direct(a)?),
        Command::Seesaw(a) => ("seesaw", cmd_seesaw(a, c.seed)?),
        Command::Pipeline(a) => ("pipeline", cmd_pipeline(a, c.tol)?),
        Command::SwapDemo(a) => ("swap-demo", cmd_swap_demo(a, c.seed, c.tol)?),
    };
    let bytes = to_json_bytes(&outcome.payload, c.json_indent)?;
    match &c.out {
        Some(path) => {
            fs::write(path, &bytes).with_context(|| format!("writing {}", path.display()))?;
            let mut outputs = vec![digest_file(path)?];
            for extra in &outcome.extra_outputs {
                outputs.push(digest_file(extra)?);
            }
            let manifest = RunManifest {
                command: name.to_string(),
                config: serde_json::to_value(cli)?,
                seed: c.seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
                inputs: outcome.inputs.iter().map(|p| digest_file(p)).collect::<Result<_>>()?,
                outputs,
                wall_clock_ms: start.elapsed().as_millis(),
                report: outcome.report.clone(),
            };
            let side = sidecar_path(path);
            fs::write(&side, to_json_bytes(&manifest, c.json_indent.max(1))?)
                .with_context(|| format!("writing {}", side.display()))?;
        }
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&bytes)?;
        }
    }
    if let Some(s) = &outcome.summary {
        eprintln!("{s}");
    }
    Ok(outcome.passed)
}

/// Numerical failures reported by the library exit with 1; everything else
/// (I/O, parse, shape and validity errors) is an input error.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    use uichan_core::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::NotHermitian { .. } | E::AsymmetricMoments(_) | E::InconsistentChannel(_) | E::PipelineInconsistency(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
