use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use erz_core::cts::{
    all_zero_frequency, bound_formula, cts_condition_eval, cts_density_estimate, cts_oracle, randomized_zero_test, trial_rng,
    Condition, CtsPlan, Formula, FormulaInputs, Verdict, ZeroTestTarget,
};
use erz_core::divfree::{compile_divfree, compile_identity_targets, CompileOptions, FanInOrder, IdentityTarget};
use erz_core::geometry::{
    cells_enumerate, growth_measure, pham_evasive_check, vcdim_search, CellFile, FamilyFile, PhamFile, SauerOptions,
    DEFAULT_VC_BUDGET,
};
use erz_core::network::{net_eval_batch, net_expand, Instantiation, NetworkSpec, NodeValue};
use erz_core::polynomial::DEFAULT_POINT_BUDGET;
use erz_core::{Field, FieldElement, GridSpec, SparsePoly};

/// Largest default grid side for randomized tests.
const DEFAULT_MAX_DELTA: u64 = 1 << 16;

#[derive(Parser)]
#[command(name = "erz", version, about = "Exact circuit experiments: division elimination, identity tests, bound checks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Override the field of a config file (`F7`, `7`, `rationals`).
    #[arg(long, global = true)]
    field: Option<Field>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Sequence length for randomized tests.
    #[arg(long = "M", global = true)]
    m: Option<usize>,
    /// Grid side for randomized tests.
    #[arg(long, global = true)]
    delta: Option<u64>,
    /// Point enumeration budget.
    #[arg(long, global = true)]
    budget: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a network on a list of points.
    Eval {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        inst: Option<PathBuf>,
        #[arg(long)]
        points: PathBuf,
    },
    /// Compile a rational-activation network into a squaring network.
    Compile {
        #[arg(long)]
        network: PathBuf,
    },
    /// Expand a polynomial-activation network in its inputs.
    Expand {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        inst: Option<PathBuf>,
    },
    /// Randomized test that a network's output is the zero function.
    IdentityTest {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        inst: Option<PathBuf>,
    },
    /// Randomized test that two networks compute the same function.
    EquivTest {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        inst_a: Option<PathBuf>,
        #[arg(long)]
        inst_b: Option<PathBuf>,
    },
    /// Decide whether a point sequence is a correct test sequence.
    CtsOracle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Estimate the density of correct test sequences.
    CtsDensity {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate length conditions and bound formulas.
    Bounds {
        #[arg(long)]
        config: Option<PathBuf>,
        /// `key=value`, e.g. `deg_lci=1` or `L=1200`.
        #[arg(long = "set")]
        set: Vec<String>,
        /// Condition or formula name; all of them when omitted.
        #[arg(long)]
        which: Vec<String>,
    },
    /// Count the cells of a family inside a constructible set.
    Cells {
        #[arg(long)]
        config: PathBuf,
    },
    /// Count distinct restrictions of a classifier family to a point set.
    Growth {
        #[arg(long)]
        config: PathBuf,
    },
    /// Search for shattered subsets of a point pool.
    Vcdim {
        #[arg(long)]
        config: PathBuf,
    },
    /// Pham-system intersection count and nonvanishing witness.
    Evasive {
        #[arg(long)]
        config: PathBuf,
    },
}

/// A report and whether every checked assertion held.
struct Outcome {
    report: Value,
    ok: bool,
}

impl Outcome {
    fn ok(report: Value) -> Self {
        Outcome { report, ok: true }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_network(path: &Path, field: Option<Field>) -> Result<NetworkSpec> {
    let spec = NetworkSpec::from_json(&read(path)?).with_context(|| format!("loading network {}", path.display()))?;
    if let Some(f) = field {
        if f != spec.field() {
            bail!("network {} is over {}, not {f}", path.display(), spec.field());
        }
    }
    Ok(spec)
}

/// From a file, or random with stream `stream` under the run seed.
fn load_inst(spec: &NetworkSpec, path: Option<&Path>, seed: u64, stream: u64) -> Result<Instantiation> {
    match path {
        Some(p) => Instantiation::from_json(spec, &read(p)?).with_context(|| format!("loading instantiation {}", p.display())),
        None => Ok(Instantiation::random(spec, &mut trial_rng(seed, stream))),
    }
}

fn scalar(field: Field, v: &Value) -> Result<FieldElement> {
    let text = match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        other => bail!("expected a field element, got {other}"),
    };
    Ok(field.parse(&text)?)
}

fn points(field: Field, n: usize, v: &Value) -> Result<Vec<Vec<FieldElement>>> {
    let rows = v.as_array().ok_or_else(|| anyhow!("points must be an array"))?;
    rows.iter()
        .map(|r| {
            let r = r.as_array().ok_or_else(|| anyhow!("each point must be an array"))?;
            if r.len() != n {
                bail!("point has {} coordinates, expected {n}", r.len());
            }
            r.iter().map(|c| scalar(field, c)).collect()
        })
        .collect()
}

fn polys(field: Field, n: usize, texts: &[String]) -> Result<Vec<SparsePoly>> {
    texts.iter().map(|t| SparsePoly::parse(field, n, t).with_context(|| format!("parsing {t:?}"))).collect()
}

fn strings<T: ToString>(xs: &[T]) -> Vec<String> {
    xs.iter().map(ToString::to_string).collect()
}

fn eval(c: &Common, network: &Path, inst: Option<&Path>, pts: &Path) -> Result<Outcome> {
    let spec = load_network(network, c.field)?;
    let inst = load_inst(&spec, inst, c.seed, 0)?;
    let xs = points(spec.field(), spec.num_inputs(), &read_json(pts)?)?;
    let traces = net_eval_batch(&spec, &inst, &xs)?;
    let rows: Vec<Value> = xs
        .iter()
        .zip(&traces)
        .map(|(x, t)| {
            json!({
                "point": strings(x),
                "outputs": t.outputs().iter().map(|v| match v {
                    NodeValue::Defined(e) => json!(e.to_string()),
                    NodeValue::Undefined(at) => json!({ "undefined_at": at.to_string() }),
                }).collect::<Vec<_>>(),
            })
        })
        .collect();
    Ok(Outcome::ok(json!({ "command": "eval", "outputs": spec.outputs(), "results": rows })))
}

fn compile(c: &Common, network: &Path) -> Result<Outcome> {
    let spec = load_network(network, c.field)?;
    let r = compile_divfree(&spec)?;
    let ok = r.metrics.within_bounds;
    Ok(Outcome { report: serde_json::from_str(&r.to_json())?, ok })
}

fn expand(c: &Common, network: &Path, inst: Option<&Path>) -> Result<Outcome> {
    let spec = load_network(network, c.field)?;
    let inst = load_inst(&spec, inst, c.seed, 0)?;
    let ps = net_expand(&spec, &inst)?;
    let outs: Vec<Value> = spec
        .outputs()
        .iter()
        .zip(&ps)
        .map(|(o, p)| json!({ "node": o.to_string(), "poly": p.to_string(), "degree": p.total_degree(), "terms": p.num_terms() }))
        .collect();
    Ok(Outcome::ok(json!({ "command": "expand", "outputs": outs })))
}

fn run_test(c: &Common, target: &IdentityTarget, inst: &Instantiation, which: Condition, l: usize, s: usize) -> Result<Value> {
    let field = target.network.field();
    let order = field.order().ok_or_else(|| anyhow!("randomized tests need a finite field"))?;
    let delta = c.delta.unwrap_or(order.min(DEFAULT_MAX_DELTA));
    let inputs = FormulaInputs { length: Some(l as f64), space: Some(s as f64), ..Default::default() };
    let cond = cts_condition_eval(which, &inputs)?;
    let m = c.m.unwrap_or(cond.minimal_length.unwrap_or(1) as usize);
    let plan = CtsPlan { grid: GridSpec::new(field, target.network.num_inputs(), delta)?, length: m };
    let tgt = ZeroTestTarget::Network { target, inst };
    let report = randomized_zero_test(tgt, &plan, c.seed)?;
    let mut out = json!({
        "kind": target.kind,
        "verdict": match &report.verdict { Verdict::CertifiedNonzero(_) => "certified_nonzero", Verdict::AllZero => "all_zero" },
        "report": report,
        "length_condition": cts_condition_eval(which, &FormulaInputs { m_len: Some(m as f64), ..inputs })?,
        "compiled_size": target.network.stats().size,
    });
    if let Some(t) = c.trials {
        out["repeated"] = serde_json::to_value(all_zero_frequency(tgt, &plan, c.seed, t)?)?;
    }
    Ok(out)
}

fn identity_test(c: &Common, network: &Path, inst: Option<&Path>) -> Result<Outcome> {
    let spec = load_network(network, c.field)?;
    let src = load_inst(&spec, inst, c.seed, 1)?;
    let target = compile_identity_targets(&[(&spec, CompileOptions::default())])?;
    let st = spec.stats();
    let mut rep = run_test(c, &target, &target.instantiate(&[&src]), Condition::Cor59, st.size, st.space)?;
    rep["command"] = json!("identity-test");
    Ok(Outcome::ok(rep))
}

fn equiv_test(c: &Common, a: &Path, b: &Path, ia: Option<&Path>, ib: Option<&Path>) -> Result<Outcome> {
    let (sa, sb) = (load_network(a, c.field)?, load_network(b, c.field)?);
    let ia = load_inst(&sa, ia, c.seed, 1)?;
    let ib = load_inst(&sb, ib, c.seed, 2)?;
    let rev = CompileOptions { fan_in_order: FanInOrder::Reversed };
    let target = compile_identity_targets(&[(&sa, CompileOptions::default()), (&sb, rev)])?;
    let (ta, tb) = (sa.stats(), sb.stats());
    let inst = target.instantiate(&[&ia, &ib]);
    let mut rep = run_test(c, &target, &inst, Condition::Cor510, ta.size.max(tb.size), ta.space.max(tb.space))?;
    rep["command"] = json!("equiv-test");
    Ok(Outcome::ok(rep))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleConfig {
    field: Field,
    n: usize,
    family: Vec<String>,
    #[serde(default)]
    sigma: Option<Vec<String>>,
    sequence: Value,
}

fn cts_oracle_cmd(c: &Common, config: &Path) -> Result<Outcome> {
    let cfg: OracleConfig = read_json(config)?;
    let field = c.field.unwrap_or(cfg.field);
    let fam = polys(field, cfg.n, &cfg.family)?;
    let sigma = match &cfg.sigma {
        Some(s) => polys(field, cfg.n, s)?,
        None => vec![SparsePoly::zero(field, cfg.n)],
    };
    let seq = points(field, cfg.n, &cfg.sequence)?;
    let is_cts = cts_oracle(&seq, &fam, &sigma);
    let escaping: Vec<String> = fam
        .iter()
        .filter(|f| !sigma.contains(f) && seq.iter().all(|x| f.eval(x).map(|v| v.is_zero()).unwrap_or(false)))
        .map(ToString::to_string)
        .collect();
    Ok(Outcome::ok(json!({ "command": "cts-oracle", "field": field, "is_cts": is_cts, "vanishing_outside_sigma": escaping })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityConfig {
    field: Field,
    n: usize,
    family: Vec<String>,
    grid_side: Option<u64>,
    length: usize,
    deg_lci: f64,
    dim: f64,
}

fn cts_density_cmd(c: &Common, config: &Path) -> Result<Outcome> {
    let cfg: DensityConfig = read_json(config)?;
    let field = c.field.unwrap_or(cfg.field);
    let fam = polys(field, cfg.n, &cfg.family)?;
    let side = cfg.grid_side.or(c.delta).or(field.order()).ok_or_else(|| anyhow!("grid_side required over {field}"))?;
    let grid = GridSpec::new(field, cfg.n, side)?;
    let trials = c.trials.unwrap_or(1000);
    let r = cts_density_estimate(&fam, &grid, cfg.length, trials, c.seed, cfg.deg_lci, cfg.dim)?;
    Ok(Outcome::ok(json!({ "command": "cts-density", "field": field, "grid_side": side, "seed": c.seed, "report": r })))
}

const CONDITIONS: [&str; 3] = ["thm411", "cor59", "cor510"];
const FORMULAS: [&str; 11] =
    ["cells", "algebra", "growth", "sauer", "krull", "pham", "degrees", "image", "density", "prob59", "prob510"];

fn bounds(c: &Common, config: Option<&Path>, set: &[String], which: &[String]) -> Result<Outcome> {
    let mut map = match config {
        Some(p) => match read_json::<Value>(p)? {
            Value::Object(m) => m,
            _ => bail!("bounds config must be a JSON object"),
        },
        None => serde_json::Map::new(),
    };
    for kv in set {
        let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("--set expects key=value, got {kv:?}"))?;
        let x: f64 = v.trim().parse().with_context(|| format!("value of {k}"))?;
        map.insert(k.trim().to_string(), json!(x));
    }
    if let Some(m) = c.m {
        map.entry("M").or_insert(json!(m));
    }
    if let Some(d) = c.delta {
        map.entry("delta").or_insert(json!(d));
    }
    let inputs: FormulaInputs = serde_json::from_value(Value::Object(map)).context("bound inputs")?;
    let names: Vec<String> = if which.is_empty() {
        CONDITIONS.iter().chain(FORMULAS.iter()).map(|s| s.to_string()).collect()
    } else {
        which.to_vec()
    };
    let mut results = serde_json::Map::new();
    for name in &names {
        let v = if CONDITIONS.contains(&name.as_str()) {
            match cts_condition_eval(name.parse()?, &inputs) {
                Ok(r) => serde_json::to_value(r)?,
                Err(e) => json!({ "error": e.to_string() }),
            }
        } else if FORMULAS.contains(&name.as_str()) {
            let f: Formula = name.parse()?;
            match bound_formula(f, &inputs) {
                Ok(r) => serde_json::to_value(r)?,
                Err(e) => json!({ "error": e.to_string() }),
            }
        } else {
            bail!("unknown condition or formula {name:?}");
        };
        results.insert(name.clone(), v);
    }
    Ok(Outcome::ok(json!({ "command": "bounds", "inputs": inputs, "results": results })))
}

fn cells(c: &Common, config: &Path) -> Result<Outcome> {
    let mut cfg: CellFile = read_json(config)?;
    if let Some(f) = c.field {
        cfg.field = f;
    }
    let budget = c.budget.or(cfg.budget).unwrap_or(DEFAULT_POINT_BUDGET);
    let exp = cfg.into_experiment()?;
    let r = cells_enumerate(&exp, budget)?;
    let ok = r.partition_ok && r.within_bound && r.algebra.as_ref().is_none_or(|a| a.ok);
    Ok(Outcome { report: json!({ "command": "cells", "report": r }), ok })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GrowthConfig {
    family: FamilyFile,
    points: Value,
}

fn family(c: &Common, mut f: FamilyFile) -> Result<erz_core::ClassifierFamily> {
    if let Some(k) = c.field {
        f.field = k;
    }
    Ok(f.into_family(c.budget.unwrap_or(DEFAULT_POINT_BUDGET))?)
}

fn growth(c: &Common, config: &Path) -> Result<Outcome> {
    let cfg: GrowthConfig = read_json(config)?;
    let fam = family(c, cfg.family)?;
    let xs = points(fam.field(), fam.num_vars(), &cfg.points)?;
    let r = growth_measure(&fam, &xs)?;
    let ok = r.within_bound;
    Ok(Outcome { report: json!({ "command": "growth", "members": fam.members().len(), "report": r }), ok })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SauerConfig {
    vc_upper: u64,
    sizes: Vec<usize>,
    #[serde(default = "default_samples")]
    samples: usize,
}

fn default_samples() -> usize {
    8
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VcConfig {
    family: FamilyFile,
    pool: Value,
    s_max: usize,
    #[serde(default)]
    sauer: Option<SauerConfig>,
}

fn vcdim(c: &Common, config: &Path) -> Result<Outcome> {
    let cfg: VcConfig = read_json(config)?;
    let fam = family(c, cfg.family)?;
    let pool = points(fam.field(), fam.num_vars(), &cfg.pool)?;
    let sauer = cfg.sauer.map(|s| SauerOptions { vc_upper: s.vc_upper, sizes: s.sizes, samples: s.samples, seed: c.seed });
    let r = vcdim_search(&fam, &pool, cfg.s_max, sauer.as_ref(), c.budget.unwrap_or(DEFAULT_VC_BUDGET))?;
    let ok = r.reverified && r.krull_ok && r.sauer_ok != Some(false);
    Ok(Outcome { report: json!({ "command": "vcdim", "members": fam.members().len(), "report": r }), ok })
}

fn evasive(c: &Common, config: &Path) -> Result<Outcome> {
    let mut cfg: PhamFile = read_json(config)?;
    if let Some(f) = c.field {
        cfg.field = f;
    }
    let (sys, v, f) = cfg.parts()?;
    let r = pham_evasive_check(&sys, &v, f.as_ref(), c.budget.unwrap_or(cfg.budget()))?;
    let ok = r.within_bound;
    let eqs: Vec<String> = strings(&sys.equations());
    Ok(Outcome { report: json!({ "command": "evasive", "equations": eqs, "report": r }), ok })
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    let c = &cli.common;
    match &cli.command {
        Command::Eval { network, inst, points } => eval(c, network, inst.as_deref(), points),
        Command::Compile { network } => compile(c, network),
        Command::Expand { network, inst } => expand(c, network, inst.as_deref()),
        Command::IdentityTest { network, inst } => identity_test(c, network, inst.as_deref()),
        Command::EquivTest { a, b, inst_a, inst_b } => equiv_test(c, a, b, inst_a.as_deref(), inst_b.as_deref()),
        Command::CtsOracle { config } => cts_oracle_cmd(c, config),
        Command::CtsDensity { config } => cts_density_cmd(c, config),
        Command::Bounds { config, set, which } => bounds(c, config.as_deref(), set, which),
        Command::Cells { config } => cells(c, config),
        Command::Growth { config } => growth(c, config),
        Command::Vcdim { config } => vcdim(c, config),
        Command::Evasive { config } => evasive(c, config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = std::env::var("ERZ_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let outcome = match dispatch(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let mut text = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
    text.push('\n');
    let written = match &cli.common.out {
        Some(p) => std::fs::write(p, &text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    };
    if let Err(e) = written {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    if outcome.ok {
        ExitCode::SUCCESS
    } else {
        eprintln!("assertion violated; see report");
        ExitCode::from(2)
    }
}
