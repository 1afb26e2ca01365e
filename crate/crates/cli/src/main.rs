//! `hyperdyn`: command-line front end for hyperdyn-core.
//!
//! Every command prints (or writes with `--out`) a JSON report
//! `{tool, version, command, config, verdict, result}`. Exit codes: 0 for a
//! positive verdict, 2 for a negative one, 1 for errors.

mod models;
mod report;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hyperdyn_core::affine_horseshoe::{
    blender_entropy_hypothesis, essential_center_test, lyapunov_spectrum, plaque_hit_bound_check, reverse_doubling_search, validate, DoublingResult,
    MassOptions,
};
use hyperdyn_core::blender_verify::{
    blender_graph_test, build_transversal_recurrent_set, monte_carlo_blender, robustness_probe, transversal_recurrence_check, BlenderChart,
    GraphVerdict, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use hyperdyn_core::circle_cover::{cover_circle, parse_rational};
use hyperdyn_core::cocycle::{
    common_invariant_measure_test, fiber_bunching_check, from_rows, holonomy, lyapunov_exponents, Side, SymbolicPoint as CocyclePoint,
};
use hyperdyn_core::ifs_blender::{
    center_ifs_unchecked, coverage_claim_bruteforce, perturb_and_verify, recurrent_compact_check, refinement_sweep, search_recurrent_compact,
    PerturbOptions,
};
use hyperdyn_core::katok::{
    assemble_affine, assemble_horseshoe, entropy_estimate, marker_refine, select_return_set, ReturnParams, ReturnSet, SymbolicSystem, TestFunction,
};
use hyperdyn_core::shadowing::{shadow_affine, shadow_nonlinear, Boundary};
use hyperdyn_core::subshift::{extract_full_shift, is_bordered, parry_measure, top_entropy, word_count_table};
use hyperdyn_core::{CenterIfs, Error, GridSet, HyperbolicSequence, LipschitzGraph, PseudoOrbit, StandardAffineHorseshoe, VERSION};
use models::{load_cocycle, load_gridset, load_horseshoe, load_sft, parse_grid, parse_matrix, parse_word};
use report::{parse_json, read_file, to_value, write_csv, write_file, CliError, CliResult, Report, Verdict, TOOL};
use serde::Serialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(name = "hyperdyn", version, about = "Constructive hyperbolic dynamics: subshifts, cocycles, horseshoes, blenders, shadowing")]
struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true, env = "HYPERDYN_THREADS")]
    threads: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write the command's table as CSV (sweep commands only).
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Cmd {
    /// Subshifts of finite type.
    #[command(subcommand)]
    Sft(SftCmd),
    /// Locally constant linear cocycles.
    #[command(subcommand)]
    Cocycle(CocycleCmd),
    /// Standard affine horseshoes.
    #[command(subcommand)]
    Horseshoe(HorseshoeCmd),
    /// Central iterated function systems.
    #[command(subcommand)]
    Ifs(IfsCmd),
    /// Blender verification.
    #[command(subcommand)]
    Blender(BlenderCmd),
    /// Shadow a pseudo-orbit of a hyperbolic sequence.
    Shadow(ShadowArgs),
    /// Katok-style horseshoe selection.
    #[command(subcommand)]
    Katok(KatokCmd),
    /// Cover a finite subset of the circle by equal arcs with long gaps.
    CoverCircle(CoverArgs),
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SftCmd {
    /// Topological entropy and Parry measure.
    Entropy {
        /// `full:K`, `golden`, `cycle:P`, or an SFT text/JSON file.
        #[arg(long)]
        model: String,
        /// Display the entropy in bits as well.
        #[arg(long)]
        bits: bool,
    },
    /// Extract a full-shift subsystem with entropy above `h − ε`.
    Extract {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 0.3)]
        epsilon: f64,
        #[arg(long, default_value_t = 24)]
        n_cap: usize,
    },
    /// Admissible word counts for lengths 1..=n-max (CSV table).
    Words {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 12)]
        n_max: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SideArg {
    Stable,
    Unstable,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum CocycleCmd {
    /// Lyapunov exponents under the Parry measure of the base.
    Lyapunov {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 64)]
        orbits: usize,
        #[arg(long, default_value_t = 2000)]
        length: usize,
    },
    /// Stable or unstable holonomy between two related points (JSON).
    Holonomy {
        #[arg(long)]
        model: String,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long, value_enum, default_value = "stable")]
        side: SideArg,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 200)]
        n_max: usize,
    },
    /// Fiber-bunching check on sampled pairs.
    Bunching {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 10)]
        n_max: usize,
        #[arg(long, default_value_t = 4)]
        p_max: usize,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Whether two matrices share an invariant measure on projective space.
    CommonMeasure {
        /// Row-major JSON matrix, e.g. `[[2,0],[0,1]]`.
        #[arg(long)]
        b: String,
        #[arg(long)]
        bp: String,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum HorseshoeCmd {
    /// Check the model invariants.
    Validate {
        /// `smale`, `overlap`, `disjoint`, `integrable`, or a JSON file.
        #[arg(long)]
        model: String,
    },
    /// Lyapunov spectrum of the linear part.
    Spectrum {
        #[arg(long)]
        model: String,
    },
    /// Entropy hypothesis and the admissible `c`.
    Hypothesis {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 1)]
        k: u32,
        /// Defaults to log(number of branches).
        #[arg(long)]
        h_top: Option<f64>,
    },
    /// Classify the centre as essential or jointly integrable.
    Essential {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Plaque hit count against `⌈βⁿ⌉`.
    PlaqueHits {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
    },
    /// Search `(ρ, η)` for the reverse doubling property.
    ReverseDoubling {
        #[arg(long)]
        model: String,
        #[arg(long, default_value = "0.2,0.1")]
        rho_grid: String,
        #[arg(long, default_value = "0.5,0.25")]
        eta_grid: String,
        #[arg(long, default_value_t = 4)]
        samples: usize,
        #[arg(long, default_value_t = 4)]
        radii: usize,
    },
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum IfsCmd {
    /// Check a GridSet for the recurrent compact condition.
    CheckRecurrent {
        /// Horseshoe model, centre IFS JSON, or `scalar:L:v1,v2,...`.
        #[arg(long)]
        model: String,
        #[arg(long)]
        set: String,
    },
    /// Search for a recurrent compact set on a grid.
    SearchRecurrent {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 1000)]
        cells: usize,
        /// Save the certified set in GridSet text format.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Random perturbation families and recurrent certification.
    Perturb {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        c: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Exhaustive coverage claim at depth n.
    Claim {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
    },
    /// Certification of a box at 1×, 2× and 4× resolution (CSV table).
    Sweep {
        #[arg(long)]
        model: String,
        #[arg(long)]
        lo: String,
        #[arg(long)]
        hi: String,
        #[arg(long, default_value_t = 1000)]
        cells: usize,
    },
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum BlenderCmd {
    /// Random 1-Lipschitz graphs (or one graph file) against the blender.
    Test {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 200)]
        graphs: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Grid resolution for the recurrent centre set fixing the chart.
        #[arg(long, default_value_t = 1000)]
        cells: usize,
        /// A single graph as JSON `{"values": [[...], ...]}`.
        #[arg(long)]
        graph: Option<String>,
    },
    /// Transversal recurrence of the centre set times the stable slabs.
    Transversal {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 1000)]
        cells: usize,
        /// Centre set as a GridSet file; searched on the grid if absent.
        #[arg(long)]
        set: Option<String>,
        #[arg(long, default_value_t = 4)]
        n_max: usize,
    },
    /// Re-certification under random translation perturbations.
    Robustness {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 1000)]
        cells: usize,
        /// Centre set as a GridSet file; searched on the grid if absent.
        #[arg(long)]
        set: Option<String>,
        #[arg(long, default_value_t = 1e-3)]
        magnitude: f64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum BoundaryArg {
    Zero,
    Periodic,
}

#[derive(Args, Debug, Serialize)]
struct ShadowArgs {
    /// Hyperbolic sequence JSON.
    #[arg(long)]
    seq: String,
    /// Pseudo-orbit JSON.
    #[arg(long)]
    pseudo: String,
    #[arg(long, value_enum, default_value = "zero")]
    boundary: BoundaryArg,
    /// Use the Picard solver for sequences with a remainder.
    #[arg(long)]
    nonlinear: bool,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
}

#[derive(Args, Debug, Serialize)]
struct SelectArgs {
    #[arg(long, default_value = "full:2")]
    model: String,
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 0.04)]
    xi: f64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long, default_value_t = 1)]
    n0: usize,
    #[arg(long)]
    period: Option<usize>,
    /// Cylinder indicator test functions, e.g. `--test 0 --test 01`.
    #[arg(long = "test", default_values_t = vec!["0".to_string()])]
    tests: Vec<String>,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum KatokCmd {
    /// Separated-set and cover counts; `--n-max` sweeps n (CSV table).
    Entropy {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Select a certified return set.
    Select {
        #[command(flatten)]
        sel: SelectArgs,
        /// Save the return set as JSON.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Assemble the horseshoe over a return set.
    Assemble {
        #[command(flatten)]
        sel: SelectArgs,
        /// Use a saved return set instead of selecting one.
        #[arg(long)]
        return_set: Option<String>,
        /// Also assemble in this affine horseshoe (its coding must be the model).
        #[arg(long)]
        affine: Option<String>,
        #[arg(long, default_value_t = 4)]
        code_len: usize,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Marker refinement into a full-shift subsystem.
    Refine {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 0.3)]
        delta: f64,
    },
}

#[derive(Args, Debug, Serialize)]
struct CoverArgs {
    /// Comma-separated rationals or decimals in [0, 1).
    #[arg(long)]
    points: String,
    /// Gap ratio `a` in (0, 1/2), rational or decimal.
    #[arg(long)]
    a: String,
}

type Table = (Vec<&'static str>, Vec<Vec<String>>);

struct Outcome {
    verdict: Verdict,
    result: Value,
    table: Option<Table>,
}

impl Outcome {
    fn new(ok: bool, result: Value) -> Outcome {
        Outcome { verdict: Verdict::from_bool(ok), result, table: None }
    }
}

/// `group sub`, read off the serialized (externally tagged) command.
fn command_name(cmd: &Cmd) -> String {
    let v = to_value(cmd);
    let key = |v: &Value| v.as_object().and_then(|m| m.keys().next().cloned()).unwrap_or_default();
    let top = key(&v);
    match cmd {
        Cmd::Shadow(_) | Cmd::CoverCircle(_) => top,
        _ => format!("{top} {}", key(&v[&top])),
    }
}

fn run(cli: &Cli) -> CliResult<Report> {
    let out = dispatch(&cli.cmd, cli.seed)?;
    if let Some(path) = &cli.csv {
        let Some((header, rows)) = &out.table else {
            return Err(CliError::Usage("this command has no table output for --csv".into()));
        };
        write_csv(path, header, rows)?;
    }
    Ok(Report {
        tool: TOOL,
        version: VERSION,
        command: command_name(&cli.cmd),
        config: json!({ "seed": cli.seed, "args": to_value(&cli.cmd) }),
        verdict: out.verdict,
        result: out.result,
    })
}

fn dispatch(cmd: &Cmd, seed: u64) -> CliResult<Outcome> {
    match cmd {
        Cmd::Sft(c) => sft(c),
        Cmd::Cocycle(c) => cocycle(c, seed),
        Cmd::Horseshoe(c) => horseshoe(c, seed),
        Cmd::Ifs(c) => ifs(c, seed),
        Cmd::Blender(c) => blender(c, seed),
        Cmd::Shadow(a) => shadow(a),
        Cmd::Katok(c) => katok(c, seed),
        Cmd::CoverCircle(a) => cover(a),
    }
}

fn sft(cmd: &SftCmd) -> CliResult<Outcome> {
    match cmd {
        SftCmd::Entropy { model, bits } => {
            let s = load_sft(model)?;
            let h = top_entropy(&s)?;
            let mut r = json!({
                "alphabet_size": s.alphabet_size,
                "entropy": h,
                "transitive": s.is_transitive(),
            });
            if let Ok(mu) = parry_measure(&s) {
                r["parry"] = to_value(&mu);
            }
            if *bits {
                r["entropy_bits"] = json!(h / std::f64::consts::LN_2);
            }
            Ok(Outcome::new(true, r))
        }
        SftCmd::Extract { model, epsilon, n_cap } => {
            let s = load_sft(model)?;
            let h = top_entropy(&s)?;
            let x = extract_full_shift(&s, *epsilon, *n_cap)?;
            let disjoint = x.verify_disjoint_shifts();
            let admissible = x.verify_admissible(&s);
            let unbordered = !is_bordered(&x.marker);
            let entropy = x.entropy();
            let ok = disjoint.is_ok() && admissible && (x.degenerate || (unbordered && entropy > h - epsilon));
            Ok(Outcome::new(
                ok,
                json!({
                    "extraction": to_value(&x),
                    "entropy": entropy,
                    "target": h - epsilon,
                    "log_count": x.log_count(),
                    "marker_unbordered": unbordered,
                    "disjoint_shifts": disjoint.err().unwrap_or_else(|| "verified".into()),
                    "admissible": admissible,
                }),
            ))
        }
        SftCmd::Words { model, n_max } => {
            let s = load_sft(model)?;
            let t = word_count_table(&s, *n_max);
            let mut rows = Vec::new();
            let mut counts = Vec::new();
            for n in 1..=*n_max {
                let c = t.get(&n).copied().unwrap_or(0);
                let rate = if c > 0 { (c as f64).ln() / n as f64 } else { 0.0 };
                rows.push(vec![n.to_string(), c.to_string(), format!("{rate}")]);
                counts.push(json!({ "n": n, "count": c.to_string(), "rate": rate }));
            }
            Ok(Outcome { verdict: Verdict::Positive, result: json!({ "counts": counts }), table: Some((vec!["n", "count", "rate"], rows)) })
        }
    }
}

fn parse_point(s: &str) -> CliResult<CocyclePoint> {
    let text = if Path::new(s).is_file() { read_file(Path::new(s))? } else { s.to_string() };
    parse_json("<symbolic point>", &text)
}

fn cocycle(cmd: &CocycleCmd, seed: u64) -> CliResult<Outcome> {
    match cmd {
        CocycleCmd::Lyapunov { model, orbits, length } => {
            let c = load_cocycle(model)?;
            let mu = parry_measure(&c.base)?;
            let est = lyapunov_exponents(&c, &mu, *orbits, *length, seed)?;
            Ok(Outcome::new(true, to_value(&est)))
        }
        CocycleCmd::Holonomy { model, x, y, side, tol, n_max } => {
            let c = load_cocycle(model)?;
            let side = match side {
                SideArg::Stable => Side::Stable,
                SideArg::Unstable => Side::Unstable,
            };
            let hm = holonomy(&c, &parse_point(x)?, &parse_point(y)?, side, *tol, *n_max)?;
            Ok(Outcome::new(true, to_value(&hm)))
        }
        CocycleCmd::Bunching { model, c: cc, eps, n_max, p_max, samples } => {
            let c = load_cocycle(model)?;
            let r = fiber_bunching_check(&c, *cc, *eps, *n_max, *p_max, *samples, seed)?;
            Ok(Outcome::new(r.pass, to_value(&r)))
        }
        CocycleCmd::CommonMeasure { b, bp, tol } => {
            let b = from_rows(&parse_matrix(b)?)?;
            let bp = from_rows(&parse_matrix(bp)?)?;
            let v = common_invariant_measure_test(&b, &bp, *tol)?;
            Ok(Outcome::new(true, json!({ "exists": v.exists(), "verdict": to_value(&v) })))
        }
    }
}

fn horseshoe(cmd: &HorseshoeCmd, seed: u64) -> CliResult<Outcome> {
    let validated = |m: &str| -> CliResult<StandardAffineHorseshoe> {
        let h = load_horseshoe(m)?;
        validate(&h).map_err(|e| CliError::Validation { file: m.into(), msg: e.to_string() })?;
        Ok(h)
    };
    match cmd {
        HorseshoeCmd::Validate { model } => {
            let h = load_horseshoe(model)?;
            let r = validate(&h).map_err(|e| CliError::Validation { file: model.into(), msg: e.to_string() })?;
            Ok(Outcome::new(true, to_value(&r)))
        }
        HorseshoeCmd::Spectrum { model } => {
            let h = load_horseshoe(model)?;
            Ok(Outcome::new(true, to_value(&lyapunov_spectrum(&h.linear)?)))
        }
        HorseshoeCmd::Hypothesis { model, k, h_top } => {
            let h = load_horseshoe(model)?;
            let r = blender_entropy_hypothesis(&h.linear, h.n_branches(), *k, *h_top)?;
            Ok(Outcome::new(r.eq4_ok, to_value(&r)))
        }
        HorseshoeCmd::Essential { model, tol } => {
            let h = validated(model)?;
            Ok(Outcome::new(true, to_value(&essential_center_test(&h, *tol)?)))
        }
        HorseshoeCmd::PlaqueHits { model, n, samples } => {
            let h = validated(model)?;
            let r = plaque_hit_bound_check(&h, *n, *samples, seed)?;
            Ok(Outcome::new(r.max_count <= r.bound, to_value(&r)))
        }
        HorseshoeCmd::ReverseDoubling { model, rho_grid, eta_grid, samples, radii } => {
            let h = validated(model)?;
            let r = reverse_doubling_search(&h, &parse_grid(rho_grid)?, &parse_grid(eta_grid)?, *samples, *radii, seed, &MassOptions::default())?;
            Ok(Outcome::new(matches!(r, DoublingResult::Certified { .. }), to_value(&r)))
        }
    }
}

/// `scalar:L:v1,v2,...`, a centre IFS JSON file, or a horseshoe model.
fn load_ifs(spec: &str) -> CliResult<CenterIfs> {
    if let Some(rest) = spec.strip_prefix("scalar:") {
        let (l, vs) = rest.split_once(':').ok_or_else(|| CliError::Usage(format!("expected scalar:L:v1,v2,... in {spec:?}")))?;
        let l: f64 = l.parse().map_err(|_| CliError::Usage(format!("bad contraction in {spec:?}")))?;
        let v = parse_grid(vs)?;
        return Ok(CenterIfs::new(vec![l], v.into_iter().map(|x| vec![x]).collect())?);
    }
    if Path::new(spec).is_file() {
        let text = read_file(Path::new(spec))?;
        let v: Value = parse_json(spec, &text)?;
        if v.get("contraction").is_some() {
            let ifs: CenterIfs = parse_json(spec, &text)?;
            return CenterIfs::new(ifs.contraction, ifs.translations).map_err(|e| CliError::Validation { file: spec.into(), msg: e.to_string() });
        }
    }
    let h = load_horseshoe(spec)?;
    Ok(center_ifs_unchecked(&h)?)
}

fn ifs(cmd: &IfsCmd, seed: u64) -> CliResult<Outcome> {
    match cmd {
        IfsCmd::CheckRecurrent { model, set } => {
            let f = load_ifs(model)?;
            let k = load_gridset(set)?;
            if k.dim != f.dim() {
                return Err(CliError::Validation { file: set.clone(), msg: format!("set has dimension {}, IFS has {}", k.dim, f.dim()) });
            }
            let v = recurrent_compact_check(&f, &k);
            Ok(Outcome::new(v.is_certified(), json!({ "cells": k.len(), "verdict": to_value(&v) })))
        }
        IfsCmd::SearchRecurrent { model, cells, save } => {
            let f = load_ifs(model)?;
            let o = search_recurrent_compact(&f, *cells);
            if let (Some(path), Some(set)) = (save, &o.set) {
                write_file(path, &set.to_text())?;
            }
            let result = match &o.set {
                Some(k) => json!({ "verdict": "certified", "iterations": o.iterations, "cells": k.len(), "hull": k.hull_1d() }),
                None => json!({ "verdict": "none_found", "iterations": o.iterations }),
            };
            Ok(Outcome::new(o.set.is_some(), result))
        }
        IfsCmd::Perturb { model, n, c, beta, trials } => {
            let f = load_ifs(model)?;
            let r = perturb_and_verify(&f, *n, *c, *beta, *trials, seed, &PerturbOptions::default())?;
            Ok(Outcome::new(r.success_count > 0, to_value(&r)))
        }
        IfsCmd::Claim { model, n, beta } => {
            let f = load_ifs(model)?;
            let r = coverage_claim_bruteforce(&f, *n, *beta)?;
            Ok(Outcome::new(r.holds, to_value(&r)))
        }
        IfsCmd::Sweep { model, lo, hi, cells } => {
            let f = load_ifs(model)?;
            let (lo, hi) = (parse_grid(lo)?, parse_grid(hi)?);
            if lo.len() != f.dim() || hi.len() != f.dim() {
                return Err(CliError::Usage(format!("--lo and --hi need {} coordinates", f.dim())));
            }
            let sweep = refinement_sweep(&f, &lo, &hi, *cells);
            let rows = sweep.iter().map(|(c, ok)| vec![c.to_string(), ok.to_string()]).collect();
            let all = sweep.iter().all(|(_, ok)| *ok);
            Ok(Outcome {
                verdict: Verdict::from_bool(all),
                result: json!({ "sweep": sweep.iter().map(|(c, ok)| json!({ "cells": c, "certified": ok })).collect::<Vec<_>>() }),
                table: Some((vec!["cells", "certified"], rows)),
            })
        }
    }
}

fn centre_set(h: &StandardAffineHorseshoe, cells: usize) -> CliResult<Option<GridSet>> {
    let f = center_ifs_unchecked(h)?;
    Ok(search_recurrent_compact(&f, cells).set)
}

fn given_or_searched(h: &StandardAffineHorseshoe, set: Option<&str>, cells: usize) -> CliResult<Option<GridSet>> {
    match set {
        Some(p) => load_gridset(p).map(Some),
        None => centre_set(h, cells),
    }
}

fn blender(cmd: &BlenderCmd, seed: u64) -> CliResult<Outcome> {
    match cmd {
        BlenderCmd::Test { model, graphs, max_iter, tol, cells, graph } => {
            let h = load_horseshoe(model)?;
            let k = centre_set(&h, *cells)?;
            let chart = BlenderChart::for_model(&h, k.as_ref())?;
            if let Some(g) = graph {
                let g: LipschitzGraph = parse_json(g, &read_file(Path::new(g))?)?;
                let g = LipschitzGraph::new(g.values).map_err(|e| CliError::Validation { file: "graph".into(), msg: e.to_string() })?;
                let v = blender_graph_test(&h, &chart, &g, *max_iter, *tol)?;
                let ok = matches!(v, GraphVerdict::Intersects { .. });
                return Ok(Outcome::new(ok, json!({ "chart": to_value(&chart), "verdict": to_value(&v) })));
            }
            let r = monte_carlo_blender(&h, &chart, *graphs, *max_iter, *tol, seed)?;
            Ok(Outcome::new(r.intersect_count == r.n_graphs && r.recertified_count == r.n_graphs, to_value(&r)))
        }
        BlenderCmd::Transversal { model, cells, set, n_max } => {
            let h = load_horseshoe(model)?;
            let Some(kc) = given_or_searched(&h, set.as_deref(), *cells)? else {
                return Ok(Outcome::new(false, json!({ "verdict": "no recurrent centre set found" })));
            };
            let k = build_transversal_recurrent_set(&h, &kc)?;
            let v = transversal_recurrence_check(&h, &k, *n_max)?;
            Ok(Outcome::new(v.is_certified(), json!({ "centre_cells": kc.len(), "verdict": to_value(&v) })))
        }
        BlenderCmd::Robustness { model, cells, set, magnitude, trials } => {
            let h = load_horseshoe(model)?;
            let Some(kc) = given_or_searched(&h, set.as_deref(), *cells)? else {
                return Ok(Outcome::new(false, json!({ "verdict": "no recurrent centre set found" })));
            };
            let r = robustness_probe(&h, &kc, *magnitude, *trials, seed)?;
            Ok(Outcome::new(r.certified_count == r.trials, to_value(&r)))
        }
    }
}

fn shadow(a: &ShadowArgs) -> CliResult<Outcome> {
    let seq: HyperbolicSequence = parse_json(&a.seq, &read_file(Path::new(&a.seq))?)?;
    let po: PseudoOrbit = parse_json(&a.pseudo, &read_file(Path::new(&a.pseudo))?)?;
    let boundary = match a.boundary {
        BoundaryArg::Zero => Boundary::ZeroClamp,
        BoundaryArg::Periodic => Boundary::Periodic,
    };
    let o = if a.nonlinear { shadow_nonlinear(&seq, &po, &boundary, a.tol, a.max_iter)? } else { shadow_affine(&seq, &po, &boundary)? };
    let within = o.max_deviation <= o.theta * o.epsilon * (1.0 + 1e-12) + 1e-15;
    Ok(Outcome::new(within, json!({ "within_bound": within, "orbit": to_value(&o) })))
}

fn symbolic_system(sel: &SelectArgs) -> CliResult<SymbolicSystem> {
    let sft = load_sft(&sel.model)?;
    let tests = sel.tests.iter().map(|t| parse_word(t).map(|w| TestFunction::indicator(&w))).collect::<CliResult<Vec<_>>>()?;
    Ok(SymbolicSystem::with_mme(sft, tests)?)
}

fn return_params(sel: &SelectArgs) -> ReturnParams {
    ReturnParams { delta: sel.delta, gamma: sel.gamma, xi: sel.xi, rho: sel.rho, n0: sel.n0, eps: sel.eps, period: sel.period }
}

fn shortfall(e: Error) -> CliResult<Outcome> {
    match e {
        Error::CardinalityShortfall { achieved, required, attrition } => Ok(Outcome::new(
            false,
            json!({
                "verdict": "cardinality_shortfall",
                "achieved": achieved,
                "required": required,
                "attrition": attrition.iter().map(|(s, n)| json!({ "stage": s, "count": n })).collect::<Vec<_>>(),
            }),
        )),
        e => Err(e.into()),
    }
}

fn return_summary(r: &ReturnSet) -> Value {
    json!({
        "entropy": r.entropy,
        "m": r.m,
        "n": r.n,
        "period": r.period,
        "y_count": r.points.len(),
        "required": r.required,
        "center": r.center,
        "attrition": r.attrition.iter().map(|(s, n)| json!({ "stage": s, "count": n })).collect::<Vec<_>>(),
        "measure_xm": r.measure_xm,
        "measure_condition_met": r.measure_condition_met,
        "chain": to_value(&r.chain),
        "certificate": to_value(&r.certificate),
    })
}

fn katok(cmd: &KatokCmd, seed: u64) -> CliResult<Outcome> {
    match cmd {
        KatokCmd::Entropy { model, n, rho, beta, n_max } => {
            let sys = SymbolicSystem::with_mme(load_sft(model)?, Vec::new())?;
            let h = sys.entropy();
            let ns: Vec<usize> = match n_max {
                Some(m) => (1..=*m).collect(),
                None => vec![*n],
            };
            let mut rows = Vec::new();
            let mut ests = Vec::new();
            for &k in &ns {
                let e = entropy_estimate(&sys, k, *rho, *beta)?;
                rows.push(vec![k.to_string(), e.lower.to_string(), e.upper.to_string(), format!("{}", e.lower_rate), format!("{}", e.upper_rate)]);
                ests.push(to_value(&e));
            }
            Ok(Outcome {
                verdict: Verdict::Positive,
                result: json!({ "entropy": h, "estimates": ests }),
                table: Some((vec!["n", "lower", "upper", "lower_rate", "upper_rate"], rows)),
            })
        }
        KatokCmd::Select { sel, save } => {
            let sys = symbolic_system(sel)?;
            let r = match select_return_set(&sys, &return_params(sel)) {
                Ok(r) => r,
                Err(e) => return shortfall(e),
            };
            if let Some(p) = save {
                write_file(p, &serde_json::to_string(&r).expect("return set serializes"))?;
            }
            Ok(Outcome::new(true, return_summary(&r)))
        }
        KatokCmd::Assemble { sel, return_set, affine, code_len, samples } => {
            let sys = symbolic_system(sel)?;
            let r: ReturnSet = match return_set {
                Some(p) => parse_json(p, &read_file(Path::new(p))?)?,
                None => match select_return_set(&sys, &return_params(sel)) {
                    Ok(r) => r,
                    Err(e) => return shortfall(e),
                },
            };
            let a = assemble_horseshoe(&sys, &r, *code_len, *samples, seed)?;
            let mut result = json!({ "return_set": return_summary(&r), "symbolic": to_value(&a) });
            let mut ok = a.exceeds;
            if let Some(m) = affine {
                let h = load_horseshoe(m)?;
                let aff = assemble_affine(&h, &r, 3, seed)?;
                ok &= aff.within_bound;
                result["affine"] = to_value(&aff);
            }
            Ok(Outcome::new(ok, result))
        }
        KatokCmd::Refine { model, n, delta } => {
            let s = load_sft(model)?;
            let r = marker_refine(&s, *n, *delta)?;
            Ok(Outcome::new(r.degenerate || r.entropy >= r.target, to_value(&r)))
        }
    }
}

fn cover(a: &CoverArgs) -> CliResult<Outcome> {
    let points = a.points.split(',').map(parse_rational).collect::<hyperdyn_core::Result<Vec<_>>>()?;
    let alpha = parse_rational(&a.a)?;
    let c = cover_circle(&points, &alpha)?;
    let s = |q: &hyperdyn_core::circle_cover::Q| q.to_string();
    Ok(Outcome::new(
        true,
        json!({
            "kappa": s(&c.kappa),
            "kappa_f64": num_traits::ToPrimitive::to_f64(&c.kappa),
            "lower_bound": s(&c.lower_bound()),
            "arcs": c.intervals().iter().map(|(start, len)| json!({ "start": s(start), "length": s(len) })).collect::<Vec<_>>(),
            "gaps": c.gaps().iter().map(s).collect::<Vec<_>>(),
            "depth": c.depth,
            "branches": c.branches.iter().map(|b| b.to_string()).collect::<Vec<_>>(),
        }),
    ))
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Exit code 2 is reserved for negative verdicts.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Some(n) = cli.threads {
        // A second initialisation can only fail if a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let code = match run(&cli) {
        Ok(rep) => {
            let text = rep.to_json();
            match &cli.out {
                Some(p) => {
                    if let Err(e) = write_file(p, &text) {
                        eprintln!("error: {e}");
                        std::process::exit(1);
                    }
                }
                None => print!("{text}"),
            }
            rep.verdict.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    };
    std::process::exit(code);
}
