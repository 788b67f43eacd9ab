//! The `rhomu` command line.
//!
//! Every subcommand renders its result to stdout. With `--out DIR` it also
//! writes its artifacts there together with a `manifest.json` recording the
//! input digests, parameters and output digests. Nothing depends on time or
//! hash-map order, so identical manifests mean identical bytes.
//!
//! Exit codes: 0 success, 1 property violation, 2 usage or input error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::codec::{verify_minimality, CodecTable, DEFAULT_SEARCH_BOUND};
use crate::construct::{build_abstraction, build_nested_sequence, Abstraction, OutputPolicy};
use crate::gain::{e_output_graph, error_graph, max_cycle_ratio, zero_reduction_finite, CostWeights};
use crate::plant::{bundled, FinitePlant};
use crate::rational::{self, Rational};
use crate::synth::{default_tau_grid, deploy_and_check, search_tau, ControllerDfm};
use crate::verify::{
    check_completeness, check_gain_monotone, check_inclusion, check_output_match, check_output_nested,
    check_performance_chain, default_depth, PropertyReport, Scope, Verdict,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Closed-loop horizon used by `synthesize`.
pub const DEPLOY_HORIZON: usize = 200;

#[derive(Debug, Parser)]
#[command(name = "rhomu", version, about = "Finite-state approximations, exact gains and certified controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct OutDir {
    /// Write artifacts and a manifest into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build and export M_1..M_N.
    Abstract {
        /// Bundled plant name (EX1, EX2, EX3) or a plant JSON file.
        plant: String,
        #[arg(long = "i")]
        window: usize,
        /// Assign predictions so the sequence is output-nested.
        #[arg(long)]
        nested: bool,
        #[command(flatten)]
        out: OutDir,
    },
    /// Error gain, e-output upper bound and zero-reduction check.
    Gain {
        plant: String,
        /// Window length, or an abstraction JSON file written by `abstract`.
        abstraction: String,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Also write the error graph as DOT.
        #[arg(long)]
        dot: bool,
        #[command(flatten)]
        out: OutDir,
    },
    /// Check every approximation property for windows 1..N.
    Verify {
        plant: String,
        #[arg(long = "i")]
        window: usize,
        /// Depth of the input trees for the output-match check.
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Synthesize, certify and deploy a controller on M_N.
    Synthesize {
        plant: String,
        #[arg(long = "i")]
        window: usize,
        /// Comma-separated positive rationals, tried in order.
        #[arg(long = "tau-grid", value_delimiter = ',')]
        tau_grid: Option<Vec<String>>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Print a trace as CSV.
    Simulate {
        plant: String,
        /// Controller JSON written by `synthesize`.
        #[arg(long)]
        controller: Option<PathBuf>,
        /// Track the run with the observer M_N when no controller is given.
        #[arg(long = "i")]
        window: Option<usize>,
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long)]
        x0: String,
        /// Comma-separated input labels, used when no controller is given.
        #[arg(long, value_delimiter = ',')]
        inputs: Option<Vec<String>>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Print the minimal codec table and its minimality check.
    Codec {
        #[arg(long)]
        p: usize,
        #[command(flatten)]
        out: OutDir,
    },
}

/// Result of one invocation before it is written anywhere.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug)]
struct UsageError(String);

impl<E: std::fmt::Display> From<E> for UsageError {
    fn from(e: E) -> Self {
        UsageError(e.to_string())
    }
}

#[derive(Serialize)]
struct Digest256 {
    name: String,
    sha256: String,
}

#[derive(Serialize)]
pub struct RunManifest {
    command: String,
    version: String,
    inputs: Vec<Digest256>,
    parameters: serde_json::Value,
    outputs: Vec<Digest256>,
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Artifacts and bookkeeping accumulated by a command.
struct Run {
    command: &'static str,
    inputs: Vec<Digest256>,
    parameters: serde_json::Value,
    files: Vec<(String, String)>,
    stdout: String,
    code: i32,
}

impl Run {
    fn new(command: &'static str, parameters: serde_json::Value) -> Self {
        Self {
            command,
            inputs: Vec::new(),
            parameters,
            files: Vec::new(),
            stdout: String::new(),
            code: EXIT_OK,
        }
    }

    fn input(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.push(Digest256 {
            name: name.to_string(),
            sha256: sha256(bytes),
        });
    }

    fn file(&mut self, name: impl Into<String>, content: String) {
        self.files.push((name.into(), content));
    }

    fn finish(self, out: Option<&Path>) -> Result<Outcome, UsageError> {
        if let Some(dir) = out {
            std::fs::create_dir_all(dir).map_err(|e| UsageError(format!("{}: {e}", dir.display())))?;
            let mut outputs = Vec::new();
            for (name, content) in &self.files {
                std::fs::write(dir.join(name), content).map_err(|e| UsageError(format!("{name}: {e}")))?;
                outputs.push(Digest256 {
                    name: name.clone(),
                    sha256: sha256(content.as_bytes()),
                });
            }
            let manifest = RunManifest {
                command: self.command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                inputs: self.inputs,
                parameters: self.parameters,
                outputs,
            };
            std::fs::write(dir.join("manifest.json"), pretty(&manifest))
                .map_err(|e| UsageError(format!("manifest.json: {e}")))?;
        }
        Ok(Outcome {
            code: self.code,
            stdout: self.stdout,
            stderr: String::new(),
        })
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}

/// Loads a bundled plant by name (case-insensitive) or a plant file.
fn load_plant(run: &mut Run, spec: &str) -> Result<FinitePlant, UsageError> {
    if let Some(source) = bundled::source(spec) {
        run.input(&format!("bundled:{}", spec.to_ascii_uppercase()), source.as_bytes());
        return Ok(source.parse()?);
    }
    let text = std::fs::read_to_string(spec).map_err(|e| UsageError(format!("{spec}: {e}")))?;
    run.input(spec, text.as_bytes());
    text.parse().map_err(|e| UsageError(format!("{spec}: {e}")))
}

fn load_weights(run: &mut Run, path: Option<&Path>, plant: &FinitePlant) -> Result<CostWeights, UsageError> {
    match path {
        None => Ok(CostWeights::defaults(plant.num_inputs(), plant.num_outputs())),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            run.input(&path.display().to_string(), text.as_bytes());
            CostWeights::parse(&text, plant.input_labels(), plant.num_outputs())
                .map_err(|e| UsageError(format!("{}: {e}", path.display())))
        }
    }
}

fn positive_window(window: usize) -> Result<usize, UsageError> {
    if window == 0 {
        return Err(UsageError("--i must be at least 1".into()));
    }
    Ok(window)
}

/// Parses arguments and executes; never exits the process.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            return if code == EXIT_OK {
                Outcome {
                    code,
                    stdout: text,
                    stderr: String::new(),
                }
            } else {
                Outcome {
                    code,
                    stdout: String::new(),
                    stderr: text,
                }
            };
        }
    };
    match execute(cli.command) {
        Ok(outcome) => outcome,
        Err(UsageError(message)) => Outcome {
            code: EXIT_USAGE,
            stdout: String::new(),
            stderr: format!("error: {message}\n"),
        },
    }
}

fn execute(command: Command) -> Result<Outcome, UsageError> {
    match command {
        Command::Abstract {
            plant,
            window,
            nested,
            out,
        } => cmd_abstract(&plant, window, nested, out.out.as_deref()),
        Command::Gain {
            plant,
            abstraction,
            weights,
            dot,
            out,
        } => cmd_gain(&plant, &abstraction, weights.as_deref(), dot, out.out.as_deref()),
        Command::Verify {
            plant,
            window,
            depth,
            weights,
            out,
        } => cmd_verify(&plant, window, depth, weights.as_deref(), out.out.as_deref()),
        Command::Synthesize {
            plant,
            window,
            tau_grid,
            weights,
            out,
        } => cmd_synthesize(&plant, window, tau_grid, weights.as_deref(), out.out.as_deref()),
        Command::Simulate {
            plant,
            controller,
            window,
            horizon,
            x0,
            inputs,
            out,
        } => cmd_simulate(&plant, controller.as_deref(), window, horizon, &x0, inputs, out.out.as_deref()),
        Command::Codec { p, out } => cmd_codec(p, out.out.as_deref()),
    }
}

fn cmd_abstract(plant_spec: &str, window: usize, nested: bool, out: Option<&Path>) -> Result<Outcome, UsageError> {
    let window = positive_window(window)?;
    let mut run = Run::new("abstract", json!({ "plant": plant_spec, "i": window, "nested": nested }));
    let plant = load_plant(&mut run, plant_spec)?;
    let (levels, report) = if nested {
        let seq = build_nested_sequence(&plant, window)?;
        if !seq.nested() {
            run.code = EXIT_VIOLATION;
        }
        (seq.levels, Some(seq.report))
    } else {
        let levels = (1..=window)
            .map(|i| build_abstraction(&plant, i, OutputPolicy::Lexicographic))
            .collect::<Result<Vec<_>, _>>()?;
        (levels, None)
    };
    for m in &levels {
        run.file(format!("m{}.json", m.window()), m.to_json() + "\n");
        run.file(format!("m{}.dot", m.window()), m.to_dot());
    }
    if let Some(report) = &report {
        run.file("nesting.json", pretty(report));
    }
    if out.is_some() {
        for m in &levels {
            let _ = writeln!(
                run.stdout,
                "M_{}: {} states ({} ambiguous)",
                m.window(),
                m.num_states(),
                m.states().iter().filter(|s| s.is_ambiguous()).count()
            );
        }
        if let Some(report) = &report {
            let _ = writeln!(run.stdout, "nested: {}", report.nested);
        }
    } else {
        let docs: Vec<_> = levels.iter().map(|m| m.to_document()).collect();
        run.stdout = pretty(&json!({ "levels": docs, "nesting": report }));
    }
    run.finish(out)
}

fn cmd_gain(
    plant_spec: &str,
    abstraction: &str,
    weights: Option<&Path>,
    dot: bool,
    out: Option<&Path>,
) -> Result<Outcome, UsageError> {
    let mut run = Run::new(
        "gain",
        json!({ "plant": plant_spec, "abstraction": abstraction, "weights": weights, "dot": dot }),
    );
    let plant = load_plant(&mut run, plant_spec)?;
    let m = match abstraction.parse::<usize>() {
        Ok(window) => build_abstraction(&plant, positive_window(window)?, OutputPolicy::Lexicographic)?,
        Err(_) => {
            let text = std::fs::read_to_string(abstraction).map_err(|e| UsageError(format!("{abstraction}: {e}")))?;
            run.input(abstraction, text.as_bytes());
            Abstraction::from_json(&text).map_err(|e| UsageError(format!("{abstraction}: {e}")))?
        }
    };
    let weights = load_weights(&mut run, weights, &plant)?;
    let graph = error_graph(&plant, &m, &weights)?;
    let gamma = max_cycle_ratio(&graph);
    let hat_graph = e_output_graph(&m, &weights)?;
    let hat = max_cycle_ratio(&hat_graph);
    let reduction = zero_reduction_finite(&m, &weights)?;
    let bound_holds = gamma.gamma <= hat.gamma;
    let reduction_agrees = reduction.finite == hat.gamma.is_finite();
    if !bound_holds || !reduction_agrees {
        run.code = EXIT_VIOLATION;
    }
    let summary = json!({
        "plant": plant.name(),
        "window": m.window(),
        "weights": weights.to_document(plant.input_labels()),
        "error_graph": { "nodes": graph.num_nodes(), "edges": graph.edges.len() },
        "gamma": gamma.gamma,
        "gamma_witness": gamma.witness_labels(&graph),
        "gamma_hat": hat.gamma,
        "gamma_hat_witness": hat.witness_labels(&hat_graph),
        "gamma_le_gamma_hat": bound_holds,
        "zero_reduction_finite": reduction.finite,
        "zero_reduction_certificate": reduction.certificate.iter().map(|&q| m.state_label(q)).collect::<Vec<_>>(),
        "finiteness_agrees": reduction_agrees,
    });
    run.stdout = pretty(&summary);
    run.file("gain.json", run.stdout.clone());
    if dot {
        run.file("error_graph.dot", graph.to_dot());
    }
    run.finish(out)
}

fn verdict_word(verdict: Verdict) -> &'static str {
    match verdict {
        Verdict::Holds => "holds",
        Verdict::Violated => "VIOLATED",
        Verdict::NotApplicable => "n/a",
    }
}

fn cmd_verify(
    plant_spec: &str,
    window: usize,
    depth: Option<usize>,
    weights: Option<&Path>,
    out: Option<&Path>,
) -> Result<Outcome, UsageError> {
    let window = positive_window(window)?;
    let mut run = Run::new(
        "verify",
        json!({ "plant": plant_spec, "i": window, "depth": depth, "weights": weights }),
    );
    let plant = load_plant(&mut run, plant_spec)?;
    let weights = load_weights(&mut run, weights, &plant)?;
    let codec = CodecTable::minimal(plant.num_outputs())?;
    let sequence = build_nested_sequence(&plant, window)?;
    let levels = &sequence.levels;

    let mut reports: Vec<(String, PropertyReport)> = Vec::new();
    for m in levels {
        let i = m.window();
        let d = depth.unwrap_or_else(|| default_depth(i));
        reports.push((format!("i={i}"), check_output_match(&plant, m, &codec, d)));
        reports.push((format!("i={i}"), check_inclusion(&plant, m, Scope::Exhaustive)));
    }
    if levels.len() == 1 {
        reports.push(("i=1".into(), check_performance_chain(&plant, &levels[0], &levels[0])));
    }
    for pair in levels.windows(2) {
        let tag = format!("i={},{}", pair[0].window(), pair[1].window());
        reports.push((tag.clone(), check_performance_chain(&plant, &pair[0], &pair[1])));
        reports.push((tag, check_output_nested(&plant, &pair[0], &pair[1])));
    }
    let monotone = check_gain_monotone(&plant, levels, &weights)?;
    reports.push((format!("i=1..{window}"), monotone.report.clone()));
    let completeness = check_completeness(&plant, &weights, window).map_err(|e| UsageError(e.to_string()))?;

    for (tag, report) in &reports {
        let scope = match report.scope {
            Scope::Exhaustive => "exhaustive".to_string(),
            Scope::Depth(d) => format!("depth {d}"),
        };
        let _ = writeln!(
            run.stdout,
            "{:<9} {:<18} {:<10} {:<11} {}",
            verdict_word(report.verdict),
            report.property,
            tag,
            scope,
            report.detail
        );
        if report.verdict == Verdict::Violated {
            run.code = EXIT_VIOLATION;
        }
    }
    let gains: Vec<String> = completeness.gains.iter().map(|g| g.to_string()).collect();
    let _ = writeln!(
        run.stdout,
        "{:<9} {:<18} {:<10} {:<11} gains [{}], i_star {}",
        "info",
        "completeness",
        format!("i=1..{window}"),
        "exhaustive",
        gains.join(", "),
        match completeness.i_star {
            Some(i) => i.to_string(),
            None => format!("none found up to {window}"),
        }
    );
    if completeness.tail_zero == Some(false) {
        run.code = EXIT_VIOLATION;
    }
    let document = json!({
        "plant": plant.name(),
        "window": window,
        "nested": sequence.nested(),
        "reports": reports.iter().map(|(tag, r)| json!({ "levels": tag, "report": r })).collect::<Vec<_>>(),
        "gains": monotone.gains,
        "completeness": completeness,
    });
    run.file("verify.json", pretty(&document));
    run.finish(out)
}

fn parse_tau_grid(grid: Option<Vec<String>>) -> Result<Vec<Rational>, UsageError> {
    let Some(grid) = grid else {
        return Ok(default_tau_grid());
    };
    grid.iter()
        .map(|text| match rational::parse(text) {
            Some(v) if v > rational::zero() => Ok(v),
            _ => Err(UsageError(format!("invalid tau `{text}`; expected a positive rational"))),
        })
        .collect()
}

fn cmd_synthesize(
    plant_spec: &str,
    window: usize,
    tau_grid: Option<Vec<String>>,
    weights: Option<&Path>,
    out: Option<&Path>,
) -> Result<Outcome, UsageError> {
    let window = positive_window(window)?;
    let grid = parse_tau_grid(tau_grid)?;
    let mut run = Run::new(
        "synthesize",
        json!({
            "plant": plant_spec,
            "i": window,
            "tau_grid": grid.iter().map(rational::format).collect::<Vec<_>>(),
            "weights": weights,
            "horizon": DEPLOY_HORIZON,
        }),
    );
    let plant = load_plant(&mut run, plant_spec)?;
    let weights = load_weights(&mut run, weights, &plant)?;
    let codec = CodecTable::minimal(plant.num_outputs())?;
    let sequence = build_nested_sequence(&plant, window)?;
    let m = sequence.levels.last().expect("at least one level");
    let gamma = max_cycle_ratio(&error_graph(&plant, m, &weights)?).gamma;
    if !gamma.is_finite() {
        run.code = EXIT_VIOLATION;
        run.stdout = pretty(&json!({ "window": window, "gamma": gamma, "status": "refused: infinite error gain" }));
        run.file("synthesis.json", run.stdout.clone());
        return run.finish(out);
    }
    let synthesis = search_tau(m, &codec, &weights, &gamma, &grid)?;
    let Some(certificate) = synthesis.certificate.clone() else {
        run.code = EXIT_VIOLATION;
        run.stdout = pretty(&json!({
            "window": window,
            "gamma": gamma,
            "status": "exhausted: no tau in the grid converged",
            "attempts": synthesis.attempts,
        }));
        run.file("synthesis.json", run.stdout.clone());
        return run.finish(out);
    };
    let controller = ControllerDfm::new(m, &certificate.policy)?;
    let deploy = deploy_and_check(&plant, &controller, DEPLOY_HORIZON);
    if !certificate.bounded_below || !deploy.bounded {
        run.code = EXIT_VIOLATION;
    }
    let policy: Vec<String> = certificate
        .policy
        .iter()
        .enumerate()
        .map(|(q, &u)| format!("{} -> {}", m.state_label(q), plant.input_labels()[u]))
        .collect();
    run.stdout = pretty(&json!({
        "window": window,
        "gamma": gamma,
        "tau": rational::format(&certificate.tau),
        "attempts": synthesis.attempts,
        "certified": certificate.bounded_below,
        "policy": policy,
        "closed_loop": {
            "reachable": deploy.reachable,
            "cycles": deploy.cycles,
            "cycle_costs_zero": deploy.cycle_costs_zero,
            "bounded": deploy.bounded,
            "final_sums": deploy.runs.iter().map(|r| json!({
                "x0": plant.state_labels()[r.x0],
                "sum": rational::format(r.running_sums.last().expect("horizon + 1 sums")),
                "stabilized": r.stabilized,
            })).collect::<Vec<_>>(),
        },
    }));
    run.file("synthesis.json", pretty(&synthesis));
    run.file("certificate.json", pretty(&certificate));
    run.file("controller.json", controller.to_json() + "\n");
    run.file("deploy.json", pretty(&deploy));
    run.finish(out)
}

/// Observer used for the `q`, `ytilde`, `vhat` and `w` columns.
enum Tracker {
    None,
    Controller(ControllerDfm),
    Observer(Abstraction),
}

impl Tracker {
    fn label(&self, q: usize) -> String {
        match self {
            Tracker::None => String::new(),
            Tracker::Controller(k) => k.states[q].clone(),
            Tracker::Observer(m) => m.state_label(q),
        }
    }

    fn prediction(&self, q: usize) -> Option<(usize, Rational)> {
        match self {
            Tracker::None => None,
            Tracker::Controller(k) => Some((k.prediction[q], k.perf[q].clone())),
            Tracker::Observer(m) => Some((m.state(q).prediction, m.state(q).perf.clone())),
        }
    }

    fn next(&self, q: usize, u: usize, y: usize) -> usize {
        match self {
            Tracker::None => 0,
            Tracker::Controller(k) => k.transition[q][y],
            Tracker::Observer(m) => m.next(q, u, y),
        }
    }
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

fn cmd_simulate(
    plant_spec: &str,
    controller: Option<&Path>,
    window: Option<usize>,
    horizon: usize,
    x0: &str,
    inputs: Option<Vec<String>>,
    out: Option<&Path>,
) -> Result<Outcome, UsageError> {
    let mut run = Run::new(
        "simulate",
        json!({
            "plant": plant_spec,
            "controller": controller,
            "i": window,
            "T": horizon,
            "x0": x0,
            "inputs": inputs,
        }),
    );
    let plant = load_plant(&mut run, plant_spec)?;
    let x0 = plant
        .state_index(x0)
        .ok_or_else(|| UsageError(format!("unknown plant state `{x0}`")))?;
    let tracker = match (controller, window) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            run.input(&path.display().to_string(), text.as_bytes());
            let k = ControllerDfm::from_json(&text)?;
            if !k.matches(&plant) {
                return Err(UsageError("controller alphabets do not match the plant".into()));
            }
            Tracker::Controller(k)
        }
        (None, Some(i)) => Tracker::Observer(build_abstraction(&plant, positive_window(i)?, OutputPolicy::Lexicographic)?),
        (None, None) => Tracker::None,
    };
    let explicit: Option<Vec<usize>> = match inputs {
        None => None,
        Some(labels) => Some(
            labels
                .iter()
                .map(|l| plant.input_index(l).ok_or_else(|| UsageError(format!("unknown input `{l}`"))))
                .collect::<Result<_, _>>()?,
        ),
    };
    if let Some(seq) = &explicit {
        if seq.len() < horizon {
            return Err(UsageError(format!("{} inputs given for --T {horizon}", seq.len())));
        }
    } else if !matches!(tracker, Tracker::Controller(_)) {
        return Err(UsageError("either --controller or --inputs is required".into()));
    }

    let p = plant.num_outputs();
    let mut q = 0;
    let mut x = x0;
    let mut chosen = Vec::with_capacity(horizon);
    let mut rows = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let u = (t < horizon).then(|| match (&explicit, &tracker) {
            (Some(seq), _) => seq[t],
            (None, Tracker::Controller(k)) => k.action[q],
            _ => unreachable!("checked above"),
        });
        rows.push((t, x, u, q));
        if let Some(u) = u {
            chosen.push(u);
            q = tracker.next(q, u, plant.output(x));
            x = plant.step(x, u);
        }
    }
    // the trace itself comes from the plant simulator
    let trace = plant.simulate(x0, &chosen);
    let mut csv = String::from("t,x,u,y,v,q,ytilde,vhat,w\n");
    for (record, &(t, x, u, q)) in trace.records.iter().zip(&rows) {
        debug_assert_eq!((record.t, record.x, record.u), (t, x, u));
        let (q_label, ytilde, vhat, w) = match tracker.prediction(q) {
            None => (String::new(), String::new(), String::new(), String::new()),
            Some((pred, perf)) => (
                tracker.label(q),
                plant.output_labels()[pred].clone(),
                rational::format(&perf),
                ((pred + p - record.y) % p).to_string(),
            ),
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            record.t,
            csv_field(&plant.state_labels()[record.x]),
            record.u.map(|u| csv_field(&plant.input_labels()[u])).unwrap_or_default(),
            csv_field(&plant.output_labels()[record.y]),
            rational::format(&record.v),
            csv_field(&q_label),
            csv_field(&ytilde),
            vhat,
            w
        );
    }
    run.stdout = csv.clone();
    run.file("trace.csv", csv);
    run.finish(out)
}

fn cmd_codec(p: usize, out: Option<&Path>) -> Result<Outcome, UsageError> {
    let mut run = Run::new("codec", json!({ "p": p }));
    let codec = CodecTable::minimal(p)?;
    let mut text = codec.to_csv();
    let _ = writeln!(text, "# identity_holds={}", codec.identity_holds());
    if (2..=DEFAULT_SEARCH_BOUND).contains(&p) {
        let report = verify_minimality(p)?;
        let _ = writeln!(
            text,
            "# smaller_codec_exists={} candidates_examined={}",
            report.smaller_codec_exists, report.candidates_examined
        );
        if report.smaller_codec_exists || !report.identity_holds {
            run.code = EXIT_VIOLATION;
        }
    } else {
        let _ = writeln!(text, "# minimality search skipped (p outside 2..={DEFAULT_SEARCH_BOUND})");
    }
    if !codec.identity_holds() {
        run.code = EXIT_VIOLATION;
    }
    run.stdout = text.clone();
    run.file("codec.csv", text);
    run.finish(out)
}
