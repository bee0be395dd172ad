//! Run-config driven pipeline behind the `fcs-plan` binary.
//!
//! A run loads the network, draws the fleet, then either searches placements
//! with CE, enumerates every feasible placement, or scores one given
//! placement. Artifacts land in the output directory:
//!
//! | file                    | contents                                       |
//! |-------------------------|------------------------------------------------|
//! | `result.json`           | chosen placement, S and its components        |
//! | `history.csv`           | `iter,best_S,mean_elite_S,v_1..v_M` (CE only)  |
//! | `fleet.csv`             | one row per vehicle                            |
//! | `capture.csv`           | capture indicator per trip chain               |
//! | `objective_trace.jsonl` | one line per evaluation (`--trace-objective`)  |
//!
//! Exit codes: 0 ok, 1 output failure, 2 unreadable config, 3 invalid config,
//! 4 CE did not converge (artifacts are still written).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ce::{self, CeConfig, CrossEntropy, FinalSource};
use crate::demand::{generate_fleet, Fleet, FleetSpec};
use crate::fcm::Placement;
use crate::gadm::{BaseLoad, TcoResult, TransformerSpec};
use crate::network::{load_network, CoupledNetwork, NodeId};
use crate::objective::{Evaluation, Objective, ObjectiveSpec, PenaltyForm};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OUTPUT: i32 = 1;
pub const EXIT_UNREADABLE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config: {0}")]
    Unreadable(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("failed to write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Unreadable(_) => EXIT_UNREADABLE,
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Output(_) => EXIT_OUTPUT,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn output(e: impl std::fmt::Display) -> CliError {
    CliError::Output(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Ce,
    Enumerate,
    EvaluatePlacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub c: f64,
    pub c_p: f64,
    pub n_fcs: usize,
    pub penalty: PenaltyForm,
    pub span_hours: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            c: 50.0,
            c_p: 100.0,
            n_fcs: 5,
            penalty: PenaltyForm::Abs,
            span_hours: 24.0,
        }
    }
}

/// Single JSON run description. Relative paths resolve against the config
/// file's directory. `fleet.seed` and `ce.seed` are overwritten by the
/// top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub network: PathBuf,
    pub base_load: PathBuf,
    #[serde(default)]
    pub fleet: FleetSpec,
    #[serde(default)]
    pub transformer: TransformerSpec,
    #[serde(default)]
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub ce: CeConfig,
    #[serde(default)]
    pub mode: Mode,
    /// Station node ids for `evaluate-placement`.
    #[serde(default)]
    pub placement: Option<Vec<NodeId>>,
    #[serde(default = "default_max_enumeration")]
    pub max_enumeration: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_seed() -> u64 {
    FleetSpec::default().seed
}

fn default_max_enumeration() -> u64 {
    1_000_000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub trace_objective: bool,
}

/// Config plus everything it references, loaded and validated.
pub struct Prepared {
    pub config: RunConfig,
    pub net: CoupledNetwork,
    pub fleet: Fleet,
    pub objective: ObjectiveSpec,
    pub output_dir: PathBuf,
}

pub fn read_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Unreadable(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        let msg = format!("{}: {e}", path.display());
        // well-formed JSON with the wrong shape is a validation failure
        match e.classify() {
            serde_json::error::Category::Data => CliError::Invalid(msg),
            _ => CliError::Unreadable(msg),
        }
    })
}

pub fn prepare(path: &Path, overrides: &Overrides) -> Result<Prepared, CliError> {
    let mut config = read_config(path)?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(invalid(format!(
            "schema_version {} unsupported (expected {SCHEMA_VERSION})",
            config.schema_version
        )));
    }
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(mode) = overrides.mode {
        config.mode = mode;
    }
    if overrides.workers.is_some() {
        config.ce.workers = overrides.workers;
    }
    config.fleet.seed = config.seed;
    config.ce.seed = config.seed;

    let base_dir = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    };
    let net = load_network(resolve(&config.network)).map_err(invalid)?;
    let base_load = BaseLoad::from_csv(resolve(&config.base_load)).map_err(invalid)?;
    let fleet = generate_fleet(&net, &config.fleet).map_err(invalid)?;
    config.ce.validate().map_err(invalid)?;
    let objective = ObjectiveSpec {
        c: config.objective.c,
        c_p: config.objective.c_p,
        n_fcs: config.objective.n_fcs,
        penalty: config.objective.penalty,
        transformer: config.transformer.clone(),
        base_load,
        span_hours: config.objective.span_hours,
    };
    objective
        .validate(net.candidates().len())
        .map_err(invalid)?;
    if config.mode == Mode::EvaluatePlacement {
        let nodes = config
            .placement
            .as_ref()
            .ok_or_else(|| invalid("mode evaluate-placement requires `placement`"))?;
        Placement::from_nodes(&net, nodes).map_err(invalid)?;
    }
    let output_dir = match &overrides.out {
        Some(out) => out.clone(),
        None => resolve(&config.output_dir),
    };
    Ok(Prepared {
        config,
        net,
        fleet,
        objective,
        output_dir,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub schema_version: u32,
    pub mode: Mode,
    pub seed: u64,
    pub n_fcs: usize,
    pub candidates: Vec<NodeId>,
    pub x: Vec<u8>,
    pub stations: Vec<NodeId>,
    #[serde(rename = "S")]
    pub score: f64,
    pub tco: TcoResult,
    pub captured_volume: u64,
    pub total_flow: u64,
    pub c: f64,
    pub c_p: f64,
    pub penalty: f64,
    pub converged: bool,
    pub iterations: Option<usize>,
    pub final_source: Option<FinalSource>,
    pub evaluations: u64,
}

#[derive(Debug)]
pub struct RunReport {
    pub result: RunResult,
    pub output_dir: PathBuf,
    pub exit_code: i32,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    iteration: Option<usize>,
    sample: usize,
    x: String,
    #[serde(flatten)]
    evaluation: &'a Evaluation,
}

fn bit_string(x: &Placement) -> String {
    x.bits()
        .iter()
        .map(|&b| if b { '1' } else { '0' })
        .collect()
}

struct Trace {
    out: Option<BufWriter<File>>,
    error: Option<std::io::Error>,
}

impl Trace {
    fn open(enabled: bool, dir: &Path) -> Result<Self, CliError> {
        let out = if enabled {
            Some(BufWriter::new(
                File::create(dir.join("objective_trace.jsonl")).map_err(output)?,
            ))
        } else {
            None
        };
        Ok(Self { out, error: None })
    }

    fn enabled(&self) -> bool {
        self.out.is_some()
    }

    fn record(
        &mut self,
        iteration: Option<usize>,
        sample: usize,
        x: &Placement,
        eval: &Evaluation,
    ) {
        let (Some(out), None) = (self.out.as_mut(), self.error.as_ref()) else {
            return;
        };
        let line = TraceLine {
            iteration,
            sample,
            x: bit_string(x),
            evaluation: eval,
        };
        let written = serde_json::to_writer(&mut *out, &line)
            .map_err(std::io::Error::from)
            .and_then(|_| writeln!(out));
        if let Err(e) = written {
            self.error = Some(e);
        }
    }

    fn finish(self) -> Result<(), CliError> {
        if let Some(e) = self.error {
            return Err(output(e));
        }
        if let Some(mut out) = self.out {
            out.flush().map_err(output)?;
        }
        Ok(())
    }
}

/// `fcs-plan run`.
pub fn cmd_run(config_path: &Path, overrides: &Overrides) -> Result<RunReport, CliError> {
    let prepared = prepare(config_path, overrides)?;
    let Prepared {
        config,
        net,
        fleet,
        objective: spec,
        output_dir,
    } = &prepared;
    let objective = Objective::new(net, fleet, spec).map_err(invalid)?;
    fs::create_dir_all(output_dir).map_err(output)?;
    let mut trace = Trace::open(overrides.trace_objective, output_dir)?;

    let m = net.candidates().len();
    let mut history = Vec::new();
    let (placement, converged, iterations, final_source, evaluations) = match config.mode {
        Mode::Ce => {
            let ce = CrossEntropy::new(config.ce.clone()).map_err(invalid)?;
            let mut observe =
                |record: &ce::IterationRecord, population: &[Placement], _: &[f64]| {
                    if trace.enabled() {
                        for (i, x) in population.iter().enumerate() {
                            let eval = objective
                                .evaluate(x)
                                .expect("sampled placement has |K| entries");
                            trace.record(Some(record.iteration), i, x, &eval);
                        }
                    }
                };
            let outcome = ce
                .run_observed(m, spec.n_fcs, |x| objective.score(x), Some(&mut observe))
                .map_err(invalid)?;
            let evaluations = (outcome.iterations * config.ce.n_samples) as u64 + 1;
            history = outcome.history;
            (
                outcome.placement,
                outcome.converged,
                Some(outcome.iterations),
                Some(outcome.source),
                evaluations,
            )
        }
        Mode::Enumerate => {
            let best = objective
                .brute_force_optimum(config.max_enumeration)
                .map_err(invalid)?;
            if trace.enabled() {
                let eval = objective.evaluate(&best.placement).map_err(invalid)?;
                trace.record(None, 0, &best.placement, &eval);
            }
            (best.placement, true, None, None, best.evaluated)
        }
        Mode::EvaluatePlacement => {
            let nodes = config.placement.as_deref().unwrap_or_default();
            let x = Placement::from_nodes(net, nodes).map_err(invalid)?;
            if trace.enabled() {
                let eval = objective.evaluate(&x).map_err(invalid)?;
                trace.record(None, 0, &x, &eval);
            }
            (x, true, None, None, 1)
        }
    };
    trace.finish()?;

    let eval = objective.evaluate(&placement).map_err(invalid)?;
    let result = RunResult {
        schema_version: SCHEMA_VERSION,
        mode: config.mode,
        seed: config.seed,
        n_fcs: spec.n_fcs,
        candidates: net.candidates().to_vec(),
        x: placement.as_u8(),
        stations: placement.nodes(net),
        score: eval.score,
        tco: eval.tco,
        captured_volume: eval.captured_volume,
        total_flow: fleet.total_flow(),
        c: spec.c,
        c_p: spec.c_p,
        penalty: eval.penalty,
        converged,
        iterations,
        final_source,
        evaluations,
    };

    let mut json = serde_json::to_string_pretty(&result).map_err(output)?;
    json.push('\n');
    fs::write(output_dir.join("result.json"), json).map_err(output)?;
    let mut buf = Vec::new();
    ce::write_history_csv(&history, m, &mut buf).map_err(output)?;
    fs::write(output_dir.join("history.csv"), buf).map_err(output)?;
    let mut buf = Vec::new();
    fleet.write_csv(&mut buf).map_err(output)?;
    fs::write(output_dir.join("fleet.csv"), buf).map_err(output)?;
    let mut buf = Vec::new();
    eval.capture.write_csv(fleet, &mut buf).map_err(output)?;
    fs::write(output_dir.join("capture.csv"), buf).map_err(output)?;

    Ok(RunReport {
        result,
        output_dir: output_dir.clone(),
        exit_code: if converged {
            EXIT_OK
        } else {
            EXIT_NOT_CONVERGED
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    /// 1-based line in the placement file.
    pub line: usize,
    pub x: String,
    pub stations: Vec<NodeId>,
    #[serde(rename = "S")]
    pub score: f64,
    pub tco: f64,
    pub captured_volume: u64,
    pub penalty: f64,
}

/// Parses one binary vector per line (`0`/`1`, separated by commas or
/// whitespace, or written as a bare bit string). Blank lines and `#`
/// comments are skipped.
pub fn parse_placements(
    text: &str,
    expected_len: usize,
) -> Result<Vec<(usize, Placement)>, CliError> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = body
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .collect();
        let symbols: Vec<char> = if tokens.len() == 1 {
            tokens[0].chars().collect()
        } else {
            tokens
                .iter()
                .map(|t| match *t {
                    "0" => Ok('0'),
                    "1" => Ok('1'),
                    other => Err(invalid(format!(
                        "line {line}: entry {other:?} is not 0 or 1"
                    ))),
                })
                .collect::<Result<_, _>>()?
        };
        let bits = symbols
            .iter()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(invalid(format!(
                    "line {line}: entry {other:?} is not 0 or 1"
                ))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if bits.len() != expected_len {
            return Err(invalid(format!(
                "line {line}: placement has {} entries, expected {expected_len}",
                bits.len()
            )));
        }
        rows.push((line, Placement::new(bits)));
    }
    Ok(rows)
}

/// `fcs-plan compare`: scores each placement and ranks by S ascending
/// (file order breaks ties).
pub fn cmd_compare(
    config_path: &Path,
    placements_path: &Path,
    overrides: &Overrides,
) -> Result<Vec<CompareRow>, CliError> {
    let prepared = prepare(config_path, overrides)?;
    let text = fs::read_to_string(placements_path)
        .map_err(|e| CliError::Unreadable(format!("{}: {e}", placements_path.display())))?;
    let placements = parse_placements(&text, prepared.net.candidates().len())?;
    let objective =
        Objective::new(&prepared.net, &prepared.fleet, &prepared.objective).map_err(invalid)?;
    let mut rows = placements
        .into_iter()
        .map(|(line, x)| {
            let eval = objective.evaluate(&x).map_err(invalid)?;
            Ok(CompareRow {
                line,
                x: bit_string(&x),
                stations: x.nodes(&prepared.net),
                score: eval.score,
                tco: eval.tco.tco,
                captured_volume: eval.captured_volume,
                penalty: eval.penalty,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    rows.sort_by(|a, b| a.score.total_cmp(&b.score));
    Ok(rows)
}

pub fn render_compare(rows: &[CompareRow]) -> String {
    let mut out = format!(
        "{:>4} {:>5} {:>14} {:>12} {:>9} {:>9}  stations\n",
        "rank", "line", "S", "tco", "captured", "penalty"
    );
    for (rank, row) in rows.iter().enumerate() {
        let stations = row
            .stations
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(&format!(
            "{:>4} {:>5} {:>14.4} {:>12.4} {:>9} {:>9.1}  [{}]\n",
            rank + 1,
            row.line,
            row.score,
            row.tco,
            row.captured_volume,
            row.penalty,
            stations
        ));
    }
    out
}
