mod svg;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use balsam::cube::balance_check;
use balsam::diagnostics::{design_entropy, monte_carlo_inclusion, spatial_balance_index};
use balsam::estimators::{estimate_variance, nht_total};
use balsam::experiment::{run_experiment, write_table, ExperimentConfig};
use balsam::frame::{grid_block_strata, grid_frame, load_frame, GridAux};
use balsam::oracle::enumerate_design;
use balsam::replicate::replicate_rng;
use balsam::{
    AuxSelector, Design, DesignConfig, DesignKind, Execution, FrameSchema, InclusionProbabilities,
    PopulationFrame, Sample,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Parser)]
#[command(name = "balsam", version, about = "Draw probability samples, estimate totals and check designs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one sample and write the selected units.
    Sample(RunArgs),
    /// Estimate a total and its variance from a drawn sample.
    Estimate(EstimateArgs),
    /// Report balance, spatial balance, entropy and inclusion checks.
    Diagnose(DiagnoseArgs),
    /// Compare the spatial balance of designs on a square grid.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct FrameArgs {
    /// CSV frame with a header row, one unit per row.
    #[arg(long)]
    frame: Option<PathBuf>,
    /// JSON file with the column roles of the frame.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Column holding unit ids.
    #[arg(long)]
    id: Option<String>,
    /// Auxiliary columns; by default every column other than the id.
    #[arg(long, value_delimiter = ',')]
    frame_aux: Option<Vec<String>>,
    /// Coordinate columns.
    #[arg(long, value_delimiter = ',')]
    coords: Option<Vec<String>>,
    /// Stratum column.
    #[arg(long)]
    stratum: Option<String>,
    /// Column of model standard deviations.
    #[arg(long)]
    sigma: Option<String>,
    /// Study-variable columns.
    #[arg(long, value_delimiter = ',')]
    study: Option<Vec<String>>,
    /// Use a SIDE x SIDE grid of dots with aux one, x, y instead of a frame file.
    #[arg(long, value_name = "SIDE")]
    grid: Option<usize>,
    /// Square strata of BLOCK x BLOCK cells on the grid.
    #[arg(long, value_name = "BLOCK")]
    stratum_block: Option<usize>,
}

#[derive(Args)]
struct DesignArgs {
    /// Design name, e.g. srs, cps, cube, local_pivotal, grts.
    #[arg(long)]
    design: Option<String>,
    /// Sample size.
    #[arg(long)]
    n: Option<usize>,
    /// Inclusion probabilities: equal, sigma, prop:COLUMN or column:COLUMN.
    #[arg(long)]
    pi: Option<String>,
    /// Balancing variables: one, pi or column names.
    #[arg(long, value_delimiter = ',')]
    aux: Option<Vec<String>>,
    /// Stratum allocation: proportional or neyman.
    #[arg(long)]
    allocation: Option<String>,
    /// Distance for spatial designs: coords or mahalanobis.
    #[arg(long)]
    metric: Option<String>,
    /// Balance norm: linf or l2.
    #[arg(long)]
    norm: Option<String>,
    /// Relative balance tolerance reported against.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    frame: FrameArgs,
    #[command(flatten)]
    design: DesignArgs,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum VarianceForm {
    /// Sen-Yates-Grundy for fixed-size designs, Horvitz-Thompson otherwise; skipped without joint probabilities.
    Auto,
    Syg,
    Ht,
    None,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Sample file written by `sample`.
    #[arg(long)]
    sample: Option<PathBuf>,
    /// Study variable column.
    #[arg(long)]
    y: Option<String>,
    #[arg(long, value_enum, default_value_t = VarianceForm::Auto)]
    variance: VarianceForm,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Sample file to diagnose; a sample is drawn when omitted.
    #[arg(long)]
    sample: Option<PathBuf>,
    /// Replications for the Monte Carlo inclusion check; 0 skips it.
    #[arg(long)]
    replications: Option<usize>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment configuration; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid side.
    #[arg(long)]
    side: Option<usize>,
    /// Sample size.
    #[arg(long)]
    n: Option<usize>,
    /// Samples drawn per design.
    #[arg(long)]
    replications: Option<usize>,
    /// Designs to compare, comma separated.
    #[arg(long, value_delimiter = ',')]
    design: Option<Vec<String>>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Side of the square strata in grid cells.
    #[arg(long)]
    stratum_block: Option<usize>,
    /// Run replications on one thread.
    #[arg(long)]
    sequential: bool,
    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Contents of a `--config` file for `sample`, `estimate` and `diagnose`.
#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    frame: Option<PathBuf>,
    schema: Option<FrameSchema>,
    grid: Option<usize>,
    stratum_block: Option<usize>,
    design: Option<DesignConfig>,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    sample: Option<PathBuf>,
    y: Option<String>,
    replications: Option<usize>,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) | Failure::Numerical(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

impl From<balsam::Error> for Failure {
    fn from(e: balsam::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

type Outcome<T> = Result<T, Failure>;

const DEFAULT_SEED: u64 = 1;
const DEFAULT_OUT_DIR: &str = "out";

fn read_json<T: DeserializeOwned>(path: &Path) -> Outcome<T> {
    let text = fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

/// Parses a value of a string-tagged enum through its serde form.
fn parse_enum<T: DeserializeOwned>(what: &str, s: &str) -> Outcome<T> {
    serde_json::from_value(serde_json::Value::String(s.trim().to_ascii_lowercase()))
        .map_err(|_| config_error(format!("invalid {what} {s:?}")))
}

fn create(dir: &Path, name: &str) -> Outcome<BufWriter<File>> {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Outcome<()> {
    let mut w = create(dir, name)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Failure::Io(format!("{name}: {e}")))
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Outcome<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
    text.push('\n');
    write_text(dir, name, &text)
}

/// A run configuration resolved from the config file and the flags.
struct Run {
    frame: PopulationFrame,
    design_config: DesignConfig,
    seed: u64,
    out_dir: PathBuf,
    file: RunConfig,
}

impl Run {
    fn resolve(args: &RunArgs) -> Outcome<Self> {
        let mut file: RunConfig = match &args.config {
            Some(path) => read_json(path)?,
            None => RunConfig::default(),
        };
        let frame = load(&args.frame, &file)?;
        let design_config = design_config(&args.design, file.design.take())?;
        Ok(Self {
            frame,
            design_config,
            seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            out_dir: args
                .out_dir
                .clone()
                .or(file.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
            file,
        })
    }

    fn design(&self) -> Outcome<Design> {
        Ok(self.design_config.prepare(&self.frame)?)
    }

    /// Balancing variables reported on: the configured ones, or `pi` for the cube designs.
    fn balance_selectors(&self) -> Vec<AuxSelector> {
        if !self.design_config.aux.is_empty() {
            self.design_config.aux.clone()
        } else if matches!(self.design_config.design, DesignKind::Cube | DesignKind::LocalCube) {
            vec![AuxSelector::Pi]
        } else {
            Vec::new()
        }
    }
}

fn load(args: &FrameArgs, file: &RunConfig) -> Outcome<PopulationFrame> {
    let grid = args.grid.or(file.grid);
    let path = args.frame.clone().or(file.frame.clone());
    match (grid, path) {
        (Some(_), Some(_)) => Err(config_error("give either a frame file or a grid, not both")),
        (None, None) => Err(config_error("no frame: give --frame FILE or --grid SIDE")),
        (Some(side), None) => {
            let frame = grid_frame(side, GridAux::CoordsAndOne)?;
            match args.stratum_block.or(file.stratum_block) {
                Some(block) => Ok(frame.with_strata(&grid_block_strata(side, block)?)?),
                None => Ok(frame),
            }
        }
        (None, Some(path)) => {
            let mut schema = match &args.schema {
                Some(p) => read_json(p)?,
                None => file.schema.clone().unwrap_or_else(|| FrameSchema::all_aux("id")),
            };
            if let Some(id) = &args.id {
                schema.id = id.clone();
            }
            if let Some(aux) = &args.frame_aux {
                schema.aux = aux.clone();
            }
            if let Some(coords) = &args.coords {
                schema.coords = coords.clone();
            }
            if let Some(s) = &args.stratum {
                schema.stratum = Some(s.clone());
            }
            if let Some(s) = &args.sigma {
                schema.sigma = Some(s.clone());
            }
            if let Some(s) = &args.study {
                schema.study = s.clone();
            }
            let reader = File::open(&path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            Ok(load_frame(reader, &schema)?)
        }
    }
}

fn design_config(args: &DesignArgs, base: Option<DesignConfig>) -> Outcome<DesignConfig> {
    if base.is_none() && args.design.is_none() {
        return Err(config_error("no design: give --design NAME"));
    }
    let mut cfg = base.unwrap_or_default();
    if let Some(d) = &args.design {
        cfg.design = d.parse()?;
    }
    if let Some(n) = args.n {
        cfg.n = Some(n);
    }
    if let Some(pi) = &args.pi {
        cfg.pi = pi.clone().try_into()?;
    }
    if let Some(aux) = &args.aux {
        cfg.aux = aux.iter().map(|a| a.parse()).collect::<Result<_, _>>()?;
    }
    if let Some(a) = &args.allocation {
        cfg.allocation = parse_enum("allocation", a)?;
    }
    if let Some(m) = &args.metric {
        cfg.metric = parse_enum("metric", m)?;
    }
    if let Some(n) = &args.norm {
        cfg.norm = parse_enum("norm", n)?;
    }
    if let Some(t) = args.tolerance {
        cfg.tolerance = t;
    }
    Ok(cfg)
}

fn write_sample(dir: &Path, frame: &PopulationFrame, sample: &Sample, pi: &InclusionProbabilities) -> Outcome<()> {
    let mut w = csv::Writer::from_writer(create(dir, "sample.csv")?);
    let io = |e: csv::Error| Failure::Io(format!("sample.csv: {e}"));
    w.write_record(["unit", "id", "pi"]).map_err(io)?;
    for &k in sample.units() {
        w.write_record([k.to_string(), frame.unit_ids()[k].clone(), pi[k].to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Failure::Io(format!("sample.csv: {e}")))
}

/// Reads the `id` column of a sample file; falls back to the `unit` column.
fn read_sample(path: &Path, frame: &PopulationFrame) -> Outcome<Sample> {
    let bad = |e: &dyn std::fmt::Display| config_error(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(&e))?;
    let headers = r.headers().map_err(|e| bad(&e))?.clone();
    let id_col = headers.iter().position(|h| h.trim() == "id");
    let unit_col = headers.iter().position(|h| h.trim() == "unit");
    let index: std::collections::HashMap<&str, usize> =
        frame.unit_ids().iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
    let mut units = Vec::new();
    for (row, record) in r.records().enumerate() {
        let record = record.map_err(|e| bad(&e))?;
        let unit = match (id_col, unit_col) {
            (Some(c), _) => {
                let id = record.get(c).unwrap_or("").trim();
                *index
                    .get(id)
                    .ok_or_else(|| bad(&format!("row {}: unit id {id:?} is not in the frame", row + 1)))?
            }
            (None, Some(c)) => record
                .get(c)
                .unwrap_or("")
                .trim()
                .parse::<usize>()
                .map_err(|e| bad(&format!("row {}: {e}", row + 1)))?,
            (None, None) => return Err(bad(&"needs an id or unit column")),
        };
        units.push(unit);
    }
    let n = units.len();
    units.sort_unstable();
    units.dedup();
    if units.len() != n {
        return Err(bad(&"repeated units"));
    }
    Ok(Sample::from_indices(frame.size(), units)?)
}

/// Per-variable totals, expansion estimates and relative deviations.
fn balance_rows(run: &Run, sample: &Sample, pi: &InclusionProbabilities) -> Outcome<Vec<serde_json::Value>> {
    let selectors = run.balance_selectors();
    if selectors.is_empty() {
        return Ok(Vec::new());
    }
    let aux = run.frame.balancing_matrix(&selectors, pi)?;
    let report = balance_check(sample, pi, &aux, run.design_config.norm, run.design_config.tolerance)?;
    let mut rows = Vec::new();
    for (j, sel) in selectors.iter().enumerate() {
        let col: Vec<f64> = aux.column(j).iter().copied().collect();
        rows.push(json!({
            "variable": sel.to_string(),
            "total": col.iter().sum::<f64>(),
            "estimate": nht_total(sample, &col, pi)?,
            "relative_deviation": report.deviations[j],
        }));
    }
    Ok(rows)
}

fn write_balance(dir: &Path, rows: &[serde_json::Value]) -> Outcome<()> {
    let mut w = csv::Writer::from_writer(create(dir, "balance.csv")?);
    let io = |e: csv::Error| Failure::Io(format!("balance.csv: {e}"));
    let fields = ["variable", "total", "estimate", "relative_deviation"];
    w.write_record(fields).map_err(io)?;
    for row in rows {
        w.write_record(fields.map(|f| match &row[f] {
            serde_json::Value::String(s) => s.clone(),
            v => v.to_string(),
        }))
        .map_err(io)?;
    }
    w.flush().map_err(|e| Failure::Io(format!("balance.csv: {e}")))
}

fn cmd_sample(args: &RunArgs) -> Outcome<()> {
    let run = Run::resolve(args)?;
    let design = run.design()?;
    let pi = design.inclusion_probabilities();
    let sample = design.draw(&mut replicate_rng(run.seed, 0))?;
    write_sample(&run.out_dir, &run.frame, &sample, &pi)?;
    let rows = balance_rows(&run, &sample, &pi)?;
    if !rows.is_empty() {
        write_balance(&run.out_dir, &rows)?;
    }
    println!(
        "{}: {} of {} units written to {}",
        design.kind(),
        sample.size(),
        run.frame.size(),
        run.out_dir.join("sample.csv").display()
    );
    Ok(())
}

fn cmd_estimate(args: &EstimateArgs) -> Outcome<()> {
    let run = Run::resolve(&args.run)?;
    let sample_path = args
        .sample
        .clone()
        .or(run.file.sample.clone())
        .ok_or_else(|| config_error("no sample: give --sample FILE"))?;
    let y_name = args
        .y
        .clone()
        .or(run.file.y.clone())
        .ok_or_else(|| config_error("no study variable: give --y COLUMN"))?;
    let y = run
        .frame
        .column(&y_name)
        .ok_or_else(|| config_error(format!("frame has no column {y_name:?}")))?;
    let design = run.design()?;
    let pi = design.inclusion_probabilities();
    let sample = read_sample(&sample_path, &run.frame)?;
    let total = nht_total(&sample, &y, &pi)?;

    let fixed = design.fixed_size().is_some();
    let form = match args.variance {
        VarianceForm::Auto if fixed => Some(true),
        VarianceForm::Auto | VarianceForm::Ht => Some(false),
        VarianceForm::Syg if fixed => Some(true),
        VarianceForm::Syg => {
            return Err(config_error(format!(
                "the Sen-Yates-Grundy estimator needs a fixed-size design; {} is not",
                design.kind()
            )))
        }
        VarianceForm::None => None,
    };
    let (variance, note) = match form {
        None => (None, None),
        Some(syg) => match design.joint_inclusion() {
            Ok(joint) => (Some(estimate_variance(&sample, &y, &pi, &joint, syg)?), None),
            Err(e @ balsam::Error::NoClosedForm(_)) => {
                let msg = format!(
                    "variance not estimated: design {} has no closed-form joint inclusion probabilities",
                    design.kind()
                );
                if args.variance != VarianceForm::Auto {
                    return Err(config_error(format!("{msg} ({e})")));
                }
                eprintln!("{msg}");
                (None, Some(msg))
            }
            Err(e) => return Err(e.into()),
        },
    };
    let variance_form = match (variance, form) {
        (Some(_), Some(true)) => Some("sen_yates_grundy"),
        (Some(_), Some(false)) => Some("horvitz_thompson"),
        _ => None,
    };
    let report = json!({
        "design": design.kind().name(),
        "y": y_name,
        "sample_size": sample.size(),
        "population_size": run.frame.size(),
        "total": total,
        "variance": variance,
        "standard_error": variance.map(|v| v.max(0.0).sqrt()),
        "variance_form": variance_form,
        "note": note,
    });
    write_json(&run.out_dir, "estimate.json", &report)?;
    println!("total\t{total}");
    match variance {
        Some(v) => println!("variance\t{v}"),
        None => println!("variance\tNA"),
    }
    Ok(())
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Outcome<()> {
    let run = Run::resolve(&args.run)?;
    let design = run.design()?;
    let pi = design.inclusion_probabilities();
    let sample = match args.sample.clone().or(run.file.sample.clone()) {
        Some(path) => read_sample(&path, &run.frame)?,
        None => design.draw(&mut replicate_rng(run.seed, 0))?,
    };
    let mut report = serde_json::Map::new();
    report.insert("design".into(), json!(design.kind().name()));
    report.insert("population_size".into(), json!(run.frame.size()));
    report.insert("sample_size".into(), json!(sample.size()));
    println!("sample size\t{}", sample.size());

    let rows = balance_rows(&run, &sample, &pi)?;
    if !rows.is_empty() {
        let worst = rows
            .iter()
            .filter_map(|r| r["relative_deviation"].as_f64())
            .fold(0.0, f64::max);
        println!("max balance deviation\t{worst}");
        report.insert("balance".into(), json!(rows));
    }
    if let Some(coords) = run.frame.coords() {
        if coords.ncols() >= 1 && sample.size() > 0 {
            let b = spatial_balance_index(coords, &sample, &pi)?;
            println!("spatial balance index\t{}", b.index);
            report.insert("spatial_balance_index".into(), json!(b.index));
        }
    }
    match enumerate_design(&design) {
        Ok(d) => {
            let h = design_entropy(&d);
            println!("entropy\t{h}");
            report.insert("entropy".into(), json!(h));
        }
        Err(balsam::Error::TooLarge(_)) | Err(balsam::Error::NoClosedForm(_)) => {}
        Err(e) => return Err(e.into()),
    }
    let replications = args.replications.or(run.file.replications).unwrap_or(0);
    if replications > 0 {
        let check = monte_carlo_inclusion(&design, &pi, replications, run.seed, Execution::Parallel)?;
        println!("max studentized inclusion deviation\t{}", check.max_studentized);
        report.insert(
            "inclusion_check".into(),
            json!({
                "replications": replications,
                "max_studentized": check.max_studentized,
                "pi_hat": check.pi_hat,
            }),
        );
    }
    write_json(&run.out_dir, "diagnostics.json", &serde_json::Value::Object(report))
}

fn cmd_experiment(args: &ExperimentArgs) -> Outcome<()> {
    let mut cfg: ExperimentConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.side {
        cfg.side = v;
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.replications {
        cfg.replications = v;
    }
    if let Some(v) = args.seed {
        cfg.master_seed = v;
    }
    if let Some(v) = args.stratum_block {
        cfg.stratum_block = v;
    }
    if let Some(names) = &args.design {
        cfg.designs = names.iter().map(|d| d.parse()).collect::<Result<_, _>>()?;
    }
    let exec = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let result = run_experiment(&cfg, exec)?;
    let out_dir = args.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    write_table(&result.summaries, cfg.replications, create(&out_dir, "spatial_balance.csv")?)?;

    let coords = result.frame.require_coords()?;
    let pi_n = cfg.n as f64 / result.frame.size() as f64;
    let pi = InclusionProbabilities::new(vec![pi_n; result.frame.size()])?;
    for s in &result.summaries {
        let name = s.design.name();
        let title = format!("{name}: n = {} of N = {}", s.example.size(), result.frame.size());
        write_text(&out_dir, &format!("scatter_{name}.svg"), &svg::scatter(coords, &s.example, &title))?;
        let cells = spatial_balance_index(coords, &s.example, &pi)?;
        let title = format!("{name}: Voronoi cells, B = {:.3}", cells.index);
        write_text(
            &out_dir,
            &format!("voronoi_{name}.svg"),
            &svg::voronoi(coords, &s.example, &cells.cell_of, &title),
        )?;
    }
    let mut table = Vec::new();
    write_table(&result.summaries, cfg.replications, &mut table)?;
    print!("{}", String::from_utf8_lossy(&table));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
