//! mops: exact identity checks for multiple orthogonal polynomial systems.
//!
//! Three commands over one pipeline: `verify` runs the full identity suite,
//! `table` prints recurrence bands with pivots and tau values (plus
//! closed-form residual columns when the family has closed forms), and
//! `shift-check` runs the contiguity suite for the given shifts.
//!
//! Exit codes: 0 all verdicts pass, 1 an identity failed (the report is
//! still written), 2 configuration error. Report bodies are byte-stable for
//! a given config; wall-clock metadata goes to a `.meta.json` sidecar next
//! to `--out`, never into the body.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_traits::Zero;

use mops_core::contiguity::ShiftKind;
use mops_core::families::{closed_form_table, trajectory_table, FamilyKind, FamilySpec};
use mops_core::pipeline::{
    build_pipeline, parse_shift, run_shift_check, run_verify, PipelineConfig, SystemInput,
};
use mops_core::scalar::{parse_rat, rat_string, Rat};
use mops_core::weights::WeightSystem;
use mops_core::MopsError;

#[derive(Parser)]
#[command(name = "mops", version, about = "identity suites for p-weight discrete orthogonality")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full identity suite and write a report.
    Verify(RunArgs),
    /// Emit recurrence bands, pivots, and tau values.
    Table(RunArgs),
    /// Run the contiguity suite for the given shifts.
    ShiftCheck(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Family slug: charlier | gen-charlier | meixner2 | gen-meixner2.
    #[arg(long)]
    family: Option<String>,

    /// JSON file holding a family spec (with "kind") or a raw weight system.
    #[arg(long)]
    weights: Option<PathBuf>,

    /// Number of weights; required with --family.
    #[arg(long)]
    p: Option<usize>,

    /// Comma-separated rationals, e.g. 1/3,1/5.
    #[arg(long)]
    eta: Option<String>,

    /// Comma-separated rationals, one per weight, for the Meixner kinds.
    #[arg(long)]
    b: Option<String>,

    /// Denominator deformation for the generalized kinds.
    #[arg(long)]
    c: Option<String>,

    /// Depth: band rows are checked (or tabulated) up to this index.
    #[arg(long, default_value_t = 8)]
    n: usize,

    /// Flow-jet order for the differential suite (0 skips it).
    #[arg(long, default_value_t = 2)]
    jet: usize,

    /// Certified moment-tail target.
    #[arg(long, default_value = "1e-40")]
    tail: String,

    /// Budget amplification override (default 2^20).
    #[arg(long)]
    amp: Option<String>,

    /// Shift descriptor b:a=<w>,i=<slot> or c:j=<slot>; repeatable.
    #[arg(long)]
    shift: Vec<String>,

    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

struct CliError(String);

impl From<MopsError> for CliError {
    fn from(e: MopsError) -> CliError {
        CliError(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> CliError {
        CliError(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Verify(a) => run_report(&a, false),
        Cmd::ShiftCheck(a) => run_report(&a, true),
        Cmd::Table(a) => run_table(&a),
    };
    match res {
        Ok(code) => code,
        Err(CliError(msg)) => {
            eprintln!("mops: {msg}");
            ExitCode::from(2)
        }
    }
}

fn parse_rat_list(s: &Option<String>) -> Result<Vec<Rat>, CliError> {
    match s {
        None => Ok(Vec::new()),
        Some(s) => s
            .split(',')
            .map(|x| parse_rat(x.trim()).map_err(CliError::from))
            .collect(),
    }
}

fn system_input(a: &RunArgs) -> Result<SystemInput, CliError> {
    match (&a.family, &a.weights) {
        (Some(_), Some(_)) => Err(CliError("give either --family or --weights, not both".into())),
        (None, None) => Err(CliError("a system is required: --family or --weights".into())),
        (Some(slug), None) => {
            let kind = FamilyKind::from_slug(slug)
                .ok_or_else(|| CliError(format!("unknown family {slug:?}")))?;
            let p = a.p.ok_or_else(|| CliError("--family needs --p".into()))?;
            let c = a.c.as_deref().map(parse_rat).transpose()?;
            let fs = FamilySpec::new(kind, p, c, parse_rat_list(&a.b)?, parse_rat_list(&a.eta)?)?;
            Ok(SystemInput::Family(fs))
        }
        (None, Some(path)) => {
            let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
            if v.get("kind").is_some() {
                Ok(SystemInput::Family(FamilySpec::from_json(&v)?))
            } else {
                Ok(SystemInput::Raw(WeightSystem::from_json(&v)?))
            }
        }
    }
}

fn pipeline_config(a: &RunArgs) -> Result<PipelineConfig, CliError> {
    let cfg = PipelineConfig {
        input: system_input(a)?,
        n_max: a.n,
        jet_order: a.jet,
        tail_target: parse_rat(&a.tail)?,
        amplification: a.amp.as_deref().map(parse_rat).transpose()?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn emit(a: &RunArgs, body: &str) -> Result<(), CliError> {
    match &a.out {
        None => {
            print!("{body}");
            Ok(())
        }
        Some(path) => {
            fs::write(path, body)?;
            let meta = serde_json::json!({
                "body-bytes": body.len(),
                "written-unix-seconds": SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
            });
            let mut s = serde_json::to_string_pretty(&meta)?;
            s.push('\n');
            fs::write(sidecar(path), s)?;
            Ok(())
        }
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

fn run_report(a: &RunArgs, shifts_only: bool) -> Result<ExitCode, CliError> {
    let cfg = pipeline_config(a)?;
    let shifts: Vec<ShiftKind> =
        a.shift.iter().map(|s| parse_shift(s)).collect::<Result<_, _>>()?;
    if shifts_only && shifts.is_empty() {
        return Err(CliError("shift-check needs at least one --shift".into()));
    }
    let pl = build_pipeline(&cfg)?;
    let rep = if shifts_only { run_shift_check(&pl, &shifts)? } else { run_verify(&pl, &shifts)? };
    let body = match a.format {
        Format::Json => rep.to_canonical_string(),
        Format::Csv => rep.to_csv(),
    };
    emit(a, &body)?;
    if rep.all_pass() {
        Ok(ExitCode::SUCCESS)
    } else {
        for s in rep.failures() {
            eprintln!(
                "mops: fail {} residual {} budget {}",
                s.identity,
                rat_string(&s.max_residual),
                rat_string(&s.budget),
            );
        }
        Ok(ExitCode::from(1))
    }
}

/// Band rows by row index: alpha^(d)_n = T[n][n-d], plus pivot and tau
/// columns. Family runs also get side columns: the closed form where one
/// exists (`alpha{d}-closed`), the forward-recursion regeneration for the
/// generalized kinds (`alpha{d}-pred`), and the data-minus-side residual
/// (`alpha{d}-res`). The data columns carry truncation-order deviation by
/// construction; the side columns are what closed forms pin exactly.
fn run_table(a: &RunArgs) -> Result<ExitCode, CliError> {
    let cfg = pipeline_config(a)?;
    let pl = build_pipeline(&cfg)?;
    let p = pl.sys.p();
    let rows = pl.rec.t().rows();
    let depth = a.n.min(rows - 1);
    let side = match &pl.family {
        Some(fs) if fs.kind.has_c() => trajectory_table(fs, &pl.rec, depth)
            .ok()
            .map(|t| ("pred", t)),
        Some(fs) => closed_form_table(fs, rows).ok().map(|cf| {
            // re-align the column-indexed closed table to row reading
            let t = (0..=p)
                .map(|d| {
                    let mut col = vec![Rat::zero(); d];
                    col.extend(cf.alpha[d].iter().cloned());
                    col
                })
                .collect();
            ("closed", t)
        }),
        None => None,
    };
    let taus = pl.st.tau_table(depth)?;

    let mut columns: Vec<String> = vec!["n".into()];
    for d in 0..=p {
        columns.push(format!("alpha{d}"));
    }
    columns.push("h".into());
    columns.push("tau".into());
    if let Some((tag, _)) = &side {
        for d in 0..=p {
            columns.push(format!("alpha{d}-{tag}"));
            columns.push(format!("alpha{d}-res"));
        }
    }

    let band = |d: usize, n: usize| -> Rat {
        if n < d {
            Rat::zero()
        } else {
            pl.rec.alpha_seq(d)[n - d].clone()
        }
    };
    let mut table: Vec<Vec<String>> = Vec::with_capacity(depth + 1);
    for n in 0..=depth {
        let mut row = vec![n.to_string()];
        for d in 0..=p {
            row.push(rat_string(&band(d, n)));
        }
        row.push(rat_string(&pl.f.h()[n]));
        row.push(rat_string(&taus[n]));
        if let Some((_, t)) = &side {
            for (d, col) in t.iter().enumerate() {
                let pred = col.get(n).cloned().unwrap_or_else(Rat::zero);
                row.push(rat_string(&pred));
                row.push(rat_string(&(band(d, n) - pred)));
            }
        }
        table.push(row);
    }

    let body = match a.format {
        Format::Csv => {
            let mut out = columns.join(",");
            out.push('\n');
            for row in &table {
                out.push_str(&row.join(","));
                out.push('\n');
            }
            out
        }
        Format::Json => {
            let v = serde_json::json!({
                "schema": "mops-table/1",
                "config-echo": pl.echo,
                "columns": columns,
                "rows": table,
            });
            let mut s = serde_json::to_string_pretty(&v)?;
            s.push('\n');
            s
        }
    };
    emit(a, &body)?;
    Ok(ExitCode::SUCCESS)
}
