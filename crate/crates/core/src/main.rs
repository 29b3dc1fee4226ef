//! Command line front end.
//!
//! Every subcommand writes a CSV (to `--output`, or to stdout followed by a
//! blank line) and a `key=value` summary on stdout. Exit status is 0 on
//! success, 2 when a hypothesis check failed, 1 on errors.

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qvarifold::approx::{build_approximation, check_hypotheses};
use qvarifold::excess::{h_q_best, t_q};
use qvarifold::harness::{
    parse_approx_file, parse_cylinder, run_decay, run_fixed_scale, run_monotonicity, write_rows, CsvRow, ExcessRow,
    ExperimentConfig, Report, Scenario, Summary,
};
use qvarifold::numeric::{fmt_f64, Exponent};
use qvarifold::varifold::{read_varifold_csv, write_varifold, write_varifold_csv};
use qvarifold::Result;

#[derive(Parser)]
#[command(name = "qvarifold", version, about = "Varifold excess and Q-valued approximation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a scenario fixture as a varifold CSV.
    Gen {
        scenario: String,
        #[arg(long)]
        mesh: f64,
        /// Radius of the generated patch (default 1.6).
        #[arg(long, default_value_t = 1.6)]
        extent: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Tilt or best height of a varifold over a cylinder `a,r,h,T`
    /// (point and axes colon-separated, e.g. `0:0:0,0.5,0.5,0:1`).
    Excess {
        #[arg(long)]
        varifold: PathBuf,
        #[arg(long)]
        cylinder: String,
        #[arg(long)]
        q: Exponent,
        #[arg(long, conflicts_with = "height")]
        tilt: bool,
        #[arg(long)]
        height: bool,
        /// Number of sheets for the height.
        #[arg(long, default_value_t = 1)]
        sheets: usize,
        /// Fiber cell width (default: the varifold's mesh scale).
        #[arg(long)]
        cell_width: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Build the Lipschitz Q-valued approximation.
    Approx {
        #[arg(long)]
        varifold: PathBuf,
        /// Flat key=value file with the cylinder and approximation parameters.
        #[arg(long)]
        params: PathBuf,
        /// Directory receiving the set and field CSVs.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Fixed-scale height/tilt inequality on a scenario.
    Verify {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Height and tilt decay at the scenario's probe points.
    Decay {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Monotonicity predicates over a radius sweep.
    Mono {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn load_config(path: &Option<PathBuf>, n: usize) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::from_file(p, n),
        None => ExperimentConfig::parse("", n),
    }
}

/// Writes rows and summary; returns whether the run was flagged.
fn emit<R: CsvRow>(report: &Report<R>, output: &Option<PathBuf>) -> Result<bool> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match output {
        Some(path) => qvarifold::harness::emit_csv(&report.rows, path)?,
        None => {
            write_rows(&report.rows, &mut out)?;
            writeln!(out)?;
        }
    }
    out.write_all(report.summary.to_text().as_bytes())?;
    out.flush()?;
    Ok(report.flagged())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Gen {
            scenario,
            mesh,
            extent,
            output,
        } => {
            let s = Scenario::by_name(&scenario)?;
            let v = s.generate(mesh, extent)?;
            let mut summary = Summary::default();
            summary.push("scenario", s.name());
            summary.push("atoms", v.len());
            summary.push_f64("mesh_scale", v.mesh_scale());
            summary.push_f64("total_mass", v.total_mass());
            let stdout = io::stdout();
            let mut out = stdout.lock();
            match &output {
                Some(p) => write_varifold_csv(&v, p)?,
                None => {
                    write_varifold(&v, &mut out)?;
                    writeln!(out)?;
                }
            }
            out.write_all(summary.to_text().as_bytes())?;
            Ok(false)
        }
        Command::Excess {
            varifold,
            cylinder,
            q,
            tilt: _,
            height,
            sheets,
            cell_width,
            output,
        } => {
            let v = read_varifold_csv(&varifold)?;
            let c = parse_cylinder(&cylinder)?;
            let mut summary = Summary::default();
            let row = if height {
                let dx = cell_width.unwrap_or(v.mesh_scale());
                let rep = h_q_best(&v, &c, sheets, q, dx)?;
                summary.push_block("height", &rep.to_key_values());
                ExcessRow {
                    quantity: "height".into(),
                    q,
                    value: rep.total,
                    flags: rep.flags.clone(),
                }
            } else {
                let value = t_q(&v, &c, q)?;
                summary.push("tilt", fmt_f64(value));
                ExcessRow {
                    quantity: "tilt".into(),
                    q,
                    value,
                    flags: Vec::new(),
                }
            };
            let report = Report {
                rows: vec![row],
                summary,
                hypothesis_flags: Vec::new(),
            };
            emit(&report, &output)
        }
        Command::Approx {
            varifold,
            params,
            output,
        } => {
            let v = read_varifold_csv(&varifold)?;
            let (c, p, constants) = parse_approx_file(&std::fs::read_to_string(&params)?, v.n())?;
            let hyp = check_hypotheses(&v, &c, &p, &constants);
            let res = build_approximation(&v, &c, &p, &constants)?;
            if let Some(dir) = &output {
                res.write_dir(dir)?;
            }
            let stdout = io::stdout();
            let mut out = stdout.lock();
            writeln!(out, "bad={}", res.bad.len())?;
            writeln!(out, "graphical={}", res.graphical.len())?;
            writeln!(out, "good={}", res.good.len())?;
            writeln!(out, "y_cells={}", res.y.len())?;
            writeln!(out, "z_cells={}", res.z.len())?;
            writeln!(out, "n_cells={}", res.n_set.len())?;
            out.write_all(res.diagnostics.to_key_values().as_bytes())?;
            writeln!(out, "hypotheses={}", if hyp.is_empty() { "ok".to_string() } else { hyp.join(";") })?;
            Ok(!hyp.is_empty())
        }
        Command::Verify {
            scenario,
            config,
            output,
        } => {
            let s = Scenario::by_name(&scenario)?;
            let cfg = load_config(&config, s.axis.plane_dim())?;
            emit(&run_fixed_scale(&s, &cfg)?, &output)
        }
        Command::Decay {
            scenario,
            config,
            output,
        } => {
            let s = Scenario::by_name(&scenario)?;
            let cfg = load_config(&config, s.axis.plane_dim())?;
            emit(&run_decay(&s, &cfg)?, &output)
        }
        Command::Mono {
            scenario,
            config,
            output,
        } => {
            let s = Scenario::by_name(&scenario)?;
            let cfg = load_config(&config, s.axis.plane_dim())?;
            emit(&run_monotonicity(&s, &cfg)?, &output)
        }
    }
}

fn main() -> ExitCode {
    // Clap exits with 2 on usage errors, which is reserved for flagged runs.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
