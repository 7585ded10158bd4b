use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use isac_harness::config::{load_config, ExperimentConfig, Scheme, SweepVar};
use isac_harness::latency::{checkpoint_path, load_model, run_latency, REFERENCE_CYCLES};
use isac_harness::output::{write_csv, write_table, write_timing};
use isac_harness::plot::emit_plot;
use isac_harness::run::{run_convergence, run_sweep, run_train};
use isac_harness::{HarnessError, Result};

#[derive(Parser)]
#[command(name = "isac-lab", version, about = "Cell-free ISAC hybrid beamforming experiments")]
struct Cli {
    /// JSON config; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated subset of gnn,mmse,zf,mrt.
    #[arg(long, global = true, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    /// Channel draws per sweep point.
    #[arg(long, global = true)]
    draws: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one network on the base config and save a checkpoint.
    Train,
    /// Per-iteration WSCSC for each (M, kappa) variant.
    Converge,
    /// Sweep one variable against the baselines.
    Sweep {
        #[arg(long, value_enum)]
        var: SweepVar,
    },
    /// Accelerator latency and fixed-point accuracy grid.
    Latency {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Render SVG line plots from harness CSVs.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = &cli.schemes {
        cfg.sweep.schemes = s.clone();
    }
    if let Some(d) = cli.draws {
        cfg.sweep.draws = d;
        cfg.latency.draws = d;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool> {
    if let Cmd::Plot { csv } = &cli.cmd {
        let mut ok = true;
        for p in csv {
            match emit_plot(p, cli.out.as_deref()) {
                Ok(svg) => eprintln!("wrote {}", svg.display()),
                Err(e) => {
                    eprintln!("error: {e}");
                    ok = false;
                }
            }
        }
        return Ok(ok);
    }
    let cfg = config(cli)?;
    let out = cfg.out_dir.clone();
    let started = Instant::now();
    match &cli.cmd {
        Cmd::Train => {
            let (model, rows) = run_train(&cfg, |r| {
                eprintln!("epoch {:>4}  train {:.4}  val {:.4}", r.epoch, r.train_wscsc, r.val_wscsc)
            })?;
            std::fs::create_dir_all(&out)?;
            let ck = out.join("model.json");
            model.save(&ck)?;
            let csv = out.join("train.csv");
            write_table(&csv, &rows, "train", &cfg, &[])?;
            write_timing(&csv, &serde_json::json!({ "seconds": started.elapsed().as_secs_f64() }))?;
            eprintln!("wrote {} and {}", ck.display(), csv.display());
        }
        Cmd::Converge => {
            let rows = run_convergence(&cfg, |m, k, e, v| {
                if e % 10 == 0 {
                    eprintln!("M={m} kappa={k} iteration {e}: {v:.4}");
                }
            })?;
            let csv = out.join("converge.csv");
            write_table(&csv, &rows, "converge", &cfg, &[])?;
            write_timing(&csv, &serde_json::json!({ "seconds": started.elapsed().as_secs_f64() }))?;
            eprintln!("wrote {}", csv.display());
        }
        Cmd::Sweep { var } => {
            let res = run_sweep(&cfg, *var);
            let csv = out.join(format!("sweep_{}.csv", var.name()));
            write_table(&csv, &res.rows, &format!("sweep --var {}", var.name()), &cfg, &res.failures)?;
            write_timing(&csv, &res.timing)?;
            eprintln!("wrote {} ({} rows)", csv.display(), res.rows.len());
            for f in &res.failures {
                eprintln!("failed: {f}");
            }
            return Ok(res.failures.is_empty());
        }
        Cmd::Latency { checkpoint } => {
            let path = checkpoint_path(&cfg, checkpoint.as_deref());
            let model = load_model(&path)?;
            let res = run_latency(&cfg, &model)?;
            let csv = out.join("latency.csv");
            write_table(&csv, &res.rows, "latency", &cfg, &[])?;
            write_csv(&out.join("latency_layers.csv"), &res.layers)?;
            let json = serde_json::json!({
                "reference_cycles": [REFERENCE_CYCLES.0, REFERENCE_CYCLES.1],
                "reports": res.reports,
            });
            std::fs::write(out.join("latency_reports.json"), serde_json::to_string_pretty(&json)? + "\n")?;
            for r in &res.rows {
                eprintln!(
                    "{:>2}-bit, {:>3}-bit bus: {:>8} cycles = {:.3} ms, median WSCSC error {:.2e}",
                    r.bits, r.bus_bits, r.total_cycles, r.total_ms, r.median_rel_error
                );
            }
            eprintln!("reference band: {} to {} cycles", REFERENCE_CYCLES.0, REFERENCE_CYCLES.1);
        }
        Cmd::Plot { .. } => unreachable!("handled above"),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            if let HarnessError::Config(_) = e {
                return ExitCode::from(2);
            }
            ExitCode::FAILURE
        }
    }
}
