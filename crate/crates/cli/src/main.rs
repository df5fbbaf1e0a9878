use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use srss_cli::{
    cmd_degrade, cmd_ensemble, cmd_ingest, cmd_metrics, cmd_pd_plane, EnsembleArgs, MetricsArgs,
    PdPlaneArgs, Summary,
};
use srss_core::{PsnrMode, ScaleFactor, StudyConfig};
use srss_server::{serve, App, ServeOptions, Store};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "srss",
    version,
    about = "Select, tally and ensemble super-resolution samples"
)]
struct Cli {
    /// Print a machine-readable JSON summary on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bicubic-downsample images to `<stem>_x<factor>_lr.png`.
    Degrade {
        /// PNG files or directories of PNG files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 4)]
        factor: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR, SSIM and LR-consistency for SR/HR/LR images paired by stem.
    Metrics {
        #[arg(long)]
        sr: PathBuf,
        #[arg(long)]
        hr: PathBuf,
        #[arg(long)]
        lr: PathBuf,
        #[arg(long, default_value_t = 4)]
        factor: u32,
        /// CSV with `image_id,score_name,value` rows (e.g. LPIPS, DISTS).
        #[arg(long)]
        external_scores: Option<PathBuf>,
        /// Compute PSNR on luma instead of jointly over RGB.
        #[arg(long)]
        luma: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tally a ballot log for one set and average the top-k candidates.
    Ensemble {
        set_dir: PathBuf,
        ballots: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        max_select: usize,
        /// Only count ballots carrying this label.
        #[arg(long)]
        label: Option<String>,
        /// Output PNG; the tally is written next to it as `.tally.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Export fidelity/perception pairs from report CSVs, one per method.
    PdPlane {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, default_value = "psnr_db")]
        fidelity: String,
        #[arg(long)]
        perception: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Copy sample-set directories into a store.
    Ingest {
        #[arg(long)]
        root: PathBuf,
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Run the collection server.
    Serve {
        #[arg(long)]
        root: PathBuf,
        /// Study config JSON; defaults to `<root>/study.json`.
        #[arg(long)]
        study: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Web UI bundle served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

fn factor(f: u32) -> Result<ScaleFactor> {
    Ok(ScaleFactor::new(f)?)
}

fn run_batch(cli: &Cli) -> Result<Summary> {
    match &cli.command {
        Command::Degrade {
            inputs,
            factor: f,
            out,
        } => cmd_degrade(inputs, factor(*f)?, out),
        Command::Metrics {
            sr,
            hr,
            lr,
            factor: f,
            external_scores,
            luma,
            out,
        } => cmd_metrics(&MetricsArgs {
            sr_dir: sr,
            hr_dir: hr,
            lr_dir: lr,
            factor: factor(*f)?,
            external_scores: external_scores.as_deref(),
            psnr_mode: if *luma { PsnrMode::Luma } else { PsnrMode::Rgb },
            out,
        }),
        Command::Ensemble {
            set_dir,
            ballots,
            k,
            max_select,
            label,
            out,
        } => cmd_ensemble(&EnsembleArgs {
            set_dir,
            ballots,
            k: *k,
            max_select: *max_select,
            label: label.as_deref(),
            out,
        }),
        Command::PdPlane {
            reports,
            fidelity,
            perception,
            out,
        } => cmd_pd_plane(&PdPlaneArgs {
            reports,
            fidelity,
            perception,
            out,
        }),
        Command::Ingest { root, dirs } => cmd_ingest(root, dirs),
        Command::Serve { .. } => unreachable!(),
    }
}

fn report(summary: &Summary, json: bool) {
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(summary).expect("summary serializes")
        );
        return;
    }
    for out in &summary.outputs {
        println!("wrote {}", out.display());
    }
    if let Some(d) = &summary.details {
        println!("{d}");
    }
    if !summary.failures.is_empty() {
        eprintln!("{} failure(s):", summary.failures.len());
        for f in &summary.failures {
            eprintln!("  {}: {}", f.item, f.error);
        }
    }
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

fn run_serve(
    root: PathBuf,
    study: Option<PathBuf>,
    bind: String,
    static_dir: Option<PathBuf>,
) -> Result<()> {
    let study = study.unwrap_or_else(|| root.join("study.json"));
    let text = std::fs::read_to_string(&study)
        .with_context(|| format!("reading study config {}", study.display()))?;
    let config: StudyConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing study config {}", study.display()))?;
    let store = Store::open(&root).context("opening store")?;
    let app = App::new(config, store).context("validating study against store")?;

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .with_context(|| format!("binding {bind}"))?;
        // scripts wait for this line to learn the port
        println!("listening on http://{}", listener.local_addr()?);
        std::io::stdout().flush()?;
        serve(
            app,
            listener,
            ServeOptions { static_dir },
            shutdown_signal(),
        )
        .await?;
        Ok(())
    })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve {
            root,
            study,
            bind,
            static_dir,
        } => run_serve(root, study, bind, static_dir).map(|_| None),
        _ => run_batch(&cli).map(Some),
    };
    match result {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(summary)) => {
            report(&summary, cli.json);
            if summary.ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            if cli.json {
                println!("{}", serde_json::json!({ "error": format!("{e:#}") }));
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(2)
        }
    }
}
