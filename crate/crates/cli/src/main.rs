use std::io::Write;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use clap::{Parser, Subcommand};
use iat_core::annotation::SourceUnit;
use iat_core::codegen::{transform, TemplateSet, TransformError};
use iat_core::orchestrator::{self, Orchestrator, OrchestratorConfig};
use iat_core::resource::deserialize_descriptor;
use iat_core::silo::{corpus_descriptor, LogRecord, LogSink, PlantRuntime, RuntimeConfig};

#[derive(Parser)]
#[command(name = "iat", version, about = "Industrial automation Things from annotated components")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Turn an annotated component into LWM2M object sources and a descriptor.
    Transform {
        source: PathBuf,
        /// Built-in template set name or a directory of fragments.
        #[arg(long, default_value = "contiki-c")]
        template: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run simulated silo Things.
    Simulate {
        /// Thing descriptor; the built-in silo descriptor when omitted.
        #[arg(long)]
        descriptor: Option<PathBuf>,
        /// Repeat for several silos in one process.
        #[arg(long = "name", default_values = ["silo1", "silo2", "silo3", "silo4"])]
        names: Vec<String>,
        /// Resource directory to register with.
        #[arg(long)]
        server: Option<SocketAddr>,
        /// First CoAP port; further silos take the following ports. 0 picks free ports.
        #[arg(long, default_value_t = 0)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        bind: IpAddr,
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
        #[arg(long, default_value_t = 300)]
        lifetime: u64,
        /// Exit after this many wall-clock seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Run the resource directory, orchestrator and HTTP gateway.
    Serve {
        #[arg(long, default_value = "0.0.0.0:5683")]
        registry: SocketAddr,
        #[arg(long, default_value_t = orchestrator::DEFAULT_HTTP_PORT)]
        http_port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::UNSPECIFIED))]
        http_bind: IpAddr,
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        #[arg(long, default_value = "traces")]
        trace_dir: PathBuf,
        /// Per-step limit in wall-clock seconds.
        #[arg(long, default_value_t = 300)]
        step_timeout: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Transform { source, template, out } => run_transform(&source, &template, &out),
        Cmd::Simulate { descriptor, names, server, port, bind, time_scale, lifetime, duration } => {
            let descriptor = match descriptor {
                Some(path) => match std::fs::read_to_string(&path) {
                    Ok(text) => match deserialize_descriptor(&text) {
                        Ok(d) => d,
                        Err(e) => {
                            eprintln!("{}: {e}", path.display());
                            return ExitCode::from(1);
                        }
                    },
                    Err(e) => {
                        eprintln!("{}: {e}", path.display());
                        return ExitCode::from(2);
                    }
                },
                None => corpus_descriptor(),
            };
            let mut cfg = RuntimeConfig::liqueur_plant(descriptor);
            cfg.couples.retain(|(a, b)| names.contains(a) && names.contains(b));
            cfg.names = names;
            cfg.server = server;
            cfg.base_port = port;
            cfg.bind = bind;
            cfg.lifetime = lifetime;
            runtime().block_on(simulate(cfg, time_scale, duration))
        }
        Cmd::Serve { registry, http_port, http_bind, ui_dir, trace_dir, step_timeout } => {
            tracing_subscriber::fmt()
                .with_writer(std::io::stderr)
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| "info".into()),
                )
                .init();
            let cfg = OrchestratorConfig {
                step_timeout: Duration::from_secs(step_timeout),
                trace_dir: Some(trace_dir),
                ..OrchestratorConfig::default()
            };
            runtime().block_on(serve(registry, SocketAddr::new(http_bind, http_port), ui_dir, cfg))
        }
    }
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Runtime::new().expect("tokio runtime")
}

fn run_transform(source: &Path, template: &str, out: &Path) -> ExitCode {
    let text = match std::fs::read_to_string(source) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", source.display());
            return ExitCode::from(2);
        }
    };
    let templates = match TemplateSet::builtin(template) {
        Some(t) => t,
        None => match TemplateSet::from_dir(Path::new(template)) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("template {template}: {e}");
                return ExitCode::from(2);
            }
        },
    };
    let name = source.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let output = match transform(&SourceUnit::new(name, text), &templates) {
        Ok(o) => o,
        Err(e) => {
            let file = source.display();
            match e {
                TransformError::Parse(e) => eprintln!("{file}:{e}"),
                e => eprintln!("{file}: {e}"),
            }
            return ExitCode::from(1);
        }
    };
    for a in &output.artifacts {
        let path = out.join(&a.relative_path);
        let written = path
            .parent()
            .map_or(Ok(()), std::fs::create_dir_all)
            .and_then(|_| std::fs::write(&path, &a.content));
        if let Err(e) = written {
            eprintln!("{}: {e}", path.display());
            return ExitCode::from(2);
        }
        println!("{}", path.display());
    }
    ExitCode::SUCCESS
}

async fn simulate(cfg: RuntimeConfig, time_scale: f64, duration: Option<f64>) -> ExitCode {
    let out = Arc::new(Mutex::new(std::io::stdout()));
    let sink: LogSink = Arc::new(move |r: &LogRecord| {
        let line = serde_json::to_string(r).expect("log record serializes");
        let mut out = out.lock().expect("stdout lock");
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
    });
    let rt = match PlantRuntime::start(cfg, Some(sink)).await {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    for t in rt.things() {
        eprintln!("{} listening on {}", t.name, t.endpoint.local_addr());
    }
    rt.start_clock(time_scale);
    match duration {
        Some(secs) => {
            tokio::select! {
                _ = tokio::time::sleep(Duration::from_secs_f64(secs)) => {}
                _ = tokio::signal::ctrl_c() => {}
            }
        }
        None => {
            let _ = tokio::signal::ctrl_c().await;
        }
    }
    rt.shutdown().await;
    ExitCode::SUCCESS
}

async fn serve(
    registry: SocketAddr,
    http: SocketAddr,
    ui_dir: Option<PathBuf>,
    cfg: OrchestratorConfig,
) -> ExitCode {
    let orch = match Orchestrator::start(registry, cfg).await {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    eprintln!("registry listening on {}", orch.registry_addr());
    tokio::select! {
        r = orchestrator::serve(http, orch, ui_dir) => {
            if let Err(e) = r {
                eprintln!("gateway: {e}");
                return ExitCode::from(2);
            }
        }
        _ = tokio::signal::ctrl_c() => {}
    }
    ExitCode::SUCCESS
}
