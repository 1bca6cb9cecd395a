use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use edgefl::experiment::{
    run_comparison, run_experiment, ExperimentConfig, Launcher, Mode, ModelChoice, NodeLaunch,
};
use edgefl::fedavg::{run_fedavg, FedAvgConfig, Weighting};
use edgefl::metrics::{build_report, read_events_glob};
use edgefl::partition::{
    partition_normal, partition_uniform, DataSource, PartitionPlan, DEFAULT_SPREAD,
};
use edgefl::peer::PeerConfig;
use edgefl::registry::RegistryServer;
use edgefl::trainer::{ModelKind, TrainConfig};

#[derive(Parser)]
#[command(
    name = "edgefl",
    version,
    about = "Serverless peer-to-peer federated learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a registration node.
    Registry {
        #[arg(long, default_value_t = 7000)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
    },
    /// Run one edge node.
    Peer(PeerArgs),
    /// Run the centralized federated-averaging baseline.
    Baseline(BaselineArgs),
    /// Compute metrics from event logs.
    Report {
        #[arg(long)]
        events: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment described by a config file.
    Simulate(ExperimentArgs),
    /// Run an experiment next to the baseline and write the comparison.
    Compare(ExperimentArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// softmax_linear or mlp.
    #[arg(long, default_value = "softmax_linear", value_parser = parse_kind)]
    model: ModelKind,
    /// Hidden widths for mlp, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    init_seed: u64,
}

impl ModelArgs {
    fn choice(&self) -> ModelChoice {
        ModelChoice {
            kind: self.model,
            hidden_dims: self.hidden.clone(),
            init_seed: self.init_seed,
        }
    }
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    match s {
        "softmax" | "softmax_linear" => Ok(ModelKind::SoftmaxLinear),
        "mlp" => Ok(ModelKind::Mlp),
        _ => Err(format!("unknown model `{s}`")),
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    shuffle_seed: u64,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig::new(self.batch_size, self.epochs, self.lr, self.shuffle_seed)
    }
}

#[derive(Args)]
struct PeerArgs {
    #[arg(long)]
    hostname: String,
    #[arg(long, default_value_t = 0)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    /// Address other peers should use; defaults to the bind host.
    #[arg(long)]
    advertise_host: Option<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    registry: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Rounds to run, counted from --start-round.
    #[arg(long)]
    rounds: u64,
    #[arg(long, default_value_t = 0)]
    start_round: u64,
    #[arg(long)]
    data: DataSource,
    #[arg(long)]
    partition_file: PathBuf,
    #[arg(long)]
    node_id: usize,
    /// Seeds the local train/test split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seeds peer selection; mixed with the hostname.
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    #[arg(long)]
    no_include_self: bool,
    #[arg(long)]
    stay_resident: bool,
    #[arg(long, default_value = "uniform_average")]
    aggregation: String,
    #[arg(long, default_value_t = 2000)]
    fetch_timeout_ms: u64,
    #[arg(long, default_value_t = 0)]
    link_delay_ms: u64,
    #[arg(long, default_value_t = 0)]
    pace_ms: u64,
    /// Monotonic clock time of round 0 when pacing.
    #[arg(long)]
    pace_origin_ms: Option<u64>,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    nodes: usize,
    #[arg(long)]
    rounds: u64,
    /// Fraction of clients trained per round.
    #[arg(long, default_value_t = 1.0)]
    alpha_frac: f64,
    #[arg(long)]
    data: DataSource,
    /// `uniform`, `normal[:spread]`, or a partition file.
    #[arg(long, default_value = "uniform")]
    partition: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    weighted: bool,
    /// CSV of per-round accuracies.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    base_port: Option<u16>,
    #[arg(long)]
    lockstep: bool,
    #[arg(long)]
    in_process: bool,
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig, Box<dyn std::error::Error>> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(v) = self.nodes {
            cfg.nodes = v;
        }
        if let Some(v) = self.rounds {
            cfg.rounds = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out_dir {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = self.base_port {
            cfg.base_port = v;
        }
        if self.lockstep {
            cfg.mode = Mode::Lockstep;
        }
        if self.in_process {
            cfg.launcher = Launcher::InProcess;
        }
        Ok(cfg)
    }
}

async fn run_peer(args: PeerArgs) -> Result<(), Box<dyn std::error::Error>> {
    let mut peer = PeerConfig::new(args.hostname, args.registry);
    peer.serve_port = args.port;
    peer.bind_host = args.bind;
    peer.advertise_host = args.advertise_host;
    peer.alpha = args.alpha;
    peer.aggregation = args.aggregation;
    peer.include_self = !args.no_include_self;
    peer.fetch_timeout_ms = args.fetch_timeout_ms;
    peer.rng_seed = args.rng_seed;
    peer.stay_resident = args.stay_resident;
    peer.link_delay_ms = args.link_delay_ms;
    let launch = NodeLaunch {
        peer,
        node_id: args.node_id,
        data: args.data,
        partition_file: args.partition_file,
        split_seed: args.seed,
        model: args.model.choice(),
        train: args.train.config(),
        start_round: args.start_round,
        rounds: args.rounds,
        pace_ms: args.pace_ms,
        pace_origin_ms: args.pace_origin_ms,
        metrics_out: args.metrics_out,
    };
    let resident = launch.peer.stay_resident;
    let (mut peer, report) = launch.run().await?;
    if let Some(last) = report.rounds.last() {
        println!(
            "{} finished round {} with accuracy {:.4}",
            peer.hostname(),
            last.round,
            last.accuracy
        );
    }
    if resident {
        log::info!("staying resident; interrupt to stop");
        tokio::signal::ctrl_c().await?;
    }
    peer.shutdown().await;
    Ok(())
}

fn run_baseline(args: BaselineArgs) -> Result<(), Box<dyn std::error::Error>> {
    let data = args.data.load()?;
    let plan = match args.partition.as_str() {
        "uniform" => partition_uniform(data.labels(), data.class_count(), args.nodes, args.seed)?,
        p if p.starts_with("normal") => {
            let spread = match p.strip_prefix("normal:") {
                Some(s) => s.parse()?,
                None => DEFAULT_SPREAD,
            };
            partition_normal(
                data.labels(),
                data.class_count(),
                args.nodes,
                args.seed,
                spread,
            )?
        }
        path => PartitionPlan::load(path.as_ref())?,
    };
    let cfg = FedAvgConfig {
        node_count: args.nodes,
        client_fraction: args.alpha_frac,
        rounds: args.rounds,
        train: args.train.config(),
        model: args.model.choice().spec_for(&data),
        partition: plan,
        seed: args.seed,
        weighting: if args.weighted {
            Weighting::SampleCount
        } else {
            Weighting::Uniform
        },
    };
    let trace = run_fedavg(&cfg, &data)?;
    let mut csv = String::from("round,node,metric,value\n");
    for r in &trace.rounds {
        println!("round {}: mean accuracy {:.4}", r.round, r.mean_accuracy);
        for (i, a) in r.accuracies.iter().enumerate() {
            csv.push_str(&format!("{},client-{},accuracy,{a}\n", r.round, i + 1));
        }
        csv.push_str(&format!(
            "{},*,mean_accuracy,{}\n",
            r.round, r.mean_accuracy
        ));
    }
    if let Some(path) = args.metrics_out {
        std::fs::write(path, csv)?;
    }
    Ok(())
}

async fn dispatch(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Registry { port, bind } => {
            let addr: SocketAddr = format!("{bind}:{port}").parse()?;
            let server = RegistryServer::start(addr).await?;
            println!("registry listening on {}", server.url());
            tokio::select! {
                _ = tokio::signal::ctrl_c() => server.shutdown().await,
            }
        }
        Command::Peer(args) => run_peer(args).await?,
        Command::Baseline(args) => run_baseline(args)?,
        Command::Report { events, out } => {
            let events = read_events_glob(&events)?;
            let report = build_report(&events);
            report.write(&out)?;
            if let Some(acc) = report.summary.final_mean_accuracy {
                println!("final mean accuracy {acc:.4}");
            }
        }
        Command::Simulate(args) => {
            let report = run_experiment(&args.config()?).await?;
            for (round, acc) in &report.report.summary.mean_accuracy_by_round {
                println!("round {round}: mean accuracy {acc:.4}");
            }
            return Ok(report.all_completed());
        }
        Command::Compare(args) => {
            let report = run_comparison(&args.config()?).await?;
            print!("{}", report.to_csv());
            return Ok(report.experiment.all_completed());
        }
    }
    Ok(true)
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()).await {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
