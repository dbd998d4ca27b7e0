use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};

use toytop::cli_io::{execute, output_dir, Command, Override};

/// Toy top dynamics: simulation, reduction, tip curves and closed forms.
#[derive(Parser)]
#[command(name = "toytop", version)]
struct Cli {
    /// TOML run configuration.
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
    /// Output directory (default: $TOYTOP_OUT_DIR, else ./toytop-out).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

/// Flags replacing keys of the configuration file.
#[derive(Args)]
struct Overrides {
    #[arg(long = "A", global = true, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long = "C", global = true, allow_negative_numbers = true)]
    c: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    s: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    p: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    e1: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    e2: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    e3: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    u0: Option<f64>,
    #[arg(long, global = true)]
    branch: Option<String>,
    #[arg(long, global = true)]
    leg: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    dt: Option<f64>,
    #[arg(long = "t_end", global = true, allow_negative_numbers = true)]
    t_end: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    stride: Option<i64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    seed: Option<i64>,
}

impl Overrides {
    fn list(&self) -> Vec<Override> {
        let mut out = Vec::new();
        let floats = [
            ("A", self.a),
            ("C", self.c),
            ("s", self.s),
            ("p", self.p),
            ("e1", self.e1),
            ("e2", self.e2),
            ("e3", self.e3),
            ("u0", self.u0),
            ("dt", self.dt),
            ("t_end", self.t_end),
        ];
        out.extend(floats.into_iter().filter_map(|(k, v)| v.map(|v| Override::new(k, v))));
        let strings = [("branch", &self.branch), ("leg", &self.leg)];
        out.extend(strings.into_iter().filter_map(|(k, v)| v.clone().map(|v| Override::new(k, v))));
        let ints = [("stride", self.stride), ("seed", self.seed)];
        out.extend(ints.into_iter().filter_map(|(k, v)| v.map(|v| Override::new(k, v))));
        out
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let dir = output_dir(cli.out_dir.as_deref());
    match execute(&cli.config, cli.command, &cli.overrides.list(), &dir) {
        Ok(_) => {
            println!("{}", dir.join("manifest.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
