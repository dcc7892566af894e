use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fens_cli::commands::{self, Context};
use fens_cli::config::{self, ConfigError};

#[derive(Parser)]
#[command(name = "fens", version, about = "Filter ensembles: train, attack, correlate, certify")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per filter, the noise-trained models and the ensemble manifests.
    Train(Common),
    /// Sensitivity correlation between filters under random noise.
    Correlate(Common),
    /// Accuracy of each model under a (BPDA) attack aimed at itself.
    Attack(Common),
    /// Accuracy of each model on adversarials crafted against the transfer source.
    Transfer(Common),
    /// Attack each ensemble with summed member gradients.
    EnsembleEval(Common),
    /// Margin/Lipschitz certificates for the members of an ensemble.
    Certify(Common),
    /// Print the resolved configuration as TOML.
    ShowConfig(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one field, e.g. `--set train.batch_size=32`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Comma-separated radii in 1/255 units.
    #[arg(long, value_name = "LIST")]
    eps: Option<String>,
    /// BPDA mode for filter backward passes: off, identity or adjoint.
    #[arg(long)]
    bpda: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suffix of the output file names.
    #[arg(long)]
    tag: Option<String>,
}

impl Common {
    fn overrides(&self) -> Vec<String> {
        let mut o = self.set.clone();
        if let Some(e) = &self.eps {
            o.push(format!("eval.epsilons=[{e}]"));
        }
        if let Some(b) = &self.bpda {
            o.push(format!("attack.bpda=\"{b}\""));
        }
        if let Some(s) = self.seed {
            o.push(format!("seed={s}"));
        }
        if let Some(p) = &self.out {
            o.push(format!("out_dir={}", toml::Value::String(p.display().to_string())));
        }
        if let Some(t) = &self.tag {
            o.push(format!("tag={}", toml::Value::String(t.clone())));
        }
        o
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (name, common) = match &cli.command {
        Command::Train(c) => ("train", c),
        Command::Correlate(c) => ("correlate", c),
        Command::Attack(c) => ("attack", c),
        Command::Transfer(c) => ("transfer", c),
        Command::EnsembleEval(c) => ("ensemble-eval", c),
        Command::Certify(c) => ("certify", c),
        Command::ShowConfig(c) => ("show-config", c),
    };
    let cfg = config::load(common.config.as_deref(), &common.overrides())?;
    if name == "show-config" {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let ctx = Context::load(cfg)?;
    let artifact = match name {
        "train" => commands::train(&ctx)?,
        "correlate" => commands::correlate(&ctx)?,
        "attack" => commands::attack(&ctx)?,
        "transfer" => commands::transfer(&ctx)?,
        "ensemble-eval" => commands::ensemble_eval(&ctx)?,
        _ => commands::certify(&ctx)?,
    };
    for n in &artifact.notes {
        println!("{n}");
    }
    if name != "certify" && name != "train" {
        print!("{}", artifact.table.body());
    }
    println!("wrote {}", artifact.path.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
