use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use infconv_cli::{exit_code, Overrides, Profile};

#[derive(Parser)]
#[command(name = "infconv", version, about = "Optimal risk sharing experiments")]
struct Cli {
    /// Training profile; overrides the config's `profile` key.
    #[arg(long, global = true, value_enum)]
    profile: Option<Profile>,
    /// Base seed; overrides the config's `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the ensemble and write report.json, loss_history.csv and allocation_curve.csv.
    Run { config: PathBuf },
    /// Brute-force the inf-convolution on a small sample and write oracle.json.
    Oracle { config: PathBuf },
    /// Tabulate several report.json files as CSV on stdout.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides { profile: cli.profile, seed: cli.seed, out: cli.out };
    let result = match cli.command {
        Command::Run { config } => infconv_cli::run(&config, &overrides).map(|(r, dir)| {
            println!("final loss {} ± {} ({} members)", r.final_loss_mean, r.final_loss_std, r.member_final_losses.len());
            if let (Some(inf), Some(rel)) = (r.analytic_infimum, r.relative_error_mean) {
                println!("analytic infimum {inf}, relative error {rel}");
            }
            if let Some(o) = &r.oracle {
                println!("oracle minimum {}", o.value);
            }
            println!("wrote {}", dir.display());
        }),
        Command::Oracle { config } => infconv_cli::oracle(&config, &overrides).map(|(r, dir)| {
            println!("minimum {}", r.value);
            println!("argmin slopes {:?}", r.slopes);
            println!("wrote {}", dir.join("oracle.json").display());
        }),
        Command::Compare { reports } => infconv_cli::compare(&reports).map(|table| print!("{table}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
