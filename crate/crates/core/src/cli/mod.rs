//! Command-line front end: `run`, `report` and `rm` subcommands.

pub mod config;
pub mod report;
pub mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::planning::{greedy_transitions, value_iteration, DEFAULT_MAX_ITERS, DEFAULT_TIE_EPSILON, DEFAULT_TOLERANCE};
use crate::rm::{guard_text, parse_rm, to_dot, validate_rm, RewardMachine};
use config::ExperimentConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cprep", version, about = "Reward-machine guided transfer experiments in gridworlds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train source, transferred and from-scratch target policies per seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seeds overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Output root (overrides the config's out_dir).
        #[arg(long, env = "CPREP_OUT")]
        out: Option<PathBuf>,
        /// Seeds trained concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Aggregate transfer utilities over run directories.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Directory for the tables and curve files.
        #[arg(long, default_value = "report")]
        out: PathBuf,
        /// Also draw time-to-threshold curves as SVG.
        #[arg(long)]
        svg: bool,
    },
    /// Inspect reward machine files.
    Rm {
        #[command(subcommand)]
        action: RmCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum RmCommand {
    /// Parse and print structural diagnostics.
    Validate {
        file: PathBuf,
        /// Exit with status 2 when any diagnostic is reported.
        #[arg(long)]
        strict: bool,
    },
    /// Print the machine as Graphviz DOT.
    Viz { file: PathBuf },
    /// Print optimal state values and transitions.
    Plan {
        file: PathBuf,
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
    },
}

pub fn main_with(cli: Cli) -> i32 {
    match cli.command {
        Command::Run {
            config,
            seeds,
            out,
            parallel,
        } => cmd_run(config, seeds, out, parallel),
        Command::Report { dirs, out, svg } => cmd_report(&dirs, &out, svg),
        Command::Rm { action } => cmd_rm(action),
    }
}

fn cmd_run(config: PathBuf, seeds: Option<Vec<u64>>, out: Option<PathBuf>, parallel: usize) -> i32 {
    let mut cfg = match ExperimentConfig::load(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    if let Some(seeds) = seeds {
        cfg.seeds = seeds;
        if let Err(e) = cfg.resolve() {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    }
    let out = out.unwrap_or_else(|| cfg.out_dir.clone());
    let results = run::run_experiment(&out, &cfg, parallel);
    let mut status = EXIT_OK;
    for r in results {
        match r {
            Ok(dir) => println!("{}", dir.display()),
            Err(e) => {
                eprintln!("error: {e}");
                status = EXIT_RUNTIME;
            }
        }
    }
    status
}

fn cmd_report(dirs: &[PathBuf], out: &std::path::Path, svg: bool) -> i32 {
    let data = match report::collect(dirs) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    for s in &data.skipped {
        eprintln!("warning: skipping incomplete run {s}");
    }
    if data.groups.is_empty() {
        eprintln!("error: no completed runs found");
        return EXIT_INVALID;
    }
    print!("{}", report::text_table(&data));
    match report::write_report(&data, out, svg) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn load_rm(file: &std::path::Path) -> Result<RewardMachine, String> {
    let text = std::fs::read_to_string(file).map_err(|e| format!("{}: {e}", file.display()))?;
    parse_rm(&text).map_err(|e| format!("{}: {e}", file.display()))
}

/// Value table and optimal transitions as printed by `rm plan`.
pub fn plan_text(rm: &RewardMachine, gamma: f64) -> Result<String, String> {
    let table = value_iteration(rm, gamma, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS).map_err(|e| e.to_string())?;
    let mut out = format!(
        "# gamma {gamma}, {} sweeps, residual {:e}\nstate\tvalue\n",
        table.iterations_run, table.residual
    );
    out.push_str(&table.dump(rm));
    out.push_str("\noptimal transitions\n");
    for u in rm.state_ids() {
        if rm.is_terminal(u) {
            out.push_str(&format!("{}\t(terminal)\n", rm.state_name(u)));
            continue;
        }
        let best = greedy_transitions(rm, &table, u, DEFAULT_TIE_EPSILON).map_err(|e| e.to_string())?;
        for i in best {
            let t = &rm.outgoing(u)[i];
            out.push_str(&format!(
                "{}\t{} --> {}\tr={}\n",
                rm.state_name(u),
                guard_text(rm, &t.guard),
                rm.state_name(t.to),
                t.reward
            ));
        }
    }
    Ok(out)
}

/// Output text and whether it should fail the command.
type RmAction = Box<dyn Fn(&RewardMachine) -> Result<(String, bool), String>>;

fn cmd_rm(action: RmCommand) -> i32 {
    let (file, run): (PathBuf, RmAction) = match action {
        RmCommand::Validate { file, strict } => (
            file,
            Box::new(move |rm| {
                let diags = validate_rm(rm);
                if diags.is_empty() {
                    Ok(("ok\n".to_string(), false))
                } else {
                    let text: String = diags.iter().map(|d| format!("{d}\n")).collect();
                    Ok((text, strict))
                }
            }),
        ),
        RmCommand::Viz { file } => (file, Box::new(|rm| Ok((to_dot(rm), false)))),
        RmCommand::Plan { file, gamma } => (file, Box::new(move |rm| Ok((plan_text(rm, gamma)?, false)))),
    };
    let rm = match load_rm(&file) {
        Ok(rm) => rm,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    match run(&rm) {
        Ok((text, fail)) => {
            print!("{text}");
            if fail {
                EXIT_INVALID
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}
