use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wtb_core::instances::InstanceSpec;
use wtb_core::{f1, oracle, WtbError, WtbInstance};
use wtb_harness::{adaptivity_demo, m_scaling_sweep, run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "wtb",
    about = "Weighted tallying bandit simulation lab: seeded experiment grids, exact regret \
             oracles, and lap-time model fitting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded algorithm grid from a JSON config and emit CSV curves.
    Run { config: PathBuf },
    /// Run the elimination algorithm across the config's m_values list and
    /// report terminal regret per memory bound.
    SweepM { config: PathBuf },
    /// Run every algorithm on the indistinguishable instance pair and
    /// report the observation-identity check.
    Adaptivity {
        /// Memory bound of the hidden action.
        #[arg(long = "M")]
        memory_bound: usize,
        /// Number of actions.
        #[arg(long = "K")]
        num_actions: usize,
        /// Horizon (must exceed 4M).
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        master_seed: u64,
    },
    /// Fit lap-time models from a lap CSV and write fits plus eligible
    /// driver pairs.
    FitF1 {
        laps: PathBuf,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Verify repeated-exposure optimality of an instance file and print
    /// the minimal slack.
    CheckReo { instance: PathBuf },
    /// Print the minimum cumulative expected loss over all action
    /// sequences of the given length.
    Oracle {
        instance: PathBuf,
        #[arg(long = "T")]
        horizon: usize,
        /// Cap on K^m * T oracle transitions.
        #[arg(long)]
        budget: Option<f64>,
    },
}

/// An instance file is either a serialized instance or a family spec.
fn load_instance(path: &PathBuf) -> Result<WtbInstance, WtbError> {
    let text = std::fs::read_to_string(path)?;
    match WtbInstance::from_json(&text) {
        Ok(instance) => Ok(instance),
        Err(instance_error) => match serde_json::from_str::<InstanceSpec>(&text) {
            Ok(spec) => spec.build(0),
            Err(_) => Err(instance_error),
        },
    }
}

fn exit_code_for(error: &WtbError) -> u8 {
    match error {
        WtbError::Capacity(_) => 3,
        WtbError::Parameter(_)
        | WtbError::Validation(_)
        | WtbError::Shape(_)
        | WtbError::Parse { .. }
        | WtbError::Normalization(_)
        | WtbError::Json(_)
        | WtbError::InvalidAction { .. } => 2,
        _ => 1,
    }
}

fn run(command: Command) -> Result<(), WtbError> {
    match command {
        Command::Run { config } => {
            let config = ExperimentConfig::load(config)?;
            let summary = run_experiment(&config)?;
            println!(
                "ran {} algorithms x {} seeds over horizon {}",
                config.algorithms.len(),
                config.seeds.len(),
                config.horizon
            );
            for algorithm in &summary.algorithms {
                println!(
                    "{:>10}: terminal {} = {:.4} +/- {:.4}  ({})",
                    algorithm.algorithm_id,
                    match config.regret_mode {
                        wtb_harness::RegretMode::ExactCpr => "regret",
                        wtb_harness::RegretMode::ExcessVsReference => "excess loss",
                    },
                    algorithm.terminal_mean,
                    algorithm.terminal_std_error,
                    algorithm.aggregate_path.display()
                );
            }
        }
        Command::SweepM { config } => {
            let config = ExperimentConfig::load(config)?;
            let sweep = m_scaling_sweep(&config)?;
            println!("memory-bound sweep ({})", sweep.sweep_path.display());
            for ((m, mean), se) in sweep
                .m_values
                .iter()
                .zip(&sweep.terminal_mean)
                .zip(&sweep.terminal_std_error)
            {
                println!("M = {m:>4}: terminal regret = {mean:.4} +/- {se:.4}");
            }
        }
        Command::Adaptivity {
            memory_bound,
            num_actions,
            horizon,
            master_seed,
        } => {
            let report = adaptivity_demo(memory_bound, num_actions, horizon, master_seed)?;
            println!(
                "instance pair with K = {num_actions}, hidden-action memory M = {memory_bound}, T = {horizon}"
            );
            println!(
                "always-first-action loss: {:.1} on either instance",
                report.always_first_loss
            );
            println!(
                "always-hidden-action loss on the memory-M instance: {} (= M - 1)",
                report.always_hidden_loss_b
            );
            for row in &report.rows {
                let identity = match row.observations_identical {
                    Some(true) => "identical observations".to_string(),
                    Some(false) => "OBSERVATIONS DIVERGED".to_string(),
                    None => format!(
                        "played the hidden action {} times in a row, instances distinguishable",
                        row.longest_run_a
                    ),
                };
                println!(
                    "{:>10}: loss A = {:.1}, loss B = {:.1}, longest hidden run A/B = {}/{}, {}",
                    row.algorithm_id,
                    row.expected_loss_a,
                    row.expected_loss_b,
                    row.longest_run_a,
                    row.longest_run_b,
                    identity
                );
            }
            if !report.identities_hold() {
                return Err(WtbError::Validation(
                    "a run without M consecutive hidden plays observed different losses".into(),
                ));
            }
        }
        Command::FitF1 { laps, output_dir } => {
            let records = f1::parse_lap_csv_path(&laps)?;
            std::fs::create_dir_all(&output_dir)?;
            let races: BTreeSet<u32> = records.iter().map(|r| r.race_id).collect();
            let mut fits = Vec::new();
            let mut pairs: Vec<(u32, u32, u32)> = Vec::new();
            for &race in &races {
                let series = match f1::normalize_and_filter(&records, race) {
                    Ok(series) => series,
                    Err(error) => {
                        eprintln!("skipping race {race}: {error}");
                        continue;
                    }
                };
                let mut race_fits = Vec::new();
                for (driver, values) in &series {
                    match f1::fit_lap_model(values, *driver, race) {
                        Ok(fit) => race_fits.push(fit),
                        Err(error) => eprintln!("skipping driver {driver} in race {race}: {error}"),
                    }
                }
                for (a, b) in f1::eligible_pairs(&race_fits) {
                    pairs.push((race, a, b));
                }
                fits.extend(race_fits);
            }
            let fits_path = output_dir.join("fits.csv");
            let mut writer = std::io::BufWriter::new(std::fs::File::create(&fits_path)?);
            f1::write_fits_csv(&mut writer, &fits)?;
            let pairs_path = output_dir.join("eligible_pairs.csv");
            let mut writer = std::io::BufWriter::new(std::fs::File::create(&pairs_path)?);
            f1::write_pairs_csv(&mut writer, &pairs)?;
            println!(
                "fitted {} driver-race models across {} races; {} eligible pairs",
                fits.len(),
                races.len(),
                pairs.len()
            );
            println!("fits: {}", fits_path.display());
            println!("pairs: {}", pairs_path.display());
        }
        Command::CheckReo { instance } => {
            let instance = load_instance(&instance)?;
            let (best_action, alpha) = instance.minimal_reo_alpha()?;
            println!(
                "instance: K = {}, m = {}",
                instance.num_actions(),
                instance.memory()
            );
            println!("best action: {best_action}");
            println!(
                "eventual loss of best action: {}",
                instance.eventual_loss(best_action)?
            );
            println!("alpha: {alpha}");
        }
        Command::Oracle {
            instance,
            horizon,
            budget,
        } => {
            let instance = load_instance(&instance)?;
            let optimum = oracle::optimal_value_dp_with_budget(
                &instance,
                horizon,
                budget.unwrap_or(oracle::DEFAULT_DP_BUDGET),
            )?;
            println!("optimal value over {horizon} steps: {}", optimum.value);
            match &optimum.sequence {
                Some(sequence) if sequence.len() <= 60 => {
                    let rendered: Vec<String> =
                        sequence.iter().map(|a| a.to_string()).collect();
                    println!("optimal sequence: {}", rendered.join(" "));
                }
                Some(sequence) => {
                    println!("optimal sequence: {} actions (omitted)", sequence.len())
                }
                None => println!("optimal sequence: not materialized at this size"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code_for(&error))
        }
    }
}
