use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wpcn_aoi::artifact::{self, SliceSpec};
use wpcn_aoi::channel::build_quantizer;
use wpcn_aoi::mdp::{Action, TransitionModel};
use wpcn_aoi::params::{QuantizationMode, SystemParams};
use wpcn_aoi::simulator::{rollout, solve_generate_at_will, sweep, RolloutConfig, SweepAxis, SweepSettings};
use wpcn_aoi::solver::{relative_value_iteration, structured_value_iteration, SolverConfig};
use wpcn_aoi::structure;
use wpcn_aoi::Error;

#[derive(Parser, Debug)]
#[command(version, about = "Optimal sampling, updating and energy transfer for an RF-powered source")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Common {
    /// `key = value` configuration file
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    tol: Option<f64>,
    /// Overrides the quantization mode of the config (lower|upper)
    #[arg(long)]
    mode: Option<QuantizationMode>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Solve the MDP and write values.csv, policy.csv and report.txt
    Solve {
        #[command(flatten)]
        common: Common,
        /// Use the threshold-propagating policy improvement
        #[arg(long)]
        structured: bool,
    },
    /// Export a 2-D action grid; uses <out>/policy.csv when present
    PolicyGrid {
        #[command(flatten)]
        common: Common,
        /// Fixed coordinates, e.g. B=5,g=5,h=5
        #[arg(long)]
        slice: String,
        /// Output file name inside --out
        #[arg(long, default_value = "grid.csv")]
        name: String,
    },
    /// Check monotonicity and threshold structure of the solved artifacts
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep one axis for the joint policy and the generate-at-will baseline
    Compare {
        #[command(flatten)]
        common: Common,
        /// packet_mbits or sampling_cost
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Values of the other axis; one table block per value
        #[arg(long, value_delimiter = ',')]
        series: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Simulated slots per point; 0 skips simulation
        #[arg(long, default_value_t = 0)]
        slots: u64,
    },
    /// Simulate the optimal (or baseline) policy
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1_000_000)]
        slots: u64,
        #[arg(long)]
        baseline: bool,
    },
    /// Dump the channel quantizer
    Quantizer {
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    /// Exit 1: the computation ran but a check or convergence failed.
    Check(String),
    /// Exit 2: bad input, config or artifacts.
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotConverged { .. } | Error::StructureViolated => Failure::Check(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn load(common: &Common) -> Result<(SystemParams, SolverConfig), Failure> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Failure::Usage(format!("{}: {e}", common.config.display())))?;
    let mut params = SystemParams::from_config_str(&text)?;
    if let Some(mode) = common.mode {
        params.quantization_mode = mode;
    }
    params.validate()?;
    let mut cfg = SolverConfig::default();
    if let Some(tol) = common.tol {
        cfg.tol = tol;
    }
    Ok((params, cfg))
}

fn write(dir: &Path, name: &str, contents: &str) -> Outcome {
    artifact::write_artifact(dir, name, contents)?;
    Ok(())
}

fn solve(common: &Common, structured: bool) -> Outcome {
    let (params, cfg) = load(common)?;
    let model = TransitionModel::new(params)?;
    let sol = if structured {
        structured_value_iteration(&model, &cfg)?
    } else {
        relative_value_iteration(&model, &cfg)?
    };
    write(&common.out, "values.csv", &artifact::values_csv(&sol, &model))?;
    write(&common.out, "policy.csv", &artifact::policy_csv(&sol, &model))?;
    write(&common.out, "report.txt", &artifact::report_text(&sol, &model))?;
    println!("rho = {:?}", sol.values.rho);
    println!("iterations = {}", sol.values.iterations);
    if !sol.report.converged {
        return Err(Failure::Check(format!(
            "not converged: span {:?} > tol {:?}",
            sol.values.final_span, sol.values.tol
        )));
    }
    Ok(())
}

fn policy_grid(common: &Common, slice: &str, name: &str) -> Outcome {
    let (params, cfg) = load(common)?;
    let model = TransitionModel::new(params)?;
    let spec = SliceSpec::parse(slice)?;
    let stored = common.out.join("policy.csv");
    let policy = if stored.exists() {
        artifact::read_policy(&stored, &model)?.1
    } else {
        relative_value_iteration(&model, &cfg)?.policy
    };
    let grid = artifact::policy_grid_csv(&policy, &model, &spec)?;
    write(&common.out, name, &grid)?;
    print!("{grid}");
    Ok(())
}

fn verify(common: &Common) -> Outcome {
    let (params, _) = load(common)?;
    let model = TransitionModel::new(params)?;
    let values = artifact::read_values(&common.out.join("values.csv"), &model)?;
    let (_, policy) = artifact::read_policy(&common.out.join("policy.csv"), &model)?;
    let report = structure::verify(&values, &policy, &model)?;
    write(&common.out, "structure.txt", &report.summary())?;
    write(&common.out, "violations.csv", &report.violations_csv())?;
    if let Some(t) = &report.thresholds {
        write(&common.out, "thresholds.csv", &t.to_csv())?;
    }
    print!("{}", report.summary());
    if report.pass() {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "structure check failed; counterexamples in {}",
            common.out.join("violations.csv").display()
        )))
    }
}

fn other_axis(axis: SweepAxis) -> SweepAxis {
    match axis {
        SweepAxis::PacketMbits => SweepAxis::SamplingCost,
        SweepAxis::SamplingCost => SweepAxis::PacketMbits,
    }
}

fn compare(common: &Common, axis: SweepAxis, values: &[f64], series: &[f64], seed: u64, slots: u64) -> Outcome {
    let (params, cfg) = load(common)?;
    let rollout = (slots > 0).then(|| RolloutConfig { n_slots: slots, seed, ..Default::default() });
    if let Some(r) = &rollout {
        if r.n_slots < r.batches {
            return Err(Failure::Usage(format!("--slots must be at least {}", r.batches)));
        }
    }
    let settings = SweepSettings { solver: cfg, baseline: true, rollout };
    let blocks: Vec<(Option<f64>, SystemParams)> = if series.is_empty() {
        vec![(None, params.clone())]
    } else {
        series
            .iter()
            .map(|&s| Ok((Some(s), other_axis(axis).apply(&params, s)?)))
            .collect::<Result<_, Error>>()?
    };

    let mut out = format!(
        "# params_hash={} seed={} axis={} series_axis={}\nseries,",
        params.params_hash(),
        if slots > 0 { seed.to_string() } else { "none".into() },
        axis.name(),
        other_axis(axis).name()
    );
    let mut failures = 0;
    for (i, (label, base)) in blocks.iter().enumerate() {
        let table = sweep(base, axis, values, &settings);
        failures += table.rows.iter().filter(|r| r.error.is_some()).count();
        let csv = table.to_csv();
        let mut lines = csv.lines().skip(1);
        let columns = lines.next().unwrap_or_default();
        if i == 0 {
            out.push_str(columns);
            out.push('\n');
        }
        let label = label.map_or_else(String::new, |v| format!("{v:?}"));
        for line in lines {
            out.push_str(&label);
            out.push(',');
            out.push_str(line);
            out.push('\n');
        }
    }
    write(&common.out, "compare.csv", &out)?;
    print!("{out}");
    if failures > 0 {
        eprintln!("{failures} sweep point(s) failed; see the error column");
    }
    Ok(())
}

fn simulate(common: &Common, seed: u64, slots: u64, baseline: bool) -> Outcome {
    let (params, cfg) = load(common)?;
    let rc = RolloutConfig { n_slots: slots, seed, ..Default::default() };
    let hash = params.params_hash();
    let csv = if baseline {
        let q = build_quantizer(&params);
        let (model, sol) = solve_generate_at_will(&params, &q, &cfg)?;
        let stats = rollout(&sol.policy, &model, model.default_initial_index(), &rc)?;
        println!("rho_baseline = {:?}", sol.values.rho);
        stats.to_csv(&hash, &wpcn_aoi::simulator::BaselineAction::ALL)
    } else {
        let model = TransitionModel::new(params)?;
        let sol = relative_value_iteration(&model, &cfg)?;
        let start = model.space().index(&model.default_initial_state());
        let stats = rollout(&sol.policy, &model, start, &rc)?;
        println!("rho = {:?}", sol.values.rho);
        stats.to_csv(&hash, &Action::ALL)
    };
    write(&common.out, if baseline { "simulation_baseline.csv" } else { "simulation.csv" }, &csv)?;
    print!("{csv}");
    Ok(())
}

fn quantizer(common: &Common) -> Outcome {
    let (params, _) = load(common)?;
    let q = build_quantizer(&params);
    let csv = format!(
        "# params_hash={}\n# mode={}\n{}",
        params.params_hash(),
        params.quantization_mode,
        q.to_csv()
    );
    write(&common.out, "quantizer.csv", &csv)?;
    print!("{csv}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Cmd::Solve { common, structured } => solve(common, *structured),
        Cmd::PolicyGrid { common, slice, name } => policy_grid(common, slice, name),
        Cmd::Verify { common } => verify(common),
        Cmd::Compare { common, axis, values, series, seed, slots } => {
            compare(common, *axis, values, series, *seed, *slots)
        }
        Cmd::Simulate { common, seed, slots, baseline } => simulate(common, *seed, *slots, *baseline),
        Cmd::Quantizer { common } => quantizer(common),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
