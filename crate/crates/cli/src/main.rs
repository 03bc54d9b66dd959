//! Command-line front end: single runs, sweeps, the readout comparison table
//! and the figure data.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rcsim::harness::{
    figure_specs, parse_pairs, reproduce_table1, run_sweep, write_table1_csv, ExperimentSpec,
    SweepOutput,
};
use rcsim::{Result, SimError};

#[derive(Debug, Parser)]
#[command(
    name = "rcsim",
    version,
    about = "Opto-electronic reservoir computer simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train and test one configuration on every mask.
    Run(Common),
    /// Run the Cartesian product of the `sweep.<param>` grids.
    Sweep(Common),
    /// Both tasks under every readout photodiode scenario.
    Table1(Common),
    /// Scans of beta, alpha, rho, bias and DAC bits for both tasks.
    Figures {
        #[command(flatten)]
        common: Common,
        /// Directory receiving one file set per scan.
        #[arg(long = "output_dir", default_value = "figures")]
        output_dir: PathBuf,
    },
}

macro_rules! overrides {
    ($($field:ident: $help:literal),* $(,)?) => {
        /// Every config key, as a `--key value` flag.
        #[derive(Debug, Default, Args)]
        struct Overrides {
            $(
                #[arg(long = stringify!($field), value_name = "VALUE", help = $help)]
                $field: Option<String>,
            )*
        }

        impl Overrides {
            fn pairs(&self) -> Vec<(String, String)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push((stringify!($field).to_string(), v.clone()));
                    }
                )*
                out
            }
        }
    };
}

overrides! {
    task: "channel or narma10",
    n_neurons: "Number of virtual neurons",
    alpha: "Feedback gain",
    beta: "Input gain",
    rho: "RC integrator ratio",
    bias: "Readout modulator bias",
    output_gain: "Gain from filter voltage to recorded output",
    dac_bits: "DAC resolution, or `none`",
    dac_range: "DAC full scale",
    readout_mode: "ideal, analogue, nonlinear-readout or nonlinear-output",
    pd_fn: "identity, logistic or tanh",
    kernel: "decaying or growing",
    seed: "Master seed [default: 42]",
    washout: "Test steps excluded from the metric",
    roundtrip_s: "Physical round trip time (metadata only)",
    lambda0: "Initial learning rate",
    lambda_min: "Learning rate floor",
    gamma: "Learning rate decay factor",
    update_rate: "Steps between decays",
    train_len: "Training steps",
    test_len: "Test steps",
    snr_db: "Channel noise SNR in dB, or `none`",
    method: "online, offline-ideal or offline-analogue",
    ridge: "Ridge for offline training",
    n_masks: "Random input masks per point",
    parallel: "Run masks and grid points on all cores",
    output: "Output CSV path",
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Shorter sequences for smoke runs.
    #[arg(long)]
    quick: bool,
    /// Grid as `param=v1,v2`, `param=lin:a:b:n` or `param=log:a:b:n`.
    #[arg(long, value_name = "PARAM=GRID")]
    sweep: Vec<String>,
    #[command(flatten)]
    overrides: Overrides,
}

impl Common {
    fn spec(&self) -> Result<ExperimentSpec> {
        let mut pairs = match &self.config {
            Some(path) => parse_pairs(&std::fs::read_to_string(path).map_err(|e| {
                SimError::InvalidArgument(format!("cannot read {}: {e}", path.display()))
            })?)?,
            None => Vec::new(),
        };
        pairs.extend(self.overrides.pairs());
        for s in &self.sweep {
            let (param, grid) = s
                .split_once('=')
                .ok_or_else(|| SimError::Parse(format!("--sweep expects PARAM=GRID, got `{s}`")))?;
            pairs.push((format!("sweep.{}", param.trim()), grid.to_string()));
        }
        if self.quick {
            pairs.push(("quick".into(), "true".into()));
        }
        let spec = ExperimentSpec::from_pairs(&pairs)?;
        spec.validate()?;
        Ok(spec)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(common) => run(&common),
        Command::Sweep(common) => sweep(&common),
        Command::Table1(common) => table1(&common),
        Command::Figures { common, output_dir } => figures(&common, &output_dir),
    }
}

fn run(common: &Common) -> Result<()> {
    let spec = common.spec()?;
    if !spec.sweep.is_empty() {
        return Err(SimError::InvalidArgument(
            "`run` takes a single configuration; use `sweep` for grids".into(),
        ));
    }
    let out = run_sweep(&spec)?;
    let metric = spec.task.kind.metric_name();
    for r in &out.runs {
        match &r.outcome {
            Ok(res) => println!("mask {}: {metric} = {:.6e}", r.mask_id, res.value),
            Err(e) => println!("mask {}: failed: {e}", r.mask_id),
        }
    }
    let row = &out.rows[0];
    println!(
        "{} {metric}: mean {:.6e} std {:.6e} over {} masks",
        spec.task.kind, row.mean, row.std, row.n
    );
    save(&out)?;
    if row.failures > 0 {
        return Err(SimError::InvalidArgument(format!(
            "{} of {} runs failed",
            row.failures, spec.n_masks
        )));
    }
    Ok(())
}

fn sweep(common: &Common) -> Result<()> {
    let spec = common.spec()?;
    if spec.sweep.is_empty() {
        return Err(SimError::InvalidArgument(
            "no grid given; add `sweep.<param> = ...` to the config or --sweep".into(),
        ));
    }
    let out = run_sweep(&spec)?;
    print_rows(&out);
    save(&out)
}

fn table1(common: &Common) -> Result<()> {
    let spec = common.spec()?;
    let (cells, outputs) =
        reproduce_table1(spec.n_masks, common.quick, spec.base.seed, spec.parallel)?;
    println!(
        "{:<9} {:<18} {:<9} {:>12} {:>12} {:>3}",
        "task", "readout", "pd", "mean", "std", "n"
    );
    for c in &cells {
        println!(
            "{:<9} {:<18} {:<9} {:>12.4e} {:>12.4e} {:>3}",
            c.task.to_string(),
            c.readout_mode.to_string(),
            c.pd_fn.to_string(),
            c.mean,
            c.std,
            c.n
        );
    }
    let path = spec
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("table1.csv"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_table1_csv(std::fs::File::create(&path)?, &cells)?;
    println!("wrote {}", path.display());
    let failed: usize = outputs.iter().map(SweepOutput::failures).sum();
    if failed > 0 {
        eprintln!("warning: {failed} runs failed");
    }
    Ok(())
}

fn figures(common: &Common, dir: &Path) -> Result<()> {
    let base = common.spec()?;
    for spec in figure_specs(&base, dir)? {
        println!("== {} / {}", spec.sweep[0].param, spec.task.kind);
        let out = run_sweep(&spec)?;
        print_rows(&out);
        save(&out)?;
    }
    Ok(())
}

fn print_rows(out: &SweepOutput) {
    for r in &out.rows {
        let failed = if r.failures > 0 {
            format!(" ({} failed)", r.failures)
        } else {
            String::new()
        };
        println!(
            "{}={}: mean {:.6e} std {:.6e} n {}{failed}",
            r.param, r.value, r.mean, r.std, r.n
        );
    }
}

fn save(out: &SweepOutput) -> Result<()> {
    if let Some(path) = &out.spec.output {
        for p in out.write_all(path)? {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}
