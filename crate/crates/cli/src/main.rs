use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use curvecut::pipeline::{
    run_circle_accuracy, run_dump_neighborhood, run_energy, run_response_map, run_theorem1,
    write_text,
};
use curvecut::{run_inpaint, run_segment, CliError, CliResult, OptimizerKind, RunConfig, Task};

/// Binary segmentation and inpainting with a squared-curvature regularizer.
#[derive(Parser, Debug)]
#[command(name = "curvecut", version)]
struct Cli {
    /// TOML config; flags given on the command line override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the effective config to this path before running.
    #[arg(long, global = true)]
    save_config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment a grayscale image.
    Segment {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Segment with the masked region left to the regularizer.
    Inpaint {
        input: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Curvature energy of a labeling with a per-family CSV breakdown.
    Energy {
        labeling: PathBuf,
        /// CSV destination (stdout when absent).
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        nb: NeighborhoodArgs,
    },
    /// Per-pixel curvature response of a labeling.
    ResponseMap {
        labeling: PathBuf,
        /// Normalized grayscale image.
        #[arg(short, long)]
        output: PathBuf,
        /// Raw responses as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        nb: NeighborhoodArgs,
    },
    /// Curvature energy of rasterized disks against 2 pi / r.
    CircleAccuracy {
        #[arg(long, value_delimiter = ',')]
        radii: Option<Vec<f64>>,
        /// Jittered disk centers per axis.
        #[arg(long)]
        center_samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        nb: NeighborhoodArgs,
    },
    /// Fired area of a clique near a circle: closed form, Taylor term, rasterized.
    Theorem1 {
        #[arg(long, value_delimiter = ',')]
        kappa: Option<Vec<f64>>,
        #[arg(long = "d", value_delimiter = ',')]
        lengths: Option<Vec<f64>>,
        #[arg(long)]
        subpixel: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Clique families as CSV.
    DumpNeighborhood {
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        nb: NeighborhoodArgs,
    },
}

#[derive(Args, Debug)]
struct NeighborhoodArgs {
    #[arg(long)]
    clique_radius: Option<usize>,
    /// `full` or `axis`.
    #[arg(long)]
    neighborhood: Option<String>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[command(flatten)]
    nb: NeighborhoodArgs,
    /// Curvature weight on the (upscaled) grid.
    #[arg(long)]
    lambda: Option<f64>,
    /// Integer upscale factor. Lambda is not adjusted automatically.
    #[arg(long)]
    scale: Option<usize>,
    #[arg(long)]
    mean_fg: Option<f64>,
    #[arg(long)]
    mean_bg: Option<f64>,
    #[arg(long)]
    variance: Option<f64>,
    /// `lsa-tr`, `icm` or `brute`.
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    tr_init: Option<f64>,
    #[arg(long)]
    tr_growth: Option<f64>,
    #[arg(long)]
    tr_max: Option<f64>,
    #[arg(long)]
    tr_tau: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Energy report CSV (stdout when absent).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Optimizer trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Add wall-clock seconds to the report.
    #[arg(long)]
    timing: bool,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl NeighborhoodArgs {
    fn apply(self, cfg: &mut RunConfig) {
        set(&mut cfg.clique_radius, self.clique_radius);
        set(&mut cfg.neighborhood, self.neighborhood);
    }
}

impl ModelArgs {
    fn apply(self, cfg: &mut RunConfig) {
        self.nb.apply(cfg);
        set(&mut cfg.lambda, self.lambda);
        set(&mut cfg.scale, self.scale);
        set(&mut cfg.mean_fg, self.mean_fg);
        set(&mut cfg.mean_bg, self.mean_bg);
        set(&mut cfg.variance, self.variance);
        set(&mut cfg.optimizer, self.optimizer);
        set(&mut cfg.tr_init, self.tr_init);
        set(&mut cfg.tr_growth, self.tr_growth);
        set(&mut cfg.tr_max, self.tr_max);
        set(&mut cfg.tr_tau, self.tr_tau);
        set(&mut cfg.max_iterations, self.max_iterations);
        set(&mut cfg.seed, self.seed);
        cfg.report = self.report.or(cfg.report.take());
        cfg.trace = self.trace.or(cfg.trace.take());
        cfg.timing |= self.timing;
    }
}

fn configure(cli: Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Segment {
            input,
            output,
            model,
        } => {
            cfg.task = Task::Segment;
            cfg.input = Some(input);
            cfg.output = Some(output);
            model.apply(&mut cfg);
        }
        Command::Inpaint {
            input,
            mask,
            output,
            model,
        } => {
            cfg.task = Task::Inpaint;
            cfg.input = Some(input);
            cfg.mask = Some(mask);
            cfg.output = Some(output);
            model.apply(&mut cfg);
        }
        Command::Energy {
            labeling,
            output,
            nb,
        } => {
            cfg.task = Task::Energy;
            cfg.input = Some(labeling);
            cfg.output = output;
            nb.apply(&mut cfg);
        }
        Command::ResponseMap {
            labeling,
            output,
            csv,
            nb,
        } => {
            cfg.task = Task::ResponseMap;
            cfg.input = Some(labeling);
            cfg.output = Some(output);
            cfg.report = csv;
            nb.apply(&mut cfg);
        }
        Command::CircleAccuracy {
            radii,
            center_samples,
            seed,
            output,
            nb,
        } => {
            cfg.task = Task::CircleAccuracy;
            set(&mut cfg.radii, radii);
            set(&mut cfg.center_samples, center_samples);
            set(&mut cfg.seed, seed);
            cfg.output = output;
            nb.apply(&mut cfg);
        }
        Command::Theorem1 {
            kappa,
            lengths,
            subpixel,
            theta,
            output,
        } => {
            cfg.task = Task::Theorem1;
            set(&mut cfg.kappas, kappa);
            set(&mut cfg.lengths, lengths);
            set(&mut cfg.subpixel, subpixel);
            set(&mut cfg.theta, theta);
            cfg.output = output;
        }
        Command::DumpNeighborhood { output, nb } => {
            cfg.task = Task::DumpNeighborhood;
            cfg.output = output;
            nb.apply(&mut cfg);
        }
    }
    if let Some(path) = &cli.save_config {
        write_text(path, &cfg.to_toml())?;
    }
    Ok(cfg)
}

fn init_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("CURVECUT_THREADS") else {
        return Ok(());
    };
    let n: usize = value.trim().parse().map_err(|_| {
        CliError::usage(format!(
            "CURVECUT_THREADS must be an integer, got `{value}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(format!("cannot configure thread pool: {e}")))
}

fn dispatch(cfg: &RunConfig) -> CliResult<()> {
    match cfg.task {
        Task::Segment => run_segment(cfg).map(drop),
        Task::Inpaint => run_inpaint(cfg).map(drop),
        Task::Energy => run_energy(cfg).map(drop),
        Task::ResponseMap => run_response_map(cfg).map(drop),
        Task::CircleAccuracy => run_circle_accuracy(cfg).map(drop),
        Task::Theorem1 => run_theorem1(cfg).map(drop),
        Task::DumpNeighborhood => run_dump_neighborhood(cfg).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = init_threads()
        .and_then(|_| configure(cli))
        .and_then(|cfg| dispatch(&cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
