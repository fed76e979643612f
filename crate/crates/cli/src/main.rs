//! Command-line front end: parse a run configuration, dispatch an experiment,
//! write result tables and a run manifest.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use eigcollide::capacity::{box_counting_dim, capacity_lower_bound, dyadic_scales, level_chart, CapacityBound};
use eigcollide::config::{parse_config, BoxDimSection, CapacitySection, GapFitSection, RunConfig};
use eigcollide::ensembles::{matrix_to_vec, Beta};
use eigcollide::experiments::{gap_exponent_fit, phase_sweep, refinement_study, small_time_study, with_threads};
use eigcollide::geometry::{degenerate_dimension, sample_degenerate, uniform_levels, CompletedFrame};
use eigcollide::output::{self, Format, ResultRecord, RunManifest};
use eigcollide::rng::{experiment_id, substream};
use num_complex::Complex64;

mod selfcheck;

#[derive(Parser, Debug)]
#[command(name = "eigcollide", version, about = "Eigenvalue collision experiments for matrix-valued Gaussian processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

/// Every flag can also come from an `EIGCOLLIDE_*` variable; flags win over
/// the environment, which wins over the config file.
#[derive(Args, Debug)]
struct Opts {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = "EIGCOLLIDE_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true, env = "EIGCOLLIDE_SEED")]
    seed: Option<u64>,
    /// Replica count override.
    #[arg(long, global = true, env = "EIGCOLLIDE_REPLICAS")]
    replicas: Option<usize>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, env = "EIGCOLLIDE_THREADS")]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "EIGCOLLIDE_OUT", default_value = "results")]
    out: PathBuf,
    #[arg(long, global = true, env = "EIGCOLLIDE_FORMAT", value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Collision probabilities along the mesh ladder, plus the small-time
    /// study when the config has a `[small_time]` section.
    Simulate,
    /// Refinement studies across Hurst values (`[sweep]` section or `--hurst`).
    Sweep {
        #[arg(long, value_delimiter = ',')]
        hurst: Option<Vec<f64>>,
    },
    /// Small-gap exponent of the matrix at a fixed time.
    Gapfit,
    /// Capacity lower bounds of the degenerate set along a level chart.
    Capacity,
    /// Box-counting dimension of random degenerate matrices.
    Boxdim,
    /// Built-in consistency checks; prints a pass/fail table.
    Selfcheck,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sweep { .. } => "sweep",
            Command::Gapfit => "gapfit",
            Command::Capacity => "capacity",
            Command::Boxdim => "boxdim",
            Command::Selfcheck => "selfcheck",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Jsonl => Format::Jsonl,
        }
    }
}

fn load_config(opts: &Opts) -> Result<RunConfig> {
    let path = opts.config.as_ref().context("--config is required for this subcommand")?;
    let mut config = parse_config(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(seed) = opts.seed {
        config.experiment.seed = seed;
    }
    if let Some(replicas) = opts.replicas {
        config.experiment.replicas = replicas;
    }
    config.validate()?;
    Ok(config)
}

struct Run<'a> {
    config: &'a RunConfig,
    run_id: String,
    out: &'a Path,
    format: Format,
    files: Vec<PathBuf>,
}

impl Run<'_> {
    fn write(&mut self, kind: &str, records: &[ResultRecord]) -> Result<()> {
        let path = output::write_table(self.out, kind, self.format, records)?;
        log::info!("wrote {}", path.display());
        self.files.push(path);
        Ok(())
    }

    fn simulate(&mut self) -> Result<()> {
        let e = &self.config.experiment;
        let study = refinement_study(e, &e.mesh)?;
        let h = e.hurst.get(0).get();
        self.write("refinement", &output::refinement_records(&self.run_id, h, e.regime(), &study))?;
        if let Some(s) = &self.config.small_time {
            let study = small_time_study(e, &s.horizons, s.mesh)?;
            self.write("small_time", &output::small_time_records(&self.run_id, e.regime(), &study))?;
        }
        Ok(())
    }

    fn sweep(&mut self, hurst: Option<Vec<f64>>) -> Result<()> {
        let hurst = match hurst.or_else(|| self.config.sweep.as_ref().map(|s| s.hurst.clone())) {
            Some(h) => h,
            None => bail!("sweep needs Hurst values: add a [sweep] section or pass --hurst"),
        };
        let sweep = phase_sweep(&self.config.experiment, &hurst)?;
        self.write("sweep", &output::sweep_records(&self.run_id, &sweep))
    }

    fn gapfit(&mut self) -> Result<()> {
        let e = &self.config.experiment;
        let g = self.config.gapfit.clone().unwrap_or_else(|| GapFitSection {
            t0: vec![1.0; e.hurst.dim()],
            ..GapFitSection::default()
        });
        let fit = gap_exponent_fit(e.beta, e.d, &e.hurst, &g.t0, g.samples, g.window, e.seed)?;
        self.write("gapfit", &output::exponent_records(&self.run_id, e.regime(), e.beta.value(), &fit))
    }

    fn capacity(&mut self) -> Result<()> {
        let e = &self.config.experiment;
        let c = self.config.capacity.clone().unwrap_or_else(CapacitySection::default);
        // distinct centers spaced beyond the chart's reach keep the levels ordered
        let center: Vec<f64> = (0..e.d - 1).rev().map(|k| 3.0 * c.scale * k as f64).collect();
        let chart = match e.beta {
            Beta::Goe => level_chart(CompletedFrame::<f64>::identity(e.d), center, c.scale)?,
            Beta::Gue => level_chart(CompletedFrame::<Complex64>::identity(e.d), center, c.scale)?,
        };
        let bounds: Vec<(f64, CapacityBound)> = c
            .alpha
            .iter()
            .map(|&a| Ok((a, capacity_lower_bound(&chart, a, c.pairs, e.seed)?)))
            .collect::<eigcollide::Result<_>>()?;
        self.write("capacity", &output::capacity_records(&self.run_id, e.regime(), &bounds))
    }

    fn boxdim(&mut self) -> Result<()> {
        let e = &self.config.experiment;
        let b = self.config.boxdim.clone().unwrap_or_else(BoxDimSection::default);
        let levels = uniform_levels(e.d, -1.0, 1.0);
        let mut rng = substream(e.seed, experiment_id("cli/boxdim"), 0);
        let mut points = Vec::new();
        for _ in 0..b.samples {
            points.extend(matrix_to_vec(&sample_degenerate(e.d, e.beta, &levels, &mut rng)?)?);
        }
        let dim = points.len() / b.samples;
        let result = box_counting_dim(&points, dim, &dyadic_scales(b.largest, b.scales)?)?;
        let expected = degenerate_dimension(e.beta, e.d) as f64;
        self.write("boxdim", &output::boxdim_records(&self.run_id, expected, &result))
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    let format: Format = cli.opts.format.into();
    if let Command::Selfcheck = cli.command {
        let rows = selfcheck::run(cli.opts.seed.unwrap_or(0));
        let ok = selfcheck::print(&rows);
        return Ok(ok);
    }
    let config = load_config(&cli.opts)?;
    let command = cli.command.name();
    let workers = cli.opts.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let mut manifest = RunManifest::new(&config, command, workers)?;
    let mut run = Run { config: &config, run_id: manifest.run_id.clone(), out: &cli.opts.out, format, files: Vec::new() };
    let cmd = cli.command.clone();
    with_threads(workers, || -> Result<()> {
        match cmd {
            Command::Simulate => run.simulate(),
            Command::Sweep { hurst } => run.sweep(hurst),
            Command::Gapfit => run.gapfit(),
            Command::Capacity => run.capacity(),
            Command::Boxdim => run.boxdim(),
            Command::Selfcheck => unreachable!(),
        }
    })??;
    manifest.files = run.files.iter().filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())).collect();
    let path = manifest.write(&cli.opts.out)?;
    for f in &run.files {
        println!("{}", f.display());
    }
    println!("{}", path.display());
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
