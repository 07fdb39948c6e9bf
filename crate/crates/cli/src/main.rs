use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use localsieve::atoms::{decompose_approx_atom, validate_atom, Atom, AtomKind, BContext};
use localsieve::experiment::run::kernel_from_spec;
use localsieve::experiment::{
    csv_bytes, emit_plot_data, init_threads_from_env, run_experiment, run_with_threads, CheckId, ExperimentConfig,
    ExperimentReport,
};
use localsieve::kernels::certify_delta_kernel;
use localsieve::spaces::{oscillation_report, BallFamily};
use localsieve::{Ball, GridFunction};

#[derive(Parser)]
#[command(name = "localsieve", version, about = "Singular integrals, local Hardy space atoms and commutators on grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify a convolution kernel and print the certificate as JSON.
    CertifyKernel {
        /// `hilbert`, `riesz:j:n`, `inverse-power:n` (optionally `*bump`), or a `.gfn` sample.
        kernel: String,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[arg(long, default_value_t = 20000)]
        budget: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Compare the two localizations of an operator on random inputs.
    LocalizeCompare {
        #[arg(long, default_value = "hilbert")]
        kernel: String,
        #[arg(long, default_value = "bump")]
        eta: String,
        #[arg(long, default_value = "gaussian:0.25")]
        psi: String,
        #[arg(long = "N", value_delimiter = ',', default_value = "2048")]
        sizes: Vec<usize>,
        #[arg(long = "L", default_value_t = 8.0)]
        half_width: f64,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Oscillation norms of a sampled function over a dyadic ball family.
    Norms {
        #[arg(long)]
        input: PathBuf,
        /// Center spacing of the family, in cells.
        #[arg(long, default_value_t = 4)]
        family_stride: usize,
        #[arg(long, default_value_t = 1)]
        p: u32,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        report: Format,
        /// Largest radius in the family.
        #[arg(long, default_value_t = 2.0)]
        max_radius: f64,
    },
    /// Split an approximate h1_b atom into atoms with vanishing integral.
    AtomDecompose {
        #[arg(long)]
        input: PathBuf,
        /// `x0,r` in one dimension, `x0,y0,r` in two.
        #[arg(long)]
        ball: String,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 4)]
        family_stride: usize,
    },
    /// Commutator experiments on generated atoms.
    CommutatorSuite {
        #[arg(long, default_value = "hilbert")]
        kernel: String,
        #[arg(long, default_value = "clipped-log")]
        b: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Comma list of radii, or `dyadic:lo:hi`.
        #[arg(long, default_value = "dyadic:-6:1")]
        radii: String,
        #[arg(long = "N", value_delimiter = ',', default_value = "1024,2048")]
        sizes: Vec<usize>,
        #[arg(long = "L", default_value_t = 4.0)]
        half_width: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum)]
        check: SuiteCheck,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the shipped configuration of one acceptance criterion (`1`..`12` or `ac01`..).
    Reproduce {
        criterion: String,
        #[arg(long, default_value = "configs")]
        configs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment configuration file.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteCheck {
    Thm51,
    Thm54,
    Prop47,
    Prop48,
    Prop412,
    Cor414,
}

impl SuiteCheck {
    fn id(self) -> CheckId {
        match self {
            SuiteCheck::Thm51 => CheckId::Thm51,
            SuiteCheck::Thm54 => CheckId::Thm54,
            SuiteCheck::Prop47 => CheckId::Prop47,
            SuiteCheck::Prop48 => CheckId::Prop48,
            SuiteCheck::Prop412 => CheckId::Prop412,
            SuiteCheck::Cor414 => CheckId::Cor414,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads_from_env().map_err(anyhow::Error::from).and_then(|_| dispatch(cli.command)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(passed)` for a completed run.
fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::CertifyKernel { kernel, delta, budget, seed } => {
            let k = kernel_from_spec(&kernel)?.with_delta(delta);
            let cert = certify_delta_kernel(&k, budget, seed)?;
            println!("{}", serde_json::to_string_pretty(&cert)?);
            Ok(cert.passed())
        }
        Command::LocalizeCompare { kernel, eta, psi, sizes, half_width, trials, seed, out } => {
            let cfg = ExperimentConfig {
                check: CheckId::LocalizeCompare,
                kernels: vec![kernel],
                eta,
                psi,
                sizes,
                half_width,
                trials,
                seed,
                ..ExperimentConfig::default()
            };
            execute(&cfg, &out)
        }
        Command::Norms { input, family_stride, p, report, max_radius } => {
            let f = GridFunction::read_gfn(&input).with_context(|| format!("reading {}", input.display()))?;
            let family = BallFamily::dyadic(f.grid(), family_stride, max_radius, &[])?;
            let rep = oscillation_report(&f, &family)?;
            let bmo_p = rep.bmo_p(p)?;
            match report {
                Format::Json => {
                    let v = serde_json::json!({ "p": p, "bmo_p": bmo_p, "report": rep });
                    println!("{}", serde_json::to_string_pretty(&v)?);
                }
                Format::Csv => {
                    println!("p,bmo_p,bmo,bmo2,bmo6,bmo_loc,bmo_loc2,lmo_loc,lmo_loc2,large_mean,lmo,balls");
                    println!(
                        "{p},{bmo_p},{},{},{},{},{},{},{},{},{},{}",
                        rep.bmo.value,
                        rep.bmo2.value,
                        rep.bmo6.value,
                        rep.bmo_loc.value,
                        rep.bmo_loc2.value,
                        rep.lmo_loc.value,
                        rep.lmo_loc2.value,
                        rep.large_mean.value,
                        rep.lmo,
                        rep.balls
                    );
                }
            }
            Ok(true)
        }
        Command::AtomDecompose { input, ball, b, family_stride } => {
            let values = GridFunction::read_gfn(&input).with_context(|| format!("reading {}", input.display()))?;
            let b = GridFunction::read_gfn(&b).with_context(|| format!("reading {}", b.display()))?;
            let ball = parse_ball(&ball, values.grid().dim())?;
            let ctx = BContext::new(b, &BallFamily::dyadic(values.grid(), family_stride, 2.0, &[])?)?;
            let atom = Atom { values, ball, kind: AtomKind::ApproxH1b };
            let input_cert = validate_atom(&atom, Some(&ctx))?;
            let d = decompose_approx_atom(&atom, &ctx.b)?;
            let certs = d.atoms.iter().map(|a| validate_atom(a, Some(&ctx))).collect::<Result<Vec<_>, _>>()?;
            let within = d.ell_one_sum <= d.bound;
            let passed = within && certs.iter().all(|c| c.passed);
            let v = serde_json::json!({
                "input": input_cert,
                "coefficients": d.coefficients,
                "k": d.k,
                "ell_one_sum": d.ell_one_sum,
                "bound": d.bound,
                "within_bound": within,
                "residual_b_moments": d.residual_b_moments,
                "atoms": certs,
                "passed": passed,
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
            Ok(passed)
        }
        Command::CommutatorSuite { kernel, b, trials, radii, sizes, half_width, seed, check, out } => {
            let text = format!(
                "check = {}\nkernels = {kernel}\nb = {b}\ntrials = {trials}\nradii = {radii}\nl = {half_width}\nseed = {seed}\nn = {}\n",
                check.id(),
                sizes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","),
            );
            let cfg = ExperimentConfig::parse(&text)?;
            execute(&cfg, &out)
        }
        Command::Reproduce { criterion, configs, out } => {
            let id = criterion_file(&criterion)?;
            let cfg = ExperimentConfig::load(configs.join(format!("{id}.cfg")))
                .with_context(|| format!("loading {id}.cfg from {}", configs.display()))?;
            let out = out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("results").join(&id));
            if id == DETERMINISM_CRITERION {
                return determinism(&cfg, &out);
            }
            execute(&cfg, &out)
        }
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let out = out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("."));
            execute(&cfg, &out)
        }
    }
}

fn execute(cfg: &ExperimentConfig, out: &Path) -> Result<bool> {
    let report = run_experiment(cfg)?;
    report.write(out)?;
    emit_plot_data(&report, out)?;
    print_outcomes(&report);
    Ok(report.passed())
}

/// The criterion whose config is rerun at two thread counts.
const DETERMINISM_CRITERION: &str = "ac12";

fn determinism(cfg: &ExperimentConfig, out: &Path) -> Result<bool> {
    let first = run_with_threads(cfg, 1)?;
    let second = run_with_threads(cfg, 3)?;
    first.write(out)?;
    let same = csv_bytes(&first)? == csv_bytes(&second)?;
    println!("{} CSV bytes at 1 and 3 threads: {}", if same { "PASS" } else { "FAIL" }, if same { "identical" } else { "differ" });
    Ok(same)
}

fn print_outcomes(report: &ExperimentReport) {
    for w in &report.summary.warnings {
        eprintln!("warning: {w}");
    }
    for o in &report.summary.outcomes {
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {}: observed {:e} (threshold {:e}) {}", o.name, o.observed, o.threshold, o.note);
    }
}

/// `6`, `06`, `ac6` and `ac06` all name `ac06`.
fn criterion_file(s: &str) -> Result<String> {
    let digits = s.trim().trim_start_matches("ac").trim_start_matches("AC");
    let n: u32 = digits.parse().with_context(|| format!("unknown criterion `{s}`"))?;
    if !(1..=12).contains(&n) {
        bail!("criterion `{s}` is not in 1..=12");
    }
    Ok(format!("ac{n:02}"))
}

fn parse_ball(s: &str, dim: usize) -> Result<Ball> {
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>()).collect::<Result<_, _>>().context("ball coordinates")?;
    let ball = match (dim, v.as_slice()) {
        (1, [x, r]) => Ball::new([*x, 0.0], *r)?,
        (2, [x, y, r]) => Ball::new([*x, *y], *r)?,
        _ => bail!("--ball needs x0,r in one dimension or x0,y0,r in two"),
    };
    Ok(ball)
}
