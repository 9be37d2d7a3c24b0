use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use modpoly::arith::is_prime;
use modpoly::engine::{
    compute_modular_polynomial, holdout_residual, holdout_threshold_log2, pilot_run, schlaefli_sparsity_filter,
    BivariatePolynomial, EngineOptions, DEFAULT_SAFETY, INITIAL_DEGREE_GUESS,
};
use modpoly::format::{read_modpoly, write_modpoly};
use modpoly::jobs::{merge, prepare_job, run_worker, JobManifest};
use modpoly::oracle::oracle_modular_polynomial;
use modpoly::FunctionFamily;

#[derive(Parser)]
#[command(name = "modpoly", version, about = "Modular polynomials by evaluation and interpolation")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a modular polynomial and write it in MODPOLY v1 format.
    Compute {
        #[command(flatten)]
        family: FamilyArgs,
        #[command(flatten)]
        tuning: TuningArgs,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the height at low precision and print the production precision.
    Pilot {
        #[command(flatten)]
        family: FamilyArgs,
        #[command(flatten)]
        tuning: TuningArgs,
    },
    /// Check a MODPOLY file against the q-expansion oracle or by residuals.
    Verify {
        /// Polynomial file to check.
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = VerifyMode::Auto)]
        mode: VerifyMode,
        /// Number of random primes in oracle mode.
        #[arg(long, default_value_t = 5)]
        primes: usize,
        /// Seed for the prime choice (default: random).
        #[arg(long)]
        seed: Option<u64>,
        /// Working precision in residual mode (default: 4·height + 256).
        #[arg(long)]
        precision: Option<u32>,
    },
    /// Evaluate rows of a distributed job.
    Worker {
        #[command(flatten)]
        job: JobArgs,
        /// Index of the range to evaluate (default: all ranges).
        #[arg(long)]
        worker: Option<usize>,
        /// Number of ranges when creating the manifest.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        family: OptionalFamilyArgs,
        #[command(flatten)]
        tuning: TuningArgs,
    },
    /// Interpolate a finished job and write the polynomial.
    Merge {
        #[command(flatten)]
        job: JobArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyKind {
    Classical,
    Canonical,
    Atkin,
    Schlaefli,
    #[value(name = "eta2quotient")]
    EtaQuotient,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VerifyMode {
    /// Oracle for classical and canonical files, residual otherwise.
    Auto,
    Oracle,
    Residual,
}

#[derive(Args)]
struct FamilyArgs {
    #[arg(long, value_enum)]
    family: FamilyKind,
    /// Prime level ℓ.
    #[arg(long)]
    level: u64,
    /// Hecke prime for the atkin family (default: smallest admissible).
    #[arg(long)]
    r: Option<u64>,
    /// First eta-quotient prime (eta2quotient only).
    #[arg(long)]
    p1: Option<u64>,
    /// Second eta-quotient prime (eta2quotient only).
    #[arg(long)]
    p2: Option<u64>,
}

#[derive(Args)]
struct OptionalFamilyArgs {
    #[arg(long, value_enum, requires = "level")]
    family: Option<FamilyKind>,
    #[arg(long)]
    level: Option<u64>,
    #[arg(long)]
    r: Option<u64>,
    #[arg(long)]
    p1: Option<u64>,
    #[arg(long)]
    p2: Option<u64>,
}

#[derive(Args)]
struct TuningArgs {
    /// Multiplier applied to the pilot height.
    #[arg(long, default_value_t = DEFAULT_SAFETY)]
    safety: f64,
    /// Working precision in bits, skipping the pilot.
    #[arg(long)]
    precision_override: Option<u32>,
    /// Degree in the base function, when it is not known in advance.
    #[arg(long)]
    deg_j_override: Option<usize>,
    /// Interpolate only every 24th coefficient (schlaefli only).
    #[arg(long)]
    sparse: bool,
}

#[derive(Args)]
struct JobArgs {
    #[arg(long, env = "MODPOLY_DIR")]
    job_dir: PathBuf,
}

impl FamilyArgs {
    fn build(&self) -> Result<FunctionFamily> {
        build_family(self.family, self.level, self.r, self.p1, self.p2)
    }
}

impl OptionalFamilyArgs {
    fn build(&self) -> Result<Option<FunctionFamily>> {
        match (self.family, self.level) {
            (Some(kind), Some(level)) => Ok(Some(build_family(kind, level, self.r, self.p1, self.p2)?)),
            _ => Ok(None),
        }
    }
}

fn build_family(kind: FamilyKind, level: u64, r: Option<u64>, p1: Option<u64>, p2: Option<u64>) -> Result<FunctionFamily> {
    if kind != FamilyKind::Atkin && r.is_some() {
        bail!("--r only applies to the atkin family");
    }
    if kind != FamilyKind::EtaQuotient && (p1.is_some() || p2.is_some()) {
        bail!("--p1/--p2 only apply to the eta2quotient family");
    }
    let fam = match kind {
        FamilyKind::Classical => FunctionFamily::classical(level)?,
        FamilyKind::Canonical => FunctionFamily::canonical(level)?,
        FamilyKind::Atkin => FunctionFamily::atkin(level, r)?,
        FamilyKind::Schlaefli => FunctionFamily::schlaefli(level)?,
        FamilyKind::EtaQuotient => {
            let (Some(p1), Some(p2)) = (p1, p2) else {
                bail!("eta2quotient needs --p1 and --p2");
            };
            FunctionFamily::eta_quotient(level, p1, p2)?
        }
    };
    Ok(fam)
}

impl TuningArgs {
    fn options(&self) -> Result<EngineOptions> {
        if !(self.safety >= 1.0) {
            bail!("--safety must be at least 1, got {}", self.safety);
        }
        Ok(EngineOptions {
            safety: self.safety,
            precision_override: self.precision_override,
            deg_j_override: self.deg_j_override,
            sparse: self.sparse,
        })
    }
}

fn write_output(poly: &BivariatePolynomial, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_modpoly(poly, BufWriter::new(f)).with_context(|| format!("writing {}", path.display()))?;
        }
        None => write_modpoly(poly, io::stdout().lock())?,
    }
    Ok(())
}

/// Report lines go to stdout when the polynomial goes to a file.
fn report(to_stdout: bool, line: String) {
    if to_stdout {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

fn cmd_compute(family: &FamilyArgs, tuning: &TuningArgs, out: Option<&Path>) -> Result<ExitCode> {
    let fam = family.build()?;
    let start = Instant::now();
    let (poly, rep) = compute_modular_polynomial(&fam, &tuning.options()?)
        .with_context(|| format!("computing {fam}"))?;
    write_output(&poly, out)?;
    let r = |s: String| report(out.is_some(), s);
    r(format!("family: {fam}"));
    r(format!("degrees: degX {} degJ {}", poly.deg_x, poly.deg_j));
    r(format!("height: {} bits (pilot estimate {})", poly.height, rep.pilot_height));
    r(format!("precision: {} bits ({} retries)", rep.precision, rep.precision_retries));
    r(format!("holdout residual: 2^{:.1}", rep.holdout_log2));
    r(format!("time for pilot: {:.3} s", rep.pilot_time.as_secs_f64()));
    r(format!("time for evaluation: {:.3} s", rep.evaluation_time.as_secs_f64()));
    r(format!("time for interpolation: {:.3} s", rep.interpolation_time.as_secs_f64()));
    r(format!("total time: {:.3} s", start.elapsed().as_secs_f64()));
    Ok(ExitCode::SUCCESS)
}

fn cmd_pilot(family: &FamilyArgs, tuning: &TuningArgs) -> Result<ExitCode> {
    let fam = family.build()?;
    let options = tuning.options()?;
    let deg_j = match options.deg_j_override.or(fam.profile().deg_j_known) {
        Some(d) => d,
        None => {
            eprintln!("note: base degree of {fam} unknown, piloting with degree {INITIAL_DEGREE_GUESS}");
            INITIAL_DEGREE_GUESS
        }
    };
    let start = Instant::now();
    let est = pilot_run(&fam, deg_j, options.safety, options.sparse)?;
    println!("family: {fam}");
    println!("degJ: {deg_j}");
    println!("pilot height: {} bits", est.pilot_height);
    println!("production precision: {} bits", options.precision_override.unwrap_or(est.production_precision));
    println!("time for pilot: {:.3} s", start.elapsed().as_secs_f64());
    Ok(ExitCode::SUCCESS)
}

fn random_prime(rng: &mut StdRng) -> u64 {
    loop {
        let c = rng.gen_range(1u64 << 61..1u64 << 62) | 1;
        if is_prime(c) {
            return c;
        }
    }
}

fn verify_oracle(poly: &BivariatePolynomial, primes: usize, seed: Option<u64>) -> Result<bool> {
    let mut rng = match seed {
        Some(s) => StdRng::seed_from_u64(s),
        None => StdRng::from_entropy(),
    };
    for _ in 0..primes {
        let p = random_prime(&mut rng);
        let oracle = oracle_modular_polynomial(&poly.family, p).with_context(|| format!("oracle mod {p}"))?;
        let mine = poly.reduce_mod(p);
        let mut keys: Vec<_> = mine.keys().chain(oracle.coeffs.keys()).copied().collect();
        keys.sort_unstable_by(|a, b| b.cmp(a));
        keys.dedup();
        if let Some(&(r, s)) = keys.iter().find(|k| mine.get(k) != oracle.coeffs.get(k)) {
            println!(
                "FAIL mod {p}: coefficient of X^{r} J^{s} is {} in the file, {} by the oracle",
                mine.get(&(r, s)).copied().unwrap_or(0),
                oracle.coeffs.get(&(r, s)).copied().unwrap_or(0)
            );
            println!("first differing coefficient: (r, s) = ({r}, {s})");
            return Ok(false);
        }
        println!("ok mod {p}");
    }
    Ok(true)
}

fn verify_residual(poly: &BivariatePolynomial, precision: Option<u32>) -> Result<bool> {
    let prec = precision.unwrap_or(4 * poly.height + 256);
    let mut ok = true;
    if let FunctionFamily::Schlaefli { ell } = poly.family {
        let admissible = schlaefli_sparsity_filter(ell);
        match poly.terms().find(|&((i, k), _)| !admissible(k, i)) {
            Some(((i, k), _)) => {
                println!("FAIL sparsity: nonzero coefficient at (r, s) = ({i}, {k})");
                ok = false;
            }
            None => println!("ok sparsity"),
        }
        if poly.is_symmetric() {
            println!("ok symmetry");
        } else {
            println!("FAIL symmetry");
            ok = false;
        }
    }
    let residual = holdout_residual(&poly.family, poly, prec)?.log2_abs();
    let threshold = holdout_threshold_log2(prec);
    if residual <= threshold {
        println!("ok residual 2^{residual:.1} at {prec} bits (threshold 2^{threshold:.1})");
    } else {
        println!("FAIL residual 2^{residual:.1} at {prec} bits (threshold 2^{threshold:.1})");
        ok = false;
    }
    Ok(ok)
}

fn cmd_verify(input: &Path, mode: VerifyMode, primes: usize, seed: Option<u64>, precision: Option<u32>) -> Result<ExitCode> {
    let f = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let poly = read_modpoly(BufReader::new(f)).with_context(|| format!("reading {}", input.display()))?;
    let oracle_family = matches!(poly.family, FunctionFamily::Classical { .. } | FunctionFamily::Canonical { .. });
    let ok = match mode {
        VerifyMode::Oracle if !oracle_family => bail!("no oracle for the {} family", poly.family.name()),
        VerifyMode::Oracle => verify_oracle(&poly, primes, seed)?,
        VerifyMode::Auto if oracle_family => verify_oracle(&poly, primes, seed)?,
        VerifyMode::Auto | VerifyMode::Residual => verify_residual(&poly, precision)?,
    };
    println!("{}", if ok { "PASS" } else { "FAIL" });
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_worker(
    job: &JobArgs,
    worker: Option<usize>,
    workers: usize,
    family: &OptionalFamilyArgs,
    tuning: &TuningArgs,
) -> Result<ExitCode> {
    let dir = &job.job_dir;
    let requested = family.build()?;
    let manifest = if JobManifest::path(dir).exists() {
        let m = JobManifest::load(dir)?;
        if let Some(fam) = requested {
            if fam != m.family {
                bail!("job in {} is for {}, not {fam}", dir.display(), m.family);
            }
        }
        m
    } else {
        let Some(fam) = requested else {
            bail!("no manifest in {}; pass --family and --level to create one", dir.display());
        };
        let m = prepare_job(&fam, &tuning.options()?, workers, dir)?;
        m.save(dir)?;
        info!("created {} with {} points at {} bits", JobManifest::path(dir).display(), m.points, m.precision);
        m
    };
    let indices: Vec<usize> = match worker {
        Some(w) => vec![w],
        None => (0..manifest.ranges.len()).collect(),
    };
    let start = Instant::now();
    for w in indices {
        let rep = run_worker(dir, &manifest, w)?;
        println!(
            "worker {w}: rows {:?} computed {} skipped {}",
            manifest.ranges[w],
            rep.computed.len(),
            rep.skipped.len()
        );
    }
    println!("time for evaluation: {:.3} s", start.elapsed().as_secs_f64());
    Ok(ExitCode::SUCCESS)
}

fn cmd_merge(job: &JobArgs, out: Option<&Path>) -> Result<ExitCode> {
    let dir = &job.job_dir;
    let manifest = JobManifest::load(dir)?;
    let start = Instant::now();
    let (poly, holdout) = merge(dir, &manifest).with_context(|| format!("merging {}", dir.display()))?;
    write_output(&poly, out)?;
    let r = |s: String| report(out.is_some(), s);
    r(format!("family: {}", manifest.family));
    r(format!("degrees: degX {} degJ {}", poly.deg_x, poly.deg_j));
    r(format!("height: {} bits", poly.height));
    r(format!("precision: {} bits", manifest.precision));
    r(format!("holdout residual: 2^{holdout:.1}"));
    r(format!("time for interpolation: {:.3} s", start.elapsed().as_secs_f64()));
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let code = match &cli.command {
        Command::Compute { family, tuning, out } => cmd_compute(family, tuning, out.as_deref())?,
        Command::Pilot { family, tuning } => cmd_pilot(family, tuning)?,
        Command::Verify { input, mode, primes, seed, precision } => {
            cmd_verify(input, *mode, *primes, *seed, *precision)?
        }
        Command::Worker { job, worker, workers, family, tuning } => {
            cmd_worker(job, *worker, *workers, family, tuning)?
        }
        Command::Merge { job, out } => cmd_merge(job, out.as_deref())?,
    };
    io::stdout().flush()?;
    Ok(code)
}
