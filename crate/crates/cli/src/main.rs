use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use iac_core::experiments::{cdf_csv, gap_csv, gap_ratio, run_upper_bound_mc, sweep, GapPoint, SweepCell};
use iac_core::feasibility::{feasibility_report, ia_baselines};
use iac_core::model::{make_config, sample_channels, SystemConfig};
use iac_core::planner::{build_alignment_plan, AlignmentPlan, TieBreak};
use iac_core::solver::{solve_with_plan, TransceiverSet};
use iac_core::tolerance::Tolerances;
use iac_core::verify::{verify, VerificationReport};
use iac_core::IacError;

/// Closed-form IAC transceiver design and DoF experiments.
#[derive(Parser, Debug)]
#[command(name = "iac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    tol: TolArgs,
}

#[derive(Args, Debug)]
struct TolArgs {
    /// Relative singular-value threshold for rank decisions
    #[arg(long, global = true)]
    rank_tol: Option<f64>,
    /// Normalized leakage above which zero-forcing counts as violated
    #[arg(long, global = true)]
    zf_tol: Option<f64>,
    /// Channel singularity threshold (sigma_min / sigma_max)
    #[arg(long, global = true)]
    singular_tol: Option<f64>,
    /// Minimum singular value of a user's precoder
    #[arg(long, global = true)]
    dependent_tol: Option<f64>,
}

impl TolArgs {
    fn resolve(&self) -> Tolerances {
        let mut t = Tolerances::default();
        if let Some(v) = self.rank_tol {
            t.rank_rel = v;
        }
        if let Some(v) = self.zf_tol {
            t.zero_forcing = v;
        }
        if let Some(v) = self.singular_tol {
            t.singular_channel = v;
        }
        if let Some(v) = self.dependent_tol {
            t.dependent_columns = v;
        }
        t
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

/// A DoF tuple from a JSON file or inline flags.
#[derive(Args, Debug)]
struct ConfigArgs {
    /// JSON file with fields K, M, groups, dof
    #[arg(long, conflicts_with_all = ["k", "m", "dof"])]
    config: Option<PathBuf>,
    /// Number of MACs (inline form)
    #[arg(short = 'K', long = "k", requires_all = ["m", "dof"])]
    k: Option<usize>,
    /// Antennas per node (inline form)
    #[arg(short = 'M', long = "m")]
    m: Option<usize>,
    /// Per-MAC stream counts: MACs separated by ';', users by ',' (e.g. "2;2;2,2")
    #[arg(long)]
    dof: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<SystemConfig> {
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            return serde_json::from_str(&text).with_context(|| format!("parsing configuration {}", path.display()));
        }
        let (Some(k), Some(m), Some(dof)) = (self.k, self.m, &self.dof) else {
            bail!(Usage("give --config or all of --k, --m, --dof".into()));
        };
        let dof = parse_dof(dof)?;
        let groups: Vec<usize> = dof.iter().map(Vec::len).collect();
        Ok(make_config(k, m, &groups, dof)?)
    }
}

fn parse_dof(text: &str) -> Result<Vec<Vec<usize>>> {
    text.split(';')
        .map(|mac| {
            mac.split(',')
                .map(|d| {
                    d.trim()
                        .parse::<usize>()
                        .with_context(|| format!("bad stream count {d:?} in --dof"))
                })
                .collect()
        })
        .collect()
}

#[derive(Args, Debug)]
struct SeedArg {
    /// Master seed for every random draw
    #[arg(long, env = "IAC_SEED", default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate the closed-form existence conditions and the infeasibility screen
    Feasibility {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Plan, solve and verify transceivers on seeded random channels
    Solve {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        seed: SeedArg,
        /// Write the solution artifact here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Re-verify a solution artifact written by `solve`
    Verify {
        /// Solution artifact (JSON)
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Monte Carlo estimate of the DoF upper bound for one (K, M)
    McUpper {
        #[arg(short = 'K', long = "k")]
        k: usize,
        #[arg(short = 'M', long = "m")]
        m: usize,
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Gap ratio between the Monte Carlo bound and 2M for one (K, M)
    Gap {
        #[arg(short = 'K', long = "k")]
        k: usize,
        #[arg(short = 'M', long = "m")]
        m: usize,
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Grid of Monte Carlo cells; writes cdf.csv, gap.csv and per-cell CDF files
    Sweep {
        #[arg(long, default_value_t = 3)]
        kmin: usize,
        #[arg(long, default_value_t = 7)]
        kmax: usize,
        /// Comma-separated antenna counts
        #[arg(long = "m", value_delimiter = ',', default_value = "2,4,6,8")]
        m: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
        #[command(flatten)]
        seed: SeedArg,
        /// Output directory (created if missing)
        #[arg(long)]
        out: PathBuf,
        /// Also write a gnuplot script plotting the CSVs
        #[arg(long)]
        gnuplot: bool,
    },
    /// Closed-form and interference-alignment reference DoF values
    Baselines {
        #[arg(short = 'K', long = "k")]
        k: usize,
        #[arg(short = 'M', long = "m")]
        m: usize,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

/// What `solve` writes and `verify` reads back.
#[derive(Serialize, Deserialize)]
struct SolveArtifact {
    config: SystemConfig,
    seed: u64,
    tolerances: Tolerances,
    plan: AlignmentPlan,
    transceivers: TransceiverSet,
    report: VerificationReport,
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

enum Verdict {
    Ok,
    Failed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Verdict::Ok) => ExitCode::SUCCESS,
        Ok(Verdict::Failed) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 1 for domain verdicts, 2 for usage, parse and I/O problems.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<IacError>() {
        Some(
            IacError::Json(_)
            | IacError::Io(_)
            | IacError::Parse(_)
            | IacError::DimensionMismatch(_)
            | IacError::OutOfRange(_)
            | IacError::IndexOutOfRange { .. },
        )
        | None => 2,
        Some(_) => 1,
    }
}

fn run(cli: Cli) -> Result<Verdict> {
    let tol = cli.tol.resolve();
    match cli.command {
        Command::Feasibility { config, format } => {
            let config = config.load()?;
            let report = feasibility_report(&config)?;
            match format {
                Format::Table => {
                    print!(
                        "{}",
                        inequality_table(report.inequalities.iter().map(|i| (&i.name, i.lhs, i.rhs, i.holds)))
                    );
                    println!("k_IAC                  {}", report.k_iac);
                    println!("closed-form feasible   {}", report.closed_form_feasible);
                    println!("not proven infeasible  {}", report.not_proven_infeasible);
                }
                _ => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            Ok(if report.closed_form_feasible {
                Verdict::Ok
            } else {
                Verdict::Failed
            })
        }
        Command::Solve {
            config,
            seed,
            out,
            format,
        } => {
            let config = config.load()?;
            let seed = seed.seed;
            let plan = build_alignment_plan(&config, TieBreak::Lexicographic)?;
            let channels = sample_channels(&config, seed);
            let tx = solve_with_plan(&config, &channels, &plan, seed, &tol)?;
            let report = verify(&config, &channels, &tx, Some(&plan), &tol);
            let passed = report.passed(&tol);
            let artifact = SolveArtifact {
                config,
                seed,
                tolerances: tol,
                plan,
                transceivers: tx,
                report,
            };
            let json = serde_json::to_string_pretty(&artifact)? + "\n";
            match (&out, format) {
                (Some(path), Format::Table) => {
                    write_atomic(path, json.as_bytes())?;
                    print!("{}", artifact.report.to_table());
                }
                (Some(path), _) => write_atomic(path, json.as_bytes())?,
                (None, Format::Table) => print!("{}", artifact.report.to_table()),
                (None, _) => print!("{json}"),
            }
            Ok(if passed { Verdict::Ok } else { Verdict::Failed })
        }
        Command::Verify { input, format } => {
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let artifact: SolveArtifact = serde_json::from_str(&text)
                .with_context(|| format!("parsing solution artifact {}", input.display()))?;
            let channels = sample_channels(&artifact.config, artifact.seed);
            let report = verify(
                &artifact.config,
                &channels,
                &artifact.transceivers,
                Some(&artifact.plan),
                &artifact.tolerances,
            );
            match format {
                Format::Table => print!("{}", report.to_table()),
                _ => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            Ok(if report.passed(&artifact.tolerances) {
                Verdict::Ok
            } else {
                Verdict::Failed
            })
        }
        Command::McUpper {
            k,
            m,
            runs,
            seed,
            out,
            format,
        } => {
            let mc = run_upper_bound_mc(k, m, runs, seed.seed)?;
            let text = match format {
                Format::Json => serde_json::to_string_pretty(&mc)? + "\n",
                Format::Csv => cdf_csv([&mc])?,
                Format::Table => {
                    let mut s = format!(
                        "K={} M={} runs={} accepted={} upper*={}\n{:>6} {:>10}\n",
                        mc.macs,
                        mc.antennas,
                        mc.runs,
                        mc.accepted,
                        mc.upper_star.map_or("NA".to_string(), |u| u.to_string()),
                        "dof",
                        "cdf"
                    );
                    for p in &mc.cdf {
                        s += &format!("{:>6} {:>10.6}\n", p.dof, p.cdf);
                    }
                    s
                }
            };
            emit(out.as_deref(), &text)?;
            Ok(Verdict::Ok)
        }
        Command::Gap {
            k,
            m,
            runs,
            seed,
            format,
        } => {
            let mc = run_upper_bound_mc(k, m, runs, seed.seed)?;
            let cell = SweepCell {
                gap: gap_ratio(&mc).ok(),
                mc,
            };
            match format {
                Format::Csv => print!("{}", gap_csv([&cell])?),
                Format::Table => print!("{}", gap_table([&cell])),
                Format::Json => println!("{}", serde_json::to_string_pretty(&cell.gap)?),
            }
            Ok(if cell.gap.is_some() {
                Verdict::Ok
            } else {
                Verdict::Failed
            })
        }
        Command::Sweep {
            kmin,
            kmax,
            m,
            runs,
            seed,
            out,
            gnuplot,
        } => {
            if kmin > kmax {
                bail!(Usage(format!("--kmin {kmin} exceeds --kmax {kmax}")));
            }
            let cells = sweep(kmin..=kmax, &m, runs, seed.seed)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for c in &cells {
                let name = format!("cdf_K{}_M{}.csv", c.mc.macs, c.mc.antennas);
                write_atomic(&out.join(name), cdf_csv([&c.mc])?.as_bytes())?;
            }
            write_atomic(&out.join("cdf.csv"), cdf_csv(cells.iter().map(|c| &c.mc))?.as_bytes())?;
            write_atomic(&out.join("gap.csv"), gap_csv(&cells)?.as_bytes())?;
            if gnuplot {
                write_atomic(&out.join("plot.gp"), gnuplot_script(&cells).as_bytes())?;
            }
            print!("{}", gap_table(&cells));
            Ok(Verdict::Ok)
        }
        Command::Baselines { k, m, format } => {
            if k == 0 || m == 0 {
                bail!(Usage("K and M must be positive".into()));
            }
            let b = ia_baselines(k, m);
            let closed_form = 2 * m;
            match format {
                Format::Table => {
                    println!("closed-form IAC    {closed_form}");
                    println!("IA symmetric       {} ({:.4})", b.symmetric, ratio_f64(b.symmetric));
                    println!("IA general         {}", b.general);
                }
                Format::Csv => {
                    println!("K,M,iac_closed_form,ia_symmetric,ia_general");
                    println!(
                        "{k},{m},{closed_form},{},{}",
                        ratio_f64(b.symmetric),
                        ratio_f64(b.general)
                    );
                }
                Format::Json => {
                    let v = serde_json::json!({
                        "K": k,
                        "M": m,
                        "iac_closed_form": closed_form,
                        "ia_symmetric": ratio_f64(b.symmetric),
                        "ia_general": ratio_f64(b.general),
                    });
                    println!("{}", serde_json::to_string_pretty(&v)?);
                }
            }
            Ok(Verdict::Ok)
        }
    }
}

fn ratio_f64(r: num_rational::Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn inequality_table<'a>(rows: impl Iterator<Item = (&'a String, i64, i64, bool)>) -> String {
    let mut s = format!("{:<20} {:>6} {:>6} {:>6}\n", "inequality", "lhs", "rhs", "holds");
    for (name, lhs, rhs, holds) in rows {
        s += &format!("{name:<20} {lhs:>6} {rhs:>6} {holds:>6}\n");
    }
    s
}

fn gap_table<'a>(cells: impl IntoIterator<Item = &'a SweepCell>) -> String {
    let mut s = format!(
        "{:>3} {:>3} {:>10} {:>6} {:>8} {:>8} {:>7}\n",
        "K", "M", "upper*", "2M", "gap", "accepted", "runs"
    );
    for c in cells {
        let (upper, gap) = match &c.gap {
            Some(GapPoint { upper_star, gap, .. }) => (upper_star.to_string(), format!("{gap:.4}")),
            None => ("NA".into(), "NA".into()),
        };
        s += &format!(
            "{:>3} {:>3} {:>10} {:>6} {:>8} {:>8} {:>7}\n",
            c.mc.macs,
            c.mc.antennas,
            upper,
            2 * c.mc.antennas,
            gap,
            c.mc.accepted,
            c.mc.runs
        );
    }
    s
}

fn gnuplot_script(cells: &[SweepCell]) -> String {
    let mut antennas: Vec<usize> = cells.iter().map(|c| c.mc.antennas).collect();
    antennas.sort_unstable();
    antennas.dedup();
    let mut s = String::from("set datafile separator ','\nset key left top\nset terminal pngcairo size 900,600\n");
    for m in &antennas {
        s += &format!("set output 'cdf_M{m}.png'\nset xlabel 'DoF upper bound'\nset ylabel 'CDF'\nplot");
        let mut first = true;
        for c in cells.iter().filter(|c| c.mc.antennas == *m && !c.mc.is_empty()) {
            s += &format!(
                "{} 'cdf_K{k}_M{m}.csv' every ::1 using 3:4 with steps title 'K={k}'",
                if first { "" } else { "," },
                k = c.mc.macs
            );
            first = false;
        }
        if first {
            s += " NaN notitle";
        }
        s += "\n";
    }
    s += "set output 'gap.png'\nset xlabel 'K'\nset ylabel 'gap ratio'\nplot";
    for (i, m) in antennas.iter().enumerate() {
        s += &format!(
            "{} 'gap.csv' every ::1 using ($2=={m} ? $1 : 1/0):5 with linespoints title 'M={m}'",
            if i == 0 { "" } else { "," }
        );
    }
    s += "\n";
    s
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Writes through a temporary file in the target directory and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
