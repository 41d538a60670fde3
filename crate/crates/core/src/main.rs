use clap::{Parser, Subcommand};
use qcurv::config::{ExperimentConfig, Setup};
use qcurv::continuation::{continue_branch, fit_bubbling_rate, write_branch_csv, BranchRecord, BranchRow};
use qcurv::degree::{leray_schauder_degree, DegreeInput};
use qcurv::functional::{verify_expansion, ExpansionReport, Functional, HarnessSpec, Which};
use qcurv::green::{green_pair_with, write_profile_csv};
use qcurv::io::{to_json, write_csv, write_json};
use qcurv::reduced::{nd_predicates, write_crit_csv};
use qcurv::sphere::{distance, Point};
use qcurv::suites::{self, Check};
use qcurv::{QcError, Result};
use rand::SeedableRng;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "qcurv", version, about = "Numerics for the resonant prescribed Q-curvature problem")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; 1 gives bit-reproducible output.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Green's function profile about the model axis.
    Green,
    /// Critical points of the reduced functional.
    Critpts,
    /// Leray–Schauder degree; the config is the degree input itself.
    Degree,
    /// Continuation branch toward t = 1.
    Continue,
    /// Gradient-expansion harnesses.
    VerifyGradients,
    /// Bubbling-rate fit, from a branch CSV or a fresh branch.
    FitRate {
        #[arg(long)]
        branch: Option<PathBuf>,
    },
    /// Invariant suites.
    Selftest {
        /// Also run the bubbling-rate experiment (several minutes).
        #[arg(long)]
        with_branch: bool,
    },
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| QcError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| QcError::Config(format!("{}: {e}", path.display())))
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    match &cli.config {
        Some(p) => read_config(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn green(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    let s = cfg.setup()?;
    let a = s.model.axis.clone();
    let pair = green_pair_with(&s.model, &a, s.reduced.green.clone(), 1e-2)?;
    let f = std::fs::File::create(cli.out.join("green_profile.csv"))?;
    write_profile_csv(&pair, 400, f)?;
    let summary = serde_json::json!({
        "h_aa": pair.h_aa,
        "tail": pair.tail,
        "k_high": s.reduced.green.k_high(),
        "rho": s.reduced.green.cutoff.rho,
        "geometric": s.reduced.green.geometric,
    });
    write_json(&cli.out.join("green.json"), &summary)?;
    println!("{}", to_json(&summary)?);
    Ok(())
}

fn critpts(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    let s = cfg.setup()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cli.seed);
    let seeds = s.reduced.default_seeds(cfg.seeds_per_factor, &mut rng);
    let found = s.reduced.find_critical_points(&seeds);
    for f in &found.failures {
        log::debug!("seed {} failed: {}", f.seed, f.reason);
    }
    write_crit_csv(&found.configs, std::fs::File::create(cli.out.join("critpts.csv"))?)?;
    let nd = nd_predicates(&found.configs, 1e-8);
    let summary = serde_json::json!({ "count": found.configs.len(), "failed_seeds": found.failures.len(), "nd": nd });
    write_json(&cli.out.join("critpts.json"), &summary)?;
    println!("{}", to_json(&summary)?);
    Ok(())
}

fn degree(cli: &Cli) -> Result<()> {
    let path = cli.config.as_ref().ok_or_else(|| QcError::Config("degree needs --config with the degree input".into()))?;
    let input: DegreeInput = read_config(path)?;
    let report = leray_schauder_degree(&input)?;
    write_json(&cli.out.join("degree.json"), &report)?;
    println!("{}", to_json(&report)?);
    Ok(())
}

fn run_branch(cfg: &ExperimentConfig, s: &Setup) -> Result<BranchRecord> {
    let spec = cfg.branch_spec();
    let f = Functional::new(&s.model, &s.k, spec.schedule.t0)?;
    continue_branch(&f, &s.reduced, &spec)
}

fn continue_cmd(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    let s = cfg.setup()?;
    let rec = run_branch(&cfg, &s)?;
    write_branch_csv(&rec, &cli.out.join("branch.csv"))?;
    let summary = serde_json::json!({
        "rows": rec.rows.len(),
        "bubble_rows": rec.rows.iter().filter(|r| r.has_bubble()).count(),
        "stopped": rec.stopped,
        "left_v": rec.rows.iter().filter(|r| r.has_bubble() && !r.in_v).count(),
    });
    write_json(&cli.out.join("branch.json"), &summary)?;
    println!("{}", to_json(&summary)?);
    Ok(())
}

fn read_branch_csv(path: &Path) -> Result<BranchRecord> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != BranchRow::HEADER {
        return Err(QcError::Config(format!("{}: unexpected header {header:?}", path.display())));
    }
    let mut rows = vec![];
    for rec in r.records() {
        let v: Vec<f64> = rec?.iter().map(|x| x.parse::<f64>().map_err(|e| QcError::Config(format!("{x}: {e}")))).collect::<Result<_>>()?;
        rows.push(BranchRow {
            t: v[0],
            max_u: v[1],
            mean_u: f64::NAN,
            lambda: v[2],
            alpha: f64::NAN,
            a_theta: v[3],
            tau: v[4],
            j: v[5],
            grad_norm: v[6],
            y_lambda_form: v[7],
            y_maxu_form: v[8],
            w_norm: f64::NAN,
            in_v: false,
            in_v_deep: false,
        });
    }
    Ok(BranchRecord { rows, snapshots: vec![], stopped: None })
}

/// The configured critical point, or the one nearest the last fitted center.
fn limiting_point(cli: &Cli, cfg: &ExperimentConfig, s: &Setup, rec: &BranchRecord) -> Result<Point> {
    if let Some(c) = &cfg.crit {
        return Ok(qcurv::sphere::normalize(nalgebra::DVector::from_vec(c.clone())));
    }
    let last = rec.rows.iter().rev().find(|r| r.has_bubble()).ok_or_else(|| QcError::InsufficientData("no bubble rows".into()))?;
    let axis = &s.model.axis;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cli.seed);
    let found = s.reduced.find_critical_points(&s.reduced.default_seeds(cfg.seeds_per_factor, &mut rng));
    let target_z = last.a_theta.cos();
    found
        .configs
        .iter()
        .filter(|c| c.points.len() == 1)
        .map(|c| nalgebra::DVector::from_vec(c.points[0].clone()))
        .min_by(|x, y| (x.dot(axis) - target_z).abs().total_cmp(&(y.dot(axis) - target_z).abs()))
        .ok_or_else(|| QcError::InsufficientData("no critical point of the reduced functional".into()))
}

fn fit_rate(cli: &Cli, branch: Option<&PathBuf>) -> Result<()> {
    let cfg = config(cli)?;
    let s = cfg.setup()?;
    let rec = match branch {
        Some(p) => read_branch_csv(p)?,
        None => {
            let rec = run_branch(&cfg, &s)?;
            write_branch_csv(&rec, &cli.out.join("branch.csv"))?;
            rec
        }
    };
    let crit = limiting_point(cli, &cfg, &s, &rec)?;
    let report = fit_bubbling_rate(&rec, &s.reduced, &crit)?;
    write_json(&cli.out.join("rate.json"), &report)?;
    println!("{}", to_json(&report)?);
    if !report.sign_ok {
        return Err(QcError::Convergence(format!("sign check failed: l_K = {} at {:?}", report.l_k, distance(&crit, &s.model.axis))));
    }
    Ok(())
}

fn write_expansion(dir: &Path, r: &ExpansionReport) -> Result<()> {
    let name = r.which.name();
    write_json(&dir.join(format!("expansion_{name}.json")), r)?;
    let rows: Vec<Vec<f64>> = r.rows.iter().map(|x| vec![x.lambda, x.theta, x.alpha, x.beta, x.t, x.lhs, x.predicted, x.residual, x.scaled]).collect();
    write_csv(&dir.join(format!("expansion_{name}.csv")), &["lambda", "theta", "alpha", "beta", "t", "lhs", "predicted", "residual", "scaled"], &rows)
}

fn verify_gradients(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    let s = cfg.setup()?;
    let list = cfg.harness.clone().unwrap_or_else(|| {
        if s.model.mbar() == 1 {
            vec![Which::Beta]
        } else {
            vec![Which::Lambda, Which::Alpha, Which::A, Which::LambdaSum]
        }
    });
    let mut all_pass = true;
    let mut summary = serde_json::Map::new();
    for which in list {
        let mut spec = HarnessSpec::default_for(which);
        if which == Which::Beta {
            spec.mu_ell = s.model.mu(spec.ell);
        }
        let r = verify_expansion(&s.model, &s.reduced, which, &spec)?;
        write_expansion(&cli.out, &r)?;
        all_pass &= r.pass;
        summary.insert(which.name().into(), serde_json::json!({ "pass": r.pass, "spread": r.spread }));
    }
    println!("{}", to_json(&summary)?);
    if all_pass {
        Ok(())
    } else {
        Err(QcError::Convergence("an expansion check failed".into()))
    }
}

fn selftest(cli: &Cli, with_branch: bool) -> Result<()> {
    let mut crit: Vec<u8> = suites::CRITERIA.to_vec();
    if with_branch {
        crit.push(8);
        crit.sort();
    }
    let mut checks: Vec<Check> = vec![];
    for c in crit {
        let t0 = std::time::Instant::now();
        let r = suites::run(c, cli.seed);
        log::info!("suite {c}: {:.1} s", t0.elapsed().as_secs_f64());
        for x in &r {
            println!("{} [{}] {}: {}", if x.pass { "PASS" } else { "FAIL" }, x.criterion, x.name, x.detail);
        }
        checks.extend(r);
    }
    write_json(&cli.out.join("selftest.json"), &checks)?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(QcError::Convergence(format!("{failed} checks failed")))
    }
}

fn run(cli: &Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out)?;
    match &cli.cmd {
        Cmd::Green => green(cli),
        Cmd::Critpts => critpts(cli),
        Cmd::Degree => degree(cli),
        Cmd::Continue => continue_cmd(cli),
        Cmd::VerifyGradients => verify_gradients(cli),
        Cmd::FitRate { branch } => fit_rate(cli, branch.as_ref()),
        Cmd::Selftest { with_branch } => selftest(cli, *with_branch),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QCURV_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
