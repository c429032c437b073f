//! `gwprune` command-line front end.

mod config;

use clap::{Parser, Subcommand};
use config::{ConfigError, RunConfig};
use gwprune::offspring::{erase_discrete, erased_prune_law_discrete, pruned_law};
use gwprune::prune::{cut, mark_branchpoints, mark_edges, mark_h, mark_hbar};
use gwprune::sampler::{gw_exp, gw_unit, kesten_exp, kesten_unit, levy_erased};
use gwprune::verify::experiments::{self, MarginalConfig};
use gwprune::verify::report::{fmt17, CSV_HEADER};
use gwprune::verify::{self, MarginalRegime, SuiteReport};
use gwprune::{Caps, MarkSet, OffspringLaw, PruneTimeFamily, RealTree, RngStream};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

const GENERATOR: &str = "ChaCha8Rng";
const OUT_ENV: &str = "GWPRUNE_OUT";

#[derive(Parser, Debug)]
#[command(name = "gwprune", version, about = "Galton-Watson real trees, erasure and pruning")]
struct Cli {
    /// Key-value (TOML) run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for replicate fan-out.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Record wall-clock seconds in reports (breaks byte-identical output).
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample trees: kind = gw_unit | gw_exp | kesten_unit | kesten_exp | levy_erased.
    Sample {
        /// `key=value` settings applied over the config file.
        #[arg(value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Analytic law transforms.
    Transform {
        /// erase_discrete | pruned_law | erased_prune_law_discrete | erased_law | ad_prune_law | domain_family
        op: String,
        #[arg(value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Mark a tree and cut it along a θ grid.
    Prune {
        #[arg(value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run verification suites (`suite=<name>|all`).
    Verify {
        #[arg(value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run a parametrised experiment and emit CSV: height | ascension | marginal | limits.
    Experiment {
        name: String,
        #[arg(value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Run(gwprune::Error),
    #[error("{path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("verification failed: {0}")]
    Failed(String),
}

impl From<gwprune::Error> for CliError {
    fn from(e: gwprune::Error) -> Self {
        use gwprune::Error as E;
        match e {
            E::InvalidArgument(_) | E::Domain(_) | E::Parse { .. } | E::Degenerate(_) => CliError::Config(ConfigError::Library(e)),
            other => CliError::Run(other),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failed(_) => 3,
            CliError::Run(_) | CliError::Write { .. } => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Collects named outputs; writes them under `dir` or concatenates them on
/// standard output.
struct Output {
    dir: Option<PathBuf>,
}

impl Output {
    fn emit(&self, name: &str, content: &str) -> Result<()> {
        match &self.dir {
            Some(d) => {
                let path = d.join(name);
                std::fs::write(&path, content).map_err(|e| CliError::Write { path: path.display().to_string(), source: e })
            }
            None => {
                print!("{content}");
                Ok(())
            }
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    timing: bool,
    out: Output,
}

impl Ctx {
    fn provenance(&self) -> String {
        format!("# seed={} generator={GENERATOR} param_hash={}\n", self.seed, self.cfg.hash())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gwprune: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(ConfigError::Invalid { key: "workers".into(), msg: "must be positive".into() }.into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global().map_err(|e| ConfigError::Invalid { key: "workers".into(), msg: e.to_string() })?;
    }
    let set = match &cli.command {
        Command::Sample { set } | Command::Transform { set, .. } | Command::Prune { set } | Command::Verify { set } | Command::Experiment { set, .. } => set,
    };
    let mut cfg = RunConfig::load(cli.config.as_deref(), set)?;
    if let Some(s) = cli.seed {
        cfg.set("seed", toml::Value::Integer(s as i64));
    }
    let seed = cfg.u64_or("seed", 42)?;
    let dir = cli.out.clone().or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from));
    if let Some(d) = &dir {
        std::fs::create_dir_all(d).map_err(|e| CliError::Write { path: d.display().to_string(), source: e })?;
    }
    let ctx = Ctx { cfg, seed, timing: cli.timing, out: Output { dir } };
    match &cli.command {
        Command::Sample { .. } => cmd_sample(&ctx),
        Command::Transform { op, .. } => cmd_transform(&ctx, op),
        Command::Prune { .. } => cmd_prune(&ctx),
        Command::Verify { .. } => cmd_verify(&ctx),
        Command::Experiment { name, .. } => cmd_experiment(&ctx, name),
    }
}

fn caps(cfg: &RunConfig) -> Result<Caps> {
    Ok(Caps { max_height: cfg.f64("max_height")?, max_nodes: cfg.u64_or("max_nodes", 10_000_000)? as usize })
}

fn sample_one(cfg: &RunConfig, kind: &str, caps: &Caps, rng: &mut gwprune::rng::Rng) -> Result<RealTree> {
    let mu = || -> Result<OffspringLaw> { Ok(cfg.law("mu")?.unwrap_or_else(|| OffspringLaw::dirac(1))) };
    let t = match kind {
        "gw_unit" => gw_unit(&cfg.req_law("xi")?, &mu()?, caps, rng)?,
        "gw_exp" => gw_exp(&cfg.req_law("xi")?, cfg.req_f64("c")?, &mu()?, caps, rng)?,
        "kesten_unit" => kesten_unit(&cfg.req_law("xi")?, cfg.req_u64("spine_height")?, caps, rng)?.tree,
        "kesten_exp" => kesten_exp(&cfg.req_law("xi")?, cfg.req_f64("c")?, cfg.req_f64("spine_height")?, caps, rng)?.tree,
        "levy_erased" => levy_erased(&cfg.mechanism()?, cfg.req_f64("h")?, cfg.f64_or("x", 1.0)?, caps, rng)?,
        other => return Err(ConfigError::Invalid { key: "kind".into(), msg: format!("unknown sampler '{other}'") }.into()),
    };
    Ok(t)
}

fn cmd_sample(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let kind = cfg.str_or("kind", "gw_unit")?;
    let count = cfg.u64_or("count", 1)? as usize;
    let caps = caps(cfg)?;
    let trees = verify::try_replicate(ctx.seed, 0x5a3, count, |r| {
        sample_one(cfg, &kind, &caps, r).map_err(|e| match e {
            CliError::Run(e) => e,
            CliError::Config(ConfigError::Library(e)) => e,
            other => gwprune::Error::InvalidArgument(other.to_string()),
        })
    })?;
    let header = ctx.provenance();
    let mut summary = String::from("replicate,nodes,gamma,total_length,n_root,capped\n");
    for (i, t) in trees.iter().enumerate() {
        let body = format!("{header}# kind={kind} replicate={i}\n{}", t.to_text());
        ctx.out.emit(&format!("tree_{i:04}.txt"), &body)?;
        writeln!(summary, "{i},{},{},{},{},{}", t.node_count(), fmt17(t.gamma()), fmt17(t.total_length()), t.n_root(), t.is_capped()).unwrap();
    }
    if ctx.out.dir.is_some() {
        ctx.out.emit("summary.csv", &summary)?;
    }
    Ok(())
}

fn prune_family(cfg: &RunConfig) -> Result<PruneTimeFamily> {
    let f = cfg.str_or("family", "branch")?;
    match f.as_str() {
        "branch" => Ok(PruneTimeFamily::BranchPoint),
        "equal_rate" => Ok(PruneTimeFamily::EqualRate(cfg.f64_or("rate", 1.0)?)),
        "explicit" => {
            let rates = cfg.f64_list("rates")?.ok_or_else(|| ConfigError::Missing("rates".into()))?;
            Ok(PruneTimeFamily::Explicit(rates.into_iter().map(gwprune::TimeLaw::Exponential).collect()))
        }
        other => Err(ConfigError::Invalid { key: "family".into(), msg: format!("unknown family '{other}'") }.into()),
    }
}

fn survival_table(fam: &PruneTimeFamily, max_m: usize, grid: &[f64]) -> Result<String> {
    let mut s = String::from("m,theta,survival\n");
    for m in 1..=max_m {
        for &t in grid {
            writeln!(s, "{m},{},{}", fmt17(t), fmt17(fam.survival(m, t)?)).unwrap();
        }
    }
    Ok(s)
}

fn cmd_transform(ctx: &Ctx, op: &str) -> Result<()> {
    let cfg = &ctx.cfg;
    let out = &ctx.out;
    match op {
        "erase_discrete" => {
            let mu = cfg.law("mu")?.unwrap_or_else(|| OffspringLaw::dirac(1));
            let (xi, mu) = erase_discrete(&cfg.req_law("xi")?, &mu, cfg.req_u64("h")?)?;
            out.emit("xi.law", &xi.to_text())?;
            out.emit("mu.law", &mu.to_text())?;
        }
        "pruned_law" => {
            let law = pruned_law(&cfg.req_law("xi")?, &prune_family(cfg)?, cfg.req_f64("theta")?)?;
            out.emit("xi.law", &law.to_text())?;
        }
        "erased_prune_law_discrete" => {
            let xi = cfg.req_law("xi")?;
            let (fam, law) = erased_prune_law_discrete(&xi, cfg.req_u64("h")?, cfg.req_f64("theta")?)?;
            out.emit("xi.law", &law.to_text())?;
            let grid = cfg.f64_list("grid")?.unwrap_or_else(|| vec![0.25, 0.5, 1.0, 2.0, 4.0]);
            out.emit("family.csv", &survival_table(&fam, xi.max_index(), &grid)?)?;
        }
        "erased_law" => {
            let e = cfg.mechanism()?.erased_law(cfg.req_f64("h")?, cfg.f64_or("x", 1.0)?)?;
            out.emit("xi.law", &format!("# c = {}\n# eta = {}\n{}", fmt17(e.c), fmt17(e.eta), e.xi.to_text()))?;
            out.emit("mu.law", &e.mu.to_text())?;
        }
        "ad_prune_law" => {
            let b = cfg.mechanism()?.ad_prune_law(cfg.req_f64("h")?)?;
            let max_m = cfg.u64_or("max_degree", 4)? as usize;
            let mut s = String::from("theta,hbar1");
            for m in 2..=max_m {
                write!(s, ",H{m}").unwrap();
            }
            s.push('\n');
            for &(t, h) in b.grid() {
                write!(s, "{},{}", fmt17(t), fmt17(h)).unwrap();
                for m in 2..=max_m {
                    write!(s, ",{}", fmt17(b.hm_survival(m, t))).unwrap();
                }
                s.push('\n');
            }
            out.emit("bundle.csv", &s)?;
        }
        "domain_family" => {
            let (xi, gamma) = cfg.mechanism()?.domain_family(cfg.req_u64("n")?)?;
            out.emit("xi.law", &format!("# gamma = {}\n{}", fmt17(gamma), xi.to_text()))?;
        }
        other => return Err(ConfigError::Invalid { key: "op".into(), msg: format!("unknown transform '{other}'") }.into()),
    }
    Ok(())
}

fn load_tree(path: &str) -> Result<RealTree> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read { path: path.into(), source: e })?;
    Ok(RealTree::from_text(&text)?)
}

fn cmd_prune(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let mut rng = RngStream::replicate(ctx.seed, 0x9a1, 0).rng();
    let tree = match cfg.str("tree_file")? {
        Some(p) => load_tree(&p)?,
        None => sample_one(cfg, &cfg.str_or("kind", "gw_unit")?, &caps(cfg)?, &mut rng)?,
    };
    let thetas = cfg.f64_list("thetas")?.unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
    let horizon = thetas.iter().copied().fold(0.0, f64::max);
    let regime = cfg.str_or("regime", "edges")?;
    let marks: MarkSet = match regime.as_str() {
        "edges" => mark_edges(&tree, &mut rng),
        "branchpoints" => mark_branchpoints(&tree, &mut rng),
        "h" => mark_h(&tree, &prune_family(cfg)?, &mut rng)?,
        "hbar" => mark_hbar(&tree, &cfg.mechanism()?.ad_prune_law(cfg.req_f64("h")?)?, horizon, &mut rng)?,
        other => return Err(ConfigError::Invalid { key: "regime".into(), msg: format!("unknown regime '{other}'") }.into()),
    };
    let header = ctx.provenance();
    ctx.out.emit("marked.txt", &format!("{header}{}{}", tree.to_text(), marks.to_text()))?;
    let mut summary = String::from("theta,nodes,gamma,total_length,n_root\n");
    for (j, &theta) in thetas.iter().enumerate() {
        let t = cut(&tree, &marks, theta);
        ctx.out.emit(&format!("cut_{j:02}.txt"), &format!("{header}# theta={}\n{}", fmt17(theta), t.to_text()))?;
        writeln!(summary, "{},{},{},{},{}", fmt17(theta), t.node_count(), fmt17(t.gamma()), fmt17(t.total_length()), t.n_root()).unwrap();
    }
    ctx.out.emit("summary.csv", &summary)?;
    Ok(())
}

fn finish(ctx: &Ctx, reports: &[SuiteReport], stem: &str) -> Result<()> {
    let mut text = ctx.provenance();
    let mut csv = format!("{CSV_HEADER}\n");
    for r in reports {
        text.push_str(&r.records(ctx.timing));
        csv.push_str(&r.csv(ctx.timing));
    }
    if ctx.out.dir.is_some() {
        ctx.out.emit(&format!("{stem}.txt"), &text)?;
        ctx.out.emit(&format!("{stem}.csv"), &csv)?;
    } else {
        print!("{text}");
    }
    let failed: Vec<String> = reports.iter().flat_map(|r| r.failures()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(failed.join(", ")))
    }
}

fn timed(ctx: &Ctx, f: impl FnOnce() -> gwprune::Result<Vec<SuiteReport>>) -> Result<Vec<SuiteReport>> {
    let start = Instant::now();
    let mut reports = f()?;
    if ctx.timing {
        let secs = start.elapsed().as_secs_f64();
        for r in &mut reports {
            r.seconds.get_or_insert(secs);
        }
    }
    Ok(reports)
}

fn cmd_verify(ctx: &Ctx) -> Result<()> {
    let suite = ctx.cfg.str_or("suite", "all")?;
    if suite != "all" && !verify::SUITE_NAMES.contains(&suite.as_str()) {
        return Err(ConfigError::Invalid { key: "suite".into(), msg: format!("unknown suite '{suite}'") }.into());
    }
    let reports = if suite == "all" {
        let mut all = Vec::new();
        for name in verify::SUITE_NAMES {
            all.extend(timed(ctx, || verify::run_named(name, ctx.seed))?);
        }
        all
    } else {
        timed(ctx, || verify::run_named(&suite, ctx.seed))?
    };
    finish(ctx, &reports, "report")
}

fn cmd_experiment(ctx: &Ctx, name: &str) -> Result<()> {
    let cfg = &ctx.cfg;
    let reports = match name {
        "height" => {
            let mech = cfg.mechanism()?;
            let grid = cfg.u64_list("n")?.ok_or_else(|| ConfigError::Missing("n".into()))?;
            timed(ctx, || Ok(vec![experiments::experiment_height(&mech, &grid, cfg_f(cfg, "h", 1.0)?, cfg_f(cfg, "x", 1.0)?)?]))?
        }
        "ascension" => {
            let mech = cfg.mechanism()?;
            let grid = cfg.u64_list("n")?.ok_or_else(|| ConfigError::Missing("n".into()))?;
            let theta = cfg.req_f64("theta")?;
            let mc = match cfg.u64("replicates")? {
                Some(0) | None => None,
                Some(n) => Some((n as usize, ctx.seed)),
            };
            timed(ctx, || Ok(vec![experiments::experiment_ascension(&mech, &grid, theta, cfg_f(cfg, "x", 1.0)?, mc)?]))?
        }
        "marginal" => {
            let mech = cfg.mechanism()?;
            let regime_s = cfg.str_or("regime", "branch")?;
            let regime = MarginalRegime::parse(&regime_s).ok_or_else(|| ConfigError::Invalid { key: "regime".into(), msg: format!("unknown regime '{regime_s}'") })?;
            let mut mc = MarginalConfig::new(cfg.req_u64("n")?, regime, cfg.u64_or("replicates", 10_000)? as usize, ctx.seed);
            mc.h = cfg.f64_or("h", mc.h)?;
            mc.x = cfg.f64_or("x", mc.x)?;
            mc.theta = cfg.f64_or("theta", mc.theta)?;
            mc.height_cap = cfg.f64_or("height_cap", mc.height_cap)?;
            mc.level = cfg.f64_or("level", mc.level)?;
            timed(ctx, || Ok(vec![experiments::experiment_marginal_convergence(&mech, &mc)?]))?
        }
        "limits" => {
            let mech = cfg.mechanism()?;
            let n = cfg.u64_or("n", 10_000)?;
            let r = cfg.f64_list("r")?.unwrap_or_else(|| vec![1.0]);
            let orders: Vec<usize> = cfg.u64_list("orders")?.unwrap_or_else(|| vec![2, 3]).into_iter().map(|m| m as usize).collect();
            let dr = cfg.f64_list("derivative_r")?.unwrap_or_default();
            let tol = cfg.f64_or("tol", 1e-3)?;
            timed(ctx, || Ok(vec![verify::limit_checks(&mech, n, &r, &orders, &dr, tol)?]))?
        }
        other => return Err(ConfigError::Invalid { key: "experiment".into(), msg: format!("unknown experiment '{other}'") }.into()),
    };
    let mut csv = format!("{CSV_HEADER}\n");
    for r in &reports {
        csv.push_str(&r.csv(ctx.timing));
    }
    ctx.out.emit(&format!("{name}.csv"), &csv)?;
    let failed: Vec<String> = reports.iter().flat_map(|r| r.failures()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(failed.join(", ")))
    }
}

fn cfg_f(cfg: &RunConfig, key: &str, default: f64) -> gwprune::Result<f64> {
    cfg.f64_or(key, default).map_err(|e| gwprune::Error::InvalidArgument(e.to_string()))
}
