mod table;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use d2dcache::centralized::{
    exact_ladders, gain_bounds, greedy_ranking, optimal_policy, greedy_policy, reward_tradeoff,
    uncovered_base, ThresholdLadder,
};
use d2dcache::decentralized::{memory_tradeoff, risk_dominant, spne_fair, GameOutcome, UserRegime};
use d2dcache::loadmodel::{item_reactive_load, proactive_load};
use d2dcache::montecarlo::{compare_analytic, simulate, SimulationConfig};
use d2dcache::scenario_file::ScenarioFile;
use d2dcache::staircase::Staircase;
use d2dcache::{CachingAllocation, Scenario};

use table::{num, Table};

const CENTRALIZED_SCHEMA: &str = "\
CSV schema d2dcache-centralized/1, one row per (r, item):
  item          1-based item index
  r             reward per cached byte
  cache_count   users caching the whole item
  users         1-based cachers, comma separated (quoted)
  load          expected bytes per slot still served by the network
  caching_cost  r * cache_count * size
  total         load + caching_cost
  gain          reactive load of the item - total
  breakpoints   the item's reward ladder, ';' separated, ascending";

const BOUNDS_SCHEMA: &str = "\
CSV schema d2dcache-bounds/1, one row per r:
  r, lower (greedy gain), exact (optimal gain; empty above the exact-user cap),
  upper (summed single-cacher scores)";

const DECENTRALIZED_SCHEMA: &str = "\
CSV schema d2dcache-decentralized/1, one row per (r_prime, item, user):
  r_prime     price per pre-downloaded byte
  item, user  1-based indices
  x           bytes of the item the user caches
  payment     the user's expected payment over all items
  regime      full | partial | none
  nash_gain   largest unilateral payment cut over the whole outcome
  selection   fair | risk";

const TRADEOFF_SCHEMA: &str = "\
CSV schema d2dcache-tradeoff/1:
  series      staircase (corner points) | optimum | optimum_per_user
  user        'all' for the aggregate, otherwise a 1-based user index
  memory      cached bytes
  multiplier  reward r (sp side) or price r' (users side)";

const SIMULATE_SCHEMA: &str = "\
CSV schema d2dcache-simulate/1, one row per quantity:
  quantity    total_load | slot_<t>_load | user_<n>_payment | all_subsets_total_load | max_abs_z
  empirical, stderr, analytic, z
The all-subsets row evaluates the complement-over-all-events form of the load
expression for comparison only; it does not enter max_abs_z.
Seed: --seed, or the D2DCACHE_SEED environment variable when the flag is absent.";

#[derive(Parser)]
#[command(name = "d2dcache", version, about = "Caching policies for mobility-aware device-to-device networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Input {
    /// Scenario file (TOML)
    path: PathBuf,
    /// Write CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Reward {
    /// Reward per cached byte (defaults to economics.r)
    #[arg(long, conflicts_with = "sweep")]
    r: Option<f64>,
    /// Grid as start:stop:step or a comma list; bare flag means 0:1:0.01
    #[arg(long, num_args = 0..=1, default_missing_value = "0:1:0.01", value_name = "GRID")]
    sweep: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Optimal,
    Greedy,
}

#[derive(Clone, Copy, ValueEnum)]
enum Select {
    Fair,
    Risk,
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    Sp,
    Users,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum AllocKind {
    Optimal,
    Greedy,
    Fair,
    Zero,
    File,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and print its validation report
    Validate {
        path: PathBuf,
    },
    /// Provider's caching policy at one reward or over a sweep
    #[command(after_long_help = CENTRALIZED_SCHEMA)]
    Centralized {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value = "optimal")]
        policy: Policy,
        #[command(flatten)]
        reward: Reward,
    },
    /// Same as `centralized --policy greedy`
    #[command(after_long_help = CENTRALIZED_SCHEMA)]
    Greedy {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        reward: Reward,
    },
    /// Greedy, exact and upper gain bounds
    #[command(after_long_help = BOUNDS_SCHEMA)]
    Bounds {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        reward: Reward,
    },
    /// Users' caching game
    #[command(after_long_help = DECENTRALIZED_SCHEMA)]
    Decentralized {
        #[command(flatten)]
        input: Input,
        /// Price per pre-downloaded byte (defaults to economics.r_prime, then 1 - economics.r)
        #[arg(long = "r-prime", conflicts_with = "sweep")]
        r_prime: Option<f64>,
        #[arg(long, num_args = 0..=1, default_missing_value = "0:1:0.01", value_name = "GRID")]
        sweep: Option<String>,
        #[arg(long, value_enum, default_value = "fair")]
        select: Select,
    },
    /// Reward/memory trade-off staircase and its optimum
    #[command(after_long_help = TRADEOFF_SCHEMA)]
    Tradeoff {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum)]
        side: Side,
        /// Users' memory-per-reward slope (defaults to economics.beta)
        #[arg(long)]
        beta: Option<f64>,
        /// Provider's price slope (defaults to economics.gamma)
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Monte Carlo replay compared with the analytic load model
    #[command(after_long_help = SIMULATE_SCHEMA)]
    Simulate {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value = "optimal")]
        alloc: AllocKind,
        /// Allocation CSV for --alloc file: one row per user, one column per item
        #[arg(long, required_if_eq("alloc", "file"))]
        alloc_file: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        reps: u64,
        #[arg(long, env = "D2DCACHE_SEED", default_value_t = 0)]
        seed: u64,
        /// Parallel lanes; output is reproducible for a fixed lane count
        #[arg(long, default_value_t = 8)]
        lanes: usize,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long = "r-prime")]
        r_prime: Option<f64>,
        /// Fail (exit 3) when any |z| exceeds this
        #[arg(long, default_value_t = 5.0)]
        threshold: f64,
    },
}

fn load(path: &Path) -> Result<ScenarioFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ScenarioFile::from_toml(&text).with_context(|| format!("{}", path.display()))
}

fn load_scenario(path: &Path) -> Result<(ScenarioFile, Scenario)> {
    let file = load(path)?;
    let sc = file.scenario().with_context(|| format!("{}", path.display()))?;
    Ok((file, sc))
}

fn emit(table: &Table, out: Option<&Path>) -> Result<()> {
    let mut buf = Vec::new();
    table.write(&mut buf)?;
    match out {
        Some(p) => fs::write(p, buf).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().lock().write_all(&buf)?,
    }
    Ok(())
}

fn round12(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

/// Parses `start:stop:step` (both endpoints included) or `a,b,c`.
fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = if let Some((range, step)) = spec.rsplit_once(':') {
        let (start, stop) = range
            .split_once(':')
            .ok_or_else(|| anyhow!("grid '{spec}' is not start:stop:step"))?;
        let (start, stop, step): (f64, f64, f64) = (start.trim().parse()?, stop.trim().parse()?, step.trim().parse()?);
        if !(step > 0.0) || stop < start {
            bail!("grid '{spec}' needs step > 0 and stop >= start");
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        let mut v: Vec<f64> = (0..=count).map(|i| round12(start + i as f64 * step)).collect();
        if (v[count] - stop).abs() > 1e-9 {
            v.push(stop);
        }
        v
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| anyhow!("grid value '{s}': {e}")))
            .collect::<Result<_>>()?
    };
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        bail!("grid value {v} outside [0, 1]");
    }
    Ok(values)
}

fn grid_or_single(single: Option<f64>, sweep: Option<&str>, fallback: Option<f64>, name: &str) -> Result<Vec<f64>> {
    match (single, sweep) {
        (_, Some(spec)) => parse_grid(spec),
        (Some(v), None) => Ok(vec![v]),
        (None, None) => fallback
            .map(|v| vec![v])
            .ok_or_else(|| anyhow!("no {name} given: pass --{name} or set it under [economics]")),
    }
}

fn joined(values: &[f64], sep: &str) -> String {
    values.iter().map(|&v| num(v)).collect::<Vec<_>>().join(sep)
}

fn cmd_validate(path: &Path) -> Result<ExitCode> {
    let file = load(path)?;
    let report = file.input().validate();
    if report.is_valid() {
        let c = &file.counts;
        println!(
            "valid: {} users, {} items, {} locations, {} slots",
            c.users, c.items, c.locations, c.slots
        );
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{report}");
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_centralized(input: &Input, policy: Policy, reward: &Reward) -> Result<()> {
    let (file, sc) = load_scenario(&input.path)?;
    let rewards = grid_or_single(reward.r, reward.sweep.as_deref(), file.economics.r, "r")?;
    let ladders: Vec<ThresholdLadder> = match policy {
        Policy::Optimal => {
            // surfaces argument and capacity errors before any output
            optimal_policy(&sc, rewards[0])?;
            exact_ladders(&sc)?.0
        }
        Policy::Greedy => {
            greedy_policy(&sc, rewards[0])?;
            (0..sc.items()).map(|m| greedy_ranking(&sc, m).ladder()).collect()
        }
    };
    let mut t = Table::new(
        "d2dcache-centralized/1",
        &["item", "r", "cache_count", "users", "load", "caching_cost", "total", "gain", "breakpoints"],
    );
    for &r in &rewards {
        if !(0.0..=1.0).contains(&r) {
            bail!("reward r = {r} is outside [0, 1]");
        }
        for (m, ladder) in ladders.iter().enumerate() {
            let regime = ladder.regime_at(r);
            let load = uncovered_base(&sc, m, regime.users)?;
            let caching = r * regime.count as f64 * sc.size(m);
            let total = load + caching;
            t.push(vec![
                (m + 1).to_string(),
                num(r),
                regime.count.to_string(),
                regime.users.to_one_based(),
                num(load),
                num(caching),
                num(total),
                num(item_reactive_load(&sc, m) - total),
                joined(&ladder.breakpoint_values(), ";"),
            ]);
        }
    }
    emit(&t, input.out.as_deref())
}

fn cmd_bounds(input: &Input, reward: &Reward) -> Result<()> {
    let (file, sc) = load_scenario(&input.path)?;
    let rewards = grid_or_single(reward.r, reward.sweep.as_deref(), file.economics.r, "r")?;
    let mut t = Table::new("d2dcache-bounds/1", &["r", "lower", "exact", "upper"]);
    for r in rewards {
        let b = gain_bounds(&sc, r)?;
        t.push(vec![num(r), num(b.lower), b.exact.map(num).unwrap_or_default(), num(b.upper)]);
    }
    emit(&t, input.out.as_deref())
}

fn regime_name(r: UserRegime) -> &'static str {
    match r {
        UserRegime::Full => "full",
        UserRegime::Partial => "partial",
        UserRegime::None => "none",
    }
}

fn cmd_decentralized(input: &Input, r_prime: Option<f64>, sweep: Option<&str>, select: Select) -> Result<()> {
    let (file, sc) = load_scenario(&input.path)?;
    let prices = grid_or_single(r_prime, sweep, file.economics.price(), "r-prime")?;
    let mut t = Table::new(
        "d2dcache-decentralized/1",
        &["r_prime", "item", "user", "x", "payment", "regime", "nash_gain", "selection"],
    );
    for p in prices {
        let out: GameOutcome = match select {
            Select::Fair => spne_fair(&sc, p)?,
            Select::Risk => risk_dominant(&sc, p)?,
        };
        let label = match select {
            Select::Fair => "fair",
            Select::Risk => "risk",
        };
        for m in 0..sc.items() {
            for n in 0..sc.users() {
                t.push(vec![
                    num(p),
                    (m + 1).to_string(),
                    (n + 1).to_string(),
                    num(out.allocation.get(n, m)),
                    num(out.payments.proactive[n]),
                    regime_name(out.regimes[n][m]).into(),
                    num(out.nash_gain),
                    label.into(),
                ]);
            }
        }
    }
    emit(&t, input.out.as_deref())
}

fn push_staircase(t: &mut Table, user: &str, s: &Staircase) {
    for (z, level) in s.corners() {
        t.push(vec!["staircase".into(), user.into(), num(z), num(level)]);
    }
}

fn cmd_tradeoff(input: &Input, side: Side, beta: Option<f64>, gamma: Option<f64>) -> Result<()> {
    let (file, sc) = load_scenario(&input.path)?;
    let mut t = Table::new("d2dcache-tradeoff/1", &["series", "user", "memory", "multiplier"]);
    match side {
        Side::Sp => {
            let beta = beta
                .or(file.economics.beta)
                .ok_or_else(|| anyhow!("no beta given: pass --beta or set economics.beta"))?;
            let res = reward_tradeoff(&sc, beta)?;
            push_staircase(&mut t, "all", &res.staircase);
            t.push(vec!["optimum".into(), "all".into(), num(res.aggregate_memory), num(res.reward)]);
            t.push(vec![
                "optimum_per_user".into(),
                "all".into(),
                num(res.per_user_memory),
                num(res.reward),
            ]);
        }
        Side::Users => {
            let gamma = gamma
                .or(file.economics.gamma)
                .ok_or_else(|| anyhow!("no gamma given: pass --gamma or set economics.gamma"))?;
            let res = memory_tradeoff(&sc, gamma)?;
            for (n, choice) in res.users.iter().enumerate() {
                let user = (n + 1).to_string();
                push_staircase(&mut t, &user, &choice.staircase);
                t.push(vec!["optimum".into(), user, num(choice.memory), num(choice.price)]);
            }
            push_staircase(&mut t, "all", &res.aggregate.staircase);
            t.push(vec![
                "optimum".into(),
                "all".into(),
                num(res.aggregate.memory),
                num(res.aggregate.price),
            ]);
        }
    }
    emit(&t, input.out.as_deref())
}

fn read_allocation(path: &Path, sc: &Scenario) -> Result<CachingAllocation> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(
            record
                .iter()
                .map(|v| v.parse::<f64>().map_err(|e| anyhow!("allocation value '{v}': {e}")))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    Ok(CachingAllocation::new(sc, rows)?)
}

struct SimulateArgs<'a> {
    alloc: AllocKind,
    alloc_file: Option<&'a Path>,
    reps: u64,
    seed: u64,
    lanes: usize,
    r: Option<f64>,
    r_prime: Option<f64>,
    threshold: f64,
}

fn cmd_simulate(input: &Input, a: SimulateArgs) -> Result<ExitCode> {
    let (file, sc) = load_scenario(&input.path)?;
    let r = a.r.or(file.economics.r);
    let price = a
        .r_prime
        .or(file.economics.r_prime)
        .or(r.map(|r| 1.0 - r))
        .ok_or_else(|| anyhow!("no price given: pass --r-prime or --r, or set them under [economics]"))?;
    let need_r = || r.ok_or_else(|| anyhow!("--alloc optimal/greedy needs --r or economics.r"));
    let x = match a.alloc {
        AllocKind::Optimal => optimal_policy(&sc, need_r()?)?.allocation,
        AllocKind::Greedy => greedy_policy(&sc, need_r()?)?.allocation,
        AllocKind::Fair => spne_fair(&sc, price)?.allocation,
        AllocKind::Zero => CachingAllocation::zeros(&sc),
        AllocKind::File => read_allocation(a.alloc_file.expect("required by clap"), &sc)?,
    };
    let config = SimulationConfig::new(a.reps, a.seed).with_lanes(a.lanes);
    let report = simulate(&sc, &x, price, &config)?;
    let cmp = compare_analytic(&report, &sc, &x, price)?;
    let mut t = Table::new("d2dcache-simulate/1", &["quantity", "empirical", "stderr", "analytic", "z"]);
    let z = |mean: f64, se: f64, analytic: f64| if se > 0.0 { (mean - analytic) / se } else { 0.0 };
    t.push(vec![
        "total_load".into(),
        num(report.total_load.mean),
        num(report.total_load.stderr),
        num(cmp.load_analytic),
        num(cmp.load_z),
    ]);
    for (slot, e) in report.slot_load.iter().enumerate() {
        let analytic = proactive_load(&sc, &x, slot)?;
        t.push(vec![
            format!("slot_{}_load", slot + 1),
            num(e.mean),
            num(e.stderr),
            num(analytic),
            num(z(e.mean, e.stderr, analytic)),
        ]);
    }
    for (n, e) in report.user_payment.iter().enumerate() {
        t.push(vec![
            format!("user_{}_payment", n + 1),
            num(e.mean),
            num(e.stderr),
            num(cmp.payment_analytic[n]),
            num(cmp.payment_z[n]),
        ]);
    }
    t.push(vec![
        "all_subsets_total_load".into(),
        num(report.total_load.mean),
        num(report.total_load.stderr),
        num(cmp.literal_load),
        num(cmp.literal_z),
    ]);
    t.push(vec!["max_abs_z".into(), String::new(), String::new(), String::new(), num(cmp.max_abs_z)]);
    emit(&t, input.out.as_deref())?;
    if cmp.max_abs_z > a.threshold {
        eprintln!("max |z| = {} exceeds {}", num(cmp.max_abs_z), num(a.threshold));
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { path } => return cmd_validate(&path),
        Command::Centralized { input, policy, reward } => cmd_centralized(&input, policy, &reward)?,
        Command::Greedy { input, reward } => cmd_centralized(&input, Policy::Greedy, &reward)?,
        Command::Bounds { input, reward } => cmd_bounds(&input, &reward)?,
        Command::Decentralized {
            input,
            r_prime,
            sweep,
            select,
        } => cmd_decentralized(&input, r_prime, sweep.as_deref(), select)?,
        Command::Tradeoff { input, side, beta, gamma } => cmd_tradeoff(&input, side, beta, gamma)?,
        Command::Simulate {
            input,
            alloc,
            alloc_file,
            reps,
            seed,
            lanes,
            r,
            r_prime,
            threshold,
        } => {
            return cmd_simulate(
                &input,
                SimulateArgs {
                    alloc,
                    alloc_file: alloc_file.as_deref(),
                    reps,
                    seed,
                    lanes,
                    r,
                    r_prime,
                    threshold,
                },
            )
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
