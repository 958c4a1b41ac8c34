//! Monte Carlo replay of the sharing protocol.
//!
//! Each replication walks every user's Markov chain, draws a Bernoulli
//! request for each (user, slot, item), and lets a requesting user collect
//! `min(S_m, sum of x over users at the same location)` bytes from devices
//! (its own included). The network serves the rest.
//!
//! Replication `i` draws from ChaCha8 stream `i` of the configured seed, so
//! a report depends only on the seed and the lane count (the latter only
//! through floating-point summation order).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{check_unit_interval, Error, Result};
use crate::loadmodel::{mean_literal_all_subsets_load, mean_user_loads, CachingAllocation};
use crate::profiles::Scenario;
use crate::EXACT_USER_CAP;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationConfig {
    pub replications: u64,
    pub seed: u64,
    pub lanes: usize,
}

impl SimulationConfig {
    pub fn new(replications: u64, seed: u64) -> Self {
        SimulationConfig {
            replications,
            seed,
            lanes: rayon::current_num_threads().max(1),
        }
    }

    pub fn with_lanes(mut self, lanes: usize) -> Self {
        self.lanes = lanes;
        self
    }
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub replications: u64,
    pub seed: u64,
    pub lanes: usize,
    /// Network load in each slot.
    pub slot_load: Vec<Estimate>,
    /// Load averaged over the period.
    pub total_load: Estimate,
    /// Period-averaged load served to each user.
    pub user_load: Vec<Estimate>,
    /// User load plus `r'` times the user's cached bytes.
    pub user_payment: Vec<Estimate>,
}

/// Welford accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, value: f64) {
        self.count += 1.0;
        let delta = value - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (value - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0.0 {
            return;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count / count;
        self.m2 += other.m2 + delta * delta * self.count * other.count / count;
        self.count = count;
    }

    fn estimate(&self) -> Estimate {
        let stderr = if self.count < 2.0 {
            0.0
        } else {
            (self.m2 / (self.count - 1.0) / self.count).sqrt()
        };
        Estimate { mean: self.mean, stderr }
    }
}

#[derive(Clone)]
struct LaneStats {
    slots: Vec<Moments>,
    total: Moments,
    users: Vec<Moments>,
}

fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

struct Replay<'a> {
    scenario: &'a Scenario,
    x: &'a CachingAllocation,
    locations: Vec<usize>,
    bytes_at: Vec<Vec<f64>>,
    slot_load: Vec<f64>,
    user_load: Vec<f64>,
}

impl<'a> Replay<'a> {
    fn new(scenario: &'a Scenario, x: &'a CachingAllocation) -> Self {
        Replay {
            scenario,
            x,
            locations: vec![0; scenario.users()],
            bytes_at: vec![vec![0.0; scenario.items()]; scenario.locations()],
            slot_load: vec![0.0; scenario.slots()],
            user_load: vec![0.0; scenario.users()],
        }
    }

    fn run(&mut self, rng: &mut ChaCha8Rng) {
        let sc = self.scenario;
        let mobility = &sc.input().mobility;
        for (n, loc) in self.locations.iter_mut().enumerate() {
            *loc = sample_index(rng, &mobility[n].initial);
        }
        self.user_load.iter_mut().for_each(|v| *v = 0.0);
        for t in 0..sc.slots() {
            for (n, loc) in self.locations.iter_mut().enumerate() {
                *loc = sample_index(rng, &mobility[n].transitions[t][*loc]);
            }
            for row in &mut self.bytes_at {
                row.iter_mut().for_each(|v| *v = 0.0);
            }
            for (n, &loc) in self.locations.iter().enumerate() {
                for (m, v) in self.bytes_at[loc].iter_mut().enumerate() {
                    *v += self.x.get(n, m);
                }
            }
            let mut load = 0.0;
            for n in 0..sc.users() {
                let here = &self.bytes_at[self.locations[n]];
                for (m, &held) in here.iter().enumerate() {
                    if rng.gen_bool(sc.demand(n, t, m)) {
                        let residual = (sc.size(m) - held).max(0.0);
                        load += residual;
                        self.user_load[n] += residual;
                    }
                }
            }
            self.slot_load[t] = load;
        }
        let t_count = sc.slots() as f64;
        self.user_load.iter_mut().for_each(|v| *v /= t_count);
    }
}

/// Replays the protocol `config.replications` times.
pub fn simulate(
    scenario: &Scenario,
    x: &CachingAllocation,
    r_prime: f64,
    config: &SimulationConfig,
) -> Result<SimulationReport> {
    check_unit_interval("price r'", r_prime)?;
    if config.replications == 0 || config.lanes == 0 {
        return Err(Error::Argument("replications and lanes must be positive".into()));
    }
    if x.rows().len() != scenario.users() || x.rows().iter().any(|r| r.len() != scenario.items()) {
        return Err(Error::Argument("allocation shape does not match scenario".into()));
    }
    let lanes = config.lanes as u64;
    let chunk = config.replications.div_ceil(lanes);
    let empty = LaneStats {
        slots: vec![Moments::default(); scenario.slots()],
        total: Moments::default(),
        users: vec![Moments::default(); scenario.users()],
    };
    let per_lane: Vec<LaneStats> = (0..lanes)
        .into_par_iter()
        .map(|lane| {
            let mut stats = empty.clone();
            let mut replay = Replay::new(scenario, x);
            let start = lane * chunk;
            let end = (start + chunk).min(config.replications);
            for rep in start..end {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(rep);
                replay.run(&mut rng);
                for (acc, &v) in stats.slots.iter_mut().zip(&replay.slot_load) {
                    acc.push(v);
                }
                stats.total.push(replay.slot_load.iter().sum::<f64>() / scenario.slots() as f64);
                for (acc, &v) in stats.users.iter_mut().zip(&replay.user_load) {
                    acc.push(v);
                }
            }
            stats
        })
        .collect();
    let mut merged = empty;
    for lane in &per_lane {
        for (a, b) in merged.slots.iter_mut().zip(&lane.slots) {
            a.merge(b);
        }
        merged.total.merge(&lane.total);
        for (a, b) in merged.users.iter_mut().zip(&lane.users) {
            a.merge(b);
        }
    }
    let user_load: Vec<Estimate> = merged.users.iter().map(Moments::estimate).collect();
    let user_payment = user_load
        .iter()
        .enumerate()
        .map(|(n, e)| Estimate {
            mean: e.mean + r_prime * x.user_bytes(n),
            stderr: e.stderr,
        })
        .collect();
    Ok(SimulationReport {
        replications: config.replications,
        seed: config.seed,
        lanes: config.lanes,
        slot_load: merged.slots.iter().map(Moments::estimate).collect(),
        total_load: merged.total.estimate(),
        user_load,
        user_payment,
    })
}

/// Empirical-versus-analytic z-scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub load_analytic: f64,
    pub load_z: f64,
    pub payment_analytic: Vec<f64>,
    pub payment_z: Vec<f64>,
    pub max_abs_z: f64,
    /// Period load under the all-subsets complement reading, its deviation
    /// from the empirical mean, and the corresponding z-score.
    pub literal_load: f64,
    pub literal_bias: f64,
    pub literal_z: f64,
}

fn z_score(what: &str, estimate: Estimate, analytic: f64) -> Result<f64> {
    let diff = estimate.mean - analytic;
    if estimate.stderr > 0.0 {
        return Ok(diff / estimate.stderr);
    }
    if diff.abs() <= 1e-9 * analytic.abs().max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::ExactMismatch(format!(
            "{what}: simulation has zero variance but differs from {analytic} by {diff}"
        )))
    }
}

/// Compares a report with the exact load model. The literal-form fields are
/// informational and do not enter `max_abs_z`.
pub fn compare_analytic(
    report: &SimulationReport,
    scenario: &Scenario,
    x: &CachingAllocation,
    r_prime: f64,
) -> Result<Comparison> {
    check_unit_interval("price r'", r_prime)?;
    if scenario.users() > EXACT_USER_CAP {
        return Err(Error::Capacity {
            users: scenario.users(),
            cap: EXACT_USER_CAP,
            hint: "analytic comparison needs the exact load model",
        });
    }
    let loads = mean_user_loads(scenario, x)?;
    let load_analytic: f64 = loads.iter().sum();
    let load_z = z_score("total load", report.total_load, load_analytic)?;
    let payment_analytic: Vec<f64> = loads
        .iter()
        .enumerate()
        .map(|(n, l)| l + r_prime * x.user_bytes(n))
        .collect();
    let payment_z = report
        .user_payment
        .iter()
        .zip(&payment_analytic)
        .enumerate()
        .map(|(n, (e, &a))| z_score(&format!("user {} payment", n + 1), *e, a))
        .collect::<Result<Vec<f64>>>()?;
    let max_abs_z = payment_z.iter().map(|z| z.abs()).fold(load_z.abs(), f64::max);
    let literal_load = mean_literal_all_subsets_load(scenario, x)?;
    let literal_bias = literal_load - report.total_load.mean;
    let literal_z = if report.total_load.stderr > 0.0 {
        literal_bias / report.total_load.stderr
    } else if literal_bias == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(literal_bias)
    };
    Ok(Comparison {
        load_analytic,
        load_z,
        payment_analytic,
        payment_z,
        max_abs_z,
        literal_load,
        literal_bias,
        literal_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{DemandProfile, MobilityProfile};

    fn s1() -> Scenario {
        Scenario::from_profiles(
            vec![1.0],
            vec![
                DemandProfile::constant(1, &[0.8]),
                DemandProfile::constant(1, &[0.6]),
            ],
            vec![MobilityProfile::uniform(2, 1); 2],
        )
        .unwrap()
    }

    #[test]
    fn no_caching_matches_reactive_load() {
        let sc = s1();
        let x = CachingAllocation::zeros(&sc);
        let report = simulate(&sc, &x, 0.5, &SimulationConfig::new(20_000, 7)).unwrap();
        let cmp = compare_analytic(&report, &sc, &x, 0.5).unwrap();
        assert!((cmp.load_analytic - 1.4).abs() < 1e-12);
        assert!(cmp.max_abs_z <= 5.0, "{cmp:?}");
    }

    #[test]
    fn reproducible_for_fixed_seed_and_lanes() {
        let sc = s1();
        let x = CachingAllocation::new(&sc, vec![vec![1.0], vec![0.0]]).unwrap();
        let cfg = SimulationConfig::new(5_000, 42).with_lanes(3);
        let a = simulate(&sc, &x, 0.5, &cfg).unwrap();
        let b = simulate(&sc, &x, 0.5, &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate(&sc, &x, 0.5, &cfg.with_lanes(1)).unwrap();
        assert!((a.total_load.mean - c.total_load.mean).abs() < 1e-12);
    }

    #[test]
    fn deterministic_world_has_zero_variance() {
        let sc = Scenario::from_profiles(
            vec![2.0],
            vec![DemandProfile::constant(2, &[1.0]); 2],
            vec![MobilityProfile::stationary(2, 2, 0), MobilityProfile::stationary(2, 2, 1)],
        )
        .unwrap();
        let x = CachingAllocation::new(&sc, vec![vec![0.5], vec![2.0]]).unwrap();
        let report = simulate(&sc, &x, 0.2, &SimulationConfig::new(100, 1)).unwrap();
        assert_eq!(report.total_load, Estimate { mean: 1.5, stderr: 0.0 });
        let cmp = compare_analytic(&report, &sc, &x, 0.2).unwrap();
        assert_eq!(cmp.max_abs_z, 0.0);
        let wrong = CachingAllocation::new(&sc, vec![vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(
            compare_analytic(&report, &sc, &wrong, 0.2),
            Err(Error::ExactMismatch(_))
        ));
    }

    #[test]
    fn user_loads_partition_total() {
        let sc = s1();
        let x = CachingAllocation::new(&sc, vec![vec![0.3], vec![0.4]]).unwrap();
        let report = simulate(&sc, &x, 0.5, &SimulationConfig::new(2_000, 3)).unwrap();
        let sum: f64 = report.user_load.iter().map(|e| e.mean).sum();
        assert!((sum - report.total_load.mean).abs() < 1e-9);
    }

    #[test]
    fn rejects_zero_replications() {
        let sc = s1();
        let x = CachingAllocation::zeros(&sc);
        assert!(simulate(&sc, &x, 0.5, &SimulationConfig::new(0, 1)).is_err());
    }
}
