//! The users' caching game.
//!
//! Each user picks how many bytes of every item to pre-download at price
//! `r'` per byte, then pays for whatever residual the network still has to
//! serve. For user `n` and item `m` the expected payment is
//!
//! ```text
//! mu(x_n) = r' x_n + sum_a w_a (S_m - x_n - X_{a \ n})^+
//! ```
//!
//! over the co-location events `a` containing `n`, with `w_a` the
//! period-averaged probability that `n` requests the item while exactly the
//! users in `a` are together. `mu` is convex and piecewise linear, so best
//! responses are found by checking its kinks.

use rayon::prelude::*;

use crate::error::{check_unit_interval, Error, Result};
use crate::loadmodel::{ensure_exact_cap, payments, share_events, CachingAllocation, PaymentBreakdown, SlotColocation};
use crate::profiles::{MobilityLimit, Scenario};
use crate::staircase::{Crossing, Staircase};
use crate::userset::UserSet;
use crate::DERIVED_TOL;

const MAX_ROUNDS: usize = 100;
const SNAP_TOL: f64 = 1e-12;

/// Per-user, per-item caching thresholds (`[n][m]`).
#[derive(Debug, Clone, PartialEq)]
pub struct UserThresholds {
    /// Mean interest: above this price caching never pays.
    pub p_hat: Vec<Vec<f64>>,
    /// Interest discounted by the chance of meeting someone: at or below this
    /// price caching the whole item is dominant.
    pub p_tilde: Vec<Vec<f64>>,
}

pub fn user_thresholds(scenario: &Scenario) -> UserThresholds {
    let occ = scenario.occupancy();
    let t_count = scenario.slots() as f64;
    let mut p_hat = Vec::with_capacity(scenario.users());
    let mut p_tilde = Vec::with_capacity(scenario.users());
    for n in 0..scenario.users() {
        let isolation: Vec<f64> = (0..scenario.slots()).map(|t| occ.isolation_unchecked(n, t)).collect();
        p_hat.push((0..scenario.items()).map(|m| scenario.mean_demand(n, m)).collect());
        p_tilde.push(
            (0..scenario.items())
                .map(|m| {
                    isolation
                        .iter()
                        .enumerate()
                        .map(|(t, v)| scenario.demand(n, t, m) * (1.0 - v))
                        .sum::<f64>()
                        / t_count
                })
                .collect(),
        );
    }
    UserThresholds { p_hat, p_tilde }
}

/// Per-user co-location weights of every item, built once per scenario.
struct Game<'a> {
    scenario: &'a Scenario,
    /// `events[m][n]`: `(others, weight)`.
    events: Vec<Vec<Vec<(UserSet, f64)>>>,
}

impl<'a> Game<'a> {
    fn new(scenario: &'a Scenario) -> Result<Self> {
        ensure_exact_cap(scenario.users())?;
        let tables: Vec<SlotColocation> = (0..scenario.slots()).map(|t| SlotColocation::new(scenario, t)).collect();
        let events = (0..scenario.items())
            .map(|m| {
                (0..scenario.users())
                    .map(|n| share_events(scenario, &tables, n, m))
                    .collect()
            })
            .collect();
        Ok(Game { scenario, events })
    }

    fn payment(&self, m: usize, n: usize, column: &[f64], xn: f64, r_prime: f64) -> f64 {
        let size = self.scenario.size(m);
        let load: f64 = self.events[m][n]
            .iter()
            .map(|(others, w)| {
                let shared: f64 = others.iter().map(|k| column[k]).sum();
                w * (size - xn - shared).max(0.0)
            })
            .sum();
        r_prime * xn + load
    }

    /// Payment-minimizing `x_n` (smallest on ties) and its payment.
    fn best_response(&self, m: usize, n: usize, column: &[f64], r_prime: f64) -> (f64, f64) {
        let size = self.scenario.size(m);
        let mut candidates = vec![0.0, size];
        for (others, _) in &self.events[m][n] {
            let clamp = size - others.iter().map(|k| column[k]).sum::<f64>();
            if clamp > 0.0 && clamp < size {
                candidates.push(clamp);
            }
        }
        candidates.sort_by(f64::total_cmp);
        let mut best = (0.0, self.payment(m, n, column, 0.0, r_prime));
        for x in candidates.into_iter().skip(1) {
            let value = self.payment(m, n, column, x, r_prime);
            if value < best.1 - SNAP_TOL * best.1.abs().max(1.0) {
                best = (x, value);
            }
        }
        best
    }

    fn deviation_gain(&self, m: usize, column: &[f64], r_prime: f64) -> f64 {
        (0..self.scenario.users())
            .map(|n| {
                let current = self.payment(m, n, column, column[n], r_prime);
                let (_, best) = self.best_response(m, n, column, r_prime);
                (current - best).max(0.0)
            })
            .fold(0.0, f64::max)
    }

    /// Gauss-Seidel best responses from `column`; true if a fixed point was reached.
    fn iterate(&self, m: usize, column: &mut [f64], r_prime: f64) -> bool {
        for _ in 0..MAX_ROUNDS {
            let mut moved = 0.0f64;
            for n in 0..self.scenario.users() {
                let (x, _) = self.best_response(m, n, column, r_prime);
                moved = moved.max((x - column[n]).abs());
                column[n] = x;
            }
            if moved <= DERIVED_TOL {
                return true;
            }
        }
        false
    }
}

/// Payment-minimizing amount of item `m` for user `n` when the others hold
/// `others` (entry `n` is ignored). Ties resolve to the smallest amount.
pub fn best_response(scenario: &Scenario, n: usize, m: usize, others: &[f64], r_prime: f64) -> Result<f64> {
    check_unit_interval("price r'", r_prime)?;
    if n >= scenario.users() || m >= scenario.items() {
        return Err(Error::Argument(format!("user {} / item {} out of range", n + 1, m + 1)));
    }
    if others.len() != scenario.users() {
        return Err(Error::Argument(format!(
            "expected {} cached amounts, got {}",
            scenario.users(),
            others.len()
        )));
    }
    let size = scenario.size(m);
    if let Some(k) = (0..others.len()).find(|&k| k != n && !(0.0..=size).contains(&others[k])) {
        return Err(Error::Argument(format!("user {} amount {} outside [0, {size}]", k + 1, others[k])));
    }
    let game = Game::new(scenario)?;
    Ok(game.best_response(m, n, others, r_prime).0)
}

/// Largest payment reduction any single user can get by changing one item's
/// amount. Zero (up to rounding) certifies a Nash equilibrium.
pub fn verify_nash(scenario: &Scenario, x: &CachingAllocation, r_prime: f64) -> Result<f64> {
    check_unit_interval("price r'", r_prime)?;
    if x.rows().len() != scenario.users() || x.rows().iter().any(|r| r.len() != scenario.items()) {
        return Err(Error::Argument("allocation shape does not match scenario".into()));
    }
    let game = Game::new(scenario)?;
    Ok((0..scenario.items())
        .map(|m| game.deviation_gain(m, &x.item_column(m), r_prime))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserRegime {
    Full,
    Partial,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Fair,
    RiskDominant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameOutcome {
    pub allocation: CachingAllocation,
    pub payments: PaymentBreakdown,
    /// `[n][m]`, read off the allocation.
    pub regimes: Vec<Vec<UserRegime>>,
    pub selection: Selection,
    /// Largest unilateral deviation gain over all users and items.
    pub nash_gain: f64,
    pub nash_certified: bool,
    /// False if best-response iteration hit its round limit on some item.
    pub converged: bool,
    /// Items whose fair point was not an equilibrium and was refined by
    /// best-response iteration.
    pub refined_items: Vec<usize>,
}

fn snap(x: f64, size: f64) -> f64 {
    if x.abs() <= SNAP_TOL * size {
        0.0
    } else if (x - size).abs() <= SNAP_TOL * size {
        size
    } else {
        x
    }
}

fn finish(
    scenario: &Scenario,
    game: &Game,
    columns: Vec<Vec<f64>>,
    r_prime: f64,
    selection: Selection,
    converged: bool,
    refined_items: Vec<usize>,
) -> Result<GameOutcome> {
    let users = scenario.users();
    let rows: Vec<Vec<f64>> = (0..users)
        .map(|n| {
            columns
                .iter()
                .enumerate()
                .map(|(m, c)| snap(c[n], scenario.size(m)))
                .collect()
        })
        .collect();
    let allocation = CachingAllocation::new(scenario, rows)?;
    let regimes = (0..users)
        .map(|n| {
            (0..scenario.items())
                .map(|m| {
                    let x = allocation.get(n, m);
                    if x == 0.0 {
                        UserRegime::None
                    } else if x == scenario.size(m) {
                        UserRegime::Full
                    } else {
                        UserRegime::Partial
                    }
                })
                .collect()
        })
        .collect();
    let nash_gain = (0..scenario.items())
        .map(|m| game.deviation_gain(m, &allocation.item_column(m), r_prime))
        .fold(0.0, f64::max);
    Ok(GameOutcome {
        payments: payments(scenario, &allocation, r_prime)?,
        allocation,
        regimes,
        selection,
        nash_gain,
        nash_certified: nash_gain <= DERIVED_TOL,
        converged,
        refined_items,
    })
}

/// Fair subgame-perfect equilibrium.
///
/// Users with `r' <= p_tilde` cache the whole item, users with `r' > p_hat`
/// cache nothing, and the remaining (flagged) users split the item in
/// proportion to `p_hat`. If that point is not a Nash equilibrium the
/// outcome is refined by best-response iteration and re-certified.
pub fn spne_fair(scenario: &Scenario, r_prime: f64) -> Result<GameOutcome> {
    check_unit_interval("price r'", r_prime)?;
    let game = Game::new(scenario)?;
    let th = user_thresholds(scenario);
    let users = scenario.users();
    let solved: Vec<(Vec<f64>, bool, bool)> = (0..scenario.items())
        .into_par_iter()
        .map(|m| {
            let size = scenario.size(m);
            let flagged: Vec<usize> = (0..users)
                .filter(|&n| r_prime > th.p_tilde[n][m] && r_prime <= th.p_hat[n][m])
                .collect();
            let weight: f64 = flagged.iter().map(|&n| th.p_hat[n][m]).sum();
            let mut column: Vec<f64> = (0..users)
                .map(|n| {
                    if r_prime <= th.p_tilde[n][m] {
                        size
                    } else if r_prime > th.p_hat[n][m] {
                        0.0
                    } else {
                        size * th.p_hat[n][m] / weight
                    }
                })
                .collect();
            let refine = game.deviation_gain(m, &column, r_prime) > DERIVED_TOL;
            let converged = !refine || game.iterate(m, &mut column, r_prime);
            (column, converged, refine)
        })
        .collect();
    let converged = solved.iter().all(|s| s.1);
    let refined = solved.iter().enumerate().filter(|s| s.1 .2).map(|s| s.0).collect();
    let columns = solved.into_iter().map(|s| s.0).collect();
    finish(scenario, &game, columns, r_prime, Selection::Fair, converged, refined)
}

/// Expected-payment minimizer for a flagged user who treats every other
/// flagged user's amount as uniform on `[0, S]`.
fn cautious_amount(events: &[(UserSet, f64)], flagged: UserSet, fixed: &[f64], size: f64, r_prime: f64) -> f64 {
    // per event: weight, bytes held by non-flagged others, number of uncertain others
    let terms: Vec<(f64, f64, i32)> = events
        .iter()
        .map(|(others, w)| {
            let held: f64 = others.iter().filter(|&k| !flagged.contains(k)).map(|k| fixed[k]).sum();
            let uncertain = others.iter().filter(|&k| flagged.contains(k)).count() as i32;
            (*w, held, uncertain)
        })
        .collect();
    let factorial = |u: i32| (1..=u).map(f64::from).product::<f64>();
    // derivative of the expected payment; Irwin-Hall tail for y <= 1
    let slope = |x: f64| {
        r_prime
            - terms
                .iter()
                .map(|&(w, held, u)| {
                    let y = (size - x - held) / size;
                    if y <= 0.0 {
                        0.0
                    } else {
                        w * y.powi(u) / factorial(u)
                    }
                })
                .sum::<f64>()
    };
    if slope(0.0) >= 0.0 {
        return 0.0;
    }
    if slope(size * (1.0 - 1e-15)) < 0.0 {
        return size;
    }
    let (mut lo, mut hi) = (0.0, size);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * size {
            break;
        }
    }
    hi
}

/// Risk-dominant play.
///
/// Dominant choices are kept (full at `r' <= p_tilde`, nothing above
/// `p_hat`). Every other user minimizes expected payment while treating the
/// undecided users' amounts as independent and uniform on `[0, S]`, the
/// least informative belief about a coordination it cannot observe. The
/// result need not be an equilibrium; see `nash_certified`.
pub fn risk_dominant(scenario: &Scenario, r_prime: f64) -> Result<GameOutcome> {
    check_unit_interval("price r'", r_prime)?;
    let game = Game::new(scenario)?;
    let th = user_thresholds(scenario);
    let users = scenario.users();
    let columns: Vec<Vec<f64>> = (0..scenario.items())
        .into_par_iter()
        .map(|m| {
            let size = scenario.size(m);
            let flagged: UserSet = (0..users)
                .filter(|&n| r_prime > th.p_tilde[n][m] && r_prime <= th.p_hat[n][m])
                .collect();
            let fixed: Vec<f64> = (0..users)
                .map(|n| if r_prime <= th.p_tilde[n][m] { size } else { 0.0 })
                .collect();
            (0..users)
                .map(|n| {
                    if flagged.contains(n) {
                        cautious_amount(&game.events[m][n], flagged, &fixed, size, r_prime)
                    } else {
                        fixed[n]
                    }
                })
                .collect()
        })
        .collect();
    finish(scenario, &game, columns, r_prime, Selection::RiskDominant, true, Vec::new())
}

/// Fair equilibrium under one of the limiting mobility regimes.
pub fn mobility_limit_policy(scenario: &Scenario, limit: MobilityLimit, r_prime: f64) -> Result<GameOutcome> {
    spne_fair(&scenario.with_mobility_limit(limit), r_prime)
}

/// Intersection of a price staircase with the provider's line `r' = gamma Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryChoice {
    pub staircase: Staircase,
    pub memory: f64,
    pub price: f64,
    pub vertical: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryTradeoff {
    pub users: Vec<MemoryChoice>,
    pub aggregate: MemoryChoice,
}

fn choose(staircase: Staircase, gamma: f64) -> MemoryChoice {
    let Crossing { memory, level, vertical } = staircase.intersect_rising_line(gamma);
    MemoryChoice {
        staircase,
        memory,
        price: level,
        vertical,
    }
}

/// Each user's willingness to pay per byte as a function of memory: `p_hat`
/// up to its fair share of an item, `p_tilde` for the rest of the item.
pub fn memory_tradeoff(scenario: &Scenario, gamma: f64) -> Result<MemoryTradeoff> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Argument(format!("gamma = {gamma} must be positive")));
    }
    let th = user_thresholds(scenario);
    let users = scenario.users();
    let per_user: Vec<Vec<(f64, f64)>> = (0..users)
        .map(|n| {
            (0..scenario.items())
                .flat_map(|m| {
                    let size = scenario.size(m);
                    let total: f64 = (0..users).map(|k| th.p_hat[k][m]).sum();
                    let share = if total > 0.0 { size * th.p_hat[n][m] / total } else { 0.0 };
                    [(th.p_hat[n][m], share), (th.p_tilde[n][m], size - share)]
                })
                .filter(|&(level, _)| level > 0.0)
                .collect()
        })
        .collect();
    let aggregate = choose(Staircase::from_levels(per_user.iter().flatten().copied()), gamma);
    Ok(MemoryTradeoff {
        users: per_user
            .into_iter()
            .map(|levels| choose(Staircase::from_levels(levels), gamma))
            .collect(),
        aggregate,
    })
}
