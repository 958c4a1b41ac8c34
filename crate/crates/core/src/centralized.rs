//! The provider's caching policies.
//!
//! With a linear cost the per-item problem is a set of linear programs whose
//! optima sit at corner allocations: each user caches either nothing or the
//! whole item. If exactly the users in `a` cache item `m`, the network still
//! serves the uncovered base
//!
//! ```text
//! B_m(a) = S_m (1/T) sum_t sum_{k notin a} p[k][t][m] (1 - cover(k, a, t))
//! ```
//!
//! and the provider pays `B_m(a) + r |a| S_m`. For each cardinality only the
//! best set matters, so the optimum over `r` is the lower envelope of `N + 1`
//! lines; its crossing points form the item's [`ThresholdLadder`].

use rayon::prelude::*;

use crate::error::{check_unit_interval, Error, Result};
use crate::loadmodel::{ensure_exact_cap, item_reactive_load, reactive_cost, CachingAllocation, CostBreakdown};
use crate::profiles::Scenario;
use crate::staircase::{Crossing, Staircase};
use crate::userset::{combinations, UserSet};

/// Relative tolerance used to call two costs equal when breaking ties.
const TIE_TOL: f64 = 1e-12;

fn same(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= TIE_TOL * scale.max(1.0)
}

/// Expected bytes per slot the network serves for item `m` when exactly the
/// users in `set` hold the full item.
pub fn uncovered_base(scenario: &Scenario, m: usize, set: UserSet) -> Result<f64> {
    if m >= scenario.items() {
        return Err(Error::Argument(format!("item {} out of range", m + 1)));
    }
    if !set.is_subset_of(UserSet::all(scenario.users())) {
        return Err(Error::Argument(format!("user set {set:?} out of range")));
    }
    Ok(base(scenario, m, set))
}

pub(crate) fn base(scenario: &Scenario, m: usize, set: UserSet) -> f64 {
    let occ = scenario.occupancy();
    let users = scenario.users();
    let locations = scenario.locations();
    let mut miss = vec![1.0; locations];
    let mut total = 0.0;
    for t in 0..scenario.slots() {
        for (l, slot_miss) in miss.iter_mut().enumerate() {
            *slot_miss = set.iter().map(|j| 1.0 - occ.get(j, t, l)).product();
        }
        for k in (0..users).filter(|&k| !set.contains(k)) {
            let p = scenario.demand(k, t, m);
            if p == 0.0 {
                continue;
            }
            let covered: f64 = occ
                .row(k, t)
                .iter()
                .zip(&miss)
                .map(|(th, ms)| th * (1.0 - ms))
                .sum();
            total += p * (1.0 - covered);
        }
    }
    scenario.size(m) * total / scenario.slots() as f64
}

/// How many users cache an item, and which.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Regime {
    pub count: usize,
    pub users: UserSet,
}

impl Regime {
    pub const NONE: Regime = Regime {
        count: 0,
        users: UserSet::empty(),
    };
}

/// The regime in force from `r` upward (until the next breakpoint).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakpoint {
    pub r: f64,
    pub regime: Regime,
}

/// Reward breakpoints of one item, ascending, with cache counts strictly
/// decreasing along the list.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdLadder {
    pub initial: Regime,
    pub breakpoints: Vec<Breakpoint>,
    /// Cardinalities in `0..=N` that are never optimal for any `r >= 0`.
    pub skipped: Vec<usize>,
}

impl ThresholdLadder {
    /// Regime at reward `r`; a reward exactly on a breakpoint takes the
    /// smaller-caching side.
    pub fn regime_at(&self, r: f64) -> Regime {
        self.breakpoints
            .iter()
            .rev()
            .find(|b| b.r <= r)
            .map_or(self.initial, |b| b.regime)
    }

    pub fn breakpoint_values(&self) -> Vec<f64> {
        self.breakpoints.iter().map(|b| b.r).collect()
    }

    /// `(r, bytes released)` for every breakpoint: crossing `r` downward
    /// increases cached bytes by the released amount.
    fn drops(&self, size: f64) -> Vec<(f64, f64)> {
        let mut before = self.initial.count;
        let mut out = Vec::with_capacity(self.breakpoints.len());
        for b in &self.breakpoints {
            out.push((b.r, (before - b.regime.count) as f64 * size));
            before = b.regime.count;
        }
        out
    }
}

/// One candidate line `cost(r) = intercept + r * count * size`.
#[derive(Debug, Clone, Copy)]
struct Line {
    regime: Regime,
    intercept: f64,
}

fn lower_envelope(lines: &[Line], size: f64, users: usize) -> ThresholdLadder {
    let scale = lines.iter().map(|l| l.intercept.abs()).fold(0.0, f64::max);
    let mut current = lines[0];
    for l in &lines[1..] {
        let better = l.intercept < current.intercept && !same(l.intercept, current.intercept, scale);
        let tie_smaller = same(l.intercept, current.intercept, scale) && l.regime.count < current.regime.count;
        if better || tie_smaller {
            current = *l;
        }
    }
    let mut ladder = ThresholdLadder {
        initial: current.regime,
        breakpoints: Vec::new(),
        skipped: Vec::new(),
    };
    while current.regime.count > 0 {
        let mut next: Option<(f64, Line)> = None;
        for l in lines.iter().filter(|l| l.regime.count < current.regime.count) {
            let slope_gap = (current.regime.count - l.regime.count) as f64 * size;
            let cross = ((l.intercept - current.intercept) / slope_gap).max(0.0);
            let replace = match next {
                None => true,
                Some((best, bl)) => {
                    (cross < best && !same(cross, best, 1.0))
                        || (same(cross, best, 1.0) && l.regime.count < bl.regime.count)
                }
            };
            if replace {
                next = Some((cross, *l));
            }
        }
        let Some((cross, line)) = next else { break };
        let last_r = ladder.breakpoints.last().map_or(0.0, |b| b.r);
        if same(cross, last_r, 1.0) && ladder.breakpoints.last().is_some() {
            ladder.breakpoints.last_mut().unwrap().regime = line.regime;
        } else if ladder.breakpoints.is_empty() && same(cross, 0.0, 1.0) {
            ladder.initial = line.regime;
        } else {
            ladder.breakpoints.push(Breakpoint {
                r: cross,
                regime: line.regime,
            });
        }
        current = line;
    }
    let seen: Vec<usize> = std::iter::once(ladder.initial.count)
        .chain(ladder.breakpoints.iter().map(|b| b.regime.count))
        .collect();
    ladder.skipped = (0..=users).filter(|k| !seen.contains(k)).collect();
    ladder
}

/// Result of a centralized policy at one reward value.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutcome {
    pub allocation: CachingAllocation,
    pub ladders: Vec<ThresholdLadder>,
    /// Chosen regime per item.
    pub regimes: Vec<Regime>,
    pub cost: CostBreakdown,
    /// Uncovered-base evaluations per item (candidate sets only).
    pub evaluations: Vec<usize>,
}

fn corner_outcome(
    scenario: &Scenario,
    r: f64,
    ladders: Vec<ThresholdLadder>,
    evaluations: Vec<usize>,
) -> PolicyOutcome {
    let regimes: Vec<Regime> = ladders.iter().map(|l| l.regime_at(r)).collect();
    let sets: Vec<UserSet> = regimes.iter().map(|g| g.users).collect();
    let allocation = CachingAllocation::from_corner_sets(scenario, &sets);
    let cost = corner_cost(scenario, &sets, r);
    PolicyOutcome {
        allocation,
        ladders,
        regimes,
        cost,
        evaluations,
    }
}

/// Cost of a corner allocation from the uncovered bases.
pub fn corner_cost(scenario: &Scenario, sets: &[UserSet], r: f64) -> CostBreakdown {
    let load: f64 = sets.iter().enumerate().map(|(m, &a)| base(scenario, m, a)).sum();
    let cached: f64 = sets
        .iter()
        .enumerate()
        .map(|(m, a)| a.len() as f64 * scenario.size(m))
        .sum();
    CostBreakdown::new(reactive_cost(scenario), load, r * cached)
}

/// Best set of each cardinality for item `m` (index = cardinality), plus
/// the number of proper non-empty subsets evaluated.
fn best_per_cardinality(scenario: &Scenario, m: usize) -> (Vec<Line>, usize) {
    let users = scenario.users();
    let full = UserSet::all(users);
    let mut best: Vec<Option<Line>> = vec![None; users + 1];
    best[0] = Some(Line {
        regime: Regime::NONE,
        intercept: item_reactive_load(scenario, m),
    });
    best[users] = Some(Line {
        regime: Regime { count: users, users: full },
        intercept: 0.0,
    });
    let scale = item_reactive_load(scenario, m);
    let mut evaluated = 0;
    for bits in 1..full.bits() {
        let set = UserSet::from_bits(bits);
        let value = base(scenario, m, set);
        evaluated += 1;
        let k = set.len();
        let replace = match &best[k] {
            None => true,
            Some(cur) => {
                if same(value, cur.intercept, scale) {
                    set.lex_cmp(cur.regime.users).is_lt()
                } else {
                    value < cur.intercept
                }
            }
        };
        if replace {
            best[k] = Some(Line {
                regime: Regime { count: k, users: set },
                intercept: value,
            });
        }
    }
    (best.into_iter().flatten().collect(), evaluated)
}

/// Exact ladders of every item (independent of `r`) and per-item subset counts.
pub fn exact_ladders(scenario: &Scenario) -> Result<(Vec<ThresholdLadder>, Vec<usize>)> {
    ensure_exact_cap(scenario.users()).map_err(|_| Error::Capacity {
        users: scenario.users(),
        cap: crate::EXACT_USER_CAP,
        hint: "use greedy_policy for larger populations",
    })?;
    let per_item: Vec<(ThresholdLadder, usize)> = (0..scenario.items())
        .into_par_iter()
        .map(|m| {
            let (lines, evaluated) = best_per_cardinality(scenario, m);
            (lower_envelope(&lines, scenario.size(m), scenario.users()), evaluated)
        })
        .collect();
    Ok(per_item.into_iter().unzip())
}

/// The provider's cost-minimizing corner allocation at reward `r`.
pub fn optimal_policy(scenario: &Scenario, r: f64) -> Result<PolicyOutcome> {
    check_unit_interval("reward r", r)?;
    let (ladders, evaluations) = exact_ladders(scenario)?;
    Ok(corner_outcome(scenario, r, ladders, evaluations))
}

/// Greedy selection order of one item and the marginal gain (per byte) of
/// each pick.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyRanking {
    pub order: Vec<usize>,
    pub marginal_gains: Vec<f64>,
    pub evaluations: usize,
}

pub fn greedy_ranking(scenario: &Scenario, m: usize) -> GreedyRanking {
    let users = scenario.users();
    let size = scenario.size(m);
    let mut chosen = UserSet::empty();
    let mut current = item_reactive_load(scenario, m);
    let scale = current;
    let mut order = Vec::with_capacity(users);
    let mut gains = Vec::with_capacity(users);
    let mut evaluations = 0;
    for _ in 0..users {
        let mut pick: Option<(usize, f64)> = None;
        for j in (0..users).filter(|&j| !chosen.contains(j)) {
            let value = base(scenario, m, chosen.with(j));
            evaluations += 1;
            let better = match pick {
                None => true,
                Some((_, best)) => value < best && !same(value, best, scale),
            };
            if better {
                pick = Some((j, value));
            }
        }
        let (j, value) = pick.expect("at least one remaining user");
        gains.push((current - value) / size);
        order.push(j);
        chosen = chosen.with(j);
        current = value;
    }
    GreedyRanking {
        order,
        marginal_gains: gains,
        evaluations,
    }
}

impl GreedyRanking {
    /// Number of leading picks whose marginal gain exceeds `r`.
    pub fn count_at(&self, r: f64) -> usize {
        self.marginal_gains.iter().take_while(|&&g| g > r).count()
    }

    fn regime_at(&self, r: f64) -> Regime {
        let count = self.count_at(r);
        Regime {
            count,
            users: self.order[..count].iter().copied().collect(),
        }
    }

    pub fn ladder(&self) -> ThresholdLadder {
        let initial = self.regime_at(0.0);
        let mut values: Vec<f64> = self.marginal_gains.iter().copied().filter(|&g| g > 0.0).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut breakpoints: Vec<Breakpoint> = Vec::new();
        let mut last = initial;
        for r in values {
            let regime = self.regime_at(r);
            if regime.count != last.count {
                breakpoints.push(Breakpoint { r, regime });
                last = regime;
            }
        }
        let users = self.order.len();
        let seen: Vec<usize> = std::iter::once(initial.count)
            .chain(breakpoints.iter().map(|b| b.regime.count))
            .collect();
        ThresholdLadder {
            initial,
            breakpoints,
            skipped: (0..=users).filter(|k| !seen.contains(k)).collect(),
        }
    }
}

/// Greedy policy: users are added one at a time by largest marginal gain,
/// keeping every pick whose gain exceeds `r`.
pub fn greedy_policy(scenario: &Scenario, r: f64) -> Result<PolicyOutcome> {
    check_unit_interval("reward r", r)?;
    let rankings: Vec<GreedyRanking> = (0..scenario.items())
        .into_par_iter()
        .map(|m| greedy_ranking(scenario, m))
        .collect();
    let evaluations = rankings.iter().map(|g| g.evaluations).collect();
    let ladders = rankings.iter().map(GreedyRanking::ladder).collect();
    Ok(corner_outcome(scenario, r, ladders, evaluations))
}

/// Gain per byte of caching item `m` at user `i` alone:
/// `(1/T) sum_t (p_i + sum_{j != i} p_j sum_l theta_i theta_j)`.
pub fn level1_scores(scenario: &Scenario, m: usize) -> Vec<f64> {
    let occ = scenario.occupancy();
    let users = scenario.users();
    let t_count = scenario.slots();
    (0..users)
        .map(|i| {
            let mut total = 0.0;
            for t in 0..t_count {
                total += scenario.demand(i, t, m);
                for j in (0..users).filter(|&j| j != i) {
                    let meet: f64 = occ.row(i, t).iter().zip(occ.row(j, t)).map(|(a, b)| a * b).sum();
                    total += scenario.demand(j, t, m) * meet;
                }
            }
            total / t_count as f64
        })
        .collect()
}

/// Per-item gain bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemBounds {
    pub lower: f64,
    pub exact: Option<f64>,
    pub upper: f64,
}

/// Greedy lower bound, exact optimum (when within the exact cap), and the
/// summed level-1 upper bound of the provider's gain.
#[derive(Debug, Clone, PartialEq)]
pub struct GainBounds {
    pub lower: f64,
    pub exact: Option<f64>,
    pub upper: f64,
    pub items: Vec<ItemBounds>,
}

/// `lower <= exact <= upper` at reward `r`.
///
/// The upper bound of an item sums the top-`k` level-1 scores, where `k` is
/// the optimal cache count when the exact optimum is available (so it is
/// tight in the single-cache regime) and the best `k` otherwise.
pub fn gain_bounds(scenario: &Scenario, r: f64) -> Result<GainBounds> {
    check_unit_interval("reward r", r)?;
    let greedy = greedy_policy(scenario, r)?;
    let optimal = match optimal_policy(scenario, r) {
        Ok(o) => Some(o),
        Err(Error::Capacity { .. }) => None,
        Err(e) => return Err(e),
    };
    let mut items = Vec::with_capacity(scenario.items());
    for m in 0..scenario.items() {
        let size = scenario.size(m);
        let reactive = item_reactive_load(scenario, m);
        let gain_of = |reg: Regime| reactive - base(scenario, m, reg.users) - r * reg.count as f64 * size;
        let lower = gain_of(greedy.regimes[m]);
        let exact = optimal.as_ref().map(|o| gain_of(o.regimes[m]));
        let mut scores = level1_scores(scenario, m);
        scores.sort_by(|a, b| b.total_cmp(a));
        let prefix = |k: usize| (scores[..k].iter().sum::<f64>() - k as f64 * r) * size;
        let upper = match &optimal {
            Some(o) => prefix(o.regimes[m].count),
            None => (0..=scenario.users()).map(prefix).fold(f64::NEG_INFINITY, f64::max),
        }
        .max(0.0);
        items.push(ItemBounds { lower, exact, upper });
    }
    Ok(GainBounds {
        lower: items.iter().map(|b| b.lower).sum(),
        exact: optimal.map(|_| items.iter().map(|b| b.exact.unwrap()).sum()),
        upper: items.iter().map(|b| b.upper).sum(),
        items,
    })
}

/// Closed-form thresholds of the three-user case for one item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeUserThresholds {
    /// Below `r1` all three users cache.
    pub r1: f64,
    /// Between `r2` and `r3` a single copy is cached.
    pub r2: f64,
    /// Above `r3` nobody caches.
    pub r3: f64,
    /// The once-vs-twice threshold maximized over every ordered pair, as
    /// printed with the closed forms; an upper estimate of `r2`.
    pub r2_all_pairs: f64,
    /// Best single cacher.
    pub once: usize,
    /// Best pair of cachers.
    pub twice: (usize, usize),
}

impl ThreeUserThresholds {
    /// Rewards within rounding of a threshold take the smaller-caching side.
    pub fn regime_at(&self, r: f64) -> Regime {
        let below = |th: f64| r < th && !same(r, th, 1.0);
        let (count, users) = if below(self.r1) {
            (3, UserSet::all(3))
        } else if below(self.r2) {
            (2, [self.twice.0, self.twice.1].into_iter().collect())
        } else if below(self.r3) {
            (1, UserSet::single(self.once))
        } else {
            (0, UserSet::empty())
        };
        Regime { count, users }
    }
}

/// Three-user thresholds evaluated from the closed-form rankings.
pub fn prop2_thresholds(scenario: &Scenario, m: usize) -> Result<ThreeUserThresholds> {
    if scenario.users() != 3 {
        return Err(Error::Precondition(format!(
            "three-user thresholds need N = 3, got {}",
            scenario.users()
        )));
    }
    if m >= scenario.items() {
        return Err(Error::Argument(format!("item {} out of range", m + 1)));
    }
    let occ = scenario.occupancy();
    let t_count = scenario.slots();
    let avg = |f: &dyn Fn(usize) -> f64| (0..t_count).map(f).sum::<f64>() / t_count as f64;
    let p = |n: usize, t: usize| scenario.demand(n, t, m);
    let meet = |i: usize, j: usize, t: usize| -> f64 {
        occ.row(i, t).iter().zip(occ.row(j, t)).map(|(a, b)| a * b).sum()
    };
    let v = |n: usize, t: usize| occ.isolation_unchecked(n, t);

    let once_scores: Vec<f64> = (0..3)
        .map(|i| avg(&|t| p(i, t) + (0..3).filter(|&j| j != i).map(|j| p(j, t) * meet(i, j, t)).sum::<f64>()))
        .collect();
    let scale = once_scores.iter().fold(1.0, |a: f64, b| a.max(*b));
    let beats = |a: f64, b: f64| a > b && !same(a, b, scale);
    let mut once = 0;
    for i in 1..3 {
        if beats(once_scores[i], once_scores[once]) {
            once = i;
        }
    }
    let pair_score = |i: usize, j: usize| {
        let k = 3 - i - j;
        avg(&|t| p(i, t) + p(j, t) + p(k, t) * v(k, t))
    };
    let mut twice = (0, 1);
    let mut twice_score = pair_score(0, 1);
    for (i, j) in [(0, 2), (1, 2)] {
        let s = pair_score(i, j);
        if beats(s, twice_score) {
            twice = (i, j);
            twice_score = s;
        }
    }
    let r1 = (0..3)
        .map(|i| avg(&|t| p(i, t) * (1.0 - v(i, t))))
        .fold(f64::INFINITY, f64::min);
    let r3 = once_scores[once];
    let r2 = twice_score - r3;
    let mut r2_all_pairs = f64::NEG_INFINITY;
    for i in 0..3 {
        for j in (0..3).filter(|&j| j != i) {
            let k = 3 - i - j;
            let value = avg(&|t| {
                let shared: f64 = (0..scenario.locations())
                    .map(|l| occ.get(j, t, l) * occ.get(k, t, l) * (1.0 - occ.get(i, t, l)))
                    .sum();
                p(j, t) * (1.0 - meet(i, j, t)) + p(k, t) * shared
            });
            r2_all_pairs = r2_all_pairs.max(value);
        }
    }
    Ok(ThreeUserThresholds {
        r1,
        r2,
        r3,
        r2_all_pairs,
        once,
        twice,
    })
}

/// Provider reward chosen against the users' memory preference.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTradeoff {
    /// Reward multiplier as a function of aggregate memory.
    pub staircase: Staircase,
    pub aggregate_memory: f64,
    pub per_user_memory: f64,
    pub reward: f64,
    pub vertical: bool,
}

/// Builds the multiplier staircase from the exact ladders and intersects it
/// with the users' line `Z_n = beta * r` (aggregate `Z = N beta r`).
pub fn reward_tradeoff(scenario: &Scenario, beta: f64) -> Result<RewardTradeoff> {
    let (ladders, _) = exact_ladders(scenario)?;
    reward_tradeoff_from_ladders(scenario, &ladders, beta)
}

pub fn reward_tradeoff_from_ladders(
    scenario: &Scenario,
    ladders: &[ThresholdLadder],
    beta: f64,
) -> Result<RewardTradeoff> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Argument(format!("beta = {beta} must be positive")));
    }
    let staircase = Staircase::from_levels(
        ladders
            .iter()
            .enumerate()
            .flat_map(|(m, l)| l.drops(scenario.size(m))),
    );
    let users = scenario.users() as f64;
    let Crossing { memory, level, vertical } = staircase.intersect_rising_line(1.0 / (users * beta));
    Ok(RewardTradeoff {
        staircase,
        aggregate_memory: memory,
        per_user_memory: memory / users,
        reward: level,
        vertical,
    })
}

/// Allocation and ladders under identical (optionally uniform) mobility.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityOutcome {
    pub allocation: CachingAllocation,
    pub ladders: Vec<ThresholdLadder>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Policy for users sharing one occupancy profile.
///
/// Coverage then depends only on how many users cache, so each level picks
/// the users with the largest discounted interest. With `uniform` the
/// coverage weight uses the alternating binomial sum over `1/L`; with
/// `l_infinity` every co-location weight vanishes and the ladder is the
/// sorted mean interests.
pub fn similarity_policy(scenario: &Scenario, r: f64, uniform: bool, l_infinity: bool) -> Result<SimilarityOutcome> {
    check_unit_interval("reward r", r)?;
    let occ = scenario.occupancy();
    let users = scenario.users();
    let t_count = scenario.slots();
    let locations = scenario.locations();
    for n in 1..users {
        for t in 0..t_count {
            if occ.row(n, t).iter().zip(occ.row(0, t)).any(|(a, b)| (a - b).abs() > 1e-12) {
                return Err(Error::Precondition(format!(
                    "user {} occupancy differs from user 1 in slot {}",
                    n + 1,
                    t + 1
                )));
            }
        }
    }
    if uniform {
        let u = 1.0 / locations as f64;
        if (0..t_count).any(|t| occ.row(0, t).iter().any(|th| (th - u).abs() > 1e-12)) {
            return Err(Error::Precondition("occupancy is not uniform over locations".into()));
        }
    }
    // weight[t][k]: probability an uncached user meets one of k cachers
    let weight: Vec<Vec<f64>> = (0..t_count)
        .map(|t| {
            (0..=users)
                .map(|k| {
                    if l_infinity || k == 0 {
                        0.0
                    } else if uniform {
                        let l = locations as f64;
                        (1..=k)
                            .map(|j| {
                                let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                                sign * binomial(k, j) * l * l.powi(-(j as i32 + 1))
                            })
                            .sum()
                    } else {
                        occ.row(0, t)
                            .iter()
                            .map(|th| th * (1.0 - (1.0 - th).powi(k as i32)))
                            .sum()
                    }
                })
                .collect()
        })
        .collect();

    let mut ladders = Vec::with_capacity(scenario.items());
    for m in 0..scenario.items() {
        let size = scenario.size(m);
        let reactive = item_reactive_load(scenario, m);
        let mut lines = Vec::with_capacity(users + 1);
        for k in 0..=users {
            let key = |i: usize| {
                (0..t_count)
                    .map(|t| scenario.demand(i, t, m) * (1.0 - weight[t][k]))
                    .sum::<f64>()
                    / t_count as f64
            };
            let mut ranked: Vec<(usize, f64)> = (0..users).map(|i| (i, key(i))).collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let chosen: UserSet = ranked[..k].iter().map(|&(i, _)| i).collect();
            let gain: f64 = (0..t_count)
                .map(|t| {
                    (0..users)
                        .map(|i| {
                            let p = scenario.demand(i, t, m);
                            if chosen.contains(i) {
                                p
                            } else {
                                weight[t][k] * p
                            }
                        })
                        .sum::<f64>()
                })
                .sum::<f64>()
                / t_count as f64;
            lines.push(Line {
                regime: Regime { count: k, users: chosen },
                intercept: reactive - size * gain,
            });
        }
        ladders.push(lower_envelope(&lines, size, users));
    }
    let sets: Vec<UserSet> = ladders.iter().map(|l| l.regime_at(r).users).collect();
    Ok(SimilarityOutcome {
        allocation: CachingAllocation::from_corner_sets(scenario, &sets),
        ladders,
    })
}

/// All `k`-subsets with the smallest uncovered base; used by tests and the
/// CLI to report how many sets tie for a level.
pub fn argmin_sets(scenario: &Scenario, m: usize, k: usize) -> Vec<UserSet> {
    let scale = item_reactive_load(scenario, m);
    let values: Vec<(UserSet, f64)> = combinations(scenario.users(), k)
        .map(|s| (s, base(scenario, m, s)))
        .collect();
    let best = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    values
        .into_iter()
        .filter(|v| same(v.1, best, scale))
        .map(|v| v.0)
        .collect()
}
