//! Network load, provider cost and user payments under a linear cost.
//!
//! A requesting user is served first from the bytes cached by everybody
//! standing at its location (itself included); cached fragments are
//! complementary, so the network serves `(S_m - sum of co-located x)^+`.
//! The expected load of user `n` partitions over the exact co-location
//! events `(a, l)` with `n` in `a`: "the users at `n`'s location are exactly
//! `a`". The partition is enumerated over all `2^(N-1)` such sets, which is
//! why exact evaluation is capped at [`EXACT_USER_CAP`](crate::EXACT_USER_CAP).

use crate::error::{check_unit_interval, Error, Result};
use crate::profiles::Scenario;
use crate::userset::UserSet;
use crate::EXACT_USER_CAP;

/// Bytes of each item cached at each user: `x[n][m]`, `0 <= x <= S_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CachingAllocation {
    x: Vec<Vec<f64>>,
}

impl CachingAllocation {
    pub fn new(scenario: &Scenario, x: Vec<Vec<f64>>) -> Result<Self> {
        if x.len() != scenario.users() {
            return Err(Error::Argument(format!(
                "allocation has {} rows, expected {}",
                x.len(),
                scenario.users()
            )));
        }
        for (n, row) in x.iter().enumerate() {
            if row.len() != scenario.items() {
                return Err(Error::Argument(format!(
                    "allocation row {} has {} entries, expected {}",
                    n + 1,
                    row.len(),
                    scenario.items()
                )));
            }
            for (m, &v) in row.iter().enumerate() {
                if !(0.0..=scenario.size(m)).contains(&v) {
                    return Err(Error::Argument(format!(
                        "x[{}][{}] = {v} outside [0, {}]",
                        n + 1,
                        m + 1,
                        scenario.size(m)
                    )));
                }
            }
        }
        Ok(CachingAllocation { x })
    }

    pub fn zeros(scenario: &Scenario) -> Self {
        CachingAllocation {
            x: vec![vec![0.0; scenario.items()]; scenario.users()],
        }
    }

    pub fn full(scenario: &Scenario) -> Self {
        CachingAllocation {
            x: vec![scenario.sizes().to_vec(); scenario.users()],
        }
    }

    /// Corner allocation: item `m` fully cached at every user of `sets[m]`.
    pub fn from_corner_sets(scenario: &Scenario, sets: &[UserSet]) -> Self {
        let mut alloc = Self::zeros(scenario);
        for (m, set) in sets.iter().enumerate() {
            for n in set.iter() {
                alloc.x[n][m] = scenario.size(m);
            }
        }
        alloc
    }

    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.x[n][m]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.x
    }

    /// `x[.][m]` for every user.
    pub fn item_column(&self, m: usize) -> Vec<f64> {
        self.x.iter().map(|row| row[m]).collect()
    }

    pub fn user_bytes(&self, n: usize) -> f64 {
        self.x[n].iter().sum()
    }

    pub fn total_bytes(&self) -> f64 {
        self.x.iter().flatten().sum()
    }
}

/// Provider-side cost of an allocation; all values per slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub reactive: f64,
    pub proactive_load: f64,
    pub caching_cost: f64,
    pub total_proactive: f64,
    pub gain: f64,
}

impl CostBreakdown {
    pub fn new(reactive: f64, proactive_load: f64, caching_cost: f64) -> Self {
        let total_proactive = proactive_load + caching_cost;
        CostBreakdown {
            reactive,
            proactive_load,
            caching_cost,
            total_proactive,
            gain: reactive - total_proactive,
        }
    }
}

/// Per-user reactive payment, proactive payment and their difference.
#[derive(Debug, Clone, PartialEq)]
pub struct PaymentBreakdown {
    pub reactive: Vec<f64>,
    pub proactive: Vec<f64>,
    pub gain: Vec<f64>,
}

/// Time-averaged expected reactive load `(1/T) sum_t sum_n sum_m S_m p`.
pub fn reactive_cost(scenario: &Scenario) -> f64 {
    (0..scenario.users())
        .map(|n| user_reactive_payment(scenario, n))
        .sum()
}

/// Reactive load of one item: `S_m (1/T) sum_t sum_n p`.
pub fn item_reactive_load(scenario: &Scenario, m: usize) -> f64 {
    let total: f64 = (0..scenario.users())
        .map(|n| scenario.mean_demand(n, m))
        .sum();
    scenario.size(m) * total
}

/// `(1/T) sum_t sum_m S_m p[n][t][m]`.
pub fn user_reactive_payment(scenario: &Scenario, n: usize) -> f64 {
    (0..scenario.items())
        .map(|m| scenario.size(m) * scenario.mean_demand(n, m))
        .sum()
}

pub(crate) fn ensure_exact_cap(users: usize) -> Result<()> {
    if users > EXACT_USER_CAP {
        Err(Error::Capacity {
            users,
            cap: EXACT_USER_CAP,
            hint: "estimate loads with montecarlo::simulate instead",
        })
    } else {
        Ok(())
    }
}

/// Exact co-location probabilities of one slot, indexed by user bitmask:
/// `prob[a] = sum_l prod_{k in a} theta_k^l prod_{j notin a} (1 - theta_j^l)`.
pub(crate) struct SlotColocation {
    prob: Vec<f64>,
    /// Non-empty masks ordered by size, then numerically.
    order: Vec<u64>,
}

impl SlotColocation {
    pub(crate) fn new(scenario: &Scenario, t: usize) -> Self {
        let users = scenario.users();
        let occ = scenario.occupancy();
        let mut prob = vec![0.0; 1usize << users];
        let mut table = Vec::with_capacity(1usize << users);
        for l in 0..scenario.locations() {
            table.clear();
            table.push(1.0);
            for k in 0..users {
                let th = occ.get(k, t, l);
                let len = table.len();
                for i in 0..len {
                    let base = table[i];
                    table[i] = base * (1.0 - th);
                    table.push(base * th);
                }
            }
            for (p, v) in prob.iter_mut().zip(&table) {
                *p += v;
            }
        }
        SlotColocation {
            prob,
            order: masks_by_size(users),
        }
    }

    /// `(a, P(a))` for every `a` containing `n` (alone event included; its
    /// probability is the complement of the shared events).
    pub(crate) fn events_of(&self, n: usize) -> Vec<(UserSet, f64)> {
        let bit = 1u64 << n;
        let mut shared = Vec::new();
        let mut together = 0.0;
        for &mask in &self.order {
            if mask & bit != 0 && mask != bit {
                let p = self.prob[mask as usize];
                together += p;
                shared.push((UserSet::from_bits(mask), p));
            }
        }
        let mut events = Vec::with_capacity(shared.len() + 1);
        events.push((UserSet::single(n), (1.0 - together).max(0.0)));
        events.extend(shared);
        events
    }
}

pub(crate) fn masks_by_size(users: usize) -> Vec<u64> {
    let mut masks: Vec<u64> = (1..(1u64 << users)).collect();
    masks.sort_by_key(|&m| (m.count_ones(), m));
    masks
}

fn residual(size: f64, cached: f64) -> f64 {
    (size - cached).max(0.0)
}

fn set_bytes(x: &CachingAllocation, set: UserSet, m: usize) -> f64 {
    set.iter().map(|k| x.get(k, m)).sum()
}

fn check_alloc_shape(scenario: &Scenario, x: &CachingAllocation) -> Result<()> {
    if x.rows().len() != scenario.users()
        || x.rows().iter().any(|r| r.len() != scenario.items())
    {
        return Err(Error::Argument(
            "allocation shape does not match the scenario".into(),
        ));
    }
    Ok(())
}

fn check_slot(scenario: &Scenario, t: usize) -> Result<()> {
    if t < scenario.slots() {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "slot {} out of range 1..={}",
            t + 1,
            scenario.slots()
        )))
    }
}

fn user_load_with(
    scenario: &Scenario,
    x: &CachingAllocation,
    table: &SlotColocation,
    n: usize,
    t: usize,
) -> f64 {
    let events = table.events_of(n);
    (0..scenario.items())
        .map(|m| {
            let p = scenario.demand(n, t, m);
            if p == 0.0 {
                return 0.0;
            }
            let size = scenario.size(m);
            let expected: f64 = events
                .iter()
                .map(|&(set, prob)| prob * residual(size, set_bytes(x, set, m)))
                .sum();
            p * expected
        })
        .sum()
}

/// Expected bytes the network serves to user `n` in slot `t`.
pub fn per_user_load(scenario: &Scenario, x: &CachingAllocation, n: usize, t: usize) -> Result<f64> {
    ensure_exact_cap(scenario.users())?;
    check_alloc_shape(scenario, x)?;
    check_slot(scenario, t)?;
    if n >= scenario.users() {
        return Err(Error::Argument(format!("user {} out of range", n + 1)));
    }
    let table = SlotColocation::new(scenario, t);
    Ok(user_load_with(scenario, x, &table, n, t))
}

/// Expected total network load in slot `t`.
pub fn proactive_load(scenario: &Scenario, x: &CachingAllocation, t: usize) -> Result<f64> {
    ensure_exact_cap(scenario.users())?;
    check_alloc_shape(scenario, x)?;
    check_slot(scenario, t)?;
    let table = SlotColocation::new(scenario, t);
    Ok((0..scenario.users())
        .map(|n| user_load_with(scenario, x, &table, n, t))
        .sum())
}

/// Per-user network load averaged over the period, for every user.
pub fn mean_user_loads(scenario: &Scenario, x: &CachingAllocation) -> Result<Vec<f64>> {
    ensure_exact_cap(scenario.users())?;
    check_alloc_shape(scenario, x)?;
    let t_count = scenario.slots();
    let mut loads = vec![0.0; scenario.users()];
    for t in 0..t_count {
        let table = SlotColocation::new(scenario, t);
        for (n, load) in loads.iter_mut().enumerate() {
            *load += user_load_with(scenario, x, &table, n, t);
        }
    }
    for load in &mut loads {
        *load /= t_count as f64;
    }
    Ok(loads)
}

/// Time-averaged proactive load `(1/T) sum_t L_t`.
pub fn mean_proactive_load(scenario: &Scenario, x: &CachingAllocation) -> Result<f64> {
    Ok(mean_user_loads(scenario, x)?.iter().sum())
}

/// Provider cost `(1/T) sum_t L_t + r sum x` with the derived gain.
pub fn proactive_cost(scenario: &Scenario, x: &CachingAllocation, r: f64) -> Result<CostBreakdown> {
    check_unit_interval("reward r", r)?;
    let load = mean_proactive_load(scenario, x)?;
    Ok(CostBreakdown::new(
        reactive_cost(scenario),
        load,
        r * x.total_bytes(),
    ))
}

/// `(1/T) sum_t load(n, t) + r' sum_m x[n][m]`.
pub fn user_proactive_payment(
    scenario: &Scenario,
    x: &CachingAllocation,
    n: usize,
    r_prime: f64,
) -> Result<f64> {
    check_unit_interval("price r'", r_prime)?;
    if n >= scenario.users() {
        return Err(Error::Argument(format!("user {} out of range", n + 1)));
    }
    let loads = mean_user_loads(scenario, x)?;
    Ok(loads[n] + r_prime * x.user_bytes(n))
}

/// Reactive and proactive payments of every user.
pub fn payments(scenario: &Scenario, x: &CachingAllocation, r_prime: f64) -> Result<PaymentBreakdown> {
    check_unit_interval("price r'", r_prime)?;
    let loads = mean_user_loads(scenario, x)?;
    let reactive: Vec<f64> = (0..scenario.users())
        .map(|n| user_reactive_payment(scenario, n))
        .collect();
    let proactive: Vec<f64> = loads
        .iter()
        .enumerate()
        .map(|(n, l)| l + r_prime * x.user_bytes(n))
        .collect();
    let gain = reactive.iter().zip(&proactive).map(|(a, b)| a - b).collect();
    Ok(PaymentBreakdown {
        reactive,
        proactive,
        gain,
    })
}

/// Slot-`t` load with the "every user is alone" complement taken over all
/// co-location events, including those that do not involve the user.
///
/// This is the textbook all-subsets form of the load expression; it only
/// agrees with [`proactive_load`] for `N = 2`. Kept so simulation can
/// quantify its bias.
pub fn literal_all_subsets_load(scenario: &Scenario, x: &CachingAllocation, t: usize) -> Result<f64> {
    ensure_exact_cap(scenario.users())?;
    check_alloc_shape(scenario, x)?;
    check_slot(scenario, t)?;
    let users = scenario.users();
    let table = SlotColocation::new(scenario, t);
    let shared: Vec<u64> = masks_by_size(users)
        .into_iter()
        .filter(|m| m.count_ones() >= 2)
        .collect();
    let any_meeting: f64 = shared.iter().map(|&m| table.prob[m as usize]).sum();
    let mut load = 0.0;
    for m in 0..scenario.items() {
        let size = scenario.size(m);
        for &mask in &shared {
            let set = UserSet::from_bits(mask);
            let demand: f64 = set.iter().map(|k| scenario.demand(k, t, m)).sum();
            load += residual(size, set_bytes(x, set, m)) * demand * table.prob[mask as usize];
        }
        for n in 0..users {
            load += (size - x.get(n, m)) * scenario.demand(n, t, m) * (1.0 - any_meeting);
        }
    }
    Ok(load)
}

/// `(1/T) sum_t` of [`literal_all_subsets_load`].
pub fn mean_literal_all_subsets_load(scenario: &Scenario, x: &CachingAllocation) -> Result<f64> {
    let mut total = 0.0;
    for t in 0..scenario.slots() {
        total += literal_all_subsets_load(scenario, x, t)?;
    }
    Ok(total / scenario.slots() as f64)
}

/// Weighted co-location events of user `n` for item `m`, averaged over the
/// period: `(others, w)` with `w = (1/T) sum_t p[n][t][m] P_t(a)` and
/// `others = a \ {n}`. The user's expected load on item `m` is
/// `sum w (S_m - x_n - x(others))^+`.
pub(crate) fn share_events(scenario: &Scenario, tables: &[SlotColocation], n: usize, m: usize) -> Vec<(UserSet, f64)> {
    let t_count = scenario.slots();
    let mut acc: Vec<(UserSet, f64)> = Vec::new();
    for (t, table) in tables.iter().enumerate() {
        let p = scenario.demand(n, t, m);
        for (i, (set, prob)) in table.events_of(n).into_iter().enumerate() {
            let w = p * prob / t_count as f64;
            if t == 0 {
                acc.push((set.without(n), w));
            } else {
                acc[i].1 += w;
            }
        }
    }
    acc
}
