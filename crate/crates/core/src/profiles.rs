//! Demand and mobility profiles, occupancy propagation and co-location
//! statistics.
//!
//! Mobility is a per-user, per-slot Markov chain over `L` locations. The
//! occupancy `theta[n][t][l]` is the probability that user `n` sits at
//! location `l` during slot `t`; it is obtained by pushing the initial
//! distribution through the slot transition matrices. Users are assumed to
//! move independently, so every co-location statistic below is a sum over
//! locations of products of per-user occupancies.

use std::fmt;

use crate::error::{Error, Result};
use crate::userset::UserSet;
use crate::{DERIVED_TOL, INPUT_TOL};

/// Per-user request probabilities, one row per slot, one column per item.
///
/// The `T` stored slots are one full period of a cyclo-stationary profile.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandProfile {
    pub probs: Vec<Vec<f64>>,
}

impl DemandProfile {
    pub fn new(probs: Vec<Vec<f64>>) -> Self {
        DemandProfile { probs }
    }

    /// Same probability vector in every slot.
    pub fn constant(slots: usize, per_item: &[f64]) -> Self {
        DemandProfile {
            probs: vec![per_item.to_vec(); slots],
        }
    }

    pub fn prob(&self, t: usize, m: usize) -> f64 {
        self.probs[t][m]
    }
}

/// Markov mobility: `transitions[t][l][k]` moves the user from `l` (slot
/// `t-1`) to `k` (slot `t`); `initial` is the distribution before slot 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityProfile {
    pub initial: Vec<f64>,
    pub transitions: Vec<Vec<Vec<f64>>>,
}

impl MobilityProfile {
    pub fn new(initial: Vec<f64>, transitions: Vec<Vec<Vec<f64>>>) -> Self {
        MobilityProfile {
            initial,
            transitions,
        }
    }

    /// Every transition row uniform over `locations`; starts uniform too.
    pub fn uniform(locations: usize, slots: usize) -> Self {
        let u = 1.0 / locations as f64;
        MobilityProfile {
            initial: vec![u; locations],
            transitions: vec![vec![vec![u; locations]; locations]; slots],
        }
    }

    /// The user never moves away from `location`.
    pub fn stationary(locations: usize, slots: usize, location: usize) -> Self {
        let mut initial = vec![0.0; locations];
        initial[location] = 1.0;
        let identity = (0..locations)
            .map(|l| {
                let mut row = vec![0.0; locations];
                row[l] = 1.0;
                row
            })
            .collect::<Vec<_>>();
        MobilityProfile {
            initial,
            transitions: vec![identity; slots],
        }
    }

    /// The same transition matrix in every slot.
    pub fn constant(initial: Vec<f64>, matrix: Vec<Vec<f64>>, slots: usize) -> Self {
        MobilityProfile {
            initial,
            transitions: vec![matrix; slots],
        }
    }

    pub fn locations(&self) -> usize {
        self.initial.len()
    }

    pub fn slots(&self) -> usize {
        self.transitions.len()
    }

    fn violations(&self, user: usize, locations: usize, slots: usize, out: &mut Vec<Violation>) {
        let who = format!("user {}", user + 1);
        if self.initial.len() != locations {
            out.push(Violation::new(
                format!("{who} mobility initial"),
                format!("has {} entries, expected {locations}", self.initial.len()),
            ));
        } else {
            check_distribution(&self.initial, format!("{who} mobility initial"), out);
        }
        if self.transitions.len() != slots {
            out.push(Violation::new(
                format!("{who} mobility transitions"),
                format!("has {} slots, expected {slots}", self.transitions.len()),
            ));
            return;
        }
        for (t, matrix) in self.transitions.iter().enumerate() {
            if matrix.len() != locations {
                out.push(Violation::new(
                    format!("{who} slot {}", t + 1),
                    format!("transition matrix has {} rows, expected {locations}", matrix.len()),
                ));
                continue;
            }
            for (l, row) in matrix.iter().enumerate() {
                let at = format!("{who} slot {} row {}", t + 1, l + 1);
                if row.len() != locations {
                    out.push(Violation::new(
                        at,
                        format!("has {} entries, expected {locations}", row.len()),
                    ));
                } else {
                    check_distribution(row, at, out);
                }
            }
        }
    }
}

fn check_distribution(values: &[f64], at: String, out: &mut Vec<Violation>) {
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        out.push(Violation::new(at, format!("has negative or non-finite entry {v}")));
        return;
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > INPUT_TOL {
        out.push(Violation::new(at, format!("sums to {sum}, expected 1")));
    }
}

/// Propagates a mobility profile into its per-slot occupancy (`T x L`).
///
/// `theta[t] = theta[t-1] * transitions[t]`, seeded from the initial
/// distribution.
pub fn build_occupancy(mobility: &MobilityProfile) -> Result<Vec<Vec<f64>>> {
    let mut report = Vec::new();
    mobility.violations(0, mobility.locations(), mobility.slots(), &mut report);
    if !report.is_empty() {
        return Err(Error::InvalidScenario(ValidationReport { violations: report }));
    }
    Ok(propagate(mobility))
}

fn propagate(mobility: &MobilityProfile) -> Vec<Vec<f64>> {
    let locations = mobility.locations();
    let mut current = mobility.initial.clone();
    let mut out = Vec::with_capacity(mobility.slots());
    for matrix in &mobility.transitions {
        let mut next = vec![0.0; locations];
        for (k, &mass) in current.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (l, &p) in matrix[k].iter().enumerate() {
                next[l] += mass * p;
            }
        }
        out.push(next.clone());
        current = next;
    }
    out
}

/// `theta[n][t][l]`: probability that user `n` is at location `l` in slot `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTensor {
    users: usize,
    slots: usize,
    locations: usize,
    theta: Vec<f64>,
}

impl OccupancyTensor {
    /// Builds a tensor from per-user `T x L` matrices.
    pub fn from_rows(rows: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let users = rows.len();
        let slots = rows.first().map_or(0, Vec::len);
        let locations = rows
            .first()
            .and_then(|r| r.first())
            .map_or(0, Vec::len);
        let mut theta = Vec::with_capacity(users * slots * locations);
        for (n, user) in rows.iter().enumerate() {
            if user.len() != slots {
                return Err(Error::Argument(format!(
                    "occupancy of user {} has {} slots, expected {slots}",
                    n + 1,
                    user.len()
                )));
            }
            for (t, row) in user.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if row.len() != locations || (sum - 1.0).abs() > DERIVED_TOL {
                    return Err(Error::Argument(format!(
                        "occupancy of user {} slot {} is not a distribution over {locations} locations",
                        n + 1,
                        t + 1
                    )));
                }
                theta.extend_from_slice(row);
            }
        }
        Ok(OccupancyTensor {
            users,
            slots,
            locations,
            theta,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn locations(&self) -> usize {
        self.locations
    }

    pub fn get(&self, n: usize, t: usize, l: usize) -> f64 {
        self.theta[(n * self.slots + t) * self.locations + l]
    }

    /// Distribution of user `n` over locations in slot `t`.
    pub fn row(&self, n: usize, t: usize) -> &[f64] {
        let start = (n * self.slots + t) * self.locations;
        &self.theta[start..start + self.locations]
    }

    /// Average meeting probability `(1/T) sum_t sum_l theta_i theta_j`.
    pub fn pairwise_meeting_avg(&self, i: usize, j: usize) -> Result<f64> {
        if i == j {
            return Err(Error::Argument(format!(
                "meeting probability needs two distinct users, got {} twice",
                i + 1
            )));
        }
        self.check_user(i)?;
        self.check_user(j)?;
        let total: f64 = (0..self.slots)
            .map(|t| dot(self.row(i, t), self.row(j, t)))
            .sum();
        Ok(total / self.slots as f64)
    }

    /// Probability that exactly the users in `set` share some location in
    /// slot `t` and nobody else is there.
    pub fn colocate_exact_prob(&self, set: UserSet, t: usize) -> Result<f64> {
        if set.is_empty() {
            return Err(Error::Argument("co-location set is empty".into()));
        }
        self.check_set(set)?;
        Ok(self.colocate_exact_unchecked(set, t))
    }

    pub(crate) fn colocate_exact_unchecked(&self, set: UserSet, t: usize) -> f64 {
        (0..self.locations)
            .map(|l| {
                (0..self.users)
                    .map(|k| {
                        let th = self.get(k, t, l);
                        if set.contains(k) {
                            th
                        } else {
                            1.0 - th
                        }
                    })
                    .product::<f64>()
            })
            .sum()
    }

    /// Probability that user `k` shares a location with at least one member
    /// of `set` in slot `t`.
    pub fn coverage_prob(&self, k: usize, set: UserSet, t: usize) -> Result<f64> {
        self.check_user(k)?;
        self.check_set(set)?;
        if set.contains(k) {
            return Err(Error::Argument(format!(
                "user {} cannot be covered by a set containing it",
                k + 1
            )));
        }
        Ok(self.coverage_unchecked(k, set, t))
    }

    pub(crate) fn coverage_unchecked(&self, k: usize, set: UserSet, t: usize) -> f64 {
        if set.is_empty() {
            return 0.0;
        }
        let own = self.row(k, t);
        (0..self.locations)
            .map(|l| {
                if own[l] == 0.0 {
                    return 0.0;
                }
                let miss: f64 = set.iter().map(|j| 1.0 - self.get(j, t, l)).product();
                own[l] * (1.0 - miss)
            })
            .sum()
    }

    /// Probability that user `n` meets at least one other user in slot `t`.
    /// Zero when `n` is the only user.
    pub fn isolation_factor(&self, n: usize, t: usize) -> Result<f64> {
        self.check_user(n)?;
        Ok(self.isolation_unchecked(n, t))
    }

    pub(crate) fn isolation_unchecked(&self, n: usize, t: usize) -> f64 {
        self.coverage_unchecked(n, UserSet::all(self.users).without(n), t)
    }

    fn check_user(&self, n: usize) -> Result<()> {
        if n < self.users {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "user index {} out of range 1..={}",
                n + 1,
                self.users
            )))
        }
    }

    fn check_set(&self, set: UserSet) -> Result<()> {
        match set.iter().find(|&k| k >= self.users) {
            Some(k) => Err(Error::Argument(format!(
                "user index {} out of range 1..={}",
                k + 1,
                self.users
            ))),
            None => Ok(()),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One violated invariant and where it was found.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl Violation {
    fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            location: location.into(),
            message: message.into(),
        }
    }
}

/// Every invariant a scenario violates; empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{}: {}", v.location, v.message)?;
        }
        Ok(())
    }
}

/// Unvalidated scenario data as read from a file or built in code.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioInput {
    pub users: usize,
    pub items: usize,
    pub locations: usize,
    pub slots: usize,
    pub sizes: Vec<f64>,
    pub demand: Vec<DemandProfile>,
    pub mobility: Vec<MobilityProfile>,
}

impl ScenarioInput {
    /// Lists every violated invariant.
    pub fn validate(&self) -> ValidationReport {
        let mut out = Vec::new();
        if self.users == 0 || self.items == 0 || self.locations == 0 || self.slots == 0 {
            out.push(Violation::new(
                "counts",
                format!(
                    "N, M, L, T must be positive (got {}, {}, {}, {})",
                    self.users, self.items, self.locations, self.slots
                ),
            ));
        }
        if self.users > UserSet::MAX_USERS {
            out.push(Violation::new(
                "counts",
                format!("N = {} exceeds the supported maximum of {}", self.users, UserSet::MAX_USERS),
            ));
        }
        if self.sizes.len() != self.items {
            out.push(Violation::new(
                "items",
                format!("{} sizes given for M = {}", self.sizes.len(), self.items),
            ));
        }
        for (m, &s) in self.sizes.iter().enumerate() {
            if !(s.is_finite() && s > 0.0) {
                out.push(Violation::new(
                    format!("item {}", m + 1),
                    format!("size {s} must be positive"),
                ));
            }
        }
        if self.demand.len() != self.users {
            out.push(Violation::new(
                "users",
                format!("{} demand profiles for N = {}", self.demand.len(), self.users),
            ));
        }
        if self.mobility.len() != self.users {
            out.push(Violation::new(
                "users",
                format!("{} mobility profiles for N = {}", self.mobility.len(), self.users),
            ));
        }
        for (n, d) in self.demand.iter().enumerate() {
            if d.probs.len() != self.slots {
                out.push(Violation::new(
                    format!("user {} demand", n + 1),
                    format!("has {} slots, expected {}", d.probs.len(), self.slots),
                ));
                continue;
            }
            for (t, row) in d.probs.iter().enumerate() {
                if row.len() != self.items {
                    out.push(Violation::new(
                        format!("user {} demand slot {}", n + 1, t + 1),
                        format!("has {} items, expected {}", row.len(), self.items),
                    ));
                    continue;
                }
                for (m, &p) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&p) {
                        out.push(Violation::new(
                            format!("user {} demand slot {} item {}", n + 1, t + 1, m + 1),
                            format!("probability {p} outside [0, 1]"),
                        ));
                    }
                }
            }
        }
        for (n, mob) in self.mobility.iter().enumerate() {
            mob.violations(n, self.locations, self.slots, &mut out);
        }
        ValidationReport { violations: out }
    }
}

/// Free-function form of [`ScenarioInput::validate`].
pub fn validate_scenario(input: &ScenarioInput) -> ValidationReport {
    input.validate()
}

/// A validated problem instance together with its derived occupancy.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    input: ScenarioInput,
    occupancy: OccupancyTensor,
}

impl Scenario {
    pub fn new(input: ScenarioInput) -> Result<Self> {
        let report = input.validate();
        if !report.is_valid() {
            return Err(Error::InvalidScenario(report));
        }
        let rows = input.mobility.iter().map(propagate).collect();
        let occupancy = OccupancyTensor::from_rows(rows)?;
        Ok(Scenario { input, occupancy })
    }

    /// Convenience constructor; counts are inferred from the profiles.
    pub fn from_profiles(
        sizes: Vec<f64>,
        demand: Vec<DemandProfile>,
        mobility: Vec<MobilityProfile>,
    ) -> Result<Self> {
        let input = ScenarioInput {
            users: demand.len(),
            items: sizes.len(),
            locations: mobility.first().map_or(0, MobilityProfile::locations),
            slots: demand.first().map_or(0, |d| d.probs.len()),
            sizes,
            demand,
            mobility,
        };
        Scenario::new(input)
    }

    pub fn input(&self) -> &ScenarioInput {
        &self.input
    }

    pub fn users(&self) -> usize {
        self.input.users
    }

    pub fn items(&self) -> usize {
        self.input.items
    }

    pub fn locations(&self) -> usize {
        self.input.locations
    }

    pub fn slots(&self) -> usize {
        self.input.slots
    }

    pub fn size(&self, m: usize) -> f64 {
        self.input.sizes[m]
    }

    pub fn sizes(&self) -> &[f64] {
        &self.input.sizes
    }

    pub fn demand(&self, n: usize, t: usize, m: usize) -> f64 {
        self.input.demand[n].probs[t][m]
    }

    pub fn occupancy(&self) -> &OccupancyTensor {
        &self.occupancy
    }

    /// `(1/T) sum_t p[n][t][m]`.
    pub fn mean_demand(&self, n: usize, m: usize) -> f64 {
        let t_count = self.slots();
        (0..t_count).map(|t| self.demand(n, t, m)).sum::<f64>() / t_count as f64
    }

    /// The same demand with mobility replaced by one of the limiting regimes.
    pub fn with_mobility_limit(&self, limit: MobilityLimit) -> Scenario {
        let n = self.users();
        let t = self.slots();
        let (locations, mobility) = match limit {
            // each user pinned to its own location: every meeting probability is zero
            MobilityLimit::Dispersed => (
                n,
                (0..n).map(|u| MobilityProfile::stationary(n, t, u)).collect(),
            ),
            MobilityLimit::SingleLocation => (1, vec![MobilityProfile::uniform(1, t); n]),
        };
        let input = ScenarioInput {
            locations,
            mobility,
            ..self.input.clone()
        };
        Scenario::new(input).expect("limit mobility is stochastic by construction")
    }
}

/// Limiting mobility regimes.
///
/// `Dispersed` realizes the many-locations limit of uniform mobility
/// (`L -> inf`): all co-location probabilities are exactly zero.
/// `SingleLocation` is `L = 1`: everybody always meets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MobilityLimit {
    Dispersed,
    SingleLocation,
}
