//! TOML scenario documents.
//!
//! ```toml
//! [counts]
//! N = 2
//! M = 1
//! L = 2
//! T = 1
//!
//! [[items]]
//! size = 1.0
//!
//! [[users]]
//! demand = [[0.8]]            # T rows of M probabilities
//! [users.mobility]
//! initial = [0.5, 0.5]
//! transitions = [[[0.5, 0.5], [0.5, 0.5]]]   # T matrices, L x L
//!
//! [economics]
//! r = 0.2
//! beta = 10.0
//! gamma = 0.7
//! ```
//!
//! Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{DemandProfile, MobilityProfile, Scenario, ScenarioInput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Counts {
    #[serde(rename = "N")]
    pub users: usize,
    #[serde(rename = "M")]
    pub items: usize,
    #[serde(rename = "L")]
    pub locations: usize,
    #[serde(rename = "T")]
    pub slots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Item {
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mobility {
    pub initial: Vec<f64>,
    pub transitions: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct User {
    pub demand: Vec<Vec<f64>>,
    pub mobility: Mobility,
}

/// Prices and preference slopes. `r_prime` defaults to `1 - r`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Economics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_prime: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

impl Economics {
    pub fn price(&self) -> Option<f64> {
        self.r_prime.or(self.r.map(|r| 1.0 - r))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub counts: Counts,
    pub items: Vec<Item>,
    pub users: Vec<User>,
    #[serde(default)]
    pub economics: Economics,
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

impl ScenarioFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
            Error::Parse {
                line,
                column,
                message: e.message().trim().to_string(),
            }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario documents always serialize")
    }

    pub fn input(&self) -> ScenarioInput {
        ScenarioInput {
            users: self.counts.users,
            items: self.counts.items,
            locations: self.counts.locations,
            slots: self.counts.slots,
            sizes: self.items.iter().map(|i| i.size).collect(),
            demand: self.users.iter().map(|u| DemandProfile::new(u.demand.clone())).collect(),
            mobility: self
                .users
                .iter()
                .map(|u| MobilityProfile::new(u.mobility.initial.clone(), u.mobility.transitions.clone()))
                .collect(),
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::new(self.input())
    }

    pub fn from_scenario(scenario: &Scenario, economics: Economics) -> Self {
        let input = scenario.input();
        ScenarioFile {
            counts: Counts {
                users: input.users,
                items: input.items,
                locations: input.locations,
                slots: input.slots,
            },
            items: input.sizes.iter().map(|&size| Item { size }).collect(),
            users: input
                .demand
                .iter()
                .zip(&input.mobility)
                .map(|(d, m)| User {
                    demand: d.probs.clone(),
                    mobility: Mobility {
                        initial: m.initial.clone(),
                        transitions: m.transitions.clone(),
                    },
                })
                .collect(),
            economics,
        }
    }
}
