//! Python bindings. Allocations are lists of per-user rows; user indices in
//! returned sets are 0-based.

use d2dcache::centralized::{self, PolicyOutcome, ThresholdLadder};
use d2dcache::decentralized::{self, GameOutcome, Selection, UserRegime};
use d2dcache::loadmodel;
use d2dcache::montecarlo::{self, SimulationConfig};
use d2dcache::scenario_file::{Economics, ScenarioFile};
use d2dcache::{CachingAllocation, DemandProfile, MobilityProfile};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: d2dcache::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(frozen)]
struct Scenario(d2dcache::Scenario);

#[pymethods]
impl Scenario {
    /// Builds a scenario from sizes[M], demand[N][T][M], initial[N][L] and
    /// transitions[N][T][L][L].
    #[new]
    fn new(
        sizes: Vec<f64>,
        demand: Vec<Vec<Vec<f64>>>,
        initial: Vec<Vec<f64>>,
        transitions: Vec<Vec<Vec<Vec<f64>>>>,
    ) -> PyResult<Self> {
        if initial.len() != demand.len() || transitions.len() != demand.len() {
            return Err(PyValueError::new_err("demand, initial and transitions need one entry per user"));
        }
        let mobility = initial
            .into_iter()
            .zip(transitions)
            .map(|(i, t)| MobilityProfile::new(i, t))
            .collect();
        let demand = demand.into_iter().map(DemandProfile::new).collect();
        d2dcache::Scenario::from_profiles(sizes, demand, mobility)
            .map(Scenario)
            .map_err(err)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let file = ScenarioFile::from_toml(text).map_err(err)?;
        file.scenario().map(Scenario).map_err(err)
    }

    fn to_toml(&self) -> String {
        ScenarioFile::from_scenario(&self.0, Economics::default()).to_toml()
    }

    #[getter]
    fn users(&self) -> usize {
        self.0.users()
    }

    #[getter]
    fn items(&self) -> usize {
        self.0.items()
    }

    #[getter]
    fn locations(&self) -> usize {
        self.0.locations()
    }

    #[getter]
    fn slots(&self) -> usize {
        self.0.slots()
    }

    /// occupancy[n][t][l]
    fn occupancy(&self) -> Vec<Vec<Vec<f64>>> {
        let occ = self.0.occupancy();
        (0..occ.users())
            .map(|n| (0..occ.slots()).map(|t| occ.row(n, t).to_vec()).collect())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(N={}, M={}, L={}, T={})",
            self.0.users(),
            self.0.items(),
            self.0.locations(),
            self.0.slots()
        )
    }
}

fn allocation(sc: &Scenario, x: Vec<Vec<f64>>) -> PyResult<CachingAllocation> {
    CachingAllocation::new(&sc.0, x).map_err(err)
}

fn ladder_dict<'py>(py: Python<'py>, l: &ThresholdLadder) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("initial", l.initial.users.iter().collect::<Vec<_>>())?;
    let bps: Vec<(f64, Vec<usize>)> = l
        .breakpoints
        .iter()
        .map(|b| (b.r, b.regime.users.iter().collect()))
        .collect();
    d.set_item("breakpoints", bps)?;
    d.set_item("skipped", l.skipped.clone())?;
    Ok(d)
}

fn policy_dict<'py>(py: Python<'py>, out: &PolicyOutcome) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("allocation", out.allocation.rows().to_vec())?;
    d.set_item(
        "cachers",
        out.regimes.iter().map(|g| g.users.iter().collect::<Vec<_>>()).collect::<Vec<_>>(),
    )?;
    let ladders = out.ladders.iter().map(|l| ladder_dict(py, l)).collect::<PyResult<Vec<_>>>()?;
    d.set_item("ladders", ladders)?;
    d.set_item("reactive", out.cost.reactive)?;
    d.set_item("proactive_load", out.cost.proactive_load)?;
    d.set_item("caching_cost", out.cost.caching_cost)?;
    d.set_item("total", out.cost.total_proactive)?;
    d.set_item("gain", out.cost.gain)?;
    d.set_item("evaluations", out.evaluations.clone())?;
    Ok(d)
}

#[pyfunction]
fn optimal_policy<'py>(py: Python<'py>, sc: &Scenario, r: f64) -> PyResult<Bound<'py, PyDict>> {
    policy_dict(py, &centralized::optimal_policy(&sc.0, r).map_err(err)?)
}

#[pyfunction]
fn greedy_policy<'py>(py: Python<'py>, sc: &Scenario, r: f64) -> PyResult<Bound<'py, PyDict>> {
    policy_dict(py, &centralized::greedy_policy(&sc.0, r).map_err(err)?)
}

/// (lower, exact or None, upper)
#[pyfunction]
fn gain_bounds(sc: &Scenario, r: f64) -> PyResult<(f64, Option<f64>, f64)> {
    let b = centralized::gain_bounds(&sc.0, r).map_err(err)?;
    Ok((b.lower, b.exact, b.upper))
}

/// (r1, r2, r3) for a three-user scenario.
#[pyfunction]
fn prop2_thresholds(sc: &Scenario, item: usize) -> PyResult<(f64, f64, f64)> {
    let t = centralized::prop2_thresholds(&sc.0, item).map_err(err)?;
    Ok((t.r1, t.r2, t.r3))
}

#[pyfunction]
fn proactive_cost(sc: &Scenario, x: Vec<Vec<f64>>, r: f64) -> PyResult<f64> {
    let x = allocation(sc, x)?;
    Ok(loadmodel::proactive_cost(&sc.0, &x, r).map_err(err)?.total_proactive)
}

#[pyfunction]
fn mean_proactive_load(sc: &Scenario, x: Vec<Vec<f64>>) -> PyResult<f64> {
    let x = allocation(sc, x)?;
    loadmodel::mean_proactive_load(&sc.0, &x).map_err(err)
}

/// (p_hat, p_tilde), each indexed [user][item].
#[pyfunction]
fn user_thresholds(sc: &Scenario) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let t = decentralized::user_thresholds(&sc.0);
    (t.p_hat, t.p_tilde)
}

fn game_dict<'py>(py: Python<'py>, out: &GameOutcome) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("allocation", out.allocation.rows().to_vec())?;
    d.set_item("payments", out.payments.proactive.clone())?;
    d.set_item("gains", out.payments.gain.clone())?;
    let regimes: Vec<Vec<&str>> = out
        .regimes
        .iter()
        .map(|row| {
            row.iter()
                .map(|r| match r {
                    UserRegime::Full => "full",
                    UserRegime::Partial => "partial",
                    UserRegime::None => "none",
                })
                .collect()
        })
        .collect();
    d.set_item("regimes", regimes)?;
    d.set_item(
        "selection",
        match out.selection {
            Selection::Fair => "fair",
            Selection::RiskDominant => "risk",
        },
    )?;
    d.set_item("nash_gain", out.nash_gain)?;
    d.set_item("nash_certified", out.nash_certified)?;
    d.set_item("converged", out.converged)?;
    Ok(d)
}

#[pyfunction]
fn spne_fair<'py>(py: Python<'py>, sc: &Scenario, r_prime: f64) -> PyResult<Bound<'py, PyDict>> {
    game_dict(py, &decentralized::spne_fair(&sc.0, r_prime).map_err(err)?)
}

#[pyfunction]
fn risk_dominant<'py>(py: Python<'py>, sc: &Scenario, r_prime: f64) -> PyResult<Bound<'py, PyDict>> {
    game_dict(py, &decentralized::risk_dominant(&sc.0, r_prime).map_err(err)?)
}

#[pyfunction]
fn best_response(sc: &Scenario, user: usize, item: usize, others: Vec<f64>, r_prime: f64) -> PyResult<f64> {
    decentralized::best_response(&sc.0, user, item, &others, r_prime).map_err(err)
}

#[pyfunction]
fn verify_nash(sc: &Scenario, x: Vec<Vec<f64>>, r_prime: f64) -> PyResult<f64> {
    let x = allocation(sc, x)?;
    decentralized::verify_nash(&sc.0, &x, r_prime).map_err(err)
}

/// (aggregate memory, per-user memory, reward)
#[pyfunction]
fn reward_tradeoff(sc: &Scenario, beta: f64) -> PyResult<(f64, f64, f64)> {
    let t = centralized::reward_tradeoff(&sc.0, beta).map_err(err)?;
    Ok((t.aggregate_memory, t.per_user_memory, t.reward))
}

/// ([(memory, price) per user], (memory, price) aggregate)
#[pyfunction]
fn memory_tradeoff(sc: &Scenario, gamma: f64) -> PyResult<(Vec<(f64, f64)>, (f64, f64))> {
    let t = decentralized::memory_tradeoff(&sc.0, gamma).map_err(err)?;
    Ok((
        t.users.iter().map(|c| (c.memory, c.price)).collect(),
        (t.aggregate.memory, t.aggregate.price),
    ))
}

#[pyfunction]
#[pyo3(signature = (sc, x, r_prime, replications, seed, lanes = 8))]
fn simulate<'py>(
    py: Python<'py>,
    sc: &Scenario,
    x: Vec<Vec<f64>>,
    r_prime: f64,
    replications: u64,
    seed: u64,
    lanes: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let x = allocation(sc, x)?;
    let config = SimulationConfig::new(replications, seed).with_lanes(lanes);
    let report = py
        .allow_threads(|| montecarlo::simulate(&sc.0, &x, r_prime, &config))
        .map_err(err)?;
    let cmp = montecarlo::compare_analytic(&report, &sc.0, &x, r_prime).map_err(err)?;
    let d = PyDict::new_bound(py);
    d.set_item("load_mean", report.total_load.mean)?;
    d.set_item("load_stderr", report.total_load.stderr)?;
    d.set_item("load_analytic", cmp.load_analytic)?;
    d.set_item(
        "payment_mean",
        report.user_payment.iter().map(|e| e.mean).collect::<Vec<_>>(),
    )?;
    d.set_item("payment_analytic", cmp.payment_analytic)?;
    d.set_item("max_abs_z", cmp.max_abs_z)?;
    d.set_item("all_subsets_bias", cmp.literal_bias)?;
    Ok(d)
}

#[pymodule]
fn d2dcache_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_function(wrap_pyfunction!(optimal_policy, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_policy, m)?)?;
    m.add_function(wrap_pyfunction!(gain_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(prop2_thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(proactive_cost, m)?)?;
    m.add_function(wrap_pyfunction!(mean_proactive_load, m)?)?;
    m.add_function(wrap_pyfunction!(user_thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(spne_fair, m)?)?;
    m.add_function(wrap_pyfunction!(risk_dominant, m)?)?;
    m.add_function(wrap_pyfunction!(best_response, m)?)?;
    m.add_function(wrap_pyfunction!(verify_nash, m)?)?;
    m.add_function(wrap_pyfunction!(reward_tradeoff, m)?)?;
    m.add_function(wrap_pyfunction!(memory_tradeoff, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
