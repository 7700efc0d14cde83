//! Monte Carlo aggregation, the exact small-chain oracle and CRN sweeps.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beliefs::{absorption_side_with, cascade_bounds, likelihoods_at, Belief};
use crate::engine::{run_validated, AbsorbedSide, RunConfig, RunOutcome};
use crate::error::{Error, Result};
use crate::params::{AbsorptionRule, BoundaryVariant, Firm, ModelParams, Side};

/// Sum in fixed blocks so the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 64 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCStats {
    pub n_runs: usize,
    pub n_censored: usize,
    pub mean: f64,
    pub std_error: f64,
    pub ci95: (f64, f64),
}

impl MCStats {
    pub fn new(n_runs: usize, n_censored: usize, mean: f64, std_error: f64) -> Self {
        MCStats {
            n_runs,
            n_censored,
            mean,
            std_error,
            ci95: (mean - 1.96 * std_error, mean + 1.96 * std_error),
        }
    }

    /// Sample mean with standard error s/√n.
    pub fn from_values(values: &[f64], n_censored: usize) -> Self {
        let n = values.len();
        if n == 0 {
            return MCStats::new(0, n_censored, f64::NAN, f64::NAN);
        }
        let mean = pairwise_sum(values) / n as f64;
        let se = if n > 1 {
            let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        MCStats::new(n, n_censored, mean, se)
    }

    /// Frequency with binomial standard error.
    pub fn binomial(successes: usize, n: usize, n_censored: usize) -> Self {
        if n == 0 {
            return MCStats::new(0, n_censored, f64::NAN, f64::NAN);
        }
        let p = successes as f64 / n as f64;
        MCStats::new(n, n_censored, p, (p * (1.0 - p) / n as f64).sqrt())
    }

    pub fn scaled(&self, c: f64) -> Self {
        MCStats::new(
            self.n_runs,
            self.n_censored,
            c * self.mean,
            c.abs() * self.std_error,
        )
    }
}

/// Standard error of a difference of two independent estimates.
pub fn pooled_se(a: &MCStats, b: &MCStats) -> f64 {
    (a.std_error * a.std_error + b.std_error * b.std_error).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionReport {
    pub p_wrong: MCStats,
    pub p_up: MCStats,
    pub p_down: MCStats,
    pub mean_arrivals: MCStats,
    pub mean_time: MCStats,
    pub welfare: MCStats,
    pub sales_a: MCStats,
    pub sales_b: MCStats,
    pub searches: MCStats,
    pub n_runs: usize,
    pub n_censored: usize,
    pub params: ModelParams,
}

impl AbsorptionReport {
    /// Aggregates outcomes listed in run-index order.
    pub fn from_outcomes(params: &ModelParams, outcomes: &[RunOutcome]) -> Result<Self> {
        let n = outcomes.len();
        let censored = outcomes.iter().filter(|o| o.censored()).count();
        if n > 0 && censored == n {
            return Err(Error::AllCensored(n));
        }
        let count = |f: &dyn Fn(&RunOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count();
        let column = |f: &dyn Fn(&RunOutcome) -> f64| -> MCStats {
            let v: Vec<f64> = outcomes.iter().map(f).collect();
            MCStats::from_values(&v, censored)
        };
        Ok(AbsorptionReport {
            p_wrong: MCStats::binomial(count(&|o| o.wrong), n, censored),
            p_up: MCStats::binomial(count(&|o| o.absorbed_side == AbsorbedSide::Up), n, censored),
            p_down: MCStats::binomial(
                count(&|o| o.absorbed_side == AbsorbedSide::Down),
                n,
                censored,
            ),
            mean_arrivals: column(&|o| o.arrivals_to_absorption as f64),
            mean_time: column(&|o| o.calendar_time),
            welfare: column(&|o| o.welfare),
            sales_a: column(&|o| o.sales_a as f64),
            sales_b: column(&|o| o.sales_b as f64),
            searches: column(&|o| o.searches as f64),
            n_runs: n,
            n_censored: censored,
            params: params.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitEstimate {
    pub pi_a: MCStats,
    pub pi_b: MCStats,
    pub expected_sales_a: MCStats,
    pub expected_sales_b: MCStats,
}

impl ProfitEstimate {
    pub fn from_report(report: &AbsorptionReport) -> Self {
        let p = &report.params;
        ProfitEstimate {
            pi_a: report.sales_a.scaled(p.p_a),
            pi_b: report.sales_b.scaled(p.p_b),
            expected_sales_a: report.sales_a,
            expected_sales_b: report.sales_b,
        }
    }

    pub fn profit(&self, firm: Firm) -> &MCStats {
        match firm {
            Firm::A => &self.pi_a,
            Firm::B => &self.pi_b,
        }
    }
}

/// Runs indices 0..runs of `config` in parallel; the result is in index order.
pub fn run_many(config: &RunConfig, runs: usize) -> Result<Vec<RunOutcome>> {
    config.validate()?;
    Ok((0..runs as u64)
        .into_par_iter()
        .map(|i| run_validated(config, i))
        .collect())
}

pub fn estimate_absorption_with(config: &RunConfig, runs: usize) -> Result<AbsorptionReport> {
    if runs < 1 {
        return Err(Error::Domain("run count must be at least 1".into()));
    }
    let outcomes = run_many(config, runs)?;
    AbsorptionReport::from_outcomes(&config.params, &outcomes)
}

pub fn estimate_absorption(
    params: &ModelParams,
    runs: usize,
    seed: u64,
) -> Result<AbsorptionReport> {
    estimate_absorption_with(&RunConfig::new(params.clone(), seed), runs)
}

pub fn estimate_profits(
    p_a: f64,
    p_b: f64,
    params: &ModelParams,
    runs: usize,
    seed: u64,
) -> Result<ProfitEstimate> {
    let params = params.clone().with_prices(p_a, p_b);
    let report = estimate_absorption(&params, runs, seed)?;
    Ok(ProfitEstimate::from_report(&report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainResult {
    pub p_wrong: f64,
    /// p_wrong plus the unresolved mass: a rigorous upper bracket.
    pub p_wrong_upper: f64,
    pub p_up: f64,
    pub p_down: f64,
    /// P(up) conditional on A high and on B high.
    pub p_up_given: [f64; 2],
    pub expected_arrivals: f64,
    pub expected_sales_a: f64,
    pub expected_sales_b: f64,
    /// Expected welfare until absorption.
    pub expected_welfare: f64,
    pub truncation_mass: f64,
    pub truncation_warning: bool,
    pub nodes_visited: usize,
}

pub const CHAIN_TRUNCATION_LIMIT: f64 = 1e-6;

/// Forward enumeration of the belief chain with exact branch probabilities.
/// Nodes whose LLRs agree to 1e-10 are merged.
pub fn exact_small_chain(
    params: &ModelParams,
    depth: usize,
    rule: AbsorptionRule,
) -> Result<ChainResult> {
    params.validate()?;
    if params.calvo_hazard > 0.0 || params.review_mu > 0.0 {
        return Err(Error::Domain(
            "the exact chain covers static prices without reviews".into(),
        ));
    }
    let key = |llr: f64| (llr * 1e10).round() as i64;
    // mass[0]: prior mass with A high, mass[1]: with B high
    let mut frontier: BTreeMap<i64, (f64, [f64; 2])> = BTreeMap::new();
    let l0 = Belief::from_eta(params.eta0).llr;
    frontier.insert(key(l0), (l0, [params.eta0, 1.0 - params.eta0]));
    let mut absorbed = [[0.0f64; 2]; 2]; // [side][state]
    let (mut arrivals, mut sales_a, mut sales_b, mut welfare) = (0.0, 0.0, 0.0, 0.0);
    let mut nodes = 0usize;
    let kappa = params.kappa;
    let mut step = 0usize;
    loop {
        let mut next: BTreeMap<i64, (f64, [f64; 2])> = BTreeMap::new();
        for (_, (llr, mass)) in std::mem::take(&mut frontier) {
            nodes += 1;
            let belief = Belief::from_llr(llr);
            let lik = likelihoods_at(belief, params, kappa);
            if let Some(side) = absorption_side_with(belief, &lik, params, kappa, rule) {
                let s = match side {
                    Side::Up => 0,
                    Side::Down => 1,
                };
                absorbed[s][0] += mass[0];
                absorbed[s][1] += mass[1];
                continue;
            }
            if step == depth {
                next.insert(key(llr), (llr, mass));
                continue;
            }
            let total = mass[0] + mass[1];
            arrivals += total;
            let correct = mass[0] * lik.buy_a[0] + mass[1] * lik.buy_b[1];
            let search = mass[0] * lik.search[0] + mass[1] * lik.search[1];
            welfare += params.v_low * total + params.delta_gap * correct - kappa * search;
            for action in [Firm::A, Firm::B] {
                let l = lik.of(action);
                let m = [mass[0] * l[0], mass[1] * l[1]];
                if m[0] + m[1] == 0.0 {
                    continue;
                }
                match action {
                    Firm::A => sales_a += m[0] + m[1],
                    Firm::B => sales_b += m[0] + m[1],
                }
                let nl = if lik.is_flat() {
                    llr
                } else {
                    crate::beliefs::update_llr(llr, l[0], l[1], action)?
                };
                let e = next.entry(key(nl)).or_insert((nl, [0.0, 0.0]));
                e.1[0] += m[0];
                e.1[1] += m[1];
            }
        }
        frontier = next;
        if frontier.is_empty() || step == depth {
            break;
        }
        step += 1;
    }
    let truncation: f64 = frontier.values().map(|(_, m)| m[0] + m[1]).sum();
    let p_wrong = absorbed[0][1] + absorbed[1][0];
    let prior = [params.eta0, 1.0 - params.eta0];
    Ok(ChainResult {
        p_wrong,
        p_wrong_upper: p_wrong + truncation,
        p_up: absorbed[0][0] + absorbed[0][1],
        p_down: absorbed[1][0] + absorbed[1][1],
        p_up_given: [absorbed[0][0] / prior[0], absorbed[0][1] / prior[1]],
        expected_arrivals: arrivals,
        expected_sales_a: sales_a,
        expected_sales_b: sales_b,
        expected_welfare: welfare,
        truncation_mass: truncation,
        truncation_warning: truncation >= CHAIN_TRUNCATION_LIMIT,
        nodes_visited: nodes,
    })
}

/// Axes of a sweep; every combination is one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    pub q: Vec<f64>,
    pub kappa: Vec<f64>,
    pub lambda: Vec<f64>,
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
    pub r: Vec<f64>,
    pub alpha: Vec<f64>,
    pub prices: Vec<[f64; 2]>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            q: vec![0.8],
            kappa: vec![0.05],
            lambda: vec![1.0],
            phi: vec![0.5],
            mu: vec![0.0],
            r: vec![0.8],
            alpha: vec![0.0],
            prices: vec![[0.3, 0.3]],
        }
    }
}

impl SweepGrid {
    pub fn cells(&self, base: &ModelParams) -> Vec<ModelParams> {
        let mut out = Vec::new();
        for &q in &self.q {
            for &kappa in &self.kappa {
                for &lambda in &self.lambda {
                    for &phi in &self.phi {
                        for &mu in &self.mu {
                            for &r in &self.r {
                                for &alpha in &self.alpha {
                                    for &[p_a, p_b] in &self.prices {
                                        out.push(ModelParams {
                                            q,
                                            kappa,
                                            lambda_rate: lambda,
                                            first_visit_prob: phi,
                                            review_mu: mu,
                                            review_r: r,
                                            calvo_hazard: alpha,
                                            p_a,
                                            p_b,
                                            ..base.clone()
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// One sweep cell, in the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub q: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub phi: f64,
    pub mu: f64,
    pub r: f64,
    pub alpha: f64,
    pub p_a: f64,
    pub p_b: f64,
    #[serde(rename = "R")]
    pub runs: usize,
    pub n_censored: usize,
    pub p_wrong: f64,
    pub p_wrong_se: f64,
    pub p_up: f64,
    pub mean_arrivals: f64,
    pub mean_time: f64,
    pub pi_a: f64,
    pub pi_b: f64,
    pub welfare: f64,
    pub welfare_se: f64,
    pub status: String,
}

pub const SWEEP_COLUMNS: [&str; 21] = [
    "q",
    "kappa",
    "lambda",
    "phi",
    "mu",
    "r",
    "alpha",
    "p_a",
    "p_b",
    "R",
    "n_censored",
    "p_wrong",
    "p_wrong_se",
    "p_up",
    "mean_arrivals",
    "mean_time",
    "pi_a",
    "pi_b",
    "welfare",
    "welfare_se",
    "status",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub row: SweepRow,
    pub report: Option<AbsorptionReport>,
}

/// Every cell reuses the same run-indexed streams, so cells are CRN-paired.
pub fn sweep(
    grid: &SweepGrid,
    base: &ModelParams,
    runs: usize,
    seed: u64,
    rule: AbsorptionRule,
) -> Result<Vec<SweepCell>> {
    let cells = grid.cells(base);
    if cells.is_empty() {
        return Err(Error::Domain("sweep grid is empty".into()));
    }
    let mut out = Vec::with_capacity(cells.len());
    for params in cells {
        let mut row = SweepRow {
            q: params.q,
            kappa: params.kappa,
            lambda: params.lambda_rate,
            phi: params.first_visit_prob,
            mu: params.review_mu,
            r: params.review_r,
            alpha: params.calvo_hazard,
            p_a: params.p_a,
            p_b: params.p_b,
            runs,
            n_censored: 0,
            p_wrong: f64::NAN,
            p_wrong_se: f64::NAN,
            p_up: f64::NAN,
            mean_arrivals: f64::NAN,
            mean_time: f64::NAN,
            pi_a: f64::NAN,
            pi_b: f64::NAN,
            welfare: f64::NAN,
            welfare_se: f64::NAN,
            status: "ok".into(),
        };
        if let Err(e) = params.validate() {
            row.status = format!("invalid: {e}");
            out.push(SweepCell { row, report: None });
            continue;
        }
        if let Err(Error::DegenerateThreshold { side, .. }) =
            cascade_bounds(&params, BoundaryVariant::VisitSymmetric)
        {
            row.status = format!("degenerate_{side}");
        }
        let mut config = RunConfig::new(params.clone(), seed);
        config.rule = rule;
        match estimate_absorption_with(&config, runs) {
            Ok(rep) => {
                let prof = ProfitEstimate::from_report(&rep);
                row.n_censored = rep.n_censored;
                row.p_wrong = rep.p_wrong.mean;
                row.p_wrong_se = rep.p_wrong.std_error;
                row.p_up = rep.p_up.mean;
                row.mean_arrivals = rep.mean_arrivals.mean;
                row.mean_time = rep.mean_time.mean;
                row.pi_a = prof.pi_a.mean;
                row.pi_b = prof.pi_b.mean;
                row.welfare = rep.welfare.mean;
                row.welfare_se = rep.welfare.std_error;
                out.push(SweepCell {
                    row,
                    report: Some(rep),
                });
            }
            Err(e) => {
                row.status = format!("failed: {e}");
                out.push(SweepCell { row, report: None });
            }
        }
    }
    Ok(out)
}
