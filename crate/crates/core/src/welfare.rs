//! Welfare accounting: per-arrival welfare, continuation value on a belief
//! grid, the Pigouvian search subsidy and the welfare-gap decomposition.
//!
//! Continuation welfare follows the until-absorption convention: absorbing
//! beliefs carry value zero and the purchase that enters an absorbing state is
//! counted in the step that produces it. Monte Carlo welfare tallies use the
//! same convention, so W(η0) is directly comparable with simulated welfare.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beliefs::{
    cascade_bounds, choice, likelihoods_at, signal_llr, stay_margin, update_llr, ActionLikelihoods,
    Belief, CascadeBounds, Choice, TIE_TOL,
};
use crate::engine::{run_validated, RunConfig};
use crate::error::{Error, Result};
use crate::estimators::MCStats;
use crate::params::{BoundaryVariant, Firm, ModelParams};

pub const DEFAULT_GRID_POINTS: usize = 2001;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 1_000_000;

fn signal_prob_a(eta: f64, q: f64) -> f64 {
    eta * q + (1.0 - eta) * (1.0 - q)
}

fn welfare_from(lik: &ActionLikelihoods, eta: f64, params: &ModelParams) -> f64 {
    let correct = eta * lik.buy_a[0] + (1.0 - eta) * lik.buy_b[1];
    params.v_low + params.delta_gap * correct - params.kappa * lik.search_mixture(eta)
}

/// Expected welfare of one arrival at public belief `eta`.
pub fn per_arrival_welfare(eta: f64, params: &ModelParams) -> f64 {
    let lik = likelihoods_at(Belief::from_eta(eta), params, params.kappa);
    welfare_from(&lik, eta, params)
}

/// Consumer behaviour: private search cost, optionally lowered by a subsidy.
/// Welfare always charges the full search cost; subsidies are transfers.
#[derive(Debug, Clone)]
struct Policy {
    params: ModelParams,
    subsidy: Option<Arc<SubsidySchedule>>,
}

impl Policy {
    fn kappa(&self, eta: f64) -> f64 {
        match &self.subsidy {
            Some(s) => (self.params.kappa - s.at(eta)).max(0.0),
            None => self.params.kappa,
        }
    }

    fn likelihoods(&self, belief: Belief) -> ActionLikelihoods {
        likelihoods_at(belief, &self.params, self.kappa(belief.eta()))
    }

    fn welfare(&self, eta: f64) -> f64 {
        welfare_from(&self.likelihoods(Belief::from_eta(eta)), eta, &self.params)
    }

    fn is_absorbing(&self, belief: Belief) -> bool {
        !belief.llr.is_finite() || self.likelihoods(belief).is_flat()
    }

    /// Choice pattern of the four visit/signal cells plus the absorbing flag.
    /// W is smooth in η only where this pattern is constant.
    fn signature(&self, belief: Belief) -> Signature {
        let big_l = signal_llr(self.params.q);
        let kappa = self.kappa(belief.eta());
        let mut s = [0u8; 5];
        let mut k = 0;
        for visit in [Firm::A, Firm::B] {
            for shift in [big_l, -big_l] {
                let x = Belief::from_llr(belief.llr + shift);
                s[k] = match choice(x, visit, &self.params, kappa) {
                    Choice::Stay => 0,
                    Choice::Switch => 1,
                    Choice::Indifferent => 2,
                };
                k += 1;
            }
        }
        s[4] = self.is_absorbing(belief) as u8;
        s
    }

    /// Post-purchase beliefs and their η-mixture probabilities.
    fn successors(&self, belief: Belief) -> Vec<(f64, f64)> {
        let lik = self.likelihoods(belief);
        let eta = belief.eta();
        let mut out = Vec::with_capacity(2);
        for firm in [Firm::A, Firm::B] {
            let p = lik.mixture(firm, eta);
            if p <= 0.0 {
                continue;
            }
            let l = lik.of(firm);
            if let Ok(llr) = update_llr(belief.llr, l[0], l[1], firm) {
                out.push((Belief::from_llr(llr).eta(), p));
            }
        }
        out
    }
}

type Signature = [u8; 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareValue {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub absorbing: Vec<bool>,
    pub bounds: Option<CascadeBounds>,
    pub residual: f64,
    pub iterations: usize,
    /// Half a grid cell: the largest distance between a band edge and the
    /// grid point that represents it.
    pub snap_error: f64,
    pub params: ModelParams,
    /// Schedule the consumers were facing, if any.
    pub subsidy: Option<SubsidySchedule>,
    #[serde(skip)]
    rows: Vec<Row>,
    #[serde(skip)]
    sigs: Vec<Signature>,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Row {
    w: f64,
    terms: Vec<(usize, f64)>,
}

impl WelfareValue {
    fn policy(&self) -> Policy {
        Policy {
            params: self.params.clone(),
            subsidy: self.subsidy.clone().map(Arc::new),
        }
    }

    /// W at an arbitrary belief, interpolating only between grid points that
    /// share the belief's choice pattern.
    pub fn at(&self, eta: f64) -> f64 {
        let pol = self.policy();
        let terms = interp_terms(&self.absorbing, eta, &pol, &self.sigs, 1);
        terms.iter().map(|&(j, c)| c * self.values[j]).sum::<f64>()
            + bellman_constant(eta, &pol, &self.sigs)
    }

    /// max_i |W_i − (w_i + Σ P·W)| for the stored values.
    pub fn bellman_residual(&self) -> f64 {
        apply(&self.rows, &self.values)
            .iter()
            .zip(&self.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// One extra Bellman sweep applied to the stored values.
    pub fn bellman_step(&self) -> Vec<f64> {
        apply(&self.rows, &self.values)
    }
}

fn apply(rows: &[Row], values: &[f64]) -> Vec<f64> {
    rows.iter()
        .map(|r| r.w + r.terms.iter().map(|&(j, c)| c * values[j]).sum::<f64>())
        .collect()
}

/// Position of `eta` on the uniform grid: lower index and fractional offset.
fn locate(eta: f64, n: usize) -> (usize, f64) {
    let pos = eta * (n - 1) as f64;
    let lo = (pos.floor() as usize).min(n - 2);
    (lo, pos - lo as f64)
}

/// Linear weights expressing W(eta) through grid values. When neither
/// neighbour shares the signature, one Bellman step is taken at `eta` itself
/// (if `depth > 0`); its constant part is returned by `bellman_constant`.
fn interp_terms(
    absorbing: &[bool],
    eta: f64,
    pol: &Policy,
    sigs: &[Signature],
    depth: u32,
) -> Vec<(usize, f64)> {
    let n = absorbing.len();
    let belief = Belief::from_eta(eta);
    if !(eta > 0.0 && eta < 1.0) || pol.is_absorbing(belief) {
        return Vec::new();
    }
    let (lo, t) = locate(eta, n);
    let hi = lo + 1;
    let single = |j: usize| {
        if absorbing[j] {
            Vec::new()
        } else {
            vec![(j, 1.0)]
        }
    };
    if t.abs() < 1e-12 {
        return single(lo);
    }
    if (1.0 - t).abs() < 1e-12 {
        return single(hi);
    }
    let sig = pol.signature(belief);
    match (sigs[lo] == sig, sigs[hi] == sig) {
        (true, true) => vec![(lo, 1.0 - t), (hi, t)],
        (true, false) => vec![(lo, 1.0)],
        (false, true) => vec![(hi, 1.0)],
        (false, false) if depth > 0 => {
            let mut out = Vec::new();
            for (target, p) in pol.successors(belief) {
                for (j, c) in interp_terms(absorbing, target, pol, sigs, depth - 1) {
                    out.push((j, p * c));
                }
            }
            out
        }
        (false, false) => single(if t < 0.5 { lo } else { hi }),
    }
}

fn bellman_constant(eta: f64, pol: &Policy, sigs: &[Signature]) -> f64 {
    let n = sigs.len();
    let belief = Belief::from_eta(eta);
    if !(eta > 0.0 && eta < 1.0) || pol.is_absorbing(belief) {
        return 0.0;
    }
    let (lo, t) = locate(eta, n);
    if t.abs() < 1e-12 || (1.0 - t).abs() < 1e-12 {
        return 0.0;
    }
    let sig = pol.signature(belief);
    if sigs[lo] == sig || sigs[lo + 1] == sig {
        return 0.0;
    }
    pol.welfare(eta)
}

/// Continuation welfare on a uniform belief grid by Jacobi iteration.
pub fn value_function_solve(
    params: &ModelParams,
    grid_points: usize,
    tol: f64,
    max_iters: usize,
) -> Result<WelfareValue> {
    value_function_solve_with(params, None, grid_points, tol, max_iters)
}

/// Continuation welfare when consumers face the search subsidy `subsidy`.
pub fn value_function_solve_with(
    params: &ModelParams,
    subsidy: Option<&SubsidySchedule>,
    grid_points: usize,
    tol: f64,
    max_iters: usize,
) -> Result<WelfareValue> {
    params.validate()?;
    if params.calvo_hazard > 0.0 || params.review_mu > 0.0 {
        return Err(Error::Domain(
            "the value function needs static prices and no reviews".into(),
        ));
    }
    if grid_points < 3 {
        return Err(Error::Domain("need at least 3 grid points".into()));
    }
    let pol = Policy {
        params: params.clone(),
        subsidy: subsidy.cloned().map(Arc::new),
    };
    let n = grid_points;
    let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let beliefs: Vec<Belief> = grid.iter().map(|&e| Belief::from_eta(e)).collect();
    let absorbing: Vec<bool> = beliefs.iter().map(|&b| pol.is_absorbing(b)).collect();
    let sigs: Vec<Signature> = beliefs.iter().map(|&b| pol.signature(b)).collect();

    let rows: Vec<Row> = (0..n)
        .into_par_iter()
        .map(|i| {
            if absorbing[i] {
                return Row::default();
            }
            let mut row = Row {
                w: pol.welfare(grid[i]),
                terms: Vec::new(),
            };
            for (target, p) in pol.successors(beliefs[i]) {
                row.w += p * bellman_constant(target, &pol, &sigs);
                for (j, c) in interp_terms(&absorbing, target, &pol, &sigs, 1) {
                    row.terms.push((j, p * c));
                }
            }
            row
        })
        .collect();

    let mut values = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let next = apply(&rows, &values);
        residual = next
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        values = next;
        if residual < tol {
            break;
        }
    }
    if !(residual < tol) {
        return Err(Error::NonConvergence {
            residual,
            iterations,
        });
    }
    Ok(WelfareValue {
        bounds: cascade_bounds(params, BoundaryVariant::VisitSymmetric).ok(),
        snap_error: 0.5 / (n - 1) as f64,
        grid,
        values,
        absorbing,
        residual,
        iterations,
        params: params.clone(),
        subsidy: subsidy.cloned(),
        rows,
        sigs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsidySchedule {
    pub grid: Vec<f64>,
    pub s_values: Vec<f64>,
    pub kappa: f64,
}

impl SubsidySchedule {
    pub fn zero(grid: Vec<f64>, kappa: f64) -> Self {
        let s_values = vec![0.0; grid.len()];
        SubsidySchedule {
            grid,
            s_values,
            kappa,
        }
    }

    /// Piecewise-linear subsidy, flat beyond the grid ends.
    pub fn at(&self, eta: f64) -> f64 {
        let g = &self.grid;
        if g.is_empty() {
            return 0.0;
        }
        if eta <= g[0] {
            return self.s_values[0];
        }
        if eta >= g[g.len() - 1] {
            return self.s_values[g.len() - 1];
        }
        let k = g.partition_point(|&x| x <= eta);
        let (x0, x1) = (g[k - 1], g[k]);
        let t = (eta - x0) / (x1 - x0);
        self.s_values[k - 1] + t * (self.s_values[k] - self.s_values[k - 1])
    }
}

/// Per-search subsidy equal to the informational externality of a marginal
/// search. Marginal cells are visit/signal pairs that buy at the visited firm
/// only because search costs κ (stay margin in [0, κ)); the externality of
/// such a cell is W after a purchase of the other firm minus W after a
/// purchase at the visited firm, and cells are averaged by occurrence
/// probability under the η-mixture.
pub fn pigouvian_subsidy(value: &WelfareValue, params: &ModelParams) -> SubsidySchedule {
    let kappa = params.kappa;
    let grid = value.grid.clone();
    if !(kappa > 0.0) {
        return SubsidySchedule::zero(grid, kappa);
    }
    let big_l = signal_llr(params.q);
    let pol = value.policy();
    let s_values = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            if value.absorbing[i] {
                return 0.0;
            }
            let eta = grid[i];
            let belief = Belief::from_eta(eta);
            let lik = pol.likelihoods(belief);
            let after = |firm: Firm| -> Option<f64> {
                let l = lik.of(firm);
                update_llr(belief.llr, l[0], l[1], firm)
                    .ok()
                    .map(|llr| value.at(Belief::from_llr(llr).eta()))
            };
            let w_after = [after(Firm::A), after(Firm::B)];
            let ps_a = signal_prob_a(eta, params.q);
            let (mut num, mut den) = (0.0, 0.0);
            for visit in [Firm::A, Firm::B] {
                let wv = params.visit_prob(visit);
                if wv == 0.0 {
                    continue;
                }
                for (shift, ps) in [(big_l, ps_a), (-big_l, 1.0 - ps_a)] {
                    let x = Belief::from_llr(belief.llr + shift);
                    let m = stay_margin(x, visit, params, kappa);
                    if !(m >= -TIE_TOL && m < kappa) {
                        continue;
                    }
                    let (Some(there), Some(here)) =
                        (w_after[visit.other() as usize], w_after[visit as usize])
                    else {
                        continue;
                    };
                    let weight = wv * ps;
                    num += weight * (there - here);
                    den += weight;
                }
            }
            if den > 0.0 {
                (num / den).clamp(0.0, kappa)
            } else {
                0.0
            }
        })
        .collect();
    SubsidySchedule {
        grid,
        s_values,
        kappa,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareDecomposition {
    /// Planner-arm welfare minus evaluated-arm welfare, per run.
    pub total_gap: MCStats,
    pub wrong_purchases_component: MCStats,
    pub excess_search_component: MCStats,
    /// (v_L + Δ) times the gap in purchases counted before absorption.
    pub horizon_residual: MCStats,
    pub welfare_planner: MCStats,
    pub welfare_evaluated: MCStats,
    pub subsidy_evaluated: bool,
}

/// CRN-paired comparison of the planner arm (Pigouvian subsidy) against the
/// evaluated arm: the given schedule, or private behaviour when none.
pub fn welfare_gap_decompose(
    params: &ModelParams,
    subsidy: Option<Arc<SubsidySchedule>>,
    runs: usize,
    seed: u64,
) -> Result<WelfareDecomposition> {
    if runs < 1 {
        return Err(Error::Domain("runs must be at least 1".into()));
    }
    let planner = if params.kappa > 0.0 {
        let value =
            value_function_solve(params, DEFAULT_GRID_POINTS, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
        Some(Arc::new(pigouvian_subsidy(&value, params)))
    } else {
        None
    };
    welfare_gap_between(params, planner, subsidy, runs, seed)
}

/// Decomposition with an explicit planner schedule.
pub fn welfare_gap_between(
    params: &ModelParams,
    planner: Option<Arc<SubsidySchedule>>,
    evaluated: Option<Arc<SubsidySchedule>>,
    runs: usize,
    seed: u64,
) -> Result<WelfareDecomposition> {
    let mut plan_cfg = RunConfig::new(params.clone(), seed);
    plan_cfg.subsidy = planner;
    plan_cfg.validate()?;
    let mut eval_cfg = RunConfig::new(params.clone(), seed);
    let subsidy_evaluated = evaluated.is_some();
    eval_cfg.subsidy = evaluated;
    eval_cfg.validate()?;

    let pairs: Vec<_> = (0..runs as u64)
        .into_par_iter()
        .map(|i| (run_validated(&plan_cfg, i), run_validated(&eval_cfg, i)))
        .collect();
    let censored = pairs
        .iter()
        .filter(|(p, e)| p.censored() || e.censored())
        .count();
    let col = |f: &dyn Fn(&crate::engine::RunOutcome, &crate::engine::RunOutcome) -> f64| {
        let xs: Vec<f64> = pairs.iter().map(|(p, e)| f(p, e)).collect();
        MCStats::from_values(&xs, censored)
    };
    let d = params.delta_gap;
    let k = params.kappa;
    let unit = params.v_low + params.delta_gap;
    Ok(WelfareDecomposition {
        total_gap: col(&|p, e| p.welfare - e.welfare),
        wrong_purchases_component: col(&|p, e| {
            d * (e.low_quality_purchases() as f64 - p.low_quality_purchases() as f64)
        }),
        excess_search_component: col(&|p, e| k * (e.searches as f64 - p.searches as f64)),
        horizon_residual: col(&|p, e| {
            let np = (p.sales_a + p.sales_b) as f64;
            let ne = (e.sales_a + e.sales_b) as f64;
            unit * (np - ne)
        }),
        welfare_planner: col(&|p, _| p.welfare),
        welfare_evaluated: col(&|_, e| e.welfare),
        subsidy_evaluated,
    })
}
