//! One market trajectory: Poisson arrivals, consumer choices, action-only
//! learning, optional reviews and Calvo resets.

use std::sync::Arc;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::beliefs::{
    absorption_side_with, choice, likelihoods_at, resolve, signal_llr, update_llr, Belief, Review,
    TIE_TOL,
};
use crate::equilibrium::PriceGrid;
use crate::error::{Error, Result};
use crate::params::{AbsorptionRule, Firm, ModelParams, Side, State};
use crate::rng::{rng_stream, Channel};
use crate::welfare::SubsidySchedule;

/// With reviews on, a run ends once the belief leaves [REVIEW_EDGE, 1 − REVIEW_EDGE].
pub const REVIEW_EDGE: f64 = 1e-9;
pub const DEFAULT_MAX_ARRIVALS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrueState {
    Fixed(State),
    DrawFromPrior,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: ModelParams,
    pub seed: u64,
    pub run_index: u64,
    pub max_arrivals: u64,
    pub true_state: TrueState,
    pub subsidy: Option<Arc<SubsidySchedule>>,
    pub record_path: bool,
    pub rule: AbsorptionRule,
    /// Grid searched by Calvo resets.
    pub reset_grid: PriceGrid,
    /// Run exactly this many events and ignore absorption (stationary sampling).
    pub horizon_events: Option<u64>,
    /// Read the State and Visit channels mirrored. Pair a run of `params`
    /// with a run of `params.mirrored()` and `label_swap = true` to obtain the
    /// same history with the firm labels exchanged.
    pub label_swap: bool,
}

impl RunConfig {
    pub fn new(params: ModelParams, seed: u64) -> Self {
        let reset_grid = PriceGrid::new(params.p_max, 0.01).unwrap_or(PriceGrid {
            p_max: params.p_max,
            step: params.p_max,
        });
        RunConfig {
            params,
            seed,
            run_index: 0,
            max_arrivals: DEFAULT_MAX_ARRIVALS,
            true_state: TrueState::DrawFromPrior,
            subsidy: None,
            record_path: false,
            rule: AbsorptionRule::default(),
            reset_grid,
            horizon_events: None,
            label_swap: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.max_arrivals < 1 {
            return Err(Error::Domain("max_arrivals must be at least 1".into()));
        }
        if let Some(s) = &self.subsidy {
            if s.s_values.len() != s.grid.len() || s.grid.is_empty() {
                return Err(Error::Domain(
                    "subsidy schedule grid and values differ in length".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Absorbed {
    No,
    Up,
    Down,
}

impl From<Option<Side>> for Absorbed {
    fn from(s: Option<Side>) -> Self {
        match s {
            None => Absorbed::No,
            Some(Side::Up) => Absorbed::Up,
            Some(Side::Down) => Absorbed::Down,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub belief: Belief,
    pub p_a: f64,
    pub p_b: f64,
    pub clock: f64,
    pub arrivals: u64,
    pub absorbed: Absorbed,
}

impl MarketState {
    pub fn price(&self, firm: Firm) -> f64 {
        match firm {
            Firm::A => self.p_a,
            Firm::B => self.p_b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbsorbedSide {
    Up,
    Down,
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Start,
    Arrival,
    Review,
    ResetA,
    ResetB,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            EventKind::Start => "start",
            EventKind::Arrival => "arrival",
            EventKind::Review => "review",
            EventKind::ResetA => "reset_a",
            EventKind::ResetB => "reset_b",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEvent {
    pub event_index: u64,
    pub time: f64,
    pub eta: f64,
    pub p_a: f64,
    pub p_b: f64,
    pub kind: EventKind,
    /// Purchase for arrivals, favoured firm for reviews.
    pub action: Option<Firm>,
    pub searched: bool,
}

impl PathEvent {
    pub fn action_label(&self) -> String {
        match (self.kind, self.action) {
            (EventKind::Review, Some(f)) => format!("review_{f}"),
            (_, Some(f)) => f.to_string(),
            (_, None) => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub absorbed_side: AbsorbedSide,
    pub true_state: State,
    pub wrong: bool,
    pub arrivals_to_absorption: u64,
    pub calendar_time: f64,
    pub sales_a: u64,
    pub sales_b: u64,
    pub searches: u64,
    pub search_cost_paid: f64,
    /// Transfers paid out under a subsidy schedule; not part of welfare.
    pub subsidy_paid: f64,
    pub high_quality_purchases: u64,
    pub welfare: f64,
    pub resets: u64,
    pub reviews: u64,
    pub final_belief: Belief,
    pub final_prices: (f64, f64),
    pub path: Option<Vec<PathEvent>>,
}

impl RunOutcome {
    pub fn censored(&self) -> bool {
        self.absorbed_side == AbsorbedSide::Censored
    }

    pub fn sales(&self, firm: Firm) -> u64 {
        match firm {
            Firm::A => self.sales_a,
            Firm::B => self.sales_b,
        }
    }

    pub fn low_quality_purchases(&self) -> u64 {
        self.sales_a + self.sales_b - self.high_quality_purchases
    }
}

/// Myopic Calvo reply: the grid price maximising price times the firm's
/// instantaneous expected share at the current belief. Ties go to the lower price.
pub fn calvo_reset_price(
    state: &MarketState,
    firm: Firm,
    params: &ModelParams,
    grid: &PriceGrid,
) -> f64 {
    let eta = state.belief.eta();
    let mut current = params.clone();
    current.p_a = state.p_a;
    current.p_b = state.p_b;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for p in grid.points() {
        current.set_price(firm, p);
        let lik = likelihoods_at(state.belief, &current, current.kappa);
        let value = p * lik.mixture(firm, eta);
        if value > best.0 + TIE_TOL {
            best = (value, p);
        }
    }
    best.1
}

fn review_absorption(belief: Belief) -> Option<Side> {
    let eta = belief.eta();
    if eta > 1.0 - REVIEW_EDGE {
        Some(Side::Up)
    } else if eta < REVIEW_EDGE {
        Some(Side::Down)
    } else {
        None
    }
}

pub fn simulate_run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    Ok(run_validated(config, config.run_index))
}

/// Runs one trajectory for `run_index`, assuming `config` already validated.
pub fn run_validated(config: &RunConfig, run_index: u64) -> RunOutcome {
    let params = &config.params;
    let seed = config.seed;
    let mut arrival_rng = rng_stream(seed, run_index, Channel::Arrival);
    let mut visit_rng = rng_stream(seed, run_index, Channel::Visit);
    let mut signal_rng = rng_stream(seed, run_index, Channel::Signal);
    let mut tie_rng = rng_stream(seed, run_index, Channel::Tie);
    let mut review_rng = rng_stream(seed, run_index, Channel::Review);
    let mut reset_rng = rng_stream(seed, run_index, Channel::Reset);
    let mut state_rng = rng_stream(seed, run_index, Channel::State);

    let truth = match config.true_state {
        TrueState::Fixed(s) => s,
        TrueState::DrawFromPrior => {
            let u: f64 = state_rng.random();
            let a_high = if config.label_swap {
                u >= 1.0 - params.eta0
            } else {
                u < params.eta0
            };
            if a_high {
                State::AHigh
            } else {
                State::BHigh
            }
        }
    };
    let high = truth.high_firm();
    let big_l = signal_llr(params.q);
    let reviews_on = params.review_mu > 0.0;
    let alpha = params.calvo_hazard;
    let total_rate = params.lambda_rate + 2.0 * alpha;

    let mut current = params.clone();
    let mut st = MarketState {
        belief: Belief::from_eta(params.eta0),
        p_a: params.p_a,
        p_b: params.p_b,
        clock: 0.0,
        arrivals: 0,
        absorbed: Absorbed::No,
    };
    let kappa_at = |belief: Belief| -> f64 {
        match &config.subsidy {
            Some(s) => (params.kappa - s.at(belief.eta())).max(0.0),
            None => params.kappa,
        }
    };
    let classify = |belief: Belief, current: &ModelParams| -> Absorbed {
        if reviews_on {
            return review_absorption(belief).into();
        }
        let kappa = kappa_at(belief);
        let lik = likelihoods_at(belief, current, kappa);
        absorption_side_with(belief, &lik, current, kappa, config.rule).into()
    };

    let mut path = config.record_path.then(Vec::new);
    let mut event_index = 0u64;
    let mut push = |path: &mut Option<Vec<PathEvent>>,
                    st: &MarketState,
                    kind: EventKind,
                    action: Option<Firm>,
                    searched: bool| {
        if let Some(p) = path.as_mut() {
            p.push(PathEvent {
                event_index,
                time: st.clock,
                eta: st.belief.eta(),
                p_a: st.p_a,
                p_b: st.p_b,
                kind,
                action,
                searched,
            });
        }
        event_index += 1;
    };

    let (mut sales_a, mut sales_b, mut searches, mut q_high) = (0u64, 0u64, 0u64, 0u64);
    let (mut subsidy_paid, mut resets, mut reviews, mut events) = (0.0, 0u64, 0u64, 0u64);

    push(&mut path, &st, EventKind::Start, None, false);
    st.absorbed = classify(st.belief, &current);

    loop {
        match config.horizon_events {
            Some(h) => {
                if events >= h {
                    break;
                }
            }
            None => {
                if st.absorbed != Absorbed::No || st.arrivals >= config.max_arrivals {
                    break;
                }
            }
        }
        let e: f64 = arrival_rng.sample(Exp1);
        st.clock += e / total_rate;
        events += 1;

        let mut reset_firm = None;
        if alpha > 0.0 {
            let u: f64 = reset_rng.random();
            let x = u * total_rate;
            if x >= params.lambda_rate {
                let first = if config.label_swap { Firm::B } else { Firm::A };
                reset_firm = Some(if x < params.lambda_rate + alpha {
                    first
                } else {
                    first.other()
                });
            }
        }

        if let Some(firm) = reset_firm {
            let p = calvo_reset_price(&st, firm, &current, &config.reset_grid);
            current.set_price(firm, p);
            match firm {
                Firm::A => st.p_a = p,
                Firm::B => st.p_b = p,
            }
            resets += 1;
            let kind = match firm {
                Firm::A => EventKind::ResetA,
                Firm::B => EventKind::ResetB,
            };
            push(&mut path, &st, kind, None, false);
        } else {
            let v: f64 = visit_rng.random();
            let phi = params.first_visit_prob;
            let visit = if config.label_swap {
                if v < 1.0 - phi {
                    Firm::B
                } else {
                    Firm::A
                }
            } else if v < phi {
                Firm::A
            } else {
                Firm::B
            };
            let w: f64 = signal_rng.random();
            let signal = if w < params.q { high } else { high.other() };
            let x = match signal {
                Firm::A => Belief::from_llr(st.belief.llr + big_l),
                Firm::B => Belief::from_llr(st.belief.llr - big_l),
            };
            let kappa = kappa_at(st.belief);
            let c = choice(x, visit, &current, kappa);
            let coin = if matches!(c, crate::beliefs::Choice::Indifferent) {
                tie_rng.random::<f64>() < 0.5
            } else {
                false
            };
            let decision = resolve(c, x, visit, &current, coin);
            let bought = decision.purchase(visit);
            match bought {
                Firm::A => sales_a += 1,
                Firm::B => sales_b += 1,
            }
            if decision.searched() {
                searches += 1;
                subsidy_paid += params.kappa - kappa;
            }
            if bought == high {
                q_high += 1;
            }
            st.arrivals += 1;

            let lik = likelihoods_at(st.belief, &current, kappa);
            if !lik.is_flat() {
                let l = lik.of(bought);
                st.belief = Belief::from_llr(
                    update_llr(st.belief.llr, l[0], l[1], bought)
                        .expect("observed purchase has positive likelihood"),
                );
            }
            push(
                &mut path,
                &st,
                EventKind::Arrival,
                Some(bought),
                decision.searched(),
            );

            if reviews_on {
                let g: f64 = review_rng.random();
                if g < params.review_mu {
                    let h: f64 = review_rng.random();
                    let accurate = h < params.review_r;
                    let review = Review {
                        product: bought,
                        positive: (bought == high) == accurate,
                    };
                    let shift = crate::beliefs::review_llr(params.review_r);
                    st.belief = Belief::from_llr(match review.favours() {
                        Firm::A => st.belief.llr + shift,
                        Firm::B => st.belief.llr - shift,
                    });
                    reviews += 1;
                    push(
                        &mut path,
                        &st,
                        EventKind::Review,
                        Some(review.favours()),
                        false,
                    );
                }
            }
        }

        st.absorbed = classify(st.belief, &current);
    }

    // In horizon mode the side is the state at the end of the horizon.
    let side = match st.absorbed {
        Absorbed::Up => AbsorbedSide::Up,
        Absorbed::Down => AbsorbedSide::Down,
        Absorbed::No => AbsorbedSide::Censored,
    };
    let wrong = match side {
        AbsorbedSide::Up => high != Firm::A,
        AbsorbedSide::Down => high != Firm::B,
        AbsorbedSide::Censored => false,
    };
    let search_cost_paid = params.kappa * searches as f64;
    let n = (sales_a + sales_b) as f64;
    let welfare = params.v_low * n + params.delta_gap * q_high as f64 - search_cost_paid;
    RunOutcome {
        absorbed_side: side,
        true_state: truth,
        wrong,
        arrivals_to_absorption: st.arrivals,
        calendar_time: st.clock,
        sales_a,
        sales_b,
        searches,
        search_cost_paid,
        subsidy_paid,
        high_quality_purchases: q_high,
        welfare,
        resets,
        reviews,
        final_belief: st.belief,
        final_prices: (st.p_a, st.p_b),
        path,
    }
}
