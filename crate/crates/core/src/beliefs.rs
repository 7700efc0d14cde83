//! Belief arithmetic: posteriors, consumer cutoffs, cascade boundaries,
//! action likelihoods and Bayes updates.
//!
//! Beliefs live in log-likelihood-ratio space. Every quantity that must be
//! exactly antisymmetric under a label swap (posterior margins, updates,
//! boundary LLRs) is built from odd primitives (`tanh`, negation, differences
//! of logs) so that mirrored economies produce bit-identical mirrored paths.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{AbsorptionRule, BoundaryVariant, Firm, ModelParams, Side, State};

/// Surplus margins within this distance of zero are exact indifference.
pub const TIE_TOL: f64 = 1e-12;
/// Likelihood gaps within this distance of zero are treated as uninformative.
pub const FLAT_TOL: f64 = 1e-12;

pub fn logit(eta: f64) -> f64 {
    eta.ln() - (-eta).ln_1p()
}

pub fn sigmoid(llr: f64) -> f64 {
    if llr >= 0.0 {
        1.0 / (1.0 + (-llr).exp())
    } else {
        let e = llr.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub llr: f64,
}

impl Belief {
    pub fn from_llr(llr: f64) -> Self {
        Belief { llr }
    }

    pub fn from_eta(eta: f64) -> Self {
        Belief { llr: logit(eta) }
    }

    pub fn eta(self) -> f64 {
        sigmoid(self.llr)
    }

    /// Belief that B is high, i.e. the same history read with swapped labels.
    pub fn swapped(self) -> Self {
        Belief { llr: -self.llr }
    }

    /// 2η − 1, computed as an odd function of the LLR.
    pub fn tilt(self) -> f64 {
        (0.5 * self.llr).tanh()
    }
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.5 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("q must lie in (1/2, 1), got {q}")))
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "belief must lie in [0, 1], got {eta}"
        )))
    }
}

/// P(A high | signal A, prior η).
pub fn posterior_up(eta: f64, q: f64) -> Result<f64> {
    check_q(q)?;
    check_eta(eta)?;
    Ok(q * eta / (q * eta + (1.0 - q) * (1.0 - eta)))
}

/// P(A high | signal B, prior η).
pub fn posterior_down(eta: f64, q: f64) -> Result<f64> {
    check_q(q)?;
    check_eta(eta)?;
    Ok((1.0 - q) * eta / ((1.0 - q) * eta + q * (1.0 - eta)))
}

/// Posterior at which a first-visit-A consumer is indifferent between buying
/// A outright and paying κ to switch. Unclamped.
pub fn eta_star(price_diff: f64, kappa: f64, delta_gap: f64) -> f64 {
    0.5 + (price_diff - kappa) / (2.0 * delta_gap)
}

/// Expected surplus of A over B at posterior x.
pub fn net_surplus(x: f64, price_diff: f64, delta_gap: f64) -> f64 {
    (2.0 * x - 1.0) * delta_gap - price_diff
}

/// Search costs at or above this level keep a first-visit-A consumer at A.
pub fn never_search_bound(price_diff: f64, delta_gap: f64) -> f64 {
    delta_gap + price_diff
}

/// LLR of the signal step, ln(q/(1−q)).
pub fn signal_llr(q: f64) -> f64 {
    q.ln() - (1.0 - q).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeBounds {
    pub eta_bar: f64,
    pub eta_under: f64,
    pub variant: BoundaryVariant,
    /// The same boundaries in LLR space, built antisymmetrically.
    pub llr_bar: f64,
    pub llr_under: f64,
}

/// Inverts `posterior_down` at target y.
fn invert_down(y: f64, q: f64) -> f64 {
    y * q / ((1.0 - q) + y * (2.0 * q - 1.0))
}

/// Inverts `posterior_up` at target y.
fn invert_up(y: f64, q: f64) -> f64 {
    y * (1.0 - q) / (q - y * (2.0 * q - 1.0))
}

fn collapse(side: Side, s: f64) -> Result<()> {
    if s <= 0.0 || s >= 1.0 {
        Err(Error::DegenerateThreshold {
            side,
            eta_star: s.clamp(0.0, 1.0),
        })
    } else {
        Ok(())
    }
}

pub fn cascade_bounds(params: &ModelParams, variant: BoundaryVariant) -> Result<CascadeBounds> {
    check_q(params.q)?;
    let q = params.q;
    let d = params.price_diff();
    let big_l = signal_llr(q);
    let s_up = eta_star(d, params.kappa, params.delta_gap);
    match variant {
        BoundaryVariant::SingleThreshold => {
            // one cutoff: a collapse at 0 swallows the belief line into the up
            // band, a collapse at 1 into the down band
            let side = if s_up <= 0.0 { Side::Up } else { Side::Down };
            collapse(side, s_up)?;
            Ok(CascadeBounds {
                eta_bar: invert_down(s_up, q),
                eta_under: invert_up(s_up, q),
                variant,
                llr_bar: logit(s_up) + big_l,
                llr_under: logit(s_up) - big_l,
            })
        }
        BoundaryVariant::VisitSymmetric => {
            let s_down = eta_star(-d, params.kappa, params.delta_gap);
            collapse(Side::Up, s_up)?;
            collapse(Side::Down, s_down)?;
            Ok(CascadeBounds {
                eta_bar: invert_down(s_up, q),
                eta_under: 1.0 - invert_down(s_down, q),
                variant,
                llr_bar: logit(s_up) + big_l,
                llr_under: -(logit(s_down) + big_l),
            })
        }
    }
}

/// Band edges in LLR space at an arbitrary search cost, clamping collapsed
/// cutoffs to ±∞ instead of failing.
pub fn band_llrs(params: &ModelParams, kappa: f64, variant: BoundaryVariant) -> (f64, f64) {
    let d = params.price_diff();
    let big_l = signal_llr(params.q);
    let s_up = eta_star(d, kappa, params.delta_gap).clamp(0.0, 1.0);
    match variant {
        BoundaryVariant::SingleThreshold => (logit(s_up) + big_l, logit(s_up) - big_l),
        BoundaryVariant::VisitSymmetric => {
            let s_down = eta_star(-d, kappa, params.delta_gap).clamp(0.0, 1.0);
            (logit(s_up) + big_l, -(logit(s_down) + big_l))
        }
    }
}

/// Side of a belief that sits inside both bands: the band it penetrates more
/// deeply, measured in LLR. Exact ties go up.
pub fn overlap_side(llr: f64, llr_bar: f64, llr_under: f64) -> Side {
    let into_up = llr - llr_bar;
    let into_down = llr_under - llr;
    if into_down - into_up > TIE_TOL || (into_down.is_infinite() && into_up.is_finite()) {
        Side::Down
    } else {
        Side::Up
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Herd {
    None,
    HerdUp,
    HerdDown,
}

pub fn immediate_herd(params: &ModelParams, bounds: &CascadeBounds) -> Herd {
    let l0 = logit(params.eta0);
    let up = l0 >= bounds.llr_bar;
    let down = l0 <= bounds.llr_under;
    match (up, down) {
        (true, true) => match overlap_side(l0, bounds.llr_bar, bounds.llr_under) {
            Side::Up => Herd::HerdUp,
            Side::Down => Herd::HerdDown,
        },
        (true, false) => Herd::HerdUp,
        (false, true) => Herd::HerdDown,
        (false, false) => Herd::None,
    }
}

/// Surplus of buying at the visited firm over paying `kappa` to switch.
pub fn stay_margin(x: Belief, visit: Firm, params: &ModelParams, kappa: f64) -> f64 {
    let z = x.tilt();
    let d = params.price_diff();
    match visit {
        Firm::A => z * params.delta_gap - d + kappa,
        Firm::B => -z * params.delta_gap + d + kappa,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    Stay,
    Switch,
    Indifferent,
}

impl Choice {
    pub fn stay_prob(self) -> f64 {
        match self {
            Choice::Stay => 1.0,
            Choice::Switch => 0.0,
            Choice::Indifferent => 0.5,
        }
    }
}

pub fn choice(x: Belief, visit: Firm, params: &ModelParams, kappa: f64) -> Choice {
    let m = stay_margin(x, visit, params, kappa);
    if m > TIE_TOL {
        Choice::Stay
    } else if m < -TIE_TOL {
        Choice::Switch
    } else {
        Choice::Indifferent
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    BuyHere,
    SearchThenBuyA,
    SearchThenBuyB,
}

impl Decision {
    pub fn searched(self) -> bool {
        !matches!(self, Decision::BuyHere)
    }

    pub fn purchase(self, visit: Firm) -> Firm {
        match self {
            Decision::BuyHere => visit,
            Decision::SearchThenBuyA => Firm::A,
            Decision::SearchThenBuyB => Firm::B,
        }
    }
}

/// After paying to inspect both firms the consumer buys the better net
/// surplus; on an exact tie the firm searched for.
fn after_search(x: Belief, visit: Firm, params: &ModelParams) -> Decision {
    let gain_a = x.tilt() * params.delta_gap - params.price_diff();
    let firm = if gain_a > TIE_TOL {
        Firm::A
    } else if gain_a < -TIE_TOL {
        Firm::B
    } else {
        visit.other()
    };
    match firm {
        Firm::A => Decision::SearchThenBuyA,
        Firm::B => Decision::SearchThenBuyB,
    }
}

/// Resolves a choice given the outcome of the indifference coin (`stay_on_tie`).
pub fn resolve(
    c: Choice,
    x: Belief,
    visit: Firm,
    params: &ModelParams,
    stay_on_tie: bool,
) -> Decision {
    let stay = match c {
        Choice::Stay => true,
        Choice::Switch => false,
        Choice::Indifferent => stay_on_tie,
    };
    if stay {
        Decision::BuyHere
    } else {
        after_search(x, visit, params)
    }
}

pub fn consumer_decision<R: Rng + ?Sized>(
    posterior_x: Belief,
    visit: Firm,
    params: &ModelParams,
    rng: &mut R,
) -> Decision {
    let c = choice(posterior_x, visit, params, params.kappa);
    let coin = matches!(c, Choice::Indifferent) && rng.random::<f64>() < 0.5;
    resolve(c, posterior_x, visit, params, coin)
}

/// Exact purchase and search probabilities of one arrival, per state.
/// Arrays are indexed by `State::idx()`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionLikelihoods {
    pub buy_a: [f64; 2],
    pub buy_b: [f64; 2],
    pub search: [f64; 2],
    /// P(buy A | first visit v, state), for v = A, B.
    pub buy_a_given_visit: [[f64; 2]; 2],
    pub visit_weight: [f64; 2],
}

impl ActionLikelihoods {
    pub fn of(&self, action: Firm) -> [f64; 2] {
        match action {
            Firm::A => self.buy_a,
            Firm::B => self.buy_b,
        }
    }

    /// Purchase probabilities no longer depend on the state, for every visit
    /// type that occurs.
    pub fn is_flat(&self) -> bool {
        (0..2).all(|v| {
            self.visit_weight[v] == 0.0
                || (self.buy_a_given_visit[v][0] - self.buy_a_given_visit[v][1]).abs() <= FLAT_TOL
        })
    }

    /// Probability of `action` when A is high with probability `eta`.
    pub fn mixture(&self, action: Firm, eta: f64) -> f64 {
        let l = self.of(action);
        eta * l[0] + (1.0 - eta) * l[1]
    }

    pub fn search_mixture(&self, eta: f64) -> f64 {
        eta * self.search[0] + (1.0 - eta) * self.search[1]
    }
}

fn signal_prob(signal: Firm, state: State, q: f64) -> f64 {
    if signal == state.high_firm() {
        q
    } else {
        1.0 - q
    }
}

/// Likelihoods with an explicit search cost (the subsidy hook lowers it).
pub fn likelihoods_at(belief: Belief, params: &ModelParams, kappa: f64) -> ActionLikelihoods {
    let big_l = signal_llr(params.q);
    let mut out = ActionLikelihoods {
        buy_a: [0.0; 2],
        buy_b: [0.0; 2],
        search: [0.0; 2],
        buy_a_given_visit: [[0.0; 2]; 2],
        visit_weight: [params.visit_prob(Firm::A), params.visit_prob(Firm::B)],
    };
    for (vi, visit) in [Firm::A, Firm::B].into_iter().enumerate() {
        let w = out.visit_weight[vi];
        for signal in [Firm::A, Firm::B] {
            let x = match signal {
                Firm::A => Belief::from_llr(belief.llr + big_l),
                Firm::B => Belief::from_llr(belief.llr - big_l),
            };
            let stay = choice(x, visit, params, kappa).stay_prob();
            let leave = 1.0 - stay;
            for state in State::BOTH {
                let ps = signal_prob(signal, state, params.q);
                let s = state.idx();
                let (here, there) = (ps * stay, ps * leave);
                let (to_a, to_b) = match visit {
                    Firm::A => (here, there),
                    Firm::B => (there, here),
                };
                out.buy_a_given_visit[vi][s] += to_a;
                out.buy_a[s] += w * to_a;
                out.buy_b[s] += w * to_b;
                out.search[s] += w * there;
            }
        }
    }
    out
}

pub fn action_likelihoods(eta: Belief, params: &ModelParams) -> ActionLikelihoods {
    likelihoods_at(eta, params, params.kappa)
}

/// LLR update from likelihoods of the observed action under the two states.
pub fn update_llr(llr: f64, l_ahigh: f64, l_bhigh: f64, action: Firm) -> Result<f64> {
    if l_ahigh == 0.0 && l_bhigh == 0.0 {
        return Err(Error::UndefinedUpdate(action));
    }
    if l_ahigh == l_bhigh {
        return Ok(llr);
    }
    Ok(llr + (l_ahigh.ln() - l_bhigh.ln()))
}

pub fn bayes_update_action(eta: Belief, action: Firm, params: &ModelParams) -> Result<Belief> {
    let lik = action_likelihoods(eta, params).of(action);
    update_llr(eta.llr, lik[0], lik[1], action).map(Belief::from_llr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    /// Product the review is about (the one just purchased).
    pub product: Firm,
    pub positive: bool,
}

impl Review {
    /// Firm the review points to as high quality.
    pub fn favours(self) -> Firm {
        if self.positive {
            self.product
        } else {
            self.product.other()
        }
    }
}

pub fn review_llr(r: f64) -> f64 {
    r.ln() - (1.0 - r).ln()
}

pub fn bayes_update_review(eta: Belief, review: Review, params: &ModelParams) -> Result<Belief> {
    if params.review_mu <= 0.0 {
        return Err(Error::Domain("review update with review_mu = 0".into()));
    }
    let r = params.review_r;
    if !(r > 0.5 && r < 1.0) {
        return Err(Error::Domain(format!(
            "review_r must lie in (1/2, 1), got {r}"
        )));
    }
    let shift = review_llr(r);
    Ok(Belief::from_llr(match review.favours() {
        Firm::A => eta.llr + shift,
        Firm::B => eta.llr - shift,
    }))
}

/// Side of a flat belief: unanimous A or B purchases, or first-visit lock-in
/// classified by band depth.
fn flat_side(belief: Belief, lik: &ActionLikelihoods, params: &ModelParams, kappa: f64) -> Side {
    if lik.buy_a.iter().all(|&p| p >= 1.0 - FLAT_TOL) {
        Side::Up
    } else if lik.buy_b.iter().all(|&p| p >= 1.0 - FLAT_TOL) {
        Side::Down
    } else {
        let (bar, under) = band_llrs(params, kappa, BoundaryVariant::VisitSymmetric);
        overlap_side(belief.llr, bar, under)
    }
}

/// Whether a belief is absorbing under `rule`, and toward which firm.
pub fn absorption_side(
    belief: Belief,
    params: &ModelParams,
    kappa: f64,
    rule: AbsorptionRule,
) -> Option<Side> {
    let lik = likelihoods_at(belief, params, kappa);
    absorption_side_with(belief, &lik, params, kappa, rule)
}

pub fn absorption_side_with(
    belief: Belief,
    lik: &ActionLikelihoods,
    params: &ModelParams,
    kappa: f64,
    rule: AbsorptionRule,
) -> Option<Side> {
    match rule {
        AbsorptionRule::LikelihoodFlat => {
            lik.is_flat().then(|| flat_side(belief, lik, params, kappa))
        }
        AbsorptionRule::AnalyticBands(variant) => {
            let (bar, under) = band_llrs(params, kappa, variant);
            let up = belief.llr >= bar;
            let down = belief.llr <= under;
            match (up, down) {
                (true, true) => Some(overlap_side(belief.llr, bar, under)),
                (true, false) => Some(Side::Up),
                (false, true) => Some(Side::Down),
                (false, false) => lik.is_flat().then(|| flat_side(belief, lik, params, kappa)),
            }
        }
    }
}
