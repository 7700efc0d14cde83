use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Firm {
    A,
    B,
}

impl Firm {
    pub fn other(self) -> Firm {
        match self {
            Firm::A => Firm::B,
            Firm::B => Firm::A,
        }
    }
}

impl fmt::Display for Firm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Firm::A => write!(f, "A"),
            Firm::B => write!(f, "B"),
        }
    }
}

/// Which firm truly sells the high-quality product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum State {
    AHigh,
    BHigh,
}

impl State {
    pub const BOTH: [State; 2] = [State::AHigh, State::BHigh];

    pub fn idx(self) -> usize {
        match self {
            State::AHigh => 0,
            State::BHigh => 1,
        }
    }

    pub fn high_firm(self) -> Firm {
        match self {
            State::AHigh => Firm::A,
            State::BHigh => Firm::B,
        }
    }

    pub fn swapped(self) -> State {
        match self {
            State::AHigh => State::BHigh,
            State::BHigh => State::AHigh,
        }
    }
}

/// Direction of a cascade: `Up` favours firm A, `Down` favours firm B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Up,
    Down,
}

impl Side {
    pub fn favours(self) -> Firm {
        match self {
            Side::Up => Firm::A,
            Side::Down => Firm::B,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Up => write!(f, "up"),
            Side::Down => write!(f, "down"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryVariant {
    /// One cutoff shared by both boundaries.
    SingleThreshold,
    /// Visit-specific cutoffs: the up boundary is where a first-visit-A consumer
    /// stays on a B signal, the down boundary where a first-visit-B consumer stays
    /// on an A signal.
    #[default]
    VisitSymmetric,
}

impl fmt::Display for BoundaryVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryVariant::SingleThreshold => write!(f, "single_threshold"),
            BoundaryVariant::VisitSymmetric => write!(f, "visit_symmetric"),
        }
    }
}

/// How a trajectory decides it has stopped learning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsorptionRule {
    /// Absorbed once the purchase likelihoods no longer depend on the state.
    #[default]
    LikelihoodFlat,
    /// Absorbed once the belief enters the analytic bands of the given variant,
    /// or the likelihoods are flat, whichever comes first.
    AnalyticBands(BoundaryVariant),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub q: f64,
    pub kappa: f64,
    pub lambda_rate: f64,
    pub delta_gap: f64,
    pub v_low: f64,
    pub first_visit_prob: f64,
    pub p_a: f64,
    pub p_b: f64,
    pub p_max: f64,
    pub review_mu: f64,
    pub review_r: f64,
    pub calvo_hazard: f64,
    pub eta0: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            q: 0.8,
            kappa: 0.05,
            lambda_rate: 1.0,
            delta_gap: 1.0,
            v_low: 0.0,
            first_visit_prob: 0.5,
            p_a: 0.3,
            p_b: 0.3,
            p_max: 1.0,
            review_mu: 0.0,
            review_r: 0.8,
            calvo_hazard: 0.0,
            eta0: 0.5,
        }
    }
}

impl ModelParams {
    pub fn baseline(q: f64, kappa: f64) -> Self {
        ModelParams {
            q,
            kappa,
            ..Default::default()
        }
    }

    pub fn with_prices(mut self, p_a: f64, p_b: f64) -> Self {
        self.p_a = p_a;
        self.p_b = p_b;
        self
    }

    pub fn price_diff(&self) -> f64 {
        self.p_a - self.p_b
    }

    pub fn price(&self, firm: Firm) -> f64 {
        match firm {
            Firm::A => self.p_a,
            Firm::B => self.p_b,
        }
    }

    pub fn set_price(&mut self, firm: Firm, p: f64) {
        match firm {
            Firm::A => self.p_a = p,
            Firm::B => self.p_b = p,
        }
    }

    pub fn visit_prob(&self, firm: Firm) -> f64 {
        match firm {
            Firm::A => self.first_visit_prob,
            Firm::B => 1.0 - self.first_visit_prob,
        }
    }

    /// Same economy with the firm labels exchanged.
    pub fn mirrored(&self) -> Self {
        ModelParams {
            p_a: self.p_b,
            p_b: self.p_a,
            first_visit_prob: 1.0 - self.first_visit_prob,
            eta0: 1.0 - self.eta0,
            ..self.clone()
        }
    }

    /// Symmetric under a label swap: neutral prominence, equal prices, flat prior.
    pub fn is_symmetric(&self) -> bool {
        self.first_visit_prob == 0.5 && self.p_a == self.p_b && self.eta0 == 0.5
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(m));
        let finite = [
            ("q", self.q),
            ("kappa", self.kappa),
            ("lambda_rate", self.lambda_rate),
            ("delta_gap", self.delta_gap),
            ("v_low", self.v_low),
            ("first_visit_prob", self.first_visit_prob),
            ("p_a", self.p_a),
            ("p_b", self.p_b),
            ("p_max", self.p_max),
            ("review_mu", self.review_mu),
            ("review_r", self.review_r),
            ("calvo_hazard", self.calvo_hazard),
            ("eta0", self.eta0),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return bad(format!("{name} must be finite, got {v}"));
            }
        }
        if !(self.q > 0.5 && self.q < 1.0) {
            return bad(format!("q must lie in (1/2, 1), got {}", self.q));
        }
        if self.kappa < 0.0 {
            return bad(format!("kappa must be nonnegative, got {}", self.kappa));
        }
        if self.lambda_rate <= 0.0 {
            return bad(format!(
                "lambda_rate must be positive, got {}",
                self.lambda_rate
            ));
        }
        if self.delta_gap <= 0.0 {
            return bad(format!(
                "delta_gap must be positive, got {}",
                self.delta_gap
            ));
        }
        if !(0.0..=1.0).contains(&self.first_visit_prob) {
            return bad(format!(
                "first_visit_prob must lie in [0, 1], got {}",
                self.first_visit_prob
            ));
        }
        if self.p_max <= 0.0 {
            return bad(format!("p_max must be positive, got {}", self.p_max));
        }
        for (name, p) in [("p_a", self.p_a), ("p_b", self.p_b)] {
            if !(0.0..=self.p_max).contains(&p) {
                return bad(format!(
                    "{name} must lie in [0, p_max = {}], got {p}",
                    self.p_max
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.review_mu) {
            return bad(format!(
                "review_mu must lie in [0, 1], got {}",
                self.review_mu
            ));
        }
        if self.review_mu > 0.0 && !(self.review_r > 0.5 && self.review_r < 1.0) {
            return bad(format!(
                "review_r must lie in (1/2, 1) when reviews are on, got {}",
                self.review_r
            ));
        }
        if self.calvo_hazard < 0.0 {
            return bad(format!(
                "calvo_hazard must be nonnegative, got {}",
                self.calvo_hazard
            ));
        }
        if !(self.eta0 > 0.0 && self.eta0 < 1.0) {
            return bad(format!("eta0 must lie in (0, 1), got {}", self.eta0));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        ModelParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range() {
        let bad = |p: ModelParams| p.validate().is_err();
        let d = ModelParams::default;
        assert!(bad(ModelParams { q: 0.5, ..d() }));
        assert!(bad(ModelParams { p_a: 1.2, ..d() }));
        assert!(bad(ModelParams {
            review_mu: 0.5,
            review_r: 0.4,
            ..d()
        }));
        // accuracy is ignored while reviews are off
        assert!(!bad(ModelParams {
            review_r: 0.4,
            ..d()
        }));
    }

    #[test]
    fn mirror_is_involution_on_prices() {
        let p = ModelParams::default().with_prices(0.2, 0.4);
        let m = p.mirrored();
        assert_eq!((m.p_a, m.p_b), (0.4, 0.2));
        assert_eq!(m.mirrored().p_a, 0.2);
    }
}
