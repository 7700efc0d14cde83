//! Price-grid mixed-strategy solver, dispersion statistics and Calvo
//! stationary statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beliefs::absorption_side;
use crate::engine::{run_validated, EventKind, RunConfig, TrueState};
use crate::error::{Error, Result};
use crate::params::{AbsorptionRule, Firm, ModelParams, Side};

pub const SUPPORT_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceGrid {
    pub p_max: f64,
    pub step: f64,
}

impl PriceGrid {
    pub fn new(p_max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && p_max > 0.0) {
            return Err(Error::Domain(format!(
                "price grid needs positive p_max and step, got {p_max}, {step}"
            )));
        }
        let ratio = p_max / step;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "p_max / step = {ratio} is not an integer"
            )));
        }
        Ok(PriceGrid { p_max, step })
    }

    pub fn len(&self) -> usize {
        (self.p_max / self.step).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn price(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.price(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategy {
    pub grid: PriceGrid,
    pub mass: Vec<f64>,
}

impl MixedStrategy {
    pub fn uniform(grid: PriceGrid) -> Self {
        let n = grid.len();
        MixedStrategy {
            grid,
            mass: vec![1.0 / n as f64; n],
        }
    }

    pub fn point(grid: PriceGrid, index: usize) -> Self {
        let mut mass = vec![0.0; grid.len()];
        mass[index] = 1.0;
        MixedStrategy { grid, mass }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mass.len() != self.grid.len() {
            return Err(Error::Domain("mass vector does not match the grid".into()));
        }
        if self.mass.iter().any(|&m| !(m >= 0.0)) {
            return Err(Error::Domain("negative or NaN mass".into()));
        }
        let total: f64 = self.mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("masses sum to {total}")));
        }
        Ok(())
    }

    pub fn support(&self, threshold: f64) -> Vec<usize> {
        (0..self.mass.len())
            .filter(|&i| self.mass[i] >= threshold)
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .map(|(i, m)| m * self.grid.price(i))
            .sum()
    }

    pub fn width(&self, threshold: f64) -> f64 {
        let s = self.support(threshold);
        match (s.first(), s.last()) {
            (Some(&lo), Some(&hi)) => self.grid.price(hi) - self.grid.price(lo),
            _ => 0.0,
        }
    }

    /// Maximal runs of consecutive support indices.
    pub fn support_intervals(&self, threshold: f64) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for i in self.support(threshold) {
            match out.last_mut() {
                Some(last) if last.1 + 1 == i => last.1 = i,
                _ => out.push((i, i)),
            }
        }
        out
    }

    /// Support components after bridging gaps of at most `max_gap` points.
    pub fn components(&self, threshold: f64, max_gap: usize) -> usize {
        let iv = self.support_intervals(threshold);
        if iv.is_empty() {
            return 0;
        }
        1 + iv
            .windows(2)
            .filter(|w| w[1].0 - w[0].1 - 1 > max_gap)
            .count()
    }
}

/// Expected sales as a function of the price difference p_a − p_b on the grid.
/// Consumers react to prices only through their difference, so one batch of
/// CRN runs per difference serves every pair with that difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalesTable {
    pub n: usize,
    pub runs: usize,
    /// Indexed by k + n − 1 where k = i − j.
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
    pub censored: usize,
}

/// Index difference, mean and variance of sales per firm, censored runs.
type DiffCell = (i64, [f64; 2], [f64; 2], usize);

impl SalesTable {
    pub fn estimate(
        params: &ModelParams,
        grid: &PriceGrid,
        runs: usize,
        seed: u64,
        diffs: Option<&[i64]>,
    ) -> Result<Self> {
        let n = grid.len();
        let all: Vec<i64> = (-(n as i64 - 1)..=(n as i64 - 1)).collect();
        let ks = diffs.unwrap_or(&all);
        let mut table = SalesTable {
            n,
            runs,
            mean: [vec![f64::NAN; 2 * n - 1], vec![f64::NAN; 2 * n - 1]],
            var: [vec![f64::NAN; 2 * n - 1], vec![f64::NAN; 2 * n - 1]],
            censored: 0,
        };
        let mut base = params.clone();
        base.p_max = grid.p_max;
        base.calvo_hazard = 0.0;
        let results: Vec<Result<DiffCell>> = ks
            .par_iter()
            .map(|&k| {
                let pa = grid.price(k.max(0) as usize);
                let pb = grid.price((-k).max(0) as usize);
                let cfg = RunConfig::new(base.clone().with_prices(pa, pb), seed);
                cfg.validate()?;
                let outs: Vec<_> = (0..runs as u64).map(|i| run_validated(&cfg, i)).collect();
                let cens = outs.iter().filter(|o| o.censored()).count();
                let mut m = [0.0; 2];
                let mut v = [0.0; 2];
                for (f, firm) in [Firm::A, Firm::B].into_iter().enumerate() {
                    let xs: Vec<f64> = outs.iter().map(|o| o.sales(firm) as f64).collect();
                    let s = crate::estimators::MCStats::from_values(&xs, cens);
                    m[f] = s.mean;
                    v[f] = s.std_error * s.std_error * runs as f64;
                }
                Ok((k, m, v, cens))
            })
            .collect();
        for r in results {
            let (k, m, v, c) = r?;
            let idx = (k + n as i64 - 1) as usize;
            for f in 0..2 {
                table.mean[f][idx] = m[f];
                table.var[f][idx] = v[f];
            }
            table.censored += c;
        }
        Ok(table)
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i + self.n - 1 - j
    }

    /// Expected sales of `firm` when A posts grid index i and B posts j.
    pub fn sales(&self, firm: Firm, i: usize, j: usize) -> f64 {
        self.mean[firm as usize][self.idx(i, j)]
    }

    pub fn sales_var(&self, firm: Firm, i: usize, j: usize) -> f64 {
        self.var[firm as usize][self.idx(i, j)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitProfile {
    /// Expected profit at each own grid price against the opponent mix.
    pub profits: Vec<f64>,
    pub se: Vec<f64>,
    /// Σ σ(p)·Π(p) under the firm's own mix.
    pub mean_profit: f64,
}

/// Profit of `firm` at each own grid price against `opponent`.
pub fn profit_profile(
    table: &SalesTable,
    grid: &PriceGrid,
    firm: Firm,
    own: &MixedStrategy,
    opponent: &MixedStrategy,
) -> ProfitProfile {
    let n = grid.len();
    let mut profits = vec![0.0; n];
    let mut se = vec![0.0; n];
    for p in 0..n {
        let price = grid.price(p);
        let (mut e, mut v) = (0.0, 0.0);
        for (o, &w) in opponent.mass.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let (i, j) = match firm {
                Firm::A => (p, o),
                Firm::B => (o, p),
            };
            e += w * table.sales(firm, i, j);
            v += w * w * table.sales_var(firm, i, j);
        }
        profits[p] = price * e;
        se[p] = price * (v / table.runs as f64).sqrt();
    }
    let mean_profit = own.mass.iter().zip(&profits).map(|(m, p)| m * p).sum();
    ProfitProfile {
        profits,
        se,
        mean_profit,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flatness {
    pub max_abs_deviation: f64,
    pub max_rel_deviation: f64,
    pub pooled_se: f64,
}

/// Profit spread over the support of `own`.
pub fn flatness(profile: &ProfitProfile, own: &MixedStrategy, threshold: f64) -> Flatness {
    let support = own.support(threshold);
    let bar = profile.mean_profit;
    let mut max_abs: f64 = 0.0;
    let mut se2 = 0.0;
    for &i in &support {
        max_abs = max_abs.max((profile.profits[i] - bar).abs());
        se2 += profile.se[i] * profile.se[i];
    }
    let pooled = if support.is_empty() {
        0.0
    } else {
        (se2 / support.len() as f64).sqrt()
    };
    let rel = if bar > 0.0 {
        max_abs / bar
    } else if max_abs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Flatness {
        max_abs_deviation: max_abs,
        max_rel_deviation: rel,
        pooled_se: pooled,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSettings {
    pub tau: f64,
    pub rho: f64,
    pub runs_per_pair: usize,
    pub eps: f64,
    pub max_iters: usize,
    pub support_threshold: f64,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            tau: 0.03,
            rho: 0.2,
            runs_per_pair: 20_000,
            eps: 1e-6,
            max_iters: 5_000,
            support_threshold: SUPPORT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub strategy: MixedStrategy,
    /// Firm B's mix; equal to `strategy` in symmetric environments.
    pub strategy_b: MixedStrategy,
    pub symmetric: bool,
    pub support: Vec<(usize, usize)>,
    pub support_threshold: f64,
    pub support_components: usize,
    /// Largest support width across the two firms.
    pub width: f64,
    pub width_a: f64,
    pub width_b: f64,
    /// Average of the two firms' mean prices.
    pub mean_price: f64,
    pub iterations: usize,
    pub converged: bool,
    pub l1_change: f64,
    /// Largest relative on-support profit deviation across the two firms.
    pub max_profit_deviation: f64,
    pub max_abs_profit_deviation: f64,
    pub pooled_se: f64,
    pub mean_profit: [f64; 2],
    pub profits_a: Vec<f64>,
    pub profits_a_se: Vec<f64>,
}

fn softmax(values: &[f64], tau: f64) -> Vec<f64> {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = values.iter().map(|v| ((v - m) / tau).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

fn relax(sigma: &MixedStrategy, target: &[f64], rho: f64) -> (MixedStrategy, f64) {
    let mut mass: Vec<f64> = sigma
        .mass
        .iter()
        .zip(target)
        .map(|(s, t)| (1.0 - rho) * s + rho * t)
        .collect();
    let z: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|m| *m /= z);
    let l1 = mass
        .iter()
        .zip(&sigma.mass)
        .map(|(a, b)| (a - b).abs())
        .sum();
    (
        MixedStrategy {
            grid: sigma.grid,
            mass,
        },
        l1,
    )
}

/// Smoothed best-reply iteration on the price grid.
pub fn mix_solve(
    params: &ModelParams,
    grid: &PriceGrid,
    settings: &SolveSettings,
    seed: u64,
) -> Result<SolveReport> {
    if !(settings.tau > 0.0) || !(settings.rho > 0.0 && settings.rho <= 1.0) {
        return Err(Error::Domain("need tau > 0 and 0 < rho <= 1".into()));
    }
    let table = SalesTable::estimate(params, grid, settings.runs_per_pair, seed, None)?;
    solve_on_table(params, grid, settings, &table)
}

pub fn solve_on_table(
    params: &ModelParams,
    grid: &PriceGrid,
    settings: &SolveSettings,
    table: &SalesTable,
) -> Result<SolveReport> {
    let symmetric = params.first_visit_prob == 0.5 && params.eta0 == 0.5;
    let thr = settings.support_threshold;
    let mut sa = MixedStrategy::uniform(*grid);
    let mut sb = MixedStrategy::uniform(*grid);
    let mut iterations = 0;
    let mut converged = false;
    let mut l1 = f64::INFINITY;
    while iterations < settings.max_iters {
        iterations += 1;
        let pa = profit_profile(table, grid, Firm::A, &sa, &sb);
        let (na, la) = relax(&sa, &softmax(&pa.profits, settings.tau), settings.rho);
        let (nb, lb) = if symmetric {
            (na.clone(), 0.0)
        } else {
            let pb = profit_profile(table, grid, Firm::B, &sb, &sa);
            relax(&sb, &softmax(&pb.profits, settings.tau), settings.rho)
        };
        sa = na;
        sb = nb;
        l1 = la + lb;
        if l1 < settings.eps {
            let fa = flatness(&profit_profile(table, grid, Firm::A, &sa, &sb), &sa, thr);
            let fb = flatness(&profit_profile(table, grid, Firm::B, &sb, &sa), &sb, thr);
            let flat = |f: &Flatness| f.max_abs_deviation < 3.0 * f.pooled_se;
            if flat(&fa) && flat(&fb) {
                converged = true;
            }
            break;
        }
    }
    let pa = profit_profile(table, grid, Firm::A, &sa, &sb);
    let pb = profit_profile(table, grid, Firm::B, &sb, &sa);
    let fa = flatness(&pa, &sa, thr);
    let fb = flatness(&pb, &sb, thr);
    let (width_a, width_b) = (sa.width(thr), sb.width(thr));
    Ok(SolveReport {
        support: sa.support_intervals(thr),
        support_threshold: thr,
        support_components: sa.components(thr, 1).max(sb.components(thr, 1)),
        width: width_a.max(width_b),
        width_a,
        width_b,
        mean_price: 0.5 * (sa.mean() + sb.mean()),
        iterations,
        converged,
        l1_change: l1,
        max_profit_deviation: fa.max_rel_deviation.max(fb.max_rel_deviation),
        max_abs_profit_deviation: fa.max_abs_deviation.max(fb.max_abs_deviation),
        pooled_se: fa.pooled_se.max(fb.pooled_se),
        mean_profit: [pa.mean_profit, pb.mean_profit],
        profits_a: pa.profits,
        profits_a_se: pa.se,
        strategy: sa,
        strategy_b: sb,
        symmetric,
    })
}

/// Re-estimates the profit of each support point of a symmetric mix against
/// itself with fresh streams; returns the largest relative deviation from the
/// mix's mean profit.
pub fn indifference_check(
    strategy: &MixedStrategy,
    params: &ModelParams,
    runs: usize,
    seed: u64,
) -> Result<f64> {
    strategy.validate()?;
    let support = strategy.support(SUPPORT_THRESHOLD);
    let mut ks: Vec<i64> = Vec::new();
    for &i in &support {
        for &j in &support {
            ks.push(i as i64 - j as i64);
        }
    }
    ks.sort_unstable();
    ks.dedup();
    let table = SalesTable::estimate(params, &strategy.grid, runs, seed, Some(&ks))?;
    let mut opp = strategy.clone();
    for (i, m) in opp.mass.iter_mut().enumerate() {
        if *m < SUPPORT_THRESHOLD {
            *m = 0.0;
        }
        let _ = i;
    }
    let z: f64 = opp.mass.iter().sum();
    opp.mass.iter_mut().for_each(|m| *m /= z);
    let grid = strategy.grid;
    let mut profits = Vec::with_capacity(support.len());
    for &i in &support {
        let e: f64 = support
            .iter()
            .map(|&j| opp.mass[j] * table.sales(Firm::A, i, j))
            .sum();
        profits.push(grid.price(i) * e);
    }
    let bar: f64 = support
        .iter()
        .zip(&profits)
        .map(|(&i, p)| opp.mass[i] * p)
        .sum();
    let dev = profits.iter().map(|p| (p - bar).abs()).fold(0.0, f64::max);
    Ok(if bar > 0.0 {
        dev / bar
    } else if dev == 0.0 {
        0.0
    } else {
        f64::INFINITY
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalvoReport {
    pub hazard: f64,
    /// 99th minus 1st percentile of pooled sampled prices.
    pub width: f64,
    pub width_minmax: f64,
    pub mean_price: f64,
    pub pi_wrong: f64,
    pub burn_in_events: u64,
    pub samples: usize,
    pub resets: u64,
    pub censored_before_burn_in: bool,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Long trajectory with resets; statistics over arrival events after burn-in.
pub fn calvo_stationary(
    params: &ModelParams,
    grid: &PriceGrid,
    horizon_events: u64,
    burn_in_fraction: f64,
    seed: u64,
) -> Result<CalvoReport> {
    calvo_stationary_run(params, grid, horizon_events, burn_in_fraction, seed, 0)
}

pub fn calvo_stationary_run(
    params: &ModelParams,
    grid: &PriceGrid,
    horizon_events: u64,
    burn_in_fraction: f64,
    seed: u64,
    run_index: u64,
) -> Result<CalvoReport> {
    if horizon_events < 10_000 {
        return Err(Error::Domain("horizon_events must be at least 10^4".into()));
    }
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(Error::Domain("burn_in_fraction must lie in [0, 1)".into()));
    }
    let mut cfg = RunConfig::new(params.clone(), seed);
    cfg.reset_grid = *grid;
    cfg.horizon_events = Some(horizon_events);
    cfg.record_path = true;
    cfg.true_state = TrueState::DrawFromPrior;
    cfg.validate()?;
    let out = run_validated(&cfg, run_index);
    let burn = (burn_in_fraction * horizon_events as f64).ceil() as u64;
    let path = out.path.as_deref().unwrap_or(&[]);
    let wrong_side = match out.true_state.high_firm() {
        Firm::A => Side::Down,
        Firm::B => Side::Up,
    };
    let mut prices = Vec::new();
    let (mut wrong, mut samples) = (0usize, 0usize);
    let mut current = params.clone();
    // event_index counts the start record, so event k sits at index k
    for ev in path
        .iter()
        .filter(|e| e.kind == EventKind::Arrival && e.event_index > burn)
    {
        prices.push(ev.p_a);
        prices.push(ev.p_b);
        current.p_a = ev.p_a;
        current.p_b = ev.p_b;
        let b = crate::beliefs::Belief::from_eta(ev.eta);
        if absorption_side(b, &current, current.kappa, AbsorptionRule::LikelihoodFlat)
            == Some(wrong_side)
        {
            wrong += 1;
        }
        samples += 1;
    }
    prices.sort_by(f64::total_cmp);
    let mean_price = if prices.is_empty() {
        f64::NAN
    } else {
        prices.iter().sum::<f64>() / prices.len() as f64
    };
    Ok(CalvoReport {
        hazard: params.calvo_hazard,
        width: quantile(&prices, 0.99) - quantile(&prices, 0.01),
        width_minmax: prices.last().copied().unwrap_or(f64::NAN)
            - prices.first().copied().unwrap_or(f64::NAN),
        mean_price,
        pi_wrong: if samples > 0 {
            wrong as f64 / samples as f64
        } else {
            f64::NAN
        },
        burn_in_events: burn,
        samples,
        resets: out.resets,
        censored_before_burn_in: samples == 0,
    })
}
