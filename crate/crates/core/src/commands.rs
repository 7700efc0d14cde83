//! The experiments behind each CLI subcommand. Each writes its files into
//! `out` and returns the list of paths written.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::beliefs::{cascade_bounds, immediate_herd, CascadeBounds, Herd};
use crate::config::ExperimentConfig;
use crate::engine::{run_validated, AbsorbedSide, EventKind, RunConfig};
use crate::equilibrium::{calvo_stationary, mix_solve, CalvoReport, PriceGrid, SolveReport};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_profits, run_many, sweep, AbsorptionReport, ProfitEstimate, SWEEP_COLUMNS,
};
use crate::output::{write_csv, write_json};
use crate::params::ModelParams;
use crate::welfare::{
    pigouvian_subsidy, value_function_solve, welfare_gap_between, WelfareDecomposition,
};

pub fn regime_tag(q: f64, kappa: f64) -> String {
    format!("q{q:.2}_k{kappa:.2}")
}

fn regime_params(cfg: &ExperimentConfig, q: f64, kappa: f64) -> Result<ModelParams> {
    let p = ModelParams {
        q,
        kappa,
        ..cfg.params.clone()
    };
    p.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(p)
}

fn prepare(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsRow {
    pub q: f64,
    pub kappa: f64,
    pub price_diff: f64,
    pub eta_star: f64,
    pub eta_bar: f64,
    pub eta_under: f64,
    pub variant: String,
    pub herd_at_half: String,
    pub status: String,
}

pub const BOUNDS_COLUMNS: [&str; 9] = [
    "q",
    "kappa",
    "price_diff",
    "eta_star",
    "eta_bar",
    "eta_under",
    "variant",
    "herd_at_half",
    "status",
];

pub fn bounds_rows(cfg: &ExperimentConfig) -> Vec<BoundsRow> {
    let mut rows = Vec::new();
    let b = &cfg.bounds;
    let mid = 0.5 * cfg.params.p_max;
    for &q in &b.q {
        for &kappa in &b.kappa {
            for &d in &b.price_diff {
                for &variant in &b.variants {
                    let p = ModelParams {
                        q,
                        kappa,
                        eta0: 0.5,
                        ..cfg.params.clone()
                    }
                    .with_prices(mid + 0.5 * d, mid - 0.5 * d);
                    let eta_star = crate::beliefs::eta_star(d, kappa, p.delta_gap);
                    let mut row = BoundsRow {
                        q,
                        kappa,
                        price_diff: d,
                        eta_star,
                        eta_bar: f64::NAN,
                        eta_under: f64::NAN,
                        variant: variant.to_string(),
                        herd_at_half: String::new(),
                        status: "ok".into(),
                    };
                    if let Err(e) = p.validate() {
                        row.status = format!("invalid: {e}");
                        rows.push(row);
                        continue;
                    }
                    match cascade_bounds(&p, variant) {
                        Ok(cb) => {
                            row.eta_bar = cb.eta_bar;
                            row.eta_under = cb.eta_under;
                            row.herd_at_half = match immediate_herd(&p, &cb) {
                                Herd::None => "none",
                                Herd::HerdUp => "herd_up",
                                Herd::HerdDown => "herd_down",
                            }
                            .into();
                        }
                        Err(Error::DegenerateThreshold { side, .. }) => {
                            row.status = format!("degenerate_{side}");
                        }
                        Err(e) => row.status = format!("failed: {e}"),
                    }
                    rows.push(row);
                }
            }
        }
    }
    rows
}

pub fn cmd_bounds(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    prepare(out)?;
    let path = out.join("bounds.csv");
    write_csv(&path, &cfg.to_toml(), &BOUNDS_COLUMNS, &bounds_rows(cfg))?;
    Ok(vec![path])
}

#[derive(Debug, Clone, Serialize)]
struct PathRow {
    run_id: u64,
    event_index: u64,
    time: f64,
    eta: f64,
    p_a: f64,
    p_b: f64,
    event_type: &'static str,
    action: String,
}

const PATH_COLUMNS: [&str; 8] = [
    "run_id",
    "event_index",
    "time",
    "eta",
    "p_a",
    "p_b",
    "event_type",
    "action",
];

#[derive(Debug, Clone, Serialize)]
struct AbsorptionRow {
    run_id: u64,
    side: &'static str,
    wrong: u8,
    arrivals: u64,
    time: f64,
}

#[derive(Debug, Clone, Serialize)]
struct RegimeBoundsRow {
    regime: String,
    q: f64,
    kappa: f64,
    eta_bar: f64,
    eta_under: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub regime: String,
    pub bounds: Option<CascadeBounds>,
    pub report: AbsorptionReport,
}

fn side_label(s: AbsorbedSide) -> &'static str {
    match s {
        AbsorbedSide::Up => "up",
        AbsorbedSide::Down => "down",
        AbsorbedSide::Censored => "censored",
    }
}

pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    prepare(out)?;
    let toml = cfg.to_toml();
    let seed = cfg.command_seed("simulate");
    let mut written = Vec::new();
    let mut bounds_rows = Vec::new();
    for &[q, kappa] in &cfg.simulate.regimes {
        let params = regime_params(cfg, q, kappa)?;
        let tag = regime_tag(q, kappa);
        let mut config = RunConfig::new(params.clone(), seed);
        config.max_arrivals = cfg.max_arrivals;
        config.rule = cfg.rule;
        let outcomes = run_many(&config, cfg.runs)?;
        let report = AbsorptionReport::from_outcomes(&params, &outcomes)?;
        let bounds = cascade_bounds(&params, crate::params::BoundaryVariant::VisitSymmetric).ok();
        bounds_rows.push(RegimeBoundsRow {
            regime: tag.clone(),
            q,
            kappa,
            eta_bar: bounds.map_or(f64::NAN, |b| b.eta_bar),
            eta_under: bounds.map_or(f64::NAN, |b| b.eta_under),
        });

        let times: Vec<AbsorptionRow> = outcomes
            .iter()
            .enumerate()
            .map(|(i, o)| AbsorptionRow {
                run_id: i as u64,
                side: side_label(o.absorbed_side),
                wrong: o.wrong as u8,
                arrivals: o.arrivals_to_absorption,
                time: o.calendar_time,
            })
            .collect();
        let p = out.join(format!("absorption_{tag}.csv"));
        write_csv(
            &p,
            &toml,
            &["run_id", "side", "wrong", "arrivals", "time"],
            &times,
        )?;
        written.push(p);

        let mut rows = Vec::new();
        config.record_path = true;
        for i in 0..cfg.simulate.paths.min(cfg.runs) as u64 {
            let o = run_validated(&config, i);
            for ev in o.path.unwrap_or_default() {
                rows.push(PathRow {
                    run_id: i,
                    event_index: ev.event_index,
                    time: ev.time,
                    eta: ev.eta,
                    p_a: ev.p_a,
                    p_b: ev.p_b,
                    event_type: ev.kind.label(),
                    action: ev.action_label(),
                });
            }
        }
        let p = out.join(format!("paths_{tag}.csv"));
        write_csv(&p, &toml, &PATH_COLUMNS, &rows)?;
        written.push(p);

        let p = out.join(format!("simulate_{tag}.json"));
        write_json(
            &p,
            &toml,
            &SimulateSummary {
                regime: tag,
                bounds,
                report,
            },
        )?;
        written.push(p);
    }
    let p = out.join("regime_bounds.csv");
    write_csv(
        &p,
        &toml,
        &["regime", "q", "kappa", "eta_bar", "eta_under"],
        &bounds_rows,
    )?;
    written.push(p);
    Ok(written)
}

pub fn cmd_profits(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    prepare(out)?;
    let p = &cfg.params;
    let est: ProfitEstimate =
        estimate_profits(p.p_a, p.p_b, p, cfg.runs, cfg.command_seed("profits"))?;
    let path = out.join("profits.json");
    write_json(&path, &cfg.to_toml(), &est)?;
    Ok(vec![path])
}

#[derive(Debug, Clone, Serialize)]
struct MassRow {
    price: f64,
    mass: f64,
}

/// Writes every regime, then fails with `NonConvergence` if any regime did
/// not converge.
pub fn cmd_solve(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    prepare(out)?;
    let toml = cfg.to_toml();
    let grid = cfg
        .solver
        .grid()
        .map_err(|e| Error::Config(e.to_string()))?;
    let settings = cfg.solver.settings();
    let seed = cfg.command_seed("solve-mix");
    let mut written = Vec::new();
    let mut failed: Option<Error> = None;
    for &[q, kappa] in &cfg.solver.regimes {
        let params = regime_params(cfg, q, kappa)?;
        let report: SolveReport = mix_solve(&params, &grid, &settings, seed)?;
        let tag = regime_tag(q, kappa);
        let rows: Vec<MassRow> = report
            .strategy
            .mass
            .iter()
            .enumerate()
            .map(|(i, &m)| MassRow {
                price: grid.price(i),
                mass: m,
            })
            .collect();
        let p = out.join(format!("mix_{tag}.csv"));
        write_csv(&p, &toml, &["price", "mass"], &rows)?;
        written.push(p);
        let p = out.join(format!("solve_{tag}.json"));
        write_json(&p, &toml, &report)?;
        written.push(p);
        if !report.converged && failed.is_none() {
            failed = Some(Error::NonConvergence {
                residual: report.l1_change,
                iterations: report.iterations,
            });
        }
    }
    match failed {
        Some(e) => Err(e),
        None => Ok(written),
    }
}

#[derive(Debug, Clone, Serialize)]
struct CalvoRow {
    alpha: f64,
    width: f64,
    width_minmax: f64,
    mean_price: f64,
    pi_wrong: f64,
    samples: usize,
    resets: u64,
}

#[derive(Debug, Clone, Serialize)]
struct TimelineRow {
    event_index: u64,
    time: f64,
    eta: f64,
    p_a: f64,
    p_b: f64,
    event_type: &'static str,
    reset: u8,
}

pub fn cmd_calvo(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    prepare(out)?;
    let toml = cfg.to_toml();
    let c = &cfg.calvo;
    let grid =
        PriceGrid::new(cfg.params.p_max, c.step).map_err(|e| Error::Config(e.to_string()))?;
    let seed = cfg.command_seed("calvo");
    let mut rows = Vec::new();
    for &alpha in &c.hazards {
        let params = ModelParams {
            calvo_hazard: alpha,
            ..cfg.params.clone()
        };
        params
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let r: CalvoReport = calvo_stationary(&params, &grid, c.horizon_events, c.burn_in, seed)?;
        rows.push(CalvoRow {
            alpha,
            width: r.width,
            width_minmax: r.width_minmax,
            mean_price: r.mean_price,
            pi_wrong: r.pi_wrong,
            samples: r.samples,
            resets: r.resets,
        });
    }
    let p1 = out.join("calvo.csv");
    write_csv(
        &p1,
        &toml,
        &[
            "alpha",
            "width",
            "width_minmax",
            "mean_price",
            "pi_wrong",
            "samples",
            "resets",
        ],
        &rows,
    )?;

    let params = ModelParams {
        calvo_hazard: c.timeline_hazard,
        ..cfg.params.clone()
    };
    let mut config = RunConfig::new(params, seed);
    config.reset_grid = grid;
    config.horizon_events = Some(c.timeline_events);
    config.record_path = true;
    config
        .validate()
        .map_err(|e| Error::Config(e.to_string()))?;
    let o = run_validated(&config, 0);
    let timeline: Vec<TimelineRow> = o
        .path
        .unwrap_or_default()
        .into_iter()
        .map(|ev| TimelineRow {
            event_index: ev.event_index,
            time: ev.time,
            eta: ev.eta,
            p_a: ev.p_a,
            p_b: ev.p_b,
            event_type: ev.kind.label(),
            reset: matches!(ev.kind, EventKind::ResetA | EventKind::ResetB) as u8,
        })
        .collect();
    let p2 = out.join("calvo_timeline.csv");
    write_csv(
        &p2,
        &toml,
        &[
            "event_index",
            "time",
            "eta",
            "p_a",
            "p_b",
            "event_type",
            "reset",
        ],
        &timeline,
    )?;
    Ok(vec![p1, p2])
}

#[derive(Debug, Clone, Serialize)]
struct CurveRow {
    eta: f64,
    value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WelfareSummary {
    pub w_at_eta0: f64,
    pub residual: f64,
    pub iterations: usize,
    pub snap_error: f64,
    pub bounds: Option<CascadeBounds>,
    pub max_subsidy: f64,
    pub decomposition: WelfareDecomposition,
}

pub fn cmd_welfare(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    prepare(out)?;
    let toml = cfg.to_toml();
    let w = &cfg.welfare;
    let params = &cfg.params;
    let value = value_function_solve(params, w.grid_points, w.tol, w.max_iters)?;
    let schedule = pigouvian_subsidy(&value, params);
    let curve = |ys: &[f64]| -> Vec<CurveRow> {
        value
            .grid
            .iter()
            .zip(ys)
            .map(|(&eta, &value)| CurveRow { eta, value })
            .collect()
    };
    let p1 = out.join("welfare_value.csv");
    write_csv(&p1, &toml, &["eta", "value"], &curve(&value.values))?;
    let p2 = out.join("subsidy.csv");
    write_csv(&p2, &toml, &["eta", "value"], &curve(&schedule.s_values))?;
    let planner = (params.kappa > 0.0).then(|| Arc::new(schedule.clone()));
    let decomposition = welfare_gap_between(
        params,
        planner,
        None,
        w.decompose_runs,
        cfg.command_seed("welfare"),
    )?;
    let summary = WelfareSummary {
        w_at_eta0: value.at(params.eta0),
        residual: value.residual,
        iterations: value.iterations,
        snap_error: value.snap_error,
        bounds: value.bounds,
        max_subsidy: schedule.s_values.iter().cloned().fold(0.0, f64::max),
        decomposition,
    };
    let p3 = out.join("welfare.json");
    write_json(&p3, &toml, &summary)?;
    Ok(vec![p1, p2, p3])
}

pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    prepare(out)?;
    let cells = sweep(
        &cfg.sweep,
        &cfg.params,
        cfg.runs,
        cfg.command_seed("sweep"),
        cfg.rule,
    )?;
    let rows: Vec<_> = cells.into_iter().map(|c| c.row).collect();
    let path = out.join("sweep.csv");
    write_csv(&path, &cfg.to_toml(), &SWEEP_COLUMNS, &rows)?;
    Ok(vec![path])
}
