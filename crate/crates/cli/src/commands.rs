use crate::config::{CriticalMethod, RunConfig};
use crate::output::{loglog_svg, to_csv, to_json, write_text, Plot};
use serde::Serialize;
use std::path::PathBuf;
use threshold_scope::acceptance::{self, CriterionResult};
use threshold_scope::birman::BirmanSchwingerFamily;
use threshold_scope::dispersive::cutoff::CutoffSpec;
use threshold_scope::dispersive::evolution::{measure_sup_decay, measured_revival, revival_time, step_for, DecayFit, SplitStep};
use threshold_scope::dispersive::kernel::{sample_pairs, theorem_check, TheoremCheck};
use threshold_scope::grid::{build_grid, Grid3, GridFunction};
use threshold_scope::linalg::op_norm;
use threshold_scope::potential::{split_potential, Potential};
use threshold_scope::radial::{tune_coupling, TuneResult};
use threshold_scope::threshold::{compute_threshold_data, laurent_of_a_inverse, tune_grid_critical, ThresholdData, ThresholdOptions, ThresholdReport};
use threshold_scope::{Result, ScopeError, C64};

/// What a command hands back to main: the JSON report, a human summary, and files written.
pub struct Outcome {
    pub json: String,
    pub summary: Vec<String>,
    pub files: Vec<PathBuf>,
    /// Exit code for a completed run whose checks failed.
    pub failure: Option<i32>,
}

#[derive(Debug, Clone, Serialize)]
struct GridInfo {
    n: usize,
    #[serde(rename = "L")]
    l: f64,
    h: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Header {
    config_hash: String,
    grid: GridInfo,
    coupling: f64,
}

fn header(cfg: &RunConfig, grid: &Grid3, coupling: f64) -> Header {
    Header { config_hash: cfg.hash(), grid: GridInfo { n: grid.n, l: grid.l, h: grid.h }, coupling }
}

/// The configured potential, rescaled to the requested fraction of a critical coupling.
fn potential(cfg: &RunConfig, grid: &Grid3) -> Result<Potential> {
    let shape = cfg.potential.build(grid)?;
    let Some(c) = &cfg.critical else {
        return Ok(shape);
    };
    let bracket = (c.bracket[0], c.bracket[1]);
    let star = match c.method {
        CriticalMethod::Grid => tune_grid_critical(&shape, grid, bracket, 11)?.coupling,
        CriticalMethod::Radial => tune_coupling(&shape, 0, bracket)?.c_star,
    };
    Ok(shape.with_coupling(c.fraction * star))
}

fn threshold(cfg: &RunConfig) -> Result<(Grid3, Potential, ThresholdData)> {
    let grid = build_grid(cfg.grid.n, cfg.grid.l)?;
    let pot = potential(cfg, &grid)?;
    let fam = BirmanSchwingerFamily::new(&split_potential(&pot, &grid)?)?;
    let opts = ThresholdOptions { eps_rank: cfg.eps_rank()?, lambda0: cfg.lambda0()?, ..Default::default() };
    let td = compute_threshold_data(fam, &opts)?;
    Ok((grid, pot, td))
}

#[derive(Serialize)]
struct ClassifyReport {
    #[serde(flatten)]
    report: ThresholdReport,
    #[serde(flatten)]
    header: Header,
    support_points: usize,
}

pub fn classify(cfg: &RunConfig) -> Result<Outcome> {
    let (grid, pot, td) = threshold(cfg)?;
    let rep = ClassifyReport { report: td.report(), header: header(cfg, &grid, pot.coupling()), support_points: td.family.dim() };
    let json = to_json(&rep);
    let path = write_text(&cfg.out, "classify.json", &json)?;
    let r = &rep.report;
    Ok(Outcome {
        summary: vec![
            format!("class {}  rank(S1) {}  rank(S2) {}", serde_json::to_value(r.class).unwrap().as_str().unwrap(), r.rank_s1, r.rank_s2),
            format!("eps_rank {:e}  lambda0 {:e}  coupling {}", r.eps_rank, r.lambda0, rep.header.coupling),
        ],
        json,
        files: vec![path],
        failure: None,
    })
}

#[derive(Serialize)]
struct TuneReport {
    #[serde(flatten)]
    result: TuneResult,
    ell: u32,
    bracket: [f64; 2],
    config_hash: String,
}

pub fn tune(cfg: &RunConfig) -> Result<Outcome> {
    let grid = build_grid(cfg.grid.n, cfg.grid.l)?;
    let shape = cfg.potential.build(&grid)?;
    if !shape.is_radial() {
        return Err(ScopeError::Config("tune needs a radial potential shape".into()));
    }
    let t = &cfg.tune;
    let result = tune_coupling(&shape, t.ell, (t.bracket[0], t.bracket[1]))?;
    let rep = TuneReport { result, ell: t.ell, bracket: t.bracket, config_hash: cfg.hash() };
    let json = to_json(&rep);
    let path = write_text(&cfg.out, "tune.json", &json)?;
    Ok(Outcome { summary: vec![format!("c* = {:.10} (ell = {}, {} bisection steps)", result.c_star, t.ell, result.iterations)], json, files: vec![path], failure: None })
}

#[derive(Serialize)]
struct LaurentReport {
    #[serde(flatten)]
    header: Header,
    class: threshold_scope::threshold::Classification,
    lambda0: f64,
    c_minus2_norm: f64,
    c_minus1_norm: f64,
    /// Largest over smallest remainder norm across the sweep.
    remainder_growth: f64,
}

pub fn laurent(cfg: &RunConfig) -> Result<Outcome> {
    let (grid, pot, td) = threshold(cfg)?;
    let lau = laurent_of_a_inverse(&td)?;
    let (c2, c1) = (op_norm(&lau.c_minus2), op_norm(&lau.c_minus1));
    let lambdas: Vec<f64> = (0..20).map(|k| td.lambda0 / 2f64.powi(k)).filter(|l| *l >= 1e-5).collect();
    let mut rows = Vec::with_capacity(lambdas.len());
    for &l in &lambdas {
        let inv = op_norm(&td.a_inverse(l)?);
        let rem = op_norm(&lau.regular_at(&td, l)?);
        rows.push(vec![l, inv, c2, c1, rem]);
    }
    let rems: Vec<f64> = rows.iter().map(|r| r[4]).collect();
    let growth = rems.iter().cloned().fold(0.0, f64::max) / rems.iter().cloned().fold(f64::INFINITY, f64::min);
    let csv = to_csv(&["lambda", "inverse_norm", "c_minus2_norm", "c_minus1_norm", "remainder_norm"], &rows);
    let rep = LaurentReport { header: header(cfg, &grid, pot.coupling()), class: td.classification(), lambda0: td.lambda0, c_minus2_norm: c2, c_minus1_norm: c1, remainder_growth: growth };
    let json = to_json(&rep);
    let files = vec![write_text(&cfg.out, "laurent.csv", &csv)?, write_text(&cfg.out, "laurent.json", &json)?];
    Ok(Outcome {
        summary: vec![format!("|c_-2| {c2:.4e}  |c_-1| {c1:.4e}  remainder growth {growth:.3} over {} lambdas", rows.len())],
        json,
        files,
        failure: None,
    })
}

#[derive(Serialize)]
struct EvolveReport {
    #[serde(flatten)]
    header: Header,
    dt: f64,
    sigma: f64,
    revival_time: f64,
    /// "wraparound" for the periodic bound 2 L / p_max, "free_reference" when measured against
    /// the analytic free packet under the absorbing layer.
    revival_source: &'static str,
    fit: Option<DecayFit>,
    final_l2_ratio: f64,
}

pub fn evolve(cfg: &RunConfig) -> Result<Outcome> {
    let grid = build_grid(cfg.grid.n, cfg.grid.l)?;
    let pot = potential(cfg, &grid)?;
    let v = pot.sample(&grid)?;
    let e = &cfg.evolve;
    if let Some(a) = e.absorber {
        if !(a.width > 0.0) || !(a.width < grid.l) || a.strength < 0.0 {
            return Err(ScopeError::Config(format!("evolve: absorber width must lie in (0, L) and strength be non-negative, got {a:?}")));
        }
    }
    let (dt, every) = step_for(&v, e.sample_every);
    let steps = (cfg.time.t_max / dt).ceil() as usize;
    let c = grid.coord(grid.n / 2);
    let psi0 = GridFunction::from_fn(grid, |x| {
        let r2 = (x[0] - c).powi(2) + (x[1] - c).powi(2) + (x[2] - c).powi(2);
        C64::new((-r2 / (2.0 * e.sigma * e.sigma)).exp(), 0.0)
    });
    let (_, tr) = SplitStep::new(&grid, &v, dt, e.absorber)?.run(&psi0, steps, every)?;
    let (revival, source) = match e.absorber {
        None => (revival_time(&grid), "wraparound"),
        Some(_) if v.iter().all(|x| *x == 0.0) => (measured_revival(&tr, e.sigma, 0.02), "free_reference"),
        Some(a) => {
            let (fdt, fevery) = step_for(&[], e.sample_every);
            let fsteps = (cfg.time.t_max / fdt).ceil() as usize;
            let free = SplitStep::new(&grid, &vec![0.0; grid.len()], fdt, Some(a))?.run(&psi0, fsteps, fevery)?.1;
            (measured_revival(&free, e.sigma, 0.02), "free_reference")
        }
    };
    let rows: Vec<Vec<f64>> = (0..tr.times.len()).map(|k| vec![tr.times[k], tr.sup_norms[k], tr.l2_norms[k]]).collect();
    let mut files = vec![write_text(&cfg.out, "evolve.csv", &to_csv(&["t", "sup_norm", "l2_norm"], &rows))?];
    let fit = measure_sup_decay(&tr, (cfg.time.t_min, cfg.time.t_max), revival);
    let plot_fit = fit.as_ref().ok().map(|f| (f.slope, f.intercept / std::f64::consts::LN_10, f.window.0, f.window.1));
    let svg = loglog_svg(&Plot { title: "sup-norm decay", x_label: "t", y_label: "sup |psi(t)|", xs: &tr.times[1..], ys: &tr.sup_norms[1..], fit: plot_fit });
    files.push(write_text(&cfg.out, "evolve.svg", &svg)?);
    let rep = EvolveReport {
        header: header(cfg, &grid, pot.coupling()),
        dt,
        sigma: e.sigma,
        revival_time: revival,
        revival_source: source,
        fit: fit.as_ref().ok().cloned(),
        final_l2_ratio: tr.l2_norms.last().unwrap() / tr.l2_norms[0],
    };
    let json = to_json(&rep);
    files.push(write_text(&cfg.out, "evolve.json", &json)?);
    let fit = fit?;
    Ok(Outcome {
        summary: vec![format!("slope {:.4} over t in [{}, {}] (r^2 {:.5}, revival {:.2})", fit.slope, fit.window.0, fit.window.1, fit.r_squared, revival)],
        json,
        files,
        failure: None,
    })
}

#[derive(Serialize)]
struct TheoremReport {
    #[serde(flatten)]
    header: Header,
    lambda0: f64,
    seed: u64,
    #[serde(flatten)]
    check: TheoremCheck,
}

pub fn theorem_check_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let (grid, pot, td) = threshold(cfg)?;
    let lau = laurent_of_a_inverse(&td)?;
    let cut = CutoffSpec::new(td.lambda0)?;
    let pairs = sample_pairs(&grid, cfg.sample_pairs, cfg.seed)?;
    let check = theorem_check(&td, &lau, &cut, &cfg.time.geometric(), &pairs)?;
    let rows: Vec<Vec<f64>> = check.rows.iter().map(|r| vec![r.t, r.d_t, r.ft_sup]).collect();
    let ts: Vec<f64> = check.rows.iter().map(|r| r.t).collect();
    let ds: Vec<f64> = check.rows.iter().map(|r| r.d_t).collect();
    let f = &check.fit;
    let svg = loglog_svg(&Plot {
        title: "low-energy residual D(t)",
        x_label: "t",
        y_label: "D(t)",
        xs: &ts,
        ys: &ds,
        fit: Some((f.slope, f.intercept / std::f64::consts::LN_10, ts[0], *ts.last().unwrap())),
    });
    let summary = vec![format!("{:?}: D(t) slope {:.4} over {} times, {} pairs", check.class, f.slope, ts.len(), check.pairs)];
    let rep = TheoremReport { header: header(cfg, &grid, pot.coupling()), lambda0: td.lambda0, seed: cfg.seed, check };
    let json = to_json(&rep);
    let files = vec![
        write_text(&cfg.out, "theorem_check.csv", &to_csv(&["t", "D_t", "Ft_sup"], &rows))?,
        write_text(&cfg.out, "theorem_check.svg", &svg)?,
        write_text(&cfg.out, "theorem_check.json", &json)?,
    ];
    Ok(Outcome { summary, json, files, failure: None })
}

/// Exit code when selftest completes with failing criteria.
pub const SELFTEST_FAILED: i32 = 6;

#[derive(Serialize)]
struct SelftestReport {
    passed: usize,
    failed: usize,
    criteria: Vec<CriterionResult>,
}

pub fn selftest(cfg: &RunConfig, ids: &[usize], echo: bool) -> Result<Outcome> {
    let ids: Vec<usize> = if ids.is_empty() { (1..=10).collect() } else { ids.to_vec() };
    let mut criteria = Vec::with_capacity(ids.len());
    for id in ids {
        let r = acceptance::run(id);
        if echo {
            println!("{}", r.line());
        }
        criteria.push(r);
    }
    let failed = criteria.iter().filter(|r| !r.pass).count();
    let rep = SelftestReport { passed: criteria.len() - failed, failed, criteria };
    let json = to_json(&rep);
    let path = write_text(&cfg.out, "selftest.json", &json)?;
    Ok(Outcome {
        summary: vec![format!("{} passed, {} failed", rep.passed, rep.failed)],
        json,
        files: vec![path],
        failure: (failed > 0).then_some(SELFTEST_FAILED),
    })
}
