//! Logistic technology life-cycle curves.
//!
//! Cumulative patent counts are fitted with `y(t) = K / (1 + exp(-(t - a) / b))`
//! by Levenberg-Marquardt least squares. The fitted saturation ratio `y/K`
//! places a technology in one of four stages.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::YearlySeries;

/// Fitted logistic parameters and solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogisticFit {
    /// Upper limit `K`.
    #[serde(rename = "K")]
    pub capacity: f64,
    /// Inflection year `a`.
    #[serde(rename = "a")]
    pub inflection: f64,
    /// Shape `b`; the curve rises from 10% to 90% of `K` over `2 b ln 9` years.
    #[serde(rename = "b")]
    pub shape: f64,
    pub rss: f64,
    /// Residual sum of squares at the initial guess.
    pub initial_rss: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `K / (1 + exp(-(t - a) / b))`.
pub fn logistic(capacity: f64, inflection: f64, shape: f64, t: f64) -> f64 {
    capacity / (1.0 + (-(t - inflection) / shape).exp())
}

impl LogisticFit {
    /// A fit with the given parameters and no solver history.
    pub fn from_params(capacity: f64, inflection: f64, shape: f64) -> Self {
        LogisticFit {
            capacity,
            inflection,
            shape,
            rss: 0.0,
            initial_rss: 0.0,
            iterations: 0,
            converged: true,
        }
    }

    pub fn params(&self) -> [f64; 3] {
        [self.capacity, self.inflection, self.shape]
    }

    pub fn predict(&self, t: f64) -> f64 {
        logistic(self.capacity, self.inflection, self.shape, t)
    }

    /// Time at which the curve reaches `ratio · K`, for `0 < ratio < 1`.
    pub fn crossing(&self, ratio: f64) -> f64 {
        self.inflection - self.shape * (1.0 / ratio - 1.0).ln()
    }
}

pub fn predict(fit: &LogisticFit, t: f64) -> f64 {
    fit.predict(t)
}

/// Partial derivatives of the logistic with respect to `(K, a, b)` at `t`.
pub fn jacobian_row(params: [f64; 3], t: f64) -> [f64; 3] {
    let [capacity, inflection, shape] = params;
    let z = (t - inflection) / shape;
    let s = 1.0 / (1.0 + (-z).exp());
    let slope = capacity * s * (1.0 - s);
    [s, -slope / shape, -slope * z / shape]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Converged when an accepted step changes rss by less than this fraction.
    pub rss_tol: f64,
    /// Converged when no parameter moves by more than this fraction.
    pub step_tol: f64,
    /// Lower bound on the initial shape guess.
    pub shape_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iter: 500,
            rss_tol: 1e-10,
            step_tol: 1e-8,
            shape_floor: 0.25,
        }
    }
}

/// Fits the cumulative counts of `series`.
pub fn fit_logistic(series: &YearlySeries, config: &SolverConfig) -> Result<LogisticFit> {
    fit_logistic_points(&series.cumulative_points(), config)
}

const MIN_YEARS: usize = 4;

/// Fits `(t, y)` observations, `y` cumulative.
pub fn fit_logistic_points(points: &[(f64, f64)], config: &SolverConfig) -> Result<LogisticFit> {
    let mut distinct: Vec<f64> = points.iter().filter(|p| p.1 != 0.0).map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < MIN_YEARS {
        return Err(Error::TooFewPoints {
            found: distinct.len(),
            needed: MIN_YEARS,
        });
    }
    if points.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::InvalidArgument("non-finite observation".into()));
    }
    let y_max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let y_min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    if y_max == y_min {
        return Err(Error::DegenerateSeries);
    }

    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let lower = Bounds {
        capacity: y_max * (1.0 - 1e-6),
        shape: 1e-9,
    };
    let start = lower.project(initial_guess(&sorted, config.shape_floor));
    Ok(levenberg_marquardt(&sorted, start, lower, config))
}

/// `K0 = 1.05 max(y)`, `a0` where `y` first reaches `K0/2`, and
/// `b0 = (t75 - t25) / (2 ln 3)` from the quartile crossings, at least
/// `shape_floor`. `points` must be sorted by time.
pub fn initial_guess(points: &[(f64, f64)], shape_floor: f64) -> [f64; 3] {
    let y_max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let capacity = 1.05 * y_max;
    let inflection = first_crossing(points, capacity / 2.0);
    let spread = first_crossing(points, 0.75 * capacity) - first_crossing(points, 0.25 * capacity);
    let shape = (spread / (2.0 * 3f64.ln())).max(shape_floor);
    [capacity, inflection, shape]
}

/// First time `y` reaches `level`, linearly interpolated; the first or last
/// time when `level` lies outside the data.
fn first_crossing(points: &[(f64, f64)], level: f64) -> f64 {
    for (i, &(t, y)) in points.iter().enumerate() {
        if y >= level {
            if i == 0 {
                return t;
            }
            let (t0, y0) = points[i - 1];
            return t0 + (level - y0) / (y - y0) * (t - t0);
        }
    }
    points.last().map_or(0.0, |p| p.0)
}

#[derive(Debug, Clone, Copy)]
struct Bounds {
    capacity: f64,
    shape: f64,
}

impl Bounds {
    fn project(&self, p: [f64; 3]) -> [f64; 3] {
        [p[0].max(self.capacity), p[1], p[2].max(self.shape)]
    }
}

fn rss(points: &[(f64, f64)], p: [f64; 3]) -> f64 {
    points
        .iter()
        .map(|&(t, y)| {
            let r = y - logistic(p[0], p[1], p[2], t);
            r * r
        })
        .sum()
}

fn levenberg_marquardt(points: &[(f64, f64)], start: [f64; 3], bounds: Bounds, config: &SolverConfig) -> LogisticFit {
    let mut p = start;
    let initial_rss = rss(points, p);
    let mut current = initial_rss;
    let mut lambda = 1e-3;
    let mut converged = current == 0.0;
    let mut iterations = 0;

    while !converged && iterations < config.max_iter {
        iterations += 1;
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for &(t, y) in points {
            let row = jacobian_row(p, t);
            let r = y - logistic(p[0], p[1], p[2], t);
            for i in 0..3 {
                jtr[i] += row[i] * r;
                for j in 0..3 {
                    jtj[i][j] += row[i] * row[j];
                }
            }
        }

        // Retry with heavier damping until a step lowers rss.
        loop {
            let mut damped = jtj;
            for (i, row) in damped.iter_mut().enumerate() {
                row[i] += lambda * jtj[i][i].max(1e-12);
            }
            let step = solve3(damped, jtr);
            let candidate = step.map(|d| bounds.project([p[0] + d[0], p[1] + d[1], p[2] + d[2]]));
            let moved = candidate.map_or(0.0, |c| {
                (0..3)
                    .map(|i| (c[i] - p[i]).abs() / p[i].abs().max(1e-12))
                    .fold(0.0, f64::max)
            });
            match candidate {
                Some(c) if rss(points, c) < current => {
                    let next = rss(points, c);
                    let relative = (current - next) / current;
                    p = c;
                    current = next;
                    lambda = (lambda / 10.0).max(1e-12);
                    converged = next == 0.0 || relative < config.rss_tol || moved < config.step_tol;
                    break;
                }
                _ => {
                    if candidate.is_some() && moved < config.step_tol {
                        converged = true;
                        break;
                    }
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        break;
                    }
                }
            }
        }
        if lambda > 1e16 {
            break;
        }
    }

    LogisticFit {
        capacity: p[0],
        inflection: p[1],
        shape: p[2],
        rss: current,
        initial_rss,
        iterations,
        converged,
    }
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 || !m[pivot][col].is_finite() {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (x, p) in m[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - tail) / m[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Ratio boundaries between the four stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageThresholds {
    pub emerging_upper: f64,
    pub growth_upper: f64,
    pub maturity_upper: f64,
}

impl Default for StageThresholds {
    fn default() -> Self {
        StageThresholds {
            emerging_upper: 0.10,
            growth_upper: 0.50,
            maturity_upper: 0.90,
        }
    }
}

impl StageThresholds {
    pub fn validate(&self) -> Result<()> {
        let t = [self.emerging_upper, self.growth_upper, self.maturity_upper];
        let ok = t.iter().all(|&x| x > 0.0 && x < 1.0) && t[0] < t[1] && t[1] < t[2];
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "stage thresholds must be strictly increasing in (0, 1), got {t:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Emerging,
    Growth,
    Maturity,
    Saturation,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Emerging => "emerging",
            Stage::Growth => "growth",
            Stage::Maturity => "maturity",
            Stage::Saturation => "saturation",
        }
    }
}

/// A ratio exactly on a boundary belongs to the later stage.
pub fn stage_for_ratio(ratio: f64, thresholds: &StageThresholds) -> Stage {
    if ratio < thresholds.emerging_upper {
        Stage::Emerging
    } else if ratio < thresholds.growth_upper {
        Stage::Growth
    } else if ratio < thresholds.maturity_upper {
        Stage::Maturity
    } else {
        Stage::Saturation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageAssessment {
    pub ratio: f64,
    pub stage: Stage,
}

pub fn classify_stage(fit: &LogisticFit, t_now: i32, thresholds: &StageThresholds) -> StageAssessment {
    let ratio = fit.predict(f64::from(t_now)) / fit.capacity;
    StageAssessment {
        ratio,
        stage: stage_for_ratio(ratio, thresholds),
    }
}

/// Real-valued threshold crossings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageCrossings {
    pub growth: f64,
    pub maturity: f64,
    pub saturation: f64,
}

/// First whole year at or after each crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StageYears {
    pub growth_start: i32,
    pub maturity_start: i32,
    pub saturation_start: i32,
}

pub fn stage_crossings(fit: &LogisticFit, thresholds: &StageThresholds) -> StageCrossings {
    StageCrossings {
        growth: fit.crossing(thresholds.emerging_upper),
        maturity: fit.crossing(thresholds.growth_upper),
        saturation: fit.crossing(thresholds.maturity_upper),
    }
}

pub fn stage_years(fit: &LogisticFit, thresholds: &StageThresholds) -> StageYears {
    let c = stage_crossings(fit, thresholds);
    let year = |t: f64| t.ceil() as i32;
    StageYears {
        growth_start: year(c.growth),
        maturity_start: year(c.maturity),
        saturation_start: year(c.saturation),
    }
}

/// `(t, y)` on the inclusive grid `t_from, t_from + step, ..., <= t_to`.
pub fn scurve_samples(fit: &LogisticFit, t_from: f64, t_to: f64, step: f64) -> Result<Vec<(f64, f64)>> {
    let valid = t_from < t_to && step > 0.0;
    if !valid {
        return Err(Error::InvalidArgument(format!(
            "bad sampling grid {t_from}..{t_to} step {step}"
        )));
    }
    let count = ((t_to - t_from) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| {
            let t = t_from + i as f64 * step;
            (t, fit.predict(t))
        })
        .collect())
}

/// One row of the stage report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub cluster: String,
    pub n_patents: u64,
    pub t_now: i32,
    pub ratio: f64,
    pub stage: Stage,
    pub transition_years: StageYears,
    pub crossings: StageCrossings,
    pub fit: LogisticFit,
}

pub fn stage_report(
    cluster: impl Into<String>,
    series: &YearlySeries,
    config: &SolverConfig,
    thresholds: &StageThresholds,
) -> Result<StageReport> {
    let fit = fit_logistic(series, config)?;
    let t_now = series.end_year();
    let assessment = classify_stage(&fit, t_now, thresholds);
    Ok(StageReport {
        cluster: cluster.into(),
        n_patents: series.total(),
        t_now,
        ratio: assessment.ratio,
        stage: assessment.stage,
        transition_years: stage_years(&fit, thresholds),
        crossings: stage_crossings(&fit, thresholds),
        fit,
    })
}
