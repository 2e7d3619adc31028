//! Single-predictor logistic baselines scored by in-sample AUC.

use crate::analytic::AnalyticSeries;
use crate::error::{Error, Result};
use crate::events::EventSet;
use crate::timeseries::{RegularSeries, Timestamp, DAY, HOUR};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    ClockTime,
    CircadianPhase,
    SleepScore,
}

impl PredictorKind {
    pub fn feature_names(self) -> Vec<String> {
        let names: &[&str] = match self {
            PredictorKind::ClockTime => &["sin_clock", "cos_clock"],
            PredictorKind::CircadianPhase => &["sin_phase", "cos_phase"],
            PredictorKind::SleepScore => &["sleep_z"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub features: Vec<f64>,
    pub label: bool,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledDesign {
    pub rows: Vec<DesignRow>,
    pub predictor_kind: PredictorKind,
    pub feature_names: Vec<String>,
}

impl LabelledDesign {
    pub fn n_positive(&self) -> usize {
        self.rows.iter().filter(|r| r.label).count()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.label).collect()
    }
}

/// Inputs for [`build_design`]; only the ones the predictor needs must be set.
#[derive(Debug, Clone, Copy)]
pub struct DesignInputs<'a> {
    /// Hourly analysis grid.
    pub grid: &'a RegularSeries,
    /// Circadian-band phase segments on the same grid.
    pub analytic: &'a [AnalyticSeries],
    /// Daily sleep score, already shifted to the following day and z-scored.
    pub sleep: Option<&'a RegularSeries>,
    pub events: &'a EventSet,
    pub tz_offset_seconds: i64,
}

/// One row per hourly grid slot where the predictor is defined; a row is
/// positive when an event onset falls inside `[t, t + 1 h)`.
pub fn build_design(inputs: &DesignInputs<'_>, kind: PredictorKind) -> Result<LabelledDesign> {
    let grid = inputs.grid;
    if grid.step() != HOUR {
        return Err(Error::data("baseline design requires an hourly grid"));
    }
    let event_slots: HashSet<i64> = inputs
        .events
        .onsets()
        .iter()
        .map(|&e| (e - grid.start()).div_euclid(HOUR))
        .collect();
    let label_at = |t: Timestamp| event_slots.contains(&(t - grid.start()).div_euclid(HOUR));

    let mut rows = Vec::new();
    match kind {
        PredictorKind::ClockTime => {
            for i in 0..grid.len() {
                let t = grid.time_at(i);
                let angle =
                    2.0 * PI * (t + inputs.tz_offset_seconds).rem_euclid(DAY) as f64 / DAY as f64;
                rows.push(DesignRow {
                    features: vec![angle.sin(), angle.cos()],
                    label: label_at(t),
                    timestamp: t,
                });
            }
        }
        PredictorKind::CircadianPhase => {
            for series in inputs.analytic {
                if series.step != HOUR {
                    return Err(Error::data("phase series is not on the hourly grid"));
                }
                for (i, &phase) in series.phase.iter().enumerate() {
                    let t = series.time_at(i);
                    rows.push(DesignRow {
                        features: vec![phase.sin(), phase.cos()],
                        label: label_at(t),
                        timestamp: t,
                    });
                }
            }
            rows.sort_by_key(|r| r.timestamp);
        }
        PredictorKind::SleepScore => {
            let sleep = inputs
                .sleep
                .ok_or_else(|| Error::data("sleep predictor requested without a sleep series"))?;
            for i in 0..grid.len() {
                let t = grid.time_at(i);
                if let Some(Some(v)) = sleep.slot_containing(t).map(|d| sleep.values()[d]) {
                    rows.push(DesignRow {
                        features: vec![v],
                        label: label_at(t),
                        timestamp: t,
                    });
                }
            }
        }
    }
    if !rows.iter().any(|r| r.label) {
        return Err(Error::data("no events in coverage"));
    }
    Ok(LabelledDesign {
        rows,
        predictor_kind: kind,
        feature_names: kind.feature_names(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    /// Intercept first.
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub auc: f64,
    /// Max-norm of the penalized score at the returned coefficients.
    pub gradient_max_norm: f64,
}

impl LogisticFit {
    pub fn linear_predictor(&self, features: &[f64]) -> f64 {
        self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(features)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    pub ridge: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            ridge: 1e-4,
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn design_matrix(design: &LabelledDesign) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = design.rows.len();
    let k = design.feature_names.len();
    if design.rows.iter().any(|r| r.features.len() != k) {
        return Err(Error::data("design rows have inconsistent feature counts"));
    }
    let x = DMatrix::from_fn(n, k + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            design.rows[i].features[j - 1]
        }
    });
    let y = DVector::from_iterator(n, design.rows.iter().map(|r| f64::from(u8::from(r.label))));
    Ok((x, y))
}

/// Gradient of the ridge-penalized Bernoulli log-likelihood (intercept unpenalized).
pub fn penalized_gradient(
    design: &LabelledDesign,
    coefficients: &[f64],
    ridge: f64,
) -> Result<Vec<f64>> {
    let (x, y) = design_matrix(design)?;
    let beta = DVector::from_column_slice(coefficients);
    Ok(gradient(&x, &y, &beta, ridge).iter().copied().collect())
}

/// Ridge-penalized log-likelihood, the objective [`fit_logistic`] maximizes.
pub fn penalized_log_likelihood(
    design: &LabelledDesign,
    coefficients: &[f64],
    ridge: f64,
) -> Result<f64> {
    let (x, y) = design_matrix(design)?;
    let beta = DVector::from_column_slice(coefficients);
    let eta = &x * &beta;
    let ll: f64 = eta
        .iter()
        .zip(y.iter())
        .map(|(&e, &yi)| {
            // log(1 + exp(e)) computed stably
            let softplus = if e > 0.0 {
                e + (-e).exp().ln_1p()
            } else {
                e.exp().ln_1p()
            };
            yi * e - softplus
        })
        .sum();
    let penalty: f64 = coefficients[1..].iter().map(|b| b * b).sum();
    Ok(ll - 0.5 * ridge * penalty)
}

fn gradient(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, ridge: f64) -> DVector<f64> {
    let p = (x * beta).map(sigmoid);
    let mut g = x.transpose() * (y - p);
    for j in 1..beta.len() {
        g[j] -= ridge * beta[j];
    }
    g
}

/// Iteratively reweighted least squares (Newton's method) on the
/// ridge-penalized log-likelihood. Convergence requires the score max-norm
/// below `tol` and a Newton step that has stopped moving the coefficients;
/// the second condition catches separable data, where the score vanishes
/// while the coefficients run off to infinity.
/// X' W X plus the ridge on non-intercept terms, W = diag(p(1-p)).
fn hessian(x: &DMatrix<f64>, beta: &DVector<f64>, ridge: f64) -> DMatrix<f64> {
    let p = (x * beta).map(sigmoid);
    let mut weighted = x.clone();
    for (mut row, pi) in weighted.row_iter_mut().zip(p.iter()) {
        row *= pi * (1.0 - pi);
    }
    let mut h = x.transpose() * weighted;
    for j in 1..h.ncols() {
        h[(j, j)] += ridge;
    }
    h
}

pub fn fit_logistic(design: &LabelledDesign, options: &LogisticOptions) -> Result<LogisticFit> {
    if options.ridge < 0.0 || !options.ridge.is_finite() {
        return Err(Error::data("ridge must be a finite non-negative number"));
    }
    let n_pos = design.n_positive();
    if n_pos == 0 || n_pos == design.rows.len() {
        return Err(Error::data(
            "logistic fit needs both positive and negative rows",
        ));
    }
    let (x, y) = design_matrix(design)?;
    let k = x.ncols();
    let mut beta = DVector::zeros(k);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iter {
        let g = gradient(&x, &y, &beta, options.ridge);
        let h = hessian(&x, &beta, options.ridge);
        let Some(step) = h.cholesky().map(|c| c.solve(&g)) else {
            break;
        };
        if !step.iter().all(|v| v.is_finite()) {
            break;
        }
        let g_norm = g.amax();
        let step_norm = step.amax();
        if g_norm < options.tol && step_norm <= 1e-3 * (1.0 + beta.amax()) {
            converged = true;
            break;
        }
        beta += step;
        iterations += 1;
    }
    if !converged {
        // the loop can also exit right after a step that lands on the optimum
        let g = gradient(&x, &y, &beta, options.ridge);
        let h = hessian(&x, &beta, options.ridge);
        if let Some(step) = h.cholesky().map(|c| c.solve(&g)) {
            converged = g.amax() < options.tol && step.amax() <= 1e-3 * (1.0 + beta.amax());
        }
    }

    let gradient_max_norm = gradient(&x, &y, &beta, options.ridge).amax();
    let scores: Vec<f64> = (&x * &beta).iter().copied().collect();
    let labels = design.labels();
    Ok(LogisticFit {
        coefficients: beta.iter().copied().collect(),
        converged,
        iterations,
        auc: auc(&scores, &labels)?,
        gradient_max_norm,
    })
}

/// Mann-Whitney AUC: the probability a positive outscores a negative, ties
/// counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::data("scores and labels differ in length"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::data(
            "AUC needs at least one positive and one negative",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // twice the concordant count, kept integral
    let mut twice_wins: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_wins += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        i = j;
    }
    Ok(twice_wins as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// ROC points `(false positive rate, true positive rate)` from the highest
/// threshold down, starting at `(0, 0)`; tied scores form one step.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    if scores.len() != labels.len() {
        return Err(Error::data("scores and labels differ in length"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(Error::data(
            "ROC needs at least one positive and one negative",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push((fp / n_neg, tp / n_pos));
    }
    Ok(points)
}
