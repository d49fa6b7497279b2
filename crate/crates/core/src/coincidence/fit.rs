use serde::{Deserialize, Serialize};

use super::histogram::CoincidenceHistogram;
use super::width::FWHM_PER_SIGMA;
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 200;
const REL_TOL: f64 = 1e-8;
/// Lower bound on the model used in Poisson weights and the log-likelihood.
const MU_FLOOR: f64 = 1e-3;
const MIN_SIGMA_BINS: f64 = 0.05;

/// Gaussian-plus-constant fit to a coincidence histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub center_ps: f64,
    pub sigma_ps: f64,
    pub fwhm_ps: f64,
    /// Peak height above baseline, counts per bin.
    pub amplitude: f64,
    /// Accidental floor, counts per bin.
    pub baseline: f64,
    /// Area under the Gaussian in counts.
    pub pair_count: f64,
    pub car: f64,
    pub reduced_chi2: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy)]
struct Params {
    a: f64,
    c: f64,
    s: f64,
    b: f64,
}

impl Params {
    fn mu(&self, x: f64) -> f64 {
        let u = (x - self.c) / self.s;
        self.a * (-0.5 * u * u).exp() + self.b
    }
}

fn neg_log_likelihood(p: &Params, y: &[f64]) -> f64 {
    y.iter()
        .enumerate()
        .map(|(i, &yi)| {
            let mu = p.mu(i as f64 + 0.5).max(MU_FLOOR);
            if yi > 0.0 {
                mu - yi * mu.ln()
            } else {
                mu
            }
        })
        .sum()
}

fn solve4(mut m: [[f64; 4]; 4], mut v: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        v.swap(col, piv);
        for r in col + 1..4 {
            let f = m[r][col] / m[col][col];
            for k in col..4 {
                m[r][k] -= f * m[col][k];
            }
            v[r] -= f * v[col];
        }
    }
    let mut x = [0.0; 4];
    for r in (0..4).rev() {
        let s: f64 = (r + 1..4).map(|k| m[r][k] * x[k]).sum();
        x[r] = (v[r] - s) / m[r][r];
    }
    Some(x)
}

fn initial_guess(y: &[f64]) -> Result<Params> {
    let (imax, &ymax) = y
        .iter()
        .enumerate()
        .max_by(|p, q| p.1.total_cmp(q.1).then(q.0.cmp(&p.0)))
        .ok_or_else(|| Error::arg("empty histogram"))?;
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rough_floor = sorted[sorted.len() / 2];
    let half = rough_floor + 0.5 * (ymax - rough_floor);
    let mut l = imax;
    while l > 0 && y[l - 1] > half {
        l -= 1;
    }
    let mut r = imax;
    while r + 1 < y.len() && y[r + 1] > half {
        r += 1;
    }
    let c0 = imax as f64 + 0.5;
    let mut s0 = ((r - l + 1) as f64 / FWHM_PER_SIGMA).max(0.5);

    let side: Vec<f64> = y
        .iter()
        .enumerate()
        .filter(|(i, _)| ((*i as f64 + 0.5) - c0).abs() > 5.0 * s0)
        .map(|(_, &v)| v)
        .collect();
    let b0 = if side.is_empty() {
        sorted[0]
    } else {
        side.iter().sum::<f64>() / side.len() as f64
    };
    if ymax <= b0 || ymax < b0 + 5.0 * b0.sqrt() {
        return Err(Error::NoPeak {
            max: ymax as u64,
            baseline: b0,
        });
    }

    let (mut w0, mut w1, mut w2) = (0.0, 0.0, 0.0);
    for (i, &v) in y.iter().enumerate() {
        let x = i as f64 + 0.5;
        if (x - c0).abs() <= 5.0 * s0 {
            let w = (v - b0).max(0.0);
            w0 += w;
            w1 += w * x;
            w2 += w * x * x;
        }
    }
    if w0 > 0.0 {
        let m = w1 / w0;
        let var = w2 / w0 - m * m;
        if var.is_finite() && var > 0.0 {
            s0 = var.sqrt().max(0.5);
        }
    }
    Ok(Params {
        a: ymax - b0,
        c: c0,
        s: s0,
        b: b0.max(0.0),
    })
}

/// Maximum-likelihood fit of `A·exp(−(x−c)²/2σ²) + B` under Poisson counts.
///
/// Fisher scoring with step halving on the Poisson deviance; parameters are
/// iterated in bin-index units so that translating the histogram translates
/// the fitted center exactly.
pub fn fit_peak(h: &CoincidenceHistogram) -> Result<PeakFit> {
    let y: Vec<f64> = h.counts.iter().map(|&c| c as f64).collect();
    if y.len() < 5 {
        return Err(Error::arg(format!("need at least 5 bins, got {}", y.len())));
    }
    let mut p = initial_guess(&y)?;
    let mut nll = neg_log_likelihood(&p, &y);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for (i, &yi) in y.iter().enumerate() {
            let x = i as f64 + 0.5;
            let u = (x - p.c) / p.s;
            let g = (-0.5 * u * u).exp();
            let mu = p.a * g + p.b;
            let w = 1.0 / mu.max(MU_FLOOR);
            let j = [g, p.a * g * u / p.s, p.a * g * u * u / p.s, 1.0];
            for r in 0..4 {
                jtr[r] += w * j[r] * (yi - mu);
                for k in 0..4 {
                    jtj[r][k] += w * j[r] * j[k];
                }
            }
        }
        let Some(delta) = solve4(jtj, jtr) else {
            return Err(Error::NonConvergence { iterations });
        };
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = Params {
                a: (p.a + step * delta[0]).max(0.0),
                c: p.c + step * delta[1],
                s: (p.s + step * delta[2]).max(MIN_SIGMA_BINS),
                b: (p.b + step * delta[3]).max(0.0),
            };
            let t = neg_log_likelihood(&trial, &y);
            if t <= nll {
                accepted = Some((trial, t));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, t)) => {
                let small = (trial.a - p.a).abs() <= REL_TOL * p.a.max(1.0)
                    && (trial.c - p.c).abs() <= REL_TOL * p.s
                    && (trial.s - p.s).abs() <= REL_TOL * p.s
                    && (trial.b - p.b).abs() <= REL_TOL * p.b.max(1.0);
                p = trial;
                nll = t;
                if small {
                    converged = true;
                    break;
                }
            }
            None => {
                // No decrease along the scoring direction: at the optimum to
                // within floating-point resolution.
                converged = true;
                break;
            }
        }
    }
    if !converged || !(p.a > 0.0) {
        return Err(Error::NonConvergence { iterations });
    }

    let bw = h.bin_width_ps as f64;
    let total = y.iter().sum::<f64>();
    let chi2: f64 = y
        .iter()
        .enumerate()
        .map(|(i, &yi)| {
            let mu = p.mu(i as f64 + 0.5).max(MU_FLOOR);
            (yi - mu) * (yi - mu) / mu
        })
        .sum();
    let mut fit = PeakFit {
        center_ps: h.offset_origin_ps as f64 + p.c * bw,
        sigma_ps: p.s * bw,
        fwhm_ps: FWHM_PER_SIGMA * p.s * bw,
        amplitude: p.a,
        baseline: p.b,
        pair_count: (p.a * p.s * (2.0 * std::f64::consts::PI).sqrt()).min(total),
        car: 0.0,
        reduced_chi2: chi2 / (y.len() - 4) as f64,
        iterations,
    };
    fit.car = estimate_car(h, &fit);
    Ok(fit)
}

/// Coincidence-to-accidental ratio over the bins within `center ± 3σ`.
///
/// `N_acc = baseline · n_bins`, `N_true = max(Σ counts − N_acc, 0)`.
/// Returns `+∞` when the fitted baseline is zero.
pub fn estimate_car(h: &CoincidenceHistogram, fit: &PeakFit) -> f64 {
    let (lo, hi) = (fit.center_ps - 3.0 * fit.sigma_ps, fit.center_ps + 3.0 * fit.sigma_ps);
    let (mut n, mut sum) = (0usize, 0.0);
    for (i, &c) in h.counts.iter().enumerate() {
        let x = h.bin_center_ps(i);
        if x >= lo && x <= hi {
            n += 1;
            sum += c as f64;
        }
    }
    let acc = fit.baseline * n as f64;
    if acc <= 0.0 {
        return f64::INFINITY;
    }
    (sum - acc).max(0.0) / acc
}
