//! Sideband spectroscopy of a motional state and the Stark calibration scan.
//!
//! A red-sideband pulse of length τ on `|g⟩ ⊗ Σ p(j)` excites the spin with
//! probability `Σ_j p(j) e^{-√j γ τ} (1 - cos(√j Ω τ))/2`; the blue sideband
//! uses `√(j+1)`. Populations are recovered by least squares on the
//! probability simplex.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::pulse::CompositeState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PopulationDistribution(Vec<f64>);

impl TryFrom<Vec<f64>> for PopulationDistribution {
    type Error = Error;

    fn try_from(p: Vec<f64>) -> Result<Self> {
        Self::new(p)
    }
}

impl From<PopulationDistribution> for Vec<f64> {
    fn from(p: PopulationDistribution) -> Self {
        p.0
    }
}

impl PopulationDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::EmptyState);
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        if let Some(x) = p.iter().find(|&&x| x < 0.0) {
            return Err(Error::InvalidParameter {
                name: "p",
                reason: format!("negative population {x}"),
            });
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized { norm_sqr: sum });
        }
        Ok(Self(p))
    }

    /// Poisson distribution cut at `j_max` and renormalized.
    pub fn poisson(mean: f64, j_max: usize) -> Self {
        let mut p = Vec::with_capacity(j_max + 1);
        let mut term = (-mean).exp();
        for j in 0..=j_max {
            if j > 0 {
                term *= mean / j as f64;
            }
            p.push(term);
        }
        let s: f64 = p.iter().sum();
        Self(p.into_iter().map(|x| x / s).collect())
    }

    pub fn delta(level: usize, j_max: usize) -> Result<Self> {
        if level > j_max {
            return Err(Error::LevelOutOfRange { level, dim: j_max + 1 });
        }
        let mut p = vec![0.0; j_max + 1];
        p[level] = 1.0;
        Ok(Self(p))
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    /// Real non-negative amplitudes `√p(j)`.
    pub fn sqrt_amplitudes(&self) -> Vec<f64> {
        self.0.iter().map(|p| p.sqrt()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SidebandKind {
    Red,
    Blue,
}

impl SidebandKind {
    /// Rabi multiplier of level `j`.
    fn scale(self, j: usize) -> f64 {
        match self {
            SidebandKind::Red => (j as f64).sqrt(),
            SidebandKind::Blue => ((j + 1) as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidebandSignal {
    /// Pulse durations in seconds, strictly increasing.
    pub taus: Vec<f64>,
    pub pe: Vec<f64>,
    pub kind: SidebandKind,
    pub omega_rsb: f64,
    pub gamma: f64,
    pub shots: Option<Vec<u64>>,
}

fn check_grid(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::InvalidParameter {
            name: "taus",
            reason: "empty time grid".into(),
        });
    }
    if taus.iter().any(|t| !t.is_finite() || *t < 0.0) || taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter {
            name: "taus",
            reason: "durations must be finite, >= 0 and strictly increasing".into(),
        });
    }
    Ok(())
}

fn model_column(j: usize, kind: SidebandKind, omega: f64, gamma: f64, taus: &[f64]) -> Vec<f64> {
    let s = kind.scale(j);
    taus.iter()
        .map(|&t| (-s * gamma * t).exp() * (1.0 - (s * omega * t).cos()) / 2.0)
        .collect()
}

pub fn sideband_signal(
    p: &PopulationDistribution,
    omega_rsb: f64,
    gamma: f64,
    taus: &[f64],
    kind: SidebandKind,
) -> Result<SidebandSignal> {
    check_grid(taus)?;
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: format!("decay rate must be >= 0, got {gamma}"),
        });
    }
    let mut pe = vec![0.0; taus.len()];
    for (j, &pj) in p.probabilities().iter().enumerate() {
        if pj == 0.0 {
            continue;
        }
        for (v, c) in pe.iter_mut().zip(model_column(j, kind, omega_rsb, gamma, taus)) {
            *v += pj * c;
        }
    }
    for v in &mut pe {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(SidebandSignal {
        taus: taus.to_vec(),
        pe,
        kind,
        omega_rsb,
        gamma,
        shots: None,
    })
}

/// Replace each point by the fraction of `shots` bright outcomes.
pub fn sample_signal(signal: &SidebandSignal, shots: u64, seed: u64) -> Result<SidebandSignal> {
    if shots == 0 {
        return Err(Error::InvalidParameter {
            name: "shots",
            reason: "need at least one shot per point".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pe = signal
        .pe
        .iter()
        .map(|&p| {
            let d = Binomial::new(shots, p.clamp(0.0, 1.0)).map_err(|e| Error::InvalidParameter {
                name: "pe",
                reason: e.to_string(),
            })?;
            Ok(d.sample(&mut rng) as f64 / shots as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SidebandSignal {
        pe,
        shots: Some(vec![shots; signal.taus.len()]),
        ..signal.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RateParam {
    Fixed { value: f64 },
    Fitted { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub j_max: usize,
    pub omega: RateParam,
    pub gamma: RateParam,
    pub condition_threshold: f64,
}

impl FitConfig {
    pub fn fixed(omega: f64, gamma: f64) -> Self {
        Self {
            j_max: 6,
            omega: RateParam::Fixed { value: omega },
            gamma: RateParam::Fixed { value: gamma },
            condition_threshold: 1e8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub populations: PopulationDistribution,
    /// `‖model - signal‖₂` at the optimum.
    pub residual_norm: f64,
    pub omega_rsb: f64,
    pub gamma: f64,
    /// 2-norm condition number of the design matrix with the sum row.
    pub condition: f64,
}

/// Lawson-Hanson non-negative least squares `min ‖Ax - b‖, x ≥ 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let tol = 10.0 * f64::EPSILON * a.norm().max(1.0) * b.norm().max(1.0);
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let solve = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = a.select_columns(&idx);
        let sol = sub
            .svd(true, true)
            .solve(b, 1e-14)
            .unwrap_or_else(|_| DVector::zeros(idx.len()));
        let mut full = DVector::<f64>::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            full[j] = sol[k];
        }
        full
    };
    for _ in 0..(3 * n + 10) {
        let w = a.transpose() * (b - a * &x);
        let cand = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        match cand {
            Some(t) if w[t] > tol => passive[t] = true,
            _ => break,
        }
        loop {
            let s = solve(&passive);
            if (0..n).filter(|&j| passive[j]).all(|j| s[j] > 0.0) {
                x = s;
                break;
            }
            let mut alpha = f64::INFINITY;
            for j in (0..n).filter(|&j| passive[j] && s[j] <= 0.0) {
                alpha = alpha.min(x[j] / (x[j] - s[j]));
            }
            x += (s - &x) * alpha;
            for j in 0..n {
                if passive[j] && x[j] <= tol {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

struct SimplexFit {
    p: Vec<f64>,
    residual: f64,
}

fn design(signal: &SidebandSignal, j_max: usize, omega: f64, gamma: f64) -> DMatrix<f64> {
    let m = signal.taus.len();
    let mut a = DMatrix::<f64>::zeros(m, j_max + 1);
    for j in 0..=j_max {
        for (i, v) in model_column(j, signal.kind, omega, gamma, &signal.taus).into_iter().enumerate() {
            a[(i, j)] = v;
        }
    }
    a
}

/// Least squares on the simplex: the unit-sum constraint enters as a heavily
/// weighted extra row, non-negativity through NNLS.
fn simplex_fit(signal: &SidebandSignal, j_max: usize, omega: f64, gamma: f64) -> SimplexFit {
    let a = design(signal, j_max, omega, gamma);
    let (m, n) = a.shape();
    let weight = 1e4 * (m as f64).sqrt();
    let mut aug = a.clone().insert_row(m, 0.0);
    let mut b = DVector::<f64>::from_column_slice(&signal.pe).insert_row(m, weight);
    for j in 0..n {
        aug[(m, j)] = weight;
    }
    b[m] = weight;
    let x = nnls(&aug, &b);
    let sum: f64 = x.iter().sum();
    let p: Vec<f64> = if sum > 0.0 {
        x.iter().map(|v| v / sum).collect()
    } else {
        let mut p = vec![0.0; n];
        p[0] = 1.0;
        p
    };
    let model = &a * DVector::from_column_slice(&p);
    let residual = (model - DVector::from_column_slice(&signal.pe)).norm();
    SimplexFit { p, residual }
}

fn condition_number(signal: &SidebandSignal, j_max: usize, omega: f64, gamma: f64) -> f64 {
    let a = design(signal, j_max, omega, gamma);
    let m = a.nrows();
    let a = a.insert_row(m, 1.0);
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Minimize a unimodal function on `[lo, hi]`.
fn golden_section(mut lo: f64, mut hi: f64, iters: usize, f: &mut dyn FnMut(f64) -> f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Angular frequency of the strongest spectral peak of a uniformly sampled
/// signal, or `None` for an irregular grid.
pub fn dominant_frequency(taus: &[f64], values: &[f64]) -> Option<f64> {
    let n = taus.len();
    if n < 4 {
        return None;
    }
    let dt = taus[1] - taus[0];
    if taus.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1e-300)) {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let len = (8 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = values.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let peak = (1..len / 2).max_by(|&a, &b| buf[a].norm_sqr().total_cmp(&buf[b].norm_sqr()))?;
    Some(TAU * peak as f64 / (len as f64 * dt))
}

fn resolve_gamma(signal: &SidebandSignal, config: &FitConfig, omega: f64) -> (f64, SimplexFit) {
    match config.gamma {
        RateParam::Fixed { value } => (value, simplex_fit(signal, config.j_max, omega, value)),
        RateParam::Fitted { lo, hi } => {
            let (g, _) = golden_section(lo, hi, 40, &mut |g| {
                simplex_fit(signal, config.j_max, omega, g).residual
            });
            (g, simplex_fit(signal, config.j_max, omega, g))
        }
    }
}

pub fn fit_populations(signal: &SidebandSignal, config: &FitConfig) -> Result<FitResult> {
    check_grid(&signal.taus)?;
    if signal.pe.len() != signal.taus.len() {
        return Err(Error::InvalidParameter {
            name: "pe",
            reason: format!("{} values for {} durations", signal.pe.len(), signal.taus.len()),
        });
    }
    let omega = match config.omega {
        RateParam::Fixed { value } => value,
        RateParam::Fitted { lo, hi } => {
            // warm start: the spectral peak is one of the √j-scaled lines
            let mut starts: Vec<f64> = (0..=40).map(|i| lo + (hi - lo) * i as f64 / 40.0).collect();
            if let Some(f) = dominant_frequency(&signal.taus, &signal.pe) {
                starts.extend(
                    (0..=config.j_max)
                        .map(|j| f / signal.kind.scale(j))
                        .filter(|w| w.is_finite() && *w >= lo && *w <= hi),
                );
            }
            let score = |w: f64| resolve_gamma(signal, config, w).1.residual;
            let best = starts
                .iter()
                .copied()
                .map(|w| (w, score(w)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(w, _)| w)
                .unwrap_or(lo);
            let step = (hi - lo) / 40.0;
            let (w, _) = golden_section((best - step).max(lo), (best + step).min(hi), 60, &mut |w| score(w));
            w
        }
    };
    let (gamma, fit) = resolve_gamma(signal, config, omega);
    let condition = condition_number(signal, config.j_max, omega, gamma);
    if condition > config.condition_threshold {
        return Err(Error::IllConditioned {
            condition,
            threshold: config.condition_threshold,
        });
    }
    Ok(FitResult {
        populations: PopulationDistribution(fit.p),
        residual_norm: fit.residual,
        omega_rsb: omega,
        gamma,
        condition,
    })
}

/// Ramsey fringe with a red-sideband pulse of length τ inserted between the
/// two π/2 pulses. The motion is in `|0⟩`; only the pulse's Stark rotation acts
/// on the spin. With compensation the second pulse's phase is advanced by
/// the accumulated Stark phase `Δω τ`.
pub fn ramsey_stark_scan(stark_shift: f64, taus: &[f64], compensate: bool) -> Result<Vec<(f64, f64)>> {
    let start = CompositeState::ground(&[1])?;
    Ok(taus
        .iter()
        .map(|&t| {
            let phase = if compensate { stark_shift * t } else { 0.0 };
            let end = start
                .apply_carrier(PI / 2.0, 0.0)
                .apply_stark(stark_shift, t)
                .apply_carrier(PI / 2.0, phase);
            (t, end.prob_e())
        })
        .collect())
}

impl SidebandSignal {
    /// CSV with header `tau_s,pe,shots` (shots empty when noiseless).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau_s,pe,shots\n");
        for (i, (t, p)) in self.taus.iter().zip(&self.pe).enumerate() {
            let shots = self.shots.as_ref().map(|s| s[i].to_string()).unwrap_or_default();
            let _ = writeln!(out, "{t},{p},{shots}");
        }
        out
    }

    pub fn from_csv(text: &str, kind: SidebandKind, omega_rsb: f64, gamma: f64) -> Result<Self> {
        let bad = |line: usize, what: &str| Error::InvalidParameter {
            name: "csv",
            reason: format!("line {line}: {what}"),
        };
        let mut taus = Vec::new();
        let mut pe = Vec::new();
        let mut shots = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() < 2 {
                return Err(bad(i + 1, "expected tau_s,pe[,shots]"));
            }
            taus.push(f[0].trim().parse::<f64>().map_err(|e| bad(i + 1, &e.to_string()))?);
            pe.push(f[1].trim().parse::<f64>().map_err(|e| bad(i + 1, &e.to_string()))?);
            if let Some(s) = f.get(2).map(|s| s.trim()).filter(|s| !s.is_empty()) {
                shots.push(s.parse::<u64>().map_err(|e| bad(i + 1, &e.to_string()))?);
            }
        }
        check_grid(&taus)?;
        let shots = match shots.len() {
            0 => None,
            n if n == taus.len() => Some(shots),
            _ => return Err(bad(0, "shots column must be complete or absent")),
        };
        Ok(Self {
            taus,
            pe,
            kind,
            omega_rsb,
            gamma,
            shots,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wigner::linspace;
    use approx::assert_abs_diff_eq;

    const OMEGA: f64 = TAU * 10e3;

    fn grid() -> Vec<f64> {
        // four periods of the single-phonon oscillation
        linspace(0.0, 4.0 * TAU / OMEGA, 401)
    }

    #[test]
    fn dark_and_single_level_signals() {
        let taus = grid();
        let s = sideband_signal(&PopulationDistribution::delta(0, 6).unwrap(), OMEGA, 0.0, &taus, SidebandKind::Red)
            .unwrap();
        assert!(s.pe.iter().all(|&p| p == 0.0));
        for kind in [SidebandKind::Red, SidebandKind::Blue] {
            let level = if kind == SidebandKind::Red { 1 } else { 0 };
            let p = PopulationDistribution::delta(level, 6).unwrap();
            let s = sideband_signal(&p, OMEGA, 0.0, &taus, kind).unwrap();
            for (t, v) in s.taus.iter().zip(&s.pe) {
                assert_abs_diff_eq!(*v, (1.0 - (OMEGA * t).cos()) / 2.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn rejects_bad_grid_and_distribution() {
        let p = PopulationDistribution::poisson(1.0, 6);
        assert!(sideband_signal(&p, OMEGA, 0.0, &[0.0, 2e-6, 1e-6], SidebandKind::Red).is_err());
        assert!(PopulationDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(PopulationDistribution::new(vec![1.2, -0.2]).is_err());
    }

    #[test]
    fn noiseless_round_trips() {
        let taus = grid();
        let cfg = FitConfig::fixed(OMEGA, 0.0);
        let poisson = PopulationDistribution::poisson(1.44, 6);
        let fit = fit_populations(&sideband_signal(&poisson, OMEGA, 0.0, &taus, SidebandKind::Red).unwrap(), &cfg)
            .unwrap();
        for (a, b) in fit.populations.probabilities().iter().zip(poisson.probabilities()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
        let delta = PopulationDistribution::delta(2, 6).unwrap();
        let fit = fit_populations(&sideband_signal(&delta, OMEGA, 0.0, &taus, SidebandKind::Blue).unwrap(), &cfg)
            .unwrap();
        for (a, b) in fit.populations.probabilities().iter().zip(delta.probabilities()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn floated_rates() {
        let taus = grid();
        let p = PopulationDistribution::poisson(1.0, 6);
        let gamma = 300.0;
        let s = sideband_signal(&p, OMEGA * 1.03, gamma, &taus, SidebandKind::Red).unwrap();
        let cfg = FitConfig {
            omega: RateParam::Fitted { lo: 0.8 * OMEGA, hi: 1.2 * OMEGA },
            gamma: RateParam::Fitted { lo: 0.0, hi: 2000.0 },
            ..FitConfig::fixed(OMEGA, 0.0)
        };
        let fit = fit_populations(&s, &cfg).unwrap();
        assert_abs_diff_eq!(fit.omega_rsb / OMEGA, 1.03, epsilon = 1e-4);
        assert_abs_diff_eq!(fit.gamma, gamma, epsilon = 5.0);
        for (a, b) in fit.populations.probabilities().iter().zip(p.probabilities()) {
            assert_abs_diff_eq!(a, b, epsilon = 2e-3);
        }
    }

    #[test]
    fn ill_conditioned_grid_reported() {
        // a grid far shorter than one period cannot separate the levels
        let taus = linspace(0.0, 0.02 * TAU / OMEGA, 30);
        let p = PopulationDistribution::poisson(1.0, 6);
        let s = sideband_signal(&p, OMEGA, 0.0, &taus, SidebandKind::Red).unwrap();
        assert!(matches!(
            fit_populations(&s, &FitConfig::fixed(OMEGA, 0.0)),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn nnls_matches_unconstrained_when_interior() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let x = nnls(&a, &b);
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 2.0, epsilon = 1e-12);
        let b = DVector::from_column_slice(&[-1.0, 2.0, 1.0]);
        let x = nnls(&a, &b);
        assert_eq!(x[0], 0.0);
        assert_abs_diff_eq!(x[1], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn ramsey_scans() {
        let shift = TAU * 5.9e3;
        let taus = linspace(0.0, 400e-6, 81);
        let on = ramsey_stark_scan(shift, &taus, true).unwrap();
        assert!(on.iter().all(|&(_, p)| (p - 1.0).abs() < 1e-12));
        let off = ramsey_stark_scan(shift, &taus, false).unwrap();
        for &(t, p) in &off {
            assert_abs_diff_eq!(p, (shift * t / 2.0).cos().powi(2), epsilon = 1e-12);
        }
        assert_eq!(ramsey_stark_scan(0.0, &taus, true).unwrap(), ramsey_stark_scan(0.0, &taus, false).unwrap());
    }

    #[test]
    fn csv_round_trip() {
        let p = PopulationDistribution::poisson(0.7, 6);
        let s = sideband_signal(&p, OMEGA, 0.0, &grid(), SidebandKind::Red).unwrap();
        let s = sample_signal(&s, 500, 3).unwrap();
        let back = SidebandSignal::from_csv(&s.to_csv(), s.kind, s.omega_rsb, s.gamma).unwrap();
        assert_eq!(back, s);
    }
}
