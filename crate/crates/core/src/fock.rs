//! Single-mode states in a truncated Fock basis.
//!
//! Every constructor returns a unit-norm state in canonical phase: the first
//! amplitude whose magnitude exceeds [`ZERO_AMPLITUDE`] is real and
//! non-negative. Overlaps between states of different truncation are taken by
//! zero-extending the shorter one.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Captured-norm tolerance used by the default truncation policy.
pub const DEFAULT_CAPTURE_TOL: f64 = 1e-6;

/// Largest truncation the adaptive policy will choose.
///
/// Squeezed vacuum with r = 1.5 needs 121 levels to capture 1 - 1e-6 of its
/// norm, so the cap sits comfortably above that.
pub const MAX_TRUNCATION: usize = 256;

/// Amplitudes at or below this magnitude are treated as zero when choosing the
/// canonical global phase.
pub const ZERO_AMPLITUDE: f64 = 1e-14;

/// How many Fock levels to keep when realizing an infinite series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Smallest dimension whose captured norm reaches `1 - tolerance`.
    Adaptive { tolerance: f64, max_dim: usize },
    /// A fixed dimension; fails if the captured norm is below `1 - tolerance`.
    Fixed { dim: usize, tolerance: f64 },
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::Adaptive {
            tolerance: DEFAULT_CAPTURE_TOL,
            max_dim: MAX_TRUNCATION,
        }
    }
}

impl Truncation {
    pub fn fixed(dim: usize) -> Self {
        Truncation::Fixed {
            dim,
            tolerance: DEFAULT_CAPTURE_TOL,
        }
    }

    fn tolerance(&self) -> f64 {
        match *self {
            Truncation::Adaptive { tolerance, .. } | Truncation::Fixed { tolerance, .. } => {
                tolerance
            }
        }
    }

    fn max_dim(&self) -> usize {
        match *self {
            Truncation::Adaptive { max_dim, .. } => max_dim,
            Truncation::Fixed { dim, .. } => dim,
        }
    }

    /// Keep the leading terms of a series whose squared amplitudes sum to
    /// `total`; the retained part is renormalized.
    fn apply(&self, mut terms: impl Iterator<Item = C64>, total: f64) -> Result<MotionalState> {
        let required = 1.0 - self.tolerance();
        let mut kept = Vec::new();
        let mut captured = 0.0;
        for _ in 0..self.max_dim() {
            let Some(c) = terms.next() else { break };
            captured += c.norm_sqr() / total;
            kept.push(c);
            if matches!(self, Truncation::Adaptive { .. }) && captured >= required {
                break;
            }
        }
        if captured < required {
            return Err(Error::TruncationTooSmall {
                dim: kept.len(),
                captured,
                required,
            });
        }
        MotionalState::new(kept)
    }
}

/// Unit-norm amplitude vector over Fock levels `0..dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<C64>", into = "Vec<C64>")]
pub struct MotionalState {
    amplitudes: Vec<C64>,
}

impl TryFrom<Vec<C64>> for MotionalState {
    type Error = Error;

    fn try_from(amplitudes: Vec<C64>) -> Result<Self> {
        MotionalState::new(amplitudes)
    }
}

impl From<MotionalState> for Vec<C64> {
    fn from(s: MotionalState) -> Self {
        s.amplitudes
    }
}

impl MotionalState {
    /// Normalize and canonicalize an arbitrary non-zero amplitude vector.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let mut s = Self::normalized_raw(amplitudes)?;
        s.canonicalize();
        Ok(s)
    }

    /// Normalize without touching the global phase.
    pub fn normalized_raw(mut amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::EmptyState);
        }
        if amplitudes.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let norm = amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        for c in &mut amplitudes {
            *c /= norm;
        }
        Ok(Self { amplitudes })
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::new(amplitudes.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn vacuum() -> Self {
        Self {
            amplitudes: vec![C64::new(1.0, 0.0)],
        }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// Amplitude at level `j`, zero beyond the truncation.
    pub fn amplitude(&self, j: usize) -> C64 {
        self.amplitudes.get(j).copied().unwrap_or_default()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn mean_phonon_number(&self) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(j, c)| j as f64 * c.norm_sqr())
            .sum()
    }

    /// Index of the first amplitude treated as non-zero.
    pub fn leading_index(&self) -> Option<usize> {
        self.amplitudes.iter().position(|c| c.norm() > ZERO_AMPLITUDE)
    }

    /// Rotate the global phase so the leading amplitude is real and positive.
    pub fn canonicalize(&mut self) {
        if let Some(j) = self.leading_index() {
            let lead = self.amplitudes[j];
            let rot = lead.conj() / lead.norm();
            for c in &mut self.amplitudes {
                *c *= rot;
            }
            // exact zero imaginary part on the leading entry
            self.amplitudes[j] = C64::new(self.amplitudes[j].norm(), 0.0);
        }
    }

    pub fn canonical(&self) -> Self {
        let mut s = self.clone();
        s.canonicalize();
        s
    }

    /// Amplitudes zero-extended (or cut) to `dim` entries, without renormalizing.
    pub fn padded(&self, dim: usize) -> Vec<C64> {
        let mut v = self.amplitudes.clone();
        v.resize(dim, C64::default());
        v
    }

    /// Keep the first `dim` levels and renormalize.
    pub fn truncated(&self, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyState);
        }
        Self::new(self.padded(dim))
    }

    /// Free harmonic evolution: level `j` picks up `exp(-i ω j t)`.
    ///
    /// The raw phases are kept; call [`MotionalState::canonical`] if a
    /// canonical representative is needed afterwards.
    pub fn free_evolve(&self, omega: f64, t: f64) -> Self {
        let amplitudes = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(j, &c)| c * C64::from_polar(1.0, -omega * j as f64 * t))
            .collect();
        Self { amplitudes }
    }
}

/// Basis state `|j⟩` in a space of dimension `dim`.
pub fn make_fock(level: usize, dim: usize) -> Result<MotionalState> {
    if level >= dim {
        return Err(Error::LevelOutOfRange { level, dim });
    }
    let mut amplitudes = vec![C64::default(); dim];
    amplitudes[level] = C64::new(1.0, 0.0);
    Ok(MotionalState { amplitudes })
}

/// A classical feature vector with at least one non-zero entry.
#[derive(Debug, Clone, PartialEq)]
pub struct RealFeatureVector(Vec<f64>);

impl RealFeatureVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyState);
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        if entries.iter().all(|&x| x == 0.0) {
            return Err(Error::ZeroNorm);
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }
}

/// Amplitude encoding: `x_j / ‖x‖` on level `j - 1`.
pub fn amplitude_encode(x: &RealFeatureVector) -> MotionalState {
    // negating a real vector is the canonical-phase rotation, done exactly
    let sign = match x.0.iter().find(|&&v| v != 0.0) {
        Some(&v) if v < 0.0 => -1.0,
        _ => 1.0,
    };
    let norm = x.0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let amplitudes = x.0.iter().map(|&v| C64::new(sign * v / norm, 0.0)).collect();
    MotionalState { amplitudes }
}

/// Coherent state `D(α)|0⟩`.
pub fn coherent_state(alpha: C64, truncation: &Truncation) -> Result<MotionalState> {
    let terms = coherent_terms(alpha);
    truncation.apply(terms, 1.0)
}

/// Untruncated series `e^{-|α|²/2} α^j / √j!`, generated by recurrence.
fn coherent_terms(alpha: C64) -> impl Iterator<Item = C64> {
    let mut term = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    (0..).map(move |j: usize| {
        if j > 0 {
            term = term * alpha / (j as f64).sqrt();
        }
        term
    })
}

/// Squeezed vacuum `S(r e^{iφ})|0⟩`.
///
/// Level `2m` carries `√((2m)!) / (2^m m!) (-e^{iφ} tanh r)^m / √cosh r`;
/// with `phase = π` every amplitude is real and non-negative.
pub fn squeezed_vacuum(r: f64, phase: f64, truncation: &Truncation) -> Result<MotionalState> {
    if r.is_nan() || r < 0.0 || !r.is_finite() {
        return Err(Error::InvalidParameter {
            name: "r",
            reason: format!("squeezing must be finite and >= 0, got {r}"),
        });
    }
    // (-e^{iφ})^m = e^{im(φ+π)}; reducing first keeps φ = π exactly real
    let step = crate::pulse::reduce_phase(phase + PI);
    let t = r.tanh();
    let mut mag = 1.0 / r.cosh().sqrt();
    let terms = (0..).map(move |j: usize| {
        if j % 2 == 1 {
            return C64::default();
        }
        let m = j / 2;
        if m > 0 {
            mag *= t * ((2 * m - 1) as f64 / (2 * m) as f64).sqrt();
        }
        if step == 0.0 {
            C64::new(mag, 0.0)
        } else {
            C64::from_polar(mag, m as f64 * step)
        }
    });
    truncation.apply(terms, 1.0)
}

/// `cos(φ/2)|0⟩ + sin(φ/2)|1⟩`.
pub fn fock_superposition(angle: f64) -> Result<MotionalState> {
    let half = angle / 2.0;
    MotionalState::new(vec![C64::new(half.cos(), 0.0), C64::new(half.sin(), 0.0)])
}

/// Apply `D(α)` to a finite state using `D(α) f(a†)|0⟩ = f(a† - α*)|α⟩`.
pub fn displace(base: &MotionalState, alpha: C64, truncation: &Truncation) -> Result<MotionalState> {
    // working space large enough that the cap, not the working size, limits
    // what is representable
    let work = truncation.max_dim() + base.dim() + 32;
    let mut v: Vec<C64> = coherent_terms(alpha).take(work).collect();
    let mut acc = vec![C64::default(); work];
    for (n, &c) in base.amplitudes().iter().enumerate() {
        if n > 0 {
            // v <- (a† - α*) v / √n
            let mut next = vec![C64::default(); work];
            for j in 0..work {
                let raised = if j > 0 { v[j - 1] * (j as f64).sqrt() } else { C64::default() };
                next[j] = (raised - alpha.conj() * v[j]) / (n as f64).sqrt();
            }
            v = next;
        }
        for j in 0..work {
            acc[j] += c * v[j];
        }
    }
    // the last `base.dim()` levels of `acc` are missing their a† feed
    acc.truncate(work - base.dim());
    let total: f64 = acc.iter().map(|c| c.norm_sqr()).sum();
    truncation.apply(acc.into_iter(), total)
}

/// Complex parameter that can be written as a bare real number in configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexParam {
    Real(f64),
    Pair([f64; 2]),
}

impl From<ComplexParam> for C64 {
    fn from(p: ComplexParam) -> Self {
        match p {
            ComplexParam::Real(re) => C64::new(re, 0.0),
            ComplexParam::Pair([re, im]) => C64::new(re, im),
        }
    }
}

impl From<f64> for ComplexParam {
    fn from(re: f64) -> Self {
        ComplexParam::Real(re)
    }
}

/// One component of a [`StateSpec::Superposition`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSpec {
    pub weight: ComplexParam,
    pub state: StateSpec,
}

/// Declarative description of a single-mode state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum StateSpec {
    Fock {
        level: usize,
    },
    /// `cos(φ/2)|0⟩ + sin(φ/2)|1⟩` with `angle = φ` in radians.
    FockSuperposition {
        angle: f64,
    },
    SqueezedVacuum {
        r: f64,
        phase: f64,
    },
    Coherent {
        alpha: ComplexParam,
    },
    Explicit {
        amplitudes: Vec<ComplexParam>,
    },
    /// Amplitude encoding of a classical feature vector.
    Features {
        x: Vec<f64>,
    },
    Displaced {
        alpha: ComplexParam,
        base: Box<StateSpec>,
    },
    /// `Σ w_i |ψ_i⟩` over normalized components, renormalized afterwards.
    Superposition {
        terms: Vec<WeightedSpec>,
    },
}

impl StateSpec {
    pub fn realize(&self) -> Result<MotionalState> {
        self.realize_with(&Truncation::default())
    }

    pub fn realize_with(&self, truncation: &Truncation) -> Result<MotionalState> {
        match self {
            StateSpec::Fock { level } => make_fock(*level, level + 1),
            StateSpec::FockSuperposition { angle } => fock_superposition(*angle),
            StateSpec::SqueezedVacuum { r, phase } => squeezed_vacuum(*r, *phase, truncation),
            StateSpec::Coherent { alpha } => coherent_state((*alpha).into(), truncation),
            StateSpec::Explicit { amplitudes } => {
                MotionalState::new(amplitudes.iter().map(|&a| a.into()).collect())
            }
            StateSpec::Features { x } => {
                Ok(amplitude_encode(&RealFeatureVector::new(x.clone())?))
            }
            StateSpec::Displaced { alpha, base } => {
                let base = base.realize_with(truncation)?;
                displace(&base, (*alpha).into(), truncation)
            }
            StateSpec::Superposition { terms } => {
                if terms.is_empty() {
                    return Err(Error::EmptyState);
                }
                let parts = terms
                    .iter()
                    .map(|t| Ok((C64::from(t.weight), t.state.realize_with(truncation)?)))
                    .collect::<Result<Vec<_>>>()?;
                let dim = parts.iter().map(|(_, s)| s.dim()).max().unwrap_or(1);
                let mut acc = vec![C64::default(); dim];
                for (w, s) in &parts {
                    for (a, c) in acc.iter_mut().zip(s.amplitudes()) {
                        *a += w * c;
                    }
                }
                MotionalState::new(acc)
            }
        }
    }
}

/// `|⟨s1|s2⟩|²`, with the shorter state zero-extended.
pub fn overlap_exact(s1: &MotionalState, s2: &MotionalState) -> f64 {
    inner_product(s1, s2).norm_sqr().clamp(0.0, 1.0)
}

/// `⟨s1|s2⟩` over the common levels.
pub fn inner_product(s1: &MotionalState, s2: &MotionalState) -> C64 {
    s1.amplitudes()
        .iter()
        .zip(s2.amplitudes())
        .map(|(a, b)| a.conj() * b)
        .sum()
}

/// Hilbert-Schmidt distance `√(2 - 2|⟨s1|s2⟩|²)`.
pub fn hs_distance(s1: &MotionalState, s2: &MotionalState) -> f64 {
    overlap_to_distance(overlap_exact(s1, s2))
}

pub fn overlap_to_distance(overlap: f64) -> f64 {
    (2.0 - 2.0 * overlap).max(0.0).sqrt()
}
