//! Law-Eberly preparation of an arbitrary motional state from `|g,0⟩`.
//!
//! An `n`-level target needs `n - 1` (carrier, red-sideband) pairs. The
//! pulses are found by running the target backwards to the ground state one
//! level at a time and then inverting the sequence.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::fock::MotionalState;
use crate::pulse::{reduce_phase, CompositeState, Pulse, PulseKind, Spin, TrapConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub mode: usize,
    pub dim: usize,
    /// Forward order: carrier, red sideband, carrier, red sideband, ...
    pub pulses: Vec<Pulse>,
    /// Amplitudes the schedule was synthesized for.
    pub target: Vec<C64>,
}

impl PulseSchedule {
    pub fn pairs(&self) -> usize {
        self.pulses.len() / 2
    }

    /// Total red-sideband time in seconds.
    pub fn sideband_time(&self, trap: &TrapConfig) -> f64 {
        self.pulses
            .iter()
            .filter(|p| p.kind == PulseKind::RedSideband)
            .map(|p| p.duration(trap))
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }
}

/// Stark kick applied after every red-sideband pulse during simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarkModel {
    /// Δω_AC in rad/s.
    pub shift: f64,
    /// Rabi frequency converting the pulse's base angle to a duration.
    pub omega_rsb: f64,
}

impl StarkModel {
    pub fn from_trap(trap: &TrapConfig) -> Self {
        Self {
            shift: trap.stark_shift,
            omega_rsb: trap.omega_rsb,
        }
    }

    fn phase_for(&self, p: &Pulse) -> f64 {
        self.shift * p.angle / self.omega_rsb
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    /// Probability that the spin ends in `|g⟩`.
    pub prob_g: f64,
    /// `|⟨g, target|ψ⟩|²`.
    pub overlap: f64,
}

const ZERO: f64 = 1e-300;

fn arg(c: C64) -> f64 {
    if c.norm() <= ZERO {
        0.0
    } else {
        c.arg()
    }
}

fn single_mode(amps: &MotionalState, mode_dim: usize) -> Result<CompositeState> {
    CompositeState::product_padded(Spin::G, &[amps], &[mode_dim])
}

pub fn synthesize(target: &MotionalState) -> Result<PulseSchedule> {
    synthesize_on(target, 0)
}

/// Synthesize `target` on a given mode index (recorded on the pulses; the
/// simulation itself is single-mode).
pub fn synthesize_on(target: &MotionalState, mode: usize) -> Result<PulseSchedule> {
    let n = target.dim();
    let norm = target.norm_sqr();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized { norm_sqr: norm });
    }
    let mut psi = single_mode(target, n)?;
    let mut backward = Vec::with_capacity(2 * n.saturating_sub(1));
    for j in (1..n).rev() {
        let g = psi.amplitude(Spin::G, &[j]);
        let e = psi.amplitude(Spin::E, &[j - 1]);
        let a = 2.0 * g.norm().atan2(e.norm());
        let phase = arg(g) - arg(e) - FRAC_PI_2;
        let rsb = Pulse::new(PulseKind::RedSideband, a / (j as f64).sqrt(), phase, 0)?;
        psi = psi.apply_pulse(&rsb)?;
        let g = psi.amplitude(Spin::G, &[j - 1]);
        let e = psi.amplitude(Spin::E, &[j - 1]);
        let a = 2.0 * e.norm().atan2(g.norm());
        let phase = FRAC_PI_2 + arg(g) - arg(e);
        let carrier = Pulse::new(PulseKind::Carrier, a, phase, 0)?;
        psi = psi.apply_pulse(&carrier)?;
        backward.push(rsb);
        backward.push(carrier);
    }
    // each rotation is undone by the same angle with the axis flipped
    let pulses = backward
        .iter()
        .rev()
        .map(|p| Pulse {
            phase: reduce_phase(p.phase + PI),
            mode,
            ..*p
        })
        .collect();
    Ok(PulseSchedule {
        mode,
        dim: n,
        pulses,
        target: target.amplitudes().to_vec(),
    })
}

/// Shift every pulse after a red sideband by the Stark phase accumulated so
/// far, `Σ Δω_AC τ_l` over the preceding sideband durations.
pub fn compensate_stark(sched: &PulseSchedule, trap: &TrapConfig) -> PulseSchedule {
    let model = StarkModel::from_trap(trap);
    let mut out = sched.clone();
    if model.shift == 0.0 {
        return out;
    }
    let mut cumulative = 0.0;
    for p in &mut out.pulses {
        p.phase = reduce_phase(p.phase + cumulative);
        if p.kind == PulseKind::RedSideband {
            cumulative += model.phase_for(p);
        }
    }
    out
}

/// Forward-simulate from `|g,0⟩`, optionally with a Stark kick after each
/// red-sideband pulse.
pub fn simulate_schedule(
    sched: &PulseSchedule,
    dim: usize,
    stark: Option<StarkModel>,
) -> Result<CompositeState> {
    let mut psi = CompositeState::ground(&[dim.max(1)])?;
    for p in &sched.pulses {
        let local = Pulse { mode: 0, ..*p };
        psi = psi.apply_pulse(&local)?;
        if let (Some(model), PulseKind::RedSideband) = (stark, p.kind) {
            psi = psi.apply_stark(model.phase_for(p), 1.0);
        }
    }
    Ok(psi)
}

pub fn verify_schedule(sched: &PulseSchedule, target: &MotionalState) -> Result<FidelityReport> {
    verify_schedule_with(sched, target, None)
}

pub fn verify_schedule_with(
    sched: &PulseSchedule,
    target: &MotionalState,
    stark: Option<StarkModel>,
) -> Result<FidelityReport> {
    let dim = sched.dim.max(target.dim());
    let psi = simulate_schedule(sched, dim, stark)?;
    let t = target.padded(dim);
    let amp: C64 = psi
        .branch(Spin::G)
        .iter()
        .zip(&t)
        .map(|(a, b)| b.conj() * a)
        .sum();
    Ok(FidelityReport {
        prob_g: psi.prob_g(),
        overlap: amp.norm_sqr(),
    })
}
