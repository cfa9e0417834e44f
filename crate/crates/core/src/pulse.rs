//! Unitary pulses on a spin coupled to up to three motional modes.
//!
//! Rotation convention shared by every two-level coupling (carrier, red and
//! blue sideband) with rotation angle `A` and phase `φ`:
//!
//! ```text
//! |g⟩ -> cos(A/2)|g⟩ - i e^{-iφ} sin(A/2)|e⟩
//! |e⟩ -> cos(A/2)|e⟩ - i e^{+iφ} sin(A/2)|g⟩
//! ```
//!
//! The AC-Stark term is the spin rotation `diag(1, e^{-iΔω τ})`: the relative
//! phase between `|e⟩` and `|g⟩` after a sideband of duration `τ` is exactly
//! `Δω τ`, no factor of two. Compensation phases in [`crate::synthesis`] use
//! the same convention.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Arc, LazyLock, Mutex};

use crate::error::{Error, Result};
use crate::fock::MotionalState;

/// Population allowed to fall off the top of a truncated mode.
pub const LEAK_TOLERANCE: f64 = 1e-9;

/// Hardware rates, all in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    pub omega_a: f64,
    pub omega_b: f64,
    pub omega_c: f64,
    /// Beam-splitter coupling; a gate of angle θ lasts θ/g.
    pub g: f64,
    pub omega_carrier: f64,
    pub omega_rsb: f64,
    pub stark_shift: f64,
}

impl Default for TrapConfig {
    fn default() -> Self {
        let hz = |f: f64| TAU * f;
        Self {
            omega_a: hz(0.782e6),
            omega_b: hz(1.159e6),
            omega_c: hz(1.274e6),
            g: hz(680.0),
            omega_carrier: hz(50e3),
            omega_rsb: hz(10e3),
            stark_shift: hz(5.9e3),
        }
    }
}

impl TrapConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("omega_a", self.omega_a),
            ("omega_b", self.omega_b),
            ("omega_c", self.omega_c),
            ("g", self.g),
            ("omega_carrier", self.omega_carrier),
            ("omega_rsb", self.omega_rsb),
            ("stark_shift", self.stark_shift),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        if self.omega_a == self.omega_b || self.omega_a == self.omega_c || self.omega_b == self.omega_c
        {
            return Err(Error::InvalidParameter {
                name: "mode frequencies",
                reason: "omega_a, omega_b, omega_c must be pairwise distinct".into(),
            });
        }
        Ok(())
    }

    pub fn beat_ab(&self) -> f64 {
        (self.omega_a - self.omega_b).abs()
    }

    pub fn beat_ac(&self) -> f64 {
        (self.omega_a - self.omega_c).abs()
    }

    /// Beat between the two data modes; sets the delay-scan period.
    pub fn beat_bc(&self) -> f64 {
        (self.omega_b - self.omega_c).abs()
    }

    pub fn mode_frequency(&self, mode: usize) -> Result<f64> {
        match mode {
            0 => Ok(self.omega_a),
            1 => Ok(self.omega_b),
            2 => Ok(self.omega_c),
            _ => Err(Error::MissingMode { mode, modes: 3 }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spin {
    G,
    E,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    Carrier,
    RedSideband,
    BlueSideband,
}

/// One square pulse. `angle` is Ω·t for a carrier and the base angle
/// Ω_rsb·τ for sidebands (level `n` then rotates by `√n` times it).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub kind: PulseKind,
    pub angle: f64,
    pub phase: f64,
    pub mode: usize,
}

pub fn reduce_phase(phase: f64) -> f64 {
    let r = phase.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

impl Pulse {
    pub fn new(kind: PulseKind, angle: f64, phase: f64, mode: usize) -> Result<Self> {
        if !angle.is_finite() || angle < 0.0 {
            return Err(Error::InvalidParameter {
                name: "angle",
                reason: format!("pulse angle must be finite and >= 0, got {angle}"),
            });
        }
        if !phase.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            kind,
            angle,
            phase: reduce_phase(phase),
            mode,
        })
    }

    /// Wall-clock duration in seconds.
    pub fn duration(&self, trap: &TrapConfig) -> f64 {
        match self.kind {
            PulseKind::Carrier => self.angle / trap.omega_carrier,
            PulseKind::RedSideband | PulseKind::BlueSideband => self.angle / trap.omega_rsb,
        }
    }
}

/// Spin-conditioned beam splitter `exp(-i θ/2 σ_φ (a†b e^{-iψ} + a b† e^{iψ}))`
/// where `σ_φ` is the Pauli operator with eigenstates
/// `|±⟩ = (|g⟩ ± e^{-i spin_phase}|e⟩)/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSplitterSpec {
    pub theta: f64,
    pub psi: f64,
    pub modes: (usize, usize),
    #[serde(default)]
    pub spin_phase: f64,
}

impl BeamSplitterSpec {
    pub fn new(theta: f64, psi: f64, modes: (usize, usize)) -> Self {
        Self {
            theta,
            psi,
            modes,
            spin_phase: 0.0,
        }
    }
}

/// Joint spin ⊗ modes state. Storage is spin-major; within a spin branch the
/// last mode varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeState {
    dims: Vec<usize>,
    data: Vec<C64>,
}

fn rotate(g: C64, e: C64, angle: f64, phase: f64) -> (C64, C64) {
    let (s, c) = (angle / 2.0).sin_cos();
    let mi = C64::new(0.0, -1.0);
    let up = mi * C64::from_polar(s, phase);
    let down = mi * C64::from_polar(s, -phase);
    (c * g + up * e, c * e + down * g)
}

impl CompositeState {
    /// `|spin⟩ ⊗ modes[0] ⊗ …`, each mode zero-extended to `dims[i]`.
    pub fn product_padded(spin: Spin, modes: &[&MotionalState], dims: &[usize]) -> Result<Self> {
        if modes.is_empty() || modes.len() > 3 || dims.len() != modes.len() {
            return Err(Error::InvalidParameter {
                name: "modes",
                reason: format!(
                    "need 1 to 3 modes with matching dims, got {} modes and {} dims",
                    modes.len(),
                    dims.len()
                ),
            });
        }
        for (i, (m, &d)) in modes.iter().zip(dims).enumerate() {
            if d < m.dim() {
                return Err(Error::InvalidParameter {
                    name: "dims",
                    reason: format!("mode {i} has dimension {} but only {d} levels allotted", m.dim()),
                });
            }
        }
        let size: usize = dims.iter().product();
        let mut branch = vec![C64::new(1.0, 0.0)];
        for (m, &d) in modes.iter().zip(dims) {
            let amps = m.padded(d);
            let mut next = Vec::with_capacity(branch.len() * d);
            for &b in &branch {
                next.extend(amps.iter().map(|&a| a * b));
            }
            branch = next;
        }
        let mut data = vec![C64::default(); 2 * size];
        let offset = match spin {
            Spin::G => 0,
            Spin::E => size,
        };
        data[offset..offset + size].copy_from_slice(&branch);
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn product(spin: Spin, modes: &[&MotionalState]) -> Result<Self> {
        let dims: Vec<usize> = modes.iter().map(|m| m.dim()).collect();
        Self::product_padded(spin, modes, &dims)
    }

    /// `|g⟩ ⊗ |0⟩ ⊗ …` with the given mode dimensions.
    pub fn ground(dims: &[usize]) -> Result<Self> {
        let vac = MotionalState::vacuum();
        let modes: Vec<&MotionalState> = dims.iter().map(|_| &vac).collect();
        Self::product_padded(Spin::G, &modes, dims)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.data
    }

    fn branch_size(&self) -> usize {
        self.data.len() / 2
    }

    /// Amplitudes of a spin branch over the flattened mode levels.
    pub fn branch(&self, spin: Spin) -> &[C64] {
        let m = self.branch_size();
        match spin {
            Spin::G => &self.data[..m],
            Spin::E => &self.data[m..],
        }
    }

    pub fn amplitude(&self, spin: Spin, levels: &[usize]) -> C64 {
        let strides = self.strides();
        let idx: usize = levels.iter().zip(&strides).map(|(n, s)| n * s).sum();
        self.branch(spin)[idx]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn prob_g(&self) -> f64 {
        self.branch(Spin::G).iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn prob_e(&self) -> f64 {
        self.branch(Spin::E).iter().map(|c| c.norm_sqr()).sum()
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims.len()];
        for k in (0..self.dims.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.dims[k + 1];
        }
        s
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.dims.len() {
            return Err(Error::MissingMode {
                mode,
                modes: self.dims.len(),
            });
        }
        Ok(())
    }

    /// Phonon-number distribution of one mode, summed over spin and the rest.
    pub fn mode_populations(&self, mode: usize) -> Result<Vec<f64>> {
        self.check_mode(mode)?;
        let stride = self.strides()[mode];
        let d = self.dims[mode];
        let m = self.branch_size();
        let mut p = vec![0.0; d];
        for (idx, c) in self.data.iter().enumerate() {
            p[((idx % m) / stride) % d] += c.norm_sqr();
        }
        Ok(p)
    }

    pub fn mean_phonons(&self, mode: usize) -> Result<f64> {
        Ok(self
            .mode_populations(mode)?
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum())
    }

    /// Distribution of `n_i + n_j` for a mode pair.
    pub fn pair_total_distribution(&self, i: usize, j: usize) -> Result<Vec<f64>> {
        self.check_mode(i)?;
        self.check_mode(j)?;
        let st = self.strides();
        let m = self.branch_size();
        let mut p = vec![0.0; self.dims[i] + self.dims[j] - 1];
        for (idx, c) in self.data.iter().enumerate() {
            let f = idx % m;
            let n = (f / st[i]) % self.dims[i] + (f / st[j]) % self.dims[j];
            p[n] += c.norm_sqr();
        }
        Ok(p)
    }

    pub fn apply_carrier(&self, angle: f64, phase: f64) -> Self {
        let mut out = self.clone();
        let m = self.branch_size();
        let (g, e) = out.data.split_at_mut(m);
        for (a, b) in g.iter_mut().zip(e.iter_mut()) {
            (*a, *b) = rotate(*a, *b, angle, phase);
        }
        out
    }

    /// `|g,n⟩ ↔ |e,n-1⟩` with angle `√n · angle`.
    pub fn apply_red_sideband(&self, angle: f64, phase: f64, mode: usize) -> Result<Self> {
        self.check_mode(mode)?;
        let stride = self.strides()[mode];
        let d = self.dims[mode];
        let m = self.branch_size();
        let mut out = self.clone();
        for idx in 0..m {
            let n = (idx / stride) % d;
            if n == 0 {
                continue;
            }
            let gi = idx;
            let ei = m + idx - stride;
            let a = (n as f64).sqrt() * angle;
            (out.data[gi], out.data[ei]) = rotate(self.data[gi], self.data[ei], a, phase);
        }
        Ok(out)
    }

    /// `|g,n⟩ ↔ |e,n+1⟩` with angle `√(n+1) · angle`. The top level is a hard
    /// wall; population that would cross it is an error beyond [`LEAK_TOLERANCE`].
    pub fn apply_blue_sideband(&self, angle: f64, phase: f64, mode: usize) -> Result<Self> {
        self.check_mode(mode)?;
        let stride = self.strides()[mode];
        let d = self.dims[mode];
        let m = self.branch_size();
        let mut out = self.clone();
        let mut leaked = 0.0;
        for idx in 0..m {
            let n = (idx / stride) % d;
            let a = ((n + 1) as f64).sqrt() * angle;
            if n + 1 == d {
                leaked += self.data[idx].norm_sqr() * (a / 2.0).sin().powi(2);
                continue;
            }
            let gi = idx;
            let ei = m + idx + stride;
            (out.data[gi], out.data[ei]) = rotate(self.data[gi], self.data[ei], a, phase);
        }
        if leaked > LEAK_TOLERANCE {
            return Err(Error::TruncationLeak { mode, leaked });
        }
        Ok(out)
    }

    pub fn apply_pulse(&self, p: &Pulse) -> Result<Self> {
        match p.kind {
            PulseKind::Carrier => Ok(self.apply_carrier(p.angle, p.phase)),
            PulseKind::RedSideband => self.apply_red_sideband(p.angle, p.phase, p.mode),
            PulseKind::BlueSideband => self.apply_blue_sideband(p.angle, p.phase, p.mode),
        }
    }

    /// Spin rotation `diag(1, e^{-i shift·τ})`.
    pub fn apply_stark(&self, shift: f64, tau: f64) -> Self {
        let mut out = self.clone();
        let m = self.branch_size();
        let rot = C64::from_polar(1.0, -shift * tau);
        for c in &mut out.data[m..] {
            *c *= rot;
        }
        out
    }

    /// Free evolution of one mode: level `n` picks up `e^{-iωnt}`.
    pub fn free_evolve(&self, mode: usize, omega: f64, t: f64) -> Result<Self> {
        self.check_mode(mode)?;
        let stride = self.strides()[mode];
        let d = self.dims[mode];
        let m = self.branch_size();
        let phases: Vec<C64> = (0..d)
            .map(|n| C64::from_polar(1.0, -omega * n as f64 * t))
            .collect();
        let mut out = self.clone();
        for (idx, c) in out.data.iter_mut().enumerate() {
            *c *= phases[((idx % m) / stride) % d];
        }
        Ok(out)
    }

    /// Controlled beam splitter on a mode pair.
    ///
    /// Each total-phonon block of the two modes is propagated exactly in the
    /// untruncated space; weight that lands beyond either truncation is an
    /// error beyond [`LEAK_TOLERANCE`].
    pub fn apply_cbs(&self, spec: &BeamSplitterSpec) -> Result<Self> {
        let (i, j) = spec.modes;
        self.check_mode(i)?;
        self.check_mode(j)?;
        if i == j {
            return Err(Error::InvalidParameter {
                name: "modes",
                reason: format!("beam splitter needs two distinct modes, got ({i}, {j})"),
            });
        }
        if !spec.theta.is_finite() || spec.theta < 0.0 {
            return Err(Error::InvalidParameter {
                name: "theta",
                reason: format!("must be finite and >= 0, got {}", spec.theta),
            });
        }
        if spec.theta == 0.0 {
            return Ok(self.clone());
        }
        let m = self.branch_size();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let tilt = C64::from_polar(1.0, spec.spin_phase);
        let (g, e) = self.data.split_at(m);
        let mut plus: Vec<C64> = g.iter().zip(e).map(|(a, b)| (a + tilt * b) * s).collect();
        let mut minus: Vec<C64> = g.iter().zip(e).map(|(a, b)| (a - tilt * b) * s).collect();
        let mut leaked = 0.0;
        let half = spec.theta / 2.0;
        self.beam_split_branch(&mut plus, i, j, half, spec.psi, &mut leaked);
        self.beam_split_branch(&mut minus, i, j, -half, spec.psi, &mut leaked);
        if leaked > LEAK_TOLERANCE {
            let mode = if self.dims[i] <= self.dims[j] { i } else { j };
            return Err(Error::TruncationLeak { mode, leaked });
        }
        let mut data = vec![C64::default(); 2 * m];
        for k in 0..m {
            data[k] = (plus[k] + minus[k]) * s;
            data[m + k] = tilt.conj() * (plus[k] - minus[k]) * s;
        }
        Ok(Self {
            dims: self.dims.clone(),
            data,
        })
    }

    /// Apply `exp(-i half (a†b e^{-iψ} + h.c.))` to one spin branch in place.
    fn beam_split_branch(&self, v: &mut [C64], i: usize, j: usize, half: f64, psi: f64, leaked: &mut f64) {
        let st = self.strides();
        let (da, db) = (self.dims[i], self.dims[j]);
        let (si, sj) = (st[i], st[j]);
        let max_n = da + db - 2;
        let blocks: Vec<Arc<Vec<C64>>> = (0..=max_n).map(|n| block_unitary(n, half.abs())).collect();
        let conj = half < 0.0;
        let rot: Vec<C64> = (0..=max_n).map(|n| C64::from_polar(1.0, psi * n as f64)).collect();
        let mut inputs: Vec<(usize, C64)> = Vec::new();
        let mut plane = vec![C64::default(); da * db];
        for base in 0..v.len() {
            if (base / si) % da != 0 || (base / sj) % db != 0 {
                continue;
            }
            for a in 0..da {
                for b in 0..db {
                    plane[a * db + b] = v[base + a * si + b * sj];
                }
            }
            for n in 0..=max_n {
                let lo = n.saturating_sub(db - 1);
                let hi = n.min(da - 1);
                inputs.clear();
                for a in lo..=hi {
                    let c = plane[a * db + (n - a)];
                    if c != C64::default() {
                        // V† = diag(e^{iψ n_a})
                        inputs.push((a, c * rot[a]));
                    }
                }
                let out_lo = lo;
                let out_hi = hi;
                if inputs.is_empty() {
                    for a in out_lo..=out_hi {
                        v[base + a * si + (n - a) * sj] = C64::default();
                    }
                    continue;
                }
                let u = &blocks[n];
                let w = n + 1;
                for r in 0..=n {
                    let row = &u[r * w..(r + 1) * w];
                    let mut acc = C64::default();
                    for &(a, c) in &inputs {
                        let e = if conj { row[a].conj() } else { row[a] };
                        acc += e * c;
                    }
                    let val = acc * rot[r].conj();
                    if r < da && n - r < db {
                        v[base + r * si + (n - r) * sj] = val;
                    } else {
                        *leaked += val.norm_sqr();
                    }
                }
            }
        }
    }
}

type Eigen = Arc<(Vec<f64>, DMatrix<f64>)>;

static EIGEN_CACHE: LazyLock<Mutex<HashMap<usize, Eigen>>> = LazyLock::new(Default::default);
type BlockCache = Mutex<HashMap<(usize, u64), Arc<Vec<C64>>>>;

static BLOCK_CACHE: LazyLock<BlockCache> =
    LazyLock::new(Default::default);

/// Eigen-decomposition of `a†b + ab†` on the block with `n` total phonons,
/// basis ordered by the phonon number of the first mode.
fn block_eigen(n: usize) -> Eigen {
    if let Some(e) = EIGEN_CACHE.lock().unwrap().get(&n) {
        return e.clone();
    }
    let w = n + 1;
    let mut gen = DMatrix::<f64>::zeros(w, w);
    for a in 0..n {
        // ⟨a+1, n-a-1| a†b |a, n-a⟩
        let x = (((a + 1) * (n - a)) as f64).sqrt();
        gen[(a + 1, a)] = x;
        gen[(a, a + 1)] = x;
    }
    let eig = SymmetricEigen::new(gen);
    let e: Eigen = Arc::new((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors));
    EIGEN_CACHE.lock().unwrap().insert(n, e.clone());
    e
}

/// `exp(-i half · G)` on block `n`, row-major.
fn block_unitary(n: usize, half: f64) -> Arc<Vec<C64>> {
    let key = (n, half.to_bits());
    if let Some(u) = BLOCK_CACHE.lock().unwrap().get(&key) {
        return u.clone();
    }
    let eig = block_eigen(n);
    let (vals, vecs) = (&eig.0, &eig.1);
    let w = n + 1;
    let phases: Vec<C64> = vals.iter().map(|&l| C64::from_polar(1.0, -half * l)).collect();
    let mut u = vec![C64::default(); w * w];
    for r in 0..w {
        for c in r..w {
            let mut acc = C64::default();
            for k in 0..w {
                acc += phases[k] * (vecs[(r, k)] * vecs[(c, k)]);
            }
            u[r * w + c] = acc;
            u[c * w + r] = acc;
        }
    }
    let u = Arc::new(u);
    BLOCK_CACHE.lock().unwrap().insert(key, u.clone());
    u
}

/// Generic two-level population check: `P_e` after a resonant pulse of
/// rotation angle `a` from the ground state.
pub fn rabi_excitation(a: f64) -> f64 {
    (a / 2.0).sin().powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::make_fock;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn single(spin: Spin, level: usize, dim: usize) -> CompositeState {
        CompositeState::product_padded(spin, &[&make_fock(level, dim).unwrap()], &[dim]).unwrap()
    }

    #[test]
    fn carrier_examples() {
        let c = single(Spin::G, 0, 3);
        assert_eq!(c.apply_carrier(0.0, 1.3), c);
        assert_abs_diff_eq!(c.apply_carrier(PI, 0.0).prob_e(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.apply_carrier(PI / 2.0, 0.4).prob_e(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn carrier_matches_convention() {
        let c = single(Spin::G, 1, 2).apply_carrier(1.0, 0.3);
        let expect = C64::new(0.0, -1.0) * C64::from_polar((0.5f64).sin(), -0.3);
        assert_abs_diff_eq!((c.amplitude(Spin::E, &[1]) - expect).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn red_sideband_examples() {
        let c = single(Spin::G, 0, 4);
        let out = c.apply_red_sideband(2.1, 0.7, 0).unwrap();
        assert_eq!(out, c);
        let out = single(Spin::G, 1, 4).apply_red_sideband(PI, 0.0, 0).unwrap();
        assert_abs_diff_eq!(out.amplitude(Spin::E, &[0]).norm_sqr(), 1.0, epsilon = 1e-15);
        let out = single(Spin::G, 2, 4).apply_red_sideband(PI, 0.0, 0).unwrap();
        let expect = (2f64.sqrt() * PI / 2.0).sin().powi(2);
        assert_abs_diff_eq!(out.prob_e(), expect, epsilon = 1e-14);
    }

    #[test]
    fn blue_sideband_examples() {
        let c = single(Spin::G, 0, 3);
        let out = c.apply_blue_sideband(PI, 0.0, 0).unwrap();
        assert_abs_diff_eq!(out.amplitude(Spin::E, &[1]).norm_sqr(), 1.0, epsilon = 1e-15);
        let out = c.apply_blue_sideband(2.0 * PI, 0.0, 0).unwrap();
        assert_abs_diff_eq!(out.amplitude(Spin::G, &[0]).norm_sqr(), 1.0, epsilon = 1e-15);
        for k in 0..20 {
            let a = 0.3 * k as f64;
            let p = c.apply_blue_sideband(a, 0.0, 0).unwrap().prob_e();
            assert_abs_diff_eq!(p, (1.0 - a.cos()) / 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn blue_sideband_wall() {
        let top = single(Spin::G, 2, 3);
        assert!(matches!(
            top.apply_blue_sideband(PI, 0.0, 0),
            Err(Error::TruncationLeak { mode: 0, .. })
        ));
    }

    #[test]
    fn missing_mode() {
        let c = single(Spin::G, 0, 2);
        assert_eq!(
            c.apply_red_sideband(1.0, 0.0, 1),
            Err(Error::MissingMode { mode: 1, modes: 1 })
        );
        let bs = BeamSplitterSpec::new(PI, 0.0, (0, 1));
        assert!(c.apply_cbs(&bs).is_err());
    }

    fn plus_spin_pair(a: &MotionalState, b: &MotionalState, dims: &[usize]) -> CompositeState {
        let g = CompositeState::product_padded(Spin::G, &[a, b], dims).unwrap();
        g.apply_carrier(PI / 2.0, -PI / 2.0)
    }

    #[test]
    fn plus_state_preparation() {
        // carrier(π/2, -π/2) maps |g⟩ to (|g⟩+|e⟩)/√2
        let v = make_fock(0, 1).unwrap();
        let c = plus_spin_pair(&v, &v, &[1, 1]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!((c.amplitude(Spin::G, &[0, 0]) - h).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((c.amplitude(Spin::E, &[0, 0]) - h).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn cbs_identity_and_transfer() {
        let one = make_fock(1, 2).unwrap();
        let zero = make_fock(0, 2).unwrap();
        let c = plus_spin_pair(&one, &zero, &[2, 2]);
        assert_eq!(c.apply_cbs(&BeamSplitterSpec::new(0.0, 0.3, (0, 1))).unwrap(), c);
        let out = c.apply_cbs(&BeamSplitterSpec::new(PI, 0.0, (0, 1))).unwrap();
        let p = out.mode_populations(1).unwrap();
        assert_abs_diff_eq!(p[1], 1.0, epsilon = 1e-14);
        // still a |+⟩ spin: the transfer is not spin dependent on this subspace
        let amp_g = out.amplitude(Spin::G, &[0, 1]);
        let amp_e = out.amplitude(Spin::E, &[0, 1]);
        assert_abs_diff_eq!((amp_g - amp_e).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn cbs_two_photon_block_closed_form() {
        // |2,0⟩ under exp(-i x G): amplitude on |0,2⟩ is -sin²(x)
        let two = make_fock(2, 3).unwrap();
        let zero = make_fock(0, 3).unwrap();
        let c = plus_spin_pair(&two, &zero, &[3, 3]);
        let x = 0.37;
        let out = c.apply_cbs(&BeamSplitterSpec::new(2.0 * x, 0.0, (0, 1))).unwrap();
        let amp = out.amplitude(Spin::G, &[0, 2]) * 2f64.sqrt();
        assert_abs_diff_eq!((amp - C64::new(-x.sin().powi(2), 0.0)).norm(), 0.0, epsilon = 1e-13);
        let amp = out.amplitude(Spin::G, &[1, 1]) * 2f64.sqrt();
        let expect = C64::new(0.0, -2f64.sqrt() * x.sin() * x.cos());
        assert_abs_diff_eq!((amp - expect).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn cbs_leak_detected() {
        let one = make_fock(1, 2).unwrap();
        let c = CompositeState::product_padded(Spin::G, &[&one, &one], &[2, 2]).unwrap();
        // |1,1⟩ spreads into |2,0⟩ and |0,2⟩, neither fits
        assert!(matches!(
            c.apply_cbs(&BeamSplitterSpec::new(PI / 2.0, 0.0, (0, 1))),
            Err(Error::TruncationLeak { .. })
        ));
    }

    #[test]
    fn stark_phase() {
        let c = single(Spin::G, 0, 1);
        assert_eq!(c.apply_stark(0.0, 1.0), c);
        assert_eq!(c.apply_stark(3.0, 1.0), c);
        // Ramsey with compensating phase returns to full excitation
        let delta = 0.83;
        let r = c
            .apply_carrier(PI / 2.0, 0.0)
            .apply_stark(delta, 1.0)
            .apply_carrier(PI / 2.0, delta);
        assert_abs_diff_eq!(r.prob_e(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn reduce_phase_range() {
        assert_eq!(reduce_phase(-1e-18), 0.0);
        assert_abs_diff_eq!(reduce_phase(-PI / 2.0), 1.5 * PI, epsilon = 1e-15);
        assert_abs_diff_eq!(reduce_phase(5.0 * PI), PI, epsilon = 1e-14);
    }

    #[test]
    fn default_trap_is_valid() {
        let t = TrapConfig::default();
        t.validate().unwrap();
        assert_abs_diff_eq!(t.beat_bc() / TAU, 0.115e6, epsilon = 1e-6);
        let mut bad = t;
        bad.omega_c = bad.omega_b;
        assert!(bad.validate().is_err());
    }
}
