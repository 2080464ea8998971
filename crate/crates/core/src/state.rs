//! Path-encoded single-photon states and the Y-splitter cascade that
//! produces them.
//!
//! A photon spread over `N` waveguides is described by one complex
//! coefficient per mode. States are stored in polar form (amplitude and
//! phase per mode) with non-negative amplitudes; any sign is folded into
//! the phase so that every state has exactly one representation.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;

/// Tolerance on `Σ amplitude² = 1` for states built in memory.
pub const NORM_TOL: f64 = 1e-12;
/// Tolerance on `Σ amplitude² = 1` accepted when loading a state file.
pub const LOAD_NORM_TOL: f64 = 1e-9;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase(phi: f64) -> f64 {
    if phi > -PI && phi <= PI {
        return phi;
    }
    let mut r = phi.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Single photon distributed over `n_modes` waveguides.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeState {
    amplitudes: Vec<f64>,
    phases: Vec<f64>,
}

impl ModeState {
    /// Builds a state from polar components.
    ///
    /// Negative amplitudes are made positive by adding π to the phase. The
    /// squared amplitudes must already sum to one within [`NORM_TOL`].
    pub fn new(amplitudes: Vec<f64>, phases: Vec<f64>) -> Result<Self> {
        let state = Self::canonical(amplitudes, phases)?;
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!(
                "squared amplitudes sum to {norm}, expected 1"
            )));
        }
        Ok(state)
    }

    /// Builds a state from polar components, rescaling the amplitudes to
    /// unit norm.
    pub fn normalized(amplitudes: Vec<f64>, phases: Vec<f64>) -> Result<Self> {
        let mut state = Self::canonical(amplitudes, phases)?;
        state.renormalize()?;
        Ok(state)
    }

    /// Builds a state from complex mode coefficients, rescaled to unit norm.
    pub fn from_coefficients(coeffs: &[Complex64]) -> Result<Self> {
        let amplitudes = coeffs.iter().map(|c| c.norm()).collect();
        let phases = coeffs.iter().map(|c| c.arg()).collect();
        Self::normalized(amplitudes, phases)
    }

    fn canonical(mut amplitudes: Vec<f64>, mut phases: Vec<f64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidState(
                "a state needs at least one mode".into(),
            ));
        }
        if amplitudes.len() != phases.len() {
            return Err(Error::InvalidState(format!(
                "{} amplitudes but {} phases",
                amplitudes.len(),
                phases.len()
            )));
        }
        if amplitudes.iter().chain(&phases).any(|v| !v.is_finite()) {
            return Err(Error::InvalidState("non-finite amplitude or phase".into()));
        }
        for (a, phi) in amplitudes.iter_mut().zip(phases.iter_mut()) {
            if *a < 0.0 {
                *a = -*a;
                *phi = wrap_phase(*phi + PI);
            }
        }
        Ok(Self { amplitudes, phases })
    }

    fn renormalize(&mut self) -> Result<()> {
        let norm = self.norm_sqr().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidState("all amplitudes are zero".into()));
        }
        self.amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(())
    }

    fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum()
    }

    pub fn n_modes(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Complex coefficient `amp·e^{iφ}` of each mode.
    pub fn coefficients(&self) -> Vec<Complex64> {
        self.amplitudes
            .iter()
            .zip(&self.phases)
            .map(|(&a, &phi)| Complex64::from_polar(a, phi))
            .collect()
    }

    /// Returns the same state with `delta` added to every phase.
    pub fn with_global_phase(&self, delta: f64) -> Self {
        Self {
            amplitudes: self.amplitudes.clone(),
            phases: self.phases.iter().map(|p| p + delta).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = StateFile {
            n_modes: self.n_modes(),
            amplitudes: self.amplitudes.clone(),
            phases_rad: self.phases.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Parses a state file. Amplitudes within [`NORM_TOL`] of unit norm are
    /// kept bit-for-bit; those within [`LOAD_NORM_TOL`] are renormalized.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: StateFile = serde_json::from_str(text)?;
        if file.n_modes != file.amplitudes.len() || file.n_modes != file.phases_rad.len() {
            return Err(Error::InvalidState(format!(
                "n_modes = {} but {} amplitudes and {} phases",
                file.n_modes,
                file.amplitudes.len(),
                file.phases_rad.len()
            )));
        }
        let mut state = Self::canonical(file.amplitudes, file.phases_rad)?;
        let deviation = (state.norm_sqr() - 1.0).abs();
        if deviation > LOAD_NORM_TOL {
            return Err(Error::InvalidState(format!(
                "squared amplitudes deviate from 1 by {deviation:e}"
            )));
        }
        if deviation > NORM_TOL {
            state.renormalize()?;
        }
        Ok(state)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json()?.as_bytes())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    n_modes: usize,
    amplitudes: Vec<f64>,
    phases_rad: Vec<f64>,
}

/// The uniform superposition over `n_modes` modes with all phases zero.
pub fn ideal_w(n_modes: usize) -> Result<ModeState> {
    if n_modes == 0 {
        return Err(Error::InvalidState(
            "a W state needs at least one mode".into(),
        ));
    }
    let amp = 1.0 / (n_modes as f64).sqrt();
    Ok(ModeState {
        amplitudes: vec![amp; n_modes],
        phases: vec![0.0; n_modes],
    })
}

/// One Y-branch: power fraction sent to the upper output and the phase
/// picked up along each branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitterSpec {
    ratio: f64,
    phase_upper: f64,
    phase_lower: f64,
}

impl SplitterSpec {
    pub fn new(ratio: f64, phase_upper: f64, phase_lower: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "splitter ratio must lie in (0, 1), got {ratio}"
            )));
        }
        if !phase_upper.is_finite() || !phase_lower.is_finite() {
            return Err(Error::InvalidParameter(
                "splitter phases must be finite".into(),
            ));
        }
        Ok(Self {
            ratio,
            phase_upper,
            phase_lower,
        })
    }

    /// Lossless 50:50 branch without phase offsets.
    pub fn ideal() -> Self {
        Self {
            ratio: 0.5,
            phase_upper: 0.0,
            phase_lower: 0.0,
        }
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn phase_upper(&self) -> f64 {
        self.phase_upper
    }

    pub fn phase_lower(&self) -> f64 {
        self.phase_lower
    }

    fn upper(&self) -> Complex64 {
        Complex64::from_polar(self.ratio.sqrt(), self.phase_upper)
    }

    fn lower(&self) -> Complex64 {
        Complex64::from_polar((1.0 - self.ratio).sqrt(), self.phase_lower)
    }
}

impl Default for SplitterSpec {
    fn default() -> Self {
        Self::ideal()
    }
}

/// Complete binary tree of splitters.
///
/// Node `(level, position)` sits at depth `level` with `position` counted
/// left to right. The upper output of a node feeds child `2·position`, the
/// lower output child `2·position + 1`, so leaves read left to right are
/// output modes in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitSpec {
    depth: usize,
    splitters: BTreeMap<(usize, usize), SplitterSpec>,
}

/// Largest tree depth accepted by [`CircuitSpec`].
pub const MAX_DEPTH: usize = 20;

impl CircuitSpec {
    /// Tree of depth `depth` with every node ideal.
    pub fn ideal(depth: usize) -> Result<Self> {
        Self::check_depth(depth)?;
        let splitters = (0..depth)
            .flat_map(|level| (0..1usize << level).map(move |pos| (level, pos)))
            .map(|node| (node, SplitterSpec::ideal()))
            .collect();
        Ok(Self { depth, splitters })
    }

    /// Tree from an explicit node map; every node must be present.
    pub fn from_nodes(
        depth: usize,
        splitters: BTreeMap<(usize, usize), SplitterSpec>,
    ) -> Result<Self> {
        Self::check_depth(depth)?;
        let circuit = Self { depth, splitters };
        circuit.validate()?;
        Ok(circuit)
    }

    fn check_depth(depth: usize) -> Result<()> {
        if depth > MAX_DEPTH {
            return Err(Error::Structure(format!(
                "depth {depth} exceeds the supported maximum of {MAX_DEPTH}"
            )));
        }
        Ok(())
    }

    /// Replaces the splitter at `(level, position)`.
    pub fn set_splitter(
        &mut self,
        level: usize,
        position: usize,
        spec: SplitterSpec,
    ) -> Result<()> {
        if level >= self.depth || position >= 1 << level {
            return Err(Error::Structure(format!(
                "node ({level}, {position}) does not exist in a depth-{} tree",
                self.depth
            )));
        }
        self.splitters.insert((level, position), spec);
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n_modes(&self) -> usize {
        1 << self.depth
    }

    pub fn splitter(&self, level: usize, position: usize) -> Option<&SplitterSpec> {
        self.splitters.get(&(level, position))
    }

    fn validate(&self) -> Result<()> {
        let expected = (1usize << self.depth) - 1;
        if let Some(&(level, pos)) = self
            .splitters
            .keys()
            .find(|&&(level, pos)| level >= self.depth || pos >= 1 << level)
        {
            return Err(Error::Structure(format!(
                "node ({level}, {pos}) lies outside a depth-{} tree",
                self.depth
            )));
        }
        if self.splitters.len() != expected {
            let missing = (0..self.depth)
                .flat_map(|level| (0..1usize << level).map(move |pos| (level, pos)))
                .find(|node| !self.splitters.contains_key(node));
            return Err(Error::Structure(match missing {
                Some((level, pos)) => format!("missing splitter at node ({level}, {pos})"),
                None => format!(
                    "expected {expected} splitters, found {}",
                    self.splitters.len()
                ),
            }));
        }
        Ok(())
    }
}

/// Output state of a single photon injected at the root of `circuit`.
///
/// With one photon in the chip there is no interference inside the tree,
/// so each output coefficient is the product of branch factors along its
/// root-to-leaf path.
pub fn propagate(circuit: &CircuitSpec) -> Result<ModeState> {
    circuit.validate()?;
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for level in 0..circuit.depth {
        coeffs = coeffs
            .iter()
            .enumerate()
            .flat_map(|(pos, &c)| {
                let node = circuit.splitters[&(level, pos)];
                [c * node.upper(), c * node.lower()]
            })
            .collect();
    }
    let amplitudes = coeffs.iter().map(|c| c.norm()).collect();
    let phases = coeffs.iter().map(|c| c.arg()).collect();
    ModeState::new(amplitudes, phases)
}

/// `|⟨a|b⟩|²` over the mode coefficients.
pub fn fidelity(a: &ModeState, b: &ModeState) -> Result<f64> {
    if a.n_modes() != b.n_modes() {
        return Err(Error::ModeMismatch {
            left: a.n_modes(),
            right: b.n_modes(),
        });
    }
    let overlap: Complex64 = a
        .coefficients()
        .iter()
        .zip(b.coefficients())
        .map(|(x, y)| x.conj() * y)
        .sum();
    Ok(overlap.norm_sqr().min(1.0))
}

/// Coherent fraction `p` and two-excitation fraction `q` of the noisy
/// state `(1−q)[p|W⟩⟨W| + (1−p)P₁/N] + q·P₂/C(N,2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    p: f64,
    q: f64,
}

impl NoiseModel {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidParameter(format!(
                "noise fractions must lie in [0, 1], got p = {p}, q = {q}"
            )));
        }
        Ok(Self { p, q })
    }

    pub fn pure() -> Self {
        Self { p: 1.0, q: 0.0 }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }
}
