//! Gerchberg-Saxton phase retrieval and per-mode readout.
//!
//! Given the square roots of a real-space image `u₀` and a Fourier-space
//! image `U₀`, the field `u₀·e^{iψ}` is transformed, its Fourier amplitude
//! replaced by `U₀` (phase kept), transformed back, and its real-space
//! amplitude replaced by `u₀` (phase kept). The relative real-space error
//! `‖u − u₀‖/‖u₀‖` never increases from one iteration to the next.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{
    check_same_dims, fftshift, ifftshift, transpose, FftPlan2, Field, ImageGrid, SpotLayout,
};
use crate::state::{wrap_phase, ModeState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsConfig {
    pub max_iters: usize,
    /// Stop once the relative real-space amplitude error drops to this.
    pub tol: f64,
    /// Seed of the first restart; restart `r` uses `seed + r`.
    pub seed: u64,
    pub restarts: usize,
}

impl Default for GsConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tol: 1e-4,
            seed: 0,
            restarts: 5,
        }
    }
}

impl GsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter(
                "max_iters must be at least 1".into(),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter(
                "restarts must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GsResult {
    /// Measured real-space amplitude carrying the retrieved phase.
    pub field: Field,
    /// Relative real-space amplitude error after each iteration.
    pub error_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the restart that produced this result.
    pub restart: usize,
    /// Factor applied to `U₀` to match the energy of `u₀`.
    pub fourier_scale: f64,
}

impl GsResult {
    pub fn final_error(&self) -> f64 {
        self.error_trace.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Pixel-wise square root of an intensity image, as a zero-phase field.
pub fn sqrt_image(img: &ImageGrid) -> Result<Field> {
    sqrt_intensities(img.width(), img.height(), img.values())
}

/// Pixel-wise square root of raw intensities; negative samples are a
/// domain error.
pub fn sqrt_intensities(width: usize, height: usize, values: &[f64]) -> Result<Field> {
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!(
            "cannot take the square root of intensity {v}"
        )));
    }
    Field::new(
        width,
        height,
        values
            .iter()
            .map(|v| Complex64::new(v.sqrt(), 0.0))
            .collect(),
    )
}

/// Runs `cfg.restarts` independent Gerchberg-Saxton reconstructions and
/// returns the one with the lowest final error (earliest restart on ties).
///
/// Only the magnitudes of `u0` and `fourier_u0` are used. `fourier_u0` is
/// rescaled to the energy of `u0` first; a mismatch above 1% is logged.
pub fn gerchberg_saxton(u0: &Field, fourier_u0: &Field, cfg: &GsConfig) -> Result<GsResult> {
    Ok(best_run(gerchberg_saxton_runs(u0, fourier_u0, cfg)?))
}

/// Lowest final error, earliest restart on ties.
pub fn best_run(runs: Vec<GsResult>) -> GsResult {
    runs.into_iter()
        .reduce(|best, r| {
            if r.final_error() < best.final_error() {
                r
            } else {
                best
            }
        })
        .expect("at least one restart")
}

/// Every restart of [`gerchberg_saxton`], in seed order.
pub fn gerchberg_saxton_runs(
    u0: &Field,
    fourier_u0: &Field,
    cfg: &GsConfig,
) -> Result<Vec<GsResult>> {
    cfg.validate()?;
    check_same_dims(
        u0.width(),
        u0.height(),
        fourier_u0.width(),
        fourier_u0.height(),
    )?;
    let (w, h) = (u0.width(), u0.height());

    let mut real_amp: Vec<f64> = u0.values().iter().map(|v| v.norm()).collect();
    let mut fourier_amp: Vec<f64> = fourier_u0.values().iter().map(|v| v.norm()).collect();
    let real_energy: f64 = real_amp.iter().map(|v| v * v).sum();
    let fourier_energy: f64 = fourier_amp.iter().map(|v| v * v).sum();
    if !(real_energy > 0.0 && fourier_energy > 0.0) {
        return Err(Error::IllPosed(
            "both amplitude images need non-zero energy".into(),
        ));
    }
    let fourier_scale = (real_energy / fourier_energy).sqrt();
    if (fourier_energy / real_energy - 1.0).abs() > 0.01 {
        log::warn!(
            "Fourier/real energy ratio is {:.6}; rescaling Fourier amplitudes by {fourier_scale:.6}",
            fourier_energy / real_energy
        );
    }
    fourier_amp.iter_mut().for_each(|v| *v *= fourier_scale);

    // Iterate in unshifted FFT order; the Fourier side is kept transposed.
    ifftshift(&mut real_amp, w, h);
    ifftshift(&mut fourier_amp, w, h);
    let mut fourier_amp_t = vec![0.0; w * h];
    transpose(&fourier_amp, &mut fourier_amp_t, w, h);

    let mut engine = Engine {
        plan: FftPlan2::new(w, h),
        width: w,
        height: h,
        real_amp,
        fourier_amp_t,
        real_norm: real_energy.sqrt(),
    };

    let mut runs = Vec::with_capacity(cfg.restarts);
    for restart in 0..cfg.restarts {
        let seed = cfg.seed.wrapping_add(restart as u64);
        let (mut field, trace) = engine.run(seed, cfg)?;
        let err = *trace.last().expect("at least one iteration");
        log::debug!(
            "GS restart {restart} (seed {seed}): {} iterations, error {err:.3e}",
            trace.len()
        );
        fftshift(&mut field, w, h);
        runs.push(GsResult {
            field: Field::new(w, h, field)?,
            iterations: trace.len(),
            converged: err <= cfg.tol,
            error_trace: trace,
            restart,
            fourier_scale,
        });
    }
    Ok(runs)
}

struct Engine {
    plan: FftPlan2,
    width: usize,
    height: usize,
    real_amp: Vec<f64>,
    fourier_amp_t: Vec<f64>,
    real_norm: f64,
}

impl Engine {
    /// One reconstruction from seeded random phases. Returns the real-space
    /// field (unshifted order) and the error trace.
    fn run(&mut self, seed: u64, cfg: &GsConfig) -> Result<(Vec<Complex64>, Vec<f64>)> {
        let (w, h) = (self.width, self.height);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // phases are drawn in image order so the seed means the same thing
        // regardless of the internal layout
        let mut phase: Vec<f64> = (0..w * h)
            .map(|_| rng.random_range(0.0..2.0 * PI))
            .collect();
        ifftshift(&mut phase, w, h);
        let mut buf: Vec<Complex64> = self
            .real_amp
            .iter()
            .zip(&phase)
            .map(|(&a, &p)| Complex64::from_polar(a, p))
            .collect();

        let scale = 1.0 / ((w * h) as f64).sqrt();
        let mut trace = Vec::new();
        for _ in 0..cfg.max_iters {
            self.plan.forward_t(&mut buf);
            for (v, &amp) in buf.iter_mut().zip(&self.fourier_amp_t) {
                *v = with_amplitude(*v, amp);
            }
            self.plan.inverse_t(&mut buf);
            let mut err2 = 0.0;
            for (v, &amp) in buf.iter_mut().zip(&self.real_amp) {
                let d = *v * scale;
                let mag = (d.re * d.re + d.im * d.im).sqrt();
                err2 += (mag - amp) * (mag - amp);
                *v = if mag > 0.0 {
                    d * (amp / mag)
                } else {
                    Complex64::new(amp, 0.0)
                };
            }
            let err = err2.sqrt() / self.real_norm;
            if !err.is_finite() {
                return Err(Error::NonFinite(format!(
                    "error became {err} at iteration {}",
                    trace.len() + 1
                )));
            }
            trace.push(err);
            if err <= cfg.tol {
                break;
            }
        }
        Ok((buf, trace))
    }
}

/// `amp·v/|v|`, with phase zero where `v` vanishes.
fn with_amplitude(v: Complex64, amp: f64) -> Complex64 {
    let mag = (v.re * v.re + v.im * v.im).sqrt();
    if mag > 0.0 {
        v * (amp / mag)
    } else {
        Complex64::new(amp, 0.0)
    }
}

/// Per-mode amplitudes and phases read off a reconstructed field.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeEstimate {
    amplitudes: Vec<f64>,
    phases: Vec<f64>,
}

impl ModeEstimate {
    pub fn new(amplitudes: Vec<f64>, phases: Vec<f64>) -> Result<Self> {
        if amplitudes.is_empty() || amplitudes.len() != phases.len() {
            return Err(Error::InvalidState(format!(
                "estimate needs matching non-empty amplitude and phase lists, got {} and {}",
                amplitudes.len(),
                phases.len()
            )));
        }
        if amplitudes.iter().any(|a| !(*a >= 0.0)) || phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidState(
                "amplitudes must be non-negative and phases finite".into(),
            ));
        }
        Ok(Self { amplitudes, phases })
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

    /// The estimate implied by the mirrored complex-conjugate field: mode
    /// order reversed, phases negated, then re-pinned so mode 0 has phase 0.
    pub fn twin(&self) -> Self {
        let twin = Self {
            amplitudes: self.amplitudes.iter().rev().copied().collect(),
            phases: self.phases.iter().rev().map(|p| -p).collect(),
        };
        canonicalize(&twin, false)
    }

    pub fn to_state(&self) -> Result<ModeState> {
        ModeState::normalized(self.amplitudes.clone(), self.phases.clone())
    }
}

/// Integration window of each spot: a `spacing × spacing` square centered
/// on the spot, as half-open pixel ranges `(x0..x1, y0..y1)`.
fn windows(
    layout: &SpotLayout,
    width: usize,
    height: usize,
) -> Result<Vec<(usize, usize, usize, usize)>> {
    let side = layout.spacing().round() as isize;
    if side < 1 {
        return Err(Error::Geometry(
            "window side must be at least one pixel".into(),
        ));
    }
    let mut out = Vec::with_capacity(layout.n_spots());
    for (n, &(cx, cy)) in layout.centers().iter().enumerate() {
        let x0 = (cx - layout.spacing() / 2.0).round() as isize;
        let y0 = (cy - layout.spacing() / 2.0).round() as isize;
        let (x1, y1) = (x0 + side, y0 + side);
        if x0 < 0 || y0 < 0 || x1 > width as isize || y1 > height as isize {
            return Err(Error::Geometry(format!(
                "window of spot {n} leaves the {width}x{height} grid"
            )));
        }
        out.push((x0 as usize, x1 as usize, y0 as usize, y1 as usize));
    }
    for (i, a) in out.iter().enumerate() {
        for (j, b) in out.iter().enumerate().skip(i + 1) {
            if a.0 < b.1 && b.0 < a.1 && a.2 < b.3 && b.2 < a.3 {
                return Err(Error::Geometry(format!(
                    "windows of spots {i} and {j} overlap"
                )));
            }
        }
    }
    Ok(out)
}

/// Reads per-mode amplitudes and phases from a real-space field.
///
/// The amplitude of mode `n` is the root of the intensity inside its window.
/// The phase is the argument of the window sum of the field weighted by the
/// mode's spot profile, after removing the spill-over of neighbouring spots
/// into the window (a small linear solve against the spot overlaps). The
/// result is normalized and canonicalized with mode 0 at phase 0.
pub fn extract_modes(field: &Field, layout: &SpotLayout) -> Result<ModeEstimate> {
    let (w, h) = (field.width(), field.height());
    let wins = windows(layout, w, h)?;
    let n = layout.n_spots();
    let spots: Vec<Vec<f64>> = (0..n).map(|k| layout.spot(k, w, h)).collect();

    let mut amplitudes = Vec::with_capacity(n);
    let mut projections = vec![Complex64::default(); n];
    let mut overlap = vec![vec![0.0; n]; n];
    for (k, &(x0, x1, y0, y1)) in wins.iter().enumerate() {
        let mut power = 0.0;
        for y in y0..y1 {
            for x in x0..x1 {
                let idx = y * w + x;
                let v = field.values()[idx];
                power += v.norm_sqr();
                let g = spots[k][idx];
                projections[k] += v * g;
                for (m, spot) in spots.iter().enumerate() {
                    overlap[k][m] += g * spot[idx];
                }
            }
        }
        amplitudes.push(power.sqrt());
    }
    let total: f64 = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
    if total == 0.0 {
        return Err(Error::IllPosed(
            "field has no energy inside the spot windows".into(),
        ));
    }
    amplitudes.iter_mut().for_each(|a| *a /= total);

    let coeffs = solve(overlap, projections.clone()).unwrap_or(projections);
    let phases = coeffs.iter().map(|c| c.arg()).collect();
    Ok(canonicalize(&ModeEstimate { amplitudes, phases }, false))
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<Complex64>) -> Option<Vec<Complex64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                let bc = b[col];
                b[row] -= bc * f;
            }
        }
    }
    let mut x = vec![Complex64::default(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= x[k] * a[row][k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Pins mode 0 to phase 0 and wraps all phases into `(-π, π]`.
///
/// With `remove_ramp`, the least-squares line through the (unwrapped)
/// phases versus mode index is subtracted first; this absorbs a sub-pixel
/// offset between camera and DFT grids.
pub fn canonicalize(est: &ModeEstimate, remove_ramp: bool) -> ModeEstimate {
    let mut phases: Vec<f64> = est.phases.iter().map(|p| p - est.phases[0]).collect();
    if remove_ramp && phases.len() > 1 {
        let unwrapped = unwrap(&phases);
        let n = unwrapped.len() as f64;
        let mean_x = (n - 1.0) / 2.0;
        let mean_y = unwrapped.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (i, y) in unwrapped.iter().enumerate() {
            let dx = i as f64 - mean_x;
            sxy += dx * (y - mean_y);
            sxx += dx * dx;
        }
        let slope = sxy / sxx;
        let residual: Vec<f64> = unwrapped
            .iter()
            .enumerate()
            .map(|(i, y)| y - slope * i as f64)
            .collect();
        phases = residual.iter().map(|r| r - residual[0]).collect();
    }
    ModeEstimate {
        amplitudes: est.amplitudes.clone(),
        phases: phases.into_iter().map(wrap_phase).collect(),
    }
}

fn unwrap(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut prev = phases[0];
    out.push(prev);
    for &p in &phases[1..] {
        let next = prev + wrap_phase(p - prev);
        out.push(next);
        prev = next;
    }
    out
}

/// Root-mean-square of wrapped phase differences.
pub fn phase_rms(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()).max(1) as f64;
    (a.iter()
        .zip(b)
        .map(|(x, y)| wrap_phase(x - y).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
}

/// Largest absolute amplitude difference.
pub fn amplitude_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Chooses between `est` and its twin, whichever is closer in phase to
/// `reference`. Returns the choice and whether the twin was used.
pub fn resolve_twin(est: &ModeEstimate, reference: &ModeState) -> Result<(ModeEstimate, bool)> {
    if est.n_modes() != reference.n_modes() {
        return Err(Error::ModeMismatch {
            left: est.n_modes(),
            right: reference.n_modes(),
        });
    }
    let target: Vec<f64> = reference
        .phases()
        .iter()
        .map(|p| wrap_phase(p - reference.phases()[0]))
        .collect();
    let direct = canonicalize(est, false);
    let twin = est.twin();
    let d = phase_rms(direct.phases(), &target)
        + amplitude_error(direct.amplitudes(), reference.amplitudes());
    let t = phase_rms(twin.phases(), &target)
        + amplitude_error(twin.amplitudes(), reference.amplitudes());
    Ok(if t < d { (twin, true) } else { (direct, false) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeStats {
    pub mean: f64,
    /// Population standard deviation about the mean.
    pub std: f64,
    /// Root-mean-square deviation about the supplied reference value.
    pub std_about_reference: Option<f64>,
}

pub fn amplitude_stats(est: &ModeEstimate, reference: Option<f64>) -> AmplitudeStats {
    let a = est.amplitudes();
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let std_about_reference =
        reference.map(|r| (a.iter().map(|x| (x - r).powi(2)).sum::<f64>() / n).sqrt());
    AmplitudeStats {
        mean,
        std,
        std_about_reference,
    }
}

/// JSON report written by the retrieval command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub amplitudes: Vec<f64>,
    pub phases_rad: Vec<f64>,
    pub iterations: usize,
    pub final_error: f64,
    pub converged: bool,
    pub seed: u64,
    pub twin_used: bool,
}

/// Full image-pair pipeline: square roots, Gerchberg-Saxton, extraction
/// and canonicalization.
pub fn retrieve(
    real: &ImageGrid,
    fourier: &ImageGrid,
    layout: &SpotLayout,
    cfg: &GsConfig,
    remove_ramp: bool,
) -> Result<(GsResult, ModeEstimate)> {
    check_same_dims(
        real.width(),
        real.height(),
        fourier.width(),
        fourier.height(),
    )?;
    let u0 = sqrt_image(real)?;
    let fourier_u0 = sqrt_image(fourier)?;
    let result = gerchberg_saxton(&u0, &fourier_u0, cfg)?;
    let est = extract_modes(&result.field, layout)?;
    Ok((result, canonicalize(&est, remove_ramp)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{intensity, render_field, render_pair, Direction};
    use crate::state::{ideal_w, NoiseModel};
    use approx::assert_abs_diff_eq;

    const G: usize = 256;

    #[test]
    fn sqrt_image_examples() {
        let z = sqrt_image(&ImageGrid::zeros(4, 4).unwrap()).unwrap();
        assert!(z.values().iter().all(|v| *v == Complex64::default()));
        let c = sqrt_image(&ImageGrid::new(2, 2, vec![4.0; 4]).unwrap()).unwrap();
        assert!(c.values().iter().all(|v| *v == Complex64::new(2.0, 0.0)));
        assert!(matches!(
            sqrt_intensities(2, 1, &[1.0, -1.0]),
            Err(Error::Domain(_))
        ));

        let layout = SpotLayout::default_for(8, G, G).unwrap();
        let f = render_field(&ideal_w(8).unwrap(), &layout, G, G).unwrap();
        let amp = sqrt_image(&intensity(&f)).unwrap();
        for (a, v) in amp.values().iter().zip(f.values()) {
            assert!((a.re - v.norm()).abs() <= 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        assert!(GsConfig::default().validate().is_ok());
        assert!(GsConfig {
            max_iters: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(GsConfig {
            tol: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(GsConfig {
            restarts: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = Field::zeros(8, 8).unwrap();
        let b = Field::zeros(8, 4).unwrap();
        assert!(matches!(
            gerchberg_saxton(&a, &b, &GsConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn pair(state: &ModeState, n: usize) -> (Field, Field, SpotLayout) {
        let layout = SpotLayout::default_for(n, G, G).unwrap();
        let (real, fourier) = render_pair(state, &NoiseModel::pure(), &layout, G, G).unwrap();
        (
            sqrt_image(&real).unwrap(),
            sqrt_image(&fourier).unwrap(),
            layout,
        )
    }

    #[test]
    fn single_gaussian_retrieves_flat_phase() {
        let (u0, fu0, _) = pair(&ideal_w(1).unwrap(), 1);
        let cfg = GsConfig {
            restarts: 1,
            seed: 3,
            ..Default::default()
        };
        let res = gerchberg_saxton(&u0, &fu0, &cfg).unwrap();
        assert!(res.converged);
        let c = G / 2;
        let ref_phase = res.field.get(c, c).arg();
        // support: intensity above half maximum
        let peak = u0.get(c, c).re;
        for y in 0..G {
            for x in 0..G {
                if u0.get(x, y).re > peak / 2f64.sqrt() {
                    assert!(wrap_phase(res.field.get(x, y).arg() - ref_phase).abs() < 0.01);
                }
            }
        }
        for pair in res.error_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-10);
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let (u0, fu0, _) = pair(&ideal_w(8).unwrap(), 8);
        let cfg = GsConfig {
            max_iters: 30,
            restarts: 2,
            seed: 11,
            ..Default::default()
        };
        let a = gerchberg_saxton(&u0, &fu0, &cfg).unwrap();
        let b = gerchberg_saxton(&u0, &fu0, &cfg).unwrap();
        assert_eq!(a, b);
        let runs = gerchberg_saxton_runs(&u0, &fu0, &cfg).unwrap();
        assert_eq!(runs.len(), 2);
        let lowest = runs
            .iter()
            .map(GsResult::final_error)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(a.final_error(), lowest);
        assert_eq!(runs[a.restart], a);
        assert_eq!(a.iterations, a.error_trace.len());
        assert!(!a.converged);
    }

    #[test]
    fn mismatched_energy_is_rescaled() {
        let (u0, fu0, _) = pair(&ideal_w(2).unwrap(), 2);
        let louder = Field::new(G, G, fu0.values().iter().map(|v| v * 3.0).collect()).unwrap();
        let cfg = GsConfig {
            max_iters: 5,
            restarts: 1,
            ..Default::default()
        };
        let res = gerchberg_saxton(&u0, &louder, &cfg).unwrap();
        assert_abs_diff_eq!(res.fourier_scale, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn extraction_of_ideal_w8() {
        let layout = SpotLayout::default_for(8, G, G).unwrap();
        let f = render_field(&ideal_w(8).unwrap(), &layout, G, G).unwrap();
        let est = extract_modes(&f, &layout).unwrap();
        for (&a, &p) in est.amplitudes().iter().zip(est.phases()) {
            assert_abs_diff_eq!(a, 0.353553, epsilon = 1e-3);
            assert!(p.abs() < 0.02);
        }
        assert_eq!(est.phases()[0], 0.0);
    }

    #[test]
    fn extraction_single_spot() {
        let layout = SpotLayout::default_for(1, G, G).unwrap();
        let f = render_field(&ideal_w(1).unwrap(), &layout, G, G).unwrap();
        let est = extract_modes(&f, &layout).unwrap();
        assert_abs_diff_eq!(est.amplitudes()[0], 1.0, epsilon = 1e-15);
        assert_eq!(est.phases(), &[0.0]);
    }

    #[test]
    fn extraction_recovers_quarter_wave() {
        let layout = SpotLayout::default_for(2, G, G).unwrap();
        let s = ModeState::new(vec![0.5f64.sqrt(); 2], vec![0.0, PI / 2.0]).unwrap();
        let f = render_field(&s, &layout, G, G).unwrap();
        let est = extract_modes(&f, &layout).unwrap();
        assert_abs_diff_eq!(est.phases()[0], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(est.phases()[1], PI / 2.0, epsilon = 1e-6);
    }

    #[test]
    fn extraction_recovers_arbitrary_states() {
        let layout = SpotLayout::default_for(8, G, G).unwrap();
        let s = ModeState::normalized(
            vec![0.3, 0.42, 0.25, 0.37, 0.33, 0.4, 0.29, 0.36],
            vec![0.0, 2.5, -1.7, 0.9, -3.0, 1.2, 0.4, -0.6],
        )
        .unwrap();
        let f = render_field(&s, &layout, G, G).unwrap();
        let est = extract_modes(&f, &layout).unwrap();
        assert!(amplitude_error(est.amplitudes(), s.amplitudes()) <= 1e-3);
        for (p, t) in est.phases().iter().zip(s.phases()) {
            assert!(wrap_phase(p - t).abs() <= 1e-6);
        }
    }

    #[test]
    fn overlapping_windows_are_rejected() {
        let layout = SpotLayout::new(vec![(100.0, 128.0), (110.0, 128.0)], 4.0, 16.0).unwrap();
        let f = Field::zeros(G, G).unwrap();
        assert!(matches!(
            extract_modes(&f, &layout),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn canonicalize_examples() {
        let flat = ModeEstimate::new(vec![0.5; 4], vec![0.7; 4]).unwrap();
        assert!(canonicalize(&flat, false)
            .phases()
            .iter()
            .all(|&p| p == 0.0));

        let ramp =
            ModeEstimate::new(vec![0.35; 8], (0..8).map(|i| 0.1 * i as f64).collect()).unwrap();
        for p in canonicalize(&ramp, true).phases() {
            assert!(p.abs() < 1e-9);
        }

        let est = ModeEstimate::new(
            vec![0.35; 8],
            vec![0.05, 0.33, -0.4, 3.0, -2.9, 0.2, 1.1, -0.7],
        )
        .unwrap();
        let once = canonicalize(&est, false);
        assert_eq!(canonicalize(&once, false), once);
        let once_r = canonicalize(&est, true);
        let twice_r = canonicalize(&once_r, true);
        for (a, b) in once_r.phases().iter().zip(twice_r.phases()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn twin_reverses_and_conjugates() {
        let est = ModeEstimate::new(vec![0.1, 0.2, 0.3], vec![0.0, 0.5, -1.0]).unwrap();
        let twin = est.twin();
        assert_eq!(twin.amplitudes(), &[0.3, 0.2, 0.1]);
        // reversed & negated: [1.0, -0.5, 0.0], then pinned to mode 0
        assert_abs_diff_eq!(twin.phases()[1], -1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(twin.phases()[2], -1.0, epsilon = 1e-15);
        assert_eq!(twin.twin(), canonicalize(&est, false));
    }

    #[test]
    fn twin_field_gives_twin_estimate() {
        // mirrored conjugate field about the grid center
        let layout = SpotLayout::default_for(4, G, G).unwrap();
        let s = ModeState::new(vec![0.5; 4], vec![0.0, 0.8, -0.3, 2.0]).unwrap();
        let f = render_field(&s, &layout, G, G).unwrap();
        let c = G / 2;
        let mut mirrored = vec![Complex64::default(); G * G];
        for y in 0..G {
            for x in 0..G {
                let (mx, my) = ((2 * c + G - x) % G, (2 * c + G - y) % G);
                mirrored[y * G + x] = f.get(mx, my).conj();
            }
        }
        let twin_field = Field::new(G, G, mirrored).unwrap();
        // same amplitude constraints in both planes
        let fa = intensity(&crate::optics::dft2_unitary(&f, Direction::Forward));
        let fb = intensity(&crate::optics::dft2_unitary(
            &twin_field,
            Direction::Forward,
        ));
        for (a, b) in fa.values().iter().zip(fb.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        let direct = extract_modes(&f, &layout).unwrap();
        let mirrored_est = extract_modes(&twin_field, &layout).unwrap();
        for (a, b) in mirrored_est.phases().iter().zip(direct.twin().phases()) {
            assert!(wrap_phase(a - b).abs() < 1e-9);
        }
        let (chosen, used) = resolve_twin(&mirrored_est, &s).unwrap();
        assert!(used);
        assert!(phase_rms(chosen.phases(), s.phases()) < 1e-9);
    }

    #[test]
    fn amplitude_stats_examples() {
        let flat = ModeEstimate::new(vec![0.354; 8], vec![0.0; 8]).unwrap();
        let s = amplitude_stats(&flat, None);
        assert_abs_diff_eq!(s.mean, 0.354, epsilon = 1e-15);
        assert_abs_diff_eq!(s.std, 0.0, epsilon = 1e-15);

        let two = ModeEstimate::new(vec![0.3, 0.4], vec![0.0, 0.0]).unwrap();
        let s = amplitude_stats(&two, Some(0.354));
        assert_abs_diff_eq!(s.mean, 0.35, epsilon = 1e-15);
        assert_abs_diff_eq!(s.std, 0.05, epsilon = 1e-15);
        let about = ((0.054f64.powi(2) + 0.046f64.powi(2)) / 2.0).sqrt();
        assert_abs_diff_eq!(s.std_about_reference.unwrap(), about, epsilon = 1e-15);

        let noisy = vec![0.412, 0.298, 0.351, 0.276, 0.389, 0.333, 0.367, 0.305];
        let est = ModeEstimate::new(noisy.clone(), vec![0.0; 8]).unwrap();
        let s = amplitude_stats(&est, Some(1.0 / 8f64.sqrt()));
        // two-pass textbook formula, written out independently
        let mut total = 0.0;
        for v in &noisy {
            total += v;
        }
        let m = total / 8.0;
        let mut sq = 0.0;
        for v in &noisy {
            sq += (v - m) * (v - m);
        }
        assert!((s.mean - m).abs() <= 1e-12);
        assert!((s.std - (sq / 8.0).sqrt()).abs() <= 1e-12);
    }

    #[test]
    fn twin_resolution_prefers_matching_order() {
        let reference = ModeState::new(vec![0.5; 4], vec![0.0, 0.3, 0.9, -0.2]).unwrap();
        let est = ModeEstimate::new(vec![0.5; 4], vec![0.0, 0.3, 0.9, -0.2]).unwrap();
        let (chosen, used) = resolve_twin(&est, &reference).unwrap();
        assert!(!used);
        assert_eq!(chosen, est);
    }
}
