//! Real-space and Fourier-space imaging of the chip output facet.
//!
//! Each waveguide mode is imaged as a Gaussian spot
//! `g(x, y) = exp(-((x-x₀)² + (y-y₀)²) / waist²)`, normalized to unit
//! energy on the pixel grid. The Fourier-space image is the intensity of the
//! centered unitary DFT of the facet field, i.e. what a camera records in
//! the back-focal plane of a lens.

mod dft;
pub mod pgm;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::state::{ModeState, NoiseModel};

pub use dft::{dft2_unitary, Direction};
pub(crate) use dft::{fftshift, ifftshift, transpose, FftPlan2};

/// Default synthetic grid side in pixels.
pub const DEFAULT_GRID: usize = 256;
/// Default spot spacing in pixels.
pub const DEFAULT_SPACING: f64 = 16.0;
/// Default spot waist (amplitude 1/e radius) in pixels.
pub const DEFAULT_WAIST: f64 = 4.0;

/// Non-negative intensity image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
    pitch: f64,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        Self::with_pitch(width, height, values, 1.0)
    }

    pub fn with_pitch(width: usize, height: usize, values: Vec<f64>, pitch: f64) -> Result<Self> {
        check_dims(width, height, values.len())?;
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!(
                "image intensities must be finite and non-negative, found {v}"
            )));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "pixel pitch must be positive, got {pitch}"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
            pitch,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.values[y * self.width..(y + 1) * self.width]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Pixel-wise `a·self + b·other`; both weights must be non-negative.
    pub fn blend(&self, a: f64, other: &ImageGrid, b: f64) -> Result<ImageGrid> {
        check_same_dims(self.width, self.height, other.width, other.height)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        ImageGrid::with_pitch(self.width, self.height, values, self.pitch)
    }

    /// Same image multiplied by a non-negative factor.
    pub fn scaled(&self, factor: f64) -> Result<ImageGrid> {
        ImageGrid::with_pitch(
            self.width,
            self.height,
            self.values.iter().map(|v| v * factor).collect(),
            self.pitch,
        )
    }
}

/// Complex field sampled on a pixel grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    width: usize,
    height: usize,
    values: Vec<Complex64>,
}

impl Field {
    pub fn new(width: usize, height: usize, values: Vec<Complex64>) -> Result<Self> {
        check_dims(width, height, values.len())?;
        if values
            .iter()
            .any(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            return Err(Error::NonFinite(
                "field contains NaN or infinite entries".into(),
            ));
        }
        Ok(Self::from_raw(width, height, values))
    }

    pub(crate) fn from_raw(width: usize, height: usize, values: Vec<Complex64>) -> Self {
        Self {
            width,
            height,
            values,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![Complex64::default(); width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> Complex64 {
        self.values[y * self.width + x]
    }

    /// `Σ |f|²` over the grid.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Geometry(format!(
            "grid must be at least 1x1, got {width}x{height}"
        )));
    }
    if width * height != len {
        return Err(Error::Geometry(format!(
            "{width}x{height} grid needs {} samples, got {len}",
            width * height
        )));
    }
    Ok(())
}

pub(crate) fn check_same_dims(w1: usize, h1: usize, w2: usize, h2: usize) -> Result<()> {
    if (w1, h1) != (w2, h2) {
        return Err(Error::DimensionMismatch {
            left_w: w1,
            left_h: h1,
            right_w: w2,
            right_h: h2,
        });
    }
    Ok(())
}

/// Pixel positions of the imaged waveguide outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotLayout {
    centers: Vec<(f64, f64)>,
    waist: f64,
    spacing: f64,
}

impl SpotLayout {
    pub fn new(centers: Vec<(f64, f64)>, waist: f64, spacing: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Geometry("layout needs at least one spot".into()));
        }
        if !(waist > 0.0 && spacing > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "waist and spacing must be positive, got {waist} and {spacing}"
            )));
        }
        Ok(Self {
            centers,
            waist,
            spacing,
        })
    }

    /// `n_modes` spots on the horizontal midline, `spacing` apart and
    /// symmetric about the grid center `(floor(W/2), floor(H/2))`.
    pub fn linear(
        n_modes: usize,
        width: usize,
        height: usize,
        spacing: f64,
        waist: f64,
    ) -> Result<Self> {
        let cx = (width / 2) as f64;
        let cy = (height / 2) as f64;
        let mid = (n_modes as f64 - 1.0) / 2.0;
        let centers = (0..n_modes)
            .map(|n| (cx + (n as f64 - mid) * spacing, cy))
            .collect();
        Self::new(centers, waist, spacing)
    }

    /// Default geometry: spacing 16 px, waist 4 px.
    pub fn default_for(n_modes: usize, width: usize, height: usize) -> Result<Self> {
        Self::linear(n_modes, width, height, DEFAULT_SPACING, DEFAULT_WAIST)
    }

    pub fn centers(&self) -> &[(f64, f64)] {
        &self.centers
    }

    pub fn waist(&self) -> f64 {
        self.waist
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn n_spots(&self) -> usize {
        self.centers.len()
    }

    /// Same layout moved by `(dx, dy)` pixels.
    pub fn shifted(&self, dx: f64, dy: f64) -> Self {
        Self {
            centers: self
                .centers
                .iter()
                .map(|&(x, y)| (x + dx, y + dy))
                .collect(),
            ..self.clone()
        }
    }

    /// Checks that every spot sits at least three waists from every edge.
    pub fn check_fits(&self, width: usize, height: usize) -> Result<()> {
        let margin = 3.0 * self.waist;
        for (n, &(x, y)) in self.centers.iter().enumerate() {
            let inside = x - margin >= 0.0
                && x + margin <= (width - 1) as f64
                && y - margin >= 0.0
                && y + margin <= (height - 1) as f64;
            if !inside {
                return Err(Error::Geometry(format!(
                    "spot {n} at ({x}, {y}) with waist {} does not fit a {width}x{height} grid",
                    self.waist
                )));
            }
        }
        Ok(())
    }

    /// Unit-energy real spot profile of mode `n`, row-major.
    pub fn spot(&self, n: usize, width: usize, height: usize) -> Vec<f64> {
        let (x0, y0) = self.centers[n];
        let w2 = self.waist * self.waist;
        let gx: Vec<f64> = (0..width)
            .map(|x| (-(x as f64 - x0).powi(2) / w2).exp())
            .collect();
        let gy: Vec<f64> = (0..height)
            .map(|y| (-(y as f64 - y0).powi(2) / w2).exp())
            .collect();
        let norm =
            (gx.iter().map(|v| v * v).sum::<f64>() * gy.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let mut out = Vec::with_capacity(width * height);
        for &vy in &gy {
            out.extend(gx.iter().map(|&vx| vx * vy / norm));
        }
        out
    }
}

/// Lens used to form the Fourier-space image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LensSpec {
    focal_length: f64,
    wavelength: f64,
}

impl LensSpec {
    pub fn new(focal_length: f64, wavelength: f64) -> Result<Self> {
        if !(focal_length > 0.0 && wavelength > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "focal length and wavelength must be positive, got {focal_length} and {wavelength}"
            )));
        }
        Ok(Self {
            focal_length,
            wavelength,
        })
    }

    pub fn focal_length(&self) -> f64 {
        self.focal_length
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }
}

/// Spatial frequency imaged at back-focal-plane coordinate `x_f`:
/// `f_x = x_f / (λ·f)`.
pub fn lens_map(x_f: f64, lens: &LensSpec) -> f64 {
    x_f / (lens.wavelength * lens.focal_length)
}

/// Facet field `Σ_n amp_n·e^{iφ_n}·g_n`, rescaled to unit total energy.
///
/// Neighbouring spots overlap slightly on a finite grid, so the plain sum
/// is off unit energy by their cross terms; the final rescale keeps one
/// photon's worth of energy in every rendered field.
pub fn render_field(
    state: &ModeState,
    layout: &SpotLayout,
    width: usize,
    height: usize,
) -> Result<Field> {
    check_layout(state, layout, width, height)?;
    let mut values = vec![Complex64::default(); width * height];
    for (n, c) in state.coefficients().into_iter().enumerate() {
        let spot = layout.spot(n, width, height);
        for (v, g) in values.iter_mut().zip(spot) {
            *v += c * g;
        }
    }
    let energy: f64 = values.iter().map(|v| v.norm_sqr()).sum();
    if energy <= 0.0 {
        return Err(Error::Geometry("rendered field has zero energy".into()));
    }
    let scale = 1.0 / energy.sqrt();
    values.iter_mut().for_each(|v| *v *= scale);
    Field::new(width, height, values)
}

fn check_layout(state: &ModeState, layout: &SpotLayout, width: usize, height: usize) -> Result<()> {
    if layout.n_spots() != state.n_modes() {
        return Err(Error::Geometry(format!(
            "layout has {} spots but the state has {} modes",
            layout.n_spots(),
            state.n_modes()
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::Geometry("grid must be at least 1x1".into()));
    }
    layout.check_fits(width, height)
}

/// Pixel-wise `|f|²`.
pub fn intensity(field: &Field) -> ImageGrid {
    ImageGrid {
        width: field.width,
        height: field.height,
        values: field.values.iter().map(|v| v.norm_sqr()).collect(),
        pitch: 1.0,
    }
}

/// Real-space and Fourier-space images of the single-photon part of the
/// noisy state.
///
/// The Fourier image is `p·|DFT(field)|² + (1-p)·Σ_n amp_n²·|DFT(g_n)|²`:
/// the coherent superposition plus the fully dephased mixture, which images
/// as a weighted sum of single-mode diffraction patterns. `noise.q()` does
/// not enter; two-photon events are not imaged.
pub fn render_pair(
    state: &ModeState,
    noise: &NoiseModel,
    layout: &SpotLayout,
    width: usize,
    height: usize,
) -> Result<(ImageGrid, ImageGrid)> {
    let field = render_field(state, layout, width, height)?;
    let real = intensity(&field);
    let coherent = intensity(&dft2_unitary(&field, Direction::Forward));
    let p = noise.p();
    let mut fourier: Vec<f64> = coherent.values.iter().map(|v| p * v).collect();
    if p < 1.0 {
        for (n, &amp) in state.amplitudes().iter().enumerate() {
            let weight = (1.0 - p) * amp * amp;
            if weight == 0.0 {
                continue;
            }
            let single = spot_fourier_intensity(layout, n, width, height);
            for (v, s) in fourier.iter_mut().zip(single) {
                *v += weight * s;
            }
        }
    }
    Ok((real, ImageGrid::new(width, height, fourier)?))
}

fn spot_fourier_intensity(layout: &SpotLayout, n: usize, width: usize, height: usize) -> Vec<f64> {
    let spot = layout.spot(n, width, height);
    let field = Field::from_raw(
        width,
        height,
        spot.into_iter().map(|g| Complex64::new(g, 0.0)).collect(),
    );
    dft2_unitary(&field, Direction::Forward)
        .values
        .iter()
        .map(|v| v.norm_sqr())
        .collect()
}

/// Fourier intensity of one unit-energy spot at the grid center: the
/// envelope every mode shares, and the Fourier image of the fully mixed
/// state.
pub fn single_mode_envelope(width: usize, height: usize, waist: f64) -> Result<ImageGrid> {
    let layout = SpotLayout::new(vec![((width / 2) as f64, (height / 2) as f64)], waist, 1.0)?;
    ImageGrid::new(
        width,
        height,
        spot_fourier_intensity(&layout, 0, width, height),
    )
}

/// Relative far-field intensity of `n_modes` equal coherent spots spaced
/// `d` pixels apart: `G(f)·sin²(Nπfd)/sin²(πfd)` with the single-spot
/// envelope `G(f) = exp(-2π²·waist²·f²)`, `f` in cycles per pixel.
///
/// At `f·d` integer the grating factor takes its limit `N²`.
pub fn analytic_pattern(f_x: f64, n_modes: usize, d: f64, waist: f64) -> f64 {
    let envelope = (-2.0 * PI * PI * waist * waist * f_x * f_x).exp();
    envelope * grating_factor(PI * f_x * d, n_modes)
}

/// `sin²(N·x)/sin²(x)`, continuous through the zeros of `sin x`.
fn grating_factor(x: f64, n: usize) -> f64 {
    let nf = n as f64;
    if n <= 1 {
        return 1.0;
    }
    // the squared ratio has period π
    let delta = x - (x / PI).round() * PI;
    if delta.abs() < 1e-7 {
        return nf * nf * (1.0 - (nf * nf - 1.0) * delta * delta / 3.0);
    }
    let r = (nf * delta).sin() / delta.sin();
    r * r
}

/// Adds a constant `background` and seeded shot-noise-like fluctuations.
///
/// Each pixel becomes `v + b + sqrt(fluctuation·(v + b))·z` with `z`
/// standard normal, clamped at zero. `fluctuation` is the variance per unit
/// intensity; zero gives a deterministic offset. Random numbers come from
/// ChaCha8 seeded with `seed`, so output is reproducible across platforms.
pub fn add_detection_noise(
    img: &ImageGrid,
    background: f64,
    fluctuation: f64,
    seed: u64,
) -> Result<ImageGrid> {
    if !(background >= 0.0 && background.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "background must be non-negative, got {background}"
        )));
    }
    if !(fluctuation >= 0.0 && fluctuation.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "fluctuation scale must be non-negative, got {fluctuation}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = img
        .values
        .iter()
        .map(|&v| {
            let mean = v + background;
            if fluctuation == 0.0 {
                return mean;
            }
            let z: f64 = StandardNormal.sample(&mut rng);
            (mean + (fluctuation * mean).sqrt() * z).max(0.0)
        })
        .collect();
    ImageGrid::with_pitch(img.width, img.height, values, img.pitch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::ideal_w;
    use approx::assert_abs_diff_eq;

    const G: usize = DEFAULT_GRID;

    fn w8_layout() -> SpotLayout {
        SpotLayout::default_for(8, G, G).unwrap()
    }

    #[test]
    fn single_spot_has_unit_energy() {
        let layout = SpotLayout::default_for(1, G, G).unwrap();
        let f = render_field(&ideal_w(1).unwrap(), &layout, G, G).unwrap();
        assert_abs_diff_eq!(f.energy(), 1.0, epsilon = 1e-12);
        // the peak sits at the center and the profile is real and positive
        let peak = f.get(G / 2, G / 2);
        assert!(peak.im == 0.0 && peak.re > 0.0);
        assert_abs_diff_eq!(intensity(&f).sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn w8_field_has_eight_equal_spots() {
        let layout = w8_layout();
        let f = render_field(&ideal_w(8).unwrap(), &layout, G, G).unwrap();
        assert_abs_diff_eq!(f.energy(), 1.0, epsilon = 1e-9);
        let peaks: Vec<f64> = layout
            .centers()
            .iter()
            .map(|&(x, y)| f.get(x as usize, y as usize).norm())
            .collect();
        // end spots lack one neighbour's tail
        for p in &peaks {
            assert!((p - peaks[3]).abs() < 1e-3 * peaks[3]);
        }
        assert_eq!(peaks[0], peaks[7]);
    }

    #[test]
    fn opposite_phases_give_opposite_spots() {
        let layout = SpotLayout::default_for(2, G, G).unwrap();
        let s = ModeState::new(vec![0.5f64.sqrt(); 2], vec![0.0, PI]).unwrap();
        let f = render_field(&s, &layout, G, G).unwrap();
        // pointwise oracle: c·(g0 - g1) with c fixing unit energy
        let g0 = layout.spot(0, G, G);
        let g1 = layout.spot(1, G, G);
        let raw: Vec<f64> = g0
            .iter()
            .zip(&g1)
            .map(|(a, b)| 0.5f64.sqrt() * (a - b))
            .collect();
        let c = 1.0 / raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (v, r) in f.values().iter().zip(&raw) {
            assert!((v.re - c * r).abs() < 1e-14 && v.im.abs() < 1e-15);
        }
        let (x0, y0) = layout.centers()[0];
        let (x1, _) = layout.centers()[1];
        let a = f.get(x0 as usize, y0 as usize).re;
        let b = f.get(x1 as usize, y0 as usize).re;
        assert!(a > 0.0 && b < 0.0);
        assert_abs_diff_eq!(a, -b, epsilon = 1e-15);
    }

    #[test]
    fn out_of_bounds_spot_is_rejected() {
        let layout = SpotLayout::linear(8, 64, 64, 16.0, 4.0).unwrap();
        assert!(matches!(
            render_field(&ideal_w(8).unwrap(), &layout, 64, 64),
            Err(Error::Geometry(_))
        ));
        let mismatch = SpotLayout::default_for(4, G, G).unwrap();
        assert!(render_field(&ideal_w(8).unwrap(), &mismatch, G, G).is_err());
    }

    #[test]
    fn intensity_edge_cases() {
        let z = intensity(&Field::zeros(8, 8).unwrap());
        assert!(z.values().iter().all(|&v| v == 0.0));
        let layout = SpotLayout::default_for(2, G, G).unwrap();
        let plus = render_field(&ideal_w(2).unwrap(), &layout, G, G).unwrap();
        let minus = render_field(
            &ModeState::new(vec![0.5f64.sqrt(); 2], vec![0.0, PI]).unwrap(),
            &layout,
            G,
            G,
        )
        .unwrap();
        // the ±cross term is of order 1e-3 of the peak intensity
        let (ip, im) = (intensity(&plus), intensity(&minus));
        let peak = ip.max();
        for (a, b) in ip.values().iter().zip(im.values()) {
            assert!((a - b).abs() < 2e-3 * peak);
        }
    }

    #[test]
    fn gaussian_transforms_to_gaussian() {
        let n = 128;
        for &w in &[4.0, 6.0] {
            let layout = SpotLayout::new(vec![((n / 2) as f64, (n / 2) as f64)], w, 1.0).unwrap();
            let spot = layout.spot(0, n, n);
            let f = Field::new(
                n,
                n,
                spot.into_iter().map(|g| Complex64::new(g, 0.0)).collect(),
            )
            .unwrap();
            let out = dft2_unitary(&f, Direction::Forward);
            let kw = n as f64 / (PI * w);
            let peak = out.get(n / 2, n / 2).norm();
            for u in 0..n {
                let k = u as f64 - (n / 2) as f64;
                let expected = peak * (-(k * k) / (kw * kw)).exp();
                assert!((out.get(u, n / 2).norm() - expected).abs() <= 0.01 * peak);
            }
        }
    }

    #[test]
    fn fourier_image_family_matches_analytic() {
        for &n in &[1usize, 2, 4, 6, 8] {
            let layout = SpotLayout::default_for(n, G, G).unwrap();
            let (_, fourier) =
                render_pair(&ideal_w(n).unwrap(), &NoiseModel::pure(), &layout, G, G).unwrap();
            let row = fourier.row(G / 2);
            let peak = row.iter().copied().fold(0.0, f64::max);
            let model: Vec<f64> = (0..G)
                .map(|u| {
                    analytic_pattern(
                        (u as f64 - (G / 2) as f64) / G as f64,
                        n,
                        DEFAULT_SPACING,
                        DEFAULT_WAIST,
                    )
                })
                .collect();
            let mpeak = model.iter().copied().fold(0.0, f64::max);
            for (a, b) in row.iter().zip(&model) {
                assert!((a / peak - b / mpeak).abs() <= 0.02);
            }
        }
    }

    #[test]
    fn analytic_pattern_limits() {
        let (d, w) = (16.0, 4.0);
        assert_abs_diff_eq!(analytic_pattern(0.0, 8, d, w), 64.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            analytic_pattern(1.0 / (8.0 * d), 8, d, w),
            0.0,
            epsilon = 1e-12
        );
        for i in 0..200 {
            let f = -0.5 + i as f64 * 0.005;
            let g = (-2.0 * PI * PI * w * w * f * f).exp();
            let expected = 4.0 * g * (PI * f * d).cos().powi(2);
            assert_abs_diff_eq!(analytic_pattern(f, 2, d, w), expected, epsilon = 1e-12);
            assert_abs_diff_eq!(analytic_pattern(f, 1, d, w), g, epsilon = 1e-15);
        }
        // next principal maximum at f·d = 1
        assert_abs_diff_eq!(
            analytic_pattern(1.0 / d, 8, d, w),
            64.0 * (-2.0 * PI * PI * w * w / (d * d)).exp(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn lens_map_examples() {
        let lens = LensSpec::new(1e-3, 881.7e-9).unwrap();
        assert_eq!(lens_map(0.0, &lens), 0.0);
        // x_f = λ gives 1/f = 1000 cycles per metre, i.e. 1 per mm
        assert_abs_diff_eq!(lens_map(881.7e-9, &lens) * 1e-3, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            lens_map(2e-6, &lens),
            2.0 * lens_map(1e-6, &lens),
            epsilon = 1e-9
        );
        assert!(LensSpec::new(0.0, 1.0).is_err());
    }

    #[test]
    fn render_pair_coherence_limits() {
        let layout = w8_layout();
        let w8 = ideal_w(8).unwrap();
        let (_, pure) = render_pair(&w8, &NoiseModel::pure(), &layout, G, G).unwrap();
        let (_, mixed) =
            render_pair(&w8, &NoiseModel::new(0.0, 0.0).unwrap(), &layout, G, G).unwrap();
        let (_, half) =
            render_pair(&w8, &NoiseModel::new(0.5, 0.3).unwrap(), &layout, G, G).unwrap();
        let envelope = single_mode_envelope(G, G, DEFAULT_WAIST).unwrap();
        for i in 0..G * G {
            assert!((mixed.values()[i] - envelope.values()[i]).abs() <= 1e-10);
            let avg = 0.5 * pure.values()[i] + 0.5 * mixed.values()[i];
            assert!((half.values()[i] - avg).abs() <= 1e-12);
        }
        // grating: central bin N times the mixed value, zero at 2 bins
        let c = G / 2;
        assert!((pure.get(c, c) / mixed.get(c, c) - 8.0).abs() < 1e-2);
        assert!(pure.get(c + 2, c) < 1e-12);
    }

    #[test]
    fn translation_leaves_fourier_image_unchanged() {
        let layout = w8_layout();
        let s = ModeState::normalized(
            vec![0.3, 0.4, 0.35, 0.3, 0.38, 0.33, 0.36, 0.31],
            vec![0.0, 0.4, -0.3, 1.0, 0.2, -0.7, 0.5, 0.1],
        )
        .unwrap();
        let (_, a) = render_pair(&s, &NoiseModel::pure(), &layout, G, G).unwrap();
        let (_, b) =
            render_pair(&s, &NoiseModel::pure(), &layout.shifted(5.0, -3.0), G, G).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn global_phase_leaves_images_unchanged() {
        let layout = w8_layout();
        let s = ModeState::normalized(
            vec![0.3, 0.4, 0.35, 0.3, 0.38, 0.33, 0.36, 0.31],
            vec![0.0, 0.4, -0.3, 1.0, 0.2, -0.7, 0.5, 0.1],
        )
        .unwrap();
        let noise = NoiseModel::new(0.7, 0.0).unwrap();
        let (ra, fa) = render_pair(&s, &noise, &layout, G, G).unwrap();
        let (rb, fb) = render_pair(&s.with_global_phase(1.234), &noise, &layout, G, G).unwrap();
        for (x, y) in ra
            .values()
            .iter()
            .zip(rb.values())
            .chain(fa.values().iter().zip(fb.values()))
        {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn detection_noise_examples() {
        let layout = w8_layout();
        let (real, _) =
            render_pair(&ideal_w(8).unwrap(), &NoiseModel::pure(), &layout, G, G).unwrap();
        assert_eq!(add_detection_noise(&real, 0.0, 0.0, 7).unwrap(), real);
        let zero = ImageGrid::zeros(64, 64).unwrap();
        let bg = add_detection_noise(&zero, 0.25, 0.01, 3).unwrap();
        let mean = bg.sum() / bg.values().len() as f64;
        assert!((mean - 0.25).abs() < 0.01);
        assert!(bg.values().iter().all(|&v| v >= 0.0));
        let again = add_detection_noise(&zero, 0.25, 0.01, 3).unwrap();
        assert_eq!(bg, again);
        assert_ne!(bg, add_detection_noise(&zero, 0.25, 0.01, 4).unwrap());
        assert!(add_detection_noise(&zero, -1.0, 0.0, 0).is_err());
    }

    #[test]
    fn image_grid_rejects_negative() {
        assert!(matches!(
            ImageGrid::new(2, 1, vec![1.0, -0.5]),
            Err(Error::Domain(_))
        ));
        assert!(ImageGrid::new(0, 1, vec![]).is_err());
        assert!(Field::new(1, 1, vec![Complex64::new(f64::NAN, 0.0)]).is_err());
    }
}
