//! Image agreement metrics and the coherent-fraction estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{check_same_dims, ImageGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    /// Odd side length of the uniform window.
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range `L`; `None` uses the larger maximum of the two images.
    pub dynamic_range: Option<f64>,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: None,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "SSIM window must be odd and at least 3, got {}",
                self.window
            )));
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(Error::InvalidParameter(
                "SSIM constants k1, k2 must be positive".into(),
            ));
        }
        if let Some(l) = self.dynamic_range {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "dynamic range must be positive, got {l}"
                )));
            }
        }
        Ok(())
    }
}

/// Sums of `f(a, b)` over every `win × win` window, row-major over window
/// origins.
fn window_sums(
    a: &[f64],
    b: &[f64],
    width: usize,
    height: usize,
    win: usize,
    f: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let (ow, oh) = (width - win + 1, height - win + 1);
    let mut rows = vec![0.0; ow * height];
    for y in 0..height {
        let base = y * width;
        let line: Vec<f64> = (0..width).map(|x| f(a[base + x], b[base + x])).collect();
        for x in 0..ow {
            rows[y * ow + x] = line[x..x + win].iter().sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (y..y + win).map(|yy| rows[yy * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity over all fully contained uniform windows.
pub fn ssim(a: &ImageGrid, b: &ImageGrid, params: &SsimParams) -> Result<f64> {
    params.validate()?;
    check_same_dims(a.width(), a.height(), b.width(), b.height())?;
    let (w, h, win) = (a.width(), a.height(), params.window);
    if win > w || win > h {
        return Err(Error::Geometry(format!(
            "SSIM window {win} is larger than the {w}x{h} image"
        )));
    }
    let l = params.dynamic_range.unwrap_or_else(|| {
        let m = a.max().max(b.max());
        if m > 0.0 {
            m
        } else {
            1.0
        }
    });
    let c1 = (params.k1 * l).powi(2);
    let c2 = (params.k2 * l).powi(2);

    let (av, bv) = (a.values(), b.values());
    let sa = window_sums(av, bv, w, h, win, |x, _| x);
    let sb = window_sums(av, bv, w, h, win, |_, y| y);
    let saa = window_sums(av, bv, w, h, win, |x, _| x * x);
    let sbb = window_sums(av, bv, w, h, win, |_, y| y * y);
    let sab = window_sums(av, bv, w, h, win, |x, y| x * y);

    let n = (win * win) as f64;
    let mut total = 0.0;
    for i in 0..sa.len() {
        let (ma, mb) = (sa[i] / n, sb[i] / n);
        let va = saa[i] / n - ma * ma;
        let vb = sbb[i] / n - mb * mb;
        let cov = sab[i] / n - ma * mb;
        total +=
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / sa.len() as f64)
}

/// Pearson correlation of pixel intensities.
pub fn ncc_overlap(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    check_same_dims(a.width(), a.height(), b.width(), b.height())?;
    let n = a.values().len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.values().iter().zip(b.values()) {
        let (da, db) = (x - ma, y - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "an image has zero variance".into(),
        ));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Default visibility region: one and a half fringe periods, `1.5·W/d`
/// frequency bins.
pub fn default_halfwidth(width: usize, spacing: f64) -> usize {
    (1.5 * width as f64 / spacing).ceil() as usize
}

/// Fringe visibility `(I_max − I_min)/(I_max + I_min)` on the central row,
/// within `halfwidth` pixels of the center, after dividing by `envelope`
/// (the single-mode Fourier intensity, i.e. the p = 0 image).
pub fn fringe_visibility(
    fourier: &ImageGrid,
    envelope: &ImageGrid,
    halfwidth: usize,
) -> Result<f64> {
    check_same_dims(
        fourier.width(),
        fourier.height(),
        envelope.width(),
        envelope.height(),
    )?;
    let (w, h) = (fourier.width(), fourier.height());
    let (cx, cy) = (w / 2, h / 2);
    if halfwidth == 0 || halfwidth > cx || cx + halfwidth >= w {
        return Err(Error::Geometry(format!(
            "visibility halfwidth {halfwidth} does not fit a {w}-pixel row"
        )));
    }
    let env_peak = envelope.max();
    let (row, env) = (fourier.row(cy), envelope.row(cy));
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in cx - halfwidth..=cx + halfwidth {
        if !(env[x] > 1e-12 * env_peak) {
            return Err(Error::Domain(format!("envelope vanishes at column {x}")));
        }
        let v = row[x] / env[x];
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi + lo == 0.0 {
        return Ok(0.0);
    }
    Ok(((hi - lo) / (hi + lo)).clamp(0.0, 1.0))
}

fn normalized(img: &ImageGrid, what: &str) -> Result<Vec<f64>> {
    let total = img.sum();
    if !(total > 0.0) {
        return Err(Error::IllPosed(format!("{what} image has no intensity")));
    }
    Ok(img.values().iter().map(|v| v / total).collect())
}

const GOLDEN_TOL: f64 = 1e-6;

/// Coherent fraction of `measured` under the convex model
/// `p·coherent + (1−p)·incoherent`, all images normalized to unit total
/// intensity. Minimizes the squared residual by golden-section search.
pub fn estimate_p(
    measured: &ImageGrid,
    coherent: &ImageGrid,
    incoherent: &ImageGrid,
) -> Result<f64> {
    check_same_dims(
        measured.width(),
        measured.height(),
        coherent.width(),
        coherent.height(),
    )?;
    check_same_dims(
        measured.width(),
        measured.height(),
        incoherent.width(),
        incoherent.height(),
    )?;
    let m = normalized(measured, "measured")?;
    let c = normalized(coherent, "coherent")?;
    let i = normalized(incoherent, "incoherent")?;
    let separation: f64 = c.iter().zip(&i).map(|(x, y)| (x - y).powi(2)).sum();
    if separation <= 1e-30 {
        return Err(Error::IllPosed(
            "coherent and incoherent templates coincide".into(),
        ));
    }
    let objective = |p: f64| -> f64 {
        m.iter()
            .zip(c.iter().zip(&i))
            .map(|(mv, (cv, iv))| (mv - (p * cv + (1.0 - p) * iv)).powi(2))
            .sum()
    };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 1.0);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    while b - a > GOLDEN_TOL {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = objective(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = objective(x2);
        }
    }
    let mid = (a + b) / 2.0;
    // the bracket never reaches the endpoints themselves
    let best = [
        (mid, objective(mid)),
        (0.0, objective(0.0)),
        (1.0, objective(1.0)),
    ]
    .into_iter()
    .min_by(|x, y| x.1.total_cmp(&y.1))
    .map(|(p, _)| p)
    .unwrap_or(mid);
    Ok(best)
}

/// JSON report written by the comparison command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub ssim: f64,
    pub ncc: f64,
    pub visibility_a: f64,
    pub visibility_b: f64,
    pub p_hat: Option<f64>,
}
