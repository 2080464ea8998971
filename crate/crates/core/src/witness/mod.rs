//! Projector witness `W = α·P₀ + β·P₁ + γ·P₂ − |W₈⟩⟨W₈|` for eight modes,
//! where `Pᵢ` projects onto basis states with exactly `i` excitations.
//!
//! Non-negativity is checked on the symmetric bipartite product ansatz
//! `|a⟩⊗|b⟩`, with `|a⟩ = a₀|0…0⟩ + a₁·Σ|single excitation⟩` on `k` modes
//! and likewise `|b⟩` on the other `8 − k`.

mod lp;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::NoiseModel;

pub const N_QUBITS: usize = 8;
pub const DIM: usize = 1 << N_QUBITS;
/// Bound on `|α|`, `|β|`, `|γ|` in the witness search.
pub const BOX_BOUND: f64 = 4.0;
/// Sampled constraint grid: `a₀, b₀ ∈ {0, 1/50, …, 1}`.
pub const SAMPLE_DIVISIONS: usize = 50;
pub const MAX_ROUNDS: usize = 50;
/// Accepted violation of `⟨ab|W|ab⟩ ≥ 0`.
pub const VERIFY_TOL: f64 = 1e-9;

const MIN_GRID_DIVISIONS: usize = 100;
const REFINE_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl WitnessParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite() && gamma.is_finite()) {
            return Err(Error::NonFinite(format!(
                "witness ({alpha}, {beta}, {gamma})"
            )));
        }
        Ok(Self { alpha, beta, gamma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductAnsatz {
    k: usize,
    a0: f64,
    b0: f64,
}

impl ProductAnsatz {
    pub fn new(k: usize, a0: f64, b0: f64) -> Result<Self> {
        if !(1..N_QUBITS).contains(&k) {
            return Err(Error::InvalidParameter(format!(
                "k must be in 1..=7, got {k}"
            )));
        }
        if !((0.0..=1.0).contains(&a0) && (0.0..=1.0).contains(&b0)) {
            return Err(Error::InvalidParameter(format!(
                "a0, b0 must lie in [0, 1], got {a0}, {b0}"
            )));
        }
        Ok(Self { k, a0, b0 })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    pub fn a1(&self) -> f64 {
        ((1.0 - self.a0 * self.a0) / self.k as f64).sqrt()
    }

    pub fn b1(&self) -> f64 {
        ((1.0 - self.b0 * self.b0) / (N_QUBITS - self.k) as f64).sqrt()
    }

    /// Weights of `P₀`, `P₁`, `P₂` and the `|W₈⟩` overlap.
    fn terms(&self) -> [f64; 4] {
        let (k, rest) = (self.k as f64, (N_QUBITS - self.k) as f64);
        let (a0, a1, b0, b1) = (self.a0, self.a1(), self.b0, self.b1());
        let overlap = k * a1 * b0 + rest * a0 * b1;
        [
            a0 * a0 * b0 * b0,
            a0 * a0 * rest * b1 * b1 + k * a1 * a1 * b0 * b0,
            k * a1 * a1 * rest * b1 * b1,
            overlap * overlap / N_QUBITS as f64,
        ]
    }
}

/// `⟨ab|W|ab⟩` in closed form.
pub fn product_expectation(w: &WitnessParams, s: &ProductAnsatz) -> f64 {
    let [p0, p1, p2, overlap] = s.terms();
    w.alpha * p0 + w.beta * p1 + w.gamma * p2 - overlap
}

/// `tr(W·ρ)` for `ρ = (1−q)[p|W₈⟩⟨W₈| + (1−p)P₁/8] + q·P₂/28`.
pub fn rho_expectation(w: &WitnessParams, noise: &NoiseModel) -> f64 {
    let (p, q) = (noise.p(), noise.q());
    (1.0 - q) * (w.beta - (7.0 * p + 1.0) / 8.0) + w.gamma * q
}

/// Pure or mixed state over the 256-dimensional basis of eight qubits.
/// Basis index bit `7 − j` is the occupation of mode `j`.
#[derive(Debug, Clone, PartialEq)]
pub enum DenseState {
    Pure(Vec<Complex64>),
    /// Row-major 256×256 density matrix.
    Mixed(Vec<Complex64>),
}

const DENSE_TOL: f64 = 1e-12;

impl DenseState {
    pub fn pure(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != DIM {
            return Err(Error::InvalidState(format!(
                "expected {DIM} amplitudes, got {}",
                amplitudes.len()
            )));
        }
        let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > DENSE_TOL {
            return Err(Error::InvalidState(format!("state norm² is {norm}, not 1")));
        }
        Ok(Self::Pure(amplitudes))
    }

    pub fn mixed(matrix: Vec<Complex64>) -> Result<Self> {
        if matrix.len() != DIM * DIM {
            return Err(Error::InvalidState(format!(
                "expected a {DIM}x{DIM} matrix"
            )));
        }
        let trace: Complex64 = (0..DIM).map(|i| matrix[i * DIM + i]).sum();
        if (trace.re - 1.0).abs() > DENSE_TOL || trace.im.abs() > DENSE_TOL {
            return Err(Error::InvalidState(format!(
                "density matrix trace is {trace}, not 1"
            )));
        }
        for i in 0..DIM {
            for j in i..DIM {
                if (matrix[i * DIM + j] - matrix[j * DIM + i].conj()).norm() > DENSE_TOL {
                    return Err(Error::InvalidState(format!(
                        "density matrix is not Hermitian at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self::Mixed(matrix))
    }

    pub fn basis(index: usize) -> Result<Self> {
        let mut v = vec![Complex64::default(); DIM];
        *v.get_mut(index)
            .ok_or_else(|| Error::InvalidState(format!("basis index {index} out of range")))? =
            Complex64::new(1.0, 0.0);
        Ok(Self::Pure(v))
    }

    /// `|a⟩⊗|b⟩` built by an explicit tensor product.
    pub fn product(s: &ProductAnsatz) -> Self {
        let part = |n: usize, c0: f64, c1: f64| -> Vec<f64> {
            let mut v = vec![0.0; 1 << n];
            v[0] = c0;
            for j in 0..n {
                v[1 << j] = c1;
            }
            v
        };
        let a = part(s.k, s.a0, s.a1());
        let b = part(N_QUBITS - s.k, s.b0, s.b1());
        let mut v = Vec::with_capacity(DIM);
        for x in &a {
            for y in &b {
                v.push(Complex64::new(x * y, 0.0));
            }
        }
        Self::Pure(v)
    }

    /// The noise-model density matrix.
    pub fn noisy(noise: &NoiseModel) -> Self {
        let (p, q) = (noise.p(), noise.q());
        let mut m = vec![Complex64::default(); DIM * DIM];
        let singles: Vec<usize> = (0..DIM).filter(|i| i.count_ones() == 1).collect();
        let pairs: Vec<usize> = (0..DIM).filter(|i| i.count_ones() == 2).collect();
        for &i in &singles {
            for &j in &singles {
                m[i * DIM + j] += Complex64::new((1.0 - q) * p / 8.0, 0.0);
            }
            m[i * DIM + i] += Complex64::new((1.0 - q) * (1.0 - p) / 8.0, 0.0);
        }
        for &i in &pairs {
            m[i * DIM + i] += Complex64::new(q / pairs.len() as f64, 0.0);
        }
        Self::Mixed(m)
    }
}

/// `W` as an explicit real 256×256 matrix, row-major.
pub fn witness_matrix(w: &WitnessParams) -> Vec<f64> {
    let mut m = vec![0.0; DIM * DIM];
    for i in 0..DIM {
        m[i * DIM + i] = match i.count_ones() {
            0 => w.alpha,
            1 => w.beta,
            2 => w.gamma,
            _ => 0.0,
        };
    }
    let singles: Vec<usize> = (0..DIM).filter(|i| i.count_ones() == 1).collect();
    for &i in &singles {
        for &j in &singles {
            m[i * DIM + j] -= 1.0 / N_QUBITS as f64;
        }
    }
    m
}

/// `⟨ψ|W|ψ⟩` or `tr(W·ρ)` by explicit contraction.
pub fn dense_expectation(w: &WitnessParams, state: &DenseState) -> f64 {
    let m = witness_matrix(w);
    match state {
        DenseState::Pure(v) => {
            let mut acc = Complex64::default();
            for i in 0..DIM {
                let mut row = Complex64::default();
                for j in 0..DIM {
                    row += v[j] * m[i * DIM + j];
                }
                acc += v[i].conj() * row;
            }
            acc.re
        }
        DenseState::Mixed(rho) => {
            let mut acc = Complex64::default();
            for i in 0..DIM {
                for j in 0..DIM {
                    acc += rho[j * DIM + i] * m[i * DIM + j];
                }
            }
            acc.re
        }
    }
}

/// Minimum of `⟨ab|W|ab⟩` over the ansatz: a 0.01 grid per `k`, then a
/// compass search from each slice's best grid point down to step 1e-6.
pub fn min_product_expectation(w: &WitnessParams) -> (f64, ProductAnsatz) {
    let eval = |k: usize, a0: f64, b0: f64| product_expectation(w, &ProductAnsatz { k, a0, b0 });
    let mut best: Option<(f64, ProductAnsatz)> = None;
    for k in 1..N_QUBITS {
        let mut start = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=MIN_GRID_DIVISIONS {
            for j in 0..=MIN_GRID_DIVISIONS {
                let (a0, b0) = (
                    i as f64 / MIN_GRID_DIVISIONS as f64,
                    j as f64 / MIN_GRID_DIVISIONS as f64,
                );
                let v = eval(k, a0, b0);
                if v < start.0 {
                    start = (v, a0, b0);
                }
            }
        }
        let (mut v, mut a0, mut b0) = start;
        let mut h = 1.0 / MIN_GRID_DIVISIONS as f64;
        while h >= REFINE_STEP {
            let mut moved = false;
            for (da, db) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
                let (na, nb) = ((a0 + da).clamp(0.0, 1.0), (b0 + db).clamp(0.0, 1.0));
                let nv = eval(k, na, nb);
                if nv < v {
                    (v, a0, b0) = (nv, na, nb);
                    moved = true;
                }
            }
            if !moved {
                h /= 2.0;
            }
        }
        if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
            best = Some((v, ProductAnsatz { k, a0, b0 }));
        }
    }
    best.expect("k range is non-empty")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnsatzPoint {
    pub k: usize,
    pub a0: f64,
    pub b0: f64,
}

impl From<&ProductAnsatz> for AnsatzPoint {
    fn from(s: &ProductAnsatz) -> Self {
        Self {
            k: s.k,
            a0: s.a0,
            b0: s.b0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corner {
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub min_product_expectation: f64,
    pub argmin: AnsatzPoint,
    pub worst_corner: Corner,
    /// Largest `tr(W·ρ)` over the corners; negative when certified.
    pub margin: f64,
    pub rounds: usize,
    pub box_bound: f64,
}

impl Certificate {
    pub fn params(&self) -> WitnessParams {
        WitnessParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
        }
    }
}

/// A constraint that is tight at the best witness found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Binding {
    Product {
        k: usize,
        a0: f64,
        b0: f64,
        weight: f64,
    },
    Corner {
        p: f64,
        q: f64,
        weight: f64,
    },
    Bound {
        coefficient: String,
        value: f64,
        weight: f64,
    },
}

/// Why no witness exists for the region: the best valid witness found
/// still has a non-negative margin, held there by the `binding`
/// constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoWitness {
    pub p_min: f64,
    pub q_max: f64,
    /// The optimum witness found, with its margin and verification.
    pub best: Certificate,
    pub binding: Vec<Binding>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WitnessOutcome {
    Certified(Certificate),
    NoWitness(NoWitness),
}

/// Corners of `[p_min, 1] × [0, q_max]`, duplicates removed.
pub fn corners(p_min: f64, q_max: f64) -> Vec<Corner> {
    let mut out: Vec<Corner> = Vec::new();
    for (p, q) in [(p_min, 0.0), (p_min, q_max), (1.0, 0.0), (1.0, q_max)] {
        if !out.iter().any(|c| c.p == p && c.q == q) {
            out.push(Corner { p, q });
        }
    }
    out
}

/// Largest `tr(W·ρ)` over the region corners and where it occurs. The
/// expectation is affine in `p` and `q`, so this is its maximum over the
/// whole region.
pub fn worst_corner(w: &WitnessParams, p_min: f64, q_max: f64) -> Result<(f64, Corner)> {
    let mut worst: Option<(f64, Corner)> = None;
    for c in corners(p_min, q_max) {
        let v = rho_expectation(w, &NoiseModel::new(c.p, c.q)?);
        if worst.is_none_or(|(wv, _)| v > wv) {
            worst = Some((v, c));
        }
    }
    Ok(worst.expect("at least one corner"))
}

fn sample_grid() -> Vec<ProductAnsatz> {
    let d = SAMPLE_DIVISIONS as f64;
    let mut out = Vec::with_capacity((N_QUBITS - 1) * (SAMPLE_DIVISIONS + 1).pow(2));
    for k in 1..N_QUBITS {
        for i in 0..=SAMPLE_DIVISIONS {
            for j in 0..=SAMPLE_DIVISIONS {
                out.push(ProductAnsatz {
                    k,
                    a0: i as f64 / d,
                    b0: j as f64 / d,
                });
            }
        }
    }
    out
}

fn canonical_order(a: &ProductAnsatz, b: &ProductAnsatz) -> std::cmp::Ordering {
    a.k.cmp(&b.k)
        .then(a.a0.total_cmp(&b.a0))
        .then(a.b0.total_cmp(&b.b0))
}

enum Row {
    Product(ProductAnsatz),
    Corner(Corner),
    Bound(&'static str, f64),
}

/// Searches for `(α, β, γ)` whose witness is non-negative on every product
/// ansatz state and negative on the noise-model state at every corner of
/// `[p_min, 1] × [0, q_max]`.
///
/// Product constraints are sampled on a grid and the linear program
/// `min t` subject to `tr(W·ρ_corner) ≤ t`, the sampled constraints,
/// `|α|, |β|, |γ| ≤ 4` and `γ ≥ 0` is solved. The exact ansatz minimum is
/// then checked; a violating point is added and the program re-solved, up
/// to [`MAX_ROUNDS`] times. If a violation remains, all three coefficients
/// are raised by it: every ansatz state lies inside `P₀ + P₁ + P₂`, so this
/// lifts each product expectation, and every `tr(W·ρ)`, by the same amount.
pub fn find_witness(p_min: f64, q_max: f64) -> Result<WitnessOutcome> {
    if !(0.0..=1.0).contains(&p_min) {
        return Err(Error::InvalidParameter(format!(
            "p_min must lie in [0, 1], got {p_min}"
        )));
    }
    if !(0.0..1.0).contains(&q_max) {
        return Err(Error::InvalidParameter(format!(
            "q_max must lie in [0, 1), got {q_max}"
        )));
    }
    let corner_set = corners(p_min, q_max);
    let mut samples = sample_grid();

    let mut rounds = 0;
    let (params, solution_rows, duals) = loop {
        rounds += 1;
        samples.sort_by(canonical_order);
        let mut meta = Vec::new();
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for s in &samples {
            let [p0, p1, p2, overlap] = s.terms();
            rows.push(vec![p0, p1, p2, 0.0]);
            rhs.push(overlap);
            meta.push(Row::Product(*s));
        }
        for c in &corner_set {
            // (1−q)β + qγ − t ≤ (1−q)(7p+1)/8
            rows.push(vec![0.0, -(1.0 - c.q), -c.q, 1.0]);
            rhs.push(-(1.0 - c.q) * (7.0 * c.p + 1.0) / 8.0);
            meta.push(Row::Corner(*c));
        }
        for (i, name) in ["alpha", "beta", "gamma"].into_iter().enumerate() {
            let mut up = vec![0.0; 4];
            up[i] = -1.0;
            rows.push(up);
            rhs.push(-BOX_BOUND);
            meta.push(Row::Bound(name, BOX_BOUND));
            let mut down = vec![0.0; 4];
            down[i] = 1.0;
            rows.push(down);
            rhs.push(if i == 2 { 0.0 } else { -BOX_BOUND });
            meta.push(Row::Bound(name, if i == 2 { 0.0 } else { -BOX_BOUND }));
        }

        let sol = match lp::minimize(&[0.0, 0.0, 0.0, 1.0], &rows, &rhs) {
            lp::Outcome::Optimal(s) => s,
            other => {
                return Err(Error::IllPosed(format!(
                    "witness program has no optimum: {other:?}"
                )))
            }
        };
        let params = WitnessParams::new(sol.x[0], sol.x[1], sol.x[2])?;
        let (min_v, arg) = min_product_expectation(&params);
        log::debug!(
            "round {rounds}: ({:.6}, {:.6}, {:.6}), margin {:.6}, min {min_v:.3e}",
            params.alpha,
            params.beta,
            params.gamma,
            sol.value
        );
        let already = samples.iter().any(|s| s == &arg);
        if min_v >= -VERIFY_TOL || rounds >= MAX_ROUNDS || already {
            break (params, meta, sol.duals);
        }
        samples.push(arg);
    };

    let (mut min_v, mut arg) = min_product_expectation(&params);
    let mut params = params;
    if min_v < -VERIFY_TOL {
        let lift = -min_v;
        log::warn!("cutting planes left a violation of {lift:.3e}; lifting all coefficients");
        params = WitnessParams::new(params.alpha + lift, params.beta + lift, params.gamma + lift)?;
        (min_v, arg) = min_product_expectation(&params);
    }
    let (margin, worst) = worst_corner(&params, p_min, q_max)?;
    let cert = Certificate {
        alpha: params.alpha,
        beta: params.beta,
        gamma: params.gamma,
        min_product_expectation: min_v,
        argmin: AnsatzPoint::from(&arg),
        worst_corner: worst,
        margin,
        rounds,
        box_bound: BOX_BOUND,
    };
    if margin < 0.0 && min_v >= -VERIFY_TOL {
        return Ok(WitnessOutcome::Certified(cert));
    }
    let binding = solution_rows
        .iter()
        .zip(&duals)
        .filter(|(_, y)| **y > 1e-12)
        .map(|(row, &weight)| match row {
            Row::Product(s) => Binding::Product {
                k: s.k,
                a0: s.a0,
                b0: s.b0,
                weight,
            },
            Row::Corner(c) => Binding::Corner {
                p: c.p,
                q: c.q,
                weight,
            },
            Row::Bound(name, value) => Binding::Bound {
                coefficient: (*name).to_string(),
                value: *value,
                weight,
            },
        })
        .collect();
    Ok(WitnessOutcome::NoWitness(NoWitness {
        p_min,
        q_max,
        best: cert,
        binding,
    }))
}
