//! Randomness per sample path: seeded substreams, Brownian increments, the
//! exact joint law of the stochastic convolution, and its Itô-sum
//! approximation on a shared Brownian path.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch};
use faer::linalg::evd::{self_adjoint_evd, self_adjoint_evd_scratch, ComputeEigenvectors};
use faer::{Mat, Par};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{KernelSpec, Spectrum};
use crate::quadrature::GaussLegendre;
use crate::resolvent::{ResolventInterpolant, ResolventTable, TimeGrid};
use crate::special_functions::{ml_eval, MlParams};

/// What a random stream is used for; part of the stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamPurpose {
    Brownian = 1,
    Exact = 2,
    Bootstrap = 3,
}

/// Identifies one random substream.
///
/// The generator is ChaCha12 keyed by `master_seed` (little-endian in the
/// first eight key bytes, the rest zero) with stream number
/// `path_index << 32 | purpose << 24 | mode_index`. Distinct triples and
/// purposes therefore map to distinct, non-overlapping streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PathSeed {
    pub master_seed: u64,
    pub path_index: u32,
    pub mode_index: u32,
}

pub const MAX_MODES: usize = 1 << 24;

impl PathSeed {
    pub fn new(master_seed: u64, path_index: usize, mode_index: usize) -> Result<Self> {
        if path_index > u32::MAX as usize || mode_index >= MAX_MODES {
            return Err(Error::InvalidParameter(format!(
                "path {path_index} / mode {mode_index} outside the seed space"
            )));
        }
        Ok(PathSeed {
            master_seed,
            path_index: path_index as u32,
            mode_index: mode_index as u32,
        })
    }

    pub fn stream_id(&self, purpose: StreamPurpose) -> u64 {
        ((self.path_index as u64) << 32) | ((purpose as u64) << 24) | self.mode_index as u64
    }

    pub fn rng(&self, purpose: StreamPurpose) -> ChaCha12Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(self.stream_id(purpose));
        rng
    }
}

fn normals(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Per-mode increments √μ_k ΔW over the steps of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPath {
    grid: TimeGrid,
    increments: Vec<Vec<f64>>,
}

impl BrownianPath {
    /// Increments ~ N(0, dt μ_k), mode k drawn from its own substream.
    pub fn generate(grid: &TimeGrid, mus: &[f64], master_seed: u64, path_index: usize) -> Result<Self> {
        let dt = grid.dt();
        let increments = mus
            .iter()
            .enumerate()
            .map(|(k, &mu)| {
                let scale = (dt * mu).sqrt();
                let mut rng = PathSeed::new(master_seed, path_index, k)?.rng(StreamPurpose::Brownian);
                let mut z = normals(&mut rng, grid.steps());
                z.iter_mut().for_each(|v| *v *= scale);
                Ok(z)
            })
            .collect::<Result<_>>()?;
        Ok(BrownianPath {
            grid: *grid,
            increments,
        })
    }

    pub fn from_increments(grid: &TimeGrid, increments: Vec<Vec<f64>>) -> Result<Self> {
        if increments.iter().any(|r| r.len() != grid.steps()) {
            return Err(Error::GridMismatch(format!(
                "increment rows must have {} entries",
                grid.steps()
            )));
        }
        Ok(BrownianPath {
            grid: *grid,
            increments,
        })
    }

    pub fn zeros(grid: &TimeGrid, modes: usize) -> Self {
        BrownianPath {
            grid: *grid,
            increments: vec![vec![0.0; grid.steps()]; modes],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn modes(&self) -> usize {
        self.increments.len()
    }

    pub fn increments(&self, k: usize) -> &[f64] {
        &self.increments[k]
    }

    /// Sums of the increments over each coarse step.
    pub fn aggregate(&self, coarse: &TimeGrid) -> Result<BrownianPath> {
        let r = self.grid.refinement_of(coarse)?;
        let increments = self
            .increments
            .iter()
            .map(|row| row.chunks_exact(r).map(|c| c.iter().sum()).collect())
            .collect();
        Ok(BrownianPath {
            grid: *coarse,
            increments,
        })
    }

    /// W_k(t_m) for m = 0..=M.
    pub fn cumulative(&self, k: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.steps() + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for &d in &self.increments[k] {
            acc += d;
            out.push(acc);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    ExactCholesky,
    ItoSum,
}

impl SamplerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplerMode::ExactCholesky => "exact_cholesky",
            SamplerMode::ItoSum => "ito_sum",
        }
    }
}

/// One realization of 𝒪_k at the grid times; `values[0] = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct StochConv {
    pub mode: usize,
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub method: SamplerMode,
}

impl StochConv {
    pub fn zeros(mode: usize, grid: &TimeGrid, method: SamplerMode) -> Self {
        StochConv {
            mode,
            grid: *grid,
            values: vec![0.0; grid.steps() + 1],
            method,
        }
    }

    /// Values at the times of a coarser grid (the same realization).
    pub fn restrict(&self, coarse: &TimeGrid) -> Result<StochConv> {
        let r = self.grid.refinement_of(coarse)?;
        Ok(StochConv {
            mode: self.mode,
            grid: *coarse,
            values: self.values.iter().step_by(r).copied().collect(),
            method: self.method,
        })
    }
}

pub const DEFAULT_QUAD_TOL: f64 = 1e-10;
/// Eigenvalues are lifted to this multiple of the largest diagonal entry.
pub const CLAMP_FLOOR: f64 = 1e-12;
/// Larger lifts mean the matrix is not a covariance up to quadrature error.
pub const CLAMP_ABORT: f64 = 1e-8;

const GL_NODES: usize = 10;
const GRADING_RATIO: f64 = 0.15;
const GRADING_LEVELS: usize = 16;
const MAX_SUBPANELS: usize = 1024;
const CHECK_PANELS: usize = 512;

/// Covariance of (𝒪_k(t_1), ..., 𝒪_k(t_M)) and its Cholesky factor.
///
/// The matrix is stored packed, lower triangle by rows; the factor is a
/// dense column-major matrix with zero upper triangle.
#[derive(Clone, Debug)]
pub struct ConvCovariance {
    lambda: f64,
    mu: f64,
    rho: f64,
    grid: TimeGrid,
    matrix: Vec<f64>,
    chol: Mat<f64>,
    clamp: f64,
    subpanels: usize,
}

#[inline]
fn packed_index(i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    r * (r + 1) / 2 + c
}

/// Covariance for mode `k` of `spectrum` (which must carry noise eigenvalues).
pub fn build_conv_covariance(
    spectrum: &Spectrum,
    k: usize,
    kernel: &KernelSpec,
    grid: &TimeGrid,
    quad_tol: f64,
) -> Result<ConvCovariance> {
    let mus = spectrum.require_mus()?;
    if k >= spectrum.len() {
        return Err(Error::InvalidParameter(format!("mode {} outside spectrum", k + 1)));
    }
    ConvCovariance::new(spectrum.lambdas()[k], mus[k], kernel, grid, quad_tol)
}

impl ConvCovariance {
    /// M_ij = μ ∫_0^{min(t_i,t_j)} s(t_i - σ) s(t_j - σ) dσ.
    ///
    /// With u = t_i - σ and i ≤ j this is μ Σ_{n ≤ i} J(n, j - i) where
    /// J(n, d) = ∫ over [t_{n-1}, t_n] of s(u) s(u + d·dt), so one set of
    /// panel integrals per lag d serves a whole diagonal.
    pub fn new(lambda: f64, mu: f64, kernel: &KernelSpec, grid: &TimeGrid, quad_tol: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite() && mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "covariance needs lambda >= 0 and mu >= 0, got {lambda}, {mu}"
            )));
        }
        if !(quad_tol > 0.0) {
            return Err(Error::InvalidParameter(format!("quad_tol = {quad_tol} must be positive")));
        }
        let m = grid.steps();
        let dt = grid.dt();
        let interp = ResolventInterpolant::new(kernel, lambda, grid.t_end())?;
        let gl = GaussLegendre::new(GL_NODES);

        let (subpanels, first, rest) = choose_panels(&interp, kernel, lambda, grid, &gl, quad_tol)?;

        // s at the panel nodes: `s_first[d]` on panel d + 1 in the graded
        // layout, `s_rest[n]` on panel n + 1 in the uniform layout.
        let s_first: Vec<Vec<f64>> = (0..m)
            .map(|d| first.iter().map(|&(x, _)| interp.eval((d as f64 + x) * dt)).collect())
            .collect();
        let s_rest: Vec<Vec<f64>> = (0..m)
            .map(|n| rest.iter().map(|&(x, _)| interp.eval((n as f64 + x) * dt)).collect())
            .collect();
        let w_first: Vec<f64> = first.iter().map(|&(_, w)| w * dt).collect();
        let w_rest: Vec<f64> = rest.iter().map(|&(_, w)| w * dt).collect();

        let mut matrix = vec![0.0; m * (m + 1) / 2];
        for d in 0..m {
            let mut sum = 0.0;
            let mut comp = 0.0;
            for i in 0..m - d {
                let j = if i == 0 {
                    dot3(&w_first, &s_first[0], &s_first[d])
                } else {
                    dot3(&w_rest, &s_rest[i], &s_rest[i + d])
                };
                // Neumaier summation
                let t = sum + j;
                if sum.abs() >= j.abs() {
                    comp += (sum - t) + j;
                } else {
                    comp += (j - t) + sum;
                }
                sum = t;
                matrix[packed_index(i + d, i)] = mu * (sum + comp);
            }
        }

        let mut cov = ConvCovariance {
            lambda,
            mu,
            rho: kernel.rho(),
            grid: *grid,
            matrix,
            chol: Mat::zeros(m, m),
            clamp: 0.0,
            subpanels,
        };
        if mu > 0.0 {
            cov.factorize()?;
        }
        Ok(cov)
    }

    /// Rebuild from stored parts; the factor is recomputed.
    pub fn from_matrix(lambda: f64, mu: f64, kernel: &KernelSpec, grid: &TimeGrid, matrix: Vec<f64>) -> Result<Self> {
        let m = grid.steps();
        if matrix.len() != m * (m + 1) / 2 {
            return Err(Error::GridMismatch(format!(
                "packed matrix of {} entries for {m} grid times",
                matrix.len()
            )));
        }
        let mut cov = ConvCovariance {
            lambda,
            mu,
            rho: kernel.rho(),
            grid: *grid,
            matrix,
            chol: Mat::zeros(m, m),
            clamp: 0.0,
            subpanels: 0,
        };
        if cov.matrix.iter().any(|&v| v != 0.0) {
            cov.factorize()?;
        }
        Ok(cov)
    }

    /// Rebuild from a stored matrix and factor (both packed by rows).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        lambda: f64,
        mu: f64,
        rho: f64,
        grid: &TimeGrid,
        matrix: Vec<f64>,
        chol_packed: &[f64],
        clamp: f64,
        subpanels: usize,
    ) -> Result<Self> {
        let m = grid.steps();
        let len = m * (m + 1) / 2;
        if matrix.len() != len || chol_packed.len() != len {
            return Err(Error::GridMismatch(format!("packed data does not match {m} grid times")));
        }
        let chol = Mat::<f64>::from_fn(m, m, |i, j| if i >= j { chol_packed[packed_index(i, j)] } else { 0.0 });
        Ok(ConvCovariance {
            lambda,
            mu,
            rho,
            grid: *grid,
            matrix,
            chol,
            clamp,
            subpanels,
        })
    }

    /// Lower triangle of the factor, packed by rows.
    pub fn packed_factor(&self) -> Vec<f64> {
        let m = self.dim();
        let mut out = Vec::with_capacity(m * (m + 1) / 2);
        for i in 0..m {
            for j in 0..=i {
                out.push(self.chol[(i, j)]);
            }
        }
        out
    }

    fn factorize(&mut self) -> Result<()> {
        let m = self.grid.steps();
        let max_diag = (0..m).map(|i| self.get(i + 1, i + 1)).fold(0.0f64, f64::max);
        let mut a = Mat::<f64>::from_fn(m, m, |i, j| if i >= j { self.matrix[packed_index(i, j)] } else { 0.0 });
        if llt_in_place(&mut a).is_ok() {
            self.chol = a;
            return Ok(());
        }
        // Lift eigenvalues below the floor, then factor again.
        let full = Mat::<f64>::from_fn(m, m, |i, j| self.matrix[packed_index(i, j)]);
        let mut s = faer::diag::Diag::<f64>::zeros(m);
        let mut u = Mat::<f64>::zeros(m, m);
        let par = Par::Seq;
        let req = self_adjoint_evd_scratch::<f64>(m, ComputeEigenvectors::Yes, par, Default::default());
        let mut buf = MemBuffer::new(req);
        self_adjoint_evd(
            full.as_ref(),
            s.as_mut(),
            Some(u.as_mut()),
            par,
            MemStack::new(&mut buf),
            Default::default(),
        )
        .map_err(|e| Error::Factorization(format!("eigendecomposition failed: {e:?}")))?;
        let floor = CLAMP_FLOOR * max_diag;
        let mut clamp = 0.0f64;
        let lifted: Vec<f64> = (0..m)
            .map(|i| {
                let e = s.column_vector()[i];
                if e < floor {
                    clamp = clamp.max(floor - e);
                    floor
                } else {
                    e
                }
            })
            .collect();
        if clamp > CLAMP_ABORT * max_diag {
            return Err(Error::Factorization(format!(
                "covariance needs an eigenvalue lift of {clamp:.3e} (> {CLAMP_ABORT:e} x max diagonal {max_diag:.3e})"
            )));
        }
        let mut a = Mat::<f64>::from_fn(m, m, |i, j| {
            if i < j {
                return 0.0;
            }
            (0..m).map(|q| u[(i, q)] * lifted[q] * u[(j, q)]).sum()
        });
        llt_in_place(&mut a).map_err(|p| {
            Error::Factorization(format!("non-positive pivot {p} after eigenvalue lift of {clamp:.3e}"))
        })?;
        self.chol = a;
        self.clamp = clamp;
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.steps()
    }

    /// M_ij for grid times t_i, t_j, i, j ∈ 1..=M.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[packed_index(i - 1, j - 1)]
    }

    /// L_ij, i, j ∈ 1..=M.
    pub fn chol(&self, i: usize, j: usize) -> f64 {
        self.chol[(i - 1, j - 1)]
    }

    /// Packed lower triangle, row by row.
    pub fn packed(&self) -> &[f64] {
        &self.matrix
    }

    /// Size of the eigenvalue lift applied before factorizing (0 if none).
    pub fn clamp(&self) -> f64 {
        self.clamp
    }

    /// Uniform sub-panels per grid step used by the quadrature.
    pub fn subpanels(&self) -> usize {
        self.subpanels
    }

    /// Variance of L ξ at t_i, i.e. Σ_j L_ij².
    pub fn factor_variance(&self, i: usize) -> f64 {
        (0..i).map(|j| self.chol[(i - 1, j)].powi(2)).sum()
    }

    /// max |L Lᵀ - M| (cubic cost; meant for tests and diagnostics).
    pub fn reconstruction_error(&self) -> f64 {
        let m = self.dim();
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..=i {
                let v: f64 = (0..=j).map(|q| self.chol[(i, q)] * self.chol[(j, q)]).sum();
                worst = worst.max((v - self.matrix[packed_index(i, j)]).abs());
            }
        }
        worst
    }

    /// L ξ, columns accumulated in ascending order.
    pub fn apply_factor(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let m = self.dim();
        if xi.len() != m {
            return Err(Error::GridMismatch(format!("{} normals for {m} grid times", xi.len())));
        }
        let mut out = vec![0.0; m];
        for (j, &x) in xi.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let col = &self.chol.col_as_slice(j)[j..];
            for (o, &l) in out[j..].iter_mut().zip(col) {
                *o += l * x;
            }
        }
        Ok(out)
    }
}

fn llt_in_place(a: &mut Mat<f64>) -> std::result::Result<(), usize> {
    let m = a.nrows();
    let par = Par::Seq;
    let mut buf = MemBuffer::new(cholesky_in_place_scratch::<f64>(m, par, Default::default()));
    match cholesky_in_place(a.as_mut(), Default::default(), par, MemStack::new(&mut buf), Default::default()) {
        Ok(_) => {
            for j in 1..m {
                for v in &mut a.col_as_slice_mut(j)[..j] {
                    *v = 0.0;
                }
            }
            Ok(())
        }
        Err(faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot { index }) => Err(index),
    }
}

#[inline]
fn dot3(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((&w, &a), &b) in w.iter().zip(a).zip(b) {
        acc += w * a * b;
    }
    acc
}

// Nodes and weights on [0, 1]: `p` equal sub-panels, optionally with the
// first one graded geometrically towards 0 for the t^ρ behaviour of s.
fn panel_rule(gl: &GaussLegendre, p: usize, graded: bool) -> Vec<(f64, f64)> {
    let h = 1.0 / p as f64;
    let mut out = Vec::new();
    let mut push = |a: f64, b: f64| out.extend(gl.mapped(a, b));
    if graded {
        let mut edge = h * GRADING_RATIO.powi(GRADING_LEVELS as i32);
        push(0.0, edge);
        for _ in 0..GRADING_LEVELS {
            let next = edge / GRADING_RATIO;
            push(edge, next.min(h));
            edge = next;
        }
    } else {
        push(0.0, h);
    }
    for q in 1..p {
        push(q as f64 * h, (q + 1) as f64 * h);
    }
    out
}

type Rule = Vec<(f64, f64)>;

// Doubles the sub-panel count until, on a sample of panels, ∫ s matches the
// closed-form weights and ∫ s² is unchanged by further refinement, both to
// `tol` relative to the largest weight.
fn choose_panels(
    interp: &ResolventInterpolant,
    kernel: &KernelSpec,
    lambda: f64,
    grid: &TimeGrid,
    gl: &GaussLegendre,
    tol: f64,
) -> Result<(usize, Rule, Rule)> {
    let m = grid.steps();
    let dt = grid.dt();
    let mut panels: Vec<usize> = (0..m.min(32)).collect();
    let stride = (m / CHECK_PANELS).max(1);
    panels.extend((32..m).step_by(stride));
    panels.push(m - 1);
    panels.sort_unstable();
    panels.dedup();

    let antiderivative = |t: f64| -> Result<f64> {
        if lambda == 0.0 {
            Ok(t)
        } else if kernel.is_memoryless() {
            Ok(-(-lambda * t).exp_m1() / lambda)
        } else {
            Ok(t * ml_eval(MlParams::new(kernel.rho(), 2.0)?, -lambda * t.powf(kernel.rho()))?)
        }
    };
    let mut exact = Vec::with_capacity(panels.len());
    for &n in &panels {
        exact.push(antiderivative(grid.t(n + 1))? - antiderivative(grid.t(n))?);
    }
    let scale = exact.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);

    let integrate = |rule: &Rule, n: usize, pow2: bool| -> f64 {
        rule.iter()
            .map(|&(x, w)| {
                let v = interp.eval((n as f64 + x) * dt);
                w * dt * if pow2 { v * v } else { v }
            })
            .sum()
    };

    let mut p = 1;
    loop {
        let first = panel_rule(gl, p, true);
        let rest = panel_rule(gl, p, false);
        let first2 = panel_rule(gl, 2 * p, true);
        let rest2 = panel_rule(gl, 2 * p, false);
        let mut worst = 0.0f64;
        for (&n, &w) in panels.iter().zip(&exact) {
            let (r, r2) = if n == 0 { (&first, &first2) } else { (&rest, &rest2) };
            worst = worst.max((integrate(r, n, false) - w).abs());
            worst = worst.max((integrate(r, n, true) - integrate(r2, n, true)).abs());
        }
        if worst <= tol * scale {
            return Ok((p, first, rest));
        }
        if p >= MAX_SUBPANELS {
            return Err(Error::QuadratureTolerance {
                achieved: worst / scale,
                tol,
            });
        }
        p *= 2;
    }
}

/// 𝒪 = L ξ with ξ from the seed's exact-sampler stream.
pub fn sample_exact(cov: &ConvCovariance, seed: PathSeed) -> Result<StochConv> {
    let mut rng = seed.rng(StreamPurpose::Exact);
    let xi = normals(&mut rng, cov.dim());
    sample_exact_with(cov, seed.mode_index as usize, &xi)
}

/// 𝒪 = L ξ for a given ξ.
pub fn sample_exact_with(cov: &ConvCovariance, mode: usize, xi: &[f64]) -> Result<StochConv> {
    let lx = cov.apply_factor(xi)?;
    let mut values = Vec::with_capacity(lx.len() + 1);
    values.push(0.0);
    values.extend(lx);
    Ok(StochConv {
        mode,
        grid: cov.grid,
        values,
        method: SamplerMode::ExactCholesky,
    })
}

/// 𝒪_k(t_m) ≈ Σ_{τ_l < t_m} s_k(t_m - τ_l) ΔW_l on the fine grid of `path`.
///
/// `table` must be built on that fine grid; values are returned at the
/// times of `coarse`.
pub fn sample_ito_sum(table: &ResolventTable, path: &BrownianPath, k: usize, coarse: &TimeGrid) -> Result<StochConv> {
    let fine = path.grid();
    if table.grid() != fine {
        return Err(Error::GridMismatch("resolvent table and Brownian path use different grids".into()));
    }
    let r = fine.refinement_of(coarse)?;
    let s = table.s(k);
    let dw = path.increments(k);
    let mut values = vec![0.0; coarse.steps() + 1];
    for (m, v) in values.iter_mut().enumerate().skip(1) {
        let top = m * r;
        let mut acc = 0.0;
        for l in 0..top {
            acc += s[top - l] * dw[l];
        }
        *v = acc;
    }
    Ok(StochConv {
        mode: k,
        grid: *coarse,
        values,
        method: SamplerMode::ItoSum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_ids_are_distinct() {
        let a = PathSeed::new(7, 1, 2).unwrap();
        let b = PathSeed::new(7, 2, 1).unwrap();
        assert_ne!(a.stream_id(StreamPurpose::Exact), b.stream_id(StreamPurpose::Exact));
        assert_ne!(a.stream_id(StreamPurpose::Exact), a.stream_id(StreamPurpose::Brownian));
        let x: f64 = a.rng(StreamPurpose::Exact).sample(StandardNormal);
        let y: f64 = a.rng(StreamPurpose::Exact).sample(StandardNormal);
        assert_eq!(x.to_bits(), y.to_bits());
        assert!(PathSeed::new(7, 0, MAX_MODES).is_err());
    }

    #[test]
    fn brownian_covariance_for_zero_lambda() {
        let g = TimeGrid::new(1.0, 8).unwrap();
        let cov = ConvCovariance::new(0.0, 2.0, &KernelSpec::new(1.5).unwrap(), &g, 1e-10).unwrap();
        for i in 1..=8 {
            for j in 1..=8 {
                let expect = 2.0 * g.t(i.min(j));
                assert!((cov.get(i, j) - expect).abs() < 1e-14, "{i} {j}");
            }
        }
        assert!(cov.reconstruction_error() < 1e-14);
    }

    #[test]
    fn ou_diagonal() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let cov = ConvCovariance::new(1.0, 1.0, &KernelSpec::new(1.0).unwrap(), &g, 1e-10).unwrap();
        let expect = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((cov.get(4, 4) - expect).abs() < 1e-13);
        assert!((cov.factor_variance(4) - expect).abs() < 1e-13);
    }

    #[test]
    fn zero_xi_gives_zero_path() {
        let g = TimeGrid::new(1.0, 8).unwrap();
        let cov = ConvCovariance::new(39.0, 1.0, &KernelSpec::new(1.2).unwrap(), &g, 1e-10).unwrap();
        let o = sample_exact_with(&cov, 0, &[0.0; 8]).unwrap();
        assert!(o.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn aggregate_sums_blocks() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let p = BrownianPath::from_increments(&g, vec![vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        let c = p.aggregate(&TimeGrid::new(1.0, 2).unwrap()).unwrap();
        assert_eq!(c.increments(0), &[3.0, 7.0]);
        assert_eq!(p.cumulative(0), vec![0.0, 1.0, 3.0, 6.0, 10.0]);
    }
}
