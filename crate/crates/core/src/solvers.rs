//! Time stepping: the Mittag-Leffler Euler integrator (MLEI) and the
//! backward-Euler convolution-quadrature baseline (BE-CQ).

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::noise::{BrownianPath, SamplerMode, StochConv};
use crate::resolvent::{build_resolvent_table, ResolventTable, TimeGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mlei,
    Becq,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Mlei => "mlei",
            Method::Becq => "becq",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub master_seed: Option<u64>,
    pub path_index: Option<usize>,
    pub instance_hash: Option<String>,
}

/// Mode coefficients U[m][k] at the grid times.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub method: Method,
    pub u: Vec<Vec<f64>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    fn from_columns(grid: TimeGrid, method: Method, cols: Vec<Vec<f64>>) -> Self {
        let steps = grid.steps();
        let u = (0..=steps).map(|m| cols.iter().map(|c| c[m]).collect()).collect();
        Trajectory {
            grid,
            method,
            u,
            meta: TrajectoryMeta::default(),
        }
    }

    pub fn modes(&self) -> usize {
        self.u[0].len()
    }

    pub fn final_state(&self) -> &[f64] {
        &self.u[self.grid.steps()]
    }

    /// Values at the times of a coarser grid.
    pub fn restrict(&self, coarse: &TimeGrid) -> Result<Trajectory> {
        let r = self.grid.refinement_of(coarse)?;
        Ok(Trajectory {
            grid: *coarse,
            method: self.method,
            u: self.u.iter().step_by(r).cloned().collect(),
            meta: self.meta.clone(),
        })
    }

    /// CSV with header `m,t,k,U`, modes numbered from 1.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "m,t,k,U")?;
        for (m, row) in self.u.iter().enumerate() {
            let t = self.grid.t(m);
            for (k, v) in row.iter().enumerate() {
                writeln!(out, "{m},{t:.16e},{},{v:.16e}", k + 1)?;
            }
        }
        Ok(())
    }
}

// Neumaier's compensated sum, fed in a fixed order.
#[derive(Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn eval_f(instance: &ProblemInstance, u: f64, step: usize, mode: usize) -> Result<f64> {
    let v = instance.nonlinearity.eval(u);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteState { step, mode: mode + 1 })
    }
}

/// U_{m,k} = s_k(t_m) u0_k + Σ_{j<m} w_k[m-j] f(U_{j,k}) + 𝒪_k(t_m).
///
/// The history sum runs over ascending j with compensation; modes are
/// stepped in parallel, each one sequentially.
pub fn mlei_step_all(instance: &ProblemInstance, table: &ResolventTable, conv: &[StochConv]) -> Result<Trajectory> {
    let grid = *table.grid();
    let n = instance.modes();
    if table.modes() != n || conv.len() != n {
        return Err(Error::GridMismatch(format!(
            "{n} modes, table has {}, {} convolutions",
            table.modes(),
            conv.len()
        )));
    }
    if table.lambdas() != instance.spectrum.lambdas() {
        return Err(Error::GridMismatch("table built for a different spectrum".into()));
    }
    if let Some(c) = conv.iter().find(|c| c.grid != grid) {
        return Err(Error::GridMismatch(format!(
            "convolution for mode {} lives on a different grid",
            c.mode + 1
        )));
    }
    let steps = grid.steps();
    let linear = instance.nonlinearity.is_zero();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let s = table.s(k);
            let w = table.w(k);
            let o = &conv[k].values;
            let u0 = instance.u0[k];
            let mut u = Vec::with_capacity(steps + 1);
            let mut f = Vec::with_capacity(steps);
            u.push(u0);
            for m in 1..=steps {
                f.push(eval_f(instance, u[m - 1], m - 1, k)?);
                let mut v = s[m] * u0;
                if !linear {
                    let mut acc = CompensatedSum::default();
                    for (j, fj) in f.iter().enumerate() {
                        acc.add(w[m - j] * fj);
                    }
                    v += acc.value();
                }
                v += o[m];
                if !v.is_finite() {
                    return Err(Error::NonFiniteState { step: m, mode: k + 1 });
                }
                u.push(v);
            }
            Ok(u)
        })
        .collect::<Result<_>>()?;
    Ok(Trajectory::from_columns(grid, Method::Mlei, cols))
}

/// Coefficients of (1 - ζ)^{-α} scaled by dt^α: the weights of the
/// first-order convolution quadrature for the Riesz kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct CQWeights {
    pub alpha: f64,
    pub dt: f64,
    pub c: Vec<f64>,
    pub scale: f64,
}

impl CQWeights {
    /// ω_i = dt^α c_i
    #[inline]
    pub fn omega(&self, i: usize) -> f64 {
        self.scale * self.c[i]
    }
}

/// c_0 = 1, c_j = c_{j-1} (j - 1 + α) / j for j = 1..=M.
///
/// α = 0 (memoryless, c = (1, 0, 0, ...)) and α = 1 (c ≡ 1) are accepted as
/// limiting cases.
pub fn cq_weights(alpha: f64, dt: f64, steps: usize) -> Result<CQWeights> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} outside [0, 1]")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    let mut c = Vec::with_capacity(steps + 1);
    c.push(1.0);
    for j in 1..=steps {
        let prev = c[j - 1];
        c.push(prev * (j as f64 - 1.0 + alpha) / j as f64);
    }
    Ok(CQWeights {
        alpha,
        dt,
        c,
        scale: dt.powf(alpha),
    })
}

/// Semi-implicit BE-CQ step for each mode:
/// U_m = (U_{m-1} + dt f(U_{m-1}) + ΔW_m - λ dt Σ_{j=1}^{m-1} ω_{m-j} U_j) / (1 + λ dt ω_0).
pub fn becq_step_all(instance: &ProblemInstance, path: &BrownianPath, cq: &CQWeights) -> Result<Trajectory> {
    let grid = *path.grid();
    let n = instance.modes();
    let steps = grid.steps();
    if path.modes() != n {
        return Err(Error::GridMismatch(format!("{n} modes but {} Brownian rows", path.modes())));
    }
    if cq.c.len() < steps + 1 || cq.dt != grid.dt() {
        return Err(Error::GridMismatch("CQ weights do not match the grid".into()));
    }
    let dt = grid.dt();
    let omega: Vec<f64> = (0..=steps).map(|i| cq.omega(i)).collect();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let lambda = instance.spectrum.lambdas()[k];
            let dw = path.increments(k);
            let denom = 1.0 + lambda * dt * omega[0];
            let mut u = Vec::with_capacity(steps + 1);
            u.push(instance.u0[k]);
            for m in 1..=steps {
                let prev = u[m - 1];
                let mut hist = CompensatedSum::default();
                for j in 1..m {
                    hist.add(omega[m - j] * u[j]);
                }
                let rhs = prev + dt * eval_f(instance, prev, m - 1, k)? + dw[m - 1] - lambda * dt * hist.value();
                let v = rhs / denom;
                if !v.is_finite() {
                    return Err(Error::NonFiniteState { step: m, mode: k + 1 });
                }
                u.push(v);
            }
            Ok(u)
        })
        .collect::<Result<_>>()?;
    Ok(Trajectory::from_columns(grid, Method::Becq, cols))
}

/// Either method with the noise switched off.
pub fn deterministic_run(instance: &ProblemInstance, method: Method, grid: &TimeGrid) -> Result<Trajectory> {
    if !instance.is_deterministic() {
        return Err(Error::InvalidParameter(
            "deterministic run needs all noise eigenvalues to vanish".into(),
        ));
    }
    if grid.t_end() != instance.t_end {
        return Err(Error::GridMismatch(format!(
            "grid horizon {} differs from T = {}",
            grid.t_end(),
            instance.t_end
        )));
    }
    let n = instance.modes();
    match method {
        Method::Mlei => {
            let table = build_resolvent_table(&instance.spectrum, &instance.kernel, grid)?;
            let conv: Vec<StochConv> = (0..n)
                .map(|k| StochConv::zeros(k, grid, SamplerMode::ExactCholesky))
                .collect();
            mlei_step_all(instance, &table, &conv)
        }
        Method::Becq => {
            let cq = cq_weights(instance.kernel.alpha(), grid.dt(), grid.steps())?;
            becq_step_all(instance, &BrownianPath::zeros(grid, n), &cq)
        }
    }
}
