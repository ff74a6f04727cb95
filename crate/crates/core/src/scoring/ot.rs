//! Entropic optimal transport between segment distributions.

use serde::{Deserialize, Serialize};

use super::kernel::similarity_submatrix;
use super::weights::{seg_weights, Atom, WeightScheme};
use super::PairDoc;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinkhornParams {
    pub eps: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        SinkhornParams {
            eps: 0.05,
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

impl SinkhornParams {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            v.push(format!("sinkhorn eps must be > 0, got {}", self.eps));
        }
        if self.max_iter == 0 {
            v.push("sinkhorn max_iter must be >= 1".into());
        }
        if !(self.tol > 0.0) {
            v.push(format!("sinkhorn tol must be > 0, got {}", self.tol));
        }
        v
    }
}

/// Row-major `rows x cols` transport plan.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    pub mass: Vec<f64>,
}

impl TransportPlan {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.cols + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.mass.chunks_exact(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in self.mass.chunks_exact(self.cols) {
            for (o, x) in out.iter_mut().zip(r) {
                *o += x;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornOutcome {
    /// `<plan, cost>`.
    pub cost: f64,
    pub plan: TransportPlan,
    pub iterations: usize,
    pub converged: bool,
    /// L1 violation of the row marginal at exit.
    pub marginal_error: f64,
}

fn check_distribution(name: &str, w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::Empty(format!("weight vector {name}")));
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("weight vector {name}")));
    }
    let total: f64 = w.iter().sum();
    if w.iter().any(|&x| x < 0.0) || (total - 1.0).abs() > 1e-6 {
        return Err(Error::Parameter(format!("{name} is not a probability vector (sum {total})")));
    }
    Ok(())
}

#[inline]
fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let peak = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return peak;
    }
    peak + values.map(|x| (x - peak).exp()).sum::<f64>().ln()
}

/// Log-domain Sinkhorn iterations for the entropic transport problem between
/// `a` (rows) and `b` (columns) under the row-major `cost` matrix.
///
/// Each iteration fits the column marginal exactly and then measures the L1
/// row-marginal violation; iteration stops once it drops below `tol`.
pub fn sinkhorn(cost: &[f64], a: &[f64], b: &[f64], params: &SinkhornParams) -> Result<SinkhornOutcome> {
    let (n, m) = (a.len(), b.len());
    check_distribution("a", a)?;
    check_distribution("b", b)?;
    if cost.len() != n * m {
        return Err(Error::DimensionMismatch {
            left: n * m,
            right: cost.len(),
        });
    }
    if let Some(bad) = cost.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFinite(format!("cost entry ({}, {})", bad / m, bad % m)));
    }
    if let Some(v) = params.violations().into_iter().next() {
        return Err(Error::Parameter(v));
    }

    // restrict to the support; zero-mass atoms carry no plan entries
    let rows: Vec<usize> = (0..n).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..m).filter(|&j| b[j] > 0.0).collect();
    let (sn, sm) = (rows.len(), cols.len());
    let log_a: Vec<f64> = rows.iter().map(|&i| a[i].ln()).collect();
    let log_b: Vec<f64> = cols.iter().map(|&j| b[j].ln()).collect();
    // kernel in log space, row-major and column-major copies
    let mut k = Vec::with_capacity(sn * sm);
    for &i in &rows {
        for &j in &cols {
            k.push(-cost[i * m + j] / params.eps);
        }
    }
    let mut kt = vec![0.0; sn * sm];
    for i in 0..sn {
        for j in 0..sm {
            kt[j * sn + i] = k[i * sm + j];
        }
    }

    let mut u: Vec<f64> = (0..sn)
        .map(|i| log_a[i] - log_sum_exp(k[i * sm..(i + 1) * sm].iter().copied()))
        .collect();
    let mut v = vec![0.0; sm];
    let mut lse_rows = vec![0.0; sn];
    let mut iterations = 0;
    let mut converged = false;
    let mut marginal_error = f64::INFINITY;

    while iterations < params.max_iter {
        iterations += 1;
        for j in 0..sm {
            let col = &kt[j * sn..(j + 1) * sn];
            v[j] = log_b[j] - log_sum_exp(col.iter().zip(&u).map(|(kij, ui)| kij + ui));
        }
        marginal_error = 0.0;
        for i in 0..sn {
            let row = &k[i * sm..(i + 1) * sm];
            lse_rows[i] = log_sum_exp(row.iter().zip(&v).map(|(kij, vj)| kij + vj));
            marginal_error += ((u[i] + lse_rows[i]).exp() - a[rows[i]]).abs();
        }
        if marginal_error < params.tol {
            converged = true;
            break;
        }
        if iterations == params.max_iter {
            break;
        }
        for i in 0..sn {
            u[i] = log_a[i] - lse_rows[i];
        }
    }

    let mut mass = vec![0.0; n * m];
    let mut total_cost = 0.0;
    for (si, &i) in rows.iter().enumerate() {
        for (sj, &j) in cols.iter().enumerate() {
            let p = (u[si] + v[sj] + k[si * sm + sj]).exp();
            mass[i * m + j] = p;
            total_cost += p * cost[i * m + j];
        }
    }
    Ok(SinkhornOutcome {
        cost: total_cost,
        plan: TransportPlan { rows: n, cols: m, mass },
        iterations,
        converged,
        marginal_error,
    })
}

/// Transport cost and convergence flag.
pub fn sinkhorn_cost(cost: &[f64], a: &[f64], b: &[f64], params: &SinkhornParams) -> Result<(f64, bool)> {
    let out = sinkhorn(cost, a, b, params)?;
    Ok((out.cost, out.converged))
}

/// `1 - cosine` between every source atom and target atom, row-major,
/// clamped to [0, 2] against rounding in the dot product.
pub(crate) fn atom_costs(src: &PairDoc<'_>, sa: &[Atom], tgt: &PairDoc<'_>, ta: &[Atom]) -> Vec<f64> {
    let si: Vec<usize> = sa.iter().map(|a| a.row).collect();
    let ti: Vec<usize> = ta.iter().map(|a| a.row).collect();
    let mut out = similarity_submatrix(src.rows, &si, tgt.rows, &ti);
    for c in &mut out {
        *c = (1.0 - *c).clamp(0.0, 2.0);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtScore {
    pub score: f64,
    pub converged: bool,
}

/// `1 - sinkhorn_cost` with cost `1 - cosine` between segment atoms.
pub fn ot_score(src: &PairDoc<'_>, tgt: &PairDoc<'_>, scheme: WeightScheme, params: &SinkhornParams) -> Result<OtScore> {
    src.check(tgt)?;
    let sa = seg_weights(src.segments, scheme);
    let ta = seg_weights(tgt.segments, scheme);
    let cost = atom_costs(src, &sa, tgt, &ta);
    let a: Vec<f64> = sa.iter().map(|x| x.weight).collect();
    let b: Vec<f64> = ta.iter().map(|x| x.weight).collect();
    let (c, converged) = sinkhorn_cost(&cost, &a, &b, params)?;
    Ok(OtScore {
        score: 1.0 - c,
        converged,
    })
}
