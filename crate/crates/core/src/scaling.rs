//! Finite-size scaling: rescaled parity curves, their crossing point, the
//! quality of the data collapse and the growth of the entropy maximum.

use std::collections::BTreeMap;

use faer::linalg::solvers::DenseSolveCore;
use faer::prelude::Solve;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Critical exponents `(β, ν)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub beta: f64,
    pub nu: f64,
}

impl Exponents {
    /// Classical 3D Ising exponents, used for 2D lattices.
    pub const ISING_3D: Exponents = Exponents {
        beta: 0.32642,
        nu: 0.62997,
    };
    /// Classical 2D Ising exponents, used for 1D arrays.
    pub const ISING_2D: Exponents = Exponents { beta: 0.125, nu: 1.0 };

    pub fn for_dimensionality(d: usize) -> Result<Self> {
        match d {
            1 => Ok(Self::ISING_2D),
            2 => Ok(Self::ISING_3D),
            _ => Err(Error::InvalidInput(format!(
                "no exponent preset for dimensionality {d}"
            ))),
        }
    }
}

/// Linear size `L`: `N` for chains and `√N` for 2D lattices.
pub fn linear_size(n_sites: usize, dimensionality: usize) -> f64 {
    if dimensionality == 2 {
        (n_sites as f64).sqrt()
    } else {
        n_sites as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub size: String,
    pub n_sites: usize,
    pub g: f64,
    pub parity: f64,
    pub entropy: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct ScalingDataset {
    pub records: Vec<ScalingRecord>,
    pub exponents: Exponents,
    pub dimensionality: usize,
    /// Include records flagged as unconverged (off by default).
    pub include_unconverged: bool,
}

/// One size's sweep, sorted by `G`.
#[derive(Clone, Debug)]
pub struct Curve {
    pub size: String,
    pub n_sites: usize,
    pub l: f64,
    pub g: Vec<f64>,
    pub parity: Vec<f64>,
    pub entropy: Vec<f64>,
}

impl ScalingDataset {
    /// Dataset with the exponent preset for `dimensionality`.
    pub fn new(records: Vec<ScalingRecord>, dimensionality: usize) -> Result<Self> {
        Ok(Self {
            records,
            exponents: Exponents::for_dimensionality(dimensionality)?,
            dimensionality,
            include_unconverged: false,
        })
    }

    pub fn with_exponents(mut self, exponents: Exponents) -> Self {
        self.exponents = exponents;
        self
    }

    /// Usable records grouped by size, ordered by linear size. Duplicate `G`
    /// values within a size keep the last record.
    pub fn curves(&self) -> Vec<Curve> {
        let mut groups: BTreeMap<(usize, String), BTreeMap<u64, &ScalingRecord>> = BTreeMap::new();
        for r in &self.records {
            if !(r.converged || self.include_unconverged) || !r.g.is_finite() {
                continue;
            }
            groups
                .entry((r.n_sites, r.size.clone()))
                .or_default()
                .insert(ordered_bits(r.g), r);
        }
        groups
            .into_iter()
            .map(|((n_sites, size), pts)| {
                let pts: Vec<&ScalingRecord> = pts.into_values().collect();
                Curve {
                    size,
                    n_sites,
                    l: linear_size(n_sites, self.dimensionality),
                    g: pts.iter().map(|r| r.g).collect(),
                    parity: pts.iter().map(|r| r.parity).collect(),
                    entropy: pts.iter().map(|r| r.entropy).collect(),
                }
            })
            .collect()
    }
}

/// Order-preserving key for finite floats.
fn ordered_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaledPoint {
    pub size: String,
    pub l: f64,
    pub g: f64,
    /// `(G − G_c) L^{1/ν}`.
    pub x: f64,
    /// `Π L^{β/ν}`.
    pub y: f64,
}

/// `x = (G − G_c) L^{1/ν}`, `y = Π L^{β/ν}` for every usable record.
pub fn rescale(ds: &ScalingDataset, g_c: f64) -> Vec<RescaledPoint> {
    let e = ds.exponents;
    ds.curves()
        .into_iter()
        .flat_map(|c| {
            let (sx, sy) = (c.l.powf(1.0 / e.nu), c.l.powf(e.beta / e.nu));
            let size = c.size.clone();
            let l = c.l;
            c.g.into_iter().zip(c.parity).map(move |(g, p)| RescaledPoint {
                size: size.clone(),
                l,
                g,
                x: (g - g_c) * sx,
                y: p * sy,
            })
        })
        .collect()
}

/// Inverse of [`rescale`] for one point: `(G, Π)`.
pub fn unscale(x: f64, y: f64, l: f64, g_c: f64, e: Exponents) -> (f64, f64) {
    (g_c + x / l.powf(1.0 / e.nu), y / l.powf(e.beta / e.nu))
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Clone, Debug)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n != y.len() || n < 2 {
            return Err(Error::InsufficientData(
                "interpolation needs at least two points".into(),
            ));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("interpolation nodes must increase strictly".into()));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d = vec![delta[0]; 2];
        } else {
            for k in 1..n - 1 {
                if delta[k - 1] * delta[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
                }
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            d,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    /// Value at `t`, clamped to the domain.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let t = t.clamp(self.x[0], self.x[n - 1]);
        let k = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p => (p - 1).min(n - 2),
        };
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (h00, h10) = (2.0 * s.powi(3) - 3.0 * s * s + 1.0, s.powi(3) - 2.0 * s * s + s);
        let (h01, h11) = (-2.0 * s.powi(3) + 3.0 * s * s, s.powi(3) - s * s);
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }
}

/// Non-centered three-point end slope, limited to preserve monotonicity.
fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// Root of `f` in `[a, b]` (with `f(a)·f(b) ≤ 0`) by bisection to `tol`.
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    if fa == 0.0 {
        return a;
    }
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa.signum() == fm.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCrossing {
    pub size_a: String,
    pub size_b: String,
    pub g: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseResult {
    pub g_c: f64,
    /// Interquartile range of the pairwise crossings.
    pub uncertainty: f64,
    pub crossings: Vec<PairCrossing>,
    /// Size pairs whose curves do not cross in the common range.
    pub skipped: Vec<(String, String)>,
    /// Collapse residual at `g_c` (0 when fewer than 8 points are available).
    pub residual: f64,
    pub exponents: Exponents,
    /// Rescaled points at `g_c`.
    pub master: Vec<RescaledPoint>,
}

/// Crossing of the rescaled parity curves: each size pair is interpolated
/// with [`Pchip`] and its crossing bracketed on the common `G` range; `G_c`
/// is the median of the pairwise crossings.
pub fn find_crossing(ds: &ScalingDataset) -> Result<CollapseResult> {
    let curves = ds.curves();
    let e = ds.exponents;
    let usable: Vec<(Curve, Pchip)> = curves
        .into_iter()
        .filter(|c| c.g.len() >= 4)
        .map(|c| {
            let s = c.l.powf(e.beta / e.nu);
            let y: Vec<f64> = c.parity.iter().map(|p| p * s).collect();
            let p = Pchip::new(&c.g, &y)?;
            Ok((c, p))
        })
        .collect::<Result<_>>()?;
    if usable.len() < 2 {
        return Err(Error::InsufficientData(
            "crossing analysis needs at least two sizes with four or more points each".into(),
        ));
    }
    let mut crossings = Vec::new();
    let mut skipped = Vec::new();
    for i in 0..usable.len() {
        for j in i + 1..usable.len() {
            let (ca, pa) = &usable[i];
            let (cb, pb) = &usable[j];
            match pair_crossing(pa, pb, &ca.g, &cb.g) {
                Some(g) => crossings.push(PairCrossing {
                    size_a: ca.size.clone(),
                    size_b: cb.size.clone(),
                    g,
                }),
                None => {
                    log::warn!("sizes {} and {} do not cross in the sampled range", ca.size, cb.size);
                    skipped.push((ca.size.clone(), cb.size.clone()));
                }
            }
        }
    }
    if crossings.is_empty() {
        return Err(Error::NoCrossing("no pair of rescaled curves crosses".into()));
    }
    let mut gs: Vec<f64> = crossings.iter().map(|c| c.g).collect();
    gs.sort_by(f64::total_cmp);
    let g_c = quantile(&gs, 0.5);
    let uncertainty = quantile(&gs, 0.75) - quantile(&gs, 0.25);
    let residual = match collapse_quality(ds, g_c) {
        Ok(r) => r,
        Err(Error::InsufficientData(_)) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(CollapseResult {
        g_c,
        uncertainty,
        crossings,
        skipped,
        residual,
        exponents: e,
        master: rescale(ds, g_c),
    })
}

/// The most transversal sign change of `a − b` on the common range.
fn pair_crossing(a: &Pchip, b: &Pchip, ga: &[f64], gb: &[f64]) -> Option<f64> {
    let lo = a.domain().0.max(b.domain().0);
    let hi = a.domain().1.min(b.domain().1);
    if !(hi > lo) {
        return None;
    }
    // nodes of both grids, refined, so that every crossing is bracketed
    let mut nodes: Vec<f64> = ga.iter().chain(gb).copied().filter(|g| *g >= lo && *g <= hi).collect();
    nodes.push(lo);
    nodes.push(hi);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let mut grid = Vec::with_capacity(nodes.len() * 16);
    for w in nodes.windows(2) {
        for k in 0..16 {
            grid.push(w[0] + (w[1] - w[0]) * k as f64 / 16.0);
        }
    }
    grid.push(hi);
    let diff = |g: f64| a.eval(g) - b.eval(g);
    let scale = grid
        .iter()
        .map(|&g| a.eval(g).abs().max(b.eval(g).abs()))
        .fold(0.0, f64::max);
    let tol = 1e-13 * (hi - lo).abs().max(1.0);
    let mut best: Option<(f64, f64)> = None;
    for w in grid.windows(2) {
        let (f0, f1) = (diff(w[0]), diff(w[1]));
        if f0 == 0.0 && f1 == 0.0 {
            continue;
        }
        if f0.signum() != f1.signum() || f1 == 0.0 {
            if f1 == 0.0 && f0 == 0.0 {
                continue;
            }
            let root = bisect(diff, w[0], w[1], tol);
            let slope = (f1 - f0).abs() / (w[1] - w[0]);
            if best.is_none_or(|(_, s)| slope > s) {
                best = Some((root, slope));
            }
        }
    }
    // identical curves have zero slope difference everywhere
    best.filter(|(_, s)| *s > 1e-12 * scale.max(1e-300)).map(|(r, _)| r)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Pools the rescaled points of every size, fits one penalized cubic
/// B-spline (smoothing chosen by generalized cross-validation), and returns
/// the mean squared deviation divided by the variance of `y`. A single size
/// collapses trivially and returns 0.
pub fn collapse_quality(ds: &ScalingDataset, g_c: f64) -> Result<f64> {
    let pts = rescale(ds, g_c);
    let n_sizes = {
        let mut s: Vec<&str> = pts.iter().map(|p| p.size.as_str()).collect();
        s.sort_unstable();
        s.dedup();
        s.len()
    };
    if pts.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "collapse quality needs at least 8 points, have {}",
            pts.len()
        )));
    }
    if n_sizes < 2 {
        log::info!("single-size dataset: collapse is trivial");
        return Ok(0.0);
    }
    let x: Vec<f64> = pts.iter().map(|p| p.x).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.y).collect();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Ok(0.0);
    }
    let fit = PSpline::fit(&x, &y)?;
    let mse = x
        .iter()
        .zip(&y)
        .map(|(&xi, &yi)| (fit.eval(xi) - yi).powi(2))
        .sum::<f64>()
        / n;
    Ok(mse / var)
}

/// Cubic B-spline regression with a second-difference penalty.
#[derive(Clone, Debug)]
pub struct PSpline {
    knots: Vec<f64>,
    coef: Vec<f64>,
}

impl PSpline {
    /// Fit with the number of basis functions scaled to the data and the
    /// penalty weight minimizing the GCV score over a logarithmic grid.
    pub fn fit(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        let (lo, hi) = x
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if !(hi > lo) {
            return Err(Error::InsufficientData("spline fit needs distinct abscissae".into()));
        }
        let segments = (n / 4).clamp(4, 40);
        let h = (hi - lo) / segments as f64;
        let knots: Vec<f64> = (-3..=(segments as i64 + 3)).map(|k| lo + k as f64 * h).collect();
        let nb = segments + 3;
        let b = Mat::from_fn(n, nb, |i, j| bspline3(&knots, j, x[i]));
        let btb = b.transpose() * &b;
        let bty = b.transpose() * Mat::from_fn(n, 1, |i, _| y[i]);
        // second-difference penalty DᵀD
        let d = Mat::from_fn(nb - 2, nb, |i, j| match j.wrapping_sub(i) {
            0 | 2 => 1.0,
            1 => -2.0,
            _ => 0.0,
        });
        let dtd = d.transpose() * &d;
        let norm_b = (0..nb).map(|i| btb[(i, i)]).fold(0.0, f64::max);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for k in -12..=4 {
            let lambda = norm_b * 10f64.powi(k);
            let a = &btb + &dtd * faer::Scale(lambda);
            let lu = a.partial_piv_lu();
            let c = lu.solve(&bty);
            let inv = lu.inverse();
            let edf: f64 = {
                let m = &inv * &btb;
                (0..nb).map(|i| m[(i, i)]).sum()
            };
            let coef: Vec<f64> = (0..nb).map(|i| c[(i, 0)]).collect();
            let rss: f64 = (0..n)
                .map(|i| {
                    let f: f64 = (0..nb).map(|j| b[(i, j)] * coef[j]).sum();
                    (f - y[i]).powi(2)
                })
                .sum();
            let denom = (n as f64 - edf).max(1e-12);
            let gcv = n as f64 * rss / (denom * denom);
            if gcv.is_finite() && best.as_ref().is_none_or(|(g, _)| gcv < *g) {
                best = Some((gcv, coef));
            }
        }
        let (_, coef) = best.ok_or_else(|| Error::Linalg("spline fit failed".into()))?;
        Ok(Self { knots, coef })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coef
            .iter()
            .enumerate()
            .map(|(j, c)| c * bspline3(&self.knots, j, x))
            .sum()
    }
}

/// Cubic B-spline `j` on uniform `knots`, evaluated by the Cox–de Boor recursion.
fn bspline3(knots: &[f64], j: usize, x: f64) -> f64 {
    fn rec(t: &[f64], j: usize, k: usize, x: f64) -> f64 {
        if k == 0 {
            return if t[j] <= x && x < t[j + 1] { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = t[j + k] - t[j];
        if d1 > 0.0 {
            v += (x - t[j]) / d1 * rec(t, j, k - 1, x);
        }
        let d2 = t[j + k + 1] - t[j + 1];
        if d2 > 0.0 {
            v += (t[j + k + 1] - x) / d2 * rec(t, j + 1, k - 1, x);
        }
        v
    }
    // the fit range ends inside the last interior knot span; nudge the right endpoint inside
    let hi = knots[knots.len() - 4];
    let x = if x >= hi {
        hi - 1e-12 * (hi - knots[3]).abs().max(1.0)
    } else {
        x
    };
    rec(knots, j, 3, x)
}

/// `Σ_i collapse residual` is scanned over exponent grids; returns the best
/// `(β, ν, residual)`. Off by default in the analysis pipeline.
pub fn scan_exponents(ds: &ScalingDataset, g_c: f64, betas: &[f64], nus: &[f64]) -> Result<(Exponents, f64)> {
    let mut best: Option<(Exponents, f64)> = None;
    for &beta in betas {
        for &nu in nus {
            let e = Exponents { beta, nu };
            let trial = ds.clone().with_exponents(e);
            let r = collapse_quality(&trial, g_c)?;
            if best.is_none_or(|(_, b)| r < b) {
                best = Some((e, r));
            }
        }
    }
    best.ok_or_else(|| Error::InsufficientData("empty exponent grid".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyPeak {
    pub size: String,
    pub n_sites: usize,
    pub g_peak: f64,
    pub s_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    /// Exponent of `max S ∼ N^κ`.
    pub kappa: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    /// Fewer than three sizes: the fit is exact and says nothing.
    pub underdetermined: bool,
    pub peaks: Vec<EntropyPeak>,
    /// Sizes whose maximum lies on the edge of the sweep.
    pub unresolved: Vec<String>,
}

/// Locates each size's entropy maximum by three-point quadratic
/// interpolation and fits `log max S = log c + κ log N` by least squares.
pub fn fit_entropy_peak(ds: &ScalingDataset) -> Result<PeakFit> {
    let mut peaks = Vec::new();
    let mut unresolved = Vec::new();
    for c in ds.curves() {
        match quadratic_peak(&c.g, &c.entropy) {
            Some((g_peak, s_max)) => peaks.push(EntropyPeak {
                size: c.size.clone(),
                n_sites: c.n_sites,
                g_peak,
                s_max,
            }),
            None => {
                log::warn!("entropy maximum of size {} is not resolved by the sweep", c.size);
                unresolved.push(c.size.clone());
            }
        }
    }
    if peaks.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "entropy-peak fit needs at least two resolved sizes, have {}",
            peaks.len()
        )));
    }
    if peaks.iter().any(|p| p.s_max <= 0.0) {
        return Err(Error::InvalidInput(
            "entropy maxima must be positive for a log fit".into(),
        ));
    }
    let lx: Vec<f64> = peaks.iter().map(|p| (p.n_sites as f64).ln()).collect();
    let ly: Vec<f64> = peaks.iter().map(|p| p.s_max.ln()).collect();
    let (slope, intercept, r_squared) = linear_fit(&lx, &ly)?;
    let underdetermined = peaks.len() < 3;
    if underdetermined {
        log::warn!("entropy-peak fit through two sizes is exact and under-determined");
    }
    Ok(PeakFit {
        kappa: slope,
        prefactor: intercept.exp(),
        r_squared,
        underdetermined,
        peaks,
        unresolved,
    })
}

/// Vertex of the parabola through the largest sample and its neighbours;
/// `None` when the largest sample is at an end of the sweep.
pub fn quadratic_peak(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() < 3 {
        return None;
    }
    let k = (0..y.len()).max_by(|&a, &b| y[a].total_cmp(&y[b]))?;
    if k == 0 || k + 1 == y.len() {
        return None;
    }
    let (x0, x1, x2) = (x[k - 1], x[k], x[k + 1]);
    let (y0, y1, y2) = (y[k - 1], y[k], y[k + 1]);
    // Newton form: p(t) = y0 + d1 (t - x0) + d2 (t - x0)(t - x1)
    let d1 = (y1 - y0) / (x1 - x0);
    let d2 = ((y2 - y1) / (x2 - x1) - d1) / (x2 - x0);
    if d2 >= 0.0 {
        return Some((x1, y1));
    }
    let t = 0.5 * (x0 + x1) - d1 / (2.0 * d2);
    let t = t.clamp(x0, x2);
    Some((t, y0 + d1 * (t - x0) + d2 * (t - x0) * (t - x1)))
}

/// Least-squares line `y = a x + b`; returns `(a, b, r²)`.
fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all sizes are equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(u, v)| (v - (a * u + b)).powi(2)).sum();
    let r2 = if ss_tot <= f64::EPSILON * my.abs().max(1.0) * n {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok((a, b, r2))
}
