//! Autocorrelation estimates and AR(p) fits.
//!
//! The ACF uses the biased (divide by T) estimator, which keeps the sequence
//! positive semidefinite so the Yule-Walker system is always well posed.
//! Yule-Walker systems are solved with the Levinson-Durbin recursion.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{dot, ln, mean};
use crate::matrix::Matrix;
use crate::ArError;

/// Reflection coefficients are clamped to this magnitude.
pub const REFLECTION_LIMIT: f64 = 1.0 - 1e-6;
/// Largest order considered by AIC selection.
pub const AIC_MAX_ORDER: usize = 10;

/// Biased autocovariance `c_u = Σ (x_t − x̄)(x_{t+u} − x̄) / n`, lags `0..=max_lag`.
pub fn autocovariance(x: &[f64], max_lag: usize) -> Result<Vec<f64>, ArError> {
    let n = x.len();
    if max_lag >= n {
        return Err(ArError::LagTooLarge { max_lag, len: n });
    }
    let m = mean(x);
    let centered: Vec<f64> = x.iter().map(|v| v - m).collect();
    Ok((0..=max_lag)
        .map(|u| dot(&centered[..n - u], &centered[u..]) / n as f64)
        .collect())
}

/// Autocorrelation of one series. A zero-variance series yields `(1, 0, …)`
/// and `false` in the second slot.
pub fn acf_series(x: &[f64], max_lag: usize) -> Result<(Vec<f64>, bool), ArError> {
    let c = autocovariance(x, max_lag)?;
    if c[0] <= 0.0 {
        let mut r = vec![0.0; max_lag + 1];
        r[0] = 1.0;
        return Ok((r, false));
    }
    Ok((c.iter().map(|v| v / c[0]).collect(), true))
}

/// Per-vertex autocorrelations, lags `0..=max_lag` in the rows.
#[derive(Clone, Debug, PartialEq)]
pub struct AcfField {
    pub acf: Matrix,
    pub max_lag: usize,
    /// Vertices with zero residual variance.
    pub zero_variance: Vec<bool>,
}

pub fn empirical_acf(residuals: &Matrix, max_lag: usize) -> Result<AcfField, ArError> {
    let mut acf = Matrix::zeros(max_lag + 1, residuals.cols());
    let mut zero_variance = vec![false; residuals.cols()];
    for v in 0..residuals.cols() {
        let (r, ok) = acf_series(residuals.col(v), max_lag)?;
        acf.col_mut(v).copy_from_slice(&r);
        zero_variance[v] = !ok;
    }
    Ok(AcfField { acf, max_lag, zero_variance })
}

/// Autocorrelation index `Σ_{u=0}^{L} ρ_u²` for each vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct AciField {
    pub aci: Vec<f64>,
}

pub fn aci(acf: &AcfField) -> AciField {
    AciField { aci: acf.acf.columns().map(aci_from_acf).collect() }
}

pub fn aci_from_acf(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// ACI over the full lag range `0..T−1` of a single series.
pub fn aci_series(x: &[f64]) -> f64 {
    let (r, _) = acf_series(x, x.len() - 1).expect("lag below length");
    aci_from_acf(&r)
}

/// ACI over every lag of each column. `truncate` limits the lags for speed;
/// `None` sums the full range.
pub fn aci_field(residuals: &Matrix, truncate: Option<usize>) -> AciField {
    let t = residuals.rows();
    let lag = truncate.map_or(t - 1, |l| l.min(t - 1));
    AciField {
        aci: residuals
            .columns()
            .map(|c| aci_from_acf(&acf_series(c, lag).expect("lag below length").0))
            .collect(),
    }
}

/// Output of one Levinson-Durbin pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LevinsonDurbin {
    /// Order-p coefficients.
    pub phi: Vec<f64>,
    /// Innovation variance at order p.
    pub s: f64,
    pub reflection: Vec<f64>,
    /// Innovation variance at every order `0..=p`.
    pub innovation: Vec<f64>,
    /// Some reflection coefficient reached ±1 and was clamped.
    pub clamped: bool,
}

/// Solves the order-`p` Yule-Walker system for lags `acf[0..=p]`.
///
/// `acf` may be autocorrelations or autocovariances; the innovation variance
/// is in the units of `acf[0]`.
pub fn levinson_durbin(acf: &[f64], p: usize) -> Result<LevinsonDurbin, ArError> {
    if acf.len() < p + 1 {
        return Err(ArError::TooFewLags { needed: p + 1, got: acf.len() });
    }
    let r0 = acf[0];
    if !(r0 > 0.0) {
        return Err(ArError::InvalidLagZero(r0));
    }
    let mut phi: Vec<f64> = Vec::with_capacity(p);
    let mut prev: Vec<f64> = Vec::with_capacity(p);
    let mut reflection = Vec::with_capacity(p);
    let mut innovation = Vec::with_capacity(p + 1);
    let mut e = r0;
    innovation.push(e);
    let mut clamped = false;
    for m in 1..=p {
        let acc = acf[m] - (1..m).map(|j| phi[j - 1] * acf[m - j]).sum::<f64>();
        let mut k = if e > 0.0 { acc / e } else { 0.0 };
        if !(k.abs() < REFLECTION_LIMIT) {
            clamped = true;
            k = if k.is_nan() { 0.0 } else { k.signum() * REFLECTION_LIMIT };
        }
        prev.clear();
        prev.extend_from_slice(&phi);
        for j in 1..m {
            phi[j - 1] = prev[j - 1] - k * prev[m - j - 1];
        }
        phi.push(k);
        reflection.push(k);
        e *= 1.0 - k * k;
        innovation.push(e);
    }
    Ok(LevinsonDurbin { phi, s: e, reflection, innovation, clamped })
}

/// Reflection coefficients of an AR polynomial (step-down recursion). The
/// second value is false when some stage reaches |k| ≥ 1.
pub fn reflection_coefficients(phi: &[f64]) -> (Vec<f64>, bool) {
    let p = phi.len();
    let mut a = phi.to_vec();
    let mut k = vec![0.0; p];
    let mut ok = true;
    for m in (1..=p).rev() {
        let km = a[m - 1];
        k[m - 1] = km;
        if !(km.abs() < 1.0) {
            ok = false;
            break;
        }
        let denom = 1.0 - km * km;
        let prev: Vec<f64> = (1..m).map(|j| (a[j - 1] + km * a[m - j - 1]) / denom).collect();
        a.truncate(m - 1);
        a.copy_from_slice(&prev);
    }
    (k, ok)
}

/// AR coefficients from reflection coefficients (step-up recursion).
pub fn from_reflection(k: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(k.len());
    for (m, &km) in k.iter().enumerate() {
        let prev = phi.clone();
        for j in 0..m {
            phi[j] = prev[j] - km * prev[m - 1 - j];
        }
        phi.push(km);
    }
    phi
}

/// True when every root of `1 − Σ φ_k z^k` lies outside the unit circle,
/// equivalently the companion matrix has spectral radius below one.
pub fn is_stationary(phi: &[f64]) -> bool {
    let p = trimmed_len(phi);
    reflection_coefficients(&phi[..p]).1
}

fn trimmed_len(phi: &[f64]) -> usize {
    phi.iter().rposition(|&v| v != 0.0).map_or(0, |i| i + 1)
}

/// Returns a stationary version of `phi` and whether it changed.
///
/// Runs the step-down recursion, clamping any reflection coefficient at
/// [`REFLECTION_LIMIT`], and rebuilds the polynomial. Stationary input is
/// returned unchanged.
pub fn enforce_stationarity(phi: &[f64]) -> (Vec<f64>, bool) {
    let p = trimmed_len(phi);
    if reflection_coefficients(&phi[..p]).1 {
        return (phi.to_vec(), false);
    }
    let mut a = phi[..p].to_vec();
    let mut k = vec![0.0; p];
    for m in (1..=p).rev() {
        let mut km = a[m - 1];
        if !(km.abs() < REFLECTION_LIMIT) {
            km = if km.is_nan() { 0.0 } else { km.signum() * REFLECTION_LIMIT };
        }
        k[m - 1] = km;
        let denom = 1.0 - km * km;
        let prev: Vec<f64> = (1..m).map(|j| (a[j - 1] + km * a[m - j - 1]) / denom).collect();
        a.truncate(m - 1);
        a.copy_from_slice(&prev);
    }
    let mut out = from_reflection(&k);
    out.resize(phi.len(), 0.0);
    (out, true)
}

/// Result of AIC order selection for one series.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderSelection {
    pub order: usize,
    /// Coefficients padded with zeros to `p_max`.
    pub phi: Vec<f64>,
    pub s: f64,
    pub aic: Vec<f64>,
}

/// Chooses the AR order in `0..=p_max` minimising `T ln ŝ_p + 2(p + 1)`.
/// Ties go to the lower order; orders with `ŝ_p ≤ 0` are skipped.
pub fn select_order_aic(series: &[f64], p_max: usize) -> Result<OrderSelection, ArError> {
    let n = series.len();
    if n <= 3 * p_max {
        return Err(ArError::SeriesTooShort { needed: 3 * p_max, got: n });
    }
    let c = autocovariance(series, p_max)?;
    if !(c[0] > 0.0) {
        return Ok(OrderSelection { order: 0, phi: vec![0.0; p_max], s: 0.0, aic: vec![f64::NAN; p_max + 1] });
    }
    let ld = levinson_durbin(&c, p_max)?;
    let aic: Vec<f64> = ld
        .innovation
        .iter()
        .enumerate()
        .map(|(p, &s)| if s > 0.0 { n as f64 * ln(s) + 2.0 * (p as f64 + 1.0) } else { f64::NAN })
        .collect();
    let best = argmin_aic(&aic);
    let mut phi = if best == 0 { Vec::new() } else { levinson_durbin(&c, best)?.phi };
    phi.resize(p_max, 0.0);
    Ok(OrderSelection { order: best, phi, s: ld.innovation[best], aic })
}

/// Index of the smallest finite criterion value; the lowest index wins ties.
pub fn argmin_aic(aic: &[f64]) -> usize {
    let mut best: Option<usize> = None;
    for (p, &v) in aic.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if aic[b] <= v => {}
            _ => best = Some(p),
        }
    }
    best.unwrap_or(0)
}

/// How the AR order is chosen per vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArOrder {
    Fixed(usize),
    Aic { max: usize },
}

impl ArOrder {
    pub fn p_max(&self) -> usize {
        match *self {
            ArOrder::Fixed(p) => p,
            ArOrder::Aic { max } => max,
        }
    }
}

/// Single-vertex AR estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexAr {
    /// Length `p_max`, zeros above `order`.
    pub phi: Vec<f64>,
    pub s: f64,
    pub order: usize,
    pub clamped: bool,
    pub zero_variance: bool,
}

/// Fits the AR model of one residual series.
pub fn fit_vertex_ar(series: &[f64], order: ArOrder) -> Result<VertexAr, ArError> {
    let p_max = order.p_max();
    let c = autocovariance(series, p_max.min(series.len().saturating_sub(1)))?;
    if !(c[0] > 0.0) {
        // Constant column: white, unit-variance placeholder.
        return Ok(VertexAr { phi: vec![0.0; p_max], s: 1.0, order: 0, clamped: false, zero_variance: true });
    }
    match order {
        ArOrder::Fixed(p) => {
            if p >= series.len() {
                return Err(ArError::LagTooLarge { max_lag: p, len: series.len() });
            }
            let ld = levinson_durbin(&c, p)?;
            Ok(VertexAr { phi: ld.phi, s: ld.s, order: p, clamped: ld.clamped, zero_variance: false })
        }
        ArOrder::Aic { max } => {
            let sel = select_order_aic(series, max)?;
            let clamped = levinson_durbin(&c, sel.order)?.clamped;
            Ok(VertexAr { phi: sel.phi, s: sel.s, order: sel.order, clamped, zero_variance: false })
        }
    }
}

/// Per-vertex AR coefficients (rows are lags 1..p_max), white-noise
/// variances, and selected orders.
#[derive(Clone, Debug, PartialEq)]
pub struct ArField {
    pub phi: Matrix,
    pub s: Vec<f64>,
    pub order: Vec<usize>,
    pub p_max: usize,
    /// Vertices whose fit needed reflection clamping or whose coefficients
    /// were projected back to stationarity.
    pub nonstationary: Vec<bool>,
    pub zero_variance: Vec<bool>,
}

impl ArField {
    pub fn from_vertices(p_max: usize, fits: Vec<VertexAr>) -> Self {
        let v = fits.len();
        let mut phi = Matrix::zeros(p_max, v);
        let mut s = vec![0.0; v];
        let mut order = vec![0; v];
        let mut nonstationary = vec![false; v];
        let mut zero_variance = vec![false; v];
        for (j, f) in fits.into_iter().enumerate() {
            phi.col_mut(j).copy_from_slice(&f.phi);
            s[j] = f.s;
            order[j] = f.order;
            nonstationary[j] = f.clamped;
            zero_variance[j] = f.zero_variance;
        }
        Self { phi, s, order, p_max, nonstationary, zero_variance }
    }

    /// Same AR model at every vertex.
    pub fn homogeneous(phi: &[f64], s: f64, n_vertices: usize) -> Self {
        let p = phi.len();
        let fits = (0..n_vertices)
            .map(|_| VertexAr { phi: phi.to_vec(), s, order: p, clamped: false, zero_variance: false })
            .collect();
        Self::from_vertices(p, fits)
    }

    pub fn n_vertices(&self) -> usize {
        self.s.len()
    }

    pub fn coefficients(&self, v: usize) -> &[f64] {
        self.phi.col(v)
    }

    /// Coefficients up to the vertex's selected order.
    pub fn active_coefficients(&self, v: usize) -> &[f64] {
        &self.phi.col(v)[..self.order[v]]
    }

    /// Every vertex carries the same coefficients, variance and order.
    pub fn is_homogeneous(&self) -> bool {
        let v = self.n_vertices();
        (1..v).all(|j| self.s[j] == self.s[0] && self.order[j] == self.order[0] && self.phi.col(j) == self.phi.col(0))
    }
}

/// Fits every column of `residuals`.
pub fn fit_ar_field(residuals: &Matrix, order: ArOrder) -> Result<ArField, ArError> {
    let fits = residuals
        .columns()
        .map(|c| fit_vertex_ar(c, order))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ArField::from_vertices(order.p_max(), fits))
}
