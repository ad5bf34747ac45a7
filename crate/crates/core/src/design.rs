//! First-level design matrices: double-gamma HRF with optional temporal and
//! dispersion derivatives, event convolution, DCT drift terms, and rank-checked
//! assembly.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::data::EventSchedule;
use crate::linalg::numerical_rank;
use crate::math::{ceil, cos, exp, floor, ln, ln_gamma, sqrt};
use crate::matrix::Matrix;
use crate::DesignError;

/// Samples of the fine event grid per scan.
pub const OVERSAMPLING: usize = 16;
/// Shift used by the backward-difference temporal derivative, seconds.
pub const TEMPORAL_DERIVATIVE_SHIFT: f64 = 1.0;
/// Relative scale perturbation used by the dispersion derivative.
pub const DISPERSION_DELTA: f64 = 0.01;
/// Default HRF support, seconds.
pub const HRF_DURATION: f64 = 32.0;

/// Double-gamma parameters: response minus scaled undershoot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DoubleGamma {
    pub response_shape: f64,
    pub response_scale: f64,
    pub undershoot_shape: f64,
    pub undershoot_scale: f64,
    pub undershoot_ratio: f64,
}

impl Default for DoubleGamma {
    fn default() -> Self {
        Self {
            response_shape: 6.0,
            response_scale: 1.0,
            undershoot_shape: 16.0,
            undershoot_scale: 1.0,
            undershoot_ratio: 1.0 / 6.0,
        }
    }
}

impl DoubleGamma {
    /// Unnormalized response at `t` seconds; zero for `t ≤ 0`.
    pub fn eval(&self, t: f64) -> f64 {
        gamma_density(t, self.response_shape, self.response_scale)
            - self.undershoot_ratio * gamma_density(t, self.undershoot_shape, self.undershoot_scale)
    }

    fn with_scales_inflated(&self, delta: f64) -> Self {
        Self {
            response_scale: self.response_scale * (1.0 + delta),
            undershoot_scale: self.undershoot_scale * (1.0 + delta),
            ..*self
        }
    }
}

fn gamma_density(t: f64, shape: f64, scale: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    exp((shape - 1.0) * ln(t) - t / scale - ln_gamma(shape) - shape * ln(scale))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HrfVariant {
    Canonical,
    TemporalDerivative,
    DispersionDerivative,
}

/// Sampled impulse response.
#[derive(Clone, Debug, PartialEq)]
pub struct HrfBasis {
    pub kernel: Vec<f64>,
    pub dt: f64,
    pub variant: HrfVariant,
    params: DoubleGamma,
    /// Divisor that took the raw double-gamma to unit peak.
    peak: f64,
}

impl HrfBasis {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.kernel.len()).map(move |i| i as f64 * self.dt)
    }

    pub fn duration(&self) -> f64 {
        (self.kernel.len() - 1) as f64 * self.dt
    }
}

/// Canonical double-gamma HRF sampled every `dt` seconds over `[0, duration]`,
/// scaled to a peak of exactly 1.
pub fn canonical_hrf(dt: f64, duration: f64) -> Result<HrfBasis, DesignError> {
    canonical_hrf_with(dt, duration, DoubleGamma::default())
}

pub fn canonical_hrf_with(dt: f64, duration: f64, params: DoubleGamma) -> Result<HrfBasis, DesignError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DesignError::InvalidStep(dt));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(DesignError::InvalidDuration(duration));
    }
    let n = floor(duration / dt + 1e-9) as usize + 1;
    let raw: Vec<f64> = (0..n).map(|i| params.eval(i as f64 * dt)).collect();
    let peak = raw.iter().copied().fold(f64::MIN, f64::max);
    let kernel = raw.iter().map(|v| v / peak).collect();
    Ok(HrfBasis { kernel, dt, variant: HrfVariant::Canonical, params, peak })
}

/// Temporal and dispersion derivatives of a canonical HRF.
pub fn hrf_derivatives(h: &HrfBasis) -> Result<(HrfBasis, HrfBasis), DesignError> {
    hrf_derivatives_with(h, TEMPORAL_DERIVATIVE_SHIFT, DISPERSION_DELTA)
}

/// As [`hrf_derivatives`] with explicit shift (seconds) and relative scale
/// perturbation.
pub fn hrf_derivatives_with(
    h: &HrfBasis,
    shift: f64,
    delta: f64,
) -> Result<(HrfBasis, HrfBasis), DesignError> {
    if h.variant != HrfVariant::Canonical {
        return Err(DesignError::NotCanonical);
    }
    if delta == 0.0 {
        return Err(DesignError::ZeroDispersionDelta);
    }
    if !(shift > 0.0) {
        return Err(DesignError::InvalidStep(shift));
    }
    let times: Vec<f64> = h.times().collect();
    let temporal = times
        .iter()
        .zip(&h.kernel)
        .map(|(&t, &k)| (k - h.params.eval(t - shift) / h.peak) / shift)
        .collect();
    let inflated = h.params.with_scales_inflated(delta);
    let dispersion = times
        .iter()
        .zip(&h.kernel)
        .map(|(&t, &k)| (k - inflated.eval(t) / h.peak) / delta)
        .collect();
    Ok((
        HrfBasis { kernel: temporal, variant: HrfVariant::TemporalDerivative, ..h.clone() },
        HrfBasis { kernel: dispersion, variant: HrfVariant::DispersionDerivative, ..h.clone() },
    ))
}

/// Convolves one condition's boxcar stimulus with `hrf` and samples it at the
/// `n_scans` acquisition times `k · tr`.
///
/// `hrf` must be sampled at `tr / OVERSAMPLING`; see [`hrf_for_tr`]. Events
/// running past the end of the scan are truncated.
pub fn convolve_condition(
    onsets: &[f64],
    durations: &[f64],
    amplitudes: &[f64],
    hrf: &HrfBasis,
    n_scans: usize,
    tr: f64,
) -> Vec<f64> {
    let dt = tr / OVERSAMPLING as f64;
    debug_assert!((hrf.dt - dt).abs() <= 1e-12 * dt, "kernel must be on the oversampled grid");
    let n_fine = n_scans * OVERSAMPLING;
    let mut stick = vec![0.0; n_fine];
    for ((&onset, &dur), &amp) in onsets.iter().zip(durations).zip(amplitudes) {
        // Fine samples i with onset ≤ i·dt < onset + dur; the small slack keeps
        // grid-aligned onsets from rounding onto the wrong side.
        let start = ceil(onset / dt - 1e-9).max(0.0) as usize;
        let stop = ceil((onset + dur) / dt - 1e-9).max(0.0) as usize;
        for s in stick.iter_mut().take(stop.min(n_fine)).skip(start) {
            *s += amp;
        }
    }
    let k = &hrf.kernel;
    (0..n_scans)
        .map(|scan| {
            let i = scan * OVERSAMPLING;
            let lo = (i + 1).saturating_sub(k.len());
            let acc: f64 = (lo..=i).map(|j| stick[j] * k[i - j]).sum();
            acc * dt
        })
        .collect()
}

/// Convolved regressor for every condition of the schedule, in schedule order.
pub fn convolve_events(events: &EventSchedule, hrf: &HrfBasis, n_scans: usize, tr: f64) -> Vec<Vec<f64>> {
    events
        .conditions()
        .iter()
        .map(|c| convolve_condition(&c.onsets, &c.durations, &c.amplitudes, hrf, n_scans, tr))
        .collect()
}

/// Canonical HRF on the oversampled grid for a given TR.
pub fn hrf_for_tr(tr: f64) -> Result<HrfBasis, DesignError> {
    canonical_hrf(tr / OVERSAMPLING as f64, HRF_DURATION)
}

/// Number of DCT drift columns for a high-pass cutoff.
pub fn dct_count(n_scans: usize, tr: f64, cutoff_hz: f64) -> usize {
    floor(2.0 * n_scans as f64 * tr * cutoff_hz) as usize
}

/// Unit-norm DCT-II drift columns `cos(π k (2t+1) / 2T)`, `k = 1..K`. Empty
/// when the cutoff admits no column.
pub fn dct_bases(n_scans: usize, tr: f64, cutoff_hz: f64) -> Result<Vec<Vec<f64>>, DesignError> {
    if !(cutoff_hz > 0.0 && cutoff_hz.is_finite()) {
        return Err(DesignError::InvalidCutoff(cutoff_hz));
    }
    let k_max = dct_count(n_scans, tr, cutoff_hz).min(n_scans.saturating_sub(1));
    let n = n_scans as f64;
    let norm = sqrt(2.0 / n);
    Ok((1..=k_max)
        .map(|k| {
            (0..n_scans)
                .map(|t| norm * cos(core::f64::consts::PI * k as f64 * (2.0 * t as f64 + 1.0) / (2.0 * n)))
                .collect()
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ColumnRole {
    Intercept,
    Task,
    TemporalDerivative,
    DispersionDerivative,
    Drift,
    Nuisance,
}

impl ColumnRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            ColumnRole::Intercept => "intercept",
            ColumnRole::Task => "task",
            ColumnRole::TemporalDerivative => "temporal-derivative",
            ColumnRole::DispersionDerivative => "dispersion-derivative",
            ColumnRole::Drift => "drift",
            ColumnRole::Nuisance => "nuisance",
        }
    }
}

/// A named column awaiting assembly.
#[derive(Clone, Debug, PartialEq)]
pub struct Regressor {
    pub name: String,
    pub role: ColumnRole,
    pub values: Vec<f64>,
}

impl Regressor {
    pub fn new(name: impl Into<String>, role: ColumnRole, values: Vec<f64>) -> Self {
        Self { name: name.into(), role, values }
    }
}

/// T×K design with one role and one name per column.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    matrix: Matrix,
    roles: Vec<ColumnRole>,
    names: Vec<String>,
}

impl DesignMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn roles(&self) -> &[ColumnRole] {
        &self.roles
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Index of the first task column.
    pub fn first_task(&self) -> Option<usize> {
        self.roles.iter().position(|r| *r == ColumnRole::Task)
    }
}

/// Relative singular-value tolerance for the rank check.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Prepends an intercept, concatenates task, derivative, nuisance and drift
/// columns in that order, and verifies full column rank.
///
/// Task, nuisance and drift columns are re-tagged with their group's role;
/// derivative columns keep the role they carry.
pub fn assemble_design(
    task: Vec<Regressor>,
    derivatives: Vec<Regressor>,
    nuisance: Vec<Regressor>,
    drift: Vec<Regressor>,
) -> Result<DesignMatrix, DesignError> {
    let n = task
        .iter()
        .chain(&derivatives)
        .chain(&nuisance)
        .chain(&drift)
        .map(|r| r.values.len())
        .next();
    let Some(n) = n else {
        // intercept-only model; the caller must still tell us T
        return Err(DesignError::LengthMismatch {
            index: 0,
            name: "intercept".to_string(),
            expected: 0,
            got: 0,
        });
    };
    intercept_design(n, task, derivatives, nuisance, drift)
}

/// [`assemble_design`] with an explicit row count, which also allows an
/// intercept-only model.
pub fn intercept_design(
    n: usize,
    task: Vec<Regressor>,
    derivatives: Vec<Regressor>,
    nuisance: Vec<Regressor>,
    drift: Vec<Regressor>,
) -> Result<DesignMatrix, DesignError> {
    let mut cols = vec![Regressor::new("intercept", ColumnRole::Intercept, vec![1.0; n])];
    cols.extend(task.into_iter().map(|r| Regressor { role: ColumnRole::Task, ..r }));
    cols.extend(derivatives);
    cols.extend(nuisance.into_iter().map(|r| Regressor { role: ColumnRole::Nuisance, ..r }));
    cols.extend(drift.into_iter().map(|r| Regressor { role: ColumnRole::Drift, ..r }));

    for (index, c) in cols.iter().enumerate() {
        if c.values.len() != n {
            return Err(DesignError::LengthMismatch {
                index,
                name: c.name.clone(),
                expected: n,
                got: c.values.len(),
            });
        }
        if c.values.iter().any(|v| !v.is_finite()) {
            return Err(DesignError::NonFinite { index, name: c.name.clone() });
        }
    }
    if cols.len() > n {
        return Err(DesignError::TooManyColumns { rows: n, columns: cols.len() });
    }
    let values: Vec<&[f64]> = cols.iter().map(|c| c.values.as_slice()).collect();
    let matrix = Matrix::from_columns(n, &values);
    if numerical_rank(&matrix, RANK_TOLERANCE) < cols.len() {
        // Grow the prefix until the rank stalls to name the offending column.
        for k in 2..=cols.len() {
            let idx: Vec<usize> = (0..k).collect();
            if numerical_rank(&matrix.select_columns(&idx), RANK_TOLERANCE) < k {
                return Err(DesignError::RankDeficient { index: k - 1, name: cols[k - 1].name.clone() });
            }
        }
        return Err(DesignError::RankDeficient { index: cols.len() - 1, name: cols[cols.len() - 1].name.clone() });
    }
    Ok(DesignMatrix {
        matrix,
        roles: cols.iter().map(|c| c.role).collect(),
        names: cols.into_iter().map(|c| c.name).collect(),
    })
}

/// Which HRF columns enter the model per condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum HrfModel {
    #[default]
    Canonical,
    WithTemporal,
    WithTemporalAndDispersion,
}

/// Builds a complete first-level design: one task column per condition plus
/// the requested derivatives, optional nuisance columns, and DCT drift terms.
pub fn first_level_design(
    events: &EventSchedule,
    n_scans: usize,
    tr: f64,
    hrf_model: HrfModel,
    cutoff_hz: Option<f64>,
    nuisance: Option<&Matrix>,
) -> Result<DesignMatrix, DesignError> {
    let hrf = hrf_for_tr(tr)?;
    let task_cols = convolve_events(events, &hrf, n_scans, tr);
    let mut task = Vec::new();
    let mut derivs = Vec::new();
    let basis = match hrf_model {
        HrfModel::Canonical => None,
        _ => Some(hrf_derivatives(&hrf)?),
    };
    for (cond, col) in events.conditions().iter().zip(task_cols) {
        task.push(Regressor::new(cond.name.clone(), ColumnRole::Task, col));
        if let Some((td, dd)) = &basis {
            derivs.push(Regressor::new(
                format!("{}_td", cond.name),
                ColumnRole::TemporalDerivative,
                convolve_condition(&cond.onsets, &cond.durations, &cond.amplitudes, td, n_scans, tr),
            ));
            if hrf_model == HrfModel::WithTemporalAndDispersion {
                derivs.push(Regressor::new(
                    format!("{}_dd", cond.name),
                    ColumnRole::DispersionDerivative,
                    convolve_condition(&cond.onsets, &cond.durations, &cond.amplitudes, dd, n_scans, tr),
                ));
            }
        }
    }
    let nuis = match nuisance {
        Some(m) => {
            if m.rows() != n_scans {
                return Err(DesignError::LengthMismatch {
                    index: 0,
                    name: "nuisance".to_string(),
                    expected: n_scans,
                    got: m.rows(),
                });
            }
            (0..m.cols())
                .map(|j| Regressor::new(format!("nuisance{j}"), ColumnRole::Nuisance, m.col(j).to_vec()))
                .collect()
        }
        None => Vec::new(),
    };
    let drift = match cutoff_hz {
        Some(c) => dct_bases(n_scans, tr, c)?
            .into_iter()
            .enumerate()
            .map(|(k, v)| Regressor::new(format!("dct{}", k + 1), ColumnRole::Drift, v))
            .collect(),
        None => Vec::new(),
    };
    intercept_design(n_scans, task, derivs, nuis, drift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{EventRow, EventSchedule};
    use crate::linalg::Qr;

    fn boxcar_schedule() -> EventSchedule {
        EventSchedule::from_rows(
            [20.0, 40.0, 60.0]
                .iter()
                .map(|&onset| EventRow { condition: "boxcar".into(), onset, duration: 10.0, amplitude: None })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn canonical_starts_at_zero_peaks_at_one() {
        let h = canonical_hrf(0.1, 32.0).unwrap();
        assert_eq!(h.kernel[0], 0.0);
        let (imax, &vmax) = h
            .kernel
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert_eq!(vmax, 1.0);
        assert!((imax as f64 * 0.1 - 5.0).abs() < 1e-9, "argmax at {}", imax as f64 * 0.1);
        assert_eq!(h.kernel.len(), 321);
    }

    #[test]
    fn brute_force_argmax_of_raw_double_gamma() {
        // Oracle: fine grid search on the unnormalized formula written out.
        let f = |t: f64| {
            let g = |t: f64, k: f64| exp((k - 1.0) * ln(t) - t - ln_gamma(k));
            g(t, 6.0) - g(t, 16.0) / 6.0
        };
        let best = (1..=3200).map(|i| i as f64 * 0.01).max_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
        assert!((best - 5.0).abs() < 0.05, "oracle argmax {best}");
    }

    #[test]
    fn invalid_step_rejected() {
        assert_eq!(canonical_hrf(0.0, 32.0).unwrap_err(), DesignError::InvalidStep(0.0));
        assert!(canonical_hrf(-1.0, 32.0).is_err());
    }

    #[test]
    fn temporal_derivative_integral_is_telescoped_tail() {
        let dt = 0.1;
        let h = canonical_hrf(dt, 32.0).unwrap();
        let (td, _) = hrf_derivatives(&h).unwrap();
        let integral: f64 = td.kernel.iter().sum::<f64>() * dt;
        // Riemann sum of h(t) - h(t-1) over the grid telescopes to the last
        // second of support.
        let n = h.kernel.len();
        let tail: f64 = h.kernel[n - 10..].iter().sum::<f64>() * dt;
        assert!((integral - tail).abs() < 1e-12);
        assert!(integral.abs() < 1e-3, "integral {integral}");
    }

    #[test]
    fn zero_dispersion_delta_is_an_error() {
        let h = canonical_hrf(0.1, 32.0).unwrap();
        assert_eq!(hrf_derivatives_with(&h, 1.0, 0.0).unwrap_err(), DesignError::ZeroDispersionDelta);
        let (td, _) = hrf_derivatives(&h).unwrap();
        assert_eq!(hrf_derivatives(&td).unwrap_err(), DesignError::NotCanonical);
    }

    fn shift_estimate(s: f64) -> f64 {
        let dt = 0.1;
        let h = canonical_hrf(dt, 32.0).unwrap();
        let (td, _) = hrf_derivatives(&h).unwrap();
        let shifted: Vec<f64> = h.times().map(|t| h.params.eval(t - s) / h.peak).collect();
        let x = Matrix::from_columns(h.kernel.len(), &[&h.kernel, &td.kernel]);
        let beta = Qr::new(&x).solve(&shifted).unwrap();
        // h(t - s) ≈ h(t) - s h'(t)
        -beta[1]
    }

    #[test]
    fn temporal_derivative_recovers_onset_shift() {
        let est = shift_estimate(0.5);
        assert!((est - 0.5).abs() < 0.05, "estimate {est}");
        for &s in &[-0.5, -0.3, -0.1, 0.1, 0.25, 0.4] {
            let est = shift_estimate(s);
            assert!((est - s).abs() <= 0.1 * s.abs(), "s={s} est={est}");
        }
    }

    #[test]
    fn empty_and_impulse_convolution() {
        let tr = 0.72;
        let h = hrf_for_tr(tr).unwrap();
        let zero = convolve_condition(&[], &[], &[], &h, 50, tr);
        assert!(zero.iter().all(|&v| v == 0.0));
        let step = tr / OVERSAMPLING as f64;
        let col = convolve_condition(&[0.0], &[step], &[1.0 / step], &h, 40, tr);
        for (i, v) in col.iter().enumerate() {
            let k = h.kernel.get(i * OVERSAMPLING).copied().unwrap_or(0.0);
            assert!((v - k).abs() < 1e-12, "scan {i}");
        }
    }

    #[test]
    fn boxcar_first_nonzero_at_scan_28() {
        let tr = 0.72;
        let cols = convolve_events(&boxcar_schedule(), &hrf_for_tr(tr).unwrap(), 284, tr);
        let first = cols[0].iter().position(|&v| v != 0.0).unwrap();
        assert_eq!(first, 28);
        assert_eq!(first, ceil(20.0 / 0.72) as usize);
    }

    #[test]
    fn doubling_amplitudes_doubles_column() {
        let tr = 0.72;
        let h = hrf_for_tr(tr).unwrap();
        let s = boxcar_schedule();
        let a = convolve_events(&s, &h, 284, tr);
        let b = convolve_events(&s.scaled(2.0), &h, 284, tr);
        for (x, y) in a[0].iter().zip(&b[0]) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn dct_count_and_orthonormality() {
        assert_eq!(dct_count(284, 0.72, 0.01), 4);
        let cols = dct_bases(284, 0.72, 0.01).unwrap();
        assert_eq!(cols.len(), 4);
        for (i, a) in cols.iter().enumerate() {
            for (j, b) in cols.iter().enumerate() {
                let d = crate::math::dot(a, b);
                if i == j {
                    assert!((d - 1.0).abs() < 1e-12);
                } else {
                    assert!(d.abs() < 1e-10);
                }
            }
        }
        assert!(dct_bases(10, 1.0, 0.001).unwrap().is_empty());
        assert!(dct_bases(10, 1.0, 0.0).is_err());
    }

    #[test]
    fn duplicate_task_names_column_two() {
        let col: Vec<f64> = (0..30).map(|i| libm::sin(i as f64 * 0.3)).collect();
        let err = assemble_design(
            vec![Regressor::new("a", ColumnRole::Task, col.clone()), Regressor::new("b", ColumnRole::Task, col)],
            vec![],
            vec![],
            vec![],
        )
        .unwrap_err();
        assert_eq!(err, DesignError::RankDeficient { index: 2, name: "b".into() });
    }

    #[test]
    fn boxcar_design_has_six_columns() {
        let d = first_level_design(&boxcar_schedule(), 284, 0.72, HrfModel::Canonical, Some(0.01), None).unwrap();
        assert_eq!(d.n_cols(), 6);
        assert_eq!(d.roles()[0], ColumnRole::Intercept);
        assert_eq!(d.roles().iter().filter(|r| **r == ColumnRole::Intercept).count(), 1);
        assert_eq!(d.first_task(), Some(1));
        assert_eq!(d.roles()[2..].iter().filter(|r| **r == ColumnRole::Drift).count(), 4);
    }

    #[test]
    fn twelve_nuisance_columns_accepted() {
        let n = 284;
        let nuis = Matrix::from_fn(n, 12, |t, j| {
            let t = t as f64;
            libm::sin(0.013 * (j + 1) as f64 * t + j as f64) + 0.001 * t * (j % 3) as f64
        });
        let d = first_level_design(&boxcar_schedule(), n, 0.72, HrfModel::WithTemporal, Some(0.01), Some(&nuis))
            .unwrap();
        assert_eq!(d.roles().iter().filter(|r| **r == ColumnRole::Nuisance).count(), 12);
        assert_eq!(d.n_cols(), 1 + 1 + 1 + 12 + 4);
    }
}
