use num_complex::Complex64 as C64;

use super::{check_inputs, pair_factor, CouplingMatrix, CouplingMeta, ModeSelection, OdfConfig, PhaseData, DELTA_MIN};
use crate::constants::HBAR;
use crate::error::{Error, Result};
use crate::modes::{ModeMetrics, ModeSet};
use crate::par;

/// Effective flip-flop model `sum_j H_j/2 tau^z_j + sum_{j!=k} J_jk tau^+_j tau^-_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExchangeModel {
    /// Self-energies, rad/s.
    pub h: Vec<f64>,
    /// Flip-flop rates, rad/s, Hermitian.
    pub ff: CouplingMatrix,
    /// Pair-production rates, rad/s. Reported only; they rotate at 2 B0.
    pub pp: CouplingMatrix,
    /// rad/s
    pub b0: f64,
    /// Largest off-diagonal `|J_ff|`, rad/s. This is the scale that sets the
    /// collective rate `N J` and the validity ratio.
    pub j_typ: f64,
    /// Mean off-diagonal `|J_ff|`, rad/s.
    pub j_mean: f64,
    /// `(min |delta_n| - |B0|) / (N J_typ)`; the model needs this to be large.
    pub validity_ratio: f64,
    /// Whether `N J_pp << 2 |B0|` holds, so the pair terms average out.
    pub pp_negligible: bool,
    pub warnings: Vec<String>,
}

/// Flip-flop coefficients in the presence of a transverse field `b0` (rad/s).
/// `nbar` holds one mean occupation per mode or is empty for the ground state.
pub fn exchange_couplings(
    modes: &ModeSet,
    metrics: &[ModeMetrics],
    phases: &PhaseData,
    odf: &OdfConfig,
    b0: f64,
    nbar: &[f64],
    selection: &ModeSelection,
) -> Result<ExchangeModel> {
    check_inputs(modes, metrics, phases)?;
    if !nbar.is_empty() && nbar.len() != modes.len() {
        return Err(Error::Shape("one occupation per mode is required".into()));
    }
    if !b0.is_finite() {
        return Err(Error::InvalidConfig("transverse field must be finite".into()));
    }
    let n = modes.n_ions;
    let idx = selection.resolve(modes)?;
    let mut coef = Vec::with_capacity(idx.len());
    let mut min_gap = f64::INFINITY;
    for &m in &idx {
        let d = odf.mu_r - modes.modes[m].omega;
        if d.abs() < DELTA_MIN {
            return Err(Error::ResonantMode { index: m, detuning: d });
        }
        if (d.abs() - b0.abs()).abs() < DELTA_MIN {
            return Err(Error::ExchangeResonance { index: m, detuning: d });
        }
        min_gap = min_gap.min(d.abs() - b0.abs());
        let a = (odf.force * metrics[m].l0 / HBAR).powi(2) / (2.0 * (d * d - b0 * b0));
        let occ = nbar.get(m).copied().unwrap_or(0.0);
        coef.push((m, d, a, occ));
    }

    let rows = par::map_indices(n, |j| {
        let mut ff = vec![C64::new(0.0, 0.0); n];
        let mut pp = vec![0.0; n];
        let mut h = 0.0;
        for &(m, d, a, occ) in &coef {
            h += a * b0 * pair_factor(modes, m, phases, j, j).re * (2.0 * occ + 1.0);
            for k in (0..n).filter(|&k| k != j) {
                let p = pair_factor(modes, m, phases, j, k);
                ff[k] += a * C64::new(d * p.re, -b0 * p.im);
                pp[k] += 0.5 * a * d * p.re;
            }
        }
        (h, ff, pp)
    });

    let meta = |kind: &str| CouplingMeta {
        kind: kind.into(),
        units: "rad/s".into(),
        modes: idx.clone(),
        detunings: coef.iter().map(|c| c.1).collect(),
        time: None,
        note: None,
    };
    let mut ff = CouplingMatrix::zeros(n, meta("exchange_ff"));
    let mut pp = CouplingMatrix::zeros(n, meta("exchange_pp"));
    let mut h = Vec::with_capacity(n);
    for (j, (hj, fr, pr)) in rows.into_iter().enumerate() {
        h.push(hj);
        for k in 0..n {
            ff.re[j * n + k] = fr[k].re;
            ff.im[j * n + k] = fr[k].im;
            pp.re[j * n + k] = pr[k];
        }
    }

    let pairs = (n * n.saturating_sub(1)).max(1) as f64;
    let mean_abs = |m: &CouplingMatrix| (0..n * n).map(|i| C64::new(m.re[i], m.im[i]).norm()).sum::<f64>() / pairs;
    let max_abs = |m: &CouplingMatrix| (0..n * n).map(|i| C64::new(m.re[i], m.im[i]).norm()).fold(0.0, f64::max);
    let j_typ = max_abs(&ff);
    let j_mean = mean_abs(&ff);
    let pp_typ = max_abs(&pp);
    let validity_ratio = if j_typ > 0.0 { min_gap / (n as f64 * j_typ) } else { f64::INFINITY };
    let pp_negligible = n as f64 * pp_typ < 0.1 * 2.0 * b0.abs();
    let mut warnings = Vec::new();
    if validity_ratio < 10.0 {
        warnings.push(format!("validity ratio (|delta|-B0)/(N J) = {validity_ratio:.2} is below 10"));
    }
    if !pp_negligible {
        warnings.push("pair-production terms are not small against 2 B0".into());
    }
    Ok(ExchangeModel { h, ff, pp, b0, j_typ, j_mean, validity_ratio, pp_negligible, warnings })
}

/// Splits the flip-flop terms into an XY part `J_r/2 (x_j x_k + y_j y_k)` and a
/// Dzyaloshinskii-Moriya part `J_i/2 (x_j y_k - y_j x_k)`.
pub fn dm_decomposition(model: &ExchangeModel) -> (CouplingMatrix, CouplingMatrix) {
    let n = model.ff.n;
    let mut meta = model.ff.meta.clone();
    meta.kind = "xy".into();
    let xy = CouplingMatrix::from_real(n, model.ff.re.iter().map(|v| 0.5 * v).collect(), meta.clone());
    meta.kind = "dm_z".into();
    let dm = CouplingMatrix::from_real(n, model.ff.im.iter().map(|v| 0.5 * v).collect(), meta);
    (xy, dm)
}
