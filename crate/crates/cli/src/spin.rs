use std::path::Path;

use ionlayer::analysis::{analyze_modes, resolve_drive, ModeAnalysis, ResolvedDrive};
use ionlayer::config::{odf_from, OdfSpec, ODF_KEYS};
use ionlayer::constants::TWO_PI;
use ionlayer::crystal::{CrystalState, Layer};
use ionlayer::modes::{commutation_sum_check, Branch};
use ionlayer::odf::{
    dm_decomposition, exchange_couplings, ising_couplings, j_rel, tipping_exact, tipping_meanfield, two_tone_couplings,
    CouplingMatrix,
};
use ionlayer::plot::{self, Figure, Series, PALETTE};
use ionlayer::thermal::{lamb_dicke, z_variance, ThermalSpec};
use serde::Serialize;

use crate::out::{load_config, Failure, OutDir};

pub fn load_crystal(path: &Path) -> Result<CrystalState, Failure> {
    CrystalState::load(path).map_err(Failure::at("reading crystal"))
}

pub fn load_odf(path: &Path) -> Result<OdfSpec, Failure> {
    let kv = load_config(path, &[ODF_KEYS])?;
    odf_from(&kv).map_err(Failure::at("reading ODF config"))
}

fn modes_of(state: &CrystalState) -> Result<ModeAnalysis, Failure> {
    analyze_modes(state).map_err(Failure::at("normal modes"))
}

fn with_phi(spec: &OdfSpec, phi_deg: f64) -> OdfSpec {
    OdfSpec { theta: None, phi_target: Some(phi_deg.to_radians()), ..spec.clone() }
}

fn drive(spec: &OdfSpec, state: &CrystalState, a: &ModeAnalysis) -> Result<ResolvedDrive, Failure> {
    resolve_drive(spec, state, a).map_err(Failure::at("resolving drive"))
}

#[derive(Serialize)]
struct DriveInfo {
    theta_deg: f64,
    phi_deg: Option<f64>,
    tau_us: f64,
    target_mode: usize,
    detuning_hz: f64,
    mu_r_hz: f64,
}

impl From<&ResolvedDrive> for DriveInfo {
    fn from(d: &ResolvedDrive) -> Self {
        Self {
            theta_deg: d.theta.to_degrees(),
            phi_deg: d.phi.map(|p| p.to_degrees() + 0.0),
            tau_us: d.tau * 1e6,
            target_mode: d.target_mode,
            detuning_hz: d.detuning / TWO_PI,
            mu_r_hz: d.odf.mu_r / TWO_PI,
        }
    }
}

/// Ions ordered upper, lower, scaffold, as in layer-blocked matrix plots.
fn layer_order(state: &CrystalState) -> Vec<usize> {
    let n = state.n_ions();
    match &state.layers {
        None => (0..n).collect(),
        Some(l) => [Layer::Upper, Layer::Lower, Layer::Scaffold]
            .iter()
            .flat_map(|g| (0..n).filter(move |&j| l[j] == *g))
            .collect(),
    }
}

fn reordered(m: &CouplingMatrix, order: &[usize], scale: f64) -> Vec<f64> {
    let n = m.n;
    let mut v = vec![0.0; n * n];
    for (a, &j) in order.iter().enumerate() {
        for (b, &k) in order.iter().enumerate() {
            v[a * n + b] = scale * m.real(j, k);
        }
    }
    v
}

#[derive(Serialize)]
struct ModeSummary {
    n_modes: usize,
    branch_sizes: [usize; 3],
    center_of_mass: usize,
    breathing: Option<usize>,
    top_drumhead: usize,
    cm_freq_hz: f64,
    breathing_freq_hz: Option<f64>,
    cm_gap_hz: f64,
    breathing_gap_hz: Option<f64>,
    cm_to_breathing_hz: Option<f64>,
    max_sum_rule_error: f64,
    max_residual: f64,
    warnings: Vec<String>,
    /// Largest and mean Lamb-Dicke parameter when a temperature is given.
    lamb_dicke: Option<(f64, f64)>,
}

/// Thermal spread settings for the modes command.
pub struct Thermal {
    pub temperature: Option<f64>,
    pub wavelength: f64,
    pub theta: f64,
}

pub fn modes(crystal: &Path, out: &Path, show: Option<usize>, thermal: &Thermal, reproducible: bool) -> Result<(), Failure> {
    let state = load_crystal(crystal)?;
    let mut dir = OutDir::create(out, "modes", reproducible)?;
    dir.add_input(crystal);
    let a = modes_of(&state)?;
    dir.lap("normal modes");
    let ms = &a.modes;
    dir.write("modes.csv", &ms.to_csv(&a.metrics))?;
    dir.write("modes.json", &ms.to_json().map_err(Failure::at("writing modes"))?)?;
    let sum_rule = commutation_sum_check(ms, &a.stiffness);
    let sp = &a.special;
    let summary = ModeSummary {
        n_modes: ms.len(),
        branch_sizes: [Branch::ExB, Branch::Drumhead, Branch::Cyclotron].map(|b| ms.branch_indices(b).len()),
        center_of_mass: sp.center_of_mass,
        breathing: sp.breathing,
        top_drumhead: sp.top_drumhead,
        cm_freq_hz: ms.modes[sp.center_of_mass].freq_hz(),
        breathing_freq_hz: sp.breathing.map(|b| ms.modes[b].freq_hz()),
        cm_gap_hz: sp.cm_gap_hz,
        breathing_gap_hz: sp.breathing_gap_hz,
        cm_to_breathing_hz: sp.cm_to_breathing_hz,
        max_sum_rule_error: sum_rule.iter().map(|v| v.abs()).fold(0.0, f64::max),
        max_residual: ms.max_residual(&a.stiffness),
        warnings: ms.warnings.clone(),
        lamb_dicke: None,
    };
    let mut summary = summary;
    if let Some(t) = thermal.temperature {
        let zv = z_variance(ms, &a.metrics, &ThermalSpec::Temperature(t), None).map_err(Failure::at("thermal spread"))?;
        let dk = 2.0 * TWO_PI / thermal.wavelength * thermal.theta.sin();
        let ld = lamb_dicke(&zv, dk);
        summary.lamb_dicke = Some((ld.max, ld.mean));
        dir.write("lamb_dicke.csv", &ld.to_csv())?;
    }
    dir.write_json("summary.json", &summary)?;

    let stamp = dir.stamp();
    let by_branch = |f: &dyn Fn(usize) -> f64| -> Vec<Series> {
        [Branch::ExB, Branch::Drumhead, Branch::Cyclotron]
            .iter()
            .enumerate()
            .map(|(c, &b)| {
                let idx = ms.branch_indices(b);
                Series::new(b.name(), idx.iter().map(|&n| n as f64).collect(), idx.iter().map(|&n| f(n)).collect(), PALETTE[c])
            })
            .collect()
    };
    let fig = |t: &str, y: &str| Figure::new(t, "mode index", y).with_timestamp(stamp.clone());
    dir.write("frequencies.svg", &plot::scatter(&fig("Mode frequencies", "f (MHz)"), &by_branch(&|n| ms.modes[n].freq_hz() * 1e-6), None))?;
    dir.write("axial_fraction.svg", &plot::scatter(&fig("Axial fraction", "f_z"), &by_branch(&|n| a.metrics[n].f_z), None))?;
    dir.write("energy_ratio.svg", &plot::scatter(&fig("Potential to kinetic energy", "R"), &by_branch(&|n| a.metrics[n].r), None))?;
    dir.write("complexity.svg", &plot::scatter(&fig("Mode complexity", "I"), &by_branch(&|n| a.metrics[n].i), None))?;

    let n = show.unwrap_or(sp.breathing.unwrap_or(sp.center_of_mass));
    if n >= ms.len() {
        return Err(Failure::usage(format!("mode {n} does not exist")));
    }
    dir.write(&format!("mode_{n}.svg"), &mode_view(&state, &a, n, stamp))?;
    dir.finish()
}

/// Top view of one mode: marker size is the axial amplitude, colour the sign
/// of its phase relative to the largest component.
fn mode_view(state: &CrystalState, a: &ModeAnalysis, n: usize, stamp: Option<String>) -> String {
    let m = &a.modes.modes[n];
    let p = state.positions_m();
    let zs: Vec<_> = (0..state.n_ions()).map(|j| m.z(j)).collect();
    let big = zs.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
    let mut series = vec![Series::new("in phase", vec![], vec![], PALETTE[1]), Series::new("out of phase", vec![], vec![], PALETTE[0])];
    let mut sizes = [vec![], vec![]];
    for (j, z) in zs.iter().enumerate() {
        let k = usize::from(z.re < 0.0);
        series[k].x.push(p[3 * j] * 1e6);
        series[k].y.push(p[3 * j + 1] * 1e6);
        sizes[k].push(z.norm() / big);
    }
    let fig = Figure::new(&format!("Mode {n} at {:.1} kHz", m.freq_hz() * 1e-3), "x (um)", "y (um)").with_timestamp(stamp);
    plot::scatter(&fig, &series, Some(&sizes))
}

#[derive(Serialize)]
struct CouplingSummary {
    drive: DriveInfo,
    j_rel: Option<f64>,
    frobenius_uu: Option<f64>,
    frobenius_dd: Option<f64>,
    frobenius_ud: Option<f64>,
    two_tone_cross_term: Option<f64>,
}

pub fn couplings(crystal: &Path, config: &Path, out: &Path, reproducible: bool) -> Result<(), Failure> {
    let state = load_crystal(crystal)?;
    let spec = load_odf(config)?;
    let mut dir = OutDir::create(out, "couplings", reproducible)?;
    dir.add_input(crystal);
    dir.set_config(config);
    let a = modes_of(&state)?;
    let d = drive(&spec, &state, &a)?;
    dir.lap("setup");
    let stage = Failure::at("Ising couplings");
    let (theta, cross) = if d.odf.second_tone.is_some() {
        let r = two_tone_couplings(&a.modes, &a.metrics, &d.phases, &d.odf, &a.special, d.tau).map_err(stage)?;
        (r.theta, Some(r.cross_term))
    } else {
        (ising_couplings(&a.modes, &a.metrics, &d.phases, &d.odf, d.tau, &d.selection).map_err(stage)?, None)
    };
    dir.lap("couplings");
    let j = theta.scaled(1.0 / d.tau, "ising_j", "rad/s");
    dir.write("theta.json", &theta.to_json().map_err(Failure::at("writing couplings"))?)?;
    dir.write("j_zz.json", &j.to_json().map_err(Failure::at("writing couplings"))?)?;
    dir.write("j_zz.csv", &j.to_csv())?;
    let order = layer_order(&state);
    let fig = Figure::new("J_jk tau (rad), ions ordered upper, lower, scaffold", "ion", "ion").with_timestamp(dir.stamp());
    dir.write("theta_heatmap.svg", &plot::heatmap(&fig, theta.n, &reordered(&theta, &order, 1.0)))?;
    let hist = d.phases.difference_histogram(72);
    let mut csv = String::from("bin_center_deg,count\n");
    for (b, c) in hist.iter().enumerate() {
        csv.push_str(&format!("{:.2},{c}\n", -180.0 + (b as f64 + 0.5) * 5.0));
    }
    dir.write("phase_differences.csv", &csv)?;
    let labels = state.layers.as_deref();
    let norm = |x: Layer, y: Layer| labels.map(|l| theta.block_frobenius(l, x, y));
    let summary = CouplingSummary {
        drive: DriveInfo::from(&d),
        j_rel: labels.map(|l| j_rel(&theta, l)).transpose().map_err(Failure::at("J_rel"))?,
        frobenius_uu: norm(Layer::Upper, Layer::Upper),
        frobenius_dd: norm(Layer::Lower, Layer::Lower),
        frobenius_ud: norm(Layer::Upper, Layer::Lower),
        two_tone_cross_term: cross,
    };
    dir.write_json("summary.json", &summary)?;
    dir.finish()
}

#[derive(Serialize)]
struct TippingSummary {
    drive: DriveInfo,
    file: String,
    amplitude_exact: f64,
    amplitude_meanfield: f64,
}

pub fn tipping(crystal: &Path, config: &Path, out: &Path, phis: &[f64], points: usize, reproducible: bool) -> Result<(), Failure> {
    if points < 2 {
        return Err(Failure::usage("--points must be at least 2".into()));
    }
    let state = load_crystal(crystal)?;
    let spec = load_odf(config)?;
    let mut dir = OutDir::create(out, "tipping", reproducible)?;
    dir.add_input(crystal);
    dir.set_config(config);
    let a = modes_of(&state)?;
    dir.lap("normal modes");
    let grid: Vec<f64> = (0..points).map(|i| std::f64::consts::PI * i as f64 / (points - 1) as f64).collect();
    let specs: Vec<(String, OdfSpec)> = if phis.is_empty() {
        vec![("tipping".into(), spec.clone())]
    } else {
        phis.iter().map(|&p| (format!("tipping_phi{p:03.0}"), with_phi(&spec, p))).collect()
    };
    let mut summaries = Vec::new();
    let mut series = Vec::new();
    for (i, (name, sp)) in specs.iter().enumerate() {
        let d = drive(sp, &state, &a)?;
        let theta = ising_couplings(&a.modes, &a.metrics, &d.phases, &d.odf, d.tau, &d.selection).map_err(Failure::at("Ising couplings"))?;
        let exact = tipping_exact(&theta, &grid);
        let mf = tipping_meanfield(&theta, &grid);
        dir.write(&format!("{name}.csv"), &exact.to_csv())?;
        dir.write(&format!("{name}_meanfield.csv"), &mf.to_csv())?;
        let label = d.phi.map_or(format!("theta_odf {:.3} deg", d.theta.to_degrees()), |p| format!("Phi = {:.0} deg", p.to_degrees()));
        series.push(Series::new(
            &label,
            grid.iter().map(|t| t.to_degrees()).collect(),
            exact.points.iter().map(|p| p.p_mean).collect(),
            PALETTE[i % PALETTE.len()],
        ));
        summaries.push(TippingSummary { drive: DriveInfo::from(&d), file: format!("{name}.csv"), amplitude_exact: exact.amplitude(), amplitude_meanfield: mf.amplitude() });
    }
    dir.lap("tipping");
    let fig = Figure::new("Tipping protocol", "theta (deg)", "P(up)").with_timestamp(dir.stamp());
    dir.write("tipping.svg", &plot::lines(&fig, &series))?;
    dir.write_json("summary.json", &summaries)?;
    dir.finish()
}

#[derive(Serialize)]
struct ExchangeSummary {
    drive: DriveInfo,
    file: String,
    b0_hz: f64,
    j_typ_hz: f64,
    j_mean_hz: f64,
    n_j_typ_hz: f64,
    validity_ratio: f64,
    pp_negligible: bool,
    hermiticity_error: f64,
    interlayer_median_re_over_im: Option<f64>,
    interlayer_median_im_over_re: Option<f64>,
    interlayer_xy_norm: Option<f64>,
    interlayer_dm_norm: Option<f64>,
    warnings: Vec<String>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 0 { 0.5 * (v[m - 1] + v[m]) } else { v[m] })
}

pub fn exchange(crystal: &Path, config: &Path, out: &Path, phis: &[f64], reproducible: bool) -> Result<(), Failure> {
    let state = load_crystal(crystal)?;
    let spec = load_odf(config)?;
    let b0 = spec.b0.ok_or_else(|| Failure::check("reading ODF config", "exchange needs b0_hz".into()))?;
    let mut dir = OutDir::create(out, "exchange", reproducible)?;
    dir.add_input(crystal);
    dir.set_config(config);
    let a = modes_of(&state)?;
    dir.lap("normal modes");
    let nbar = match spec.temperature {
        Some(t) => ThermalSpec::Temperature(t).occupations(&a.modes).map_err(Failure::at("thermal occupations"))?,
        None => vec![],
    };
    let specs: Vec<(String, OdfSpec)> = if phis.is_empty() {
        vec![("exchange".into(), spec.clone())]
    } else {
        phis.iter().map(|&p| (format!("exchange_phi{p:03.0}"), with_phi(&spec, p))).collect()
    };
    let labels = state.layers.clone();
    let mut summaries = Vec::new();
    for (name, sp) in &specs {
        let d = drive(sp, &state, &a)?;
        let e = exchange_couplings(&a.modes, &a.metrics, &d.phases, &d.odf, b0, &nbar, &d.selection).map_err(Failure::at("exchange couplings"))?;
        let n = e.ff.n;
        let code = |j: usize| labels.as_ref().map_or("-", |l| l[j].code());
        let mut csv = String::from("j,k,layer_j,layer_k,re_hz,im_hz\n");
        let (mut intra, mut inter, mut other) = (Series::new("same layer", vec![], vec![], PALETTE[0]), Series::new("different layers", vec![], vec![], PALETTE[1]), Series::new("scaffold", vec![], vec![], "#7f7f7f"));
        let (mut re_im, mut im_re) = (vec![], vec![]);
        for j in 0..n {
            for k in (0..n).filter(|&k| k != j) {
                let v = e.ff.get(j, k) / TWO_PI;
                csv.push_str(&format!("{j},{k},{},{},{:.9e},{:.9e}\n", code(j), code(k), v.re, v.im));
                let target = match labels.as_ref().map(|l| (l[j], l[k])) {
                    Some((Layer::Scaffold, _)) | Some((_, Layer::Scaffold)) => &mut other,
                    Some((x, y)) if x != y => {
                        re_im.push(v.re.abs() / v.im.abs());
                        im_re.push(v.im.abs() / v.re.abs());
                        &mut inter
                    }
                    _ => &mut intra,
                };
                target.x.push(v.re);
                target.y.push(v.im);
            }
        }
        let mut h = String::from("ion_index,h_hz\n");
        for (j, v) in e.h.iter().enumerate() {
            h.push_str(&format!("{j},{:.9e}\n", v / TWO_PI));
        }
        dir.write(&format!("{name}.csv"), &csv)?;
        dir.write(&format!("{name}_self_energy.csv"), &h)?;
        let fig = Figure::new("Flip-flop couplings", "Re J / 2pi (Hz)", "Im J / 2pi (Hz)").with_timestamp(dir.stamp());
        dir.write(&format!("{name}.svg"), &plot::scatter(&fig, &[intra, inter, other], None))?;
        let (xy, dm) = dm_decomposition(&e);
        let inter_norm = |m: &CouplingMatrix| labels.as_deref().map(|l| m.block_frobenius(l, Layer::Upper, Layer::Lower));
        summaries.push(ExchangeSummary {
            drive: DriveInfo::from(&d),
            file: format!("{name}.csv"),
            b0_hz: b0 / TWO_PI,
            j_typ_hz: e.j_typ / TWO_PI,
            j_mean_hz: e.j_mean / TWO_PI,
            n_j_typ_hz: n as f64 * e.j_typ / TWO_PI,
            validity_ratio: e.validity_ratio,
            pp_negligible: e.pp_negligible,
            hermiticity_error: e.ff.hermiticity_error(),
            interlayer_median_re_over_im: median(re_im),
            interlayer_median_im_over_re: median(im_re),
            interlayer_xy_norm: inter_norm(&xy),
            interlayer_dm_norm: inter_norm(&dm),
            warnings: e.warnings.clone(),
        });
    }
    dir.lap("exchange");
    dir.write_json("summary.json", &summaries)?;
    dir.finish()
}
