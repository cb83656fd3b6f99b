//! Browser front end: equilibrate a small crystal, show its mode spectrum and
//! the Ising coupling matrix of a single ODF tone. Every call returns a JSON
//! string holding ready-to-insert SVG plus a few numbers.

use ionlayer::analysis::{analyze_modes, resolve_drive, Binning, ModeAnalysis};
use ionlayer::basin::{equilibrate_ensemble, OptimizerConfig};
use ionlayer::config::{CoupleModes, Drive, ModeTarget, OdfSpec};
use ionlayer::crystal::{classify_layers, CrystalState, Layer};
use ionlayer::modes::Branch;
use ionlayer::odf::{ising_couplings, j_rel};
use ionlayer::plot::{self, Figure, Series, PALETTE};
use ionlayer::trap::{IonSpecies, Trap, TrapConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const WAVELENGTH: f64 = 313e-9;

/// Upper bound on the ion number; larger crystals take too long in a page.
pub const MAX_IONS: usize = 150;

#[derive(Serialize)]
struct CrystalView {
    n_ions: usize,
    energy: f64,
    n_upper: usize,
    n_lower: usize,
    n_scaffold: usize,
    separation_um: Option<f64>,
    side_svg: String,
    top_svg: String,
}

#[derive(Serialize)]
struct SpectrumView {
    n_modes: usize,
    cm_khz: f64,
    breathing_khz: Option<f64>,
    svg: String,
}

#[derive(Serialize)]
struct CouplingView {
    theta_deg: f64,
    phi_deg: Option<f64>,
    j_rel: Option<f64>,
    max_j_hz: f64,
    svg: String,
}

fn err(e: impl ToString) -> String {
    e.to_string()
}

fn layer_of(state: &CrystalState, j: usize) -> Option<Layer> {
    state.layers.as_ref().map(|l| l[j])
}

fn group_name(l: Option<Layer>) -> (&'static str, &'static str) {
    match l {
        Some(Layer::Upper) => ("upper", PALETTE[1]),
        Some(Layer::Lower) => ("lower", PALETTE[0]),
        Some(Layer::Scaffold) => ("scaffold", "#7f7f7f"),
        None => ("ions", PALETTE[2]),
    }
}

fn view(state: &CrystalState, a: usize, b: usize, title: &str, xl: &str, yl: &str) -> String {
    let p = state.positions_m();
    let groups = [Some(Layer::Upper), Some(Layer::Lower), Some(Layer::Scaffold), None];
    let series: Vec<Series> = groups
        .iter()
        .filter_map(|&g| {
            let idx: Vec<usize> = (0..state.n_ions()).filter(|&j| layer_of(state, j) == g).collect();
            if idx.is_empty() {
                return None;
            }
            let (name, colour) = group_name(g);
            Some(Series::new(
                name,
                idx.iter().map(|&j| p[3 * j + a] * 1e6).collect(),
                idx.iter().map(|&j| p[3 * j + b] * 1e6).collect(),
                colour,
            ))
        })
        .collect();
    plot::scatter(&Figure::new(title, xl, yl), &series, None)
}

/// Holds the current crystal and its modes between calls.
#[wasm_bindgen]
#[derive(Default)]
pub struct Demo {
    state: Option<CrystalState>,
    analysis: Option<ModeAnalysis>,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Demo {
        Demo::default()
    }

    /// Basin-hops a crystal in the bilayer trap at rotation `fr_khz` and
    /// quartic strength `c4`, then labels layers when there are two.
    pub fn equilibrate(&mut self, n_ions: usize, fr_khz: f64, c4: f64, seed: u64) -> Result<String, String> {
        if !(2..=MAX_IONS).contains(&n_ions) {
            return Err(format!("ion number must be between 2 and {MAX_IONS}"));
        }
        let trap = Trap::new(TrapConfig::bilayer_base(n_ions, fr_khz * 1e3, c4), IonSpecies::beryllium9()).map_err(err)?;
        let opt = OptimizerConfig { n_runs: 4, keep_lowest: 1, n_steps: 10, seed, ..OptimizerConfig::default() };
        let mut best = equilibrate_ensemble(&trap, &opt).map_err(err)?.best().clone();
        let layers = classify_layers(&best, Binning::for_wavelength(WAVELENGTH).gap_min).ok();
        if let Some(s) = &layers {
            best = best.with_layers(s.labels.clone()).map_err(err)?;
        }
        let v = CrystalView {
            n_ions,
            energy: best.energy,
            n_upper: layers.as_ref().map_or(0, |s| s.n_upper),
            n_lower: layers.as_ref().map_or(0, |s| s.n_lower),
            n_scaffold: layers.as_ref().map_or(n_ions, |s| s.n_scaffold),
            separation_um: layers.as_ref().map(|s| s.separation() * 1e6),
            side_svg: view(&best, 0, 2, "Side view", "x (um)", "z (um)"),
            top_svg: view(&best, 0, 1, "Top view", "x (um)", "y (um)"),
        };
        self.state = Some(best);
        self.analysis = None;
        serde_json::to_string(&v).map_err(err)
    }

    /// Normal-mode frequencies of the current crystal, one series per branch.
    pub fn spectrum(&mut self) -> Result<String, String> {
        let a = self.modes()?;
        let ms = &a.modes;
        let series: Vec<Series> = [(Branch::ExB, "ExB"), (Branch::Drumhead, "drumhead"), (Branch::Cyclotron, "cyclotron")]
            .iter()
            .enumerate()
            .map(|(i, &(b, name))| {
                let idx = ms.branch_indices(b);
                Series::new(
                    name,
                    idx.iter().map(|&n| n as f64).collect(),
                    idx.iter().map(|&n| (ms.modes[n].freq_hz() * 1e-3).max(1e-3).log10()).collect(),
                    PALETTE[i],
                )
            })
            .collect();
        let sp = &a.special;
        let v = SpectrumView {
            n_modes: ms.len(),
            cm_khz: ms.modes[sp.center_of_mass].freq_hz() * 1e-3,
            breathing_khz: sp.breathing.map(|b| ms.modes[b].freq_hz() * 1e-3),
            svg: plot::scatter(&Figure::new("Mode spectrum", "mode index", "log10 f (kHz)"), &series, None),
        };
        serde_json::to_string(&v).map_err(err)
    }

    /// Ising couplings `J_jk` for one tone detuned by `detuning_khz` from the
    /// c.m. mode. Bilayers are driven at interlayer phase `phi_deg`; other
    /// crystals at a 1 degree beam angle.
    pub fn couplings(&mut self, phi_deg: f64, detuning_khz: f64, force: f64) -> Result<String, String> {
        self.modes()?;
        let (state, a) = (self.state.as_ref().unwrap(), self.analysis.as_ref().unwrap());
        let layered = state.layers.is_some();
        let spec = OdfSpec {
            wavelength: WAVELENGTH,
            theta: (!layered).then(|| 1f64.to_radians()),
            phi_target: layered.then(|| phi_deg.to_radians()),
            force,
            tone0: Drive::Detuning(std::f64::consts::TAU * detuning_khz * 1e3),
            tone1: None,
            target_mode: Some(ModeTarget::CenterOfMass),
            tau: None,
            b0: None,
            temperature: None,
            couple_modes: CoupleModes::Drumhead,
        };
        let d = resolve_drive(&spec, state, a).map_err(err)?;
        let theta = ising_couplings(&a.modes, &a.metrics, &d.phases, &d.odf, d.tau, &d.selection).map_err(err)?;
        let n = theta.n;
        let order: Vec<usize> = match &state.layers {
            Some(l) => [Layer::Upper, Layer::Lower, Layer::Scaffold]
                .iter()
                .flat_map(|g| (0..n).filter(move |&j| l[j] == *g))
                .collect(),
            None => (0..n).collect(),
        };
        let hz = 1.0 / (d.tau * std::f64::consts::TAU);
        let mut data = vec![0.0; n * n];
        for (r, &j) in order.iter().enumerate() {
            for (c, &k) in order.iter().enumerate() {
                data[r * n + c] = theta.real(j, k) * hz;
            }
        }
        let v = CouplingView {
            theta_deg: d.theta.to_degrees(),
            phi_deg: d.phi.map(f64::to_degrees),
            j_rel: state.layers.as_deref().map(|l| j_rel(&theta, l)).transpose().map_err(err)?,
            max_j_hz: data.iter().map(|v| v.abs()).fold(0.0, f64::max),
            svg: plot::heatmap(&Figure::new("J_jk / 2pi (Hz), ions ordered by layer", "ion", "ion"), n, &data),
        };
        serde_json::to_string(&v).map_err(err)
    }
}

impl Demo {
    fn modes(&mut self) -> Result<&ModeAnalysis, String> {
        let state = self.state.as_ref().ok_or("find a crystal first")?;
        if self.analysis.is_none() {
            self.analysis = Some(analyze_modes(state).map_err(err)?);
        }
        Ok(self.analysis.as_ref().unwrap())
    }
}
