use std::path::Path;

use ionlayer::analysis::{ensemble_entropy, Binning, EntropyStats};
use ionlayer::basin::{equilibrate_ensemble, Ensemble, OptimizerConfig};
use ionlayer::config::{optimizer_from, species_from, trap_from, KeyValues, OPTIMIZER_KEYS, TRAP_KEYS};
use ionlayer::crystal::{classify_layers, z_histogram, CrystalState, Layer, LayerSummary};
use ionlayer::plot::{self, Figure, Series};
use ionlayer::trap::Trap;
use ionlayer::Error;
use serde::Serialize;

use crate::out::{load_config, Failure, OutDir};

/// Keys accepted next to the trap and optimizer settings.
pub const LAYER_KEYS: &[&str] = &["wavelength_nm", "gap_min_um"];

/// Display and entropy bins when no wavelength is configured, m.
const FALLBACK_BINS: Binning = Binning { display: 0.5e-6, entropy: 0.05e-6, gap_min: 0.9e-6 };

pub struct Setup {
    pub trap: Trap,
    pub optimizer: OptimizerConfig,
    pub binning: Binning,
    /// False when neither a wavelength nor a gap was configured.
    pub classify: bool,
}

pub fn setup(kv: &KeyValues, seed: Option<u64>) -> Result<Setup, Failure> {
    let stage = Failure::at;
    let trap = Trap::new(trap_from(kv).map_err(stage("reading trap"))?, species_from(kv).map_err(stage("reading trap"))?)
        .map_err(stage("deriving trap parameters"))?;
    let mut optimizer = optimizer_from(kv).map_err(stage("reading optimizer"))?;
    let configured = kv.u64("seed").map_err(stage("reading optimizer"))?;
    optimizer.seed = seed.or(configured).unwrap_or_else(crate::pick_seed_random);
    let wavelength = kv.f64("wavelength_nm").map_err(stage("reading config"))?.map(|v| v * 1e-9);
    let mut binning = wavelength.map(Binning::for_wavelength).unwrap_or(FALLBACK_BINS);
    let gap = kv.f64("gap_min_um").map_err(stage("reading config"))?;
    if let Some(g) = gap {
        binning.gap_min = g * 1e-6;
    }
    Ok(Setup { trap, optimizer, binning, classify: wavelength.is_some() || gap.is_some() })
}

#[derive(Serialize)]
pub struct LayerInfo {
    pub n_upper: usize,
    pub n_lower: usize,
    pub n_scaffold: usize,
    pub n_clusters: usize,
    pub z_upper_um: f64,
    pub z_lower_um: f64,
    pub separation_um: f64,
}

impl From<&LayerSummary> for LayerInfo {
    fn from(s: &LayerSummary) -> Self {
        Self {
            n_upper: s.n_upper,
            n_lower: s.n_lower,
            n_scaffold: s.n_scaffold,
            n_clusters: s.n_clusters,
            z_upper_um: s.z_upper * 1e6,
            z_lower_um: s.z_lower * 1e6,
            separation_um: s.separation() * 1e6,
        }
    }
}

pub struct Point {
    pub ensemble: Ensemble,
    pub best: CrystalState,
    pub layers: Option<LayerInfo>,
    pub entropy: EntropyStats,
}

/// Runs the ensemble and labels the best crystal's layers when possible.
pub fn solve(s: &Setup) -> Result<Point, Failure> {
    let ensemble = equilibrate_ensemble(&s.trap, &s.optimizer).map_err(Failure::at("basin hopping"))?;
    let mut best = ensemble.best().clone();
    let mut layers = None;
    if s.classify {
        match classify_layers(&best, s.binning.gap_min) {
            Ok(summary) => {
                layers = Some(LayerInfo::from(&summary));
                best = best.with_layers(summary.labels).map_err(Failure::at("labelling layers"))?;
            }
            Err(Error::NotBilayer { clusters }) => log::info!("no bilayer: {clusters} z cluster(s)"),
            Err(e) => return Err(Failure::at("labelling layers")(e)),
        }
    }
    let entropy = ensemble_entropy(&ensemble, s.binning.entropy).map_err(Failure::at("entropy"))?;
    Ok(Point { ensemble, best, layers, entropy })
}

#[derive(Serialize)]
struct Summary<'a> {
    seed: u64,
    n_runs: usize,
    keep_lowest: usize,
    energy_scaled: f64,
    energy_j: f64,
    energy_std_scaled: f64,
    grad_norm: f64,
    entropy_mean: f64,
    entropy_std: f64,
    entropy_bin_um: f64,
    display_bin_um: f64,
    gap_min_um: f64,
    layers: &'a Option<LayerInfo>,
}

fn layer_colour(l: Option<Layer>) -> &'static str {
    match l {
        Some(Layer::Upper) => plot::PALETTE[1],
        Some(Layer::Lower) => plot::PALETTE[0],
        Some(Layer::Scaffold) => "#7f7f7f",
        None => plot::PALETTE[2],
    }
}

/// Side and top views, one series per layer.
pub fn views(state: &CrystalState, stamp: Option<String>) -> (String, String) {
    let p = state.positions_m();
    let labels: Vec<Option<Layer>> = (0..state.n_ions()).map(|j| state.layers.as_ref().map(|l| l[j])).collect();
    let mut groups: Vec<Option<Layer>> = vec![];
    for l in &labels {
        if !groups.contains(l) {
            groups.push(*l);
        }
    }
    let series = |a: usize, b: usize| -> Vec<Series> {
        groups
            .iter()
            .map(|g| {
                let idx: Vec<usize> = (0..state.n_ions()).filter(|&j| labels[j] == *g).collect();
                let name = g.map_or("ions", |l| match l {
                    Layer::Upper => "upper",
                    Layer::Lower => "lower",
                    Layer::Scaffold => "scaffold",
                });
                Series::new(
                    name,
                    idx.iter().map(|&j| p[3 * j + a] * 1e6).collect(),
                    idx.iter().map(|&j| p[3 * j + b] * 1e6).collect(),
                    layer_colour(*g),
                )
            })
            .collect()
    };
    let side = plot::scatter(&Figure::new("Side view", "x (um)", "z (um)").with_timestamp(stamp.clone()), &series(0, 2), None);
    let top = plot::scatter(&Figure::new("Top view", "x (um)", "y (um)").with_timestamp(stamp), &series(0, 1), None);
    (side, top)
}

pub fn ensemble_csv(e: &Ensemble) -> String {
    let mut s = String::from("rank,energy_scaled,energy_j,grad_norm,accepted,attempted,ncg_failures,final_alpha_x\n");
    for (rank, r) in e.runs.iter().enumerate() {
        s.push_str(&format!(
            "{rank},{:.10},{:.12e},{:.3e},{},{},{},{:.6}\n",
            r.state.energy,
            r.state.energy_j(),
            r.state.grad_norm,
            r.accepted,
            r.attempted,
            r.ncg_failures,
            r.final_alpha_x
        ));
    }
    s
}

pub fn run(config: &Path, out: &Path, seed: Option<u64>, reproducible: bool) -> Result<(), Failure> {
    let kv = load_config(config, &[TRAP_KEYS, OPTIMIZER_KEYS, LAYER_KEYS])?;
    let s = setup(&kv, seed)?;
    eprintln!("seed = {}", s.optimizer.seed);
    let mut dir = OutDir::create(out, "equilibrate", reproducible)?;
    dir.set_config(config);
    dir.add_seed(s.optimizer.seed);
    dir.lap("setup");
    let point = solve(&s)?;
    dir.lap("basin hopping");

    let best = &point.best;
    dir.write("crystal.json", &best.to_json().map_err(Failure::at("writing crystal"))?)?;
    dir.write("ensemble.csv", &ensemble_csv(&point.ensemble))?;
    let hist = z_histogram(best, s.binning.display, 0.0).map_err(Failure::at("histogram"))?;
    dir.write("z_histogram.csv", &hist.to_csv())?;
    let stamp = dir.stamp();
    let edges: Vec<f64> = hist.bin_edges.iter().map(|e| e * 1e6).collect();
    let counts: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    let fig = Figure::new("z histogram", "z (um)", "ions").with_timestamp(stamp.clone());
    dir.write("z_histogram.svg", &plot::histogram(&fig, &edges, &counts))?;
    let (side, top) = views(best, stamp);
    dir.write("side_view.svg", &side)?;
    dir.write("top_view.svg", &top)?;
    let summary = Summary {
        seed: s.optimizer.seed,
        n_runs: point.ensemble.runs.len(),
        keep_lowest: point.ensemble.kept().len(),
        energy_scaled: best.energy,
        energy_j: best.energy_j(),
        energy_std_scaled: point.ensemble.energy_std(),
        grad_norm: best.grad_norm,
        entropy_mean: point.entropy.mean,
        entropy_std: point.entropy.std,
        entropy_bin_um: s.binning.entropy * 1e6,
        display_bin_um: s.binning.display * 1e6,
        gap_min_um: s.binning.gap_min * 1e6,
        layers: &point.layers,
    };
    dir.write_json("summary.json", &summary)?;
    if let Some(l) = &point.layers {
        eprintln!(
            "layers: {} upper, {} lower, {} scaffold; separation {:.2} um",
            l.n_upper, l.n_lower, l.n_scaffold, l.separation_um
        );
    }
    dir.finish()
}
