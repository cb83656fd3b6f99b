//! Crystal states, their JSON form, z histograms and layer detection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::TWO_PI;
use crate::error::{Error, Result};
use crate::trap::{IonSpecies, Trap, TrapConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layer {
    #[serde(rename = "U")]
    Upper,
    #[serde(rename = "L")]
    Lower,
    #[serde(rename = "S")]
    Scaffold,
}

impl Layer {
    /// +1 for the upper layer, -1 for the lower, 0 for scaffold ions.
    pub fn sign(self) -> f64 {
        match self {
            Layer::Upper => 1.0,
            Layer::Lower => -1.0,
            Layer::Scaffold => 0.0,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Layer::Upper => "U",
            Layer::Lower => "L",
            Layer::Scaffold => "S",
        }
    }
}

/// An ion configuration, normally a local minimum of the potential.
///
/// Positions are stored in units of `l0` and ordered `x1, y1, z1, x2, ...`;
/// the energy is in units of `E0`.
#[derive(Clone, Debug, PartialEq)]
pub struct CrystalState {
    pub trap: Trap,
    pub positions: Vec<f64>,
    pub energy: f64,
    pub grad_norm: f64,
    pub seed: Option<u64>,
    pub layers: Option<Vec<Layer>>,
}

impl CrystalState {
    /// Wraps scaled coordinates and evaluates their energy and gradient.
    pub fn from_scaled(trap: Trap, positions: Vec<f64>, seed: Option<u64>) -> Result<Self> {
        if positions.len() != 3 * trap.n_ions() {
            return Err(Error::Shape(format!(
                "{} coordinates for {} ions",
                positions.len(),
                trap.n_ions()
            )));
        }
        let pot = trap.scaled();
        let energy = pot.energy(&positions)?;
        let grad_norm = crate::minimize::max_abs(&pot.gradient(&positions)?);
        Ok(Self { trap, positions, energy, grad_norm, seed, layers: None })
    }

    pub fn from_meters(trap: Trap, positions_m: &[f64], seed: Option<u64>) -> Result<Self> {
        let l0 = trap.derived.l0;
        Self::from_scaled(trap, positions_m.iter().map(|p| p / l0).collect(), seed)
    }

    pub fn n_ions(&self) -> usize {
        self.positions.len() / 3
    }

    pub fn positions_m(&self) -> Vec<f64> {
        let l0 = self.trap.derived.l0;
        self.positions.iter().map(|p| p * l0).collect()
    }

    pub fn energy_j(&self) -> f64 {
        self.energy * self.trap.derived.e0
    }

    /// Axial coordinate of ion `j` in meters.
    pub fn z_m(&self, j: usize) -> f64 {
        self.positions[3 * j + 2] * self.trap.derived.l0
    }

    pub fn z_values_m(&self) -> Vec<f64> {
        (0..self.n_ions()).map(|j| self.z_m(j)).collect()
    }

    pub fn with_layers(mut self, layers: Vec<Layer>) -> Result<Self> {
        if layers.len() != self.n_ions() {
            return Err(Error::Shape("one layer label per ion is required".into()));
        }
        self.layers = Some(layers);
        Ok(self)
    }

    pub fn layers(&self) -> Result<&[Layer]> {
        self.layers.as_deref().ok_or(Error::MissingLayers)
    }

    pub fn to_json(&self) -> Result<String> {
        let c = &self.trap.config;
        let d = &self.trap.derived;
        let file = CrystalFile {
            meta: CrystalMeta {
                bz_tesla: c.bz,
                omega_z_hz: c.omega_z / TWO_PI,
                omega_r_hz: c.omega_r / TWO_PI,
                delta_wall: c.delta_wall,
                c4: c.c4,
                n_ions: c.n_ions,
                species: self.trap.species.name.clone(),
                mass_kg: self.trap.species.mass,
                charge_c: self.trap.species.charge,
                seed: self.seed,
                units: Units { positions: "um".into(), energy: "J".into() },
                l0_m: d.l0,
                e0_j: d.e0,
                grad_norm: self.grad_norm,
            },
            energy_j: self.energy_j(),
            positions_um: (0..self.n_ions())
                .map(|j| {
                    let p = &self.positions[3 * j..3 * j + 3];
                    [round_um(p[0] * d.l0), round_um(p[1] * d.l0), round_um(p[2] * d.l0)]
                })
                .collect(),
            layers: self.layers.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)? + "\n")
    }

    /// Parses the JSON form. The energy is re-evaluated from the stored
    /// positions so it is exactly consistent with them.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: CrystalFile = serde_json::from_str(text)?;
        let m = file.meta;
        let species = IonSpecies::new(m.species, m.mass_kg, m.charge_c)?;
        let config = TrapConfig {
            bz: m.bz_tesla,
            omega_z: TWO_PI * m.omega_z_hz,
            omega_r: TWO_PI * m.omega_r_hz,
            delta_wall: m.delta_wall,
            c4: m.c4,
            n_ions: m.n_ions,
        };
        let trap = Trap::new(config, species)?;
        if file.positions_um.len() != trap.n_ions() {
            return Err(Error::Shape(format!(
                "meta says {} ions but {} positions are listed",
                trap.n_ions(),
                file.positions_um.len()
            )));
        }
        let l0 = trap.derived.l0;
        let positions = file.positions_um.iter().flatten().map(|v| v * 1e-6 / l0).collect();
        let state = Self::from_scaled(trap, positions, m.seed)?;
        match file.layers {
            Some(l) => state.with_layers(l),
            None => Ok(state),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn round_um(meters: f64) -> f64 {
    (meters * 1e12).round() / 1e6
}

#[derive(Serialize, Deserialize)]
struct Units {
    positions: String,
    energy: String,
}

#[derive(Serialize, Deserialize)]
struct CrystalMeta {
    bz_tesla: f64,
    omega_z_hz: f64,
    omega_r_hz: f64,
    delta_wall: f64,
    c4: f64,
    n_ions: usize,
    species: String,
    mass_kg: f64,
    charge_c: f64,
    seed: Option<u64>,
    units: Units,
    l0_m: f64,
    e0_j: f64,
    grad_norm: f64,
}

#[derive(Serialize, Deserialize)]
struct CrystalFile {
    meta: CrystalMeta,
    energy_j: f64,
    positions_um: Vec<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    layers: Option<Vec<Layer>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZHistogram {
    /// m
    pub bin_width: f64,
    /// m, one more than the number of bins
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub fractions: Vec<f64>,
}

impl ZHistogram {
    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_center_um,count,fraction\n");
        for ((c, n), f) in self.bin_centers().iter().zip(&self.counts).zip(&self.fractions) {
            s.push_str(&format!("{:.6},{},{:.9}\n", c * 1e6, n, f));
        }
        s
    }

    /// Number of strict local maxima of the counts, ignoring empty stretches
    /// between occupied runs.
    pub fn peak_count(&self, min_count: usize) -> usize {
        let c = &self.counts;
        let mut peaks = 0;
        let mut i = 0;
        while i < c.len() {
            if c[i] < min_count {
                i += 1;
                continue;
            }
            // plateau [i, j)
            let mut j = i;
            while j < c.len() && c[j] == c[i] {
                j += 1;
            }
            let left = if i == 0 { 0 } else { c[i - 1] };
            let right = if j == c.len() { 0 } else { c[j] };
            if left < c[i] && right < c[i] {
                peaks += 1;
            }
            i = j;
        }
        peaks
    }
}

/// Histogram of axial positions with fixed-width bins. The first edge sits
/// `edge_offset` (m) below the lowest ion.
pub fn z_histogram(state: &CrystalState, bin_width: f64, edge_offset: f64) -> Result<ZHistogram> {
    histogram_of(&state.z_values_m(), bin_width, edge_offset)
}

pub fn histogram_of(z: &[f64], bin_width: f64, edge_offset: f64) -> Result<ZHistogram> {
    if !(bin_width > 0.0) {
        return Err(Error::InvalidConfig("bin width must be positive".into()));
    }
    if z.is_empty() {
        return Err(Error::Shape("no ions".into()));
    }
    let zmin = z.iter().cloned().fold(f64::INFINITY, f64::min);
    let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let start = zmin - edge_offset.rem_euclid(bin_width);
    let nbins = ((zmax - start) / bin_width).floor() as usize + 1;
    let mut counts = vec![0usize; nbins];
    for &v in z {
        let k = (((v - start) / bin_width).floor() as usize).min(nbins - 1);
        counts[k] += 1;
    }
    let total = z.len() as f64;
    Ok(ZHistogram {
        bin_width,
        bin_edges: (0..=nbins).map(|k| start + k as f64 * bin_width).collect(),
        fractions: counts.iter().map(|&c| c as f64 / total).collect(),
        counts,
    })
}

/// Shannon entropy of the histogram fractions, with 0 ln 0 = 0.
pub fn entropy(hist: &ZHistogram) -> f64 {
    -hist
        .fractions
        .iter()
        .filter(|&&f| f > 0.0)
        .map(|f| f * f.ln())
        .sum::<f64>()
}

/// Period of the ODF lattice along z, `lambda / (2 sin theta)`.
pub fn odf_lattice_period(laser_wavelength: f64, theta: f64) -> f64 {
    laser_wavelength / (2.0 * theta.sin())
}

/// Default minimum gap separating layers: a tenth of the ODF lattice period
/// at a 1 degree beam angle.
pub fn default_gap_min(laser_wavelength: f64) -> f64 {
    odf_lattice_period(laser_wavelength, 1f64.to_radians()) / 10.0
}

/// A group of ions whose sorted z values have no gap larger than `gap_min`.
#[derive(Clone, Debug, PartialEq)]
pub struct ZCluster {
    pub members: Vec<usize>,
    /// m
    pub mean_z: f64,
    pub min_z: f64,
    pub max_z: f64,
}

pub fn z_clusters(state: &CrystalState, gap_min: f64) -> Vec<ZCluster> {
    let z = state.z_values_m();
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));
    let mut out = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    for &i in &order {
        if let Some(&last) = cur.last() {
            if z[i] - z[last] > gap_min {
                out.push(std::mem::take(&mut cur));
            }
        }
        cur.push(i);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out.into_iter()
        .map(|mut members| {
            let zs: Vec<f64> = members.iter().map(|&i| z[i]).collect();
            let mean_z = zs.iter().sum::<f64>() / zs.len() as f64;
            let min_z = zs[0];
            let max_z = *zs.last().unwrap();
            members.sort_unstable();
            ZCluster { members, mean_z, min_z, max_z }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSummary {
    pub labels: Vec<Layer>,
    pub n_upper: usize,
    pub n_lower: usize,
    pub n_scaffold: usize,
    /// Mean height of the upper layer, m.
    pub z_upper: f64,
    /// Mean height of the lower layer, m.
    pub z_lower: f64,
    pub n_clusters: usize,
}

impl LayerSummary {
    pub fn separation(&self) -> f64 {
        self.z_upper - self.z_lower
    }
}

/// Splits the crystal into upper and lower layers plus scaffold ions.
///
/// Sorted z values are cut at every gap wider than `gap_min`. The two most
/// populated clusters become the layers and every other ion is scaffold.
pub fn classify_layers(state: &CrystalState, gap_min: f64) -> Result<LayerSummary> {
    let clusters = z_clusters(state, gap_min);
    if clusters.len() < 2 {
        return Err(Error::NotBilayer { clusters: clusters.len() });
    }
    let mut by_size: Vec<usize> = (0..clusters.len()).collect();
    by_size.sort_by(|&a, &b| {
        clusters[b].members.len().cmp(&clusters[a].members.len()).then(a.cmp(&b))
    });
    let (a, b) = (&clusters[by_size[0]], &clusters[by_size[1]]);
    let (up, lo) = if a.mean_z > b.mean_z { (a, b) } else { (b, a) };
    let mut labels = vec![Layer::Scaffold; state.n_ions()];
    for &i in &up.members {
        labels[i] = Layer::Upper;
    }
    for &i in &lo.members {
        labels[i] = Layer::Lower;
    }
    Ok(LayerSummary {
        n_upper: up.members.len(),
        n_lower: lo.members.len(),
        n_scaffold: state.n_ions() - up.members.len() - lo.members.len(),
        z_upper: up.mean_z,
        z_lower: lo.mean_z,
        n_clusters: clusters.len(),
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trap(n: usize) -> Trap {
        Trap::new(TrapConfig::bilayer_base(n, 210e3, 0.0), IonSpecies::beryllium9()).unwrap()
    }

    fn state(pos: Vec<f64>) -> CrystalState {
        CrystalState::from_scaled(trap(pos.len() / 3), pos, Some(3)).unwrap()
    }

    #[test]
    fn coplanar_single_bin_zero_entropy() {
        let s = state(vec![0.0, 0.0, 0.2, 1.0, 0.0, 0.2, 0.0, 1.0, 0.2]);
        let h = z_histogram(&s, 1e-7, 0.0).unwrap();
        assert_eq!(h.counts, vec![3]);
        assert_eq!(entropy(&h), 0.0);
    }

    #[test]
    fn uniform_entropy_is_log_k() {
        let z: Vec<f64> = (0..6).map(|k| k as f64 * 1e-6 + 0.5e-6).collect();
        let h = histogram_of(&z, 1e-6, 0.5e-6).unwrap();
        let occupied = h.counts.iter().filter(|&&c| c > 0).count();
        assert_eq!(occupied, 6);
        assert!((entropy(&h) - 6f64.ln()).abs() < 1e-12);
        assert!((h.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(h.counts.iter().sum::<usize>(), 6);
    }

    #[test]
    fn bad_bin_width() {
        assert!(histogram_of(&[0.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn two_planes_have_no_scaffold() {
        let mut pos = Vec::new();
        for k in 0..4 {
            pos.extend([k as f64, 0.0, 0.8]);
            pos.extend([k as f64 + 0.5, 0.3, -0.8]);
        }
        let s = state(pos);
        let sum = classify_layers(&s, 1e-6).unwrap();
        assert_eq!((sum.n_upper, sum.n_lower, sum.n_scaffold), (4, 4, 0));
        assert!(sum.z_upper > sum.z_lower);
        assert_eq!(sum.labels[0], Layer::Upper);
        assert_eq!(sum.labels[1], Layer::Lower);
    }

    #[test]
    fn one_plane_is_not_a_bilayer() {
        let s = state(vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(classify_layers(&s, 1e-6), Err(Error::NotBilayer { clusters: 1 })));
    }

    #[test]
    fn json_round_trip() {
        let s = state(vec![0.1234567, -0.5, 0.25, 1.0, 0.75, -0.3])
            .with_layers(vec![Layer::Upper, Layer::Lower])
            .unwrap();
        let text = s.to_json().unwrap();
        let back = CrystalState::from_json(&text).unwrap();
        assert_eq!(back.layers, s.layers);
        assert_eq!(back.seed, Some(3));
        for (a, b) in back.positions_m().iter().zip(s.positions_m()) {
            assert!((a - b).abs() <= 0.6e-12);
        }
        let again = back.to_json().unwrap();
        assert_eq!(CrystalState::from_json(&again).unwrap().to_json().unwrap(), again);
    }

    #[test]
    fn peak_counting() {
        let h = ZHistogram {
            bin_width: 1.0,
            bin_edges: (0..=7).map(f64::from).collect(),
            counts: vec![5, 1, 0, 7, 7, 0, 3],
            fractions: vec![0.0; 7],
        };
        assert_eq!(h.peak_count(1), 3);
        assert_eq!(h.peak_count(4), 2);
    }
}
