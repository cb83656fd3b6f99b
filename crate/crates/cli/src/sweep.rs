use std::path::Path;

use ionlayer::analysis::{analyze_modes, resolve_drive};
use ionlayer::config::{Drive, OdfSpec, OPTIMIZER_KEYS, TRAP_KEYS};
use ionlayer::crystal::z_histogram;
use ionlayer::odf::{j_rel, two_tone_couplings};
use ionlayer::plot::{self, Figure, Series, PALETTE};

use crate::equilibrate::{self, LAYER_KEYS};
use crate::out::{load_config, Failure, OutDir};
use crate::spin::{load_crystal, load_odf};
use crate::SweepParam;

fn grid(from: f64, to: f64, points: usize) -> Result<Vec<f64>, Failure> {
    if points == 0 || !from.is_finite() || !to.is_finite() {
        return Err(Failure::usage("sweep needs finite bounds and at least one point".into()));
    }
    if points == 1 {
        return Ok(vec![from]);
    }
    Ok((0..points).map(|i| from + (to - from) * i as f64 / (points - 1) as f64).collect())
}

pub fn run(
    config: &Path,
    out: &Path,
    param: SweepParam,
    range: (f64, f64, usize),
    crystal: Option<&Path>,
    seed: Option<u64>,
    reproducible: bool,
) -> Result<(), Failure> {
    let values = grid(range.0, range.1, range.2)?;
    match param {
        SweepParam::C4 | SweepParam::OmegaR => trap_sweep(config, out, param, &values, seed, reproducible),
        SweepParam::F1Ratio => {
            let crystal = crystal.ok_or_else(|| Failure::usage("the f1-ratio sweep needs --crystal".into()))?;
            drive_sweep(config, crystal, out, &values, reproducible)
        }
    }
}

fn trap_sweep(config: &Path, out: &Path, param: SweepParam, values: &[f64], seed: Option<u64>, reproducible: bool) -> Result<(), Failure> {
    let mut kv = load_config(config, &[TRAP_KEYS, OPTIMIZER_KEYS, LAYER_KEYS])?;
    let key = if param == SweepParam::C4 { "c4" } else { "omega_r_hz" };
    // one master seed, fixed before the loop so every point is reproducible on its own
    let master = match seed {
        Some(s) => s,
        None => kv.u64("seed").map_err(Failure::at("reading optimizer"))?.unwrap_or_else(crate::pick_seed_random),
    };
    eprintln!("seed = {master}");
    let mut dir = OutDir::create(out, "sweep", reproducible)?;
    dir.set_config(config);
    let mut csv = String::from(
        "index,value,entropy_mean,entropy_std,energy_min,energy_std,n_clusters,n_upper,n_lower,n_scaffold,separation_um,histogram_peaks\n",
    );
    let (mut xs, mut ys) = (vec![], vec![]);
    for (i, &v) in values.iter().enumerate() {
        kv.insert(key, v);
        let point_seed = master.wrapping_add(i as u64);
        let s = equilibrate::setup(&kv, Some(point_seed))?;
        dir.add_seed(point_seed);
        let p = equilibrate::solve(&s)?;
        let hist = z_histogram(&p.best, s.binning.display, 0.0).map_err(Failure::at("histogram"))?;
        let sub = format!("point_{i:03}");
        dir.write(&format!("{sub}/crystal.json"), &p.best.to_json().map_err(Failure::at("writing crystal"))?)?;
        dir.write(&format!("{sub}/z_histogram.csv"), &hist.to_csv())?;
        let l = p.layers.as_ref();
        let opt = |f: &dyn Fn(&equilibrate::LayerInfo) -> String| l.map_or(String::new(), f);
        csv.push_str(&format!(
            "{i},{v},{:.8},{:.8},{:.10},{:.3e},{},{},{},{},{},{}\n",
            p.entropy.mean,
            p.entropy.std,
            p.best.energy,
            p.ensemble.energy_std(),
            opt(&|x| x.n_clusters.to_string()),
            opt(&|x| x.n_upper.to_string()),
            opt(&|x| x.n_lower.to_string()),
            opt(&|x| x.n_scaffold.to_string()),
            opt(&|x| format!("{:.4}", x.separation_um)),
            hist.peak_count(3),
        ));
        xs.push(v);
        ys.push(p.entropy.mean);
        dir.lap(&format!("point {i}"));
        eprintln!("{key} = {v}: entropy {:.4} +/- {:.4}", p.entropy.mean, p.entropy.std);
    }
    dir.write("sweep.csv", &csv)?;
    let fig = Figure::new("Entropy of the z distribution", key, "S").with_timestamp(dir.stamp());
    dir.write("sweep.svg", &plot::lines(&fig, &[Series::new("entropy", xs, ys, PALETTE[0])]))?;
    dir.finish()
}

fn drive_sweep(config: &Path, crystal: &Path, out: &Path, ratios: &[f64], reproducible: bool) -> Result<(), Failure> {
    if ratios.iter().any(|&r| r < 0.0) {
        return Err(Failure::usage("F1^2/F0^2 must be non-negative".into()));
    }
    let state = load_crystal(crystal)?;
    let base = load_odf(config)?;
    let labels = state.layers().map_err(Failure::at("reading crystal"))?.to_vec();
    let mut dir = OutDir::create(out, "sweep", reproducible)?;
    dir.set_config(config);
    dir.add_input(crystal);
    let a = analyze_modes(&state).map_err(Failure::at("normal modes"))?;
    let single = resolve_drive(&OdfSpec { tone1: None, ..base.clone() }, &state, &a).map_err(Failure::at("resolving drive"))?;
    let delta = single.detuning.abs();
    dir.lap("setup");
    let phase = base.tone1.map_or(0.0, |t| t.2);
    let mut csv = String::from("f1_sq_over_f0_sq,j_rel_same_sign,j_rel_opposite_sign\n");
    let mut curves = [vec![], vec![]];
    for &r in ratios {
        let mut row = [0.0; 2];
        for (c, sign) in [1.0, -1.0].into_iter().enumerate() {
            let spec = OdfSpec { tone1: Some((base.force * r.sqrt(), Drive::Detuning(sign * delta), phase)), ..base.clone() };
            let d = resolve_drive(&spec, &state, &a).map_err(Failure::at("resolving drive"))?;
            let tt = two_tone_couplings(&a.modes, &a.metrics, &d.phases, &d.odf, &a.special, d.tau).map_err(Failure::at("two-tone couplings"))?;
            row[c] = j_rel(&tt.theta, &labels).map_err(Failure::at("J_rel"))?;
            curves[c].push(row[c].log10());
        }
        csv.push_str(&format!("{r},{:.9e},{:.9e}\n", row[0], row[1]));
    }
    dir.lap("sweep");
    dir.write("sweep.csv", &csv)?;
    let fig = Figure::new("Interlayer to intralayer coupling", "F1^2/F0^2", "log10 J_rel").with_timestamp(dir.stamp());
    let series = [
        Series::new("cm+bre", ratios.to_vec(), curves[0].clone(), PALETTE[0]),
        Series::new("cm-bre", ratios.to_vec(), curves[1].clone(), PALETTE[1]),
    ];
    dir.write("sweep.svg", &plot::lines(&fig, &series))?;
    dir.finish()
}
