//! End-to-end acceptance run. Prints one line per criterion and exits non-zero
//! only when a criterion outside `KNOWN_RED` fails.
//!
//! `ILF_ACCEPTANCE=full` switches on the full entropy sweep and the trilayer
//! run, which take hours on one core. `ILF_ACCEPTANCE_ONLY=4,8` runs a subset.

mod common;

use std::path::{Path, PathBuf};
use std::time::Instant;

use ionlayer::analysis::{analyze_modes, ensemble_entropy, resolve_drive, Binning, ModeAnalysis};
use ionlayer::basin::equilibrate_ensemble;
use ionlayer::config::{odf_from, optimizer_from, species_from, trap_from, Drive, KeyValues, OdfSpec};
use ionlayer::constants::TWO_PI;
use ionlayer::crystal::{classify_layers, z_clusters, z_histogram, CrystalState, Layer};
use ionlayer::modes::{commutation_sum_check, Branch};
use ionlayer::odf::{exchange_couplings, ising_couplings, j_rel, tipping_exact, two_tone_couplings, CouplingMatrix};
use ionlayer::thermal::{lamb_dicke, z_variance, ThermalSpec};
use ionlayer::trap::{derive_parameters, IonSpecies, Trap, TrapConfig};
use rand::{Rng, SeedableRng};

/// Criteria that are reported red with the current model. The reasons are
/// written up in the project notes; an unexpected pass is also reported.
const KNOWN_RED: &[u8] = &[9, 11];

type Outcome = Result<(bool, String), String>;
type Check<'a> = (u8, &'static str, Box<dyn Fn() -> Outcome + 'a>);

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> CrystalState {
    CrystalState::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)).expect("fixture")
}

fn conf(name: &str) -> KeyValues {
    KeyValues::load(&root().join("configs").join(name)).expect("config")
}

fn odf(name: &str) -> OdfSpec {
    odf_from(&conf(name)).expect("odf config")
}

fn within(v: f64, target: f64, rel: f64) -> bool {
    (v - target).abs() <= rel * target.abs()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn full_mode() -> bool {
    std::env::var("ILF_ACCEPTANCE").is_ok_and(|v| v == "full")
}

fn derived_parameters() -> Outcome {
    let be = IonSpecies::beryllium9();
    let d = derive_parameters(&TrapConfig::bilayer_base(200, 210e3, 0.0), &be).map_err(|e| e.to_string())?;
    let fc = d.omega_c / TWO_PI / 1e6;
    let mut ok = (fc - 7.5973).abs() <= 0.0005 && (d.beta_c - 0.047).abs() <= 0.001;
    let mut msg = format!("wc/2pi {fc:.5} MHz, beta_c {:.4}", d.beta_c);
    for (fr, want) in [(180e3, 0.186), (200e3, 1.355), (210e3, 1.938), (220e3, 2.518)] {
        let r = derive_parameters(&TrapConfig::bilayer_base(200, fr, 0.0), &be).map_err(|e| e.to_string())?.beta_ratio;
        ok &= (r - want).abs() <= 0.01;
        msg += &format!(", {:.0} kHz {r:.3}", fr / 1e3);
    }
    Ok((ok, msg))
}

/// Two z-clusters means two planar sheets: clusters that hold at least a
/// tenth of the ions and whose z spread is under a tenth of the layer
/// separation. The scaffold ring at the rim is spread across the gap and so
/// never counts, even when it forms a single cluster.
fn sheets(state: &CrystalState, gap_min: f64, separation: f64) -> usize {
    z_clusters(state, gap_min)
        .iter()
        .filter(|c| {
            let z: Vec<f64> = c.members.iter().map(|&j| state.z_m(j)).collect();
            let mean = z.iter().sum::<f64>() / z.len() as f64;
            let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64).sqrt();
            c.members.len() * 10 >= state.n_ions() && sd < 0.1 * separation
        })
        .count()
}

fn setup(kv: &KeyValues) -> Result<(Trap, ionlayer::basin::OptimizerConfig), String> {
    let trap = Trap::new(trap_from(kv).map_err(|e| e.to_string())?, species_from(kv).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    Ok((trap, optimizer_from(kv).map_err(|e| e.to_string())?))
}

fn bilayer_formation() -> Outcome {
    let mut kv = conf("bilayer.conf");
    kv.insert("n_runs", 50);
    kv.insert("keep_lowest", 10);
    let (trap, opt) = setup(&kv)?;
    let ens = equilibrate_ensemble(&trap, &opt).map_err(|e| e.to_string())?;
    let best = ens.best();
    let bins = Binning::for_wavelength(313e-9);
    let s = classify_layers(best, bins.gap_min).map_err(|e| e.to_string())?;
    let layered = s.n_upper + s.n_lower;
    let sep = s.separation() * 1e6;
    let major = sheets(best, bins.gap_min, s.separation());
    let ok = major == 2 && layered.abs_diff(164) <= 8 && s.n_scaffold.abs_diff(36) <= 8 && (8.0..=12.0).contains(&sep);
    Ok((ok, format!("{major} planar z-clusters, {layered} in layers ({}/{}), {} scaffold, separation {sep:.2} um", s.n_upper, s.n_lower, s.n_scaffold)))
}

fn entropy_sweep() -> Outcome {
    let mut kv = conf("bilayer.conf");
    let (points, runs, keep) = if full_mode() { (16, 50, 10) } else { (8, 10, 5) };
    kv.insert("n_runs", runs);
    kv.insert("keep_lowest", keep);
    let (lo, hi) = (1.45, 1.85);
    let bins = Binning::for_wavelength(313e-9);
    let mut curve = Vec::new();
    for i in 0..points {
        let c4 = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        kv.insert("c4", c4);
        kv.insert("seed", 1 + i);
        let (trap, opt) = setup(&kv)?;
        let ens = equilibrate_ensemble(&trap, &opt).map_err(|e| e.to_string())?;
        let s = ensemble_entropy(&ens, bins.entropy).map_err(|e| e.to_string())?;
        curve.push((c4, s.mean));
    }
    let &(best, s_min) = curve.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let ok = (1.5..=1.8).contains(&best);
    let label = if full_mode() { "full" } else { "reduced" };
    Ok((ok, format!("{label} sweep ({points} points, {runs} runs keep {keep}): minimum {s_min:.3} at C4 = {best:.3}")))
}

fn mode_spectrum(a: &ModeAnalysis) -> Outcome {
    let ms = &a.modes;
    let sizes = [Branch::ExB, Branch::Drumhead, Branch::Cyclotron].map(|b| ms.branch_indices(b).len());
    let sp = &a.special;
    let positive = ms.modes.iter().all(|m| m.omega > 0.0);
    let d = sp.cm_to_breathing_hz.unwrap_or(f64::NAN) / 1e3;
    let bg = sp.breathing_gap_hz.unwrap_or(f64::NAN) / 1e3;
    let cg = sp.cm_gap_hz / 1e3;
    let ok = ms.len() == 600
        && positive
        && sizes == [200, 200, 200]
        && sp.breathing == Some(sp.top_drumhead)
        && within(d, 154.0, 0.10)
        && within(bg, 50.0, 0.20)
        && within(cg, 15.0, 0.30);
    Ok((
        ok,
        format!(
            "{} modes {sizes:?}, breathing {:?} top drumhead {}, bre-cm {d:.1} kHz, breathing gap {bg:.2} kHz, cm gap {cg:.2} kHz",
            ms.len(),
            sp.breathing,
            sp.top_drumhead
        ),
    ))
}

fn mode_metrics(mono: &ModeAnalysis, mono_state: &CrystalState, bi: &ModeAnalysis) -> Outcome {
    let dh = mono.modes.branch_indices(Branch::Drumhead);
    let max_i = dh.iter().map(|&n| mono.metrics[n].i).fold(0.0, f64::max);
    let max_r = dh.iter().map(|&n| (mono.metrics[n].r - 1.0).abs()).fold(0.0, f64::max);
    let cm = mono.modes.modes[mono.special.center_of_mass].omega;
    let wz = mono_state.trap.config.omega_z;
    let cm_err = (cm - wz).abs() / wz;
    let bi_dh = bi.modes.branch_indices(Branch::Drumhead);
    let best_i = bi_dh.iter().map(|&n| bi.metrics[n].i).fold(0.0, f64::max);
    let exb_fz = median(bi.modes.branch_indices(Branch::ExB).iter().map(|&n| bi.metrics[n].f_z).collect());
    let ok = max_i < 1e-6 && max_r < 1e-6 && cm_err < 1e-9 && best_i > 0.7 && (0.03..=0.15).contains(&exb_fz);
    Ok((
        ok,
        format!("monolayer max I {max_i:.1e}, max |R-1| {max_r:.1e}, cm vs wz {cm_err:.1e}; bilayer max drumhead I {best_i:.3}, ExB median f_z {exb_fz:.3}"),
    ))
}

fn sum_rule(mono: &ModeAnalysis, bi: &ModeAnalysis) -> Outcome {
    let worst = |a: &ModeAnalysis| commutation_sum_check(&a.modes, &a.stiffness).iter().map(|v| v.abs()).fold(0.0, f64::max);
    let (m, b) = (worst(mono), worst(bi));
    Ok((m < 1e-6 && b < 1e-6, format!("monolayer {m:.1e}, bilayer {b:.1e}")))
}

fn oracles() -> Outcome {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let (mut g, mut h, mut tried) = (0.0f64, 0.0f64, 0);
    while tried < 64 {
        let n = rng.random_range(1..=5);
        let x: Vec<f64> = (0..3 * n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (fr, c4, wall) = (rng.random_range(185e3..230e3), rng.random_range(0.0..2.0), rng.random_range(0.0..0.01));
        if let Some((eg, eh)) = common::derivative_errors(n, fr, c4, wall, &x) {
            g = g.max(eg);
            h = h.max(eh);
            tried += 1;
        }
    }
    let (theta, smallest) = common::ising_fock_error();
    let tip = common::tipping_state_vector_error();
    let eom = common::eom_error();
    let ok = g < 1e-6 && h < 1e-5 && theta < 1e-8 && smallest > 0.02 && tip < 1e-12 && eom < 1e-6;
    Ok((ok, format!("(a) grad {g:.1e} hess {h:.1e}; (b) Theta {theta:.1e} rad; (c) tipping {tip:.1e}; (d) EOM {eom:.1e}")))
}

fn with_phi(spec: &OdfSpec, phi_deg: f64) -> OdfSpec {
    OdfSpec { theta: None, phi_target: Some(phi_deg.to_radians()), ..spec.clone() }
}

fn tipping_curves(state: &CrystalState, a: &ModeAnalysis) -> Outcome {
    let spec = odf("tipping.conf");
    let grid: Vec<f64> = (0..181).map(|i| std::f64::consts::PI * i as f64 / 180.0).collect();
    let mut curves = Vec::new();
    for phi in [0.0, 90.0, 180.0, 270.0] {
        let d = resolve_drive(&with_phi(&spec, phi), state, a).map_err(|e| e.to_string())?;
        let theta = ising_couplings(&a.modes, &a.metrics, &d.phases, &d.odf, d.tau, &d.selection).map_err(|e| e.to_string())?;
        curves.push(tipping_exact(&theta, &grid));
    }
    let amp: Vec<f64> = curves.iter().map(|c| c.amplitude()).collect();
    let quarter = (amp[1] - amp[3]).abs() / amp[1].max(amp[3]);
    let inside = |x: f64| amp[2] < x && x < amp[0];
    let ok = amp[2] < 0.2 * amp[0] && quarter < 0.02 && inside(amp[1]) && inside(amp[3]);
    Ok((
        ok,
        format!(
            "peak |P-1/2| at 0/90/180/270 deg: {:.4} {:.4} {:.4} {:.4}; 90 vs 270 {:.1}%, max curve gap {:.4}",
            amp[0],
            amp[1],
            amp[2],
            amp[3],
            100.0 * quarter,
            curves[1].max_deviation(&curves[3])
        ),
    ))
}

fn two_tone_theta(state: &CrystalState, a: &ModeAnalysis, spec: &OdfSpec, ratio: f64, sign: f64) -> Result<CouplingMatrix, String> {
    let (_, _, phase) = spec.tone1.ok_or("two-tone config needs a second tone")?;
    let d0 = match spec.tone0 {
        Drive::Detuning(d) => d,
        Drive::Absolute(_) => return Err("two-tone config needs detunings".into()),
    };
    let sp = OdfSpec { tone1: Some((spec.force * ratio.sqrt(), Drive::Detuning(sign * d0.abs()), phase)), ..spec.clone() };
    let d = resolve_drive(&sp, state, a).map_err(|e| e.to_string())?;
    two_tone_couplings(&a.modes, &a.metrics, &d.phases, &d.odf, &a.special, d.tau).map(|r| r.theta).map_err(|e| e.to_string())
}

fn two_tone(state: &CrystalState, a: &ModeAnalysis) -> Outcome {
    let spec = odf("two_tone.conf");
    let labels = state.layers().map_err(|e| e.to_string())?.to_vec();
    let single = two_tone_theta(state, a, &spec, 0.0, 1.0)?;
    let same = two_tone_theta(state, a, &spec, 1.0, 1.0)?;
    let opposite = two_tone_theta(state, a, &spec, 1.0, -1.0)?;
    let norm = |m: &CouplingMatrix, x: Layer, y: Layer| m.block_frobenius(&labels, x, y);
    let inter = norm(&single, Layer::Upper, Layer::Lower) / norm(&same, Layer::Upper, Layer::Lower);
    let intra = (norm(&single, Layer::Upper, Layer::Upper) / norm(&opposite, Layer::Upper, Layer::Upper))
        .min(norm(&single, Layer::Lower, Layer::Lower) / norm(&opposite, Layer::Lower, Layer::Lower));
    let mut rel = Vec::new();
    for i in 0..=40 {
        let r = 4.0 * i as f64 / 40.0;
        for sign in [1.0, -1.0] {
            rel.push(j_rel(&two_tone_theta(state, a, &spec, r, sign)?, &labels).map_err(|e| e.to_string())?);
        }
    }
    let (lo, hi) = rel.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    let decades = (hi / lo).log10();
    let ok = inter >= 10.0 && intra >= 10.0 && decades >= 2.0;
    Ok((ok, format!("interlayer drop {inter:.2}x, intralayer drop {intra:.2}x, J_rel {lo:.3}..{hi:.2} ({decades:.2} decades)")))
}

fn chiral_exchange(state: &CrystalState, a: &ModeAnalysis) -> Outcome {
    let spec = odf("exchange.conf");
    let b0 = spec.b0.ok_or("exchange config needs b0_hz")?;
    let labels = state.layers().map_err(|e| e.to_string())?.to_vec();
    let mut herm = 0.0f64;
    let mut ratio = [0.0; 2];
    let mut typ = 0.0;
    for (slot, phi) in [90.0, 0.0].into_iter().enumerate() {
        let d = resolve_drive(&with_phi(&spec, phi), state, a).map_err(|e| e.to_string())?;
        let e = exchange_couplings(&a.modes, &a.metrics, &d.phases, &d.odf, b0, &[], &d.selection).map_err(|e| e.to_string())?;
        herm = herm.max(e.ff.hermiticity_error());
        let mut r = Vec::new();
        for j in 0..e.ff.n {
            for k in 0..e.ff.n {
                let (x, y) = (labels[j], labels[k]);
                if x != y && x != Layer::Scaffold && y != Layer::Scaffold {
                    let v = e.ff.get(j, k);
                    r.push(if slot == 0 { v.re.abs() / v.im.abs() } else { v.im.abs() / v.re.abs() });
                }
            }
        }
        ratio[slot] = median(r);
        if slot == 0 {
            typ = e.j_typ / TWO_PI;
        }
    }
    let n = state.n_ions() as f64;
    let ok = herm < 1e-10 && ratio[0] < 0.2 && ratio[1] < 0.2 && within(typ, 4.0, 0.5) && within(n * typ, 800.0, 0.5);
    Ok((
        ok,
        format!(
            "hermiticity {herm:.1e}, median |Re|/|Im| at 90 deg {:.3}, median |Im|/|Re| at 0 deg {:.3}, J_typ {typ:.2} Hz, N J_typ {:.0} Hz",
            ratio[0],
            ratio[1],
            n * typ
        ),
    ))
}

fn lamb_dicke_check(a: &ModeAnalysis) -> Outcome {
    let dk = 2.0 * TWO_PI / 313e-9 * 1f64.to_radians().sin();
    let mut parts = Vec::new();
    let mut ok = true;
    for (t, bound) in [(450e-6, 0.12), (50e-6, 0.045)] {
        let zv = z_variance(&a.modes, &a.metrics, &ThermalSpec::Temperature(t), None).map_err(|e| e.to_string())?;
        let ld = lamb_dicke(&zv, dk);
        ok &= ld.max <= bound;
        parts.push(format!("{:.0} uK max {:.3} (bound {bound}) mean {:.3}", t * 1e6, ld.max, ld.mean));
    }
    Ok((ok, parts.join("; ")))
}

fn trilayer() -> Outcome {
    let mut kv = conf("bilayer.conf");
    kv.insert("n_ions", 500);
    kv.insert("omega_r_hz", 215e3);
    kv.insert("c4", 1.659);
    let (trap, opt) = setup(&kv)?;
    let ens = equilibrate_ensemble(&trap, &opt).map_err(|e| e.to_string())?;
    let bins = Binning::for_wavelength(313e-9);
    let hist = z_histogram(ens.best(), bins.display, 0.0).map_err(|e| e.to_string())?;
    let peaks = hist.peak_count(3);
    Ok((peaks == 3, format!("{peaks} peaks in the z histogram")))
}

fn main() {
    let bi_state = fixture("bilayer_n200.json");
    let mono_state = fixture("monolayer_n200.json");
    let t = Instant::now();
    let bi = analyze_modes(&bi_state).expect("bilayer modes");
    let mono = analyze_modes(&mono_state).expect("monolayer modes");
    println!("fixture modes solved in {:.1} s", t.elapsed().as_secs_f64());

    let checks: Vec<Check> = vec![
        (1, "derived parameters", Box::new(derived_parameters)),
        (2, "bilayer formation", Box::new(bilayer_formation)),
        (3, "entropy sweep", Box::new(entropy_sweep)),
        (4, "mode spectrum", Box::new(|| mode_spectrum(&bi))),
        (5, "mode metrics", Box::new(|| mode_metrics(&mono, &mono_state, &bi))),
        (6, "quantization sum rule", Box::new(|| sum_rule(&mono, &bi))),
        (7, "oracle equivalence", Box::new(oracles)),
        (8, "tipping curves", Box::new(|| tipping_curves(&bi_state, &bi))),
        (9, "two-tone control", Box::new(|| two_tone(&bi_state, &bi))),
        (10, "chiral exchange", Box::new(|| chiral_exchange(&bi_state, &bi))),
        (11, "Lamb-Dicke", Box::new(|| lamb_dicke_check(&bi))),
        (12, "trilayer", Box::new(trilayer)),
    ];
    let only: Option<Vec<u8>> = std::env::var("ILF_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut unexpected = Vec::new();
    for (id, name, check) in &checks {
        if only.as_ref().is_some_and(|o| !o.contains(id)) {
            continue;
        }
        if *id == 12 && !full_mode() {
            println!("criterion {id:>2} SKIP {name}: long run, set ILF_ACCEPTANCE=full");
            continue;
        }
        let t = Instant::now();
        let outcome = check();
        let secs = t.elapsed().as_secs_f64();
        let known = KNOWN_RED.contains(id);
        let (status, detail) = match outcome {
            Ok((true, d)) => {
                if known {
                    println!("note: criterion {id} is listed as known red but passed");
                }
                ("PASS", d)
            }
            Ok((false, d)) => {
                if !known {
                    unexpected.push(*id);
                }
                (if known { "FAIL (known)" } else { "FAIL" }, d)
            }
            Err(e) => {
                unexpected.push(*id);
                ("ERROR", e)
            }
        };
        println!("criterion {id:>2} {status} {name}: {detail} [{secs:.1} s]");
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
