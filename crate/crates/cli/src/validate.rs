use std::path::Path;

use ionlayer::analysis::{analyze_modes, resolve_drive};
use ionlayer::modes::commutation_sum_check;
use ionlayer::odf::exchange_couplings;

use crate::out::Failure;
use crate::spin::{load_crystal, load_odf};

struct Check {
    name: &'static str,
    value: f64,
    tol: f64,
}

/// Largest relative central-difference error of the gradient and of a few
/// Hessian columns, at a deterministic perturbation of `x`.
fn finite_difference(pot: &ionlayer::trap::ScaledPotential, x: &[f64]) -> ionlayer::Result<(f64, f64)> {
    let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + 0.05 * ((i as f64 * 0.7).sin())).collect();
    let g = pot.gradient(&y)?;
    let hess = pot.hessian(&y)?;
    let dim = y.len();
    let h = 1e-5;
    let h_energy = 1e-4;
    let gscale = g.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
    let hscale = hess.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let picks: Vec<usize> = (0..dim).step_by((dim / 12).max(1)).collect();
    let (mut ge, mut he) = (0.0_f64, 0.0_f64);
    for &i in &picks {
        // the energy is large compared with its change, so its difference
        // quotient needs a wider step than the gradient's
        let shift = |d: f64| {
            let mut v = y.clone();
            v[i] += d;
            v
        };
        let fd = (pot.energy(&shift(h_energy))? - pot.energy(&shift(-h_energy))?) / (2.0 * h_energy);
        ge = ge.max((fd - g[i]).abs() / gscale);
        let (p, m) = (shift(h), shift(-h));
        let gp = pot.gradient(&p)?;
        let gm = pot.gradient(&m)?;
        for r in 0..dim {
            let col = (gp[r] - gm[r]) / (2.0 * h);
            he = he.max((col - hess[r * dim + i]).abs() / hscale);
        }
    }
    Ok((ge, he))
}

pub fn run(crystal: &Path, config: Option<&Path>) -> Result<(), Failure> {
    let state = load_crystal(crystal)?;
    let pot = state.trap.scaled();
    let (ge, he) = finite_difference(&pot, &state.positions).map_err(Failure::at("finite differences"))?;
    let a = analyze_modes(&state).map_err(Failure::at("normal modes"))?;
    let sum_rule = commutation_sum_check(&a.modes, &a.stiffness).iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut checks = vec![
        Check { name: "gradient vs finite differences", value: ge, tol: 1e-6 },
        Check { name: "Hessian vs finite differences", value: he, tol: 1e-5 },
        Check { name: "equilibrium gradient (max abs, scaled)", value: state.grad_norm, tol: 1e-6 },
        Check { name: "mode equation residual", value: a.modes.max_residual(&a.stiffness), tol: 1e-8 },
        Check { name: "commutation sum rule", value: sum_rule, tol: 1e-6 },
    ];
    if let Some(cfg) = config {
        let spec = load_odf(cfg)?;
        let d = resolve_drive(&spec, &state, &a).map_err(Failure::at("resolving drive"))?;
        let b0 = spec.b0.unwrap_or(0.5 * d.detuning.abs());
        let e = exchange_couplings(&a.modes, &a.metrics, &d.phases, &d.odf, b0, &[], &d.selection).map_err(Failure::at("exchange couplings"))?;
        checks.push(Check { name: "exchange Hermiticity", value: e.ff.hermiticity_error(), tol: 1e-10 });
    }
    let mut failed = Vec::new();
    for c in &checks {
        let ok = c.value <= c.tol;
        println!("{:<40} {:>12.3e}  (tol {:.0e})  {}", c.name, c.value, c.tol, if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed.push(c.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::check("validation", format!("failed: {}", failed.join(", "))))
    }
}
