//! Brute-force oracles shared by the oracle tests and the acceptance report.
//! Each one recomputes a library result by a route that shares no code with
//! the closed forms, and returns the worst discrepancy it saw.
#![allow(dead_code, clippy::needless_range_loop)]

use ionlayer::basin::{local_minimize, OptimizerConfig};
use ionlayer::modes::{solve_modes, stiffness_matrix, Branch, Mode, ModeMetrics, ModeSet};
use ionlayer::odf::{
    exchange_couplings, ising_couplings, spin_motion_alpha, tipping_exact, CouplingMatrix, ModeSelection, OdfConfig,
    PhaseData,
};
use ionlayer::trap::{IonSpecies, Trap, TrapConfig};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HBAR: f64 = 1.054_571_817e-34;
const KB: f64 = 1.380_649e-23;
const PI: f64 = std::f64::consts::PI;

/// One synthetic axial mode shared by two ions; `chi` makes it complex.
fn two_ion_mode(chi: f64, omega: f64, c: f64) -> (ModeSet, Vec<ModeMetrics>, PhaseData) {
    let a = 0.6f64;
    let b = (1.0 - a * a).sqrt();
    let zero = C64::new(0.0, 0.0);
    let v = vec![zero, zero, C64::new(a, 0.0), zero, zero, C64::from_polar(b, chi)];
    let modes = ModeSet {
        modes: vec![Mode { omega, vector: v, branch: Branch::Drumhead }],
        n_ions: 2,
        omega_z: omega,
        omega_c_prime: omega,
        mass: 1.5e-26,
        warnings: vec![],
    };
    let metrics = vec![ModeMetrics { f_z: 1.0, r: 1.0, i: 0.0, l0: c, c }];
    let phases = PhaseData { phi: vec![0.3, -1.1], interlayer: None, delta_k: 1.0 };
    (modes, metrics, phases)
}

/// `psi' = -i H(t) psi` on a truncated Fock space, with
/// `H = g e^{i delta t} a + conj(g) e^{-i delta t} a^dag` (rad/s).
fn driven_vacuum(g: C64, delta: f64, t_end: f64, dim: usize, steps: usize) -> Vec<C64> {
    let apply = |t: f64, psi: &[C64]| -> Vec<C64> {
        let ga = g * C64::from_polar(1.0, delta * t);
        let gd = ga.conj();
        let mut out = vec![C64::new(0.0, 0.0); dim];
        for n in 0..dim {
            // a |n+1> = sqrt(n+1) |n>
            if n + 1 < dim {
                out[n] += ga * psi[n + 1] * ((n + 1) as f64).sqrt();
            }
            if n >= 1 {
                out[n] += gd * psi[n - 1] * (n as f64).sqrt();
            }
        }
        out.iter().map(|v| v * C64::new(0.0, -1.0)).collect()
    };
    let h = t_end / steps as f64;
    let mut psi = vec![C64::new(0.0, 0.0); dim];
    psi[0] = C64::new(1.0, 0.0);
    let axpy = |x: &[C64], k: &[C64], s: f64| -> Vec<C64> { x.iter().zip(k).map(|(a, b)| a + b * s).collect() };
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = apply(t, &psi);
        let k2 = apply(t + 0.5 * h, &axpy(&psi, &k1, 0.5 * h));
        let k3 = apply(t + 0.5 * h, &axpy(&psi, &k2, 0.5 * h));
        let k4 = apply(t + h, &axpy(&psi, &k3, h));
        for n in 0..dim {
            psi[n] += (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]) * (h / 6.0);
        }
    }
    psi
}

/// Worst `|Theta_lib - Theta_fock|` in rad, and the smallest `|Theta|` checked.
pub fn ising_fock_error() -> (f64, f64) {
    let mut worst = 0.0f64;
    let mut smallest = f64::INFINITY;
    let omega = 2.0 * PI * 1.5e6;
    let c = 2e-8;
    let force = 3e-23;
    let delta = 2.0 * PI * 1.0e3;
    for chi in [0.0, 0.7] {
        let (modes, metrics, phases) = two_ion_mode(chi, omega, c);
        let odf = OdfConfig::new(313e-9, 0.02, force, omega + delta).unwrap();
        for t in [2.0 * PI / delta, 0.37 * 2.0 * PI / delta] {
            let theta = ising_couplings(&modes, &metrics, &phases, &odf, t, &ModeSelection::Drumhead).unwrap();
            let lib = 0.5 * (theta.real(0, 1) + theta.real(1, 0));
            let alpha = spin_motion_alpha(&modes, &metrics, &phases, &odf, t, &ModeSelection::Drumhead).unwrap();

            let u: Vec<C64> = (0..2).map(|j| modes.modes[0].z(j)).collect();
            let mut arg = [0.0; 2];
            for (slot, s2) in [1.0, -1.0].into_iter().enumerate() {
                let s = [1.0, s2];
                let g: C64 = (0..2).map(|j| u[j] * C64::from_polar(1.0, phases.phi[j]) * s[j]).sum::<C64>() * (force * c / (2.0 * HBAR));
                let psi = driven_vacuum(g, delta, t, 40, 20_000);
                arg[slot] = psi[0].arg();
                // vacuum overlap of a displaced state is exp(-|alpha|^2 / 2)
                let a_s: C64 = (0..2).map(|j| alpha.alpha[0][j] * s[j]).sum();
                worst = worst.max((psi[0].norm() - (-0.5 * a_s.norm_sqr()).exp()).abs());
            }
            // the spin-spin phase is -2 theta~ s1 s2
            let oracle = -(arg[0] - arg[1]) / 4.0;
            worst = worst.max((lib - oracle).abs());
            smallest = smallest.min(lib.abs());
        }
    }
    (worst, smallest)
}

/// Dense state-vector evaluation of the tipping protocol on `n` qubits.
fn tipping_brute_force(theta: &[Vec<f64>], tip: f64) -> Vec<f64> {
    let n = theta.len();
    let dim = 1usize << n;
    // bit j set means spin j is up, sigma_z = +1
    let sz = |b: usize, j: usize| if b >> j & 1 == 1 { 1.0 } else { -1.0 };
    let rotate = |psi: &[C64], angle: f64, axis_y: bool| -> Vec<C64> {
        // exp(-i angle/2 sigma) applied qubit by qubit
        let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
        let mut out = psi.to_vec();
        for j in 0..n {
            let mut next = out.clone();
            for b in 0..dim {
                let flip = b ^ (1 << j);
                let other = out[flip];
                let off = if axis_y {
                    // -i s sigma_y: <b|sigma_y|flip> = i for b up, -i for b down
                    let sy = if sz(b, j) > 0.0 { C64::new(0.0, 1.0) } else { C64::new(0.0, -1.0) };
                    C64::new(0.0, -s) * sy * other
                } else {
                    C64::new(0.0, -s) * other
                };
                next[b] = out[b] * c + off;
            }
            out = next;
        }
        out
    };
    let mut psi = vec![C64::new(0.0, 0.0); dim];
    psi[0] = C64::new(1.0, 0.0);
    psi = rotate(&psi, tip, true);
    for (b, amp) in psi.iter_mut().enumerate() {
        let mut e = 0.0;
        for j in 0..n {
            for k in 0..n {
                if j != k {
                    e += theta[j][k] * sz(b, j) * sz(b, k);
                }
            }
        }
        *amp *= C64::from_polar(1.0, -e);
    }
    // the closed form corresponds to a readout pulse of opposite sense to the tip
    psi = rotate(&psi, -PI / 2.0, false);
    (0..n)
        .map(|j| psi.iter().enumerate().filter(|(b, _)| b >> j & 1 == 1).map(|(_, a)| a.norm_sqr()).sum())
        .collect()
}

/// Worst per-ion probability difference for random three-spin couplings.
pub fn tipping_state_vector_error() -> f64 {
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let n = 3;
        let mut t = vec![vec![0.0; n]; n];
        for j in 0..n {
            for k in 0..n {
                if j != k {
                    t[j][k] = rng.random_range(-0.6..0.6);
                }
            }
        }
        let re: Vec<f64> = t.iter().flatten().copied().collect();
        let m = CouplingMatrix::from_real(n, re, Default::default());
        let grid: Vec<f64> = (0..37).map(|i| i as f64 * PI / 36.0).collect();
        let curve = tipping_exact(&m, &grid);
        for (p, &tip) in curve.points.iter().zip(&grid) {
            let brute = tipping_brute_force(&t, tip);
            for j in 0..n {
                worst = worst.max((p.per_ion[j] - brute[j]).abs());
            }
        }
    }
    worst
}

pub fn small_crystal(n: usize, seed: u64) -> ionlayer::crystal::CrystalState {
    let trap = Trap::new(TrapConfig::bilayer_base(n, 200e3, 0.0), IonSpecies::beryllium9()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = (n as f64).cbrt();
    let start: Vec<f64> = (0..3 * n).map(|_| rng.random_range(-r..r)).collect();
    let cfg = OptimizerConfig { tol_grad: 1e-12, ..OptimizerConfig::default() };
    local_minimize(&trap, &start, &cfg).unwrap()
}

/// Worst trajectory error of a pure mode against RK4 integration of the
/// linearized equations of motion over ten of its periods, relative to the
/// unit amplitude.
pub fn eom_error() -> f64 {
    let mut overall = 0.0f64;
    let state = small_crystal(4, 3);
    let trap = &state.trap;
    let k = stiffness_matrix(&state).unwrap();
    let modes = solve_modes(&k, trap).unwrap();
    // m x'' = -H x + m wc' (y', -x', 0), all SI
    let h = ionlayer::potential::hessian(&state.positions_m(), trap).unwrap();
    let mass = trap.species.mass;
    let wc = trap.derived.omega_c_prime;
    let d = 3 * state.n_ions();
    let rhs = |x: &[f64], v: &[f64]| -> Vec<f64> {
        (0..d)
            .map(|a| {
                let f: f64 = (0..d).map(|b| -h[a * d + b] * x[b]).sum::<f64>() / mass;
                f + match a % 3 {
                    0 => wc * v[a + 1],
                    1 => -wc * v[a - 1],
                    _ => 0.0,
                }
            })
            .collect()
    };
    let w_max = modes.modes.iter().map(|m| m.omega).fold(0.0, f64::max);
    for mode in &modes.modes {
        let w = mode.omega;
        let t_end = 10.0 * 2.0 * PI / w;
        let dt_target = (2.0 * PI / w_max) / 400.0;
        let steps = (t_end / dt_target).ceil() as usize;
        let dt = t_end / steps as f64;
        let exact = |t: f64| -> (Vec<f64>, Vec<f64>) {
            let e = C64::from_polar(1.0, -w * t);
            let x = mode.vector.iter().map(|u| (u * e).re).collect();
            let v = mode.vector.iter().map(|u| (u * e * C64::new(0.0, -w)).re).collect();
            (x, v)
        };
        let (mut x, mut v) = exact(0.0);
        let mut worst = 0.0f64;
        for i in 0..steps {
            let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + q * s).collect() };
            let (k1x, k1v) = (v.clone(), rhs(&x, &v));
            let (x2, v2) = (add(&x, &k1x, 0.5 * dt), add(&v, &k1v, 0.5 * dt));
            let (k2x, k2v) = (v2.clone(), rhs(&x2, &v2));
            let (x3, v3) = (add(&x, &k2x, 0.5 * dt), add(&v, &k2v, 0.5 * dt));
            let (k3x, k3v) = (v3.clone(), rhs(&x3, &v3));
            let (x4, v4) = (add(&x, &k3x, dt), add(&v, &k3v, dt));
            let (k4x, k4v) = (v4.clone(), rhs(&x4, &v4));
            for a in 0..d {
                x[a] += dt / 6.0 * (k1x[a] + 2.0 * k2x[a] + 2.0 * k3x[a] + k4x[a]);
                v[a] += dt / 6.0 * (k1v[a] + 2.0 * k2v[a] + 2.0 * k3v[a] + k4v[a]);
            }
            if i % 50 == 49 || i + 1 == steps {
                let (xe, _) = exact((i + 1) as f64 * dt);
                let err = x.iter().zip(&xe).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
                worst = worst.max(err);
            }
        }
        overall = overall.max(worst);
    }
    overall
}

/// Worst relative difference of `<z_j^2>` from `kT (H^-1)_zz` in the hot limit.
pub fn equipartition_error() -> f64 {
    use ionlayer::thermal::{z_variance, ThermalSpec};
    let state = small_crystal(12, 5);
    let a = ionlayer::analysis::analyze_modes(&state).unwrap();
    let h = ionlayer::potential::hessian(&state.positions_m(), &state.trap).unwrap();
    let d = 3 * state.n_ions();
    let inv = invert(&h, d);
    // hot enough that (2 nbar + 1) is within 1e-6 of 2 kT / (hbar w) for every mode
    let t = 1.0;
    let q = z_variance(&a.modes, &a.metrics, &ThermalSpec::Temperature(t), None).unwrap();
    (0..state.n_ions())
        .map(|j| (q[j] / (KB * t * inv[(3 * j + 2) * d + 3 * j + 2]) - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Gauss-Jordan inverse with partial pivoting, row-major.
fn invert(m: &[f64], d: usize) -> Vec<f64> {
    let mut a = m.to_vec();
    let mut inv: Vec<f64> = (0..d * d).map(|i| f64::from(i / d == i % d)).collect();
    for col in 0..d {
        let p = (col..d).max_by(|&x, &y| a[x * d + col].abs().total_cmp(&a[y * d + col].abs())).unwrap();
        for c in 0..d {
            a.swap(col * d + c, p * d + c);
            inv.swap(col * d + c, p * d + c);
        }
        let piv = a[col * d + col];
        for c in 0..d {
            a[col * d + c] /= piv;
            inv[col * d + c] /= piv;
        }
        for r in 0..d {
            if r != col {
                let f = a[r * d + col];
                if f != 0.0 {
                    for c in 0..d {
                        a[r * d + c] -= f * a[col * d + c];
                        inv[r * d + c] -= f * inv[col * d + c];
                    }
                }
            }
        }
    }
    inv
}

/// Two levels coupled by `J`, split by `H1 - H2`: population swaps at
/// `sqrt((H1 - H2)^2 + 4 |J|^2)`. Here the two levels are one spin flip shared
/// between two ions, and the full spin-phonon problem is integrated.
/// Relative error of the predicted swap frequency, and the adiabaticity
/// `(|delta| - B0) / (2 |J|)` of the case.
pub fn exchange_swap_error() -> (f64, f64) {
    let omega = 2.0 * PI * 1.5e6;
    let c = 2e-8;
    let force = 2e-23;
    let delta = 2.0 * PI * 40e3;
    let b0 = 2.0 * PI * 10e3;
    let (modes, metrics, phases) = two_ion_mode(0.4, omega, c);
    let odf = OdfConfig::new(313e-9, 0.02, force, omega + delta).unwrap();
    let ex = exchange_couplings(&modes, &metrics, &phases, &odf, b0, &[], &ModeSelection::Drumhead).unwrap();
    let j = C64::new(ex.ff.real(0, 1), ex.ff.get(0, 1).im);
    let adiabatic = (delta - b0) / (2.0 * j.norm());
    let predicted = ((ex.h[0] - ex.h[1]).powi(2) + 4.0 * j.norm_sqr()).sqrt();

    // H = B0/2 (s1^x + s2^x) + sum_j (F c / 2) s_j^z (w_j e^{i delta t} a + h.c.),
    // w_j = u_j e^{i phi_j}; in the dressed basis the transverse field splits
    // |+-> from |-+>, and the phonon-mediated exchange mixes them.
    let g: Vec<C64> =
        (0..2).map(|k| modes.modes[0].z(k) * C64::from_polar(1.0, phases.phi[k]) * (force * c / (2.0 * HBAR))).collect();
    let nf = 6;
    let dim = 4 * nf;
    // spin basis in the x eigenbasis: bit set means +x
    let idx = |s: usize, n: usize| s * nf + n;
    // transferred population follows (4|J|^2 / W^2) sin^2(W t / 2); sample it
    // over one predicted swap period in a single integration
    let period = 2.0 * PI / predicted;
    let n_samples = 12;
    let steps_per_sample = ((period / n_samples as f64) * (delta + b0) * 40.0) as usize + 100;
    let h = period / (n_samples * steps_per_sample) as f64;
    let mut psi = vec![C64::new(0.0, 0.0); dim];
    // start in |+x, -x> with phonon vacuum
    psi[idx(0b01, 0)] = C64::new(1.0, 0.0);
    let apply = |t: f64, p: &[C64]| -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); dim];
        for s in 0..4 {
            let ex: f64 = (0..2).map(|k| if s >> k & 1 == 1 { 0.5 } else { -0.5 }).sum();
            for n in 0..nf {
                out[idx(s, n)] += p[idx(s, n)] * (b0 * ex);
            }
            // s^z flips the x-basis bit of ion k, with Pauli amplitude 1
            for k in 0..2 {
                let s2 = s ^ (1 << k);
                let ga = g[k] * C64::from_polar(1.0, delta * t);
                for n in 0..nf {
                    if n + 1 < nf {
                        out[idx(s2, n)] += ga * p[idx(s, n + 1)] * ((n + 1) as f64).sqrt();
                    }
                    if n >= 1 {
                        out[idx(s2, n)] += ga.conj() * p[idx(s, n - 1)] * (n as f64).sqrt();
                    }
                }
            }
        }
        out.into_iter().map(|v| v * C64::new(0.0, -1.0)).collect()
    };
    let axpy = |x: &[C64], k: &[C64], s: f64| -> Vec<C64> { x.iter().zip(k).map(|(a, b)| a + b * s).collect() };
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples * steps_per_sample {
        let t = i as f64 * h;
        let k1 = apply(t, &psi);
        let k2 = apply(t + 0.5 * h, &axpy(&psi, &k1, 0.5 * h));
        let k3 = apply(t + 0.5 * h, &axpy(&psi, &k2, 0.5 * h));
        let k4 = apply(t + h, &axpy(&psi, &k3, h));
        for a in 0..dim {
            psi[a] += (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]) * (h / 6.0);
        }
        if (i + 1) % steps_per_sample == 0 {
            samples.push(((i + 1) as f64 * h, (0..nf).map(|n| psi[idx(0b10, n)].norm_sqr()).sum::<f64>()));
        }
    }
    let amp = 4.0 * j.norm_sqr() / predicted.powi(2);
    let misfit = |w: f64| samples.iter().map(|(t, p)| (p - amp * (0.5 * w * t).sin().powi(2)).powi(2)).sum::<f64>();
    // fit the frequency by a fine scan around the prediction
    let best = (0..=400).map(|i| predicted * (0.8 + 0.4 * i as f64 / 400.0)).min_by(|a, b| misfit(*a).total_cmp(&misfit(*b))).unwrap();
    ((best / predicted - 1.0).abs(), adiabatic)
}

/// Largest relative gradient and Hessian errors against central differences,
/// or `None` when two ions sit too close for the difference quotient to be
/// trusted.
pub fn derivative_errors(n: usize, fr: f64, c4: f64, wall: f64, x: &[f64]) -> Option<(f64, f64)> {
    use ionlayer::trap::{IonSpecies, Trap, TrapConfig};
    let mut cfg = TrapConfig::bilayer_base(n, fr, c4);
    cfg.delta_wall = wall;
    let pot = Trap::new(cfg, IonSpecies::beryllium9()).unwrap().scaled();
    for i in 0..n {
        for j in 0..i {
            let d2: f64 = (0..3).map(|a| (x[3 * i + a] - x[3 * j + a]).powi(2)).sum();
            if d2 <= 0.05 {
                return None;
            }
        }
    }
    let rel = |a: &[f64], b: &[f64]| {
        let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
        a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max) / scale
    };
    let shifted = |a: usize, h: f64| {
        let mut p = x.to_vec();
        p[a] += h;
        p
    };
    let d = x.len();
    let g = pot.gradient(x).unwrap();
    let h = 1e-6;
    let fd_g: Vec<f64> = (0..d)
        .map(|a| (pot.energy(&shifted(a, h)).unwrap() - pot.energy(&shifted(a, -h)).unwrap()) / (2.0 * h))
        .collect();
    let hess = pot.hessian(x).unwrap();
    let h = 1e-5;
    let mut fd_h = vec![0.0; d * d];
    for b in 0..d {
        let (gp, gm) = (pot.gradient(&shifted(b, h)).unwrap(), pot.gradient(&shifted(b, -h)).unwrap());
        for a in 0..d {
            fd_h[a * d + b] = (gp[a] - gm[a]) / (2.0 * h);
        }
    }
    Some((rel(&fd_g, &g), rel(&fd_h, &hess)))
}
