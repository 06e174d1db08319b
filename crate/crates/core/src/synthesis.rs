//! Numerical synthesis of block-diagonal stabilizing controllers.
//!
//! Existence of uncoupled stabilizing higher-order terms is decided by the
//! rank tests in [`crate::linear`]; this module makes the existence
//! constructive by minimizing the closed-loop spectral abscissa over the
//! block-diagonal `(E_i, F_i, G_i, H_i)` parameters with multi-start
//! Nelder-Mead. Warm starts come from the anticipatory template family,
//! which is known-good structure; cold starts are random Gaussian draws.
//! Everything is deterministic given the seed.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{higher_order_wrap, Controller, DynamicsKind, HigherOrderState, PlayerDynamics};
use crate::equilibrium::{find_completely_mixed_ne, MixedEquilibrium};
use crate::game::Game;
use crate::integrate::integrate_recorded;
use crate::linear::{decentralized_stabilizability, linearize_plant, spectral_abscissa, LinearPlant};
use crate::{Error, Result};

/// Restriction of the controller search space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateRestriction {
    /// Search only over anticipatory `(gamma, lambda)` pairs.
    Anticipatory,
    /// Full block-diagonal parameter search.
    Free,
}

#[derive(Debug, Clone)]
pub struct SynthesisConfig {
    /// Per-player controller order; defaults to `k_i - 1`.
    pub orders: Option<Vec<usize>>,
    /// Required stability margin: success means abscissa < -margin.
    pub margin: f64,
    /// Total objective-evaluation budget across all starts.
    pub budget: usize,
    /// Number of random Gaussian starts (template warm starts are added on
    /// top unless the template restriction forbids free parameters).
    pub random_starts: usize,
    pub seed: u64,
    pub template: TemplateRestriction,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            orders: None,
            margin: 0.01,
            budget: 20_000,
            random_starts: 8,
            seed: 0,
            template: TemplateRestriction::Free,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub controllers: Vec<Controller>,
    /// Closed-loop spectral abscissa achieved by `controllers`.
    pub abscissa: f64,
    pub internally_stable: Vec<bool>,
    pub evaluations: usize,
    pub success: bool,
    pub failure_reason: Option<String>,
}

/// `Abar = [[A + B H C, B G], [F C, E]]` for block-diagonal controllers.
/// Cross-player blocks of `E, F, G, H` are identically zero by construction.
pub fn assemble_closed_loop_matrix(
    plant: &LinearPlant,
    controllers: &[Controller],
) -> Result<DMatrix<f64>> {
    if controllers.len() != plant.players() {
        return Err(Error::InvalidArgument(format!(
            "need {} controllers, got {}",
            plant.players(),
            controllers.len()
        )));
    }
    for (i, c) in controllers.iter().enumerate() {
        if c.strategy_dim() != plant.widths[i] {
            return Err(Error::DimensionMismatch {
                player: i,
                detail: format!(
                    "controller strategy dimension {} vs plant width {}",
                    c.strategy_dim(),
                    plant.widths[i]
                ),
            });
        }
    }
    let n_states = plant.state_dim();
    let d_total: usize = controllers.iter().map(Controller::order).sum();
    let b = plant.b_stacked();
    let e = block_diag(&controllers.iter().map(|c| c.e.clone()).collect::<Vec<_>>());
    let f = block_diag(&controllers.iter().map(|c| c.f.clone()).collect::<Vec<_>>());
    let g = block_diag(&controllers.iter().map(|c| c.g.clone()).collect::<Vec<_>>());
    let h = block_diag(&controllers.iter().map(|c| c.h.clone()).collect::<Vec<_>>());

    let mut abar = DMatrix::zeros(n_states + d_total, n_states + d_total);
    abar.view_mut((0, 0), (n_states, n_states))
        .copy_from(&(&plant.a + &b * &h * &plant.c));
    abar.view_mut((0, n_states), (n_states, d_total))
        .copy_from(&(&b * &g));
    abar.view_mut((n_states, 0), (d_total, n_states))
        .copy_from(&(&f * &plant.c));
    abar.view_mut((n_states, n_states), (d_total, d_total)).copy_from(&e);
    Ok(abar)
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Searches for block-diagonal controllers driving the closed-loop spectral
/// abscissa below `-margin`. Fails immediately (with reason) when the
/// decentralized rank test rules out stabilization.
pub fn synthesize(plant: &LinearPlant, config: &SynthesisConfig) -> Result<SynthesisResult> {
    let gate = decentralized_stabilizability(plant);
    if !gate.stabilizable {
        return Ok(failure_result(
            plant,
            config,
            format!(
                "decentralized fixed mode: partition {:?} at lambda {:?}",
                gate.failing_partition, gate.failing_lambda
            ),
        ));
    }
    search(plant, config, false)
}

/// As [`synthesize`], but every `E_i` is constrained to spectral abscissa
/// below `-margin` (internally stable controllers). Fails immediately when
/// the parity-interlacing test rules out strong stabilization.
pub fn synthesize_strong(plant: &LinearPlant, config: &SynthesisConfig) -> Result<SynthesisResult> {
    let gate = decentralized_stabilizability(plant);
    if !gate.stabilizable {
        return Ok(failure_result(
            plant,
            config,
            "decentralized fixed mode".to_string(),
        ));
    }
    let strong = crate::linear::strong_stabilizability(plant)?;
    if !strong.strongly_stabilizable {
        return Ok(failure_result(
            plant,
            config,
            format!(
                "not strongly stabilizable: real unstable poles {:?} fail parity interlacing",
                strong.real_unstable_poles
            ),
        ));
    }
    search(plant, config, true)
}

fn failure_result(
    plant: &LinearPlant,
    config: &SynthesisConfig,
    reason: String,
) -> SynthesisResult {
    let _ = config;
    let controllers: Vec<Controller> = plant
        .widths
        .iter()
        .map(|&w| Controller::zero(w + 1))
        .collect();
    let abscissa = spectral_abscissa(&plant.a);
    let internally_stable = controllers.iter().map(Controller::internally_stable).collect();
    SynthesisResult {
        controllers,
        abscissa,
        internally_stable,
        evaluations: 0,
        success: false,
        failure_reason: Some(reason),
    }
}

struct ParamSpace {
    widths: Vec<usize>,
    orders: Vec<usize>,
}

impl ParamSpace {
    fn dim(&self) -> usize {
        self.widths
            .iter()
            .zip(&self.orders)
            .map(|(&w, &d)| d * d + d * w + w * d + w * w)
            .sum()
    }

    fn unpack(&self, theta: &DVector<f64>) -> Vec<Controller> {
        let mut off = 0;
        let mut take = |r: usize, c: usize| {
            let m = DMatrix::from_row_slice(r, c, &theta.as_slice()[off..off + r * c]);
            off += r * c;
            m
        };
        self.widths
            .iter()
            .zip(&self.orders)
            .map(|(&w, &d)| Controller {
                e: take(d, d),
                f: take(d, w),
                g: take(w, d),
                h: take(w, w),
            })
            .collect()
    }

    fn pack(&self, controllers: &[Controller]) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for c in controllers {
            for m in [&c.e, &c.f, &c.g, &c.h] {
                out.extend(m.transpose().as_slice()); // row-major
            }
        }
        DVector::from_vec(out)
    }
}

/// Anticipatory-like warm start for arbitrary order `d`: the exact template
/// when `d = k - 1`, padded with disconnected stable states otherwise.
fn anticipatory_start(gamma: f64, lambda: f64, w: usize, d: usize) -> Controller {
    let mut e = DMatrix::identity(d, d).scale(-lambda);
    for idx in w.min(d)..d {
        e[(idx, idx)] = -1.0;
    }
    let mut f = DMatrix::zeros(d, w);
    let mut g = DMatrix::zeros(w, d);
    for idx in 0..w.min(d) {
        f[(idx, idx)] = 1.0;
        g[(idx, idx)] = gamma * lambda * (1.0 - lambda);
    }
    let h = DMatrix::identity(w, w).scale(gamma * lambda);
    Controller { e, f, g, h }
}

const TEMPLATE_GAMMAS: [f64; 9] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
const TEMPLATE_LAMBDAS: [f64; 10] = [0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 250.0];

fn search(plant: &LinearPlant, config: &SynthesisConfig, strong: bool) -> Result<SynthesisResult> {
    if config.margin <= 0.0 {
        return Err(Error::InvalidArgument("stability margin must be positive".into()));
    }
    let widths = plant.widths.clone();
    let orders = match &config.orders {
        Some(o) => {
            if o.len() != widths.len() {
                return Err(Error::InvalidArgument(format!(
                    "expected {} controller orders, got {}",
                    widths.len(),
                    o.len()
                )));
            }
            o.clone()
        }
        None => widths.clone(),
    };
    let space = ParamSpace { widths: widths.clone(), orders: orders.clone() };

    // Penalized objective: closed-loop abscissa plus, for strong synthesis, a
    // proportional penalty on unstable internal dynamics.
    let objective = |controllers: &[Controller]| -> f64 {
        let abar = assemble_closed_loop_matrix(plant, controllers).expect("consistent dims");
        let a = spectral_abscissa(&abar);
        if strong {
            let worst_e = controllers
                .iter()
                .map(Controller::e_abscissa)
                .fold(f64::NEG_INFINITY, f64::max);
            a + 100.0 * (worst_e + config.margin).max(0.0)
        } else {
            a
        }
    };

    // Stage 1: anticipatory template grid (one eigensolve per point).
    let mut evaluations = 0usize;
    let mut grid: Vec<(f64, f64, f64)> = Vec::new(); // (objective, gamma, lambda)
    for &gm in &TEMPLATE_GAMMAS {
        for &lm in &TEMPLATE_LAMBDAS {
            let ctrls: Vec<Controller> = widths
                .iter()
                .zip(&orders)
                .map(|(&w, &d)| anticipatory_start(gm, lm, w, d))
                .collect();
            grid.push((objective(&ctrls), gm, lm));
            evaluations += 1;
        }
    }
    grid.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    if config.template == TemplateRestriction::Anticipatory {
        return Ok(finish_anticipatory(plant, config, &widths, &orders, grid, evaluations, strong));
    }

    // Stage 2: Nelder-Mead from template warm starts and random draws.
    let mut starts: Vec<DVector<f64>> = grid
        .iter()
        .take(3)
        .map(|&(_, gm, lm)| {
            let ctrls: Vec<Controller> = widths
                .iter()
                .zip(&orders)
                .map(|(&w, &d)| anticipatory_start(gm, lm, w, d))
                .collect();
            space.pack(&ctrls)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.random_starts {
        let theta = DVector::from_fn(space.dim(), |_, _| rng.gen_range(-1.0f64..1.0));
        starts.push(theta);
    }

    let remaining = config.budget.saturating_sub(evaluations).max(1);
    let per_start = (remaining / starts.len()).max(50);

    let runs: Vec<(usize, DVector<f64>, f64, usize)> = starts
        .into_par_iter()
        .enumerate()
        .map(|(idx, theta0)| {
            let mut local_evals = 0usize;
            let mut f = |theta: &DVector<f64>| {
                local_evals += 1;
                objective(&space.unpack(theta))
            };
            let (theta, val) = nelder_mead(&mut f, &theta0, 0.25, per_start);
            (idx, theta, val, local_evals)
        })
        .collect();

    let mut best: Option<(f64, f64, usize, DVector<f64>)> = None;
    for (idx, theta, val, ev) in runs {
        evaluations += ev;
        let norm = theta.norm();
        let key = (val, norm, idx);
        let better = match &best {
            None => true,
            Some((bv, bn, bi, _)) => {
                key.0 < *bv || (key.0 == *bv && (norm < *bn || (norm == *bn && idx < *bi)))
            }
        };
        if better {
            best = Some((val, norm, idx, theta));
        }
    }
    let (_, _, _, theta) = best.expect("at least one start");
    let mut controllers = space.unpack(&theta);

    if strong {
        // Projection: shift marginally unstable internal dynamics left.
        for c in &mut controllers {
            let a = c.e_abscissa();
            if c.order() > 0 && a > -config.margin {
                let shift = a + config.margin;
                for d in 0..c.order() {
                    c.e[(d, d)] -= shift;
                }
            }
        }
    }

    let abar = assemble_closed_loop_matrix(plant, &controllers)?;
    let abscissa = spectral_abscissa(&abar);
    let internally_stable: Vec<bool> =
        controllers.iter().map(Controller::internally_stable).collect();
    let stable_ok = !strong || internally_stable.iter().all(|&s| s);
    let success = abscissa < -config.margin && stable_ok;
    Ok(SynthesisResult {
        controllers,
        abscissa,
        internally_stable,
        evaluations,
        success,
        failure_reason: (!success).then(|| {
            format!(
                "budget exhausted: best abscissa {abscissa:.6} (margin -{})",
                config.margin
            )
        }),
    })
}

fn finish_anticipatory(
    plant: &LinearPlant,
    config: &SynthesisConfig,
    widths: &[usize],
    orders: &[usize],
    grid: Vec<(f64, f64, f64)>,
    mut evaluations: usize,
    strong: bool,
) -> SynthesisResult {
    // Refine the best grid point over (gamma, lambda) only.
    let objective = |gm: f64, lm: f64| -> f64 {
        if lm <= 1e-6 {
            return f64::INFINITY;
        }
        let ctrls: Vec<Controller> = widths
            .iter()
            .zip(orders)
            .map(|(&w, &d)| anticipatory_start(gm, lm, w, d))
            .collect();
        let abar = assemble_closed_loop_matrix(plant, &ctrls).expect("consistent dims");
        spectral_abscissa(&abar)
    };
    let (_, g0, l0) = grid[0];
    let mut local_evals = 0usize;
    let mut f = |theta: &DVector<f64>| {
        local_evals += 1;
        objective(theta[0], theta[1])
    };
    let budget = config.budget.saturating_sub(evaluations).max(50);
    let (theta, _) = nelder_mead(&mut f, &DVector::from_vec(vec![g0, l0]), 0.3, budget);
    evaluations += local_evals;
    let controllers: Vec<Controller> = widths
        .iter()
        .zip(orders)
        .map(|(&w, &d)| anticipatory_start(theta[0], theta[1].max(1e-6), w, d))
        .collect();
    let abar = assemble_closed_loop_matrix(plant, &controllers).expect("consistent dims");
    let abscissa = spectral_abscissa(&abar);
    let internally_stable: Vec<bool> =
        controllers.iter().map(Controller::internally_stable).collect();
    let stable_ok = !strong || internally_stable.iter().all(|&s| s);
    let success = abscissa < -config.margin && stable_ok;
    SynthesisResult {
        controllers,
        abscissa,
        internally_stable,
        evaluations,
        success,
        failure_reason: (!success).then(|| format!("anticipatory family reached {abscissa:.6}")),
    }
}

/// Standard Nelder-Mead with reflection/expansion/contraction/shrink.
fn nelder_mead(
    f: &mut impl FnMut(&DVector<f64>) -> f64,
    x0: &DVector<f64>,
    init_step: f64,
    max_evals: usize,
) -> (DVector<f64>, f64) {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &DVector<f64>, evals: &mut usize| -> f64 {
        *evals += 1;
        f(x)
    };
    let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.clone(), v0));
    for i in 0..n {
        let mut x = x0.clone();
        x[i] += init_step * x0[i].abs().max(1.0);
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
        if evals >= max_evals {
            simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
            return simplex.swap_remove(0);
        }
    }

    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let spread = simplex[n].1 - simplex[0].1;
        if spread.abs() < 1e-14 {
            break;
        }
        let centroid: DVector<f64> = {
            let mut c = DVector::zeros(n);
            for (x, _) in &simplex[..n] {
                c += x;
            }
            c / n as f64
        };
        let worst = simplex[n].clone();
        let reflected = &centroid * 2.0 - &worst.0;
        let fr = eval(&reflected, &mut evals);
        if fr < simplex[0].1 {
            let expanded = &centroid + (&reflected - &centroid) * 2.0;
            let fe = eval(&expanded, &mut evals);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let contracted = if fr < worst.1 {
                &centroid + (&reflected - &centroid) * 0.5
            } else {
                &centroid + (&worst.0 - &centroid) * 0.5
            };
            let fc = eval(&contracted, &mut evals);
            if fc < worst.1.min(fr) {
                simplex[n] = (contracted, fc);
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    entry.0 = (&best + &entry.0) * 0.5;
                    entry.1 = eval(&entry.0, &mut evals);
                    if evals >= max_evals {
                        break;
                    }
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    simplex.swap_remove(0)
}

/// Outcome of sampling the nonlinear closed loop around an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearVerification {
    pub converged_fraction: f64,
    pub max_final_error: f64,
}

/// Integrates the full nonlinear closed loop from `samples` random starts in
/// a `radius`-ball around the equilibrium state and reports the fraction that
/// end within `1e-4` of the equilibrium strategies by time `t_final`.
pub fn verify_nonlinear(
    game: &Game,
    eq: &MixedEquilibrium,
    dynamics: &[PlayerDynamics],
    radius: f64,
    samples: usize,
    t_final: f64,
    dt: f64,
    seed: u64,
) -> Result<NonlinearVerification> {
    let system = crate::dynamics::ClosedLoop::new(game.clone(), dynamics.to_vec())?;
    let eq_state = system.equilibrium_state(eq);
    let layout = system.layout();
    let ell = eq.reduced_dim();
    let aux: usize = layout.aux.iter().sum();
    let dim = 2 * ell + aux;
    let steps = (t_final / dt).round() as usize;

    let outcomes: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            // Uniform direction, radius scaled for a uniform ball draw.
            let mut dir = DVector::from_fn(dim, |_, _| {
                // Box-Muller from two uniforms.
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            });
            dir /= dir.norm();
            let r = radius * rng.gen_range(0.0f64..1.0).powf(1.0 / dim as f64);
            let delta = dir * r;

            let mut state = eq_state.clone();
            let mut off = 0;
            for i in 0..game.players() {
                let ni = eq.basis.player(i);
                let w = delta.rows(off, ni.ncols());
                off += ni.ncols();
                state.x[i] = &state.x[i] + ni * w;
            }
            for i in 0..game.players() {
                let len = state.v[i].len();
                state.v[i] = &state.v[i] + delta.rows(off, len);
                off += len;
            }
            for i in 0..game.players() {
                let len = state.xi[i].len();
                state.xi[i] = &state.xi[i] + delta.rows(off, len);
                off += len;
            }
            if state.x.iter().any(|x| x.min() <= 0.0) {
                // Radius too large for this direction: treat as failed.
                return f64::INFINITY;
            }
            match integrate_recorded(&system, &state, dt, t_final, steps.max(1)) {
                Ok(traj) => {
                    let fin = traj.final_state();
                    (0..game.players())
                        .map(|i| (&fin.x[i] - eq.profile.player(i)).amax())
                        .fold(0.0, f64::max)
                }
                Err(_) => f64::INFINITY,
            }
        })
        .collect();

    let converged = outcomes.iter().filter(|&&e| e < 1e-4).count();
    let max_final_error = outcomes.iter().fold(0.0f64, |a, &b| a.max(b));
    Ok(NonlinearVerification {
        converged_fraction: converged as f64 / samples.max(1) as f64,
        max_final_error,
    })
}

/// One row of a robustness sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessRow {
    pub delta: f64,
    pub stable_fraction: f64,
    pub stable: usize,
    pub unstable: usize,
    /// Samples whose perturbed equilibrium could not be re-found by Newton;
    /// reported, never silently dropped.
    pub indeterminate: usize,
}

/// For each perturbation size, samples games with every utility moved by less
/// than `delta`, re-finds the completely mixed equilibrium by Newton from the
/// nominal one, re-linearizes, and tests whether the *same* controllers keep
/// the closed loop stable.
pub fn robustness_sweep(
    game: &Game,
    eq: &MixedEquilibrium,
    controllers: &[Controller],
    families: &[DynamicsKind],
    deltas: &[f64],
    samples_per_delta: usize,
    seed: u64,
) -> Result<Vec<RobustnessRow>> {
    let mut rows = Vec::with_capacity(deltas.len());
    for (di, &delta) in deltas.iter().enumerate() {
        let outcomes: Vec<i8> = (0..samples_per_delta)
            .into_par_iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((di * samples_per_delta + s) as u64);
                let perturbed = game.perturbed(delta, &mut rng);
                let new_eq = match find_completely_mixed_ne(&perturbed, &eq.profile, 1e-10, 80) {
                    Ok(e) => e,
                    Err(_) => return -1i8, // indeterminate
                };
                let plant = match linearize_plant(&perturbed, &new_eq, families) {
                    Ok(p) => p,
                    Err(_) => return -1i8,
                };
                match assemble_closed_loop_matrix(&plant, controllers) {
                    Ok(abar) => i8::from(spectral_abscissa(&abar) < 0.0),
                    Err(_) => -1i8,
                }
            })
            .collect();
        let stable = outcomes.iter().filter(|&&o| o == 1).count();
        let unstable = outcomes.iter().filter(|&&o| o == 0).count();
        let indeterminate = outcomes.iter().filter(|&&o| o == -1).count();
        let decided = stable + unstable;
        rows.push(RobustnessRow {
            delta,
            stable_fraction: if decided > 0 { stable as f64 / decided as f64 } else { 0.0 },
            stable,
            unstable,
            indeterminate,
        });
    }
    Ok(rows)
}

/// Convenience: per-player dynamics wrapping a base family with synthesized
/// controllers (used to drive nonlinear verification and simulations).
pub fn wrapped_dynamics(
    families: &[DynamicsKind],
    controllers: &[Controller],
    actions: &[usize],
) -> Result<Vec<PlayerDynamics>> {
    families
        .iter()
        .zip(controllers)
        .zip(actions)
        .map(|((fam, ctrl), &k)| {
            let base = PlayerDynamics { kind: fam.clone(), controller: None };
            higher_order_wrap(base, ctrl.clone(), k)
        })
        .collect()
}

/// Equilibrium state helper re-exported for command-line flows.
pub fn equilibrium_state(
    game: &Game,
    eq: &MixedEquilibrium,
    dynamics: &[PlayerDynamics],
) -> Result<HigherOrderState> {
    let system = crate::dynamics::ClosedLoop::new(game.clone(), dynamics.to_vec())?;
    Ok(system.equilibrium_state(eq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::MixedProfile;
    use crate::games;

    fn mp_plant() -> (Game, MixedEquilibrium, LinearPlant) {
        let game = games::matching_pennies();
        let eq = MixedEquilibrium::at(&game, &MixedProfile::uniform(&[2, 2]), 1e-9).unwrap();
        let plant = linearize_plant(
            &game,
            &eq,
            &[DynamicsKind::Replicator, DynamicsKind::Replicator],
        )
        .unwrap();
        (game, eq, plant)
    }

    #[test]
    fn zero_controller_reproduces_plant_spectrum() {
        let (_, _, plant) = mp_plant();
        let zeros = vec![Controller::zero(2), Controller::zero(2)];
        let abar = assemble_closed_loop_matrix(&plant, &zeros).unwrap();
        assert_eq!(abar.shape(), plant.a.shape());
        assert!((abar - plant.a.clone()).amax() < 1e-14);
        // Spectrum of the open plant: +-i (replicator block) and -1, -1.
        let report = crate::linear::spectral_report(&plant.a).unwrap();
        assert_eq!(report.eigenvalues.len(), 4);
        let mut n_im = 0;
        let mut n_m1 = 0;
        for l in &report.eigenvalues {
            if (l.im.abs() - 1.0).abs() < 1e-9 && l.re.abs() < 1e-9 {
                n_im += 1;
            }
            if (l.re + 1.0).abs() < 1e-9 && l.im.abs() < 1e-9 {
                n_m1 += 1;
            }
        }
        assert_eq!((n_im, n_m1), (2, 2));
    }

    #[test]
    fn dimension_count_is_consistent() {
        let (_, _, plant) = mp_plant();
        let ctrls = vec![
            crate::dynamics::anticipatory_template(1.0, 2.0, 2).unwrap(),
            Controller::zero(2),
        ];
        let abar = assemble_closed_loop_matrix(&plant, &ctrls).unwrap();
        assert_eq!(abar.nrows(), 4 + 1);
        assert_eq!(
            crate::linear::spectral_report(&abar).unwrap().eigenvalues.len(),
            5
        );
    }

    #[test]
    fn synthesize_matching_pennies_succeeds() {
        let (game, eq, plant) = mp_plant();
        let config = SynthesisConfig { budget: 4000, seed: 7, ..Default::default() };
        let result = synthesize(&plant, &config).unwrap();
        assert!(result.success, "reason: {:?}", result.failure_reason);
        assert!(result.abscissa < -0.01);
        // Nonlinear verification around the equilibrium.
        let dynamics = wrapped_dynamics(
            &[DynamicsKind::Replicator, DynamicsKind::Replicator],
            &result.controllers,
            game.actions(),
        )
        .unwrap();
        let v = verify_nonlinear(&game, &eq, &dynamics, 0.01, 10, 200.0, 0.01, 3).unwrap();
        assert_eq!(v.converged_fraction, 1.0, "max err {}", v.max_final_error);
    }

    #[test]
    fn synthesize_fails_fast_on_fixed_mode() {
        let plant = LinearPlant {
            a: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            b_blocks: vec![DMatrix::zeros(2, 1)],
            c: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            top_left: DMatrix::from_row_slice(1, 1, &[1.0]),
            reduced_m: DMatrix::from_row_slice(1, 1, &[1.0]),
            input_blocks: vec![DMatrix::zeros(1, 1)],
            widths: vec![1],
            regular: true,
        };
        let result = synthesize(&plant, &SynthesisConfig::default()).unwrap();
        assert!(!result.success);
        assert!(result.failure_reason.unwrap().contains("decentralized fixed mode"));
        assert_eq!(result.evaluations, 0);
    }

    #[test]
    fn strong_synthesis_respects_internal_stability() {
        let game = games::matching_pennies();
        let eq = MixedEquilibrium::at(&game, &MixedProfile::uniform(&[2, 2]), 1e-9).unwrap();
        let plant = linearize_plant(
            &game,
            &eq,
            &[DynamicsKind::TargetGradient, DynamicsKind::TargetGradient],
        )
        .unwrap();
        let config = SynthesisConfig { budget: 4000, seed: 1, ..Default::default() };
        let result = synthesize_strong(&plant, &config).unwrap();
        assert!(result.success, "reason: {:?}", result.failure_reason);
        assert!(result.internally_stable.iter().all(|&s| s));
    }

    #[test]
    fn strong_synthesis_refuses_coordination_game() {
        let game = games::coordination_identity_2x2();
        let eq = MixedEquilibrium::at(&game, &MixedProfile::uniform(&[2, 2]), 1e-9).unwrap();
        let plant = linearize_plant(
            &game,
            &eq,
            &[DynamicsKind::Replicator, DynamicsKind::Replicator],
        )
        .unwrap();
        let result = synthesize_strong(&plant, &SynthesisConfig::default()).unwrap();
        assert!(!result.success);
        assert!(result
            .failure_reason
            .unwrap()
            .contains("not strongly stabilizable"));
    }

    #[test]
    fn determinism_same_seed_same_result() {
        let (_, _, plant) = mp_plant();
        let config = SynthesisConfig { budget: 1500, seed: 42, ..Default::default() };
        let a = synthesize(&plant, &config).unwrap();
        let b = synthesize(&plant, &config).unwrap();
        assert_eq!(a.abscissa.to_bits(), b.abscissa.to_bits());
        assert_eq!(a.evaluations, b.evaluations);
        for (ca, cb) in a.controllers.iter().zip(&b.controllers) {
            assert_eq!(ca.e.as_slice(), cb.e.as_slice());
            assert_eq!(ca.h.as_slice(), cb.h.as_slice());
        }
    }

    #[test]
    fn robustness_zero_delta_is_fully_stable() {
        let (game, eq, plant) = mp_plant();
        let config = SynthesisConfig { budget: 2000, seed: 5, ..Default::default() };
        let result = synthesize(&plant, &config).unwrap();
        assert!(result.success);
        let rows = robustness_sweep(
            &game,
            &eq,
            &result.controllers,
            &[DynamicsKind::Replicator, DynamicsKind::Replicator],
            &[0.0],
            5,
            11,
        )
        .unwrap();
        assert_eq!(rows[0].stable_fraction, 1.0);
        assert_eq!(rows[0].indeterminate, 0);
    }
}
