//! Discrete-time bandit iterates whose mean dynamics are the continuous-time
//! closed loops.
//!
//! Players observe only realized scalar payoffs. Propensities `x_i` evolve by
//! reinforcement with step `delta_i / (t+1)`; strategies are the projection
//! of `x_i` onto the floored simplex (every action keeps probability at least
//! `epsilon`). Higher-order variants feed an importance-weighted payoff
//! estimate through the same washout/controller structure as the
//! continuous-time dynamics; when a controller is internally unstable, a
//! quadratic damping term plus exploration noise keeps the auxiliary iterates
//! bounded without changing the local mean dynamics.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::Controller;
use crate::game::{Game, MixedProfile};
use crate::simplex::{project_simplex, SimplexBasis};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BanditVariant {
    /// Reinforcement toward realized actions only.
    Standard,
    /// Washout + controller auxiliary states (requires stable `E_i`).
    Higher,
    /// As `Higher` plus quadratic damping and exploration noise on `xi_i`
    /// (for internally unstable controllers).
    Modified,
}

/// Validated configuration for bandit runs. Construct with
/// [`BanditConfig::new`] and adjust with the `with_*` methods (each
/// revalidates).
#[derive(Debug, Clone)]
pub struct BanditConfig {
    pub variant: BanditVariant,
    pub epsilon: f64,
    /// Per-player step scales.
    pub deltas: Vec<f64>,
    /// Conservative closed-form simplex bounds the defaults are derived from.
    pub delta_bounds: Vec<f64>,
    pub horizon: usize,
    pub controllers: Vec<Controller>,
    /// Damping thresholds `beta_i` (modified variant).
    pub betas: Vec<f64>,
    /// Noise amplitudes `L_i = c_i + eta_i + sqrt(beta_i)` (modified variant).
    pub noise_bounds: Vec<f64>,
    /// A-priori bounds on `|xi_i|` used for reporting and sanity checks.
    pub xi_bounds: Vec<f64>,
    pub seed: u64,
    /// Initial strategies are drawn in a tangent ball of this radius around
    /// the target equilibrium.
    pub init_radius: f64,
    /// Sup-norm radius of the converged verdict.
    pub convergence_tol: f64,
}

impl BanditConfig {
    pub fn new(
        game: &Game,
        variant: BanditVariant,
        controllers: Vec<Controller>,
        epsilon: f64,
        seed: u64,
    ) -> Result<Self> {
        let r_min = game.min_utility();
        if r_min <= 0.0 {
            return Err(Error::BanditConfig(format!(
                "bandit learning requires strictly positive utilities (min = {r_min}); \
                 add a positivity offset to the game"
            )));
        }
        for (i, &k) in game.actions().iter().enumerate() {
            if epsilon <= 0.0 || epsilon * k as f64 > 1.0 {
                return Err(Error::BanditConfig(format!(
                    "exploration floor epsilon = {epsilon} infeasible for player {i} with {k} actions"
                )));
            }
        }
        if variant != BanditVariant::Standard {
            if controllers.len() != game.players() {
                return Err(Error::BanditConfig(format!(
                    "need {} controllers, got {}",
                    game.players(),
                    controllers.len()
                )));
            }
            for (i, c) in controllers.iter().enumerate() {
                if c.strategy_dim() != game.num_actions(i) - 1 {
                    return Err(Error::BanditConfig(format!(
                        "controller {i} strategy dimension mismatch"
                    )));
                }
            }
        }
        if variant == BanditVariant::Higher {
            if let Some(i) = controllers.iter().position(|c| !c.internally_stable()) {
                return Err(Error::BanditConfig(format!(
                    "player {i} controller is internally unstable; use the modified variant"
                )));
            }
        }
        let r_max = game.max_abs_utility();
        let p_bound = r_max / epsilon; // |N^T Ptilde| <= r_max / eps
        let y_bound = 2.0 * p_bound; // v iterates stay within p_bound from v(0)=0

        let n = game.players();
        let mut betas = vec![0.0; n];
        let mut noise_bounds = vec![0.0; n];
        let mut xi_bounds = vec![0.0; n];
        let mut phi_bounds = vec![0.0; n];
        for i in 0..n {
            let c = if variant == BanditVariant::Standard {
                continue;
            } else {
                &controllers[i]
            };
            if c.order() == 0 {
                continue;
            }
            match variant {
                BanditVariant::Higher => {
                    let b = lyapunov_gram(&c.e).ok_or_else(|| {
                        Error::BanditConfig(format!(
                            "player {i}: Lyapunov equation unsolvable (is E_i stable?)"
                        ))
                    })?;
                    let eig = b.clone().symmetric_eigen();
                    let lmax = eig.eigenvalues.max();
                    let lmin = eig.eigenvalues.min();
                    let rho = 2.0 * op_norm(&(b * &c.f)) * y_bound;
                    xi_bounds[i] = 1.2 * rho * (lmax / lmin).sqrt();
                }
                BanditVariant::Modified => {
                    // Smallest power of two making E + E^T - 2 beta I stable
                    // with margin 0.1.
                    let sym_abscissa = {
                        let s = (&c.e + c.e.transpose()).scale(0.5);
                        s.symmetric_eigen().eigenvalues.max()
                    };
                    let mut beta = 0.125f64;
                    while beta < sym_abscissa + 0.1 {
                        beta *= 2.0;
                    }
                    betas[i] = beta;
                    let eta = op_norm(&c.f) * y_bound;
                    let cbound = op_norm(&c.e) * beta.sqrt() + beta * beta.sqrt();
                    let l = cbound + eta + beta.sqrt();
                    noise_bounds[i] = l;
                    let gap = beta - sym_abscissa;
                    let d = c.order() as f64;
                    xi_bounds[i] =
                        1.2 * beta.sqrt().max((eta + l * d.sqrt()) / gap);
                }
                BanditVariant::Standard => unreachable!(),
            }
            let ctrl = &controllers[i];
            phi_bounds[i] = op_norm(&ctrl.g) * xi_bounds[i] + op_norm(&ctrl.h) * y_bound;
        }

        let delta_bounds: Vec<f64> = (0..n)
            .map(|i| 1.0 / (r_max + 2.0 * phi_bounds.get(i).copied().unwrap_or(0.0)))
            .collect();
        let deltas = delta_bounds.iter().map(|b| 0.9 * b).collect();

        Ok(Self {
            variant,
            epsilon,
            deltas,
            delta_bounds,
            horizon: 100_000,
            controllers,
            betas,
            noise_bounds,
            xi_bounds,
            seed,
            init_radius: 0.05,
            convergence_tol: 0.1,
        })
    }

    /// Overrides the step scales (a tuned `delta` may exceed the conservative
    /// closed-form bound; positivity is then guarded at every step). The hard
    /// requirement `delta * r_max <= 1` is always enforced.
    pub fn with_deltas(mut self, game: &Game, deltas: Vec<f64>) -> Result<Self> {
        if deltas.len() != game.players() {
            return Err(Error::BanditConfig("one delta per player".into()));
        }
        let r_max = game.max_abs_utility();
        for (i, &d) in deltas.iter().enumerate() {
            if d < 0.0 || d * r_max > 1.0 {
                return Err(Error::BanditConfig(format!(
                    "delta {d} for player {i} violates delta * r_max <= 1"
                )));
            }
        }
        self.deltas = deltas;
        Ok(self)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_init_radius(mut self, r: f64) -> Self {
        self.init_radius = r;
        self
    }

    pub fn with_convergence_tol(mut self, tol: f64) -> Self {
        self.convergence_tol = tol;
        self
    }
}

/// Solves `E^T B + B E = -I` for symmetric positive definite `B` (stable E).
fn lyapunov_gram(e: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let d = e.nrows();
    let mut kron = DMatrix::zeros(d * d, d * d);
    // vec(E^T B + B E) = (I kron E^T + E^T kron I) vec(B)
    for r in 0..d {
        for c in 0..d {
            for rr in 0..d {
                for cc in 0..d {
                    // (I kron E^T): B column block structure, vec is column-major.
                    let row = c * d + r;
                    let col = cc * d + rr;
                    let mut val = 0.0;
                    if c == cc {
                        val += e[(rr, r)]; // (E^T)[r, rr]
                    }
                    if r == rr {
                        val += e[(cc, c)]; // (E^T kron I) term: E^T[c, cc]
                    }
                    kron[(row, col)] += val;
                }
            }
        }
    }
    let rhs = DVector::from_fn(d * d, |idx, _| {
        let (r, c) = (idx % d, idx / d);
        if r == c {
            -1.0
        } else {
            0.0
        }
    });
    let sol = kron.lu().solve(&rhs)?;
    let b = DMatrix::from_fn(d, d, |r, c| sol[c * d + r]);
    // Positive definiteness certifies stability of E.
    let eig = b.clone().symmetric_eigen();
    (eig.eigenvalues.min() > 0.0).then_some(b)
}

fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Per-player iterate state.
#[derive(Debug, Clone)]
pub struct BanditState {
    /// Propensities, exactly on the simplex.
    pub x: Vec<DVector<f64>>,
    /// Strategies: projection of `x` onto the floored simplex.
    pub sigma: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub xi: Vec<DVector<f64>>,
    pub t: usize,
}

impl BanditState {
    pub fn new(game: &Game, config: &BanditConfig, x0: &MixedProfile) -> Result<Self> {
        let n = game.players();
        let sigma = x0
            .parts()
            .iter()
            .map(|x| project_simplex(x, config.epsilon))
            .collect::<Result<Vec<_>>>()?;
        let (v, xi): (Vec<_>, Vec<_>) = (0..n)
            .map(|i| {
                let km1 = game.num_actions(i) - 1;
                let d = if config.variant == BanditVariant::Standard {
                    0
                } else {
                    config.controllers[i].order()
                };
                (DVector::zeros(km1), DVector::zeros(d))
            })
            .unzip();
        Ok(Self { x: x0.parts().to_vec(), sigma, v, xi, t: 0 })
    }

    pub fn sup_distance(&self, target: &MixedProfile) -> f64 {
        self.sigma
            .iter()
            .zip(target.parts())
            .map(|(s, t)| (s - t).amax())
            .fold(0.0, f64::max)
    }

    pub fn max_xi_norm(&self) -> f64 {
        self.xi.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Categorical draw from a strategy (reproducible given the generator state).
pub fn sample_action(sigma: &DVector<f64>, rng: &mut impl Rng) -> usize {
    let total: f64 = sigma.sum();
    let u: f64 = rng.gen_range(0.0..total);
    let mut acc = 0.0;
    for (idx, &p) in sigma.iter().enumerate() {
        acc += p;
        if u < acc {
            return idx;
        }
    }
    sigma.len() - 1
}

/// Importance-weighted payoff estimate `(r / sigma_a) e_a`.
pub fn payoff_estimate(realized: f64, action: usize, sigma: &DVector<f64>) -> DVector<f64> {
    debug_assert!(sigma[action] > 0.0, "action probability must be positive");
    let mut p = DVector::zeros(sigma.len());
    p[action] = realized / sigma[action];
    p
}

fn draw_joint_actions(state: &BanditState, rng: &mut impl Rng) -> Vec<usize> {
    state.sigma.iter().map(|s| sample_action(s, rng)).collect()
}

/// Standard-order bandit step: `x += (delta r / (t+1)) (e_a - x)`.
pub fn step_standard(
    state: &mut BanditState,
    game: &Game,
    config: &BanditConfig,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let actions = draw_joint_actions(state, rng);
    let t1 = (state.t + 1) as f64;
    for i in 0..game.players() {
        let r = game.utility(i, &actions);
        let coeff = config.deltas[i] * r / t1;
        let mut e_a = DVector::zeros(state.x[i].len());
        e_a[actions[i]] = 1.0;
        state.x[i] = &state.x[i] * (1.0 - coeff) + e_a * coeff;
        state.sigma[i] =
            project_simplex(&state.x[i], config.epsilon).expect("feasible floor");
    }
    state.t += 1;
    actions
}

/// Higher-order bandit step (washout + controller on the importance-weighted
/// payoff estimate). Returns the drawn actions and whether positivity of the
/// propensities survived (it always does when `delta` respects the
/// closed-form bound).
pub fn step_higher(
    state: &mut BanditState,
    game: &Game,
    config: &BanditConfig,
    rng: &mut impl Rng,
    basis: &SimplexBasis,
) -> (Vec<usize>, bool) {
    step_with_controller(state, game, config, rng, basis, false)
}

/// Modified step for internally unstable controllers: adds
/// `psi = -min(beta, |xi|^2) xi + Omega` to the `xi` update, with `Omega`
/// uniform on `[-L, L]` per component.
pub fn step_modified(
    state: &mut BanditState,
    game: &Game,
    config: &BanditConfig,
    rng: &mut impl Rng,
    basis: &SimplexBasis,
) -> (Vec<usize>, bool) {
    step_with_controller(state, game, config, rng, basis, true)
}

fn step_with_controller(
    state: &mut BanditState,
    game: &Game,
    config: &BanditConfig,
    rng: &mut impl Rng,
    basis: &SimplexBasis,
    modified: bool,
) -> (Vec<usize>, bool) {
    let actions = draw_joint_actions(state, rng);
    let t1 = (state.t + 1) as f64;
    let mut ok = true;
    for i in 0..game.players() {
        let r = game.utility(i, &actions);
        let kappa = config.deltas[i] / t1;
        let c = &config.controllers[i];
        let ni = basis.player(i);
        let p_tilde = payoff_estimate(r, actions[i], &state.sigma[i]);
        let np = ni.transpose() * &p_tilde;
        let y = &np - &state.v[i];
        let phi_tilde = ni * (&c.g * &state.xi[i] + &c.h * &y);

        // x update: r (e_a - x) + diag(phi - (x^T phi) 1) x, exactly
        // mass-preserving.
        let xphi = state.x[i].dot(&phi_tilde);
        let mut inc = DVector::zeros(state.x[i].len());
        for k in 0..inc.len() {
            inc[k] = -r * state.x[i][k] + (phi_tilde[k] - xphi) * state.x[i][k];
        }
        inc[actions[i]] += r;
        state.x[i] += inc * kappa;
        if state.x[i].min() <= 0.0 {
            ok = false;
        }

        let dv = (&np - &state.v[i]) * kappa;
        state.v[i] += dv;
        let mut dxi = &c.e * &state.xi[i] + &c.f * &y;
        if modified && c.order() > 0 {
            let m = config.betas[i].min(state.xi[i].norm_squared());
            let l = config.noise_bounds[i];
            let omega = DVector::from_fn(c.order(), |_, _| rng.gen_range(-l..l));
            dxi += omega - &state.xi[i] * m;
        }
        state.xi[i] += dxi * kappa;
        state.sigma[i] =
            project_simplex(&state.x[i], config.epsilon).expect("feasible floor");
    }
    state.t += 1;
    (actions, ok)
}

/// Mean dynamics of the controller-driven iterates at a frozen state: the
/// conditional expectation of the scaled increments.
pub fn mean_field(
    game: &Game,
    config: &BanditConfig,
    state: &BanditState,
    basis: &SimplexBasis,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let n = game.players();
    let mut dx = Vec::with_capacity(n);
    let mut dv = Vec::with_capacity(n);
    let mut dxi = Vec::with_capacity(n);
    for i in 0..n {
        let p = game.payoff_vector_raw(i, &state.sigma);
        let ni = basis.player(i);
        match config.variant {
            BanditVariant::Standard => {
                let sp = state.sigma[i].dot(&p);
                let mut d = DVector::zeros(p.len());
                for k in 0..p.len() {
                    d[k] = p[k] * state.sigma[i][k] - sp * state.x[i][k];
                }
                dx.push(d);
                dv.push(DVector::zeros(ni.ncols()));
                dxi.push(DVector::zeros(0));
            }
            BanditVariant::Higher | BanditVariant::Modified => {
                let c = &config.controllers[i];
                let np = ni.transpose() * &p;
                let y = &np - &state.v[i];
                let phi = ni * (&c.g * &state.xi[i] + &c.h * &y);
                let sp = state.sigma[i].dot(&p);
                let xphi = state.x[i].dot(&phi);
                let mut d = DVector::zeros(p.len());
                for k in 0..p.len() {
                    d[k] = p[k] * state.sigma[i][k] + phi[k] * state.x[i][k]
                        - (sp + xphi) * state.x[i][k];
                }
                dx.push(d);
                dv.push(y.clone());
                let mut dz = &c.e * &state.xi[i] + &c.f * &y;
                if config.variant == BanditVariant::Modified && c.order() > 0 {
                    let m = config.betas[i].min(state.xi[i].norm_squared());
                    dz -= &state.xi[i] * m;
                }
                dxi.push(dz);
            }
        }
    }
    (dx, dv, dxi)
}

/// Snapshot along a run (geometric time grid).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BanditSnapshot {
    pub t: usize,
    /// Sup-norm distance of the strategies to the target.
    pub distance: f64,
    /// Running average realized payoff (mean over players).
    pub mean_payoff: f64,
}

/// One seeded run of the bandit iterates.
#[derive(Debug, Clone)]
pub struct BanditRun {
    pub snapshots: Vec<BanditSnapshot>,
    pub initial_distance: f64,
    pub final_distance: f64,
    pub converged: bool,
    pub action_counts: Vec<Vec<u64>>,
    pub max_xi_norm: f64,
    /// True when a propensity left the open simplex (possible only for tuned
    /// step scales beyond the conservative bound).
    pub simplex_breach: bool,
}

/// Executes one run; `run_index` selects an independent, reproducible RNG
/// stream of the master seed.
pub fn run(
    game: &Game,
    target: &MixedProfile,
    config: &BanditConfig,
    run_index: u64,
) -> Result<BanditRun> {
    let basis = SimplexBasis::for_actions(game.actions())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(run_index);

    // Initial propensities in a tangent ball around the target.
    let mut parts = Vec::with_capacity(game.players());
    for i in 0..game.players() {
        let km1 = game.num_actions(i) - 1;
        let mut w = DVector::from_fn(km1, |_, _| rng.gen_range(-1.0f64..1.0));
        if w.norm() > 0.0 {
            w *= config.init_radius * rng.gen_range(0.0f64..1.0) / w.norm();
        }
        let mut x = target.player(i) + basis.player(i) * w;
        // Stay safely inside the open simplex.
        let floor = (config.epsilon * 0.5).min(1e-3);
        if x.min() < floor {
            x = project_simplex(&x, floor)?;
        }
        let sum = x.sum();
        x /= sum;
        parts.push(x);
    }
    let x0 = MixedProfile::new(parts)
        .map_err(|e| Error::BanditConfig(format!("initial draw invalid: {e}")))?;
    let mut state = BanditState::new(game, config, &x0)?;

    let initial_distance = state.sup_distance(target);
    let mut snapshots = Vec::new();
    let mut next_snapshot = 1usize;
    let mut action_counts: Vec<Vec<u64>> =
        game.actions().iter().map(|&k| vec![0u64; k]).collect();
    let mut payoff_sum = 0.0f64;
    let mut max_xi: f64 = 0.0;
    let mut breach = false;

    for t in 0..config.horizon {
        let (actions, ok) = match config.variant {
            BanditVariant::Standard => (step_standard(&mut state, game, config, &mut rng), true),
            BanditVariant::Higher => step_higher(&mut state, game, config, &mut rng, &basis),
            BanditVariant::Modified => step_modified(&mut state, game, config, &mut rng, &basis),
        };
        for (i, &a) in actions.iter().enumerate() {
            action_counts[i][a] += 1;
        }
        payoff_sum += (0..game.players())
            .map(|i| game.utility(i, &actions))
            .sum::<f64>()
            / game.players() as f64;
        max_xi = max_xi.max(state.max_xi_norm());
        if !ok {
            breach = true;
            break;
        }
        if t + 1 == next_snapshot || t + 1 == config.horizon {
            snapshots.push(BanditSnapshot {
                t: t + 1,
                distance: state.sup_distance(target),
                mean_payoff: payoff_sum / (t + 1) as f64,
            });
            next_snapshot = next_snapshot.saturating_mul(2);
        }
    }

    let final_distance = state.sup_distance(target);
    Ok(BanditRun {
        snapshots,
        initial_distance,
        final_distance,
        converged: !breach && final_distance < config.convergence_tol,
        action_counts,
        max_xi_norm: max_xi,
        simplex_breach: breach,
    })
}

/// Aggregate of independent Monte Carlo runs.
#[derive(Debug, Clone)]
pub struct MonteCarloReport {
    pub runs: usize,
    pub converged: usize,
    pub converged_fraction: f64,
    /// 95% Wilson interval on the convergence probability.
    pub ci95: (f64, f64),
    /// (q10, median, q90) of final distances.
    pub distance_quantiles: (f64, f64, f64),
    pub median_initial_distance: f64,
    pub max_xi_norm: f64,
    pub simplex_breaches: usize,
}

/// Runs `runs` independent seeded iterate streams in parallel and aggregates
/// convergence statistics.
pub fn monte_carlo(
    game: &Game,
    target: &MixedProfile,
    config: &BanditConfig,
    runs: usize,
) -> Result<MonteCarloReport> {
    let results: Vec<BanditRun> = (0..runs as u64)
        .into_par_iter()
        .map(|idx| run(game, target, config, idx))
        .collect::<Result<Vec<_>>>()?;
    let converged = results.iter().filter(|r| r.converged).count();
    let fraction = converged as f64 / runs.max(1) as f64;
    let mut finals: Vec<f64> = results.iter().map(|r| r.final_distance).collect();
    finals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut initials: Vec<f64> = results.iter().map(|r| r.initial_distance).collect();
    initials.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |v: &[f64], p: f64| -> f64 {
        if v.is_empty() {
            return f64::NAN;
        }
        v[((v.len() - 1) as f64 * p).round() as usize]
    };
    Ok(MonteCarloReport {
        runs,
        converged,
        converged_fraction: fraction,
        ci95: wilson_interval(converged, runs, 1.96),
        distance_quantiles: (q(&finals, 0.1), q(&finals, 0.5), q(&finals, 0.9)),
        median_initial_distance: q(&initials, 0.5),
        max_xi_norm: results.iter().map(|r| r.max_xi_norm).fold(0.0, f64::max),
        simplex_breaches: results.iter().filter(|r| r.simplex_breach).count(),
    })
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::anticipatory_template;
    use crate::games;
    use approx::assert_abs_diff_eq;

    fn offset_matching_pennies() -> Game {
        games::matching_pennies().with_offset(2.0)
    }

    fn higher_config(game: &Game) -> BanditConfig {
        let ctrl = anticipatory_template(0.5, 2.0, 2).unwrap();
        BanditConfig::new(
            game,
            BanditVariant::Higher,
            vec![ctrl.clone(), ctrl],
            0.01,
            1234,
        )
        .unwrap()
    }

    #[test]
    fn config_rejects_nonpositive_utilities() {
        let game = games::matching_pennies();
        let err = BanditConfig::new(&game, BanditVariant::Standard, vec![], 0.01, 0);
        assert!(matches!(err, Err(Error::BanditConfig(_))));
    }

    #[test]
    fn config_rejects_unstable_controller_for_higher() {
        let game = offset_matching_pennies();
        let unstable = Controller::new(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[-40.0]),
            DMatrix::from_row_slice(1, 1, &[-20.0]),
        )
        .unwrap();
        let err = BanditConfig::new(
            &game,
            BanditVariant::Higher,
            vec![unstable.clone(), unstable.clone()],
            0.01,
            0,
        );
        assert!(err.is_err());
        // The modified variant accepts it and picks beta with margin.
        let cfg = BanditConfig::new(
            &game,
            BanditVariant::Modified,
            vec![unstable.clone(), unstable],
            0.01,
            0,
        )
        .unwrap();
        for (i, &beta) in cfg.betas.iter().enumerate() {
            let s = (&cfg.controllers[i].e + cfg.controllers[i].e.transpose()).scale(0.5)
                - DMatrix::identity(1, 1).scale(beta);
            assert!(
                s.symmetric_eigen().eigenvalues.max() < -0.05,
                "beta {beta} lacks margin"
            );
            assert!(cfg.noise_bounds[i] > 0.0);
        }
    }

    #[test]
    fn sampling_matches_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sigma = DVector::from_vec(vec![0.99, 0.01]);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| sample_action(&sigma, &mut rng) == 0)
            .count() as f64;
        // 3-sigma binomial band around 0.99.
        let sd = (0.99f64 * 0.01 / n as f64).sqrt();
        assert!((ones / n as f64 - 0.99).abs() < 3.0 * sd + 1e-4);

        let uniform = DVector::from_element(4, 0.25);
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_action(&uniform, &mut rng)] += 1;
        }
        // Chi-square with 3 dof at alpha = 0.001 is 16.27.
        let expected = n as f64 / 4.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 16.27, "chi2 = {chi2}");
    }

    #[test]
    fn payoff_estimate_values_and_bound() {
        let sigma = DVector::from_vec(vec![0.5, 0.5]);
        let p = payoff_estimate(2.0, 0, &sigma);
        assert_eq!(p.as_slice(), &[4.0, 0.0]);
        // With the exploration floor the estimate is bounded by r_max / eps.
        let eps = 0.01;
        let floor = DVector::from_vec(vec![1.0 - eps, eps]);
        let p = payoff_estimate(3.0, 1, &floor);
        assert!(p.amax() <= 3.0 / eps + 1e-12);
    }

    #[test]
    fn payoff_estimate_is_conditionally_unbiased() {
        // E[Ptilde | state] = P(sigma_{-i}) over the joint action draw.
        let game = offset_matching_pennies();
        let cfg = higher_config(&game);
        let x0 = MixedProfile::from_rows(&[vec![0.6, 0.4], vec![0.45, 0.55]]).unwrap();
        let state = BanditState::new(&game, &cfg, &x0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let mut mean = DVector::zeros(2);
        for _ in 0..n {
            let a = draw_joint_actions(&state, &mut rng);
            let r = game.utility(0, &a);
            mean += payoff_estimate(r, a[0], &state.sigma[0]);
        }
        mean /= n as f64;
        let expected = game.payoff_vector_raw(0, &state.sigma);
        // 3-sigma Monte Carlo band (estimate components are bounded by
        // r_max/eps; empirical sd per sqrt(n) is far below this slack).
        assert!((mean - expected).amax() < 0.05);
    }

    #[test]
    fn standard_step_convex_combination_edge() {
        // delta * r = 1 at t = 0 moves x exactly to the drawn vertex.
        let game = Game::polymatrix(
            vec![2, 2],
            vec![
                crate::game::Edge {
                    from: 0,
                    to: 1,
                    matrix: DMatrix::from_element(2, 2, 1.0),
                },
                crate::game::Edge {
                    from: 1,
                    to: 0,
                    matrix: DMatrix::from_element(2, 2, 1.0),
                },
            ],
        )
        .unwrap();
        let mut cfg = BanditConfig::new(&game, BanditVariant::Standard, vec![], 0.01, 7).unwrap();
        cfg = cfg.with_deltas(&game, vec![1.0, 1.0]).unwrap();
        let x0 = MixedProfile::uniform(&[2, 2]);
        let mut state = BanditState::new(&game, &cfg, &x0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let actions = step_standard(&mut state, &game, &cfg, &mut rng);
        for i in 0..2 {
            assert_abs_diff_eq!(state.x[i][actions[i]], 1.0, epsilon = 1e-15);
        }
        // Zero step scale freezes the state.
        let mut cfg0 = BanditConfig::new(&game, BanditVariant::Standard, vec![], 0.01, 7).unwrap();
        cfg0 = cfg0.with_deltas(&game, vec![0.0, 0.0]).unwrap();
        let mut frozen = BanditState::new(&game, &cfg0, &x0).unwrap();
        step_standard(&mut frozen, &game, &cfg0, &mut rng);
        assert_eq!(frozen.x[0], x0.player(0).clone_owned());
    }

    #[test]
    fn zero_controller_higher_step_matches_standard() {
        let game = offset_matching_pennies();
        let zero = Controller::zero(2);
        let cfg_h = BanditConfig::new(
            &game,
            BanditVariant::Higher,
            vec![zero.clone(), zero],
            0.05,
            99,
        )
        .unwrap();
        let cfg_s = BanditConfig::new(&game, BanditVariant::Standard, vec![], 0.05, 99).unwrap();
        // Align step scales (bounds differ in general).
        let cfg_h = cfg_h.with_deltas(&game, vec![0.1, 0.1]).unwrap();
        let cfg_s = cfg_s.with_deltas(&game, vec![0.1, 0.1]).unwrap();
        let basis = SimplexBasis::for_actions(game.actions()).unwrap();
        let x0 = MixedProfile::from_rows(&[vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let mut sh = BanditState::new(&game, &cfg_h, &x0).unwrap();
        let mut ss = BanditState::new(&game, &cfg_s, &x0).unwrap();
        let mut rng_h = ChaCha8Rng::seed_from_u64(13);
        let mut rng_s = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            step_higher(&mut sh, &game, &cfg_h, &mut rng_h, &basis);
            step_standard(&mut ss, &game, &cfg_s, &mut rng_s);
        }
        for i in 0..2 {
            assert!((sh.x[i].clone() - ss.x[i].clone()).amax() < 1e-12);
        }
    }

    #[test]
    fn modified_damping_clamps() {
        let e = DMatrix::from_row_slice(1, 1, &[0.5]);
        let ctrl = Controller::new(
            e,
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
        )
        .unwrap();
        let game = offset_matching_pennies();
        let cfg = BanditConfig::new(
            &game,
            BanditVariant::Modified,
            vec![ctrl.clone(), ctrl],
            0.01,
            5,
        )
        .unwrap();
        // m(0) = 0 and m clamps at beta for large xi.
        assert!(cfg.betas[0] >= 0.5);
        let m_small = cfg.betas[0].min(0.0);
        assert_eq!(m_small, 0.0);
        let xi_large = DVector::from_vec(vec![10.0]).norm_squared();
        assert_eq!(cfg.betas[0].min(xi_large), cfg.betas[0]);
    }

    #[test]
    fn simplex_preserved_over_long_runs() {
        let game = offset_matching_pennies();
        let cfg = higher_config(&game);
        let basis = SimplexBasis::for_actions(game.actions()).unwrap();
        let x0 = MixedProfile::from_rows(&[vec![0.55, 0.45], vec![0.5, 0.5]]).unwrap();
        let mut state = BanditState::new(&game, &cfg, &x0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200_000 {
            let (_, ok) = step_higher(&mut state, &game, &cfg, &mut rng, &basis);
            assert!(ok);
        }
        for x in &state.x {
            assert!(x.min() > 0.0);
            assert!((x.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn step_size_schedule_sums() {
        // sum kappa diverges (grows like log), sum kappa^2 converges.
        let delta = 0.5f64;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut s1_at_1e3 = 0.0;
        for t in 0..1_000_000usize {
            let k = delta / (t as f64 + 1.0);
            s1 += k;
            s2 += k * k;
            if t == 999 {
                s1_at_1e3 = s1;
            }
        }
        assert!(s1 > s1_at_1e3 + delta * 6.0, "partial sums keep growing");
        assert!(s2 < delta * delta * std::f64::consts::PI.powi(2) / 6.0 + 1e-9);
    }

    #[test]
    fn frozen_state_mean_increment_matches_field() {
        let game = offset_matching_pennies();
        let cfg = higher_config(&game);
        let basis = SimplexBasis::for_actions(game.actions()).unwrap();
        let x0 = MixedProfile::from_rows(&[vec![0.62, 0.38], vec![0.41, 0.59]]).unwrap();
        let mut state = BanditState::new(&game, &cfg, &x0).unwrap();
        state.v[0][0] = 0.3;
        state.xi[0][0] = -0.2;
        state.t = 9; // kappa = delta / 10
        let (fx, fv, fxi) = mean_field(&game, &cfg, &state, &basis);

        let n = 50_000;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut mean_dx = DVector::zeros(2);
        let mut mean_dv = DVector::zeros(1);
        let mut mean_dxi = DVector::zeros(1);
        let mut sq_dx = DVector::zeros(2);
        for _ in 0..n {
            let mut s = state.clone();
            let kappa = cfg.deltas[0] / 10.0;
            step_higher(&mut s, &game, &cfg, &mut rng, &basis);
            let inc = (s.x[0].clone() - state.x[0].clone()) / kappa;
            sq_dx += inc.map(|v| v * v);
            mean_dx += inc;
            mean_dv += (s.v[0].clone() - state.v[0].clone()) / kappa;
            mean_dxi += (s.xi[0].clone() - state.xi[0].clone()) / kappa;
        }
        mean_dx /= n as f64;
        mean_dv /= n as f64;
        mean_dxi /= n as f64;
        sq_dx /= n as f64;
        for k in 0..2 {
            let var = (sq_dx[k] - mean_dx[k] * mean_dx[k]).max(0.0);
            let se = (var / n as f64).sqrt();
            assert!(
                (mean_dx[k] - fx[0][k]).abs() < 3.0 * se + 1e-9,
                "coordinate {k}: mean {} vs field {} (se {se})",
                mean_dx[k],
                fx[0][k]
            );
        }
        assert!((mean_dv[0] - fv[0][0]).abs() < 0.05);
        assert!((mean_dxi[0] - fxi[0][0]).abs() < 0.05);
    }

    #[test]
    fn wilson_interval_shape() {
        let (lo, hi) = wilson_interval(0, 100, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        assert!(lo > 0.39 && hi < 0.61);
        let (lo, _) = wilson_interval(30, 100, 1.96);
        assert!(lo > 0.0, "nonzero successes exclude zero");
    }

    #[test]
    fn run_is_reproducible_and_bounded() {
        let game = offset_matching_pennies();
        let cfg = higher_config(&game).with_horizon(2_000).with_init_radius(0.1);
        let target = MixedProfile::uniform(&[2, 2]);
        let a = run(&game, &target, &cfg, 3).unwrap();
        let b = run(&game, &target, &cfg, 3).unwrap();
        assert_eq!(a.final_distance.to_bits(), b.final_distance.to_bits());
        assert_eq!(a.action_counts, b.action_counts);
        assert!(!a.simplex_breach);
        // Snapshot times are increasing.
        for w in a.snapshots.windows(2) {
            assert!(w[0].t < w[1].t);
        }
    }
}
