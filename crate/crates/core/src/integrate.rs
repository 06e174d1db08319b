//! Deterministic fixed-step RK4 integration of closed-loop and single-player
//! open systems, plus the asymptotic-best-response probe.

use nalgebra::DVector;

use crate::dynamics::{ClosedLoop, HigherOrderState, PlayerDynamics, StateLayout};
use crate::simplex::simplex_basis;
use crate::{Error, Result};

/// Per-player simplex drift beyond which a snapshot is renormalized.
pub const RENORM_TOL: f64 = 1e-12;
/// State-norm limit treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationMeta {
    pub method: &'static str,
    pub dt: f64,
    /// Number of per-player simplex renormalizations applied.
    pub renormalizations: usize,
}

/// Time-stamped snapshots of an integration run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<HigherOrderState>,
    /// Best-response payoff gap `max_i (max_k P_ik - x_i^T P_i)` per snapshot.
    pub payoff_gaps: Vec<f64>,
    pub layout: StateLayout,
    pub meta: IntegrationMeta,
}

impl Trajectory {
    pub fn final_state(&self) -> &HigherOrderState {
        self.states.last().expect("trajectory has at least one snapshot")
    }
}

/// One classical RK4 step.
pub fn rk4_step(
    f: &impl Fn(&DVector<f64>) -> DVector<f64>,
    y: &DVector<f64>,
    dt: f64,
) -> DVector<f64> {
    let k1 = f(y);
    let k2 = f(&(y + &k1 * (dt / 2.0)));
    let k3 = f(&(y + &k2 * (dt / 2.0)));
    let k4 = f(&(y + &k3 * dt));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Fixed-step RK4 integration recording every step.
pub fn integrate(
    system: &ClosedLoop,
    state0: &HigherOrderState,
    dt: f64,
    t_final: f64,
) -> Result<Trajectory> {
    integrate_recorded(system, state0, dt, t_final, 1)
}

/// Fixed-step RK4 integration recording every `record_every` steps (the final
/// state is always recorded). Strategies are renormalized onto the simplex
/// whenever the drift exceeds [`RENORM_TOL`]; renormalizations are counted in
/// the metadata. Divergence (non-finite state or norm above
/// [`DIVERGENCE_LIMIT`]) aborts with the last finite state.
pub fn integrate_recorded(
    system: &ClosedLoop,
    state0: &HigherOrderState,
    dt: f64,
    t_final: f64,
    record_every: usize,
) -> Result<Trajectory> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let record_every = record_every.max(1);
    let layout = system.layout();
    let f = |flat: &DVector<f64>| layout.flatten(&system.field(&layout.unflatten(flat)));

    let steps = (t_final / dt).round() as usize;
    let mut flat = layout.flatten(state0);
    let mut renorms = 0usize;

    let mut times = Vec::with_capacity(steps / record_every + 2);
    let mut states = Vec::with_capacity(steps / record_every + 2);
    let mut gaps = Vec::with_capacity(steps / record_every + 2);

    let mut record = |t: f64, flat: &DVector<f64>| {
        let s = layout.unflatten(flat);
        gaps.push(payoff_gap(system, &s));
        times.push(t);
        states.push(s);
    };
    record(0.0, &flat);

    for step in 1..=steps {
        let next = rk4_step(&f, &flat, dt);
        if next.iter().any(|v| !v.is_finite()) || next.norm() > DIVERGENCE_LIMIT {
            let t = step as f64 * dt;
            return Err(Error::Diverged {
                time: t,
                norm: next.norm(),
                last_state: flat,
            });
        }
        flat = next;
        renorms += renormalize(&layout, &mut flat);
        if step % record_every == 0 || step == steps {
            record(step as f64 * dt, &flat);
        }
    }

    Ok(Trajectory {
        times,
        states,
        payoff_gaps: gaps,
        layout,
        meta: IntegrationMeta { method: "rk4", dt, renormalizations: renorms },
    })
}

fn renormalize(layout: &StateLayout, flat: &mut DVector<f64>) -> usize {
    let mut count = 0;
    let mut off = 0;
    for &k in &layout.actions {
        let mut part = flat.rows_mut(off, k);
        let sum = part.iter().sum::<f64>();
        if (sum - 1.0).abs() > RENORM_TOL {
            part /= sum;
            count += 1;
        }
        off += k;
    }
    count
}

fn payoff_gap(system: &ClosedLoop, s: &HigherOrderState) -> f64 {
    let mut gap: f64 = 0.0;
    for i in 0..system.game.players() {
        let p = system.game.payoff_vector_raw(i, &s.x);
        gap = gap.max(p.max() - s.x[i].dot(&p));
    }
    gap
}

/// Result of probing one player's open-loop response to a constant payoff
/// vector.
#[derive(Debug, Clone)]
pub struct AbrReport {
    pub times: Vec<f64>,
    /// `g(t) = max_k p_k - x(t)^T p`.
    pub gaps: Vec<f64>,
    /// Tail average of the gap over the last tenth of the horizon.
    pub asymptotic_gap: f64,
    pub final_strategy: DVector<f64>,
}

/// Integrates a single player's dynamics with `p(t) = p_bar` held constant
/// and reports the best-response payoff gap.
pub fn abr_probe(
    dynamics: &PlayerDynamics,
    p_bar: &DVector<f64>,
    x0: &DVector<f64>,
    v0: &DVector<f64>,
    xi0: &DVector<f64>,
    dt: f64,
    t_final: f64,
) -> Result<AbrReport> {
    let k = x0.len();
    if p_bar.len() != k {
        return Err(Error::DimensionMismatch {
            player: 0,
            detail: format!("payoff vector has {} entries, strategy {}", p_bar.len(), k),
        });
    }
    let basis = simplex_basis(k)?;
    let aux = dynamics.aux_dim(k);
    if v0.len() != k - 1 || xi0.len() != aux {
        return Err(Error::DimensionMismatch {
            player: 0,
            detail: format!(
                "auxiliary state dims (v: {}, xi: {}) do not match (k-1: {}, aux: {aux})",
                v0.len(),
                xi0.len(),
                k - 1
            ),
        });
    }
    let dim = k + (k - 1) + aux;
    let f = |flat: &DVector<f64>| -> DVector<f64> {
        let x = flat.rows(0, k).clone_owned();
        let v = flat.rows(k, k - 1).clone_owned();
        let xi = flat.rows(2 * k - 1, aux).clone_owned();
        let (dx, dv, dxi) = dynamics.open_field(&basis, &x, &v, &xi, p_bar);
        let mut out = DVector::zeros(dim);
        out.rows_mut(0, k).copy_from(&dx);
        out.rows_mut(k, k - 1).copy_from(&dv);
        out.rows_mut(2 * k - 1, aux).copy_from(&dxi);
        out
    };

    let mut flat = DVector::zeros(dim);
    flat.rows_mut(0, k).copy_from(x0);
    flat.rows_mut(k, k - 1).copy_from(v0);
    flat.rows_mut(2 * k - 1, aux).copy_from(xi0);

    let best = p_bar.max();
    let steps = (t_final / dt).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut gaps = Vec::with_capacity(steps + 1);
    times.push(0.0);
    gaps.push(best - flat.rows(0, k).dot(p_bar));
    for step in 1..=steps {
        let next = rk4_step(&f, &flat, dt);
        if next.iter().any(|v| !v.is_finite()) || next.norm() > DIVERGENCE_LIMIT {
            return Err(Error::Diverged {
                time: step as f64 * dt,
                norm: next.norm(),
                last_state: flat,
            });
        }
        flat = next;
        // Keep the strategy on the simplex against round-off drift.
        let sum = flat.rows(0, k).iter().sum::<f64>();
        if (sum - 1.0).abs() > RENORM_TOL {
            let mut part = flat.rows_mut(0, k);
            part /= sum;
        }
        times.push(step as f64 * dt);
        gaps.push(best - flat.rows(0, k).dot(p_bar));
    }

    let tail = (gaps.len() / 10).max(1);
    let asymptotic_gap = gaps[gaps.len() - tail..].iter().sum::<f64>() / tail as f64;
    Ok(AbrReport {
        times,
        gaps,
        asymptotic_gap,
        final_strategy: flat.rows(0, k).clone_owned(),
    })
}
