//! Learning dynamics as open systems, higher-order washout wrappers, and
//! closed-loop assembly.
//!
//! A player's dynamics map an external payoff signal `p_i(t)` to a mixed
//! strategy; they never see opponents' utilities (uncoupledness). Higher-order
//! terms add a washout state `v_i` (whose output `y_i = N_i^T p_i - v_i`
//! vanishes on constant inputs) and a controller state `xi_i`:
//!
//! ```text
//!   v_i'  = N_i^T p_i - v_i
//!   xi_i' = E_i xi_i + F_i y_i
//!   phi_i = N_i (G_i xi_i + H_i y_i)
//! ```
//!
//! The base field is then driven by `p_i + phi_i`. At any constant input the
//! wrapper output `phi_i` vanishes, so stationary points of the base dynamics
//! survive wrapping.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::equilibrium::MixedEquilibrium;
use crate::game::Game;
use crate::linear::spectral_abscissa;
use crate::simplex::{project_simplex, SimplexBasis};
use crate::{Error, Result};

/// Linear higher-order terms `(E, F, G, H)` acting on the washout output.
///
/// For a player with `k` actions and controller order `d`: `E` is `d x d`,
/// `F` is `d x (k-1)`, `G` is `(k-1) x d`, `H` is `(k-1) x (k-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

impl Controller {
    pub fn new(e: DMatrix<f64>, f: DMatrix<f64>, g: DMatrix<f64>, h: DMatrix<f64>) -> Result<Self> {
        let d = e.nrows();
        let km1 = h.nrows();
        if e.ncols() != d || f.nrows() != d || f.ncols() != km1 || g.nrows() != km1
            || g.ncols() != d || h.ncols() != km1
        {
            return Err(Error::InvalidArgument(format!(
                "controller dimensions inconsistent: E {}x{}, F {}x{}, G {}x{}, H {}x{}",
                e.nrows(), e.ncols(), f.nrows(), f.ncols(),
                g.nrows(), g.ncols(), h.nrows(), h.ncols()
            )));
        }
        Ok(Self { e, f, g, h })
    }

    /// Order `d` of the internal state.
    pub fn order(&self) -> usize {
        self.e.nrows()
    }

    /// Reduced strategy dimension `k - 1` this controller acts on.
    pub fn strategy_dim(&self) -> usize {
        self.h.nrows()
    }

    /// Zero-order controller (`d = 0`, `H = 0`): wrapping with it is the
    /// identity on the base dynamics.
    pub fn zero(k: usize) -> Self {
        Self {
            e: DMatrix::zeros(0, 0),
            f: DMatrix::zeros(0, k - 1),
            g: DMatrix::zeros(k - 1, 0),
            h: DMatrix::zeros(k - 1, k - 1),
        }
    }

    /// Recomputed internal-stability flag: spectral abscissa of `E` < 0.
    /// Order-zero controllers are vacuously stable.
    pub fn internally_stable(&self) -> bool {
        self.order() == 0 || spectral_abscissa(&self.e) < 0.0
    }

    /// Spectral abscissa of `E` (`-inf` for order zero).
    pub fn e_abscissa(&self) -> f64 {
        if self.order() == 0 {
            f64::NEG_INFINITY
        } else {
            spectral_abscissa(&self.e)
        }
    }
}

/// Washout-form realization of anticipatory dynamics.
///
/// Anticipatory terms drive the base field with `p + gamma*lambda*(p - z)`,
/// `z' = lambda (p - z)`, a myopic prediction of the payoff trend. In
/// transfer terms the reduced modification is `gamma*lambda*s/(s+lambda)`;
/// factoring out the washout `s/(s+1)` leaves the controller
/// `C(s) = gamma*lambda*(s+1)/(s+lambda)`, realized as
///
/// ```text
///   E = -lambda I,  F = I,  G = gamma*lambda*(1-lambda) I,  H = gamma*lambda I.
/// ```
///
/// With `v(0) = xi(0) = 0` this reproduces the anticipatory trajectory whose
/// predictor starts at `N^T z(0) = 0`, and the washout structure preserves
/// stationary points for every `(gamma, lambda)`.
pub fn anticipatory_template(gamma: f64, lambda: f64, k: usize) -> Result<Controller> {
    if lambda <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "anticipatory template needs lambda > 0, got {lambda}"
        )));
    }
    let km1 = k - 1;
    let id = DMatrix::identity(km1, km1);
    Controller::new(
        id.scale(-lambda),
        id.clone(),
        id.scale(gamma * lambda * (1.0 - lambda)),
        id.scale(gamma * lambda),
    )
}

/// Base (standard-order) dynamics family.
#[derive(Clone)]
pub enum DynamicsKind {
    /// `x' = diag(p - (x^T p) 1) x`
    Replicator,
    /// `x' = Proj_simplex[x + p] - x`
    TargetGradient,
    /// Exponentially discounted learning: replicator driven by `p - s` with
    /// score state `s' = p - s`. Carries its own auxiliary state (order `k`)
    /// and cannot take a washout wrapper.
    Edl,
    /// User-supplied standard-order field `f(x, p) -> dx`.
    Custom(Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>),
}

impl fmt::Debug for DynamicsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DynamicsKind::Replicator => write!(f, "Replicator"),
            DynamicsKind::TargetGradient => write!(f, "TargetGradient"),
            DynamicsKind::Edl => write!(f, "Edl"),
            DynamicsKind::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Replicator field as an open system: `dx = diag(p - (x^T p) 1) x`.
pub fn replicator_field(x: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
    let avg = x.dot(p);
    let mut dx = x.clone();
    for i in 0..x.len() {
        dx[i] = (p[i] - avg) * x[i];
    }
    dx
}

/// Target gradient play field: `dx = Proj[x + p] - x`.
pub fn target_gradient_field(x: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
    let proj = project_simplex(&(x + p), 0.0).expect("eps = 0 is always feasible");
    proj - x
}

/// One player's learning dynamics: a base family plus an optional
/// washout-form higher-order wrapper.
#[derive(Debug, Clone)]
pub struct PlayerDynamics {
    pub kind: DynamicsKind,
    pub controller: Option<Controller>,
}

impl PlayerDynamics {
    pub fn replicator() -> Self {
        Self { kind: DynamicsKind::Replicator, controller: None }
    }

    pub fn target_gradient() -> Self {
        Self { kind: DynamicsKind::TargetGradient, controller: None }
    }

    pub fn edl() -> Self {
        Self { kind: DynamicsKind::Edl, controller: None }
    }

    pub fn custom(
        f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { kind: DynamicsKind::Custom(Arc::new(f)), controller: None }
    }

    /// Auxiliary-state dimension for a player with `k` actions.
    pub fn aux_dim(&self, k: usize) -> usize {
        match &self.kind {
            DynamicsKind::Edl => k,
            _ => self.controller.as_ref().map_or(0, Controller::order),
        }
    }

    /// Standard-order field of the base family.
    pub fn base_field(&self, x: &DVector<f64>, q: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            DynamicsKind::Replicator | DynamicsKind::Edl => replicator_field(x, q),
            DynamicsKind::TargetGradient => target_gradient_field(x, q),
            DynamicsKind::Custom(f) => f(x, q),
        }
    }

    /// Open-system derivative of `(x, v, xi)` under external input `p`.
    pub fn open_field(
        &self,
        basis_i: &DMatrix<f64>,
        x: &DVector<f64>,
        v: &DVector<f64>,
        xi: &DVector<f64>,
        p: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let y = basis_i.transpose() * p - v;
        match &self.kind {
            DynamicsKind::Edl => {
                // Score state s lives in the xi slot; ds = p - s = q.
                let q = p - xi;
                (replicator_field(x, &q), y, q)
            }
            _ => match &self.controller {
                None => (self.base_field(x, p), y, DVector::zeros(0)),
                Some(c) => {
                    let u = &c.g * xi + &c.h * &y;
                    let q = p + basis_i * u;
                    let dxi = &c.e * xi + &c.f * &y;
                    (self.base_field(x, &q), y, dxi)
                }
            },
        }
    }
}

/// Attaches a washout-form controller to a base family; the pair must agree
/// on the strategy dimension. Wrapping with [`Controller::zero`] leaves the
/// base dynamics extensionally unchanged.
pub fn higher_order_wrap(base: PlayerDynamics, ctrl: Controller, k: usize) -> Result<PlayerDynamics> {
    if matches!(base.kind, DynamicsKind::Edl) {
        return Err(Error::InvalidArgument(
            "exponentially discounted learning carries its own auxiliary state and takes no wrapper"
                .into(),
        ));
    }
    if ctrl.strategy_dim() != k - 1 {
        return Err(Error::DimensionMismatch {
            player: 0,
            detail: format!(
                "controller acts on dimension {}, player strategy dimension is {}",
                ctrl.strategy_dim(),
                k - 1
            ),
        });
    }
    Ok(PlayerDynamics { kind: base.kind, controller: Some(ctrl) })
}

/// Full state of the coupled system: per player a strategy `x_i`, washout
/// state `v_i`, and auxiliary state `xi_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct HigherOrderState {
    pub x: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub xi: Vec<DVector<f64>>,
}

/// Flattening order: all strategies, then all washout states, then all
/// auxiliary states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    pub actions: Vec<usize>,
    pub aux: Vec<usize>,
}

impl StateLayout {
    pub fn dim(&self) -> usize {
        let k: usize = self.actions.iter().sum();
        let v: usize = self.actions.iter().map(|k| k - 1).sum();
        let a: usize = self.aux.iter().sum();
        k + v + a
    }

    pub fn flatten(&self, s: &HigherOrderState) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        let mut off = 0;
        for x in &s.x {
            out.rows_mut(off, x.len()).copy_from(x);
            off += x.len();
        }
        for v in &s.v {
            out.rows_mut(off, v.len()).copy_from(v);
            off += v.len();
        }
        for xi in &s.xi {
            out.rows_mut(off, xi.len()).copy_from(xi);
            off += xi.len();
        }
        out
    }

    pub fn unflatten(&self, flat: &DVector<f64>) -> HigherOrderState {
        let mut off = 0;
        let mut take = |len: usize| {
            let v = flat.rows(off, len).clone_owned();
            off += len;
            v
        };
        let x = self.actions.iter().map(|&k| take(k)).collect();
        let v = self.actions.iter().map(|&k| take(k - 1)).collect();
        let xi = self.aux.iter().map(|&d| take(d)).collect();
        HigherOrderState { x, v, xi }
    }
}

/// Learning dynamics in feedback with a game: an autonomous vector field over
/// [`HigherOrderState`]. Heterogeneous per-player families are allowed.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub game: Game,
    pub players: Vec<PlayerDynamics>,
    pub basis: SimplexBasis,
}

impl ClosedLoop {
    pub fn new(game: Game, players: Vec<PlayerDynamics>) -> Result<Self> {
        if players.len() != game.players() {
            return Err(Error::InvalidArgument(format!(
                "closed loop needs one dynamics per player: game has {}, got {}",
                game.players(),
                players.len()
            )));
        }
        for (i, d) in players.iter().enumerate() {
            if let Some(c) = &d.controller {
                if c.strategy_dim() != game.num_actions(i) - 1 {
                    return Err(Error::DimensionMismatch {
                        player: i,
                        detail: format!(
                            "controller strategy dimension {} vs k_i - 1 = {}",
                            c.strategy_dim(),
                            game.num_actions(i) - 1
                        ),
                    });
                }
            }
        }
        let basis = SimplexBasis::for_actions(game.actions())?;
        Ok(Self { game, players, basis })
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout {
            actions: self.game.actions().to_vec(),
            aux: self
                .players
                .iter()
                .enumerate()
                .map(|(i, d)| d.aux_dim(self.game.num_actions(i)))
                .collect(),
        }
    }

    /// Autonomous field, substituting `p_i = P_i(x_{-i})`.
    pub fn field(&self, s: &HigherOrderState) -> HigherOrderState {
        let n = self.game.players();
        let mut dx = Vec::with_capacity(n);
        let mut dv = Vec::with_capacity(n);
        let mut dxi = Vec::with_capacity(n);
        for i in 0..n {
            let p = self.game.payoff_vector_raw(i, &s.x);
            let (a, b, c) =
                self.players[i].open_field(self.basis.player(i), &s.x[i], &s.v[i], &s.xi[i], &p);
            dx.push(a);
            dv.push(b);
            dxi.push(c);
        }
        HigherOrderState { x: dx, v: dv, xi: dxi }
    }

    /// The stationary state associated with a completely mixed equilibrium:
    /// `x = x*`, `v_i = N_i^T P_i(x*)` (zero at a completely mixed
    /// equilibrium), `xi = 0` (for discounted-score players, `s = P_i(x*)`).
    pub fn equilibrium_state(&self, eq: &MixedEquilibrium) -> HigherOrderState {
        let n = self.game.players();
        let mut v = Vec::with_capacity(n);
        let mut xi = Vec::with_capacity(n);
        for i in 0..n {
            let p = self.game.payoff_vector_raw(i, eq.profile.parts());
            v.push(self.basis.player(i).transpose() * &p);
            xi.push(match &self.players[i].kind {
                DynamicsKind::Edl => p,
                _ => DVector::zeros(self.players[i].aux_dim(self.game.num_actions(i))),
            });
        }
        HigherOrderState { x: eq.profile.parts().to_vec(), v, xi }
    }

    /// Field norm at a state (stationarity diagnostic).
    pub fn field_norm(&self, s: &HigherOrderState) -> f64 {
        let d = self.field(s);
        let layout = self.layout();
        layout.flatten(&d).norm()
    }
}
