//! Finite games over mixed strategies.
//!
//! A game is stored either as a full utility tensor (one flat row-major array
//! per player over joint actions) or as a polymatrix edge list with
//! `R_i(x) = sum_j x_i^T M_ij x_j`. Both encodings expose the same payoff
//! interface; the payoff vector `P_i(x_{-i})` lists the expected utility of
//! each pure action of player `i` against the opponents' mixed strategies.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-12;

/// A mixed-strategy profile: one probability vector per player.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedProfile {
    parts: Vec<DVector<f64>>,
}

impl MixedProfile {
    /// Validates that every part is entrywise nonnegative and sums to one
    /// within `1e-12`.
    pub fn new(parts: Vec<DVector<f64>>) -> Result<Self> {
        for (i, x) in parts.iter().enumerate() {
            if x.len() < 2 {
                return Err(Error::InvalidProfile(format!(
                    "player {i} has fewer than 2 actions"
                )));
            }
            if x.iter().any(|&p| p < -SIMPLEX_TOL || !p.is_finite()) {
                return Err(Error::InvalidProfile(format!(
                    "player {i} has a negative or non-finite entry"
                )));
            }
            if (x.sum() - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidProfile(format!(
                    "player {i} probabilities sum to {} (expected 1)",
                    x.sum()
                )));
            }
        }
        Ok(Self { parts })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows.iter().map(|r| DVector::from_vec(r.clone())).collect())
    }

    pub fn uniform(actions: &[usize]) -> Self {
        Self {
            parts: actions
                .iter()
                .map(|&k| DVector::from_element(k, 1.0 / k as f64))
                .collect(),
        }
    }

    pub fn players(&self) -> usize {
        self.parts.len()
    }

    pub fn player(&self, i: usize) -> &DVector<f64> {
        &self.parts[i]
    }

    pub fn parts(&self) -> &[DVector<f64>] {
        &self.parts
    }

    /// Smallest probability across all players.
    pub fn min_entry(&self) -> f64 {
        self.parts
            .iter()
            .map(|x| x.min())
            .fold(f64::INFINITY, f64::min)
    }

    /// True when every entry exceeds `margin`.
    pub fn is_interior(&self, margin: f64) -> bool {
        self.min_entry() > margin
    }

    /// Entrywise sup distance to another profile.
    pub fn sup_distance(&self, other: &MixedProfile) -> f64 {
        self.parts
            .iter()
            .zip(&other.parts)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }
}

/// One directed polymatrix edge: player `from` earns `x_from^T matrix x_to`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub matrix: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payoff {
    /// Per player, a flat array indexed row-major over joint actions
    /// `(a_1, ..., a_n)`: the index of `a` is `sum_l a_l * prod_{m>l} k_m`.
    Tensor(Vec<Vec<f64>>),
    Polymatrix(Vec<Edge>),
}

/// A finite game: action counts plus one of the two payoff encodings.
#[derive(Debug, Clone, PartialEq)]
pub struct Game {
    actions: Vec<usize>,
    payoff: Payoff,
}

/// Verdict of [`Game::verify_ne`].
#[derive(Debug, Clone, PartialEq)]
pub struct NeVerdict {
    pub is_ne: bool,
    /// Unique maximizing action for every player, with margin above `tol`.
    pub is_strict: bool,
    /// Interior profile whose payoff vectors are constant per player.
    pub is_completely_mixed: bool,
    /// Common payoff levels, present when completely mixed.
    pub alphas: Option<Vec<f64>>,
}

impl Game {
    pub fn tensor(actions: Vec<usize>, utilities: Vec<Vec<f64>>) -> Result<Self> {
        validate_actions(&actions)?;
        if utilities.len() != actions.len() {
            return Err(Error::InvalidGame(format!(
                "expected {} utility arrays, got {}",
                actions.len(),
                utilities.len()
            )));
        }
        let joint: usize = actions.iter().product();
        for (i, u) in utilities.iter().enumerate() {
            if u.len() != joint {
                return Err(Error::InvalidGame(format!(
                    "player {i} utility array has length {} (expected {joint})",
                    u.len()
                )));
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidGame(format!(
                    "player {i} utility array has a non-finite entry"
                )));
            }
        }
        Ok(Self {
            actions,
            payoff: Payoff::Tensor(utilities),
        })
    }

    pub fn polymatrix(actions: Vec<usize>, edges: Vec<Edge>) -> Result<Self> {
        validate_actions(&actions)?;
        let n = actions.len();
        for e in &edges {
            if e.from >= n || e.to >= n || e.from == e.to {
                return Err(Error::InvalidGame(format!(
                    "edge ({}, {}) references an invalid player pair",
                    e.from, e.to
                )));
            }
            if e.matrix.nrows() != actions[e.from] || e.matrix.ncols() != actions[e.to] {
                return Err(Error::InvalidGame(format!(
                    "edge ({}, {}) matrix is {}x{}, expected {}x{}",
                    e.from,
                    e.to,
                    e.matrix.nrows(),
                    e.matrix.ncols(),
                    actions[e.from],
                    actions[e.to]
                )));
            }
        }
        Ok(Self {
            actions,
            payoff: Payoff::Polymatrix(edges),
        })
    }

    pub fn players(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn num_actions(&self, i: usize) -> usize {
        self.actions[i]
    }

    pub fn payoff(&self) -> &Payoff {
        &self.payoff
    }

    /// Utility `r_i(a)` of a joint pure-action profile.
    pub fn utility(&self, i: usize, joint: &[usize]) -> f64 {
        match &self.payoff {
            Payoff::Tensor(u) => u[i][self.joint_index(joint)],
            Payoff::Polymatrix(edges) => edges
                .iter()
                .filter(|e| e.from == i)
                .map(|e| e.matrix[(joint[e.from], joint[e.to])])
                .sum(),
        }
    }

    /// Row-major index of a joint action profile.
    pub fn joint_index(&self, joint: &[usize]) -> usize {
        debug_assert_eq!(joint.len(), self.actions.len());
        let mut idx = 0;
        for (l, &a) in joint.iter().enumerate() {
            debug_assert!(a < self.actions[l]);
            idx = idx * self.actions[l] + a;
        }
        idx
    }

    /// Smallest utility across all players and joint actions.
    pub fn min_utility(&self) -> f64 {
        let mut min = f64::INFINITY;
        self.for_each_joint(|joint| {
            for i in 0..self.players() {
                min = min.min(self.utility(i, joint));
            }
        });
        min
    }

    /// Largest absolute utility across all players and joint actions.
    pub fn max_abs_utility(&self) -> f64 {
        let mut max = 0.0f64;
        self.for_each_joint(|joint| {
            for i in 0..self.players() {
                max = max.max(self.utility(i, joint).abs());
            }
        });
        max
    }

    fn for_each_joint(&self, mut f: impl FnMut(&[usize])) {
        let n = self.players();
        let mut joint = vec![0usize; n];
        loop {
            f(&joint);
            let mut l = n;
            loop {
                if l == 0 {
                    return;
                }
                l -= 1;
                joint[l] += 1;
                if joint[l] < self.actions[l] {
                    break;
                }
                joint[l] = 0;
            }
        }
    }

    fn check_profile(&self, x: &MixedProfile) -> Result<()> {
        if x.players() != self.players() {
            return Err(Error::DimensionMismatch {
                player: x.players().min(self.players()),
                detail: format!(
                    "profile has {} players, game has {}",
                    x.players(),
                    self.players()
                ),
            });
        }
        for i in 0..self.players() {
            if x.player(i).len() != self.actions[i] {
                return Err(Error::DimensionMismatch {
                    player: i,
                    detail: format!(
                        "strategy has {} entries, player has {} actions",
                        x.player(i).len(),
                        self.actions[i]
                    ),
                });
            }
        }
        Ok(())
    }

    /// Payoff vector `P_i(x_{-i})`: entry `kappa` is the expected utility of
    /// pure action `kappa` against the opponents' strategies in `x` (the own
    /// component of `x` is ignored).
    pub fn payoff_vector(&self, i: usize, x: &MixedProfile) -> Result<DVector<f64>> {
        self.check_profile(x)?;
        Ok(self.payoff_vector_raw(i, x.parts()))
    }

    /// Unvalidated payoff vector over raw per-player weight vectors; used in
    /// integration hot paths where simplex drift is handled by the caller.
    pub fn payoff_vector_raw(&self, i: usize, parts: &[DVector<f64>]) -> DVector<f64> {
        let ki = self.actions[i];
        match &self.payoff {
            Payoff::Polymatrix(edges) => {
                let mut p = DVector::zeros(ki);
                for e in edges.iter().filter(|e| e.from == i) {
                    p += &e.matrix * &parts[e.to];
                }
                p
            }
            Payoff::Tensor(u) => {
                let mut p = DVector::zeros(ki);
                let n = self.players();
                let mut joint = vec![0usize; n];
                // Iterate over opponents' joint actions; accumulate each slice.
                loop {
                    let mut prob = 1.0;
                    for j in 0..n {
                        if j != i {
                            prob *= parts[j][joint[j]];
                        }
                    }
                    if prob != 0.0 {
                        for kappa in 0..ki {
                            joint[i] = kappa;
                            p[kappa] += prob * u[i][self.joint_index(&joint)];
                        }
                        joint[i] = 0;
                    }
                    // Advance over opponents only.
                    let mut l = n;
                    'adv: loop {
                        if l == 0 {
                            return p;
                        }
                        l -= 1;
                        if l == i {
                            continue;
                        }
                        joint[l] += 1;
                        if joint[l] < self.actions[l] {
                            break 'adv;
                        }
                        joint[l] = 0;
                    }
                }
            }
        }
    }

    /// Expected utility `R_i(x) = x_i^T P_i(x_{-i})`.
    pub fn expected_utility(&self, i: usize, x: &MixedProfile) -> Result<f64> {
        let p = self.payoff_vector(i, x)?;
        Ok(x.player(i).dot(&p))
    }

    /// Nash-equilibrium verdict at a profile.
    ///
    /// `is_ne` holds when no player can gain more than `tol` by deviating to
    /// a pure action. `is_strict` additionally requires a unique maximizing
    /// action with margin above `tol` for every player. `is_completely_mixed`
    /// requires an interior profile whose payoff vectors have max-min spread
    /// at most `tol` per player; the common payoff levels are then returned.
    pub fn verify_ne(&self, x: &MixedProfile, tol: f64) -> Result<NeVerdict> {
        self.check_profile(x)?;
        let mut is_ne = true;
        let mut is_strict = true;
        let mut completely_mixed = x.is_interior(0.0);
        let mut alphas = Vec::with_capacity(self.players());
        for i in 0..self.players() {
            let p = self.payoff_vector(i, x)?;
            let value = x.player(i).dot(&p);
            let max = p.max();
            if max - value > tol {
                is_ne = false;
            }
            // Strictness: unique argmax with margin, and the player already
            // plays it purely.
            let mut sorted: Vec<f64> = p.iter().copied().collect();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let unique_max = sorted.len() >= 2 && sorted[0] - sorted[1] > tol;
            let argmax = p.imax();
            if !(unique_max && (x.player(i)[argmax] - 1.0).abs() <= tol) {
                is_strict = false;
            }
            if max - p.min() > tol {
                completely_mixed = false;
            }
            alphas.push(p.mean());
        }
        let is_completely_mixed = is_ne && completely_mixed;
        Ok(NeVerdict {
            is_ne,
            is_strict: is_ne && is_strict,
            is_completely_mixed,
            alphas: is_completely_mixed.then_some(alphas),
        })
    }

    /// Same game with a constant added to every utility (used to satisfy the
    /// positivity requirement of the bandit setting; the strategic structure
    /// is unchanged).
    pub fn with_offset(&self, c: f64) -> Game {
        let payoff = match &self.payoff {
            Payoff::Tensor(u) => Payoff::Tensor(
                u.iter()
                    .map(|arr| arr.iter().map(|v| v + c).collect())
                    .collect(),
            ),
            // A constant per-edge offset of c / (#outgoing edges) yields a
            // +c shift of every realized utility.
            Payoff::Polymatrix(edges) => {
                let n = self.players();
                let mut out_deg = vec![0usize; n];
                for e in edges {
                    out_deg[e.from] += 1;
                }
                Payoff::Polymatrix(
                    edges
                        .iter()
                        .map(|e| Edge {
                            from: e.from,
                            to: e.to,
                            matrix: e.matrix.add_scalar(c / out_deg[e.from] as f64),
                        })
                        .collect(),
                )
            }
        };
        Game {
            actions: self.actions.clone(),
            payoff,
        }
    }

    /// Entrywise-jittered copy: every utility moves by less than `delta`.
    pub fn perturbed(&self, delta: f64, rng: &mut impl rand::Rng) -> Game {
        let payoff = match &self.payoff {
            Payoff::Tensor(u) => Payoff::Tensor(
                u.iter()
                    .map(|arr| {
                        arr.iter()
                            .map(|&v| v + delta * rng.gen_range(-1.0f64..1.0))
                            .collect()
                    })
                    .collect(),
            ),
            Payoff::Polymatrix(edges) => Payoff::Polymatrix(
                edges
                    .iter()
                    .map(|e| Edge {
                        from: e.from,
                        to: e.to,
                        matrix: e.matrix.map(|v| v + delta * rng.gen_range(-1.0f64..1.0)),
                    })
                    .collect(),
            ),
        };
        Game {
            actions: self.actions.clone(),
            payoff,
        }
    }

    /// Expands a polymatrix game into the equivalent utility tensor.
    pub fn to_tensor(&self) -> Game {
        match &self.payoff {
            Payoff::Tensor(_) => self.clone(),
            Payoff::Polymatrix(_) => {
                let joint: usize = self.actions.iter().product();
                let mut utilities = vec![vec![0.0; joint]; self.players()];
                self.for_each_joint(|a| {
                    let idx = self.joint_index(a);
                    for i in 0..self.players() {
                        utilities[i][idx] = self.utility(i, a);
                    }
                });
                Game {
                    actions: self.actions.clone(),
                    payoff: Payoff::Tensor(utilities),
                }
            }
        }
    }
}

fn validate_actions(actions: &[usize]) -> Result<()> {
    if actions.len() < 2 {
        return Err(Error::InvalidGame("a game needs at least 2 players".into()));
    }
    if let Some(i) = actions.iter().position(|&k| k < 2) {
        return Err(Error::InvalidGame(format!(
            "player {i} has {} actions (minimum 2)",
            actions[i]
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pure_strategy_column_read_off() {
        let g = games::matching_pennies();
        let x = MixedProfile::from_rows(&[vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        let p = g.payoff_vector(0, &x).unwrap();
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn matching_pennies_symmetric_value_is_zero() {
        let g = games::matching_pennies();
        let x = MixedProfile::uniform(&[2, 2]);
        assert_abs_diff_eq!(g.expected_utility(0, &x).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.expected_utility(1, &x).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn tensor_payoff_matches_appendix_polynomial_form() {
        // Three players, two actions; generic interior point. Entry kappa of
        // P_1 must equal r_{k,1,1} x21 x31 + r_{k,1,2} x21 x32 + ...
        let r1 = vec![3.0, -1.0, 2.0, 0.5, 1.0, 4.0, -2.0, 0.25];
        let g = Game::tensor(
            vec![2, 2, 2],
            vec![r1.clone(), vec![0.0; 8], vec![0.0; 8]],
        )
        .unwrap();
        let x = MixedProfile::from_rows(&[vec![0.5, 0.5], vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let p = g.payoff_vector(0, &x).unwrap();
        let (x21, x22, x31, x32) = (0.3, 0.7, 0.6, 0.4);
        let expect0 = r1[0] * x21 * x31 + r1[1] * x21 * x32 + r1[2] * x22 * x31 + r1[3] * x22 * x32;
        let expect1 = r1[4] * x21 * x31 + r1[5] * x21 * x32 + r1[6] * x22 * x31 + r1[7] * x22 * x32;
        assert_abs_diff_eq!(p[0], expect0, epsilon = 1e-14);
        assert_abs_diff_eq!(p[1], expect1, epsilon = 1e-14);
    }

    #[test]
    fn pure_profile_reads_tensor_entry() {
        let g = games::jordan_cycle_3p();
        let x = MixedProfile::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(
            g.expected_utility(0, &x).unwrap(),
            g.utility(0, &[0, 1, 0]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn verify_ne_on_known_equilibria() {
        let mp = games::matching_pennies();
        let v = mp
            .verify_ne(&MixedProfile::uniform(&[2, 2]), 1e-9)
            .unwrap();
        assert!(v.is_ne && v.is_completely_mixed && !v.is_strict);
        assert_abs_diff_eq!(v.alphas.unwrap()[0], 0.0, epsilon = 1e-12);

        let coord = games::coordination_identity_2x2();
        let strict = coord
            .verify_ne(
                &MixedProfile::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap(),
                1e-9,
            )
            .unwrap();
        assert!(strict.is_ne && strict.is_strict && !strict.is_completely_mixed);

        let not_ne = coord
            .verify_ne(
                &MixedProfile::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
                1e-9,
            )
            .unwrap();
        assert!(!not_ne.is_ne);
    }

    #[test]
    fn ordinal_potential_equilibrium_is_completely_mixed() {
        let g = games::ordinal_potential_3x3();
        let x = MixedProfile::from_rows(&[
            vec![0.5, 1.0 / 6.0, 1.0 / 3.0],
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        ])
        .unwrap();
        let v = g.verify_ne(&x, 1e-9).unwrap();
        assert!(v.is_completely_mixed);
        let alphas = v.alphas.unwrap();
        assert_abs_diff_eq!(alphas[0], 4.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(alphas[1], 13.0 / 6.0, epsilon = 1e-12);
        // alpha equals the expected utility at the equilibrium.
        assert_abs_diff_eq!(
            g.expected_utility(0, &x).unwrap(),
            4.0 / 3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn dimension_mismatch_names_player() {
        let g = games::matching_pennies();
        let bad = MixedProfile::from_rows(&[vec![0.5, 0.5], vec![0.2, 0.3, 0.5]]).unwrap();
        match g.payoff_vector(0, &bad) {
            Err(Error::DimensionMismatch { player, .. }) => assert_eq!(player, 1),
            other => panic!("expected dimension mismatch, got {other:?}"),
        }
    }

    #[test]
    fn offset_shifts_every_utility() {
        for g in [games::matching_pennies(), games::jordan_cycle_3p()] {
            let shifted = g.with_offset(2.5);
            let mut joint = vec![0usize; g.players()];
            for i in 0..g.players() {
                assert_abs_diff_eq!(
                    shifted.utility(i, &joint),
                    g.utility(i, &joint) + 2.5,
                    epsilon = 1e-12
                );
            }
            joint.fill(1);
            assert_abs_diff_eq!(
                shifted.utility(0, &joint),
                g.utility(0, &joint) + 2.5,
                epsilon = 1e-12
            );
        }
    }
}
