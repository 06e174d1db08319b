//! Completely mixed equilibria: payoff Jacobians, the regularity test, and a
//! damped-Newton root finder.
//!
//! At a completely mixed equilibrium the payoff vector of every player is
//! constant, `P_i(x*_{-i}) = alpha_i 1`. Local analysis needs the blocks
//! `M_ij = grad_{x_j} P_i(x*)` and the reduced Jacobian `M = N^T M N` whose
//! non-singularity (the regularity assumption) makes the equilibrium
//! isolated.

use nalgebra::{DMatrix, DVector};

use crate::game::{Game, MixedProfile, Payoff};
use crate::simplex::SimplexBasis;
use crate::{Error, Result};

/// Relative singular-value threshold declaring the reduced Jacobian regular.
pub const REGULARITY_RANK_TOL: f64 = 1e-8;

/// Payoff-gradient blocks at a profile.
#[derive(Debug, Clone)]
pub struct PayoffJacobians {
    /// `blocks[i][j] = grad_{x_j} P_i` (`k_i x k_j`); the diagonal is zero.
    pub blocks: Vec<Vec<DMatrix<f64>>>,
    /// Reduced Jacobian `N^T M N` of side `sum_i (k_i - 1)`.
    pub reduced: DMatrix<f64>,
}

impl PayoffJacobians {
    /// Stacked full matrix `M` with rows `M_i = [M_i1 ... M_in]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let total: usize = self.blocks.iter().map(|r| r[0].nrows()).sum();
        let mut out = DMatrix::zeros(total, total);
        let mut r = 0;
        for row in &self.blocks {
            let mut c = 0;
            for b in row {
                out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
                c += b.ncols();
            }
            r += row[0].nrows();
        }
        out
    }
}

/// Regularity verdict: non-singularity of the reduced payoff Jacobian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityReport {
    pub regular: bool,
    pub sigma_min: f64,
}

/// A verified completely mixed equilibrium with its local data.
#[derive(Debug, Clone)]
pub struct MixedEquilibrium {
    pub profile: MixedProfile,
    pub alphas: Vec<f64>,
    pub basis: SimplexBasis,
    pub jacobians: PayoffJacobians,
    pub regular: bool,
    pub sigma_min: f64,
}

impl MixedEquilibrium {
    /// Verifies that `profile` is a completely mixed equilibrium of `game`
    /// (within `tol`) and assembles basis, Jacobian blocks, and regularity.
    pub fn at(game: &Game, profile: &MixedProfile, tol: f64) -> Result<Self> {
        let verdict = game.verify_ne(profile, tol)?;
        if !verdict.is_completely_mixed {
            return Err(Error::NotCompletelyMixed(format!(
                "verify_ne: is_ne={}, interior={}",
                verdict.is_ne,
                profile.is_interior(0.0)
            )));
        }
        let basis = SimplexBasis::for_actions(game.actions())?;
        let jacobians = jacobian_blocks_at(game, profile, &basis);
        let reg = regularity_of(&jacobians.reduced);
        Ok(Self {
            profile: profile.clone(),
            alphas: verdict.alphas.expect("completely mixed"),
            basis,
            jacobians,
            regular: reg.regular,
            sigma_min: reg.sigma_min,
        })
    }

    pub fn reduced_dim(&self) -> usize {
        self.basis.reduced_dim()
    }
}

/// Analytic payoff Jacobian blocks at a completely mixed equilibrium.
///
/// For polymatrix games `M_ij` is the (summed) edge matrix; for tensors it is
/// the derivative of the expected-payoff polynomial. Errors when the profile
/// is not a completely mixed equilibrium.
pub fn payoff_jacobians(game: &Game, profile: &MixedProfile, tol: f64) -> Result<PayoffJacobians> {
    let verdict = game.verify_ne(profile, tol)?;
    if !verdict.is_completely_mixed {
        return Err(Error::NotCompletelyMixed(
            "payoff_jacobians requires a completely mixed equilibrium".into(),
        ));
    }
    let basis = SimplexBasis::for_actions(game.actions())?;
    Ok(jacobian_blocks_at(game, profile, &basis))
}

/// Jacobian blocks at an arbitrary interior profile (no equilibrium check);
/// this is the map the Newton iteration differentiates.
pub fn jacobian_blocks_at(
    game: &Game,
    profile: &MixedProfile,
    basis: &SimplexBasis,
) -> PayoffJacobians {
    let n = game.players();
    let mut blocks: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            if i == j {
                row.push(DMatrix::zeros(game.num_actions(i), game.num_actions(j)));
            } else {
                row.push(payoff_gradient_block(game, i, j, profile));
            }
        }
        blocks.push(row);
    }
    let ell = basis.reduced_dim();
    let mut reduced = DMatrix::zeros(ell, ell);
    let offsets: Vec<usize> = game
        .actions()
        .iter()
        .scan(0, |acc, &k| {
            let o = *acc;
            *acc += k - 1;
            Some(o)
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let b = basis.player(i).transpose() * &blocks[i][j] * basis.player(j);
            reduced
                .view_mut((offsets[i], offsets[j]), (b.nrows(), b.ncols()))
                .copy_from(&b);
        }
    }
    PayoffJacobians { blocks, reduced }
}

fn payoff_gradient_block(game: &Game, i: usize, j: usize, profile: &MixedProfile) -> DMatrix<f64> {
    let (ki, kj) = (game.num_actions(i), game.num_actions(j));
    match game.payoff() {
        Payoff::Polymatrix(edges) => {
            let mut m = DMatrix::zeros(ki, kj);
            for e in edges.iter().filter(|e| e.from == i && e.to == j) {
                m += &e.matrix;
            }
            m
        }
        Payoff::Tensor(u) => {
            let n = game.players();
            let mut m = DMatrix::zeros(ki, kj);
            let mut joint = vec![0usize; n];
            loop {
                // Probability of the "other" players (all but i and j).
                let mut prob = 1.0;
                for l in 0..n {
                    if l != i && l != j {
                        prob *= profile.player(l)[joint[l]];
                    }
                }
                if prob != 0.0 {
                    for kappa in 0..ki {
                        joint[i] = kappa;
                        for aj in 0..kj {
                            joint[j] = aj;
                            m[(kappa, aj)] += prob * u[i][game.joint_index(&joint)];
                        }
                    }
                    joint[i] = 0;
                    joint[j] = 0;
                }
                let mut l = n;
                let done = loop {
                    if l == 0 {
                        break true;
                    }
                    l -= 1;
                    if l == i || l == j {
                        continue;
                    }
                    joint[l] += 1;
                    if joint[l] < game.num_actions(l) {
                        break false;
                    }
                    joint[l] = 0;
                };
                if done {
                    return m;
                }
            }
        }
    }
}

fn regularity_of(reduced: &DMatrix<f64>) -> RegularityReport {
    let svd = reduced.clone().svd(false, false);
    let sigma_max = svd.singular_values.max();
    let sigma_min = svd.singular_values.min();
    RegularityReport {
        regular: sigma_min > REGULARITY_RANK_TOL * sigma_max.max(1e-300),
        sigma_min,
    }
}

/// Non-singularity check of the reduced payoff Jacobian at an equilibrium.
pub fn check_regularity(game: &Game, profile: &MixedProfile, tol: f64) -> Result<RegularityReport> {
    let jac = payoff_jacobians(game, profile, tol)?;
    Ok(regularity_of(&jac.reduced))
}

/// Damped Newton iteration for a completely mixed equilibrium.
///
/// Solves the stationarity system `w -> N^T P(x0 + N w) = 0` in reduced
/// coordinates; the Jacobian of this map is the reduced payoff Jacobian, so
/// regularity gives local quadratic convergence. Backtracking keeps the
/// iterate strictly interior.
pub fn find_completely_mixed_ne(
    game: &Game,
    x0: &MixedProfile,
    tol: f64,
    max_iter: usize,
) -> Result<MixedEquilibrium> {
    if !x0.is_interior(0.0) {
        return Err(Error::InvalidProfile(
            "Newton initial guess must be interior".into(),
        ));
    }
    let basis = SimplexBasis::for_actions(game.actions())?;
    let interior_floor = 1e-9;
    let mut current = x0.clone();

    let residual_of = |profile: &MixedProfile| -> DVector<f64> {
        let mut parts = Vec::with_capacity(game.players());
        for i in 0..game.players() {
            let p = game.payoff_vector_raw(i, profile.parts());
            parts.push(basis.player(i).transpose() * p);
        }
        stack_vectors(&parts)
    };

    let mut res = residual_of(&current);
    for _ in 0..max_iter {
        if res.norm() < tol {
            return MixedEquilibrium::at(game, &current, tol.max(1e-8));
        }
        let jac = jacobian_blocks_at(game, &current, &basis);
        let step = jac
            .reduced
            .clone()
            .full_piv_lu()
            .solve(&(-&res))
            .ok_or(Error::NewtonFailed {
                residual: res.norm(),
                iterations: max_iter,
            })?;

        // Backtrack: stay interior and decrease the residual norm.
        let mut t = 1.0;
        let mut accepted = false;
        while t >= 1e-6 {
            if let Some(candidate) = apply_step(&current, &basis, &step, t, interior_floor) {
                let cand_res = residual_of(&candidate);
                if cand_res.norm() < res.norm() * (1.0 - 1e-4 * t) || cand_res.norm() < tol {
                    current = candidate;
                    res = cand_res;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            // Any step leaves the interior or fails to decrease the residual.
            return if apply_step(&current, &basis, &step, 1e-6, interior_floor).is_none() {
                Err(Error::LeftInterior)
            } else {
                Err(Error::NewtonFailed {
                    residual: res.norm(),
                    iterations: max_iter,
                })
            };
        }
    }
    if res.norm() < tol {
        return MixedEquilibrium::at(game, &current, tol.max(1e-8));
    }
    Err(Error::NewtonFailed {
        residual: res.norm(),
        iterations: max_iter,
    })
}

fn apply_step(
    profile: &MixedProfile,
    basis: &SimplexBasis,
    step: &DVector<f64>,
    t: f64,
    floor: f64,
) -> Option<MixedProfile> {
    let mut parts = Vec::with_capacity(profile.players());
    let mut offset = 0;
    for i in 0..profile.players() {
        let ni = basis.player(i);
        let w = step.rows(offset, ni.ncols());
        offset += ni.ncols();
        let mut x = profile.player(i) + ni * w.scale(t);
        if x.iter().any(|&p| p <= floor) {
            return None;
        }
        // Exact renormalization guards against accumulated round-off.
        let sum = x.sum();
        x /= sum;
        parts.push(x);
    }
    MixedProfile::new(parts).ok()
}

pub(crate) fn stack_vectors(parts: &[DVector<f64>]) -> DVector<f64> {
    let total: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(total);
    let mut off = 0;
    for p in parts {
        out.rows_mut(off, p.len()).copy_from(p);
        off += p.len();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matching_pennies_reduced_jacobian() {
        let g = games::matching_pennies();
        let x = MixedProfile::uniform(&[2, 2]);
        let jac = payoff_jacobians(&g, &x, 1e-9).unwrap();
        // N^T M_12 N = 2, N^T M_21 N = -2.
        assert_abs_diff_eq!(jac.reduced[(0, 1)], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(jac.reduced[(1, 0)], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(jac.reduced[(0, 0)], 0.0, epsilon = 1e-12);
        let reg = check_regularity(&g, &x, 1e-9).unwrap();
        assert!(reg.regular);
        assert_abs_diff_eq!(reg.sigma_min, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn gamma_cy_is_regular() {
        let g = games::gamma_cy();
        let x = MixedProfile::uniform(&[4, 4, 4, 4]);
        let reg = check_regularity(&g, &x, 1e-9).unwrap();
        assert!(reg.regular);
        assert!(reg.sigma_min > 0.5);
    }

    #[test]
    fn degenerate_duplicated_columns_not_regular() {
        // Both columns of M_12 identical makes the reduced Jacobian singular.
        let m12 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, -1.0]);
        let m21 = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let g = Game::polymatrix(
            vec![2, 2],
            vec![
                crate::game::Edge { from: 0, to: 1, matrix: m12 },
                crate::game::Edge { from: 1, to: 0, matrix: m21 },
            ],
        )
        .unwrap();
        let x = MixedProfile::uniform(&[2, 2]);
        assert!(g.verify_ne(&x, 1e-9).unwrap().is_completely_mixed);
        let reg = check_regularity(&g, &x, 1e-9).unwrap();
        assert!(!reg.regular);
    }

    #[test]
    fn jacobians_reject_non_equilibrium() {
        let g = games::matching_pennies();
        let x = MixedProfile::from_rows(&[vec![0.7, 0.3], vec![0.5, 0.5]]).unwrap();
        assert!(matches!(
            payoff_jacobians(&g, &x, 1e-9),
            Err(Error::NotCompletelyMixed(_))
        ));
    }

    #[test]
    fn appendix_block_formula_for_three_players() {
        // M_12 entries are r-slices weighted by player 3's probabilities.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = games::random_interior_profile(&[2, 2, 2], 0.1, &mut rng);
        let g = games::random_tensor_with_interior_ne(&[2, 2, 2], &x, &mut rng);
        let basis = SimplexBasis::for_actions(g.actions()).unwrap();
        let jac = jacobian_blocks_at(&g, &x, &basis);
        let (x31, x32) = (x.player(2)[0], x.player(2)[1]);
        let r = |a: &[usize]| g.utility(0, a);
        let expect_00 = r(&[0, 0, 0]) * x31 + r(&[0, 0, 1]) * x32;
        let expect_01 = r(&[0, 1, 0]) * x31 + r(&[0, 1, 1]) * x32;
        assert_abs_diff_eq!(jac.blocks[0][1][(0, 0)], expect_00, epsilon = 1e-12);
        assert_abs_diff_eq!(jac.blocks[0][1][(0, 1)], expect_01, epsilon = 1e-12);
    }

    #[test]
    fn newton_solves_matching_pennies() {
        let g = games::matching_pennies();
        let x0 = MixedProfile::from_rows(&[vec![0.6, 0.4], vec![0.55, 0.45]]).unwrap();
        let eq = find_completely_mixed_ne(&g, &x0, 1e-10, 50).unwrap();
        assert!(eq.profile.sup_distance(&MixedProfile::uniform(&[2, 2])) < 1e-9);
        assert!(eq.regular);
    }

    #[test]
    fn newton_solves_gamma_cy_from_near_uniform() {
        let g = games::gamma_cy();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let parts = (0..4)
            .map(|_| {
                let raw: Vec<f64> = (0..4).map(|_| 0.25 + 0.04 * rng.gen_range(-1.0f64..1.0)).collect();
                let s: f64 = raw.iter().sum();
                nalgebra::DVector::from_iterator(4, raw.into_iter().map(|v| v / s))
            })
            .collect();
        let x0 = MixedProfile::new(parts).unwrap();
        let eq = find_completely_mixed_ne(&g, &x0, 1e-10, 50).unwrap();
        assert!(eq.profile.sup_distance(&MixedProfile::uniform(&[4, 4, 4, 4])) < 1e-9);
    }

    #[test]
    fn newton_tracks_perturbed_matching_pennies() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let g = games::matching_pennies().perturbed(0.05, &mut rng);
            let x0 = MixedProfile::uniform(&[2, 2]);
            let eq = find_completely_mixed_ne(&g, &x0, 1e-10, 50).unwrap();
            assert!(eq.profile.sup_distance(&MixedProfile::uniform(&[2, 2])) < 0.1);
            let res: f64 = (0..2)
                .map(|i| {
                    let p = g.payoff_vector(i, &eq.profile).unwrap();
                    (p.max() - p.min()).abs()
                })
                .fold(0.0, f64::max);
            assert!(res < 1e-8);
        }
    }
}
