//! A catalog of named example games plus random generators for test sweeps.
//!
//! The named games are the recurring benchmarks of the analysis pipeline:
//! zero-sum matching pennies, the 2x2 identity coordination game, a 3x3
//! ordinal potential game with a completely mixed equilibrium, the cyclic and
//! pairwise four-player polymatrix pair whose equilibria cannot be learned by
//! a single set of dynamics, and a three-player cyclic matching game.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::game::{Edge, Game, MixedProfile};

/// Zero-sum matching pennies: `M_12 = [[1,-1],[-1,1]]`, `M_21 = -M_12^T`.
pub fn matching_pennies() -> Game {
    let m12 = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
    let m21 = -m12.transpose();
    Game::polymatrix(
        vec![2, 2],
        vec![
            Edge { from: 0, to: 1, matrix: m12 },
            Edge { from: 1, to: 0, matrix: m21 },
        ],
    )
    .expect("static game")
}

/// Two-player identity coordination game; both players earn 1 for matching.
pub fn coordination_identity_2x2() -> Game {
    let id = DMatrix::identity(2, 2);
    Game::polymatrix(
        vec![2, 2],
        vec![
            Edge { from: 0, to: 1, matrix: id.clone() },
            Edge { from: 1, to: 0, matrix: id },
        ],
    )
    .expect("static game")
}

/// 3x3 ordinal potential game with seven equilibria; the completely mixed one
/// sits at `x_1 = (1/2, 1/6, 1/3)`, `x_2 = (1/3, 1/3, 1/3)`.
pub fn ordinal_potential_3x3() -> Game {
    let m12 = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0]);
    let m21 = DMatrix::from_row_slice(3, 3, &[2.0, 3.0, 2.0, 1.0, 4.0, 3.0, 1.0, 2.0, 4.0]);
    Game::polymatrix(
        vec![3, 3],
        vec![
            Edge { from: 0, to: 1, matrix: m12 },
            Edge { from: 1, to: 0, matrix: m21 },
        ],
    )
    .expect("static game")
}

/// The completely mixed equilibrium profile of [`ordinal_potential_3x3`].
pub fn ordinal_potential_3x3_equilibrium() -> MixedProfile {
    MixedProfile::from_rows(&[
        vec![0.5, 1.0 / 6.0, 1.0 / 3.0],
        vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    ])
    .expect("static profile")
}

fn four_player_matrices() -> [DMatrix<f64>; 4] {
    let m1 = DMatrix::identity(4, 4);
    let m2 = DMatrix::identity(4, 4);
    #[rustfmt::skip]
    let m3 = DMatrix::from_row_slice(4, 4, &[
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        1.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
    ]);
    #[rustfmt::skip]
    let m4 = DMatrix::from_row_slice(4, 4, &[
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        1.0, 0.0, 0.0, 0.0,
    ]);
    [m1, m2, m3, m4]
}

/// Cyclic four-player polymatrix game (dependency ring 1->2->3->4->1) with an
/// isolated completely mixed equilibrium at the uniform profile.
pub fn gamma_cy() -> Game {
    let [m1, m2, m3, m4] = four_player_matrices();
    Game::polymatrix(
        vec![4, 4, 4, 4],
        vec![
            Edge { from: 0, to: 1, matrix: m1 },
            Edge { from: 1, to: 2, matrix: m2 },
            Edge { from: 2, to: 3, matrix: m3 },
            Edge { from: 3, to: 0, matrix: m4 },
        ],
    )
    .expect("static game")
}

/// Pairwise variant of [`gamma_cy`]: the same utility matrices on the pairing
/// 1<->4, 2<->3. Shares the uniform completely mixed equilibrium.
pub fn gamma_pw() -> Game {
    let [m1, m2, m3, m4] = four_player_matrices();
    Game::polymatrix(
        vec![4, 4, 4, 4],
        vec![
            Edge { from: 0, to: 3, matrix: m1 },
            Edge { from: 1, to: 2, matrix: m2 },
            Edge { from: 2, to: 1, matrix: m3 },
            Edge { from: 3, to: 0, matrix: m4 },
        ],
    )
    .expect("static game")
}

/// Three players, two actions, cyclic incentives: player 1 wants to match
/// player 2, player 2 wants to match player 3, player 3 wants to differ from
/// player 1. Unique equilibrium at the uniform profile; stored as a tensor.
pub fn jordan_cycle_3p() -> Game {
    let mut utilities = vec![vec![0.0; 8]; 3];
    for a0 in 0..2usize {
        for a1 in 0..2usize {
            for a2 in 0..2usize {
                let idx = a0 * 4 + a1 * 2 + a2;
                utilities[0][idx] = if a0 == a1 { 1.0 } else { 0.0 };
                utilities[1][idx] = if a1 == a2 { 1.0 } else { 0.0 };
                utilities[2][idx] = if a2 != a0 { 1.0 } else { 0.0 };
            }
        }
    }
    Game::tensor(vec![2, 2, 2], utilities).expect("static game")
}

/// Two-player zero-sum game with four actions per player (circulant payoff),
/// interior equilibrium at the uniform profile.
pub fn circulant_zero_sum_4() -> Game {
    let row = [0.0, 1.0, -1.0, 2.0];
    let mut m12 = DMatrix::zeros(4, 4);
    for i in 0..4 {
        for j in 0..4 {
            m12[(i, j)] = row[(j + 4 - i) % 4];
        }
    }
    let m21 = -m12.transpose();
    Game::polymatrix(
        vec![4, 4],
        vec![
            Edge { from: 0, to: 1, matrix: m12 },
            Edge { from: 1, to: 0, matrix: m21 },
        ],
    )
    .expect("static game")
}

/// Rock-paper-scissors rescaled and shifted per column: strategically
/// equivalent to a zero-sum game with `alpha = 2`, `beta = 1/2`, but not
/// itself zero-sum. Interior equilibrium at the uniform profile.
pub fn strategically_zero_sum_3x3() -> Game {
    let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, -1.0, -1.0, 0.0, 1.0, 1.0, -1.0, 0.0]);
    let ones3 = DVector::from_element(3, 1.0);
    let q1 = DVector::from_vec(vec![1.0, 2.0, 3.0]);
    let q2 = DVector::from_vec(vec![0.5, -1.0, 0.0]);
    let m12 = a.scale(2.0) + &ones3 * q1.transpose();
    let m21 = -a.transpose().scale(0.5) + &ones3 * q2.transpose();
    Game::polymatrix(
        vec![3, 3],
        vec![
            Edge { from: 0, to: 1, matrix: m12 },
            Edge { from: 1, to: 0, matrix: m21 },
        ],
    )
    .expect("static game")
}

/// Random polymatrix game on the complete directed graph, adjusted so the
/// supplied interior profile is a completely mixed equilibrium.
///
/// Edge matrices are sampled i.i.d. uniform on `[-1, 1]`, then each player's
/// first outgoing edge is corrected by a rank-one term that flattens the
/// payoff vector at `x_star` without touching any derivative structure other
/// than the targeted edge.
pub fn random_polymatrix_with_interior_ne(
    actions: &[usize],
    x_star: &MixedProfile,
    rng: &mut impl Rng,
) -> Game {
    let n = actions.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let m = DMatrix::from_fn(actions[i], actions[j], |_, _| rng.gen_range(-1.0..1.0));
                edges.push(Edge { from: i, to: j, matrix: m });
            }
        }
    }
    let game = Game::polymatrix(actions.to_vec(), edges.clone()).expect("generated game");
    // Flatten P_i(x*) to its mean via the first outgoing edge: subtracting
    // (P_i* - alpha 1) 1^T changes M_ij x_j* by exactly P_i* - alpha 1.
    for i in 0..n {
        let p = game.payoff_vector_raw(i, x_star.parts());
        let alpha = p.mean();
        let correction = p.add_scalar(-alpha);
        let e = edges
            .iter_mut()
            .find(|e| e.from == i)
            .expect("complete graph");
        let ones = DVector::from_element(e.matrix.ncols(), 1.0);
        e.matrix -= correction * ones.transpose();
    }
    Game::polymatrix(actions.to_vec(), edges).expect("generated game")
}

/// Random utility tensor adjusted so the supplied interior profile is a
/// completely mixed equilibrium (per-action constant shifts of each player's
/// utility slices).
pub fn random_tensor_with_interior_ne(
    actions: &[usize],
    x_star: &MixedProfile,
    rng: &mut impl Rng,
) -> Game {
    let joint: usize = actions.iter().product();
    let utilities: Vec<Vec<f64>> = (0..actions.len())
        .map(|_| (0..joint).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let game = Game::tensor(actions.to_vec(), utilities).expect("generated game");
    let mut adjusted = match game.payoff() {
        crate::game::Payoff::Tensor(u) => u.clone(),
        _ => unreachable!(),
    };
    // Shifting every utility r_i(kappa, a_{-i}) by a constant c_kappa shifts
    // P_i_kappa by c_kappa, because opponent probabilities sum to one.
    let n = actions.len();
    for i in 0..n {
        let p = game.payoff_vector_raw(i, x_star.parts());
        let alpha = p.mean();
        let mut joint_idx = vec![0usize; n];
        loop {
            let idx = game.joint_index(&joint_idx);
            adjusted[i][idx] -= p[joint_idx[i]] - alpha;
            let mut l = n;
            let done = loop {
                if l == 0 {
                    break true;
                }
                l -= 1;
                joint_idx[l] += 1;
                if joint_idx[l] < actions[l] {
                    break false;
                }
                joint_idx[l] = 0;
            };
            if done {
                break;
            }
        }
    }
    Game::tensor(actions.to_vec(), adjusted).expect("generated game")
}

/// Random interior profile with every entry at least `margin`.
pub fn random_interior_profile(
    actions: &[usize],
    margin: f64,
    rng: &mut impl Rng,
) -> MixedProfile {
    let parts = actions
        .iter()
        .map(|&k| {
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(margin..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            DVector::from_iterator(k, raw.into_iter().map(|v| v / sum))
        })
        .collect();
    MixedProfile::new(parts).expect("normalized profile")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn named_games_have_their_equilibria() {
        let cases: Vec<(Game, MixedProfile)> = vec![
            (matching_pennies(), MixedProfile::uniform(&[2, 2])),
            (gamma_cy(), MixedProfile::uniform(&[4, 4, 4, 4])),
            (gamma_pw(), MixedProfile::uniform(&[4, 4, 4, 4])),
            (jordan_cycle_3p(), MixedProfile::uniform(&[2, 2, 2])),
            (circulant_zero_sum_4(), MixedProfile::uniform(&[4, 4])),
            (strategically_zero_sum_3x3(), MixedProfile::uniform(&[3, 3])),
            (ordinal_potential_3x3(), ordinal_potential_3x3_equilibrium()),
        ];
        for (game, profile) in cases {
            let v = game.verify_ne(&profile, 1e-9).unwrap();
            assert!(v.is_completely_mixed, "expected completely mixed NE");
        }
    }

    #[test]
    fn random_generators_hit_the_requested_equilibrium() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let actions = [3usize, 2, 4];
            let x = random_interior_profile(&actions, 0.05, &mut rng);
            let g = random_polymatrix_with_interior_ne(&actions, &x, &mut rng);
            assert!(g.verify_ne(&x, 1e-9).unwrap().is_completely_mixed);
            let gt = random_tensor_with_interior_ne(&actions, &x, &mut rng);
            assert!(gt.verify_ne(&x, 1e-9).unwrap().is_completely_mixed);
        }
    }

    #[test]
    fn polymatrix_and_tensor_encodings_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for game in [matching_pennies(), gamma_cy(), circulant_zero_sum_4()] {
            let tensor = game.to_tensor();
            for _ in 0..10 {
                let x = random_interior_profile(game.actions(), 0.01, &mut rng);
                for i in 0..game.players() {
                    let a = game.payoff_vector(i, &x).unwrap();
                    let b = tensor.payoff_vector(i, &x).unwrap();
                    assert!((a - b).amax() < 1e-12);
                }
            }
        }
    }
}
