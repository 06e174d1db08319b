//! Reduced linearized plants at completely mixed equilibria and the
//! stabilizability tests that decide learnability.
//!
//! With reduced strategy deviations `w` and washout states `v`, the open
//! linearized system is
//!
//! ```text
//!   [w'; v'] = [[N^T Jbar N, 0], [M, -I]] [w; v] + [bdiag(N_i^T Bbar_i); 0] u
//!   y        = [M, -I] [w; v]
//! ```
//!
//! Decentralized stabilizability is decided by a rank test over all
//! input/output partitions; strong stabilizability (stabilization by an
//! internally stable controller) by parity interlacing of real unstable poles
//! between real unstable blocking zeros.

use nalgebra::{Complex, DMatrix, DVector};

use crate::dynamics::{ClosedLoop, DynamicsKind, HigherOrderState};
use crate::equilibrium::MixedEquilibrium;
use crate::game::{Game, MixedProfile, Payoff};
use crate::{Error, Result};

/// `|Im|` below this counts as a real eigenvalue.
pub const REAL_EIG_TOL: f64 = 1e-9;
/// Relative singular-value threshold for numeric rank decisions.
pub const RANK_TOL: f64 = 1e-8;

/// Maximum real part over the spectrum.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Dense eigensolve summary.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub eigenvalues: Vec<Complex<f64>>,
    pub abscissa: f64,
    pub trace: f64,
    /// Eigenvalues with `|Im| <` [`REAL_EIG_TOL`], as real parts.
    pub real_eigenvalues: Vec<f64>,
}

pub fn spectral_report(m: &DMatrix<f64>) -> Result<SpectralReport> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidArgument(format!(
            "spectral report needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let eigenvalues: Vec<Complex<f64>> = m.complex_eigenvalues().iter().copied().collect();
    let abscissa = eigenvalues.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    let real_eigenvalues = eigenvalues
        .iter()
        .filter(|l| l.im.abs() < REAL_EIG_TOL)
        .map(|l| l.re)
        .collect();
    Ok(SpectralReport {
        eigenvalues,
        abscissa,
        trace: m.trace(),
        real_eigenvalues,
    })
}

/// The reduced linearized open plant at a completely mixed equilibrium.
#[derive(Debug, Clone)]
pub struct LinearPlant {
    /// `2l x 2l` state matrix over `(w, v)`.
    pub a: DMatrix<f64>,
    /// Per-player input columns, each `2l x (k_i - 1)`.
    pub b_blocks: Vec<DMatrix<f64>>,
    /// `l x 2l` output matrix `[M, -I]`.
    pub c: DMatrix<f64>,
    /// Top-left block `N^T Jbar N`.
    pub top_left: DMatrix<f64>,
    /// Reduced payoff Jacobian `M`.
    pub reduced_m: DMatrix<f64>,
    /// Per-player `N_i^T Bbar_i` (square, `k_i - 1`).
    pub input_blocks: Vec<DMatrix<f64>>,
    /// Per-player reduced widths `k_i - 1`.
    pub widths: Vec<usize>,
    /// Regularity of the underlying equilibrium (warning flag when false).
    pub regular: bool,
}

impl LinearPlant {
    pub fn ell(&self) -> usize {
        self.widths.iter().sum()
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn players(&self) -> usize {
        self.widths.len()
    }

    /// All input columns side by side (`2l x l`).
    pub fn b_stacked(&self) -> DMatrix<f64> {
        let ell = self.ell();
        let mut b = DMatrix::zeros(self.state_dim(), ell);
        let mut c = 0;
        for blk in &self.b_blocks {
            b.view_mut((0, c), (blk.nrows(), blk.ncols())).copy_from(blk);
            c += blk.ncols();
        }
        b
    }

    /// Output rows of player `i`.
    pub fn c_block(&self, i: usize) -> DMatrix<f64> {
        let off: usize = self.widths[..i].iter().sum();
        self.c.rows(off, self.widths[i]).clone_owned()
    }
}

/// Assembles the reduced linearized plant for the given per-player dynamics
/// families (replicator or target gradient analytically; custom fields by
/// central finite differences of the open-loop player map).
///
/// A non-regular equilibrium is not an error: the plant is returned with the
/// `regular` flag cleared.
pub fn linearize_plant(
    game: &Game,
    eq: &MixedEquilibrium,
    families: &[DynamicsKind],
) -> Result<LinearPlant> {
    let n = game.players();
    if families.len() != n {
        return Err(Error::InvalidArgument(format!(
            "need one dynamics family per player: game has {n}, got {}",
            families.len()
        )));
    }
    let basis = &eq.basis;
    let widths: Vec<usize> = game.actions().iter().map(|&k| k - 1).collect();
    let ell: usize = widths.iter().sum();
    let offsets: Vec<usize> = widths
        .iter()
        .scan(0, |acc, &w| {
            let o = *acc;
            *acc += w;
            Some(o)
        })
        .collect();

    let mut top_left = DMatrix::zeros(ell, ell);
    let mut input_blocks = Vec::with_capacity(n);

    for i in 0..n {
        let ki = game.num_actions(i);
        let ni = basis.player(i);
        let x_star = eq.profile.player(i);
        // Full-space sensitivity of player i's field to its payoff input and
        // own strategy, per family.
        let (d_p, d_x): (DMatrix<f64>, DMatrix<f64>) = match &families[i] {
            DynamicsKind::Replicator => {
                // d/dp [diag(p - x^T p 1) x] at p = alpha 1: diag(x)(I - 1 x^T)
                let dx_mat = DMatrix::from_diagonal(x_star);
                let ones = DVector::from_element(ki, 1.0);
                let d_p = &dx_mat * (DMatrix::identity(ki, ki) - &ones * x_star.transpose());
                // J_ii = -alpha_i x* 1^T
                let d_x = -(x_star * ones.transpose()).scale(eq.alphas[i]);
                (d_p, d_x)
            }
            DynamicsKind::TargetGradient => {
                // Interior projection is affine: centering I - 1 1^T / k.
                let ones = DVector::from_element(ki, 1.0);
                let center = DMatrix::identity(ki, ki) - (&ones * ones.transpose()).scale(1.0 / ki as f64);
                let d_x = &center - DMatrix::identity(ki, ki);
                (center, d_x)
            }
            DynamicsKind::Custom(f) => {
                let p_star = game.payoff_vector_raw(i, eq.profile.parts());
                let field = |x: &DVector<f64>, p: &DVector<f64>| f(x, p);
                let h = 1e-6;
                let d_p = fd_jacobian_2arg(&field, x_star, &p_star, h, false);
                let d_x = fd_jacobian_2arg(&field, x_star, &p_star, h, true);
                (d_p, d_x)
            }
            DynamicsKind::Edl => {
                return Err(Error::InvalidArgument(
                    "exponentially discounted learning is outside the washout framework; \
                     linearize with replicator, target gradient, or a custom field"
                        .into(),
                ));
            }
        };

        // Reduced own-block and cross blocks.
        let own = ni.transpose() * &d_x * ni;
        top_left
            .view_mut((offsets[i], offsets[i]), (widths[i], widths[i]))
            .copy_from(&own);
        for j in 0..n {
            if j == i {
                continue;
            }
            let m_ij = &eq.jacobians.blocks[i][j];
            let block = ni.transpose() * &d_p * m_ij * basis.player(j);
            top_left
                .view_mut((offsets[i], offsets[j]), (widths[i], widths[j]))
                .copy_from(&block);
        }
        input_blocks.push(ni.transpose() * &d_p * ni);
    }

    let m = &eq.jacobians.reduced;
    let mut a = DMatrix::zeros(2 * ell, 2 * ell);
    a.view_mut((0, 0), (ell, ell)).copy_from(&top_left);
    a.view_mut((ell, 0), (ell, ell)).copy_from(m);
    a.view_mut((ell, ell), (ell, ell))
        .copy_from(&(-DMatrix::<f64>::identity(ell, ell)));
    let mut c = DMatrix::zeros(ell, 2 * ell);
    c.view_mut((0, 0), (ell, ell)).copy_from(m);
    c.view_mut((0, ell), (ell, ell))
        .copy_from(&(-DMatrix::<f64>::identity(ell, ell)));

    let b_blocks = input_blocks
        .iter()
        .enumerate()
        .map(|(i, blk)| {
            let mut b = DMatrix::zeros(2 * ell, widths[i]);
            b.view_mut((offsets[i], 0), (widths[i], widths[i])).copy_from(blk);
            b
        })
        .collect();

    Ok(LinearPlant {
        a,
        b_blocks,
        c,
        top_left,
        reduced_m: m.clone(),
        input_blocks,
        widths,
        regular: eq.regular,
    })
}

fn fd_jacobian_2arg(
    f: &impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    p: &DVector<f64>,
    h: f64,
    wrt_x: bool,
) -> DMatrix<f64> {
    let probe = if wrt_x { x.len() } else { p.len() };
    let out_dim = f(x, p).len();
    let mut jac = DMatrix::zeros(out_dim, probe);
    for j in 0..probe {
        let (mut xp, mut pp) = (x.clone(), p.clone());
        let (mut xm, mut pm) = (x.clone(), p.clone());
        if wrt_x {
            xp[j] += h;
            xm[j] -= h;
        } else {
            pp[j] += h;
            pm[j] -= h;
        }
        let diff = (f(&xp, &pp) - f(&xm, &pm)) / (2.0 * h);
        jac.set_column(j, &diff);
    }
    jac
}

/// Central-difference Jacobian of a vector field.
pub fn finite_diff_jacobian(
    f: &impl Fn(&DVector<f64>) -> DVector<f64>,
    point: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let n = point.len();
    let out_dim = f(point).len();
    let mut jac = DMatrix::zeros(out_dim, n);
    for j in 0..n {
        let mut plus = point.clone();
        let mut minus = point.clone();
        plus[j] += h;
        minus[j] -= h;
        let col = (f(&plus) - f(&minus)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Finite-difference linearization of a closed loop at a stationary state,
/// reduced onto the simplex tangent spaces (step `1e-6`). Errors when the
/// field norm at the point exceeds `1e-6`.
pub fn finite_diff_linearize(
    system: &ClosedLoop,
    state: &HigherOrderState,
) -> Result<DMatrix<f64>> {
    let layout = system.layout();
    let flat = layout.flatten(state);
    let f = |y: &DVector<f64>| layout.flatten(&system.field(&layout.unflatten(y)));
    let norm = f(&flat).norm();
    if norm > 1e-6 {
        return Err(Error::NotStationary(norm));
    }
    let full = finite_diff_jacobian(&f, &flat, 1e-6);
    // Reduction T = bdiag(N, I_v, I_xi).
    let nn = system.basis.block_diag();
    let ell = system.basis.reduced_dim();
    let aux: usize = layout.aux.iter().sum();
    let full_dim = layout.dim();
    let red_dim = ell + ell + aux;
    let mut t = DMatrix::zeros(full_dim, red_dim);
    t.view_mut((0, 0), (nn.nrows(), nn.ncols())).copy_from(&nn);
    let rest = ell + aux;
    t.view_mut((nn.nrows(), ell), (rest, rest))
        .copy_from(&DMatrix::identity(rest, rest));
    Ok(t.transpose() * full * t)
}

/// Verdict of the decentralized rank test.
#[derive(Debug, Clone)]
pub struct DecentralizedReport {
    pub stabilizable: bool,
    /// Failing `(inputs used, outputs used)` partition, when any.
    pub failing_partition: Option<(Vec<usize>, Vec<usize>)>,
    pub failing_lambda: Option<Complex<f64>>,
}

/// Decentralized stabilizability over every input/output partition: the rank
/// of `[[A - lambda I, B|U], [C|Y, 0]]` must reach the state dimension for
/// every closed-right-half-plane candidate `lambda`.
///
/// Candidates are the eigenvalues of `A` with `Re >= -1e-9` plus `lambda = 0`;
/// the rank can only drop where the pencil loses rank structurally.
pub fn decentralized_stabilizability(plant: &LinearPlant) -> DecentralizedReport {
    let n_states = plant.state_dim();
    let n = plant.players();
    let mut candidates: Vec<Complex<f64>> = plant
        .a
        .complex_eigenvalues()
        .iter()
        .filter(|l| l.re >= -1e-9)
        .copied()
        .collect();
    candidates.push(Complex::new(0.0, 0.0));
    candidates.dedup_by(|a, b| (*a - *b).norm() < 1e-9);

    let a_c = plant.a.map(|v| Complex::new(v, 0.0));
    for mask in 0..(1usize << n) {
        let inputs: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let outputs: Vec<usize> = (0..n).filter(|i| mask & (1 << i) == 0).collect();
        let in_cols: usize = inputs.iter().map(|&i| plant.widths[i]).sum();
        let out_rows: usize = outputs.iter().map(|&i| plant.widths[i]).sum();
        for &lambda in &candidates {
            let mut test = DMatrix::<Complex<f64>>::zeros(n_states + out_rows, n_states + in_cols);
            let mut shifted = a_c.clone();
            for d in 0..n_states {
                shifted[(d, d)] -= lambda;
            }
            test.view_mut((0, 0), (n_states, n_states)).copy_from(&shifted);
            let mut col = n_states;
            for &i in &inputs {
                let b = plant.b_blocks[i].map(|v| Complex::new(v, 0.0));
                test.view_mut((0, col), (n_states, plant.widths[i])).copy_from(&b);
                col += plant.widths[i];
            }
            let mut row = n_states;
            for &i in &outputs {
                let cb = plant.c_block(i).map(|v| Complex::new(v, 0.0));
                test.view_mut((row, 0), (plant.widths[i], n_states)).copy_from(&cb);
                row += plant.widths[i];
            }
            if complex_rank(&test, RANK_TOL) < n_states {
                return DecentralizedReport {
                    stabilizable: false,
                    failing_partition: Some((inputs, outputs)),
                    failing_lambda: Some(lambda),
                };
            }
        }
    }
    DecentralizedReport {
        stabilizable: true,
        failing_partition: None,
        failing_lambda: None,
    }
}

fn complex_rank(m: &DMatrix<Complex<f64>>, rel_tol: f64) -> usize {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    if smax <= 0.0 {
        return 0;
    }
    svd.singular_values.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Strong-stabilizability verdict via parity interlacing.
#[derive(Debug, Clone)]
pub struct StrongReport {
    pub strongly_stabilizable: bool,
    /// Real poles with `Re >= 0` of the minimal realization, with repeats.
    pub real_unstable_poles: Vec<f64>,
    /// Finite real blocking zeros with `Re >= 0` (the washout factor always
    /// contributes `s = 0`).
    pub real_unstable_blocking_zeros: Vec<f64>,
    /// Strictly proper plants also block at `s = infinity`.
    pub zero_at_infinity: bool,
}

/// Decides strong stabilizability (stabilization by an internally stable
/// controller) of the centralized plant.
///
/// Requires `(A, B)` stabilizable and `(A, C)` detectable. Works on a minimal
/// realization (Kalman staircase with SVD tolerances); blocking zeros are the
/// structural `s = 0` and `s = infinity` plus any finite real candidates
/// confirmed by transfer-matrix evaluation. For 2-player 2-action plants the
/// result is cross-checked against the closed-form poles `+-sqrt(n1 n2)`.
pub fn strong_stabilizability(plant: &LinearPlant) -> Result<StrongReport> {
    let a = &plant.a;
    let b = plant.b_stacked();
    let c = &plant.c;
    let n_states = plant.state_dim();

    // PBH stabilizability / detectability at unstable eigenvalues.
    for lambda in a.complex_eigenvalues().iter().filter(|l| l.re >= -1e-9) {
        let a_c = a.map(|v| Complex::new(v, 0.0));
        let mut shifted = a_c.clone();
        for d in 0..n_states {
            shifted[(d, d)] -= *lambda;
        }
        let b_c = b.map(|v| Complex::new(v, 0.0));
        let mut ctrb = DMatrix::<Complex<f64>>::zeros(n_states, n_states + b_c.ncols());
        ctrb.view_mut((0, 0), (n_states, n_states)).copy_from(&shifted);
        ctrb.view_mut((0, n_states), (n_states, b_c.ncols())).copy_from(&b_c);
        if complex_rank(&ctrb, RANK_TOL) < n_states {
            return Err(Error::NotStabilizableDetectable(format!(
                "uncontrollable unstable mode at lambda = {lambda}"
            )));
        }
        let c_c = c.map(|v| Complex::new(v, 0.0));
        let mut obsv = DMatrix::<Complex<f64>>::zeros(n_states + c_c.nrows(), n_states);
        obsv.view_mut((0, 0), (n_states, n_states)).copy_from(&shifted);
        obsv.view_mut((n_states, 0), (c_c.nrows(), n_states)).copy_from(&c_c);
        if complex_rank(&obsv, RANK_TOL) < n_states {
            return Err(Error::NotStabilizableDetectable(format!(
                "unobservable unstable mode at lambda = {lambda}"
            )));
        }
    }

    // Minimal realization.
    let (am, bm, cm) = minimal_realization(a, &b, c);
    let nm = am.nrows();

    let poles: Vec<Complex<f64>> = am.complex_eigenvalues().iter().copied().collect();
    let mut real_unstable_poles: Vec<f64> = poles
        .iter()
        .filter(|l| l.im.abs() < REAL_EIG_TOL && l.re >= -REAL_EIG_TOL)
        .map(|l| l.re.max(0.0))
        .collect();
    real_unstable_poles.sort_by(|x, y| x.partial_cmp(y).unwrap());

    // Transfer evaluation T(s) = C_m (sI - A_m)^{-1} B_m on the minimal
    // realization; None when sI - A_m is singular.
    let eval = |s: f64| -> Option<DMatrix<f64>> {
        let mut m = -am.clone();
        for d in 0..nm {
            m[(d, d)] += s;
        }
        m.lu().solve(&bm).map(|x| &cm * x)
    };
    // Scale for "blocking" decisions: transfer norm at a point away from all
    // poles.
    let pole_radius = poles.iter().map(|l| l.norm()).fold(1.0f64, f64::max);
    let s_ref = 2.0 * pole_radius + 1.0;
    let scale = eval(s_ref).map(|t| t.amax()).unwrap_or(1.0).max(1e-12);

    let mut zeros: Vec<f64> = Vec::new();
    // Structural washout zero at s = 0 (verified numerically when A allows).
    match eval(0.0) {
        Some(t0) => {
            if t0.amax() < 1e-6 * scale {
                zeros.push(0.0);
            }
        }
        None => {
            return Err(Error::AmbiguousZeros(
                "pole at s = 0; transfer matrix cannot be evaluated there".into(),
            ))
        }
    }
    // Finite candidates from entry-numerator roots.
    for sigma in blocking_zero_candidates(&am, &bm, &cm)? {
        if sigma < -REAL_EIG_TOL || sigma.abs() < 1e-7 {
            continue;
        }
        if real_unstable_poles.iter().any(|p| (p - sigma).abs() < 1e-7) {
            return Err(Error::AmbiguousZeros(format!(
                "candidate zero {sigma:.6} coincides with a real unstable pole"
            )));
        }
        if let Some(t) = eval(sigma) {
            if t.amax() < 1e-6 * scale && zeros.iter().all(|z| (z - sigma).abs() > 1e-7) {
                zeros.push(sigma);
            }
        }
    }
    zeros.sort_by(|x, y| x.partial_cmp(y).unwrap());

    // Parity interlacing: an even number of poles between consecutive real
    // unstable zeros, with s = infinity as the final zero.
    let mut ok = true;
    for win in 0..zeros.len() {
        let lo = zeros[win];
        let hi = if win + 1 < zeros.len() { zeros[win + 1] } else { f64::INFINITY };
        let count = real_unstable_poles
            .iter()
            .filter(|&&p| p > lo + 1e-9 && p < hi - 1e-9)
            .count();
        if count % 2 == 1 {
            ok = false;
            break;
        }
    }

    // Closed-form cross-check for the 2-player 2-action structure.
    if plant.widths == [1, 1] && plant.top_left.nrows() == 2 {
        let n1 = plant.top_left[(0, 1)];
        let n2 = plant.top_left[(1, 0)];
        let d1 = plant.top_left[(0, 0)].abs();
        let d2 = plant.top_left[(1, 1)].abs();
        if d1 < 1e-9 && d2 < 1e-9 && n1.abs() > 1e-9 && n2.abs() > 1e-9 {
            let product = n1 * n2;
            let closed_form = product <= 0.0;
            if closed_form != ok {
                return Err(Error::AmbiguousZeros(format!(
                    "parity test disagrees with the closed-form 2x2 verdict (n1 n2 = {product:.6})"
                )));
            }
            if product > 0.0 {
                let pole = product.sqrt();
                if !real_unstable_poles.iter().any(|p| (p - pole).abs() < 1e-6) {
                    return Err(Error::AmbiguousZeros(format!(
                        "expected closed-form pole {pole:.6} missing from {real_unstable_poles:?}"
                    )));
                }
            }
        }
    }

    Ok(StrongReport {
        strongly_stabilizable: ok,
        real_unstable_poles,
        real_unstable_blocking_zeros: zeros,
        zero_at_infinity: true,
    })
}

/// Kalman-style minimal realization: restrict to the controllable subspace,
/// then to the observable subspace, with SVD rank tolerances.
fn minimal_realization(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let vc = krylov_basis(a, b);
    let ac = vc.transpose() * a * &vc;
    let bc = vc.transpose() * b;
    let cc = c * &vc;
    let vo = krylov_basis(&ac.transpose(), &cc.transpose());
    let am = vo.transpose() * ac * &vo;
    let bm = vo.transpose() * bc;
    let cm = cc * &vo;
    (am, bm, cm)
}

/// Orthonormal basis of `span{B, AB, ..., A^{n-1}B}`.
fn krylov_basis(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut krylov = DMatrix::zeros(n, n * b.ncols());
    let mut block = b.clone();
    for p in 0..n {
        krylov
            .view_mut((0, p * b.ncols()), (n, b.ncols()))
            .copy_from(&block);
        block = a * block;
    }
    let svd = krylov.clone().svd(true, false);
    let smax = svd.singular_values.max().max(1e-300);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL * smax)
        .count();
    let u = svd.u.expect("svd with u");
    u.columns(0, rank).clone_owned()
}

/// Real root candidates for blocking zeros: roots of the numerator polynomial
/// of the first few nonzero transfer entries, fitted from samples of
/// `det(sI - A) * T(s)` (a polynomial of degree < n).
fn blocking_zero_candidates(
    am: &DMatrix<f64>,
    bm: &DMatrix<f64>,
    cm: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let n = am.nrows();
    if n == 0 {
        return Ok(vec![]);
    }
    let radius = am
        .complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(1.0f64, f64::max)
        * 2.0
        + 1.0;
    // Chebyshev sample points, nudged off eigenvalues.
    let eigs: Vec<Complex<f64>> = am.complex_eigenvalues().iter().copied().collect();
    let mut points = Vec::with_capacity(n + 1);
    for t in 0..=n {
        let mut s = radius * (std::f64::consts::PI * t as f64 / n as f64).cos();
        while eigs.iter().any(|l| (l - Complex::new(s, 0.0)).norm() < 1e-4) {
            s += 3e-4 * radius.max(1.0);
        }
        points.push(s);
    }

    let numerator_samples = |i: usize, j: usize| -> Option<Vec<f64>> {
        let ci = cm.row(i).transpose();
        let bj = bm.column(j).clone_owned();
        let mut vals = Vec::with_capacity(points.len());
        for &s in &points {
            let mut m = -am.clone();
            for d in 0..n {
                m[(d, d)] += s;
            }
            let det = m.clone().lu().determinant();
            let sol = m.lu().solve(&bj)?;
            vals.push(det * ci.dot(&sol));
        }
        Some(vals)
    };

    // Fit a degree-(n-1) polynomial through the samples and take real roots.
    let fit_roots = |vals: &[f64]| -> Option<Vec<f64>> {
        let m = points.len();
        let mut vander = DMatrix::zeros(m, n);
        for (r, &s) in points.iter().enumerate() {
            let mut pw = 1.0;
            for cdeg in 0..n {
                vander[(r, cdeg)] = pw;
                pw *= s;
            }
        }
        let rhs = DVector::from_vec(vals.to_vec());
        let coeffs = vander.svd(true, true).solve(&rhs, 1e-12).ok()?;
        let max_coeff = coeffs.amax();
        if max_coeff < 1e-9 {
            return Some(vec![]); // identically zero entry
        }
        // Trim negligible leading coefficients, then companion-matrix roots.
        let mut deg = n - 1;
        while deg > 0 && coeffs[deg].abs() < 1e-10 * max_coeff {
            deg -= 1;
        }
        if deg == 0 {
            return Some(vec![]);
        }
        let mut comp = DMatrix::zeros(deg, deg);
        for r in 1..deg {
            comp[(r, r - 1)] = 1.0;
        }
        for r in 0..deg {
            comp[(r, deg - 1)] = -coeffs[r] / coeffs[deg];
        }
        Some(
            comp.complex_eigenvalues()
                .iter()
                .filter(|l| l.im.abs() < 1e-6)
                .map(|l| l.re)
                .collect(),
        )
    };

    let mut candidates = Vec::new();
    let mut used = 0;
    'outer: for i in 0..cm.nrows() {
        for j in 0..bm.ncols() {
            if let Some(vals) = numerator_samples(i, j) {
                if vals.iter().all(|v| v.abs() < 1e-12) {
                    continue;
                }
                if let Some(mut roots) = fit_roots(&vals) {
                    candidates.append(&mut roots);
                    used += 1;
                    if used >= 2 {
                        break 'outer;
                    }
                }
            }
        }
    }
    if used == 0 {
        return Err(Error::AmbiguousZeros(
            "every transfer entry evaluates to zero or a singular solve".into(),
        ));
    }
    candidates.sort_by(|x, y| x.partial_cmp(y).unwrap());
    candidates.dedup_by(|x, y| (*x - *y).abs() < 1e-7);
    Ok(candidates)
}

/// Witnesses for strategic equivalence of a 2-player game to a zero-sum game.
#[derive(Debug, Clone)]
pub struct StrategicZeroSum {
    pub equivalent: bool,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

/// Solves the linear feasibility problem `M_12 - alpha A = Q_1`,
/// `M_21 + beta A^T = Q_2` with `alpha, beta > 0` and `Q_i` having all equal
/// rows. Equivalent games have payoff matrices whose doubly-centered parts
/// are negatively proportional.
pub fn strategic_zero_sum_check(game: &Game) -> Result<StrategicZeroSum> {
    if game.players() != 2 {
        return Err(Error::InvalidArgument(format!(
            "strategic zero-sum check applies to 2-player games, got {}",
            game.players()
        )));
    }
    let (m12, m21) = two_player_matrices(game);
    let center = |m: &DMatrix<f64>| -> DMatrix<f64> {
        let (r, c) = m.shape();
        let ones_r = DMatrix::from_element(r, r, 1.0 / r as f64);
        let ones_c = DMatrix::from_element(c, c, 1.0 / c as f64);
        let cr = DMatrix::identity(r, r) - ones_r;
        let cc = DMatrix::identity(c, c) - ones_c;
        cr * m * cc
    };
    let d0 = center(&m21);
    let d1 = center(&m12.transpose());
    let scale = m12.amax().max(m21.amax()).max(1.0);
    let tol = 1e-9 * scale;

    let d1_norm = d1.amax();
    if d1_norm < tol {
        // No strategic content in M_12; equivalent iff M_21 is also flat.
        return Ok(if d0.amax() < tol {
            StrategicZeroSum { equivalent: true, alpha: Some(1.0), beta: Some(1.0) }
        } else {
            StrategicZeroSum { equivalent: false, alpha: None, beta: None }
        });
    }
    // Least-squares ratio for D0 + t D1 = 0.
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in d0.iter().zip(d1.iter()) {
        num += a * b;
        den += b * b;
    }
    let t = -num / den;
    let residual = (&d0 + d1.scale(t)).amax();
    if t <= 0.0 || residual > tol {
        return Ok(StrategicZeroSum { equivalent: false, alpha: None, beta: None });
    }
    Ok(StrategicZeroSum { equivalent: true, alpha: Some(1.0), beta: Some(t) })
}

/// The (constant) payoff matrices of a 2-player game.
pub fn two_player_matrices(game: &Game) -> (DMatrix<f64>, DMatrix<f64>) {
    match game.payoff() {
        Payoff::Polymatrix(edges) => {
            let mut m12 = DMatrix::zeros(game.num_actions(0), game.num_actions(1));
            let mut m21 = DMatrix::zeros(game.num_actions(1), game.num_actions(0));
            for e in edges {
                if e.from == 0 {
                    m12 += &e.matrix;
                } else {
                    m21 += &e.matrix;
                }
            }
            (m12, m21)
        }
        Payoff::Tensor(_) => {
            // P_i is linear in the opponent's strategy: the gradient blocks
            // are constant, so any interior profile works.
            let basis = crate::simplex::SimplexBasis::for_actions(game.actions())
                .expect("valid game actions");
            let uniform = MixedProfile::uniform(game.actions());
            let jac = crate::equilibrium::jacobian_blocks_at(game, &uniform, &basis);
            (jac.blocks[0][1].clone(), jac.blocks[1][0].clone())
        }
    }
}

/// True when the game is a zero-sum graphical polymatrix game
/// (`M_ij = -M_ji^T` for every edge pair).
pub fn is_zero_sum_polymatrix(game: &Game) -> bool {
    let Payoff::Polymatrix(edges) = game.payoff() else {
        return false;
    };
    let n = game.players();
    let mut sums: Vec<Vec<Option<DMatrix<f64>>>> = vec![vec![None; n]; n];
    for e in edges {
        let slot = &mut sums[e.from][e.to];
        *slot = Some(match slot.take() {
            Some(m) => m + &e.matrix,
            None => e.matrix.clone(),
        });
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let zij = DMatrix::zeros(game.num_actions(i), game.num_actions(j));
            let mij = sums[i][j].clone().unwrap_or_else(|| zij.clone());
            let mji = sums[j][i]
                .clone()
                .unwrap_or_else(|| DMatrix::zeros(game.num_actions(j), game.num_actions(i)));
            if (mij + mji.transpose()).amax() > 1e-12 {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::PlayerDynamics;
    use crate::equilibrium::find_completely_mixed_ne;
    use crate::games;
    use approx::assert_abs_diff_eq;

    fn eq_of(game: &Game, profile: MixedProfile) -> MixedEquilibrium {
        MixedEquilibrium::at(game, &profile, 1e-9).unwrap()
    }

    #[test]
    fn matching_pennies_replicator_plant_values() {
        let game = games::matching_pennies();
        let eq = eq_of(&game, MixedProfile::uniform(&[2, 2]));
        let plant = linearize_plant(
            &game,
            &eq,
            &[DynamicsKind::Replicator, DynamicsKind::Replicator],
        )
        .unwrap();
        // Reduced replicator blocks: N^T diag(x*) M_ij N = 1 (M_12) and -1.
        assert_abs_diff_eq!(plant.top_left[(0, 1)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(plant.top_left[(1, 0)], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(plant.top_left[(0, 0)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(plant.input_blocks[0][(0, 0)], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(plant.reduced_m[(0, 1)], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn matching_pennies_target_gradient_top_left_is_reduced_jacobian() {
        let game = games::matching_pennies();
        let eq = eq_of(&game, MixedProfile::uniform(&[2, 2]));
        let plant = linearize_plant(
            &game,
            &eq,
            &[DynamicsKind::TargetGradient, DynamicsKind::TargetGradient],
        )
        .unwrap();
        assert!((plant.top_left.clone() - plant.reduced_m.clone()).amax() < 1e-12);
        assert!((plant.input_blocks[0].clone() - DMatrix::identity(1, 1)).amax() < 1e-12);
    }

    #[test]
    fn finite_difference_matches_analytic_plant() {
        let game = games::matching_pennies();
        let eq = eq_of(&game, MixedProfile::uniform(&[2, 2]));
        let plant = linearize_plant(
            &game,
            &eq,
            &[DynamicsKind::Replicator, DynamicsKind::Replicator],
        )
        .unwrap();
        let sys = ClosedLoop::new(
            game,
            vec![PlayerDynamics::replicator(), PlayerDynamics::replicator()],
        )
        .unwrap();
        let state = sys.equilibrium_state(&eq);
        let fd = finite_diff_linearize(&sys, &state).unwrap();
        assert!((fd - plant.a.clone()).amax() < 1e-5);
    }

    #[test]
    fn finite_difference_rejects_nonstationary_point() {
        let game = games::matching_pennies();
        let sys = ClosedLoop::new(
            game,
            vec![PlayerDynamics::replicator(), PlayerDynamics::replicator()],
        )
        .unwrap();
        let state = HigherOrderState {
            x: vec![
                DVector::from_vec(vec![0.8, 0.2]),
                DVector::from_vec(vec![0.5, 0.5]),
            ],
            v: vec![DVector::zeros(1), DVector::zeros(1)],
            xi: vec![DVector::zeros(0), DVector::zeros(0)],
        };
        assert!(matches!(
            finite_diff_linearize(&sys, &state),
            Err(Error::NotStationary(_))
        ));
    }

    #[test]
    fn spectral_report_trace_and_real_flags() {
        let game = games::gamma_cy();
        let eq = eq_of(&game, MixedProfile::uniform(&[4, 4, 4, 4]));
        let plant =
            linearize_plant(&game, &eq, &vec![DynamicsKind::Replicator; 4]).unwrap();
        let report = spectral_report(&plant.top_left).unwrap();
        assert!(report.trace.abs() < 1e-10);
        assert!(report.real_eigenvalues.is_empty(), "cyclic game spectrum is complex");

        let pw = games::gamma_pw();
        let eq_pw = eq_of(&pw, MixedProfile::uniform(&[4, 4, 4, 4]));
        let plant_pw =
            linearize_plant(&pw, &eq_pw, &vec![DynamicsKind::Replicator; 4]).unwrap();
        let report_pw = spectral_report(&plant_pw.top_left).unwrap();
        assert!(
            report_pw.real_eigenvalues.iter().any(|&r| r > 1e-6),
            "pairwise game must expose a real positive eigenvalue, got {:?}",
            report_pw.real_eigenvalues
        );
    }

    #[test]
    fn davison_test_passes_on_matching_pennies() {
        let game = games::matching_pennies();
        let eq = eq_of(&game, MixedProfile::uniform(&[2, 2]));
        let plant = linearize_plant(
            &game,
            &eq,
            &[DynamicsKind::Replicator, DynamicsKind::Replicator],
        )
        .unwrap();
        let report = decentralized_stabilizability(&plant);
        assert!(report.stabilizable);
    }

    #[test]
    fn davison_test_fails_on_dead_input() {
        // One player, both input columns zeroed, unstable A: the partition
        // using only inputs cannot move the unstable mode.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let plant = LinearPlant {
            a: a.clone(),
            b_blocks: vec![DMatrix::zeros(2, 1)],
            c: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            top_left: DMatrix::from_row_slice(1, 1, &[1.0]),
            reduced_m: DMatrix::from_row_slice(1, 1, &[1.0]),
            input_blocks: vec![DMatrix::zeros(1, 1)],
            widths: vec![1],
            regular: true,
        };
        let report = decentralized_stabilizability(&plant);
        assert!(!report.stabilizable);
        let (inputs, _outputs) = report.failing_partition.unwrap();
        assert_eq!(inputs, vec![0]);
        assert!((report.failing_lambda.unwrap() - Complex::new(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn coordination_game_is_not_strongly_stabilizable() {
        let game = games::coordination_identity_2x2();
        let eq = eq_of(&game, MixedProfile::uniform(&[2, 2]));
        let plant = linearize_plant(
            &game,
            &eq,
            &[DynamicsKind::Replicator, DynamicsKind::Replicator],
        )
        .unwrap();
        let report = strong_stabilizability(&plant).unwrap();
        assert!(!report.strongly_stabilizable);
        // Closed-form pole sqrt(1/2 * 1/2) = 1/2, one between the zeros.
        assert_eq!(report.real_unstable_poles.len(), 1);
        assert_abs_diff_eq!(report.real_unstable_poles[0], 0.5, epsilon = 1e-9);
        assert!(report.real_unstable_blocking_zeros.contains(&0.0));
    }

    #[test]
    fn zero_sum_plants_are_strongly_stabilizable() {
        for game in [games::matching_pennies(), games::circulant_zero_sum_4()] {
            let k = game.num_actions(0);
            let eq = eq_of(&game, MixedProfile::uniform(&[k, k]));
            let plant = linearize_plant(
                &game,
                &eq,
                &[DynamicsKind::TargetGradient, DynamicsKind::TargetGradient],
            )
            .unwrap();
            // Skew-symmetric reduced Jacobian, purely imaginary spectrum.
            assert!(
                (plant.reduced_m.clone() + plant.reduced_m.transpose()).amax() < 1e-10
            );
            let report = strong_stabilizability(&plant).unwrap();
            assert!(report.strongly_stabilizable);
            assert!(report.real_unstable_poles.is_empty());
        }
    }

    #[test]
    fn ordinal_potential_target_gradient_strongly_stabilizable() {
        let game = games::ordinal_potential_3x3();
        let eq = eq_of(&game, games::ordinal_potential_3x3_equilibrium());
        let plant = linearize_plant(
            &game,
            &eq,
            &[DynamicsKind::TargetGradient, DynamicsKind::TargetGradient],
        )
        .unwrap();
        let report = strong_stabilizability(&plant).unwrap();
        assert!(report.strongly_stabilizable);
        assert!(report.real_unstable_poles.is_empty());
    }

    #[test]
    fn strategic_zero_sum_witnesses() {
        let exact = games::matching_pennies();
        let r = strategic_zero_sum_check(&exact).unwrap();
        assert!(r.equivalent);
        assert_abs_diff_eq!(r.alpha.unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.beta.unwrap(), 1.0, epsilon = 1e-12);

        let strat = games::strategically_zero_sum_3x3();
        let r = strategic_zero_sum_check(&strat).unwrap();
        assert!(r.equivalent);
        assert_abs_diff_eq!(r.beta.unwrap(), 0.25, epsilon = 1e-9);

        let coord = games::coordination_identity_2x2();
        let r = strategic_zero_sum_check(&coord).unwrap();
        assert!(!r.equivalent);
    }

    #[test]
    fn strategic_check_absorbs_column_offsets() {
        // Matching pennies with per-column constants added to M_12.
        let m12 = DMatrix::from_row_slice(2, 2, &[1.0 + 3.0, -1.0 - 2.0, -1.0 + 3.0, 1.0 - 2.0]);
        let m21 = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let game = Game::polymatrix(
            vec![2, 2],
            vec![
                crate::game::Edge { from: 0, to: 1, matrix: m12 },
                crate::game::Edge { from: 1, to: 0, matrix: m21 },
            ],
        )
        .unwrap();
        let r = strategic_zero_sum_check(&game).unwrap();
        assert!(r.equivalent);
    }

    #[test]
    fn newton_equilibrium_feeds_plant() {
        let game = games::ordinal_potential_3x3();
        let x0 = MixedProfile::from_rows(&[
            vec![0.4, 0.25, 0.35],
            vec![0.3, 0.4, 0.3],
        ])
        .unwrap();
        let eq = find_completely_mixed_ne(&game, &x0, 1e-10, 100).unwrap();
        let plant = linearize_plant(
            &game,
            &eq,
            &[DynamicsKind::TargetGradient, DynamicsKind::TargetGradient],
        )
        .unwrap();
        let report = spectral_report(&plant.top_left).unwrap();
        // The known spectrum of the reduced Jacobian: +-1.1721 +- 0.2011i.
        let mut re: Vec<f64> = report.eigenvalues.iter().map(|l| l.re.abs()).collect();
        let mut im: Vec<f64> = report.eigenvalues.iter().map(|l| l.im.abs()).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        im.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for r in re {
            assert_abs_diff_eq!(r, 1.172081, epsilon = 1e-3);
        }
        for i in im {
            assert_abs_diff_eq!(i, 0.201097, epsilon = 1e-3);
        }
    }
}
