//! Block-diagonalization kernels.
//!
//! Each scheduled user's precoder is confined to the null space of every
//! other user's channel, which removes intra-cluster interference and turns
//! the cluster into parallel single-user links. This module computes the
//! null-space factorizations, the conventional water-filling solution under
//! a sum power budget, rate evaluation, and power-feasibility helpers.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::linalg::{herm_eigen_desc, logdet_i_plus_gram, null_space, scale_columns, CMat, RVec};
use crate::power::PowerConstraint;

pub const LN_2: f64 = std::f64::consts::LN_2;

/// Null-space factors of one scheduled user.
#[derive(Clone, Debug)]
pub struct UserDecomp {
    /// V_k: orthonormal basis of the other users' joint null space, N_t x m_r.
    pub null_basis: CMat,
    /// G_k = H_k V_k: the channel seen inside that null space, n_r x m_r.
    pub effective: CMat,
    /// Right pseudo-inverse of G_k, m_r x n_r.
    pub pinv: CMat,
    /// Zero-forcing beamformer V_k G_k^+, N_t x n_r; H_k times this is I.
    pub zf_precoder: CMat,
}

/// Null-space decomposition of a scheduled user set.
#[derive(Clone, Debug)]
pub struct NullSpaceDecomp {
    pub users: Vec<UserDecomp>,
    /// The channels the decomposition was built from, n_r x N_t each.
    pub channels: Vec<CMat>,
    pub n_t_total: usize,
    pub n_r: usize,
    /// Null-space dimension N_t - (K-1)·n_r, shared by all users.
    pub m_r: usize,
}

impl NullSpaceDecomp {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }
}

/// Orthonormal basis of the joint null space of all users except `k`.
/// Returns the basis and its dimension m_r.
pub fn null_space_basis(channels: &[&CMat], k: usize) -> Result<(CMat, usize)> {
    let n_t_total = channels[k].ncols();
    let others: Vec<&CMat> = channels
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, h)| *h)
        .collect();
    let stacked_rows: usize = others.iter().map(|h| h.nrows()).sum();
    let mut stacked = CMat::zeros(stacked_rows, n_t_total);
    let mut row = 0;
    for h in &others {
        stacked.view_mut((row, 0), (h.nrows(), n_t_total)).copy_from(h);
        row += h.nrows();
    }
    let (basis, rank) = null_space(&stacked)?;
    if rank != stacked_rows {
        return Err(Error::DegenerateChannel(format!(
            "stacked channel of {} users has rank {rank}, expected {stacked_rows}",
            channels.len() - 1
        )));
    }
    debug_assert_eq!(basis.ncols(), n_t_total - rank);
    Ok((basis, n_t_total - rank))
}

/// Builds the full per-user decomposition for a scheduled set.
pub fn effective_channels(channels: &[&CMat]) -> Result<NullSpaceDecomp> {
    if channels.is_empty() {
        return Err(Error::Config("scheduled user set is empty".into()));
    }
    let n_t_total = channels[0].ncols();
    let n_r = channels[0].nrows();
    for h in channels {
        if h.ncols() != n_t_total || h.nrows() != n_r {
            return Err(Error::Config(
                "scheduled users have inconsistent channel dimensions".into(),
            ));
        }
    }
    let k_users = channels.len();
    if k_users * n_r > n_t_total {
        return Err(Error::Config(format!(
            "{k_users} users x {n_r} antennas exceed {n_t_total} transmit dimensions"
        )));
    }
    let m_r = n_t_total - (k_users - 1) * n_r;
    let mut users = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let (null_basis, dim) = null_space_basis(channels, k)?;
        debug_assert_eq!(dim, m_r);
        let effective = channels[k] * &null_basis;
        let gram = &effective * effective.adjoint();
        let (vals, vecs) = herm_eigen_desc(&gram);
        if vals[n_r - 1] <= vals[0].max(0.0) * 1e-20 {
            return Err(Error::DegenerateChannel(format!(
                "effective channel of user {k} is row-rank deficient"
            )));
        }
        let gram_inv = &scale_columns(&vecs, &vals.map(|v| v.recip())) * vecs.adjoint();
        let pinv = effective.adjoint() * gram_inv;
        let zf_precoder = &null_basis * &pinv;
        users.push(UserDecomp {
            null_basis,
            effective,
            pinv,
            zf_precoder,
        });
    }
    Ok(NullSpaceDecomp {
        users,
        channels: channels.iter().map(|h| (*h).clone()).collect(),
        n_t_total,
        n_r,
        m_r,
    })
}

/// Exact water-filling: maximizes sum log(1 + g_i q_i) subject to sum q = budget.
/// Solved in closed form by sorting the inverse gains; no iteration, the
/// budget is met exactly.
pub fn waterfill(gains: &RVec, budget: f64) -> Result<RVec> {
    if gains.is_empty() {
        return Err(Error::Config("water-filling needs at least one gain".into()));
    }
    if gains.iter().any(|&g| !(g > 0.0)) {
        return Err(Error::Config("water-filling gains must be positive".into()));
    }
    if !(budget > 0.0) {
        return Err(Error::Config(format!(
            "water-filling budget must be positive, got {budget}"
        )));
    }
    let n = gains.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| gains[j].partial_cmp(&gains[i]).unwrap());
    let inv: Vec<f64> = order.iter().map(|&i| gains[i].recip()).collect();
    let mut prefix = 0.0;
    let mut level = 0.0;
    let mut active = 0;
    for m in 1..=n {
        prefix += inv[m - 1];
        let candidate = (budget + prefix) / m as f64;
        if candidate > inv[m - 1] {
            level = candidate;
            active = m;
        } else {
            break;
        }
    }
    let mut q = RVec::zeros(n);
    for m in 0..active {
        q[order[m]] = level - inv[m];
    }
    Ok(q)
}

/// Precoders of one scheduled set together with the rates and powers they
/// achieve. `feasibility_scaled` marks sets that were uniformly shrunk to
/// satisfy a constraint the underlying allocation does not natively handle.
#[derive(Clone, Debug)]
pub struct PrecoderSet {
    /// W_k, N_t x n_r per scheduled user.
    pub precoders: Vec<CMat>,
    pub per_user_rates_bits: Vec<f64>,
    pub sum_rate_bits: f64,
    /// Diagonal of sum_k W_k W_k^H.
    pub antenna_powers: RVec,
    pub feasibility_scaled: bool,
}

impl PrecoderSet {
    pub fn from_precoders(
        channels: &[&CMat],
        precoders: Vec<CMat>,
        feasibility_scaled: bool,
    ) -> Self {
        let n_t_total = precoders[0].nrows();
        let per_user_rates_bits: Vec<f64> = channels
            .iter()
            .zip(&precoders)
            .map(|(h, w)| logdet_i_plus_gram(&(*h * w)) / LN_2)
            .collect();
        let mut antenna_powers = RVec::zeros(n_t_total);
        for w in &precoders {
            for i in 0..n_t_total {
                antenna_powers[i] += w.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
        }
        PrecoderSet {
            sum_rate_bits: per_user_rates_bits.iter().sum(),
            precoders,
            per_user_rates_bits,
            antenna_powers,
            feasibility_scaled,
        }
    }
}

/// Sum rate in bits/s/Hz of a precoder set over the given channels,
/// recomputed from scratch.
pub fn sum_rate(channels: &[&CMat], set: &PrecoderSet) -> f64 {
    channels
        .iter()
        .zip(&set.precoders)
        .map(|(h, w)| logdet_i_plus_gram(&(*h * w)) / LN_2)
        .sum()
}

/// Largest normalized cross-user leakage ||H_j W_k|| / (||H_j|| ||W_k||)
/// over pairs j != k; zero for exact block diagonalization.
pub fn max_cross_leakage(channels: &[&CMat], precoders: &[CMat]) -> f64 {
    let mut worst: f64 = 0.0;
    for (j, h) in channels.iter().enumerate() {
        for (k, w) in precoders.iter().enumerate() {
            if j == k {
                continue;
            }
            let denom = h.norm() * w.norm();
            if denom > 0.0 {
                worst = worst.max((*h * w).norm() / denom);
            }
        }
    }
    worst
}

/// Conventional BD: per-user SVD beamforming plus water-filling across all
/// users' eigenmodes under a sum power budget.
pub fn conventional_bd(decomp: &NullSpaceDecomp, sum_budget: f64) -> Result<PrecoderSet> {
    let n_r = decomp.n_r;
    let k_users = decomp.num_users();
    let mut gains = Vec::with_capacity(k_users * n_r);
    let mut beams = Vec::with_capacity(k_users);
    for user in &decomp.users {
        // Thin SVD of G_k: right singular vectors carry the eigenmodes.
        let svd = user.effective.clone().svd(true, true);
        let v_t = svd
            .v_t
            .ok_or_else(|| Error::DegenerateChannel("SVD failed on effective channel".into()))?;
        let mut order: Vec<usize> = (0..n_r).collect();
        order.sort_by(|&i, &j| {
            svd.singular_values[j]
                .partial_cmp(&svd.singular_values[i])
                .unwrap()
        });
        let mut modes = CMat::zeros(decomp.m_r, n_r);
        for (dst, &src) in order.iter().enumerate() {
            modes.set_column(dst, &v_t.row(src).adjoint());
            gains.push(svd.singular_values[src].powi(2));
        }
        beams.push(modes);
    }
    let q = waterfill(&RVec::from_vec(gains), sum_budget)?;
    let precoders: Vec<CMat> = decomp
        .users
        .iter()
        .zip(beams.iter())
        .enumerate()
        .map(|(k, (user, modes))| {
            let powers = RVec::from_fn(n_r, |i, _| q[k * n_r + i].sqrt());
            &user.null_basis * scale_columns(modes, &powers)
        })
        .collect();
    let channel_refs: Vec<&CMat> = decomp.channels.iter().collect();
    Ok(PrecoderSet::from_precoders(&channel_refs, precoders, false))
}

/// Uniformly scales a precoder set so it satisfies `constraint`, marking the
/// result. The scale is the largest uniform factor keeping every bounded
/// quantity within budget.
pub fn scale_to_fit(
    channels: &[&CMat],
    set: &PrecoderSet,
    constraint: &PowerConstraint,
) -> PrecoderSet {
    let usage = constraint.reduce(&set.antenna_powers);
    let budgets = constraint.reduced_budgets();
    let mut ratio = f64::INFINITY;
    for i in 0..budgets.len() {
        if usage[i] > 1e-300 {
            ratio = ratio.min(budgets[i] / usage[i]);
        }
    }
    let scale = if ratio.is_finite() { ratio.sqrt() } else { 1.0 };
    let precoders: Vec<CMat> = set.precoders.iter().map(|w| w.map(|z| z * scale)).collect();
    PrecoderSet::from_precoders(channels, precoders, true)
}

/// Per-user conventional-BD rates (bits/s/Hz) under a sum power budget,
/// computed without forming any null-space basis: the BD eigenmode gains of
/// user k are the eigenvalues of H_k P_k H_k^H, where P_k projects onto the
/// null space of the other users' stacked channel T_k, and
/// H_k P_k H_k^H = H_k H_k^H - (H_k T_k^H)(T_k T_k^H)^{-1}(T_k H_k^H).
/// This is the hot path of greedy scheduling.
pub fn bd_user_rates(channels: &[&CMat], sum_budget: f64) -> Result<Vec<f64>> {
    let k_users = channels.len();
    if k_users == 0 {
        return Ok(Vec::new());
    }
    let n_t_total = channels[0].ncols();
    let n_r = channels[0].nrows();
    if k_users * n_r > n_t_total {
        return Err(Error::Config(format!(
            "{k_users} users x {n_r} antennas exceed {n_t_total} transmit dimensions"
        )));
    }
    // Block Gram matrix of the full stack, built once.
    let total_rows = k_users * n_r;
    let mut gram = CMat::zeros(total_rows, total_rows);
    for u in 0..k_users {
        for v in u..k_users {
            let block = channels[u] * channels[v].adjoint();
            gram.view_mut((u * n_r, v * n_r), (n_r, n_r)).copy_from(&block);
            if v > u {
                gram.view_mut((v * n_r, u * n_r), (n_r, n_r))
                    .copy_from(&block.adjoint());
            }
        }
    }
    let mut gains_per_user: Vec<Vec<f64>> = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let own: Vec<usize> = (k * n_r..(k + 1) * n_r).collect();
        let others: Vec<usize> = (0..total_rows).filter(|r| r / n_r != k).collect();
        let own_gram = gram.select_rows(&own).select_columns(&own);
        let schur = if others.is_empty() {
            own_gram
        } else {
            let tt = gram.select_rows(&others).select_columns(&others);
            let cross = gram.select_rows(&others).select_columns(&own);
            let chol = Cholesky::new(tt).ok_or_else(|| {
                Error::DegenerateChannel(
                    "stacked channel Gram matrix is not positive definite".into(),
                )
            })?;
            let solved = chol.solve(&cross);
            own_gram - cross.adjoint() * solved
        };
        let (vals, _) = herm_eigen_desc(&schur);
        gains_per_user.push(vals.iter().map(|&v| v.max(0.0)).collect());
    }
    // Joint water-filling over every user's positive eigenmodes.
    let flat: Vec<(usize, f64)> = gains_per_user
        .iter()
        .enumerate()
        .flat_map(|(k, gs)| gs.iter().filter(|&&g| g > 1e-300).map(move |&g| (k, g)))
        .collect();
    let mut rates = vec![0.0; k_users];
    if flat.is_empty() {
        return Ok(rates);
    }
    let gains = RVec::from_iterator(flat.len(), flat.iter().map(|&(_, g)| g));
    let q = waterfill(&gains, sum_budget)?;
    for (i, &(k, g)) in flat.iter().enumerate() {
        rates[k] += (1.0 + g * q[i]).ln() / LN_2;
    }
    Ok(rates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cplx;
    use approx::assert_abs_diff_eq;
    use nalgebra::Complex;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_cmat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
        CMat::from_fn(rows, cols, |_, _| {
            Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    fn random_channels(k: usize, n_r: usize, n_t_total: usize, seed: u64) -> Vec<CMat> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k).map(|_| random_cmat(n_r, n_t_total, &mut rng)).collect()
    }

    #[test]
    fn null_space_basis_axis_aligned() {
        let h1 = CMat::from_row_slice(1, 2, &[cplx(1.0), cplx(0.0)]);
        let h2 = CMat::from_row_slice(1, 2, &[cplx(0.3), cplx(0.9)]);
        let refs = vec![&h1, &h2];
        let (basis, m_r) = null_space_basis(&refs, 1).unwrap();
        assert_eq!(m_r, 1);
        assert_abs_diff_eq!(basis[(0, 0)].norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(basis[(1, 0)].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_user_gets_the_full_space() {
        let h = random_channels(1, 2, 4, 1);
        let refs: Vec<&CMat> = h.iter().collect();
        let (basis, m_r) = null_space_basis(&refs, 0).unwrap();
        assert_eq!(m_r, 4);
        let gram = basis.adjoint() * &basis;
        assert_abs_diff_eq!((gram - CMat::identity(4, 4)).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn null_space_matches_projector_oracle() {
        // Independent oracle: the orthogonal projector I - T^+ T, with the
        // pseudo-inverse computed from T's own SVD.
        let channels = random_channels(3, 2, 6, 2);
        let refs: Vec<&CMat> = channels.iter().collect();
        for k in 0..3 {
            let (basis, m_r) = null_space_basis(&refs, k).unwrap();
            assert_eq!(m_r, 2);
            let mut stacked = CMat::zeros(4, 6);
            let others: Vec<&CMat> = refs
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(_, h)| *h)
                .collect();
            stacked.view_mut((0, 0), (2, 6)).copy_from(others[0]);
            stacked.view_mut((2, 0), (2, 6)).copy_from(others[1]);
            let svd = stacked.clone().svd(true, true);
            let pinv = svd.clone().pseudo_inverse(1e-12).unwrap();
            let projector = CMat::identity(6, 6) - pinv * &stacked;
            assert_abs_diff_eq!((&projector * &basis - &basis).norm(), 0.0, epsilon = 1e-10);
            let trace: f64 = (0..6).map(|i| projector[(i, i)].re).sum();
            assert_abs_diff_eq!(trace, 2.0, epsilon = 1e-9);
            assert!((&stacked * &basis).norm() < 1e-10 * stacked.norm());
        }
    }

    #[test]
    fn degenerate_stack_is_reported() {
        let h1 = CMat::from_row_slice(1, 4, &[cplx(1.0), cplx(0.0), cplx(0.0), cplx(0.0)]);
        let h2 = h1.clone();
        let h3 = CMat::from_row_slice(1, 4, &[cplx(0.0), cplx(1.0), cplx(0.0), cplx(0.0)]);
        let refs = vec![&h1, &h2, &h3];
        match null_space_basis(&refs, 2) {
            Err(Error::DegenerateChannel(_)) => {}
            other => panic!("expected degenerate-channel error, got {other:?}"),
        }
    }

    #[test]
    fn effective_channels_invariants() {
        let channels = random_channels(2, 2, 6, 3);
        let refs: Vec<&CMat> = channels.iter().collect();
        let decomp = effective_channels(&refs).unwrap();
        assert_eq!(decomp.m_r, 4);
        for (k, user) in decomp.users.iter().enumerate() {
            let vtv = user.null_basis.adjoint() * &user.null_basis;
            assert_abs_diff_eq!((vtv - CMat::identity(4, 4)).norm(), 0.0, epsilon = 1e-10);
            // G G^+ = I on the wide side.
            let ggp = &user.effective * &user.pinv;
            assert_abs_diff_eq!((ggp - CMat::identity(2, 2)).norm(), 0.0, epsilon = 1e-8);
            // H_k times the ZF beamformer is the identity.
            let hz = &channels[k] * &user.zf_precoder;
            assert_abs_diff_eq!((hz - CMat::identity(2, 2)).norm(), 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn square_effective_channel_inverts() {
        // K=3, n_r=2, N_t=6: m_r = 2 = n_r, so G is square and Q G = V.
        let channels = random_channels(3, 2, 6, 4);
        let refs: Vec<&CMat> = channels.iter().collect();
        let decomp = effective_channels(&refs).unwrap();
        assert_eq!(decomp.m_r, 2);
        for user in &decomp.users {
            let inv = user.effective.clone().try_inverse().unwrap();
            assert_abs_diff_eq!((&user.pinv - &inv).norm(), 0.0, epsilon = 1e-8);
            let qg = &user.zf_precoder * &user.effective;
            assert_abs_diff_eq!((qg - &user.null_basis).norm(), 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn identity_channel_gives_identity_effective() {
        let h = CMat::identity(3, 3);
        let refs = vec![&h];
        let decomp = effective_channels(&refs).unwrap();
        assert_abs_diff_eq!(
            (&decomp.users[0].effective - CMat::identity(3, 3)).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn waterfill_symmetric_split() {
        let q = waterfill(&RVec::from_vec(vec![1.0, 1.0]), 2.0).unwrap();
        assert_abs_diff_eq!(q[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn waterfill_starves_the_weak_channel() {
        // Water level 1.1 analytically, far below 1/g_2 = 100.
        let q = waterfill(&RVec::from_vec(vec![10.0, 0.01]), 1.0).unwrap();
        assert_abs_diff_eq!(q[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn waterfill_single_channel() {
        let q = waterfill(&RVec::from_vec(vec![5.0]), 3.0).unwrap();
        assert_abs_diff_eq!(q[0], 3.0, epsilon = 1e-12);
        let rate = (1.0 + 5.0 * q[0]).log2();
        assert_abs_diff_eq!(rate, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn waterfill_kkt_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.random_range(1..8);
            let gains = RVec::from_fn(n, |_, _| rng.random::<f64>() * 10.0 + 1e-3);
            let budget = rng.random::<f64>() * 5.0 + 1e-3;
            let q = waterfill(&gains, budget).unwrap();
            assert_abs_diff_eq!(q.sum(), budget, epsilon = 1e-10);
            let level = (0..n)
                .filter(|&i| q[i] > 0.0)
                .map(|i| gains[i].recip() + q[i])
                .fold(f64::NEG_INFINITY, f64::max);
            for i in 0..n {
                if q[i] > 0.0 {
                    assert_abs_diff_eq!(gains[i].recip() + q[i], level, epsilon = 1e-9);
                } else {
                    assert!(gains[i].recip() >= level - 1e-9);
                }
            }
        }
    }

    #[test]
    fn conventional_bd_single_user_is_plain_waterfilling() {
        let mut h = CMat::zeros(2, 4);
        h[(0, 0)] = cplx(2.0);
        h[(1, 1)] = cplx(0.5);
        let refs = vec![&h];
        let decomp = effective_channels(&refs).unwrap();
        let set = conventional_bd(&decomp, 3.0).unwrap();
        let q = waterfill(&RVec::from_vec(vec![4.0, 0.25]), 3.0).unwrap();
        let expected: f64 = (1.0 + 4.0 * q[0]).log2() + (1.0 + 0.25 * q[1]).log2();
        assert_abs_diff_eq!(set.sum_rate_bits, expected, epsilon = 1e-10);
        assert_abs_diff_eq!(set.antenna_powers.sum(), 3.0, epsilon = 1e-10);
    }

    #[test]
    fn conventional_bd_zero_forces_and_spends_the_budget() {
        let channels = random_channels(3, 2, 8, 6);
        let refs: Vec<&CMat> = channels.iter().collect();
        let decomp = effective_channels(&refs).unwrap();
        let set = conventional_bd(&decomp, 2.0).unwrap();
        assert!(max_cross_leakage(&refs, &set.precoders) < 1e-10);
        assert_abs_diff_eq!(set.antenna_powers.sum(), 2.0, epsilon = 1e-9);
        // Per-antenna powers are not the eigenmode powers: the BD basis
        // spreads each mode across antennas.
        let spread = set
            .antenna_powers
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(p), hi.max(p))
            });
        assert!(spread.1 - spread.0 > 1e-6);
    }

    #[test]
    fn conventional_bd_monotone_in_budget() {
        let channels = random_channels(2, 2, 4, 7);
        let refs: Vec<&CMat> = channels.iter().collect();
        let decomp = effective_channels(&refs).unwrap();
        let mut last = 0.0;
        for budget in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let rate = conventional_bd(&decomp, budget).unwrap().sum_rate_bits;
            assert!(rate >= last - 1e-12);
            last = rate;
        }
    }

    #[test]
    fn sum_rate_examples() {
        let h = CMat::from_element(1, 1, cplx(1.0));
        let refs = vec![&h];
        let zero = PrecoderSet::from_precoders(&refs, vec![CMat::zeros(1, 1)], false);
        assert_abs_diff_eq!(zero.sum_rate_bits, 0.0, epsilon = 1e-12);
        let w = CMat::from_element(1, 1, cplx(3f64.sqrt()));
        let set = PrecoderSet::from_precoders(&refs, vec![w], false);
        assert_abs_diff_eq!(set.sum_rate_bits, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sum_rate(&refs, &set), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn sum_rate_invariant_under_right_unitary() {
        let channels = random_channels(2, 2, 4, 8);
        let refs: Vec<&CMat> = channels.iter().collect();
        let decomp = effective_channels(&refs).unwrap();
        let set = conventional_bd(&decomp, 2.0).unwrap();
        // Unitary 2x2 rotation with a phase twist.
        let theta: f64 = 0.7;
        let u = CMat::from_row_slice(
            2,
            2,
            &[
                Complex::new(theta.cos(), 0.0),
                Complex::new(0.0, theta.sin()),
                Complex::new(0.0, theta.sin()),
                Complex::new(theta.cos(), 0.0),
            ],
        );
        let uh = &u * u.adjoint();
        assert_abs_diff_eq!((uh - CMat::identity(2, 2)).norm(), 0.0, epsilon = 1e-12);
        let rotated: Vec<CMat> = set.precoders.iter().map(|w| w * &u).collect();
        let rot_set = PrecoderSet::from_precoders(&refs, rotated, false);
        assert_abs_diff_eq!(rot_set.sum_rate_bits, set.sum_rate_bits, epsilon = 1e-10);
    }

    #[test]
    fn scale_to_fit_respects_all_kinds() {
        let channels = random_channels(2, 2, 4, 9);
        let refs: Vec<&CMat> = channels.iter().collect();
        let decomp = effective_channels(&refs).unwrap();
        let set = conventional_bd(&decomp, 2.0).unwrap();
        for constraint in [
            PowerConstraint::uniform_per_antenna(2, 2, 1.0),
            PowerConstraint::per_bs(2, 2, 1.0),
            PowerConstraint::sum(2, 1.0),
        ] {
            let scaled = scale_to_fit(&refs, &set, &constraint);
            assert!(scaled.feasibility_scaled);
            assert!(constraint.max_violation(&scaled.antenna_powers) < 1e-10);
            assert!(scaled.sum_rate_bits <= set.sum_rate_bits + 1e-10);
            // The binding quantity sits exactly at its budget.
            let slack = constraint.slack(&scaled.antenna_powers);
            let min_slack = slack.iter().fold(f64::INFINITY, |a, &s| a.min(s));
            assert_abs_diff_eq!(min_slack, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn fast_rates_match_the_full_path() {
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let n_r = rng.random_range(1..3usize);
            let n_t_total = rng.random_range(2..5usize) * n_r + rng.random_range(0..3usize);
            let k = rng.random_range(1..=(n_t_total / n_r).min(4));
            let channels: Vec<CMat> = (0..k)
                .map(|_| random_cmat(n_r, n_t_total, &mut rng))
                .collect();
            let refs: Vec<&CMat> = channels.iter().collect();
            let budget = 0.5 + rng.random::<f64>() * 3.0;
            let fast = bd_user_rates(&refs, budget).unwrap();
            let decomp = effective_channels(&refs).unwrap();
            let full = conventional_bd(&decomp, budget).unwrap();
            assert_eq!(fast.len(), full.per_user_rates_bits.len());
            for (f, s) in fast.iter().zip(&full.per_user_rates_bits) {
                assert_abs_diff_eq!(f, s, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn fast_rates_handle_colinear_users() {
        let h1 = CMat::from_row_slice(1, 2, &[cplx(1.0), cplx(0.0)]);
        let h2 = CMat::from_row_slice(1, 2, &[cplx(0.9), cplx(0.0)]);
        let refs = vec![&h1, &h2];
        // The stacked Gram is singular: either an error or a zero-gain in
        // the colinear direction is acceptable, but no panic and no rate
        // from a blocked user.
        match bd_user_rates(&refs, 1.0) {
            Err(Error::DegenerateChannel(_)) => {}
            Ok(rates) => {
                assert!(rates.iter().all(|&r| r >= 0.0));
                assert!(rates[1] < 1e-6);
            }
            Err(other) => panic!("unexpected error {other:?}"),
        }
    }
}
