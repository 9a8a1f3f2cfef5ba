//! User drops, fading realizations, and interference whitening.
//!
//! Channel gains combine three factors: distance-dependent path loss
//! `(d/d0)^{-beta}`, lognormal shadowing, and i.i.d. Rayleigh fast fading.
//! The reference SNR absorbs transmit power normalization, so noise has unit
//! variance everywhere downstream. Shadowing and fast fading are drawn
//! separately so that schedulers can hold shadowing fixed over a drop while
//! redrawing fast fading per slot.

use nalgebra::Complex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::layout::{inside_hexagon, CellLayout};
use crate::linalg::{inv_sqrt_pd, CMat, RVec};

/// Users closer to a base station than this fraction of the cell radius are
/// pushed out to it, keeping channel gains bounded.
pub const MIN_DISTANCE_FACTOR: f64 = 0.035;

/// Large-scale propagation parameters. All powers downstream are normalized
/// to unit noise variance; `reference_snr_db` is the SNR a user would see at
/// distance `cell_radius_km` without shadowing.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FadingParams {
    pub path_loss_exponent: f64,
    pub shadowing_std_db: f64,
    pub reference_snr_db: f64,
    pub cell_radius_km: f64,
}

impl Default for FadingParams {
    fn default() -> Self {
        FadingParams {
            path_loss_exponent: 3.8,
            shadowing_std_db: 8.0,
            reference_snr_db: 20.0,
            cell_radius_km: 1.0,
        }
    }
}

impl FadingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.path_loss_exponent > 2.0) {
            return Err(Error::Config(format!(
                "path_loss_exponent must exceed 2, got {}",
                self.path_loss_exponent
            )));
        }
        if !(self.shadowing_std_db >= 0.0) {
            return Err(Error::Config(format!(
                "shadowing_std_db must be nonnegative, got {}",
                self.shadowing_std_db
            )));
        }
        if !(self.cell_radius_km > 0.0) {
            return Err(Error::Config(format!(
                "cell_radius_km must be positive, got {}",
                self.cell_radius_km
            )));
        }
        Ok(())
    }

    fn reference_gain(&self) -> f64 {
        10f64.powf(self.reference_snr_db / 10.0)
    }
}

/// Positions of all dropped users, in the order cell 0's users, cell 1's
/// users, and so on.
#[derive(Clone, Debug, PartialEq)]
pub struct UserDrop {
    pub positions: Vec<[f64; 2]>,
    pub home_cell: Vec<usize>,
    pub seed: u64,
}

impl UserDrop {
    pub fn num_users(&self) -> usize {
        self.positions.len()
    }
}

/// Drops `users_per_cell` users uniformly into each analyzed cell by
/// rejection sampling inside the hexagon.
pub fn drop_users(layout: &CellLayout, users_per_cell: usize, seed: u64) -> Result<UserDrop> {
    if users_per_cell == 0 {
        return Err(Error::Config("users_per_cell must be at least 1".into()));
    }
    let radius = layout.cell_radius_km;
    let min_dist = MIN_DISTANCE_FACTOR * radius;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(users_per_cell * layout.cluster_size);
    let mut home_cell = Vec::with_capacity(positions.capacity());
    for cell in 0..layout.cluster_size {
        let center = layout.cell_centers[cell];
        for _ in 0..users_per_cell {
            let half_height = 3f64.sqrt() / 2.0 * radius;
            let mut offset;
            loop {
                offset = [
                    rng.random_range(-radius..radius),
                    rng.random_range(-half_height..half_height),
                ];
                if inside_hexagon(offset, radius) {
                    break;
                }
            }
            let dist = (offset[0].powi(2) + offset[1].powi(2)).sqrt();
            if dist < min_dist {
                if dist < 1e-12 {
                    offset = [min_dist, 0.0];
                } else {
                    offset = [offset[0] * min_dist / dist, offset[1] * min_dist / dist];
                }
            }
            positions.push([center[0] + offset[0], center[1] + offset[1]]);
            home_cell.push(cell);
        }
    }
    Ok(UserDrop {
        positions,
        home_cell,
        seed,
    })
}

/// Linear shadowing coefficients per (user, cell), fixed for a whole drop.
#[derive(Clone, Debug, PartialEq)]
pub struct ShadowMap {
    pub linear: Vec<Vec<f64>>,
}

/// Draws independent lognormal shadowing for every user/cell pair. Draw
/// order is users outer, cells inner, which downstream code relies on for
/// reproducibility.
pub fn draw_shadowing(
    layout: &CellLayout,
    num_users: usize,
    params: &FadingParams,
    rng: &mut ChaCha8Rng,
) -> ShadowMap {
    let cells = layout.num_cells();
    let mut linear = Vec::with_capacity(num_users);
    for _ in 0..num_users {
        let mut row = Vec::with_capacity(cells);
        for _ in 0..cells {
            let db: f64 = rng.sample::<f64, _>(StandardNormal) * params.shadowing_std_db;
            row.push(10f64.powf(db / 10.0));
        }
        linear.push(row);
    }
    ShadowMap { linear }
}

/// Channel matrices of one fading realization.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    pub n_t: usize,
    pub n_r: usize,
    pub cluster_size: usize,
    /// Per user: aggregate channel from the analyzed cluster, n_r x B·n_t.
    pub aggregate: Vec<CMat>,
    /// Per user, per interfering cell: n_r x n_t channel block.
    pub interferers: Vec<Vec<CMat>>,
    /// Budget slot (0..B) of each interfering cell, copied from the layout.
    pub interferer_slot: Vec<usize>,
    /// Whitened aggregates, present after `whiten_interference`.
    pub whitened: Option<Vec<CMat>>,
}

impl ChannelSet {
    pub fn num_users(&self) -> usize {
        self.aggregate.len()
    }

    pub fn n_t_total(&self) -> usize {
        self.cluster_size * self.n_t
    }

    /// The channel downstream consumers should precode against: whitened
    /// when available, raw otherwise.
    pub fn effective(&self, user: usize) -> &CMat {
        match &self.whitened {
            Some(w) => &w[user],
            None => &self.aggregate[user],
        }
    }

    pub fn effective_all(&self) -> Vec<&CMat> {
        (0..self.num_users()).map(|u| self.effective(u)).collect()
    }
}

fn channel_block(
    user_pos: [f64; 2],
    cell_center: [f64; 2],
    shadow: f64,
    params: &FadingParams,
    n_t: usize,
    n_r: usize,
    rng: &mut ChaCha8Rng,
) -> CMat {
    let radius = params.cell_radius_km;
    let dx = user_pos[0] - cell_center[0];
    let dy = user_pos[1] - cell_center[1];
    let dist = (dx * dx + dy * dy).sqrt().max(MIN_DISTANCE_FACTOR * radius);
    let gain =
        shadow * params.reference_gain() * (dist / radius).powf(-params.path_loss_exponent);
    let amplitude = gain.sqrt();
    let scale = (0.5f64).sqrt();
    CMat::from_fn(n_r, n_t, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(re * scale * amplitude, im * scale * amplitude)
    })
}

/// Draws one fast-fading realization on top of fixed shadowing. Matrix
/// entries are drawn row-major, users outer, cells inner (analyzed cells
/// first, then interferers in layout order).
pub fn generate_channels_with_shadowing(
    layout: &CellLayout,
    drop: &UserDrop,
    params: &FadingParams,
    shadows: &ShadowMap,
    n_t: usize,
    n_r: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ChannelSet> {
    if n_t == 0 || n_r == 0 {
        return Err(Error::Config("antenna counts must be at least 1".into()));
    }
    if shadows.linear.len() != drop.num_users() {
        return Err(Error::Config(format!(
            "shadow map covers {} users, drop has {}",
            shadows.linear.len(),
            drop.num_users()
        )));
    }
    let b = layout.cluster_size;
    let n_t_total = b * n_t;
    let mut aggregate = Vec::with_capacity(drop.num_users());
    let mut interferers = Vec::with_capacity(drop.num_users());
    for (user, &pos) in drop.positions.iter().enumerate() {
        let shadow_row = &shadows.linear[user];
        let mut h = CMat::zeros(n_r, n_t_total);
        for (cell, &shadow) in shadow_row.iter().enumerate().take(b) {
            let block = channel_block(
                pos,
                layout.cell_centers[cell],
                shadow,
                params,
                n_t,
                n_r,
                rng,
            );
            h.view_mut((0, cell * n_t), (n_r, n_t)).copy_from(&block);
        }
        let mut ints = Vec::with_capacity(layout.interferer_cells.len());
        for &cell in &layout.interferer_cells {
            ints.push(channel_block(
                pos,
                layout.cell_centers[cell],
                shadow_row[cell],
                params,
                n_t,
                n_r,
                rng,
            ));
        }
        aggregate.push(h);
        interferers.push(ints);
    }
    let interferer_slot = layout
        .interferer_cells
        .iter()
        .map(|&c| layout.position_in_cluster[c])
        .collect();
    Ok(ChannelSet {
        n_t,
        n_r,
        cluster_size: b,
        aggregate,
        interferers,
        interferer_slot,
        whitened: None,
    })
}

/// Draws `k` independent unit-variance Rayleigh channel matrices of size
/// `n_r x n_t_total` from one seed, with no geometry attached. Intended for
/// standalone solver runs and randomized checks.
pub fn rayleigh_channels(k: usize, n_r: usize, n_t_total: usize, seed: u64) -> Vec<CMat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (0.5f64).sqrt();
    (0..k)
        .map(|_| {
            CMat::from_fn(n_r, n_t_total, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex::new(re * scale, im * scale)
            })
        })
        .collect()
}

/// Draws shadowing and fast fading in one go from a single seed.
pub fn generate_channels(
    layout: &CellLayout,
    drop: &UserDrop,
    params: &FadingParams,
    n_t: usize,
    n_r: usize,
    seed: u64,
) -> Result<ChannelSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shadows = draw_shadowing(layout, drop.num_users(), params, &mut rng);
    generate_channels_with_shadowing(layout, drop, params, &shadows, n_t, n_r, &mut rng)
}

/// Whitens each user's aggregate channel against worst-case inter-cluster
/// interference: every surrounding cell transmits at its full per-antenna
/// budget, reusing the analyzed cluster's budget through the cell's slot.
/// After whitening, interference plus noise has identity covariance.
pub fn whiten_interference(channels: &ChannelSet, per_antenna_budget: &RVec) -> Result<ChannelSet> {
    let n_t = channels.n_t;
    if per_antenna_budget.len() != channels.n_t_total() {
        return Err(Error::Config(format!(
            "per-antenna budget has length {}, expected {}",
            per_antenna_budget.len(),
            channels.n_t_total()
        )));
    }
    if per_antenna_budget.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::Config("per-antenna budgets must be positive".into()));
    }
    let mut whitened = Vec::with_capacity(channels.num_users());
    for user in 0..channels.num_users() {
        let mut cov = CMat::identity(channels.n_r, channels.n_r);
        for (block, &slot) in channels.interferers[user]
            .iter()
            .zip(&channels.interferer_slot)
        {
            let mut scaled = block.clone();
            for t in 0..n_t {
                let p = per_antenna_budget[slot * n_t + t];
                scaled.column_mut(t).scale_mut(p.sqrt());
            }
            cov += &scaled * scaled.adjoint();
        }
        let root = inv_sqrt_pd(&cov)?;
        whitened.push(&root * &channels.aggregate[user]);
    }
    let mut out = channels.clone();
    out.whitened = Some(whitened);
    Ok(out)
}
