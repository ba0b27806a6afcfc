//! Multi-cell topology and the time-correlated fading channel.
//!
//! Row order of every channel and demand matrix is cells ascending, then SPs
//! ascending, then users ascending. Column block `c` of the global channel
//! holds the antennas of BS `c`.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;
use crate::rng::{substream, Purpose};

/// Rejection samples allowed per user before giving up on a placement.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Dimensions of the network: antennas per cell and users per (cell, SP).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    antennas: Vec<usize>,
    users: Vec<Vec<usize>>,
    col_offsets: Vec<usize>,
    row_offsets: Vec<Vec<usize>>,
    n_total: usize,
    k_total: usize,
}

impl Layout {
    pub fn new(antennas: Vec<usize>, users: Vec<Vec<usize>>) -> Result<Self> {
        let cells = antennas.len();
        if cells == 0 || users.len() != cells {
            return Err(Error::ConfigInvalid(format!(
                "layout needs one antenna count and one user row per cell ({} vs {})",
                cells,
                users.len()
            )));
        }
        let sps = users[0].len();
        if sps == 0 || users.iter().any(|u| u.len() != sps) {
            return Err(Error::ConfigInvalid(
                "every cell must list the same number of SPs".into(),
            ));
        }
        if antennas.contains(&0) || users.iter().flatten().any(|&k| k == 0) {
            return Err(Error::ConfigInvalid(
                "antenna and user counts must be positive".into(),
            ));
        }
        let mut col_offsets = Vec::with_capacity(cells);
        let mut n_total = 0;
        for &n in &antennas {
            col_offsets.push(n_total);
            n_total += n;
        }
        let mut row_offsets = Vec::with_capacity(cells);
        let mut k_total = 0;
        for cell in &users {
            let mut offs = Vec::with_capacity(sps);
            for &k in cell {
                offs.push(k_total);
                k_total += k;
            }
            row_offsets.push(offs);
        }
        Ok(Self {
            antennas,
            users,
            col_offsets,
            row_offsets,
            n_total,
            k_total,
        })
    }

    /// Same antenna count and users per SP everywhere.
    pub fn uniform(cells: usize, antennas: usize, sps: usize, users_per_sp: usize) -> Result<Self> {
        Self::new(vec![antennas; cells], vec![vec![users_per_sp; sps]; cells])
    }

    pub fn num_cells(&self) -> usize {
        self.antennas.len()
    }

    pub fn num_sps(&self) -> usize {
        self.users[0].len()
    }

    pub fn antennas(&self, cell: usize) -> usize {
        self.antennas[cell]
    }

    /// `K_c^m`.
    pub fn users(&self, cell: usize, sp: usize) -> usize {
        self.users[cell][sp]
    }

    /// `K_c`.
    pub fn users_in_cell(&self, cell: usize) -> usize {
        self.users[cell].iter().sum()
    }

    /// `N`.
    pub fn total_antennas(&self) -> usize {
        self.n_total
    }

    /// `K`.
    pub fn total_users(&self) -> usize {
        self.k_total
    }

    pub fn col_offset(&self, cell: usize) -> usize {
        self.col_offsets[cell]
    }

    /// First global row of cell `cell`.
    pub fn cell_row_offset(&self, cell: usize) -> usize {
        self.row_offsets[cell][0]
    }

    /// First global row of SP `sp` in cell `cell`.
    pub fn sp_row_offset(&self, cell: usize, sp: usize) -> usize {
        self.row_offsets[cell][sp]
    }

    /// First column of SP `sp` inside the cell's `K_c`-wide precoder.
    pub fn sp_col_offset(&self, cell: usize, sp: usize) -> usize {
        self.row_offsets[cell][sp] - self.row_offsets[cell][0]
    }

    /// `(cell, sp, user)` of every global row, in row order.
    pub fn rows(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.users.iter().enumerate().flat_map(|(l, sps)| {
            sps.iter()
                .enumerate()
                .flat_map(move |(m, &k)| (0..k).map(move |u| (l, m, u)))
        })
    }

    /// `(cell, sp)` of a global row.
    pub fn owner(&self, row: usize) -> (usize, usize) {
        for (l, offs) in self.row_offsets.iter().enumerate() {
            for (m, &start) in offs.iter().enumerate() {
                if row >= start && row < start + self.users[l][m] {
                    return (l, m);
                }
            }
        }
        panic!("row {row} out of range");
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Inputs to [`build_topology`].
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyParams {
    pub num_cells: usize,
    pub cell_radius: f64,
    pub antennas_per_cell: usize,
    pub num_sps: usize,
    pub users_per_sp: usize,
    pub min_distance: f64,
}

#[derive(Debug, Clone)]
pub struct Topology {
    pub layout: Arc<Layout>,
    pub cell_radius: f64,
    pub min_distance: f64,
    pub bs_positions: Vec<Point>,
    /// One per global row.
    pub user_positions: Vec<Point>,
}

/// BS sites of the three-cell cluster: adjacent pointy-top hexagons whose
/// centres are pairwise `√3·R` apart.
pub fn cell_centres(num_cells: usize, radius: f64) -> Vec<Point> {
    let s3 = 3f64.sqrt();
    [
        Point { x: 0.0, y: 0.0 },
        Point {
            x: s3 * radius,
            y: 0.0,
        },
        Point {
            x: s3 / 2.0 * radius,
            y: 1.5 * radius,
        },
    ]
    .into_iter()
    .take(num_cells)
    .collect()
}

/// Whether `(dx, dy)` relative to the centre lies in the pointy-top hexagon
/// of circumradius `radius`.
pub fn in_hexagon(dx: f64, dy: f64, radius: f64) -> bool {
    let half_width = 3f64.sqrt() / 2.0 * radius;
    dx.abs() <= half_width && dy.abs() + dx.abs() / 3f64.sqrt() <= radius
}

pub fn build_topology(params: &TopologyParams, seed: u64) -> Result<Topology> {
    if params.num_cells == 0 || params.num_cells > 3 {
        return Err(Error::ConfigInvalid(format!(
            "the hexagonal cluster supports 1 to 3 cells, got {}",
            params.num_cells
        )));
    }
    if !(params.cell_radius > 0.0) || !(params.min_distance >= 0.0) {
        return Err(Error::ConfigInvalid(
            "cell radius must be positive and min distance nonnegative".into(),
        ));
    }
    let layout = Layout::uniform(
        params.num_cells,
        params.antennas_per_cell,
        params.num_sps,
        params.users_per_sp,
    )?;
    let radius = params.cell_radius;
    let bs_positions = cell_centres(params.num_cells, radius);
    let half_width = 3f64.sqrt() / 2.0 * radius;

    let mut user_positions = Vec::with_capacity(layout.total_users());
    for (cell, sp, user) in layout.rows() {
        let mut rng = substream(seed, Purpose::Placement, cell, sp, user);
        let centre = bs_positions[cell];
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let dx = rng.random_range(-half_width..=half_width);
            let dy = rng.random_range(-radius..=radius);
            if in_hexagon(dx, dy, radius) && dx.hypot(dy) >= params.min_distance {
                placed = Some(Point {
                    x: centre.x + dx,
                    y: centre.y + dy,
                });
                break;
            }
        }
        match placed {
            Some(p) => user_positions.push(p),
            None => {
                return Err(Error::ConfigInvalid(format!(
                    "could not place user {user} of SP {sp} in cell {cell} after {MAX_PLACEMENT_ATTEMPTS} attempts"
                )))
            }
        }
    }

    Ok(Topology {
        layout: Arc::new(layout),
        cell_radius: radius,
        min_distance: params.min_distance,
        bs_positions,
        user_positions,
    })
}

/// Urban-micro style path loss in dB.
pub fn path_loss_db(distance_m: f64, carrier_ghz: f64) -> f64 {
    22.7 + 36.7 * distance_m.log10() + 26.0 * carrier_ghz.log10()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossModel {
    pub carrier_ghz: f64,
    /// Log-normal shadowing standard deviation in dB; `None` disables it.
    pub shadowing_sigma_db: Option<f64>,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            carrier_ghz: 2.0,
            shadowing_sigma_db: None,
        }
    }
}

/// Linear large-scale gains `beta[row][bs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScale {
    num_bs: usize,
    gains: Vec<f64>,
}

impl LargeScale {
    pub fn from_gains(rows: usize, num_bs: usize, gains: Vec<f64>) -> Result<Self> {
        if gains.len() != rows * num_bs {
            return Err(Error::dim(
                "LargeScale",
                "gain count does not match rows x cells",
            ));
        }
        if gains.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::NonFinite("LargeScale"));
        }
        Ok(Self { num_bs, gains })
    }

    /// Gain between global user row `row` and BS `bs`.
    pub fn gain(&self, row: usize, bs: usize) -> f64 {
        self.gains[row * self.num_bs + bs]
    }

    /// Gain `β^{lc,m,k}` addressed as in the system model.
    pub fn link(&self, layout: &Layout, l: usize, c: usize, m: usize, k: usize) -> f64 {
        self.gain(layout.sp_row_offset(l, m) + k, c)
    }

    pub fn num_rows(&self) -> usize {
        self.gains.len() / self.num_bs
    }

    pub fn scaled(&self, factor: f64) -> LargeScale {
        LargeScale {
            num_bs: self.num_bs,
            gains: self.gains.iter().map(|g| g * factor).collect(),
        }
    }

    /// Largest expected link energy `N_c·β` over all user-BS pairs.
    pub fn max_link_energy(&self, layout: &Layout) -> f64 {
        let mut best = 0.0f64;
        for row in 0..self.num_rows() {
            for bs in 0..self.num_bs {
                best = best.max(layout.antennas(bs) as f64 * self.gain(row, bs));
            }
        }
        best
    }

    /// Factor that rescales the gains so the strongest link has expected
    /// energy `target`. A nonpositive target keeps physical units.
    pub fn energy_normaliser(&self, layout: &Layout, target: f64) -> f64 {
        let max = self.max_link_energy(layout);
        if target > 0.0 && max > 0.0 {
            target / max
        } else {
            1.0
        }
    }
}

pub fn large_scale_gain(
    topology: &Topology,
    model: &PathLossModel,
    seed: u64,
) -> Result<LargeScale> {
    let layout = &topology.layout;
    let cells = layout.num_cells();
    let mut gains = Vec::with_capacity(layout.total_users() * cells);
    for (row, user) in topology.user_positions.iter().enumerate() {
        for (bs, site) in topology.bs_positions.iter().enumerate() {
            let d = user.distance(site).max(topology.min_distance).max(1e-3);
            let mut loss = path_loss_db(d, model.carrier_ghz);
            if let Some(sigma) = model.shadowing_sigma_db.filter(|s| *s > 0.0) {
                let mut rng = substream(seed, Purpose::Shadowing, bs, 0, row);
                let normal =
                    Normal::new(0.0, sigma).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
                loss += normal.sample(&mut rng);
            }
            gains.push(10f64.powf(-loss / 10.0));
        }
    }
    LargeScale::from_gains(layout.total_users(), cells, gains)
}

/// Global channel `H_t` at one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub t: usize,
    pub h: ComplexMatrix,
    pub layout: Arc<Layout>,
}

impl ChannelState {
    pub fn new(t: usize, h: ComplexMatrix, layout: Arc<Layout>) -> Result<Self> {
        if h.shape() != (layout.total_users(), layout.total_antennas()) {
            return Err(Error::dim(
                "ChannelState",
                format!(
                    "{}x{} channel for a {}x{} layout",
                    h.rows(),
                    h.cols(),
                    layout.total_users(),
                    layout.total_antennas()
                ),
            ));
        }
        Ok(Self { t, h, layout })
    }

    /// Local view `H̃_t^c`: every user's channel to BS `c` (K×N_c).
    pub fn local_view(&self, c: usize) -> ComplexMatrix {
        let l = &self.layout;
        self.h
            .submatrix(0, l.col_offset(c), l.total_users(), l.antennas(c))
    }

    /// `H̄_t^{lc}`: users of cell `l` to BS `c` (K_l×N_c).
    pub fn cell_block(&self, l: usize, c: usize) -> ComplexMatrix {
        let lay = &self.layout;
        self.h.submatrix(
            lay.cell_row_offset(l),
            lay.col_offset(c),
            lay.users_in_cell(l),
            lay.antennas(c),
        )
    }

    /// `H_t^{lc,m}`: users of SP `m` in cell `l` to BS `c` (K_l^m×N_c).
    pub fn block(&self, l: usize, c: usize, m: usize) -> ComplexMatrix {
        let lay = &self.layout;
        self.h.submatrix(
            lay.sp_row_offset(l, m),
            lay.col_offset(c),
            lay.users(l, m),
            lay.antennas(c),
        )
    }

    pub fn fro_norm(&self) -> f64 {
        self.h.fro_norm()
    }
}

/// First-order Gauss-Markov fading: `h_{t+1} = α h_t + z_t`,
/// `z_t ~ CN(0, (1 − α²)·β I)`, independently per user row.
#[derive(Debug, Clone)]
pub struct FadingProcess {
    layout: Arc<Layout>,
    /// `sqrt(β/2)` per (row, bs): the std-dev of each real component.
    component_sd: Vec<f64>,
    alpha_h: f64,
    rngs: Vec<ChaCha8Rng>,
    parallel: bool,
}

impl FadingProcess {
    pub fn new(
        layout: Arc<Layout>,
        large_scale: &LargeScale,
        alpha_h: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha_h) {
            return Err(Error::ConfigInvalid(format!(
                "alpha_h must lie in [0, 1], got {alpha_h}"
            )));
        }
        let rows = layout.total_users();
        if large_scale.num_rows() != rows || large_scale.num_bs != layout.num_cells() {
            return Err(Error::dim(
                "FadingProcess",
                "large-scale gains do not match layout",
            ));
        }
        let component_sd = large_scale.gains.iter().map(|g| (g / 2.0).sqrt()).collect();
        let rngs = (0..rows)
            .map(|row| substream(seed, Purpose::Fading, 0, 0, row))
            .collect();
        Ok(Self {
            layout,
            component_sd,
            alpha_h,
            rngs,
            parallel: false,
        })
    }

    /// Generate rows on the rayon pool. Output is identical either way.
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn alpha_h(&self) -> f64 {
        self.alpha_h
    }

    fn fill_rows(&mut self, h: &mut ComplexMatrix, prev: Option<&ComplexMatrix>) {
        let layout = &self.layout;
        let cells = layout.num_cells();
        let cols = layout.total_antennas();
        let sd = &self.component_sd;
        let alpha = self.alpha_h;
        let innovation = (1.0 - alpha * alpha).max(0.0).sqrt();

        let work = |(row, (out, rng)): (usize, (&mut [Complex64], &mut ChaCha8Rng))| {
            for bs in 0..cells {
                let s = sd[row * cells + bs];
                let start = layout.col_offset(bs);
                for col in start..start + layout.antennas(bs) {
                    let x: f64 = StandardNormal.sample(rng);
                    let y: f64 = StandardNormal.sample(rng);
                    let z = Complex64::new(x * s, y * s);
                    out[col] = match prev {
                        None => z,
                        Some(p) => p[(row, col)] * alpha + z * innovation,
                    };
                }
            }
        };

        let rows = h
            .as_mut_slice()
            .chunks_mut(cols)
            .zip(self.rngs.iter_mut())
            .enumerate();
        if self.parallel {
            rows.collect::<Vec<_>>().into_par_iter().for_each(work);
        } else {
            rows.for_each(work);
        }
    }

    /// Draws `H_1` from the stationary distribution.
    pub fn init_channel(&mut self) -> ChannelState {
        let mut h = ComplexMatrix::zeros(self.layout.total_users(), self.layout.total_antennas());
        self.fill_rows(&mut h, None);
        ChannelState {
            t: 1,
            h,
            layout: self.layout.clone(),
        }
    }

    pub fn step_channel(&mut self, state: &ChannelState) -> ChannelState {
        let mut h = ComplexMatrix::zeros(self.layout.total_users(), self.layout.total_antennas());
        self.fill_rows(&mut h, Some(&state.h));
        ChannelState {
            t: state.t + 1,
            h,
            layout: self.layout.clone(),
        }
    }
}
