//! SP-side virtual precoding and the virtualization demand seen by the InP.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{ChannelState, Layout};
use crate::error::{Error, Result};
use crate::numerics::{hpd_solve, ComplexMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct ZfPrecoder {
    pub w: ComplexMatrix,
    /// Common gain so that `H·W = ω·I`.
    pub omega: f64,
}

/// `W = ω·Hᴴ(HHᴴ)⁻¹` scaled to `‖W‖_F² = power`.
pub fn zf_virtual_precoder(h: &ComplexMatrix, power: f64) -> Result<ZfPrecoder> {
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::Invariant(format!(
            "virtual power budget must be positive, got {power}"
        )));
    }
    let gram = h.matmul(&h.hermitian())?;
    let inv = hpd_solve(&gram, &ComplexMatrix::identity(h.rows()))?;
    let unscaled = h.hermitian().matmul(&inv)?;
    let norm = unscaled.fro_norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::NonFinite("zf_virtual_precoder"));
    }
    let omega = power.sqrt() / norm;
    Ok(ZfPrecoder {
        w: unscaled.scale(omega),
        omega,
    })
}

/// Virtual power limits `P_c^m` in watts, indexed `[cell][sp]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualBudgets(pub Vec<Vec<f64>>);

impl VirtualBudgets {
    /// `P_c^m = P_c^max / M`.
    pub fn equal_split(p_max: &[f64], num_sps: usize) -> Self {
        Self(
            p_max
                .iter()
                .map(|p| vec![p / num_sps as f64; num_sps])
                .collect(),
        )
    }

    pub fn get(&self, cell: usize, sp: usize) -> f64 {
        self.0[cell][sp]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demand {
    pub t: usize,
    pub layout: Arc<Layout>,
    /// `W_t^{c,m}` indexed `[cell][sp]`.
    pub precoders: Vec<Vec<ZfPrecoder>>,
    /// `D_t^c`, K_c×K_c and block-diagonal over SPs.
    pub local: Vec<ComplexMatrix>,
    /// `D̃_t^c`, K×K_c with nonzero rows only for cell `c`.
    pub embedded: Vec<ComplexMatrix>,
}

impl Demand {
    /// Block-diagonal `D_t`, K×K.
    pub fn global(&self) -> ComplexMatrix {
        let k = self.layout.total_users();
        let mut d = ComplexMatrix::zeros(k, k);
        for (c, dc) in self.local.iter().enumerate() {
            let off = self.layout.cell_row_offset(c);
            d.set_block(off, off, dc);
        }
        d
    }

    /// `‖D_t‖_F²`.
    pub fn fro_norm_sq(&self) -> f64 {
        self.local.iter().map(ComplexMatrix::fro_norm_sq).sum()
    }
}

/// Embeds a K_c×K_c cell demand into the K×K_c rows of cell `c`.
pub fn embed_cell_demand(layout: &Layout, cell: usize, local: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(layout.total_users(), layout.users_in_cell(cell));
    out.set_block(layout.cell_row_offset(cell), 0, local);
    out
}

fn cell_demand(
    channel: &ChannelState,
    budgets: &VirtualBudgets,
    cell: usize,
) -> Result<(Vec<ZfPrecoder>, ComplexMatrix)> {
    let layout = &channel.layout;
    let kc = layout.users_in_cell(cell);
    let mut local = ComplexMatrix::zeros(kc, kc);
    let mut precoders = Vec::with_capacity(layout.num_sps());
    for sp in 0..layout.num_sps() {
        let h = channel.block(cell, cell, sp);
        let zf = zf_virtual_precoder(&h, budgets.get(cell, sp)).map_err(|e| match e {
            Error::Singular { .. } | Error::NonFinite(_) | Error::NotHermitian(_) => {
                Error::DegenerateChannel {
                    cell,
                    sp,
                    source: Box::new(e),
                }
            }
            other => other,
        })?;
        let off = layout.sp_col_offset(cell, sp);
        local.set_block(off, off, &h.matmul(&zf.w)?);
        precoders.push(zf);
    }
    Ok((precoders, local))
}

/// Builds the demand of slot `channel.t` from that slot's CSI.
pub fn build_demand(channel: &ChannelState, budgets: &VirtualBudgets) -> Result<Demand> {
    build_demand_with(channel, budgets, false)
}

/// As [`build_demand`], optionally computing cells on the rayon pool.
pub fn build_demand_with(
    channel: &ChannelState,
    budgets: &VirtualBudgets,
    parallel: bool,
) -> Result<Demand> {
    let layout = &channel.layout;
    let cells = layout.num_cells();
    if budgets.0.len() != cells || budgets.0.iter().any(|b| b.len() != layout.num_sps()) {
        return Err(Error::dim(
            "build_demand",
            "virtual budgets do not match the layout",
        ));
    }
    let per_cell: Vec<Result<_>> = if parallel {
        (0..cells)
            .into_par_iter()
            .map(|c| cell_demand(channel, budgets, c))
            .collect()
    } else {
        (0..cells)
            .map(|c| cell_demand(channel, budgets, c))
            .collect()
    };
    let mut precoders = Vec::with_capacity(cells);
    let mut local = Vec::with_capacity(cells);
    let mut embedded = Vec::with_capacity(cells);
    for (c, r) in per_cell.into_iter().enumerate() {
        let (w, d) = r?;
        embedded.push(embed_cell_demand(layout, c, &d));
        precoders.push(w);
        local.push(d);
    }
    Ok(Demand {
        t: channel.t,
        layout: layout.clone(),
        precoders,
        local,
        embedded,
    })
}

/// `‖H·W − ω·I‖_F`, the ZF residual.
pub fn zf_residual(h: &ComplexMatrix, zf: &ZfPrecoder) -> Result<f64> {
    let hw = h.matmul(&zf.w)?;
    let target = ComplexMatrix::identity(h.rows()).map(|z| z * Complex64::from(zf.omega));
    Ok(hw.sub(&target)?.fro_norm())
}
