//! Phase-plane circuits on a fixed medium: the gate library, the end-to-end
//! linear map of the programmed system, and gate-quality figures of merit.

use crate::error::{Error, Result};
use crate::linalg::{frob_inner, CMat, CVec, C64, I0};
use crate::medium::MediumModel;
use crate::modes::{ChannelMap, ModeSet, Port};
use serde::{Deserialize, Serialize};

/// Programmable phases, one value per pixel, for the four planes
/// (P1/P2 on the input ports, P3/P4 on the output ports).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePlanes {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub p3: Vec<f64>,
    pub p4: Vec<f64>,
}

impl PhasePlanes {
    pub fn zeros(n_pixels: usize) -> Self {
        PhasePlanes {
            p1: vec![0.0; n_pixels],
            p2: vec![0.0; n_pixels],
            p3: vec![0.0; n_pixels],
            p4: vec![0.0; n_pixels],
        }
    }

    pub fn n_pixels(&self) -> usize {
        self.p1.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateName {
    TI,
    TX,
    TM,
    TS,
    Identity4,
    X4,
    Identity6,
    X6,
    Swap4,
}

impl GateName {
    pub fn as_str(&self) -> &'static str {
        match self {
            GateName::TI => "T_I",
            GateName::TX => "T_X",
            GateName::TM => "T_M",
            GateName::TS => "T_S",
            GateName::Identity4 => "identity4",
            GateName::X4 => "x4",
            GateName::Identity6 => "identity6",
            GateName::X6 => "x6",
            GateName::Swap4 => "swap4",
        }
    }
}

impl std::fmt::Display for GateName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for GateName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t_i" => Ok(GateName::TI),
            "t_x" => Ok(GateName::TX),
            "t_m" => Ok(GateName::TM),
            "t_s" => Ok(GateName::TS),
            "identity4" => Ok(GateName::Identity4),
            "x4" => Ok(GateName::X4),
            "identity6" => Ok(GateName::Identity6),
            "x6" => Ok(GateName::X6),
            "swap4" => Ok(GateName::Swap4),
            other => Err(Error::UnknownGate(other.to_string())),
        }
    }
}

/// Target circuit matrix over [Out1 foci | Out2 foci] × [In1 modes | In2 modes].
#[derive(Debug, Clone)]
pub struct GateSpec {
    pub name: GateName,
    pub matrix: CMat,
    pub channels: ChannelMap,
    pub modes_per_port: usize,
}

impl GateSpec {
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// Uniform power scale s with G†G = s·I (1 for the unitary gates, 1/2 for
    /// the permutation gates published with a 1/√2 amplitude).
    pub fn power_scale(&self) -> f64 {
        let m = self.dim() as f64;
        self.matrix.iter().map(|z| z.norm_sqr()).sum::<f64>() / m
    }

    /// Max |(G†G − sI)| entry; 0 when the gate is unitary up to scale.
    pub fn scaled_unitarity_defect(&self) -> f64 {
        let g = self.matrix.adjoint() * &self.matrix;
        let s = self.power_scale();
        let mut worst = 0.0f64;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let want = if i == j { C64::new(s, 0.0) } else { I0 };
                worst = worst.max((g[(i, j)] - want).norm());
            }
        }
        worst
    }
}

fn perm_matrix(dim: usize, pairs: &[(usize, usize)], amp: f64) -> CMat {
    let mut m = CMat::zeros(dim, dim);
    for &(row, col) in pairs {
        m[(row, col)] = C64::new(amp, 0.0);
    }
    m
}

/// The published gate matrices, entry for entry.
pub fn gate_library(name: GateName) -> GateSpec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let (matrix, channels, d) = match name {
        GateName::TI => (CMat::identity(8, 8), ChannelMap::two_channel(), 4),
        GateName::TX => {
            let pairs: Vec<_> = (0..4).map(|i| (i, i + 4)).chain((0..4).map(|i| (i + 4, i))).collect();
            (perm_matrix(8, &pairs, s), ChannelMap::two_channel(), 4)
        }
        GateName::TM => {
            // Ch1 of each source stays on its own output port; Ch2 crosses.
            let pairs = [
                (0, 0),
                (1, 1),
                (2, 4),
                (3, 5),
                (4, 2),
                (5, 3),
                (6, 6),
                (7, 7),
            ];
            (perm_matrix(8, &pairs, s), ChannelMap::two_channel(), 4)
        }
        GateName::TS => {
            let mut m = CMat::zeros(8, 8);
            for i in 0..4 {
                m[(i, i)] = C64::new(s, 0.0);
                m[(i, i + 4)] = C64::new(s, 0.0);
                m[(i + 4, i)] = C64::new(s, 0.0);
                m[(i + 4, i + 4)] = C64::new(-s, 0.0);
            }
            (m, ChannelMap::two_channel(), 4)
        }
        GateName::Identity4 => (CMat::identity(4, 4), ChannelMap::single_channel(2), 2),
        GateName::X4 => {
            let pairs: Vec<_> = (0..2).map(|i| (i, i + 2)).chain((0..2).map(|i| (i + 2, i))).collect();
            (perm_matrix(4, &pairs, 1.0), ChannelMap::single_channel(2), 2)
        }
        GateName::Identity6 => (CMat::identity(6, 6), ChannelMap::single_channel(3), 3),
        GateName::X6 => {
            let pairs: Vec<_> = (0..3).map(|i| (i, i + 3)).chain((0..3).map(|i| (i + 3, i))).collect();
            (perm_matrix(6, &pairs, 1.0), ChannelMap::single_channel(3), 3)
        }
        GateName::Swap4 => {
            let mut m = CMat::zeros(4, 4);
            for i in 0..2 {
                m[(i, i)] = C64::new(s, 0.0);
                m[(i, i + 2)] = C64::new(s, 0.0);
                m[(i + 2, i)] = C64::new(s, 0.0);
                m[(i + 2, i + 2)] = C64::new(-s, 0.0);
            }
            (m, ChannelMap::single_channel(2), 2)
        }
    };
    GateSpec {
        name,
        matrix,
        channels,
        modes_per_port: d,
    }
}

/// Where a gate routes the power of input channel `in_ch` on `in_port`:
/// returns (output port, output channel) by block-power argmax.
pub fn routed_channel(spec: &GateSpec, in_port: usize, in_ch: usize) -> (usize, usize) {
    let d = spec.modes_per_port;
    let in_modes = if in_port == 0 {
        &spec.channels.in1[in_ch]
    } else {
        &spec.channels.in2[in_ch]
    };
    let mut best = (0usize, 0usize);
    let mut best_power = -1.0;
    for out_port in 0..2 {
        let chans = if out_port == 0 {
            &spec.channels.out1
        } else {
            &spec.channels.out2
        };
        for (out_ch, out_modes) in chans.iter().enumerate() {
            let mut power = 0.0;
            for &r in out_modes {
                for &a in in_modes {
                    power += spec.matrix[(out_port * d + r, in_port * d + a)].norm_sqr();
                }
            }
            if power > best_power {
                best_power = power;
                best = (out_port, out_ch);
            }
        }
    }
    best
}

fn modulate(v: &CVec, phases: &[f64]) -> CVec {
    CVec::from_fn(v.len(), |i, _| v[i] * C64::from_polar(1.0, phases[i]))
}

/// Forward map of the full programmed system as one 2M×2M matrix over
/// [In1 pixels | In2 pixels] → [Out1 detection | Out2 detection].
pub fn end_to_end_map(medium: &MediumModel, planes: &PhasePlanes) -> Result<CMat> {
    let m = medium.n_pixels;
    if planes.n_pixels() != m
        || planes.p2.len() != m
        || planes.p3.len() != m
        || planes.p4.len() != m
    {
        return Err(Error::Shape(format!(
            "planes hold {} px, medium {} px",
            planes.n_pixels(),
            m
        )));
    }
    let n = medium.n_fibre;
    let mut map = CMat::zeros(2 * m, 2 * m);
    // Column-by-column through the stage chain; the planes stay diagonal.
    for (port, (c, p_in)) in [(0, (&medium.c_in[0], &planes.p1)), (1, (&medium.c_in[1], &planes.p2))]
    {
        let offset = port * m;
        for a in 0..m {
            let col = medium.f_in.column(a).into_owned();
            let col = modulate(&col, p_in);
            let v = c * col;
            let mut fibre = CVec::zeros(2 * n);
            for i in 0..n {
                fibre[port * n + i] = v[i];
            }
            let w = &medium.u1 * fibre;
            for (out_port, (e, p_out)) in
                [(0, (&medium.e_out[0], &planes.p3)), (1, (&medium.e_out[1], &planes.p4))]
            {
                let chunk = w.rows(out_port * n, n).into_owned();
                let b = modulate(&(e * chunk), p_out);
                let det = &medium.g_out * b;
                for r in 0..m {
                    map[(out_port * m + r, offset + a)] = det[r];
                }
            }
        }
    }
    Ok(map)
}

/// Embed a mode set into the doubled pixel space (port 2 at offset M).
pub fn mode_columns(set: &ModeSet, n_pixels: usize) -> Result<CMat> {
    if set.grid != n_pixels {
        return Err(Error::Shape(format!(
            "mode set on {} px, plane has {n_pixels}",
            set.grid
        )));
    }
    let offset = match set.port {
        Port::In1 | Port::Out1 => 0,
        Port::In2 | Port::Out2 => n_pixels,
    };
    let mut cols = CMat::zeros(2 * n_pixels, set.dim());
    for (j, v) in set.vectors.iter().enumerate() {
        for i in 0..n_pixels {
            cols[(offset + i, j)] = v[i];
        }
    }
    Ok(cols)
}

/// Restriction of a full map to chosen input modes and output foci:
/// T̃[b, a] = ⟨out_b| map |in_a⟩ over [set1 | set2] orderings.
pub fn realized_submatrix(
    map: &CMat,
    inputs: (&ModeSet, &ModeSet),
    outputs: (&ModeSet, &ModeSet),
) -> Result<CMat> {
    let n_pixels = map.ncols() / 2;
    if map.nrows() != 2 * n_pixels || map.ncols() != 2 * n_pixels {
        return Err(Error::Shape("full map must be 2M×2M".into()));
    }
    if inputs.0.port != Port::In1
        || inputs.1.port != Port::In2
        || outputs.0.port != Port::Out1
        || outputs.1.port != Port::Out2
    {
        return Err(Error::Parameter("mode sets must cover In1, In2, Out1, Out2".into()));
    }
    let in_cols = {
        let a = mode_columns(inputs.0, n_pixels)?;
        let b = mode_columns(inputs.1, n_pixels)?;
        let mut m = CMat::zeros(2 * n_pixels, a.ncols() + b.ncols());
        m.columns_mut(0, a.ncols()).copy_from(&a);
        m.columns_mut(a.ncols(), b.ncols()).copy_from(&b);
        m
    };
    let out_cols = {
        let a = mode_columns(outputs.0, n_pixels)?;
        let b = mode_columns(outputs.1, n_pixels)?;
        let mut m = CMat::zeros(2 * n_pixels, a.ncols() + b.ncols());
        m.columns_mut(0, a.ncols()).copy_from(&a);
        m.columns_mut(a.ncols(), b.ncols()).copy_from(&b);
        m
    };
    Ok(out_cols.adjoint() * map * in_cols)
}

/// Trace overlap |Tr(G†T̃)| maximized over constant phases on the port-2
/// halves of the inputs and outputs. Those phases are set by unobservable
/// plane offsets, so the figure of merit must not depend on them.
fn gauged_trace_overlap(g: &CMat, t: &CMat) -> f64 {
    let rows = g.nrows();
    let cols = g.ncols();
    if rows % 2 != 0 || cols % 2 != 0 {
        return frob_inner(g, t).norm();
    }
    let (hr, hc) = (rows / 2, cols / 2);
    // s[out_port][in_port] block sums of conj(G)⊙T̃.
    let mut s = [[I0; 2]; 2];
    for r in 0..rows {
        for c in 0..cols {
            s[r / hr][c / hc] += g[(r, c)].conj() * t[(r, c)];
        }
    }
    let overlap = |alpha: f64| -> f64 {
        let x = C64::from_polar(1.0, alpha);
        (s[0][0] + x * s[0][1]).norm() + (s[1][0] + x * s[1][1]).norm()
    };
    let steps = 2048;
    let mut best_a = 0.0;
    let mut best = f64::NEG_INFINITY;
    for k in 0..steps {
        let a = std::f64::consts::TAU * k as f64 / steps as f64;
        let v = overlap(a);
        if v > best {
            best = v;
            best_a = a;
        }
    }
    // Golden-section refinement around the grid maximum.
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut lo = best_a - std::f64::consts::TAU / steps as f64;
    let mut hi = best_a + std::f64::consts::TAU / steps as f64;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = overlap(x1);
    let mut f2 = overlap(x2);
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = overlap(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = overlap(x1);
        }
    }
    best.max(f1).max(f2)
}

/// Gate quality of a realized map against a target.
///
/// Returns (fidelity, efficiency): F = |Tr(G†T̃)|²/(Tr(G†G)·Tr(T̃†T̃)) with the
/// trace overlap gauged over per-port phases, and η = Tr(T̃†T̃)/m. F is
/// invariant under any rescaling of T̃ and under constant plane offsets.
pub fn gate_fidelity(realized: &CMat, target: &CMat) -> Result<(f64, f64)> {
    if realized.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "realized {:?} vs target {:?}",
            realized.shape(),
            target.shape()
        )));
    }
    let power = realized.iter().map(|z| z.norm_sqr()).sum::<f64>();
    if power <= 0.0 {
        return Err(Error::UndefinedFidelity("realized map carries no power".into()));
    }
    let target_power = target.iter().map(|z| z.norm_sqr()).sum::<f64>();
    if target_power <= 0.0 {
        return Err(Error::UndefinedFidelity("target carries no power".into()));
    }
    let overlap = gauged_trace_overlap(target, realized);
    let fidelity = overlap * overlap / (target_power * power);
    let eta = power / realized.ncols() as f64;
    Ok((fidelity, eta))
}

/// Foci and macro-pixel sets for a gate at the medium's default layout.
pub fn default_mode_sets(
    spec: &GateSpec,
    n_pixels: usize,
) -> Result<((ModeSet, ModeSet), (ModeSet, ModeSet))> {
    use crate::modes::{default_focus_pixels, foci_basis, macro_pixel_basis, DiskGeometry};
    let d = spec.modes_per_port;
    let side = (n_pixels as f64).sqrt().round() as usize;
    let geo = DiskGeometry::lattice(d, side)?;
    let in1 = macro_pixel_basis(d, n_pixels, &geo, Port::In1)?;
    let in2 = macro_pixel_basis(d, n_pixels, &geo, Port::In2)?;
    let focus_px = default_focus_pixels(d, n_pixels);
    let out1 = foci_basis(&focus_px, n_pixels, Port::Out1)?;
    let out2 = foci_basis(&focus_px, n_pixels, Port::Out2)?;
    Ok(((in1, in2), (out1, out2)))
}
