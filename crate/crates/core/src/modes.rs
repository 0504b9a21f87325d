//! Mode bases on the pixel planes: macro-pixel disks at the input, detection
//! foci at the output, mutually unbiased bases for the analysis channels, and
//! the channel bookkeeping shared by all experiments.

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};
use serde::{Deserialize, Serialize};

/// Which plane of the four-port layout a mode set lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Port {
    In1,
    In2,
    Out1,
    Out2,
}

impl Port {
    pub fn is_input(self) -> bool {
        matches!(self, Port::In1 | Port::In2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeKind {
    MacroPixel,
    Focus,
}

/// Orthonormal family of field modes on one pixel plane.
#[derive(Debug, Clone)]
pub struct ModeSet {
    pub kind: ModeKind,
    pub port: Port,
    /// Total pixels on the plane (a square grid).
    pub grid: usize,
    pub vectors: Vec<CVec>,
}

impl ModeSet {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    /// Gram matrix defect: max |⟨m_i|m_j⟩ − δ_ij|.
    pub fn gram_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let g = self.vectors[i].dotc(&self.vectors[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - C64::new(want, 0.0)).norm());
            }
        }
        worst
    }
}

/// Disk layout for macro-pixel modes, in (row, col) grid coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiskGeometry {
    pub radius: f64,
    pub centers: Vec<(f64, f64)>,
}

impl DiskGeometry {
    /// Default layout: disk centers on a coarse lattice over a side×side grid,
    /// radius 1.5 px (9-pixel disks), disjoint by construction.
    pub fn lattice(d: usize, side: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Parameter("need at least one disk".into()));
        }
        let k = (d as f64).sqrt().ceil() as usize;
        let spacing = side as f64 / k as f64;
        if spacing < 4.0 {
            return Err(Error::Capacity(format!(
                "{d} disks of 9 px do not fit a {side}x{side} grid"
            )));
        }
        let mut centers = Vec::with_capacity(d);
        'outer: for r in 0..k {
            for c in 0..k {
                if centers.len() == d {
                    break 'outer;
                }
                centers.push((
                    (r as f64 + 0.5) * spacing - 0.5,
                    (c as f64 + 0.5) * spacing - 0.5,
                ));
            }
        }
        Ok(DiskGeometry {
            radius: 1.5,
            centers,
        })
    }

    fn pixels(&self, center: (f64, f64), side: usize) -> Vec<usize> {
        let mut px = Vec::new();
        for r in 0..side {
            for c in 0..side {
                let dr = r as f64 - center.0;
                let dc = c as f64 - center.1;
                if dr * dr + dc * dc <= self.radius * self.radius {
                    px.push(r * side + c);
                }
            }
        }
        px
    }
}

fn grid_side(grid: usize) -> Result<usize> {
    let side = (grid as f64).sqrt().round() as usize;
    if side * side != grid {
        return Err(Error::Geometry(format!(
            "grid size {grid} is not a square number of pixels"
        )));
    }
    Ok(side)
}

/// Flat-top disk modes with disjoint supports on the input plane.
///
/// Each mode is uniform over its disk's pixels and zero elsewhere, so the
/// family is orthonormal by construction.
pub fn macro_pixel_basis(
    d: usize,
    grid: usize,
    geometry: &DiskGeometry,
    port: Port,
) -> Result<ModeSet> {
    if !port.is_input() {
        return Err(Error::Parameter("macro-pixel modes live on input planes".into()));
    }
    if geometry.centers.len() != d {
        return Err(Error::Geometry(format!(
            "{} centers for {d} modes",
            geometry.centers.len()
        )));
    }
    let side = grid_side(grid)?;
    let mut used = vec![false; grid];
    let mut vectors = Vec::with_capacity(d);
    let mut total_px = 0usize;
    for &center in &geometry.centers {
        let px = geometry.pixels(center, side);
        if px.is_empty() {
            return Err(Error::Geometry(format!(
                "disk at {center:?} covers no pixels"
            )));
        }
        total_px += px.len();
        if total_px > grid {
            return Err(Error::Capacity(format!(
                "{d} disks need {total_px} px, plane has {grid}"
            )));
        }
        let amp = C64::new(1.0 / (px.len() as f64).sqrt(), 0.0);
        let mut v = CVec::zeros(grid);
        for &p in &px {
            if used[p] {
                return Err(Error::Geometry(format!("disks overlap at pixel {p}")));
            }
            used[p] = true;
            v[p] = amp;
        }
        vectors.push(v);
    }
    Ok(ModeSet {
        kind: ModeKind::MacroPixel,
        port,
        grid,
        vectors,
    })
}

/// Single-pixel detection modes at the given detection-plane pixels.
pub fn foci_basis(indices: &[usize], grid: usize, port: Port) -> Result<ModeSet> {
    if port.is_input() {
        return Err(Error::Parameter("foci live on output planes".into()));
    }
    if indices.is_empty() {
        return Err(Error::Parameter("need at least one focus".into()));
    }
    let mut seen = vec![false; grid];
    let mut vectors = Vec::with_capacity(indices.len());
    for &idx in indices {
        if idx >= grid {
            return Err(Error::Geometry(format!(
                "focus pixel {idx} outside plane of {grid} px"
            )));
        }
        if seen[idx] {
            return Err(Error::Geometry(format!("duplicate focus pixel {idx}")));
        }
        seen[idx] = true;
        let mut v = CVec::zeros(grid);
        v[idx] = C64::new(1.0, 0.0);
        vectors.push(v);
    }
    Ok(ModeSet {
        kind: ModeKind::Focus,
        port,
        grid,
        vectors,
    })
}

/// Evenly spaced default focus pixels for d detection modes.
pub fn default_focus_pixels(d: usize, grid: usize) -> Vec<usize> {
    (0..d).map(|i| (i + 1) * grid / (d + 1)).collect()
}

/// Complete family of d+1 mutually unbiased bases.
#[derive(Debug, Clone)]
pub struct MubFamily {
    pub dim: usize,
    /// Each basis is a unitary whose columns are the measurement vectors.
    pub bases: Vec<CMat>,
}

impl MubFamily {
    pub fn n_bases(&self) -> usize {
        self.bases.len()
    }

    /// Basis vector a of basis m.
    pub fn vector(&self, m: usize, a: usize) -> CVec {
        self.bases[m].column(a).into_owned()
    }

    /// Max deviation from exact unbiasedness and orthonormality.
    pub fn defect(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for (m, bm) in self.bases.iter().enumerate() {
            for (n, bn) in self.bases.iter().enumerate() {
                for a in 0..d {
                    for b in 0..d {
                        let ov = bm.column(a).dotc(&bn.column(b)).norm_sqr();
                        let want = if m == n {
                            if a == b {
                                1.0
                            } else {
                                0.0
                            }
                        } else {
                            1.0 / d as f64
                        };
                        worst = worst.max((ov - want).abs());
                    }
                }
            }
        }
        worst
    }
}

/// d+1 mutually unbiased bases for d = 2 (Pauli eigenbases) or d = 3
/// (Weyl pair construction), computational basis first.
pub fn mub_set(d: usize) -> Result<MubFamily> {
    let bases = match d {
        2 => {
            let s = 1.0 / 2f64.sqrt();
            let z = CMat::identity(2, 2);
            let x = CMat::from_row_slice(
                2,
                2,
                &[
                    C64::new(s, 0.0),
                    C64::new(s, 0.0),
                    C64::new(s, 0.0),
                    C64::new(-s, 0.0),
                ],
            );
            let y = CMat::from_row_slice(
                2,
                2,
                &[
                    C64::new(s, 0.0),
                    C64::new(s, 0.0),
                    C64::new(0.0, s),
                    C64::new(0.0, -s),
                ],
            );
            vec![z, x, y]
        }
        3 => {
            let mut bases = vec![CMat::identity(3, 3)];
            let s = 1.0 / 3f64.sqrt();
            let omega = |e: i64| -> C64 {
                C64::from_polar(1.0, 2.0 * std::f64::consts::PI * (e.rem_euclid(3)) as f64 / 3.0)
            };
            for k in 0..3i64 {
                let b = CMat::from_fn(3, 3, |m, j| {
                    let m = m as i64;
                    let j = j as i64;
                    omega(k * m * m + j * m) * C64::new(s, 0.0)
                });
                bases.push(b);
            }
            bases
        }
        other => return Err(Error::UnsupportedDimension(other)),
    };
    Ok(MubFamily { dim: d, bases })
}

/// Assignment of plane modes to user channels, one entry per port.
///
/// Channel lists hold indices into the port's mode set (0..d per port).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMap {
    pub in1: Vec<Vec<usize>>,
    pub in2: Vec<Vec<usize>>,
    pub out1: Vec<Vec<usize>>,
    pub out2: Vec<Vec<usize>>,
}

impl ChannelMap {
    /// Two channels of two modes per port: Ch1 = {0,1}, Ch2 = {2,3}.
    pub fn two_channel() -> Self {
        let per_port = vec![vec![0, 1], vec![2, 3]];
        ChannelMap {
            in1: per_port.clone(),
            in2: per_port.clone(),
            out1: per_port.clone(),
            out2: per_port,
        }
    }

    /// One channel of d modes per port.
    pub fn single_channel(d: usize) -> Self {
        let per_port = vec![(0..d).collect::<Vec<_>>()];
        ChannelMap {
            in1: per_port.clone(),
            in2: per_port.clone(),
            out1: per_port.clone(),
            out2: per_port,
        }
    }

    /// Each port's channels must partition its mode indices 0..d.
    pub fn validate(&self, d: usize) -> Result<()> {
        for (name, chans) in [
            ("in1", &self.in1),
            ("in2", &self.in2),
            ("out1", &self.out1),
            ("out2", &self.out2),
        ] {
            let mut seen = vec![false; d];
            for ch in chans {
                for &m in ch {
                    if m >= d {
                        return Err(Error::Geometry(format!(
                            "{name} channel index {m} out of range {d}"
                        )));
                    }
                    if seen[m] {
                        return Err(Error::Geometry(format!(
                            "{name} mode {m} assigned to two channels"
                        )));
                    }
                    seen[m] = true;
                }
            }
            if !seen.iter().all(|&s| s) {
                return Err(Error::Geometry(format!("{name} channels do not cover all modes")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_macro_pixels_are_orthonormal_and_disjoint() {
        let geo = DiskGeometry::lattice(4, 8).unwrap();
        let set = macro_pixel_basis(4, 64, &geo, Port::In1).unwrap();
        assert_eq!(set.dim(), 4);
        assert!(set.gram_defect() < 1e-12);
        for v in &set.vectors {
            let support = v.iter().filter(|z| z.norm() > 0.0).count();
            assert!(support >= 4, "disk spans {support} px");
        }
    }

    #[test]
    fn single_pixel_disk_is_a_unit_vector() {
        let geo = DiskGeometry {
            radius: 0.1,
            centers: vec![(2.0, 3.0)],
        };
        let set = macro_pixel_basis(1, 64, &geo, Port::In2).unwrap();
        let v = &set.vectors[0];
        assert_eq!(v[2 * 8 + 3], C64::new(1.0, 0.0));
        assert!((v.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn overlapping_disks_rejected() {
        let geo = DiskGeometry {
            radius: 1.5,
            centers: vec![(3.0, 3.0), (3.0, 4.0)],
        };
        let err = macro_pixel_basis(2, 64, &geo, Port::In1).unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
    }

    #[test]
    fn too_many_disks_rejected() {
        assert!(matches!(
            DiskGeometry::lattice(64, 8),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn foci_are_deltas_with_checks() {
        let set = foci_basis(&[5, 9, 13], 16, Port::Out1).unwrap();
        assert!(set.gram_defect() < 1e-15);
        assert_eq!(set.vectors[1][9], C64::new(1.0, 0.0));
        assert!(matches!(
            foci_basis(&[5, 5], 16, Port::Out1),
            Err(Error::Geometry(_))
        ));
        assert!(matches!(
            foci_basis(&[16], 16, Port::Out2),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn qubit_mubs_are_pauli_eigenbases() {
        let fam = mub_set(2).unwrap();
        assert_eq!(fam.n_bases(), 3);
        assert!(fam.defect() < 1e-12);
        // Computational basis first.
        assert_eq!(fam.bases[0][(0, 0)], C64::new(1.0, 0.0));
    }

    #[test]
    fn qutrit_mubs_are_unbiased() {
        let fam = mub_set(3).unwrap();
        assert_eq!(fam.n_bases(), 4);
        assert!(fam.defect() < 1e-12);
    }

    #[test]
    fn unsupported_dimension_is_an_error() {
        assert!(matches!(mub_set(4), Err(Error::UnsupportedDimension(4))));
        assert!(matches!(mub_set(5), Err(Error::UnsupportedDimension(5))));
    }

    #[test]
    fn channel_map_round_trip_and_validation() {
        let map = ChannelMap::two_channel();
        map.validate(4).unwrap();
        let bad = ChannelMap {
            in1: vec![vec![0, 1], vec![1, 2]],
            ..ChannelMap::two_channel()
        };
        assert!(bad.validate(4).is_err());
        let gap = ChannelMap {
            out2: vec![vec![0, 1], vec![2]],
            ..ChannelMap::two_channel()
        };
        assert!(gap.validate(4).is_err());
    }
}
