//! Delay-and-sum volume reconstruction and null subtraction imaging.
//!
//! Channel data are turned into analytic signals (and band-limited
//! upsampled) before delaying, so the summed voxel value is already complex
//! and the envelope is simply its magnitude.
//!
//! DAS is linear in the channel data and the focusing delay for a
//! (source, receive element) pair does not depend on the transmit bank, so
//! all events sharing a source and receive window are summed per element
//! before any voxel work. The voxel loop then touches each (angle, element)
//! trace once, however many multiplexed events produced it.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::aperture::{ApodizationSet, ElementWeights, Window};
use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::math::Vec3;
use crate::sequence::VirtualSource;
use crate::signal::AnalyticConverter;
use crate::sim::RfDataset;

/// Regular voxel grid; storage is z-fastest, then y, then x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub spacing: Vec3,
    pub dims: [usize; 3],
}

impl VoxelGrid {
    pub fn new(origin: Vec3, spacing: Vec3, dims: [usize; 3]) -> Result<Self> {
        for (name, s) in [("dx", spacing.x), ("dy", spacing.y), ("dz", spacing.z)] {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidParameter { name, value: s });
            }
        }
        if dims.contains(&0) {
            return Err(Error::InvalidParameter {
                name: "dims",
                value: 0.0,
            });
        }
        Ok(VoxelGrid {
            origin,
            spacing,
            dims,
        })
    }

    /// `dims` samples evenly covering each closed range. A single-sample
    /// axis sits at the range start.
    pub fn spanning(x: (f64, f64), y: (f64, f64), z: (f64, f64), dims: [usize; 3]) -> Result<Self> {
        let step = |(a, b): (f64, f64), n: usize| if n > 1 { (b - a) / (n - 1) as f64 } else { 1.0 };
        Self::new(
            Vec3::new(x.0, y.0, z.0),
            Vec3::new(step(x, dims[0]), step(y, dims[1]), step(z, dims[2])),
            dims,
        )
    }

    /// `dims` samples per axis at spacing `(b − a)/n` starting from `a`, so
    /// each range is sampled over `[a, b)`.
    pub fn half_open(x: (f64, f64), y: (f64, f64), z: (f64, f64), dims: [usize; 3]) -> Result<Self> {
        let step = |(a, b): (f64, f64), n: usize| (b - a) / n.max(1) as f64;
        Self::new(
            Vec3::new(x.0, y.0, z.0),
            Vec3::new(step(x, dims[0]), step(y, dims[1]), step(z, dims[2])),
            dims,
        )
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.dims[1] + iy) * self.dims[2] + iz
    }

    #[inline]
    pub fn unravel(&self, i: usize) -> [usize; 3] {
        let iz = i % self.dims[2];
        let r = i / self.dims[2];
        [r / self.dims[1], r % self.dims[1], iz]
    }

    #[inline]
    pub fn position(&self, ix: usize, iy: usize, iz: usize) -> Vec3 {
        Vec3::new(
            self.origin.x + ix as f64 * self.spacing.x,
            self.origin.y + iy as f64 * self.spacing.y,
            self.origin.z + iz as f64 * self.spacing.z,
        )
    }

    /// Sample coordinates along axis 0 (x), 1 (y) or 2 (z).
    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        let (o, s) = match axis {
            0 => (self.origin.x, self.spacing.x),
            1 => (self.origin.y, self.spacing.y),
            _ => (self.origin.z, self.spacing.z),
        };
        (0..self.dims[axis.min(2)]).map(|i| o + i as f64 * s).collect()
    }

    pub fn max_corner(&self) -> Vec3 {
        self.position(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVolume {
    pub grid: VoxelGrid,
    pub values: Vec<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VolumeLabel {
    ZeroMean,
    Dc1,
    Dc2,
    Das,
    Nsi,
}

impl VolumeLabel {
    pub fn name(self) -> &'static str {
        match self {
            VolumeLabel::ZeroMean => "E_ZM",
            VolumeLabel::Dc1 => "E_DC1",
            VolumeLabel::Dc2 => "E_DC2",
            VolumeLabel::Das => "E_DAS",
            VolumeLabel::Nsi => "E_NSI",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::ZeroMean, Self::Dc1, Self::Dc2, Self::Das, Self::Nsi]
            .into_iter()
            .find(|l| l.name() == s)
    }
}

/// Non-negative envelope on a voxel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeVolume {
    pub grid: VoxelGrid,
    pub values: Vec<f64>,
    pub label: VolumeLabel,
}

impl EnvelopeVolume {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn at(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        self.values[self.grid.index(ix, iy, iz)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Compounding {
    /// Sum complex voxel values over angles, then detect.
    #[default]
    Coherent,
    /// Detect per angle, then sum envelopes.
    Incoherent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamformSettings {
    pub sound_speed: f64,
    /// Band-limited upsampling of the analytic traces before linear
    /// interpolation (power of two).
    pub upsample: usize,
    pub compounding: Compounding,
}

impl Default for BeamformSettings {
    fn default() -> Self {
        BeamformSettings {
            sound_speed: crate::DEFAULT_SOUND_SPEED,
            upsample: 4,
            compounding: Compounding::Coherent,
        }
    }
}

/// Analytic traces of one angle, summed per receive element.
#[derive(Debug, Clone)]
struct ChannelGroup {
    angle_index: usize,
    source: VirtualSource,
    t0: f64,
    len: usize,
    elements: Vec<usize>,
    /// Index of each element in the beamformer's union list.
    union_index: Vec<usize>,
    traces: Vec<Complex64>,
}

/// Prepared receive data, ready for any number of DAS passes.
#[derive(Debug, Clone)]
pub struct Beamformer {
    settings: BeamformSettings,
    fs: f64,
    groups: Vec<ChannelGroup>,
    union: Vec<usize>,
    union_positions: Vec<Vec3>,
    /// For each union element, the (group, position in group) pairs holding
    /// its traces, in group order.
    members: Vec<Vec<(usize, usize)>>,
    /// Start of each group's rows in the weight table.
    group_offsets: Vec<usize>,
    n_angles: usize,
}

/// Consecutive voxel columns processed together so traces are reused from
/// cache across neighbouring columns.
const TILE_COLUMNS: usize = 64;

impl Beamformer {
    pub fn new(dataset: &RfDataset, geom: &ArrayGeometry, settings: BeamformSettings) -> Result<Self> {
        if !(settings.sound_speed > 0.0) {
            return Err(Error::InvalidParameter {
                name: "sound_speed",
                value: settings.sound_speed,
            });
        }
        // group events by (angle, receive window)
        struct Acc {
            angle_index: usize,
            source: VirtualSource,
            t0: f64,
            n: usize,
            raw: Vec<(usize, Vec<f64>)>,
        }
        let mut accs: Vec<Acc> = Vec::new();
        for ev in &dataset.events {
            let slot = accs.iter().position(|a| {
                a.angle_index == ev.angle_index && a.t0 == ev.t0 && a.n == ev.n_samples
            });
            let acc = match slot {
                Some(i) => &mut accs[i],
                None => {
                    accs.push(Acc {
                        angle_index: ev.angle_index,
                        source: ev.source,
                        t0: ev.t0,
                        n: ev.n_samples,
                        raw: Vec::new(),
                    });
                    accs.last_mut().unwrap()
                }
            };
            for (k, &id) in ev.rx_elements.iter().enumerate() {
                let ch = ev.channel(k);
                match acc.raw.binary_search_by_key(&id, |(e, _)| *e) {
                    Ok(j) => acc.raw[j].1.iter_mut().zip(ch).for_each(|(a, b)| *a += b),
                    Err(j) => acc.raw.insert(j, (id, ch.to_vec())),
                }
            }
        }

        let mut union: Vec<usize> = accs.iter().flat_map(|a| a.raw.iter().map(|(e, _)| *e)).collect();
        union.sort_unstable();
        union.dedup();
        let union_positions = union
            .iter()
            .map(|&id| geom.element(id).map(|e| e.position))
            .collect::<Result<Vec<_>>>()?;

        let mut groups = Vec::with_capacity(accs.len());
        for acc in accs {
            let conv = AnalyticConverter::new(acc.n, settings.upsample)?;
            let len = conv.output_len();
            let mut traces = Vec::with_capacity(acc.raw.len() * len);
            let mut elements = Vec::with_capacity(acc.raw.len());
            for (id, raw) in &acc.raw {
                traces.extend(conv.convert(raw));
                elements.push(*id);
            }
            let union_index = elements
                .iter()
                .map(|id| union.binary_search(id).expect("collected above"))
                .collect();
            groups.push(ChannelGroup {
                angle_index: acc.angle_index,
                source: acc.source,
                t0: acc.t0,
                len,
                elements,
                union_index,
                traces,
            });
        }
        let n_angles = groups.iter().map(|g| g.angle_index + 1).max().unwrap_or(0);
        let mut members = alloc::vec![Vec::new(); union.len()];
        let mut group_offsets = Vec::with_capacity(groups.len());
        let mut offset = 0;
        for (gi, g) in groups.iter().enumerate() {
            for (k, &u) in g.union_index.iter().enumerate() {
                members[u].push((gi, k));
            }
            group_offsets.push(offset);
            offset += g.elements.len();
        }
        Ok(Beamformer {
            settings,
            fs: dataset.sampling_rate * settings.upsample as f64,
            groups,
            union,
            union_positions,
            members,
            group_offsets,
            n_angles,
        })
    }

    pub fn settings(&self) -> &BeamformSettings {
        &self.settings
    }

    /// Receive elements present in the data.
    pub fn elements(&self) -> &[usize] {
        &self.union
    }

    fn check_grid(&self, grid: &VoxelGrid) -> Result<()> {
        let z = grid.origin.z.min(grid.max_corner().z);
        if !(z > 0.0) {
            return Err(Error::VoxelBehindArray { z });
        }
        Ok(())
    }

    /// Weights for every (group, element) pair, interleaved by set.
    fn weight_table(&self, sets: &[&ElementWeights]) -> Result<Vec<f64>> {
        let mut t = Vec::new();
        for g in &self.groups {
            for &e in &g.elements {
                for w in sets {
                    t.push(w.get(e).ok_or(Error::MissingWeight(e))?);
                }
            }
        }
        Ok(t)
    }

    /// Complex sums for `sets` at every voxel: `out[voxel][bin][set]`, with
    /// one bin for coherent compounding and one per angle otherwise.
    fn run(&self, sets: &[&ElementWeights], grid: &VoxelGrid, bins: usize) -> Result<Vec<Complex64>> {
        self.check_grid(grid)?;
        let table = self.weight_table(sets)?;
        let n_sets = sets.len();
        let stride = bins * n_sets;
        let nz = grid.dims[2];
        let table = &table;
        let mut out = alloc::vec![Complex64::new(0.0, 0.0); grid.len() * stride];

        let n_cols = grid.dims[0] * grid.dims[1];
        let chunk = TILE_COLUMNS * nz * stride;
        let tile = |t: usize, buf: &mut [Complex64]| {
            let col0 = t * TILE_COLUMNS;
            self.tile(grid, col0, TILE_COLUMNS.min(n_cols - col0), table, n_sets, bins, buf);
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            out.par_chunks_mut(chunk).enumerate().for_each(|(t, buf)| tile(t, buf));
        }
        #[cfg(not(feature = "parallel"))]
        for (t, buf) in out.chunks_mut(chunk).enumerate() {
            tile(t, buf);
        }
        debug_assert_eq!(out.len(), n_cols * nz * stride);
        Ok(out)
    }

    /// DAS sums for `n` consecutive voxel columns starting at `col0`.
    ///
    /// Loops run element-major so each trace is swept over the whole tile
    /// while it is in cache. The per-voxel accumulation order (element,
    /// then group) is fixed, so results do not depend on threading.
    #[allow(clippy::too_many_arguments)]
    fn tile(
        &self,
        grid: &VoxelGrid,
        col0: usize,
        n: usize,
        table: &[f64],
        n_sets: usize,
        bins: usize,
        buf: &mut [Complex64],
    ) {
        let nz = grid.dims[2];
        let stride = bins * n_sets;
        let c = self.settings.sound_speed;
        let scale = self.fs / c;
        let voxels: Vec<Vec3> = (col0..col0 + n)
            .flat_map(|col| {
                let (ix, iy) = (col / grid.dims[1], col % grid.dims[1]);
                (0..nz).map(move |iz| grid.position(ix, iy, iz))
            })
            .collect();
        let mut base = alloc::vec![0.0; self.groups.len() * voxels.len()];
        for (b, g) in base.chunks_mut(voxels.len()).zip(&self.groups) {
            for (d, v) in b.iter_mut().zip(&voxels) {
                *d = (g.source.transmit_delay(*v, c) - g.t0) * self.fs;
            }
        }
        let mut rx = alloc::vec![0.0; voxels.len()];
        for (u, p) in self.union_positions.iter().enumerate() {
            for (d, v) in rx.iter_mut().zip(&voxels) {
                *d = v.distance(*p) * scale;
            }
            for &(gi, k) in &self.members[u] {
                let g = &self.groups[gi];
                let tr = &g.traces[k * g.len..(k + 1) * g.len];
                let row = self.group_offsets[gi] + k;
                let w = &table[row * n_sets..(row + 1) * n_sets];
                let b = &base[gi * voxels.len()..(gi + 1) * voxels.len()];
                let bin = if bins == 1 { 0 } else { g.angle_index };
                let last = (g.len - 1) as f64;
                for (j, (&t, &r)) in b.iter().zip(&rx).enumerate() {
                    let pos = t + r;
                    if !(pos >= 0.0 && pos < last) {
                        continue;
                    }
                    let i = pos as usize;
                    let frac = pos - i as f64;
                    let s = tr[i] + (tr[i + 1] - tr[i]) * frac;
                    let slot = &mut buf[j * stride + bin * n_sets..][..n_sets];
                    for (a, &wt) in slot.iter_mut().zip(w) {
                        *a += s * wt;
                    }
                }
            }
        }
    }

    /// Coherently compounded complex DAS volume.
    pub fn das_volume(&self, weights: &ElementWeights, grid: &VoxelGrid) -> Result<ComplexVolume> {
        let values = self.run(&[weights], grid, 1)?;
        Ok(ComplexVolume { grid: *grid, values })
    }

    /// Envelopes for several weight sets in one pass over the voxels,
    /// compounded according to the settings.
    pub fn envelopes(
        &self,
        sets: &[(&ElementWeights, VolumeLabel)],
        grid: &VoxelGrid,
    ) -> Result<Vec<EnvelopeVolume>> {
        let weights: Vec<&ElementWeights> = sets.iter().map(|s| s.0).collect();
        let bins = match self.settings.compounding {
            Compounding::Coherent => 1,
            Compounding::Incoherent => self.n_angles.max(1),
        };
        let raw = self.run(&weights, grid, bins)?;
        let n = sets.len();
        let mut vols: Vec<EnvelopeVolume> = sets
            .iter()
            .map(|s| EnvelopeVolume {
                grid: *grid,
                values: Vec::with_capacity(grid.len()),
                label: s.1,
            })
            .collect();
        for voxel in raw.chunks(bins * n) {
            for (j, vol) in vols.iter_mut().enumerate() {
                let e: f64 = (0..bins).map(|b| voxel[b * n + j].norm()).sum();
                vol.values.push(e);
            }
        }
        Ok(vols)
    }

    /// DAS (rect window) plus the three null subtraction envelopes and
    /// their combination, from a single fused pass.
    pub fn nsi(&self, set: &ApodizationSet, grid: &VoxelGrid) -> Result<NsiVolumes> {
        let rect = set.window(Window::Rect);
        let zm = set.window(Window::ZeroMean);
        let dc1 = set.window(Window::Dc1);
        let dc2 = set.window(Window::Dc2);
        let mut v = self.envelopes(
            &[
                (&rect, VolumeLabel::Das),
                (&zm, VolumeLabel::ZeroMean),
                (&dc1, VolumeLabel::Dc1),
                (&dc2, VolumeLabel::Dc2),
            ],
            grid,
        )?;
        let e_dc2 = v.pop().unwrap();
        let e_dc1 = v.pop().unwrap();
        let e_zm = v.pop().unwrap();
        let das = v.pop().unwrap();
        let nsi = nsi_combine(&e_zm, &e_dc1, &e_dc2, set.dc)?;
        Ok(NsiVolumes {
            das,
            zm: e_zm,
            dc1: e_dc1,
            dc2: e_dc2,
            nsi,
        })
    }

    /// Null subtraction without the DAS window: three passes' worth of
    /// weights, as a like-for-like cost against [`Beamformer::das_only`].
    pub fn nsi_only(&self, set: &ApodizationSet, grid: &VoxelGrid) -> Result<EnvelopeVolume> {
        let zm = set.window(Window::ZeroMean);
        let dc1 = set.window(Window::Dc1);
        let dc2 = set.window(Window::Dc2);
        let v = self.envelopes(
            &[
                (&zm, VolumeLabel::ZeroMean),
                (&dc1, VolumeLabel::Dc1),
                (&dc2, VolumeLabel::Dc2),
            ],
            grid,
        )?;
        nsi_combine(&v[0], &v[1], &v[2], set.dc)
    }

    pub fn das_only(&self, weights: &ElementWeights, grid: &VoxelGrid) -> Result<EnvelopeVolume> {
        let mut v = self.envelopes(&[(weights, VolumeLabel::Das)], grid)?;
        Ok(v.pop().unwrap())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NsiVolumes {
    pub das: EnvelopeVolume,
    pub zm: EnvelopeVolume,
    pub dc1: EnvelopeVolume,
    pub dc2: EnvelopeVolume,
    pub nsi: EnvelopeVolume,
}

/// Magnitude of a complex volume.
pub fn envelope(volume: &ComplexVolume, label: VolumeLabel) -> EnvelopeVolume {
    EnvelopeVolume {
        grid: volume.grid,
        values: volume.values.iter().map(|c| c.norm()).collect(),
        label,
    }
}

/// `max((E_DC1 + E_DC2)/2 − E_ZM, 0) / (2·dc)` voxelwise.
pub fn nsi_combine(
    e_zm: &EnvelopeVolume,
    e_dc1: &EnvelopeVolume,
    e_dc2: &EnvelopeVolume,
    dc: f64,
) -> Result<EnvelopeVolume> {
    if !(dc > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dc",
            value: dc,
        });
    }
    if e_zm.grid != e_dc1.grid
        || e_zm.grid != e_dc2.grid
        || e_zm.values.len() != e_dc1.values.len()
        || e_zm.values.len() != e_dc2.values.len()
    {
        return Err(Error::GridMismatch);
    }
    let scale = 1.0 / (2.0 * dc);
    let values = e_zm
        .values
        .iter()
        .zip(&e_dc1.values)
        .zip(&e_dc2.values)
        .map(|((&z, &a), &b)| ((a + b) / 2.0 - z).max(0.0) * scale)
        .collect();
    Ok(EnvelopeVolume {
        grid: e_zm.grid,
        values,
        label: VolumeLabel::Nsi,
    })
}

/// Peak-normalised dB image, floored at `-dynamic_range_db`.
pub fn log_compress(env: &EnvelopeVolume, dynamic_range_db: f64) -> Result<Vec<f64>> {
    let max = env.max();
    if !(max > 0.0) {
        return Err(Error::ZeroInput("log_compress"));
    }
    let floor = libm::pow(10.0, -dynamic_range_db / 20.0 - 1.0);
    Ok(env
        .values
        .iter()
        .map(|&v| (20.0 * libm::log10((v / max).max(floor))).max(-dynamic_range_db))
        .collect())
}
