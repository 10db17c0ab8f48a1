//! Beam profiles and image-quality figures: FWHM, SMER, CR and CNR.
//!
//! All quantities are computed on the linear envelope and are invariant to
//! a global positive scale of the input.

use alloc::vec::Vec;

use crate::beamform::EnvelopeVolume;
use crate::error::{Error, Result};
use crate::math::Vec3;

/// Reported in place of `20·log10(0)` when a profile has no side-lobe energy.
pub const SMER_FLOOR_DB: f64 = -100.0;

/// Smallest region accepted by [`contrast`].
pub const MIN_REGION_VOXELS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Azimuth,
    Elevation,
    Axial,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::Azimuth => 0,
            Axis::Elevation => 1,
            Axis::Axial => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::Azimuth => "azimuth",
            Axis::Elevation => "elevation",
            Axis::Axial => "axial",
        }
    }
}

/// A sampled 1-D line through a peak, normalised so the peak is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamProfile {
    pub axis: Axis,
    pub coords: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub peak_index: usize,
    /// The peak sits on the first or last sample.
    pub truncated: bool,
}

impl BeamProfile {
    /// `coords` must be strictly increasing and `amplitudes` non-negative
    /// with a positive maximum.
    pub fn new(axis: Axis, coords: Vec<f64>, amplitudes: Vec<f64>) -> Result<Self> {
        if coords.len() != amplitudes.len() || coords.len() < 2 {
            return Err(Error::InvalidParameter {
                name: "profile_len",
                value: coords.len() as f64,
            });
        }
        if coords.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter {
                name: "profile_coords",
                value: f64::NAN,
            });
        }
        let mut peak_index = 0;
        for (i, &a) in amplitudes.iter().enumerate() {
            if a > amplitudes[peak_index] {
                peak_index = i;
            }
        }
        let peak = amplitudes[peak_index];
        if !(peak > 0.0) || !peak.is_finite() {
            return Err(Error::ZeroInput("profile"));
        }
        let amplitudes = amplitudes.into_iter().map(|a| a / peak).collect();
        Ok(BeamProfile {
            axis,
            truncated: peak_index == 0 || peak_index == coords.len() - 1,
            coords,
            amplitudes,
            peak_index,
        })
    }

    pub fn peak_coord(&self) -> f64 {
        self.coords[self.peak_index]
    }

    /// Linear interpolation between samples (clamped at the ends).
    pub fn value_at(&self, x: f64) -> f64 {
        let c = &self.coords;
        if x <= c[0] {
            return self.amplitudes[0];
        }
        if x >= c[c.len() - 1] {
            return self.amplitudes[c.len() - 1];
        }
        let i = c.partition_point(|&v| v <= x) - 1;
        let t = (x - c[i]) / (c[i + 1] - c[i]);
        self.amplitudes[i] + (self.amplitudes[i + 1] - self.amplitudes[i]) * t
    }

    /// Where the profile first falls to `level` walking away from the peak,
    /// or `None` if it never does on that side.
    pub fn crossing(&self, level: f64, side: Side) -> Option<f64> {
        self.crossing_from(self.peak_index, level, side)
    }

    fn crossing_from(&self, start: usize, level: f64, side: Side) -> Option<f64> {
        let (a, c) = (&self.amplitudes, &self.coords);
        let step = |i: usize| match side {
            Side::Left => i.checked_sub(1),
            Side::Right => (i + 1 < a.len()).then_some(i + 1),
        };
        let mut i = start;
        while let Some(j) = step(i) {
            if a[j] <= level {
                let t = (a[i] - level) / (a[i] - a[j]);
                return Some(c[i] + (c[j] - c[i]) * t);
            }
            i = j;
        }
        None
    }

    /// Exact integral of the piecewise-linear profile over `[lo, hi]`.
    pub fn integrate(&self, lo: f64, hi: f64) -> f64 {
        if !(hi > lo) {
            return 0.0;
        }
        let c = &self.coords;
        let mut total = 0.0;
        for i in 0..c.len() - 1 {
            let a = c[i].max(lo);
            let b = c[i + 1].min(hi);
            if b > a {
                total += (b - a) * (self.value_at(a) + self.value_at(b)) / 2.0;
            }
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// The line through the volume's global maximum along `axis`.
pub fn profile_through_max(volume: &EnvelopeVolume, axis: Axis) -> Result<BeamProfile> {
    let i = volume.argmax().ok_or(Error::ZeroInput("profile_through_max"))?;
    if !(volume.values[i] > 0.0) {
        return Err(Error::ZeroInput("profile_through_max"));
    }
    let g = &volume.grid;
    let at = g.unravel(i);
    let n = g.dims[axis.index()];
    let amplitudes = (0..n)
        .map(|k| {
            let mut p = at;
            p[axis.index()] = k;
            volume.values[g.index(p[0], p[1], p[2])]
        })
        .collect();
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "profile_len",
            value: n as f64,
        });
    }
    BeamProfile::new(axis, g.axis_coords(axis.index()), amplitudes)
}

/// Both −6 dB (half amplitude) crossings.
pub fn half_max_crossings(profile: &BeamProfile) -> Result<(f64, f64)> {
    let find = |side: Side| {
        profile.crossing(0.5, side).ok_or(Error::UnresolvedLobe {
            side: side.name(),
            level_db: -6.0,
        })
    };
    Ok((find(Side::Left)?, find(Side::Right)?))
}

/// Width at half amplitude, with linear interpolation of the crossings.
pub fn fwhm(profile: &BeamProfile) -> Result<f64> {
    let (l, r) = half_max_crossings(profile)?;
    Ok(r - l)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smer {
    pub db: f64,
    /// A −6 or −40 dB bound was not reached and the profile end was used.
    pub clamped: bool,
    pub main_lobe: (f64, f64),
    pub side_lobe: (f64, f64),
}

/// Side-to-main-lobe energy ratio: amplitude integrated between the −6 and
/// −40 dB bounds on both sides over the integral inside the −6 dB bounds.
pub fn smer(profile: &BeamProfile) -> Result<Smer> {
    let c = &profile.coords;
    let (first, last) = (c[0], c[c.len() - 1]);
    let mut clamped = false;
    let mut bound = |level: f64, side: Side, start: usize| {
        profile.crossing_from(start, level, side).unwrap_or_else(|| {
            clamped = true;
            match side {
                Side::Left => first,
                Side::Right => last,
            }
        })
    };
    let p = profile.peak_index;
    let l6 = bound(0.5, Side::Left, p);
    let r6 = bound(0.5, Side::Right, p);
    let l40 = bound(0.01, Side::Left, p);
    let r40 = bound(0.01, Side::Right, p);
    let main = profile.integrate(l6, r6);
    if !(main > 0.0) {
        return Err(Error::DegenerateProfile);
    }
    let side = profile.integrate(l40, l6) + profile.integrate(r6, r40);
    let db = if side > 0.0 {
        (20.0 * libm::log10(side / main)).max(SMER_FLOOR_DB)
    } else {
        SMER_FLOOR_DB
    };
    Ok(Smer {
        db,
        clamped,
        main_lobe: (l6, r6),
        side_lobe: (l40, r40),
    })
}

/// `1 − (a_nsi·e_nsi)/(a_das·e_das)` from azimuth and elevation FWHMs.
pub fn area_reduction(das: (f64, f64), nsi: (f64, f64)) -> f64 {
    1.0 - (nsi.0 * nsi.1) / (das.0 * das.1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Sphere { center: Vec3, radius: f64 },
    Shell { center: Vec3, inner: f64, outer: f64 },
    Box { lo: Vec3, hi: Vec3 },
}

impl Region {
    pub fn contains(&self, p: Vec3) -> bool {
        match *self {
            Region::Sphere { center, radius } => p.distance(center) <= radius,
            Region::Shell { center, inner, outer } => {
                let d = p.distance(center);
                d >= inner && d <= outer
            }
            Region::Box { lo, hi } => {
                p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z
            }
        }
    }

    /// Inside sphere at 0.8 r and background shell over [1.2 r, 1.8 r] for
    /// a cyst of radius `r`.
    pub fn cyst_pair(center: Vec3, radius: f64) -> (Region, Region) {
        (
            Region::Sphere {
                center,
                radius: 0.8 * radius,
            },
            Region::Shell {
                center,
                inner: 1.2 * radius,
                outer: 1.8 * radius,
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastStats {
    pub mu_i: f64,
    pub mu_o: f64,
    pub sigma_i: f64,
    pub sigma_o: f64,
    pub n_i: usize,
    pub n_o: usize,
    pub cr: f64,
    pub cnr: f64,
}

/// CR and CNR between two disjoint regions using population statistics of
/// the linear envelope.
pub fn contrast(volume: &EnvelopeVolume, inside: &Region, outside: &Region) -> Result<ContrastStats> {
    let g = &volume.grid;
    let (mut vi, mut vo) = (Vec::new(), Vec::new());
    for (k, &v) in volume.values.iter().enumerate() {
        let [a, b, c] = g.unravel(k);
        let p = g.position(a, b, c);
        let (ii, oo) = (inside.contains(p), outside.contains(p));
        if ii && oo {
            return Err(Error::OverlappingRegions);
        }
        if ii {
            vi.push(v);
        } else if oo {
            vo.push(v);
        }
    }
    for (name, v) in [("inside", &vi), ("outside", &vo)] {
        if v.len() < MIN_REGION_VOXELS {
            return Err(Error::RegionTooSmall {
                name,
                count: v.len(),
                min: MIN_REGION_VOXELS,
            });
        }
    }
    let (mu_i, sigma_i) = mean_std(&vi);
    let (mu_o, sigma_o) = mean_std(&vo);
    let sum = mu_o + mu_i;
    if !(sum > 0.0) {
        return Err(Error::ZeroInput("contrast"));
    }
    let spread = libm::sqrt(sigma_i * sigma_i + sigma_o * sigma_o);
    let cnr = if spread > 0.0 {
        (mu_o - mu_i) / spread
    } else if mu_o == mu_i {
        0.0
    } else {
        libm::copysign(f64::INFINITY, mu_o - mu_i)
    };
    Ok(ContrastStats {
        mu_i,
        mu_o,
        sigma_i,
        sigma_o,
        n_i: vi.len(),
        n_o: vo.len(),
        cr: (mu_o - mu_i) / sum,
        cnr,
    })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mu = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
    (mu, libm::sqrt(var))
}
