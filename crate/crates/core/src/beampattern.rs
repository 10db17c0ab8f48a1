//! Narrowband array responses on a lateral plane, independent of the
//! time-domain simulator.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::aperture::{ApodizationSet, ElementWeights, Window};
use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::math::Vec3;
use crate::metrics::{fwhm, Axis, BeamProfile};
use crate::signal::Pulse;

/// Narrowband evaluation frequency: the simulated pulse centre.
pub fn pattern_frequency() -> f64 {
    Pulse::simulation_default().center_frequency
}

/// Half-angle of the default lateral sweep.
pub const DEFAULT_SWEEP_DEG: f64 = 20.0;

/// Response on an x–y plane at one depth, stored x-major (`ix·ny + iy`).
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPattern2D {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub depth: f64,
    pub values: Vec<Complex64>,
    /// Response at the on-axis focal point.
    pub reference: Complex64,
}

impl BeamPattern2D {
    pub fn at(&self, ix: usize, iy: usize) -> Complex64 {
        self.values[ix * self.ys.len() + iy]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.norm()).collect()
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `20·log10(|B| / norm)` floored at `floor_db`.
    pub fn db(&self, norm: f64, floor_db: f64) -> Vec<f64> {
        self.values
            .iter()
            .map(|c| {
                let r = c.norm() / norm;
                if r > 0.0 {
                    (20.0 * libm::log10(r)).max(floor_db)
                } else {
                    floor_db
                }
            })
            .collect()
    }
}

/// Lateral sample plane: `n` points per axis over `±half_width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternPlane {
    pub depth: f64,
    pub half_width: f64,
    pub n: usize,
}

impl PatternPlane {
    /// The ±20° sweep at `depth` projected onto the plane.
    pub fn sweep(depth: f64, n: usize) -> Self {
        PatternPlane {
            depth,
            half_width: depth * libm::tan(crate::math::deg_to_rad(DEFAULT_SWEEP_DEG)),
            n,
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        if self.n == 1 {
            return alloc::vec![0.0];
        }
        let step = 2.0 * self.half_width / (self.n - 1) as f64;
        (0..self.n).map(|i| -self.half_width + i as f64 * step).collect()
    }
}

/// Weighted element positions with their focusing path lengths.
struct Focused {
    elems: Vec<(Vec3, f64, f64)>,
    k: f64,
}

impl Focused {
    fn new(weights: &ElementWeights, geom: &ArrayGeometry, focus_depth: f64, frequency: f64) -> Result<Self> {
        if !(focus_depth > 0.0) {
            return Err(Error::InvalidParameter {
                name: "focus_depth",
                value: focus_depth,
            });
        }
        let focus = Vec3::new(0.0, 0.0, focus_depth);
        let elems = weights
            .iter()
            .map(|(id, w)| {
                let p = geom.element(id)?.position;
                Ok((p, w, focus.distance(p)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Focused {
            elems,
            k: 2.0 * core::f64::consts::PI * frequency / geom.sound_speed(),
        })
    }

    fn response(&self, p: Vec3) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(e, w, df) in &self.elems {
            if w == 0.0 {
                continue;
            }
            let (s, c) = libm::sincos(self.k * (p.distance(e) - df));
            acc += Complex64::new(c, s) * w;
        }
        acc
    }
}

/// `Σ w · exp(j·k·(|p − e| − |focus − e|))` at `field_point`, with the
/// focus on axis at `focus_depth` and `k` at [`pattern_frequency`].
pub fn cw_response(
    weights: &ElementWeights,
    geom: &ArrayGeometry,
    focus_depth: f64,
    field_point: Vec3,
) -> Result<Complex64> {
    let f = Focused::new(weights, geom, focus_depth, pattern_frequency())?;
    Ok(f.response(field_point))
}

/// Response over a lateral plane at the focal depth.
pub fn lateral_pattern(weights: &ElementWeights, geom: &ArrayGeometry, plane: PatternPlane) -> Result<BeamPattern2D> {
    let f = Focused::new(weights, geom, plane.depth, pattern_frequency())?;
    let xs = plane.coords();
    let ys = xs.clone();
    let points: Vec<Vec3> = xs
        .iter()
        .flat_map(|&x| ys.iter().map(move |&y| Vec3::new(x, y, plane.depth)))
        .collect();
    #[cfg(feature = "parallel")]
    let values = {
        use rayon::prelude::*;
        points.par_iter().map(|&p| f.response(p)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let values = points.iter().map(|&p| f.response(p)).collect();
    Ok(BeamPattern2D {
        xs,
        ys,
        depth: plane.depth,
        values,
        reference: f.response(Vec3::new(0.0, 0.0, plane.depth)),
    })
}

/// Patterns of the four windows plus their magnitude-domain combination
/// `max(0, (|B_DC1| + |B_DC2|)/2 − |B_ZM|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NsiPatterns {
    pub rect: BeamPattern2D,
    pub zm: BeamPattern2D,
    pub dc1: BeamPattern2D,
    pub dc2: BeamPattern2D,
    pub nsi: BeamPattern2D,
}

pub fn nsi_pattern(set: &ApodizationSet, geom: &ArrayGeometry, plane: PatternPlane) -> Result<NsiPatterns> {
    let rect = lateral_pattern(&set.window(Window::Rect), geom, plane)?;
    let zm = lateral_pattern(&set.window(Window::ZeroMean), geom, plane)?;
    let dc1 = lateral_pattern(&set.window(Window::Dc1), geom, plane)?;
    let dc2 = lateral_pattern(&set.window(Window::Dc2), geom, plane)?;
    let combine = |z: Complex64, a: Complex64, b: Complex64| {
        Complex64::new(((a.norm() + b.norm()) / 2.0 - z.norm()).max(0.0), 0.0)
    };
    let values = zm
        .values
        .iter()
        .zip(&dc1.values)
        .zip(&dc2.values)
        .map(|((&z, &a), &b)| combine(z, a, b))
        .collect();
    let nsi = BeamPattern2D {
        xs: zm.xs.clone(),
        ys: zm.ys.clone(),
        depth: plane.depth,
        values,
        reference: combine(zm.reference, dc1.reference, dc2.reference),
    };
    Ok(NsiPatterns { rect, zm, dc1, dc2, nsi })
}

/// Magnitude cut through the plane centre along azimuth (x) or elevation (y).
pub fn center_cut(pattern: &BeamPattern2D, axis: Axis) -> Result<BeamProfile> {
    let (nx, ny) = (pattern.xs.len(), pattern.ys.len());
    let (coords, amps) = match axis {
        Axis::Azimuth => (pattern.xs.clone(), (0..nx).map(|i| pattern.at(i, ny / 2).norm()).collect()),
        Axis::Elevation => (pattern.ys.clone(), (0..ny).map(|i| pattern.at(nx / 2, i).norm()).collect()),
        Axis::Axial => {
            return Err(Error::InvalidParameter {
                name: "axis",
                value: 2.0,
            })
        }
    };
    BeamProfile::new(axis, coords, amps)
}

fn raw_line(
    weights: &ElementWeights,
    geom: &ArrayGeometry,
    depth: f64,
    axis: Axis,
    half_width: f64,
    n: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let f = Focused::new(weights, geom, depth, pattern_frequency())?;
    let coords = PatternPlane { depth, half_width, n }.coords();
    let amps = coords
        .iter()
        .map(|&u| {
            let p = match axis {
                Axis::Azimuth => Vec3::new(u, 0.0, depth),
                _ => Vec3::new(0.0, u, depth),
            };
            f.response(p).norm()
        })
        .collect();
    Ok((coords, amps))
}

/// Dense 1-D sweep of `|B|` along an axis of the focal plane.
pub fn line_profile(
    weights: &ElementWeights,
    geom: &ArrayGeometry,
    depth: f64,
    axis: Axis,
    half_width: f64,
    n: usize,
) -> Result<BeamProfile> {
    let (coords, amps) = raw_line(weights, geom, depth, axis, half_width, n)?;
    BeamProfile::new(axis, coords, amps)
}

/// DAS and NSI cuts along one axis of the focal plane, from a dense sweep
/// over `±half_width`.
pub fn line_profiles(
    set: &ApodizationSet,
    geom: &ArrayGeometry,
    depth: f64,
    axis: Axis,
    half_width: f64,
    n: usize,
) -> Result<(BeamProfile, BeamProfile)> {
    let line = |w: Window| raw_line(&set.window(w), geom, depth, axis, half_width, n);
    let (coords, rect) = line(Window::Rect)?;
    let (_, z) = line(Window::ZeroMean)?;
    let (_, a) = line(Window::Dc1)?;
    let (_, b) = line(Window::Dc2)?;
    let nsi = z
        .iter()
        .zip(&a)
        .zip(&b)
        .map(|((z, a), b)| ((a + b) / 2.0 - z).max(0.0))
        .collect();
    Ok((BeamProfile::new(axis, coords.clone(), rect)?, BeamProfile::new(axis, coords, nsi)?))
}

/// Half-amplitude widths of the DAS and NSI main lobes along one axis.
pub fn main_lobe_widths(
    set: &ApodizationSet,
    geom: &ArrayGeometry,
    depth: f64,
    axis: Axis,
    half_width: f64,
    n: usize,
) -> Result<(f64, f64)> {
    let (das, nsi) = line_profiles(set, geom, depth, axis, half_width, n)?;
    Ok((fwhm(&das)?, fwhm(&nsi)?))
}

/// Speckle resolution cell: axial pulse length × azimuth × elevation
/// half-amplitude widths of the DAS beam at `depth`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolutionCell {
    pub axial: f64,
    pub azimuth: f64,
    pub elevation: f64,
}

impl ResolutionCell {
    pub fn volume(&self) -> f64 {
        self.axial * self.azimuth * self.elevation
    }
}

pub fn resolution_cell(weights: &ElementWeights, geom: &ArrayGeometry, pulse: &Pulse, depth: f64) -> Result<ResolutionCell> {
    let half = 0.25 * depth;
    let n = 1201;
    let az = fwhm(&line_profile(weights, geom, depth, Axis::Azimuth, half, n)?)?;
    let el = fwhm(&line_profile(weights, geom, depth, Axis::Elevation, half, n)?)?;
    Ok(ResolutionCell {
        axial: pulse.axial_resolution(geom.sound_speed()),
        azimuth: az,
        elevation: el,
    })
}
