//! Receive aperture masks and null subtraction apodizations.
//!
//! Masks select elements; the inner/outer partition of a mask drives the
//! zero-mean window (`-1` inside, `+1` outside) from which the two DC-offset
//! windows are derived.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;

/// Default spread of the element selection kernel, in pitch units.
pub const DEFAULT_SIGMA_D: f64 = 0.7;

/// Imbalance above which a warning is appropriate.
pub const IMBALANCE_WARN: f64 = 0.05;
/// Imbalance above which no zero-mean window is formed.
pub const IMBALANCE_LIMIT: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ApertureKind {
    Circular,
    Spiral,
    SpiralNoReuse,
    Rectangular,
}

impl ApertureKind {
    pub const ALL: [ApertureKind; 4] = [
        ApertureKind::Circular,
        ApertureKind::Spiral,
        ApertureKind::SpiralNoReuse,
        ApertureKind::Rectangular,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ApertureKind::Circular => "circular",
            ApertureKind::Spiral => "spiral",
            ApertureKind::SpiralNoReuse => "spiral_no_reuse",
            ApertureKind::Rectangular => "rectangular",
        }
    }

    /// Whether the mask is operated in a single TX/RX event per angle.
    pub fn is_single_event(self) -> bool {
        matches!(self, ApertureKind::SpiralNoReuse)
    }
}

/// How the inner region of a mask was defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Partition {
    /// Inner iff radial distance ≤ `r_in`; no element beyond `r_out`.
    Radial { r_in: f64, r_out: f64 },
    /// Inner iff inside the centred `cols × rows` block of the active grid.
    Rectangle { inner_cols: usize, inner_rows: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApertureMask {
    pub kind: ApertureKind,
    /// Sorted, unique element ids.
    pub element_ids: Vec<usize>,
    /// Parallel to `element_ids`.
    pub inner: Vec<bool>,
    pub n_inner: usize,
    pub n_outer: usize,
    pub partition: Partition,
}

impl ApertureMask {
    fn from_ids(
        kind: ApertureKind,
        geom: &ArrayGeometry,
        ids: impl IntoIterator<Item = usize>,
        partition: Partition,
    ) -> Result<Self> {
        let set: BTreeSet<usize> = ids.into_iter().collect();
        let element_ids: Vec<usize> = set.into_iter().collect();
        let mut inner = Vec::with_capacity(element_ids.len());
        for &id in &element_ids {
            let e = geom.element(id)?;
            inner.push(match partition {
                Partition::Radial { r_in, .. } => e.radial_distance <= r_in,
                Partition::Rectangle {
                    inner_cols,
                    inner_rows,
                } => {
                    let c0 = (geom.n_cols() - inner_cols) / 2;
                    let r0 = (geom.n_active_rows() - inner_rows) / 2;
                    (c0..c0 + inner_cols).contains(&e.col)
                        && (r0..r0 + inner_rows).contains(&e.active_row)
                }
            });
        }
        let n_inner = inner.iter().filter(|&&b| b).count();
        Ok(ApertureMask {
            kind,
            n_outer: element_ids.len() - n_inner,
            element_ids,
            inner,
            n_inner,
            partition,
        })
    }

    pub fn len(&self) -> usize {
        self.element_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.element_ids.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.element_ids.binary_search(&id).is_ok()
    }

    /// Zero-mean signs without the balance guard of [`nsi_windows`].
    pub fn zm_weights(&self) -> Vec<f64> {
        self.inner.iter().map(|&i| if i { -1.0 } else { 1.0 }).collect()
    }

    /// |n_inner - n_outer| / (n_inner + n_outer).
    pub fn imbalance(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (self.n_inner as f64 - self.n_outer as f64).abs() / self.len() as f64
    }
}

fn check_radii(r_in: f64, r_out: f64) -> Result<()> {
    if !(r_out > 0.0) || !r_out.is_finite() {
        return Err(Error::InvalidParameter {
            name: "r_out",
            value: r_out,
        });
    }
    if !(r_in >= 0.0) || !r_in.is_finite() {
        return Err(Error::InvalidParameter {
            name: "r_in",
            value: r_in,
        });
    }
    Ok(())
}

/// All elements with radial distance ≤ `r_out`.
pub fn circular_mask(geom: &ArrayGeometry, r_out: f64, r_in: f64) -> Result<ApertureMask> {
    check_radii(r_in, r_out)?;
    let ids = geom
        .elements()
        .iter()
        .filter(|e| e.radial_distance <= r_out)
        .map(|e| e.id);
    let mask = ApertureMask::from_ids(
        ApertureKind::Circular,
        geom,
        ids,
        Partition::Radial { r_in, r_out },
    )?;
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(mask)
}

/// The full array, with the centred `inner_cols × inner_rows` block as the
/// inner region.
pub fn rectangular_mask(
    geom: &ArrayGeometry,
    inner_cols: usize,
    inner_rows: usize,
) -> Result<ApertureMask> {
    let (nc, nr) = (geom.n_cols(), geom.n_active_rows());
    if inner_cols > nc || inner_rows > nr {
        return Err(Error::InvalidAperture(alloc::format!(
            "inner rectangle {inner_cols}x{inner_rows} is larger than the {nc}x{nr} array"
        )));
    }
    if !(nc - inner_cols).is_multiple_of(2) || !(nr - inner_rows).is_multiple_of(2) {
        return Err(Error::InvalidAperture(alloc::format!(
            "inner rectangle {inner_cols}x{inner_rows} cannot be centred on the {nc}x{nr} array"
        )));
    }
    if inner_cols == nc && inner_rows == nr {
        return Err(Error::InvalidAperture(alloc::format!(
            "inner rectangle {inner_cols}x{inner_rows} leaves no outer elements"
        )));
    }
    ApertureMask::from_ids(
        ApertureKind::Rectangular,
        geom,
        0..geom.len(),
        Partition::Rectangle {
            inner_cols,
            inner_rows,
        },
    )
}

/// Ideal (continuous) sparse layout in the design frame.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealSpiral {
    pub r_max: f64,
    pub points: Vec<(f64, f64)>,
}

impl IdealSpiral {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Golden-angle Fermat spiral with uniform areal density: point `k` sits at
/// radius `r_max·sqrt((k+½)/n)` and azimuth `k·(golden angle)`.
pub fn fermat_spiral_ideal(n: usize, r_max: f64) -> Result<IdealSpiral> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            value: 0.0,
        });
    }
    if !(r_max > 0.0) {
        return Err(Error::InvalidParameter {
            name: "r_max",
            value: r_max,
        });
    }
    let golden = core::f64::consts::PI * (3.0 - libm::sqrt(5.0));
    let points = (0..n)
        .map(|k| {
            let r = r_max * libm::sqrt((k as f64 + 0.5) / n as f64);
            let theta = k as f64 * golden;
            (r * libm::cos(theta), r * libm::sin(theta))
        })
        .collect();
    Ok(IdealSpiral { r_max, points })
}

fn design_distance(geom: &ArrayGeometry, id: usize, p: (f64, f64)) -> f64 {
    let d = geom.elements()[id].design;
    libm::hypot(d.0 - p.0, d.1 - p.1)
}

fn eligible(geom: &ArrayGeometry, r_out: f64) -> Vec<usize> {
    geom.elements()
        .iter()
        .filter(|e| e.radial_distance <= r_out)
        .map(|e| e.id)
        .collect()
}

/// Maps each ideal point to the nearest element inside `r_out` (ties go to
/// the lower element id). Points landing on the same element collapse.
pub fn quantize_to_grid(
    ideal: &IdealSpiral,
    geom: &ArrayGeometry,
    r_in: f64,
    r_out: f64,
) -> Result<ApertureMask> {
    check_radii(r_in, r_out)?;
    if ideal.is_empty() {
        return Err(Error::EmptyMask);
    }
    let candidates = eligible(geom, r_out);
    if candidates.is_empty() {
        return Err(Error::EmptyMask);
    }
    let ids = ideal.points.iter().map(|&p| {
        let mut best = (f64::INFINITY, usize::MAX);
        for &id in &candidates {
            let d = design_distance(geom, id, p);
            if d < best.0 {
                best = (d, id);
            }
        }
        best.1
    });
    let ids: Vec<usize> = ids.collect();
    ApertureMask::from_ids(ApertureKind::Spiral, geom, ids, Partition::Radial { r_in, r_out })
}

/// Gaussian-kernel element score, with `d_min` in the exponent exactly as
/// the selection rule is written (not squared).
pub fn selection_score(d_min: f64, sigma_d: f64) -> f64 {
    libm::exp(-d_min / (2.0 * sigma_d * sigma_d))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoReuseParams {
    /// Kernel spread in pitch units.
    pub sigma_d: f64,
    /// Candidate pairs scoring below this are never considered.
    pub min_score: f64,
}

impl Default for NoReuseParams {
    fn default() -> Self {
        NoReuseParams {
            sigma_d: DEFAULT_SIGMA_D,
            min_score: 0.1,
        }
    }
}

/// Channel-unique spiral selection.
///
/// Every (ideal point, element inside `r_out`) pair is scored on the
/// pitch-normalised distance. Pairs are taken in descending score order
/// (ties: lower channel, then lower element id, then lower point index) and
/// accepted only when neither the element's channel nor the ideal point has
/// been used. The result never shares a channel.
pub fn no_reuse_select(
    ideal: &IdealSpiral,
    geom: &ArrayGeometry,
    r_in: f64,
    r_out: f64,
    params: NoReuseParams,
) -> Result<ApertureMask> {
    check_radii(r_in, r_out)?;
    if !(params.sigma_d > 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma_d",
            value: params.sigma_d,
        });
    }
    if ideal.is_empty() {
        return Err(Error::EmptyMask);
    }
    let pitch = geom.pitch();
    let candidates = eligible(geom, r_out);

    struct Pair {
        score: f64,
        channel: usize,
        element: usize,
        point: usize,
    }
    let mut pairs = Vec::new();
    for (point, &p) in ideal.points.iter().enumerate() {
        for &element in &candidates {
            let d = design_distance(geom, element, p) / pitch;
            let score = selection_score(d, params.sigma_d);
            if score >= params.min_score {
                pairs.push(Pair {
                    score,
                    channel: geom.elements()[element].channel,
                    element,
                    point,
                });
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.channel.cmp(&b.channel))
            .then(a.element.cmp(&b.element))
            .then(a.point.cmp(&b.point))
    });

    let mut channel_used = alloc::vec![false; geom.n_channels()];
    let mut point_used = alloc::vec![false; ideal.len()];
    let mut chosen = Vec::new();
    for pair in pairs {
        if channel_used[pair.channel] || point_used[pair.point] {
            continue;
        }
        channel_used[pair.channel] = true;
        point_used[pair.point] = true;
        chosen.push(pair.element);
    }
    if chosen.is_empty() {
        return Err(Error::EmptyMask);
    }
    ApertureMask::from_ids(
        ApertureKind::SpiralNoReuse,
        geom,
        chosen,
        Partition::Radial { r_in, r_out },
    )
}

/// The DAS window and the three null subtraction windows over one mask. All
/// weight vectors are parallel to `mask.element_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApodizationSet {
    pub mask: ApertureMask,
    pub dc: f64,
    pub w_rect: Vec<f64>,
    pub w_zm: Vec<f64>,
    pub w_dc1: Vec<f64>,
    pub w_dc2: Vec<f64>,
}

/// Builds (rect, ZM, DC1, DC2). DC1 = ZM + dc, DC2 = -ZM + dc.
pub fn nsi_windows(mask: &ApertureMask, dc: f64) -> Result<ApodizationSet> {
    if !(dc > 0.0) || !dc.is_finite() {
        return Err(Error::InvalidParameter {
            name: "dc",
            value: dc,
        });
    }
    if mask.n_inner == 0 || mask.n_outer == 0 {
        return Err(Error::OneSidedAperture {
            n_inner: mask.n_inner,
            n_outer: mask.n_outer,
        });
    }
    let imbalance = mask.imbalance();
    if imbalance > IMBALANCE_LIMIT {
        return Err(Error::UnbalancedAperture {
            n_inner: mask.n_inner,
            n_outer: mask.n_outer,
            imbalance,
            limit: IMBALANCE_LIMIT,
        });
    }
    let w_zm = mask.zm_weights();
    Ok(ApodizationSet {
        mask: mask.clone(),
        dc,
        w_rect: alloc::vec![1.0; mask.len()],
        w_dc1: w_zm.iter().map(|w| w + dc).collect(),
        w_dc2: w_zm.iter().map(|w| -w + dc).collect(),
        w_zm,
    })
}

impl ApodizationSet {
    /// The same windows with the inner/outer sign convention reversed:
    /// ZM is negated and DC1/DC2 trade places.
    pub fn swapped(&self) -> ApodizationSet {
        let mut mask = self.mask.clone();
        for f in mask.inner.iter_mut() {
            *f = !*f;
        }
        core::mem::swap(&mut mask.n_inner, &mut mask.n_outer);
        ApodizationSet {
            mask,
            dc: self.dc,
            w_rect: self.w_rect.clone(),
            w_zm: self.w_zm.iter().map(|w| -w).collect(),
            w_dc1: self.w_dc2.clone(),
            w_dc2: self.w_dc1.clone(),
        }
    }

    pub fn window(&self, w: Window) -> ElementWeights {
        let values = match w {
            Window::Rect => &self.w_rect,
            Window::ZeroMean => &self.w_zm,
            Window::Dc1 => &self.w_dc1,
            Window::Dc2 => &self.w_dc2,
        };
        ElementWeights::from_pairs(
            self.mask.element_ids.iter().copied().zip(values.iter().copied()),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Rect,
    ZeroMean,
    Dc1,
    Dc2,
}

/// Sparse per-element weights, indexed by element id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ElementWeights {
    values: Vec<Option<f64>>,
}

impl ElementWeights {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut values = Vec::new();
        for (id, w) in pairs {
            if id >= values.len() {
                values.resize(id + 1, None);
            }
            values[id] = Some(w);
        }
        ElementWeights { values }
    }

    /// The same weight on every listed element.
    pub fn uniform(ids: &[usize], w: f64) -> Self {
        Self::from_pairs(ids.iter().map(|&id| (id, w)))
    }

    pub fn get(&self, id: usize) -> Option<f64> {
        self.values.get(id).copied().flatten()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, w)| w.map(|w| (i, w)))
    }

    pub fn scaled(&self, s: f64) -> Self {
        ElementWeights {
            values: self.values.iter().map(|w| w.map(|w| w * s)).collect(),
        }
    }
}

/// The three masks at the standard radii (`r_out` = 16 pitch, `r_in` =
/// 11.5 pitch, 256 ideal spiral points).
pub fn standard_mask(geom: &ArrayGeometry, kind: ApertureKind) -> Result<ApertureMask> {
    let p = geom.pitch();
    let (r_out, r_in) = (16.0 * p, 11.5 * p);
    match kind {
        ApertureKind::Circular => circular_mask(geom, r_out, r_in),
        ApertureKind::Spiral => quantize_to_grid(&fermat_spiral_ideal(256, r_out)?, geom, r_in, r_out),
        ApertureKind::SpiralNoReuse => no_reuse_select(
            &fermat_spiral_ideal(256, r_out)?,
            geom,
            r_in,
            r_out,
            NoReuseParams::default(),
        ),
        ApertureKind::Rectangular => rectangular_mask(geom, 22, 22),
    }
}
