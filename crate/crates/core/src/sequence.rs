//! Diverging-wave transmit sequences and volume-rate accounting.

use alloc::vec::Vec;

use crate::aperture::ApertureMask;
use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::math::{deg_to_rad, Vec3};

/// Distance of the virtual sources behind the array centre.
pub const DEFAULT_STANDOFF: f64 = 17.4e-3;
/// Steering step of the 3×3 angular grid.
pub const DEFAULT_TILT_DEG: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualSource {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub position: Vec3,
    pub standoff: f64,
}

impl VirtualSource {
    /// Source for a wave steered by (azimuth, elevation). Azimuth rotates
    /// about y, elevation about x; the source sits at `-standoff` along the
    /// unit steering direction.
    pub fn steered(azimuth_deg: f64, elevation_deg: f64, standoff: f64) -> Self {
        let (a, e) = (deg_to_rad(azimuth_deg), deg_to_rad(elevation_deg));
        let dir = Vec3::new(
            libm::sin(a) * libm::cos(e),
            libm::sin(e),
            libm::cos(a) * libm::cos(e),
        );
        VirtualSource {
            azimuth_deg,
            elevation_deg,
            position: dir * -standoff,
            standoff,
        }
    }

    /// Transmit delay to `p`, zero where the wavefront crosses the array
    /// centre.
    #[inline]
    pub fn transmit_delay(&self, p: Vec3, sound_speed: f64) -> f64 {
        (p.distance(self.position) - self.standoff) / sound_speed
    }
}

/// The nine sources of the 3×3 grid: (0,0) first, then (±t,0), (0,±t),
/// (±t,±t).
pub fn virtual_sources(standoff: f64, tilt_deg: f64) -> Result<Vec<VirtualSource>> {
    if !(standoff > 0.0) || !standoff.is_finite() {
        return Err(Error::InvalidParameter {
            name: "standoff",
            value: standoff,
        });
    }
    let t = tilt_deg;
    let pairs = [
        (0.0, 0.0),
        (t, 0.0),
        (-t, 0.0),
        (0.0, t),
        (0.0, -t),
        (t, t),
        (t, -t),
        (-t, t),
        (-t, -t),
    ];
    Ok(pairs
        .iter()
        .map(|&(a, e)| VirtualSource::steered(a, e, standoff))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TxEvent {
    pub event_index: usize,
    pub angle_index: usize,
    pub source: VirtualSource,
    /// `None` when the whole mask fires at once.
    pub tx_bank: Option<usize>,
    pub rx_bank: Option<usize>,
    pub tx_elements: Vec<usize>,
    pub rx_elements: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionPlan {
    pub events: Vec<TxEvent>,
    pub events_per_angle: usize,
    pub n_angles: usize,
    pub sources: Vec<VirtualSource>,
}

/// Expands a mask into TX/RX events.
///
/// Single-event kinds (spiral no-reuse) fire and receive on the whole mask
/// once per angle. Every other kind is multiplexed: per angle, each
/// populated bank transmits once for each populated receive bank (TX bank
/// outer loop, RX bank inner loop).
pub fn build_plan(
    mask: &ApertureMask,
    geom: &ArrayGeometry,
    sources: &[VirtualSource],
) -> Result<AcquisitionPlan> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut events = Vec::new();
    let events_per_angle;
    if mask.kind.is_single_event() {
        if let Some(c) = geom.channel_conflicts(&mask.element_ids)?.first() {
            return Err(Error::ChannelConflict {
                channel: c.channel,
                count: c.elements.len(),
            });
        }
        events_per_angle = 1;
        for (angle_index, source) in sources.iter().enumerate() {
            events.push(TxEvent {
                event_index: events.len(),
                angle_index,
                source: *source,
                tx_bank: None,
                rx_bank: None,
                tx_elements: mask.element_ids.clone(),
                rx_elements: mask.element_ids.clone(),
            });
        }
    } else {
        let mut per_bank: Vec<Vec<usize>> = alloc::vec![Vec::new(); geom.n_banks()];
        for &id in &mask.element_ids {
            per_bank[geom.element(id)?.bank].push(id);
        }
        let populated: Vec<usize> = (0..per_bank.len())
            .filter(|&b| !per_bank[b].is_empty())
            .collect();
        events_per_angle = populated.len() * populated.len();
        for (angle_index, source) in sources.iter().enumerate() {
            for &tx in &populated {
                for &rx in &populated {
                    events.push(TxEvent {
                        event_index: events.len(),
                        angle_index,
                        source: *source,
                        tx_bank: Some(tx),
                        rx_bank: Some(rx),
                        tx_elements: per_bank[tx].clone(),
                        rx_elements: per_bank[rx].clone(),
                    });
                }
            }
        }
    }
    Ok(AcquisitionPlan {
        events,
        events_per_angle,
        n_angles: sources.len(),
        sources: sources.to_vec(),
    })
}

/// Per-volume acquisition cost of a plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeAccounting {
    pub n_events: usize,
    pub event_duration: f64,
    pub max_volume_rate: f64,
    pub samples_per_event: usize,
    pub rf_bytes_per_volume: u64,
}

impl AcquisitionPlan {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Maximum volume rate `1 / (N·2·depth/c)`.
    pub fn volume_rate(&self, depth: f64, sound_speed: f64) -> Result<f64> {
        positive("depth", depth)?;
        positive("sound_speed", sound_speed)?;
        Ok(1.0 / (self.events.len() as f64 * 2.0 * depth / sound_speed))
    }

    /// Volume rate plus RF data size, with `ceil(2·depth/c·fs)` samples per
    /// received channel.
    pub fn accounting(
        &self,
        depth: f64,
        sound_speed: f64,
        sampling_rate: f64,
        bytes_per_sample: usize,
    ) -> Result<VolumeAccounting> {
        let rate = self.volume_rate(depth, sound_speed)?;
        positive("sampling_rate", sampling_rate)?;
        let event_duration = 2.0 * depth / sound_speed;
        let samples = libm::ceil(event_duration * sampling_rate - 1e-9) as usize;
        let channels: u64 = self.events.iter().map(|e| e.rx_elements.len() as u64).sum();
        Ok(VolumeAccounting {
            n_events: self.events.len(),
            event_duration,
            max_volume_rate: rate,
            samples_per_event: samples,
            rf_bytes_per_volume: channels * samples as u64 * bytes_per_sample as u64,
        })
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, value })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aperture::{standard_mask, ApertureKind};

    #[test]
    fn on_axis_source_sits_behind_centre() {
        let s = virtual_sources(DEFAULT_STANDOFF, DEFAULT_TILT_DEG).unwrap();
        assert_eq!(s.len(), 9);
        assert_eq!((s[0].azimuth_deg, s[0].elevation_deg), (0.0, 0.0));
        assert!((s[0].position - Vec3::new(0.0, 0.0, -17.4e-3)).norm() < 1e-15);
        for v in &s {
            assert!((v.position.norm() - DEFAULT_STANDOFF).abs() < 1e-15);
            assert!(v.position.z < 0.0);
        }
    }

    #[test]
    fn steered_source_offsets() {
        let s = VirtualSource::steered(5.0, 0.0, 17.4e-3);
        // direct trigonometry
        let a = 5.0_f64.to_radians();
        assert!((s.position.x + 17.4e-3 * a.sin()).abs() < 1e-15);
        assert!((s.position.x * 1e3 + 1.5165).abs() < 1e-3);
        assert!((s.position.z * 1e3 + 17.334).abs() < 1e-3);
        assert_eq!(s.position.y, 0.0);
    }

    #[test]
    fn zero_tilt_gives_coincident_sources() {
        let s = virtual_sources(DEFAULT_STANDOFF, 0.0).unwrap();
        assert!(s.iter().all(|v| v.position == s[0].position));
        assert!(virtual_sources(0.0, 5.0).is_err());
    }

    #[test]
    fn event_counts() {
        let g = ArrayGeometry::matrix_1024();
        let src = virtual_sources(DEFAULT_STANDOFF, DEFAULT_TILT_DEG).unwrap();
        let circ = build_plan(&standard_mask(&g, ApertureKind::Circular).unwrap(), &g, &src).unwrap();
        assert_eq!((circ.events_per_angle, circ.len()), (16, 144));
        let spiral = build_plan(&standard_mask(&g, ApertureKind::Spiral).unwrap(), &g, &src).unwrap();
        assert_eq!(spiral.len(), 144);
        let nr = build_plan(&standard_mask(&g, ApertureKind::SpiralNoReuse).unwrap(), &g, &src).unwrap();
        assert_eq!((nr.events_per_angle, nr.len()), (1, 9));
    }

    #[test]
    fn single_bank_mask_gives_one_event_per_angle() {
        let g = ArrayGeometry::matrix_1024();
        let p = g.pitch();
        let mut mask = crate::aperture::circular_mask(&g, 40.0 * p, 11.5 * p).unwrap();
        let bank0 = g.bank_elements(0);
        mask.inner = mask
            .element_ids
            .iter()
            .zip(&mask.inner)
            .filter(|(id, _)| bank0.contains(id))
            .map(|(_, &b)| b)
            .collect();
        mask.element_ids = bank0;
        let src = virtual_sources(DEFAULT_STANDOFF, DEFAULT_TILT_DEG).unwrap();
        let plan = build_plan(&mask, &g, &src).unwrap();
        assert_eq!(plan.events_per_angle, 1);
    }

    #[test]
    fn rx_sets_are_conflict_free_and_cover_mask_four_times() {
        let g = ArrayGeometry::matrix_1024();
        let mask = standard_mask(&g, ApertureKind::Circular).unwrap();
        let src = virtual_sources(DEFAULT_STANDOFF, DEFAULT_TILT_DEG).unwrap();
        let plan = build_plan(&mask, &g, &src).unwrap();
        let mut hits = alloc::vec![0usize; g.len()];
        for e in &plan.events {
            assert!(g.channel_conflicts(&e.rx_elements).unwrap().is_empty());
            assert!(g.channel_conflicts(&e.tx_elements).unwrap().is_empty());
            if e.angle_index == 0 {
                for &id in &e.rx_elements {
                    hits[id] += 1;
                }
            }
        }
        for (id, &h) in hits.iter().enumerate() {
            assert_eq!(h, if mask.contains(id) { 4 } else { 0 });
        }
    }

    #[test]
    fn conflicting_single_event_mask_is_rejected() {
        let g = ArrayGeometry::matrix_1024();
        let mut mask = standard_mask(&g, ApertureKind::Circular).unwrap();
        mask.kind = ApertureKind::SpiralNoReuse;
        let src = virtual_sources(DEFAULT_STANDOFF, DEFAULT_TILT_DEG).unwrap();
        assert!(matches!(build_plan(&mask, &g, &src), Err(Error::ChannelConflict { .. })));
    }

    #[test]
    fn unit_rate_round_trip() {
        let g = ArrayGeometry::matrix_1024();
        let mask = standard_mask(&g, ApertureKind::SpiralNoReuse).unwrap();
        let src = virtual_sources(DEFAULT_STANDOFF, 0.0).unwrap();
        let mut plan = build_plan(&mask, &g, &src).unwrap();
        plan.events.truncate(1);
        assert_eq!(plan.volume_rate(1540.0 / 2.0, 1540.0).unwrap(), 1.0);
        assert!(plan.volume_rate(0.0, 1540.0).is_err());
    }
}
