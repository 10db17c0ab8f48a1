//! Point-scatterer phantoms and a diverging-wave RF simulator.
//!
//! The echo of scatterer `s` on receive element `e` arrives at
//! `τ = (|s − v| − standoff)/c + |s − e|/c` for virtual source `v`, with
//! spherical spreading `1/(|s − v|·|s − e|)`. There is no element impulse
//! response or directivity, and transmit apodization is ignored, so events
//! that differ only in their transmit bank produce identical traces.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::math::Vec3;
use crate::sequence::{AcquisitionPlan, TxEvent, VirtualSource};
use crate::signal::Pulse;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub position: Vec3,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Phantom {
    pub scatterers: Vec<Scatterer>,
    pub rng_seed: Option<u64>,
}

impl Phantom {
    pub fn len(&self) -> usize {
        self.scatterers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scatterers.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Phantom {
        Phantom {
            scatterers: self
                .scatterers
                .iter()
                .map(|p| Scatterer {
                    position: p.position,
                    amplitude: p.amplitude * s,
                })
                .collect(),
            rng_seed: self.rng_seed,
        }
    }

    /// Both scatterer sets, `self` first.
    pub fn merged(&self, other: &Phantom) -> Phantom {
        let mut scatterers = self.scatterers.clone();
        scatterers.extend_from_slice(&other.scatterers);
        Phantom {
            scatterers,
            rng_seed: self.rng_seed,
        }
    }

    fn validate(&self) -> Result<()> {
        for (index, s) in self.scatterers.iter().enumerate() {
            if !s.position.is_finite() || !(s.position.z > 0.0) {
                return Err(Error::ScattererBehindArray {
                    index,
                    z: s.position.z,
                });
            }
        }
        Ok(())
    }
}

/// Unit scatterers on the probe axis.
pub fn make_point_phantom(depths: &[f64]) -> Result<Phantom> {
    let scatterers = depths
        .iter()
        .enumerate()
        .map(|(index, &z)| {
            if z > 0.0 && z.is_finite() {
                Ok(Scatterer {
                    position: Vec3::new(0.0, 0.0, z),
                    amplitude: 1.0,
                })
            } else {
                Err(Error::ScattererBehindArray { index, z })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Phantom {
        scatterers,
        rng_seed: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CystPhantomSpec {
    pub box_center: Vec3,
    /// Full extent along x, y, z.
    pub box_size: Vec3,
    pub cyst_center: Vec3,
    pub cyst_diameter: f64,
    pub scatterers_per_cell: f64,
    /// Resolution cell volume used to turn the density into a count (m³).
    pub cell_volume: f64,
    /// Amplitude scale applied inside the cyst.
    pub inside_amp_ratio: f64,
    pub seed: u64,
}

impl CystPhantomSpec {
    /// 40×40×30 mm box at 40 mm depth with a 10 mm cyst at one fifth of the
    /// background amplitude.
    pub fn standard(cell_volume: f64, seed: u64) -> Self {
        CystPhantomSpec {
            box_center: Vec3::new(0.0, 0.0, 40e-3),
            box_size: Vec3::new(40e-3, 40e-3, 30e-3),
            cyst_center: Vec3::new(0.0, 0.0, 40e-3),
            cyst_diameter: 10e-3,
            scatterers_per_cell: 20.0,
            cell_volume,
            inside_amp_ratio: 0.2,
            seed,
        }
    }

    pub fn scatterer_count(&self) -> usize {
        let v = self.box_size.x * self.box_size.y * self.box_size.z;
        libm::round(self.scatterers_per_cell * v / self.cell_volume) as usize
    }
}

/// Uniformly placed, normally distributed scatterers in a box, scaled by
/// `inside_amp_ratio` within the cyst sphere. Deterministic per seed.
pub fn make_cyst_phantom(spec: &CystPhantomSpec) -> Result<Phantom> {
    for (name, v) in [
        ("scatterers_per_cell", spec.scatterers_per_cell),
        ("cell_volume", spec.cell_volume),
        ("cyst_diameter", spec.cyst_diameter),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter { name, value: v });
        }
    }
    let lo = spec.box_center - spec.box_size * 0.5;
    if !(lo.z > 0.0) {
        return Err(Error::ScattererBehindArray { index: 0, z: lo.z });
    }
    let r = spec.cyst_diameter / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.scatterer_count();
    let mut scatterers = Vec::with_capacity(n);
    for _ in 0..n {
        let u: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let position = Vec3::new(
            lo.x + u[0] * spec.box_size.x,
            lo.y + u[1] * spec.box_size.y,
            lo.z + u[2] * spec.box_size.z,
        );
        let mut amplitude: f64 = rng.sample(StandardNormal);
        if position.distance(spec.cyst_center) <= r {
            amplitude *= spec.inside_amp_ratio;
        }
        scatterers.push(Scatterer {
            position,
            amplitude,
        });
    }
    Ok(Phantom {
        scatterers,
        rng_seed: Some(spec.seed),
    })
}

/// Receive time window shared by every channel of an event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfWindow {
    pub t0: f64,
    pub n_samples: usize,
}

impl RfWindow {
    /// A window holding every echo from the axis-aligned box `[lo, hi]` for
    /// all events of `plan`, padded by the pulse half-support.
    pub fn covering(
        lo: Vec3,
        hi: Vec3,
        plan: &AcquisitionPlan,
        geom: &ArrayGeometry,
        pulse: &Pulse,
        sound_speed: f64,
    ) -> Result<RfWindow> {
        let corners: Vec<Vec3> = (0..8)
            .map(|i| {
                Vec3::new(
                    if i & 1 == 0 { lo.x } else { hi.x },
                    if i & 2 == 0 { lo.y } else { hi.y },
                    if i & 4 == 0 { lo.z } else { hi.z },
                )
            })
            .collect();
        let nearest = |p: Vec3| {
            Vec3::new(p.x.clamp(lo.x, hi.x), p.y.clamp(lo.y, hi.y), p.z.clamp(lo.z, hi.z)).distance(p)
        };
        let farthest = |p: Vec3| corners.iter().map(|c| c.distance(p)).fold(0.0, f64::max);
        let (mut t_min, mut t_max) = (f64::INFINITY, 0.0_f64);
        for ev in &plan.events {
            let v = ev.source.position;
            let tx_lo = (nearest(v) - ev.source.standoff) / sound_speed;
            let tx_hi = (farthest(v) - ev.source.standoff) / sound_speed;
            for &id in &ev.rx_elements {
                let e = geom.element(id)?.position;
                t_min = t_min.min(tx_lo + nearest(e) / sound_speed);
                t_max = t_max.max(tx_hi + farthest(e) / sound_speed);
            }
        }
        if !t_min.is_finite() {
            return Err(Error::EmptyMask);
        }
        let h = pulse.half_support();
        let t0 = t_min - h;
        let n = libm::ceil((t_max + h - t0) * pulse.sampling_rate) as usize + 2;
        Ok(RfWindow { t0, n_samples: n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimOptions {
    /// Standard deviation of additive white noise (0 disables).
    pub noise_std: f64,
    pub noise_seed: u64,
}

/// RF of one event: channel-major `rx_elements.len() × n_samples`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRf {
    pub event_index: usize,
    pub angle_index: usize,
    pub source: VirtualSource,
    pub rx_elements: Vec<usize>,
    pub t0: f64,
    pub n_samples: usize,
    pub data: Vec<f64>,
}

impl EventRf {
    pub fn channel(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn n_channels(&self) -> usize {
        self.rx_elements.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfDataset {
    pub sampling_rate: f64,
    pub sound_speed: f64,
    pub events: Vec<EventRf>,
}

impl RfDataset {
    pub fn scaled(&self, s: f64) -> RfDataset {
        let mut out = self.clone();
        for ev in &mut out.events {
            for v in &mut ev.data {
                *v *= s;
            }
        }
        out
    }
}

/// Per-scatterer transmit leg for one source: position, transmit time and
/// amplitude over the transmit path length.
fn transmit_legs(source: &VirtualSource, phantom: &Phantom, sound_speed: f64) -> Vec<(Vec3, f64, f64)> {
    phantom
        .scatterers
        .iter()
        .map(|s| {
            let d_tx = s.position.distance(source.position);
            (s.position, (d_tx - source.standoff) / sound_speed, s.amplitude / d_tx)
        })
        .collect()
}

fn trace_for(element: Vec3, legs: &[(Vec3, f64, f64)], pulse: &Pulse, window: RfWindow, sound_speed: f64, out: &mut [f64]) {
    for &(p, t_tx, a) in legs {
        let d_rx = p.distance(element);
        pulse.accumulate(out, window.t0, t_tx + d_rx / sound_speed, a / d_rx);
    }
}

/// Channel × sample matrix for one event, summing scatterers in index order.
pub fn simulate_rf(
    event: &TxEvent,
    phantom: &Phantom,
    geom: &ArrayGeometry,
    pulse: &Pulse,
    window: RfWindow,
    sound_speed: f64,
) -> Result<Vec<f64>> {
    phantom.validate()?;
    let n = window.n_samples;
    let mut data = alloc::vec![0.0; event.rx_elements.len() * n];
    let legs = transmit_legs(&event.source, phantom, sound_speed);
    for (i, &id) in event.rx_elements.iter().enumerate() {
        let e = geom.element(id)?.position;
        trace_for(e, &legs, pulse, window, sound_speed, &mut data[i * n..(i + 1) * n]);
    }
    Ok(data)
}

/// Simulates every event of a plan.
///
/// Traces depend only on (source, receive element), so each is computed
/// once per angle and copied into every event that receives on it; the
/// result equals calling [`simulate_rf`] per event. Noise, when enabled, is
/// drawn independently per event.
pub fn simulate_acquisition(
    plan: &AcquisitionPlan,
    phantom: &Phantom,
    geom: &ArrayGeometry,
    pulse: &Pulse,
    window: RfWindow,
    sound_speed: f64,
    options: SimOptions,
) -> Result<RfDataset> {
    phantom.validate()?;
    let n = window.n_samples;
    let mut events = Vec::with_capacity(plan.len());
    let mut noise_rng = ChaCha8Rng::seed_from_u64(options.noise_seed);

    for angle in 0..plan.n_angles {
        let evs: Vec<&TxEvent> = plan.events.iter().filter(|e| e.angle_index == angle).collect();
        let Some(first) = evs.first() else { continue };
        let source = first.source;
        let mut union: Vec<usize> = evs.iter().flat_map(|e| e.rx_elements.iter().copied()).collect();
        union.sort_unstable();
        union.dedup();
        let positions = union
            .iter()
            .map(|&id| geom.element(id).map(|e| e.position))
            .collect::<Result<Vec<_>>>()?;

        let legs = transmit_legs(&source, phantom, sound_speed);
        let compute = |p: &Vec3| {
            let mut tr = alloc::vec![0.0; n];
            trace_for(*p, &legs, pulse, window, sound_speed, &mut tr);
            tr
        };
        #[cfg(feature = "parallel")]
        let traces: Vec<Vec<f64>> = {
            use rayon::prelude::*;
            positions.par_iter().map(compute).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let traces: Vec<Vec<f64>> = positions.iter().map(compute).collect();

        for ev in evs {
            let mut data = Vec::with_capacity(ev.rx_elements.len() * n);
            for id in &ev.rx_elements {
                let k = union.binary_search(id).expect("element collected above");
                data.extend_from_slice(&traces[k]);
            }
            if options.noise_std > 0.0 {
                for v in &mut data {
                    let z: f64 = noise_rng.sample(StandardNormal);
                    *v += options.noise_std * z;
                }
            }
            events.push(EventRf {
                event_index: ev.event_index,
                angle_index: ev.angle_index,
                source: ev.source,
                rx_elements: ev.rx_elements.clone(),
                t0: window.t0,
                n_samples: n,
                data,
            });
        }
    }
    events.sort_by_key(|e| e.event_index);
    Ok(RfDataset {
        sampling_rate: pulse.sampling_rate,
        sound_speed,
        events,
    })
}
