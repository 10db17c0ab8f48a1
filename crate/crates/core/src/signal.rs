//! Transmit pulse model, FFT and analytic-signal helpers.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Gaussian-modulated cosine `exp(-t²/2σ²)·cos(2π f_c t)`.
///
/// σ is chosen so the amplitude spectrum is -6 dB at `f_c·(1 ± B/2)`, with
/// `B` the fractional bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub center_frequency: f64,
    pub fractional_bandwidth: f64,
    pub sampling_rate: f64,
    sigma_t: f64,
    // per-sample recurrence constants
    step: f64,
    rot: (f64, f64),
}

/// Envelope truncation, in standard deviations (-88 dB).
const SUPPORT_SIGMAS: f64 = 4.5;

impl Pulse {
    pub fn new(center_frequency: f64, fractional_bandwidth: f64, sampling_rate: f64) -> Result<Self> {
        for (name, v) in [
            ("center_frequency", center_frequency),
            ("fractional_bandwidth", fractional_bandwidth),
            ("sampling_rate", sampling_rate),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter { name, value: v });
            }
        }
        // amplitude spectrum exp(-(f-fc)²/2σf²) is one half at Δf = σf·sqrt(2 ln 2)
        let sigma_f = fractional_bandwidth * center_frequency / (2.0 * libm::sqrt(2.0 * core::f64::consts::LN_2));
        let sigma_t = 1.0 / (2.0 * PI * sigma_f);
        let dt = 1.0 / sampling_rate;
        Ok(Pulse {
            center_frequency,
            fractional_bandwidth,
            sampling_rate,
            sigma_t,
            step: libm::exp(-dt * dt / (sigma_t * sigma_t)),
            rot: libm::sincos(2.0 * PI * center_frequency * dt),
        })
    }

    /// 3 MHz, 70 % bandwidth, sampled at 4× the centre frequency.
    pub fn simulation_default() -> Self {
        Pulse::new(3.0e6, 0.70, 12.0e6).expect("valid defaults")
    }

    pub fn sigma_t(&self) -> f64 {
        self.sigma_t
    }

    /// Half-width of the non-zero part of the pulse.
    pub fn half_support(&self) -> f64 {
        SUPPORT_SIGMAS * self.sigma_t
    }

    /// -6 dB width of the envelope in time.
    pub fn envelope_fwhm(&self) -> f64 {
        2.0 * libm::sqrt(2.0 * core::f64::consts::LN_2) * self.sigma_t
    }

    /// Axial extent of the pulse echo, `c·FWHM/2`.
    pub fn axial_resolution(&self, sound_speed: f64) -> f64 {
        sound_speed * self.envelope_fwhm() / 2.0
    }

    pub fn wavelength(&self, sound_speed: f64) -> f64 {
        sound_speed / self.center_frequency
    }

    pub fn value(&self, t: f64) -> f64 {
        if libm::fabs(t) > self.half_support() {
            return 0.0;
        }
        libm::exp(-t * t / (2.0 * self.sigma_t * self.sigma_t))
            * libm::cos(2.0 * PI * self.center_frequency * t)
    }

    /// Adds `amplitude·p(t_k - delay)` into `out`, where sample `k` is at
    /// `t0 + k/fs`.
    ///
    /// Uses multiplicative recurrences for the Gaussian and the carrier, so
    /// a trace costs two exponentials and one sincos regardless of length.
    pub fn accumulate(&self, out: &mut [f64], t0: f64, delay: f64, amplitude: f64) {
        let dt = 1.0 / self.sampling_rate;
        let h = self.half_support();
        let first = libm::ceil((delay - h - t0) * self.sampling_rate).max(0.0);
        let last = libm::floor((delay + h - t0) * self.sampling_rate);
        if last < 0.0 || first >= out.len() as f64 || last < first {
            return;
        }
        let k0 = first as usize;
        let k1 = (last as usize).min(out.len() - 1);
        let s2 = 2.0 * self.sigma_t * self.sigma_t;
        let w = 2.0 * PI * self.center_frequency;

        let u0 = t0 + k0 as f64 * dt - delay;
        let mut g = amplitude * libm::exp(-u0 * u0 / s2);
        let mut ratio = libm::exp(-(2.0 * u0 * dt + dt * dt) / s2);
        let step = self.step;
        let (mut sn, mut cs) = libm::sincos(w * u0);
        let (rs, rc) = self.rot;
        for v in &mut out[k0..=k1] {
            *v += g * cs;
            g *= ratio;
            ratio *= step;
            let c = cs * rc - sn * rs;
            sn = sn * rc + cs * rs;
            cs = c;
        }
    }
}

/// In-place iterative radix-2 FFT of a fixed power-of-two size.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    twiddles: Vec<Complex64>,
}

impl Fft {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter {
                name: "fft_len",
                value: n as f64,
            });
        }
        let twiddles = (0..n / 2)
            .map(|k| {
                let (s, c) = libm::sincos(-2.0 * PI * k as f64 / n as f64);
                Complex64::new(c, s)
            })
            .collect();
        Ok(Fft { n, twiddles })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    /// Inverse transform including the 1/n scaling.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, true);
        let s = 1.0 / self.n as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        assert_eq!(data.len(), n, "buffer length must match the FFT size");
        let bits = n.trailing_zeros();
        if bits > 0 {
            for i in 0..n {
                let j = i.reverse_bits() >> (usize::BITS - bits);
                if j > i {
                    data.swap(i, j);
                }
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let mut t = self.twiddles[k * stride];
                    if inverse {
                        t = t.conj();
                    }
                    let a = data[start + k];
                    let b = data[start + k + half] * t;
                    data[start + k] = a + b;
                    data[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

/// Analytic-signal converter for traces of one length, with optional
/// band-limited upsampling.
///
/// The trace is zero-padded to a power of two at least twice its length,
/// negative frequencies are removed and positive ones doubled, and the
/// spectrum is zero-padded by `upsample` before the inverse transform. The
/// output has `len·upsample` samples at `fs·upsample`.
#[derive(Debug, Clone)]
pub struct AnalyticConverter {
    len: usize,
    upsample: usize,
    fwd: Fft,
    inv: Fft,
}

impl AnalyticConverter {
    pub fn new(len: usize, upsample: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidParameter {
                name: "trace_len",
                value: 0.0,
            });
        }
        if upsample == 0 || !upsample.is_power_of_two() {
            return Err(Error::InvalidParameter {
                name: "upsample",
                value: upsample as f64,
            });
        }
        let n = (2 * len).next_power_of_two();
        Ok(AnalyticConverter {
            len,
            upsample,
            fwd: Fft::new(n)?,
            inv: Fft::new(n * upsample)?,
        })
    }

    pub fn output_len(&self) -> usize {
        self.len * self.upsample
    }

    pub fn upsample(&self) -> usize {
        self.upsample
    }

    pub fn convert(&self, trace: &[f64]) -> Vec<Complex64> {
        assert_eq!(trace.len(), self.len);
        let n = self.fwd.len();
        let mut spec: Vec<Complex64> = trace.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        spec.resize(n, Complex64::new(0.0, 0.0));
        self.fwd.forward(&mut spec);

        let m = self.inv.len();
        let mut up = alloc::vec![Complex64::new(0.0, 0.0); m];
        let gain = self.upsample as f64;
        up[0] = spec[0] * gain;
        for k in 1..n / 2 {
            up[k] = spec[k] * (2.0 * gain);
        }
        up[n / 2] = spec[n / 2] * gain;
        self.inv.inverse(&mut up);
        up.truncate(self.output_len());
        up
    }
}

/// Analytic signal of a real trace at its own sampling rate.
pub fn analytic_signal(trace: &[f64]) -> Result<Vec<Complex64>> {
    Ok(AnalyticConverter::new(trace.len(), 1)?.convert(trace))
}
