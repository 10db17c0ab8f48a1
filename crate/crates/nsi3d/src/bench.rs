//! Wall-clock comparison of DAS-only and NSI reconstruction on one dataset.

use std::time::Instant;

use log::info;
use nsi3d_core::aperture::{ApertureKind, Window};
use nsi3d_core::sim::make_point_phantom;

use crate::error::AppResult;
use crate::io::num;
use crate::scenario::Experiment;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub kind: ApertureKind,
    pub voxels: usize,
    pub repeats: usize,
    /// Shared channel preparation (analytic conversion, grouping).
    pub prep_s: f64,
    pub das_s: f64,
    pub nsi_s: f64,
}

impl BenchReport {
    pub fn ratio(&self) -> f64 {
        self.nsi_s / self.das_s
    }
}

/// Times DAS (rect window) against NSI (three windows plus the combine),
/// keeping the fastest of `repeats` runs. Both reuse one prepared
/// beamformer, so the ratio compares reconstruction work only.
pub fn bench(exp: &Experiment, repeats: usize) -> AppResult<BenchReport> {
    let repeats = repeats.max(1);
    let kind = exp.cfg.aperture.kinds()[0];
    let grid = exp.cfg.voxel_grid()?;
    let ap = exp.aperture(kind)?;
    let phantom = make_point_phantom(&exp.cfg.phantom.point_depths)?;
    let ds = exp.simulate(&ap, &phantom, &grid)?;

    let t = Instant::now();
    let bf = exp.beamformer(&ds)?;
    let prep_s = t.elapsed().as_secs_f64();

    let rect = ap.set.window(Window::Rect);
    let (mut das_s, mut nsi_s) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..repeats {
        let t = Instant::now();
        std::hint::black_box(bf.das_only(&rect, &grid)?);
        das_s = das_s.min(t.elapsed().as_secs_f64());
        let t = Instant::now();
        std::hint::black_box(bf.nsi_only(&ap.set, &grid)?);
        nsi_s = nsi_s.min(t.elapsed().as_secs_f64());
    }
    let report = BenchReport {
        kind,
        voxels: grid.len(),
        repeats,
        prep_s,
        das_s,
        nsi_s,
    };
    info!(
        "bench {}: prep {prep_s:.2} s, DAS {das_s:.2} s, NSI {nsi_s:.2} s, ratio {:.3}",
        kind.name(),
        report.ratio()
    );
    crate::io::write_csv(
        &exp.dir("bench").join("bench.csv"),
        &exp.meta,
        &["aperture", "voxels", "repeats", "prep_s", "das_s", "nsi_s", "ratio"],
        &[vec![
            kind.name().to_string(),
            report.voxels.to_string(),
            repeats.to_string(),
            num(prep_s),
            num(das_s),
            num(nsi_s),
            num(report.ratio()),
        ]],
    )?;
    Ok(report)
}
