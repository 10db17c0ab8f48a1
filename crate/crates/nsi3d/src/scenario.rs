//! Scenario runners. Each writes its artifacts under the output directory
//! and returns a report holding the numbers it wrote.

use std::path::PathBuf;

use log::{info, warn};
use nsi3d_core::aperture::{
    nsi_windows, standard_mask, ApertureKind, ApertureMask, ApodizationSet, Window, IMBALANCE_WARN,
};
use nsi3d_core::beamform::{
    log_compress, BeamformSettings, Beamformer, EnvelopeVolume, NsiVolumes, VolumeLabel, VoxelGrid,
};
use nsi3d_core::beampattern::{line_profiles, nsi_pattern, resolution_cell, BeamPattern2D, PatternPlane};
use nsi3d_core::geometry::{ArrayConfig, ArrayGeometry};
use nsi3d_core::metrics::{
    area_reduction, contrast, fwhm, profile_through_max, smer, Axis, BeamProfile, ContrastStats, Region, Smer,
};
use nsi3d_core::sequence::{build_plan, virtual_sources, AcquisitionPlan, VolumeAccounting};
use nsi3d_core::sim::{
    make_cyst_phantom, make_point_phantom, simulate_acquisition, CystPhantomSpec, Phantom, RfDataset, RfWindow,
    SimOptions,
};
use nsi3d_core::Vec3;

use crate::config::ExperimentConfig;
use crate::error::{AppError, AppResult};
use crate::io::{self, num, Meta, Plane};

/// Resolved configuration plus the derived objects every scenario needs.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub geom: ArrayGeometry,
    pub meta: Meta,
}

/// A mask with its apodizations and acquisition plan.
pub struct Aperture {
    pub kind: ApertureKind,
    pub mask: ApertureMask,
    pub set: ApodizationSet,
    pub plan: AcquisitionPlan,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> AppResult<Self> {
        cfg.validate()?;
        let geom = ArrayGeometry::build(&ArrayConfig {
            sound_speed: cfg.sequence.sound_speed,
            ..ArrayConfig::default()
        })?;
        let meta = Meta {
            config_hash: cfg.hash(),
            seed: cfg.seed,
        };
        Ok(Experiment { cfg, geom, meta })
    }

    pub fn dir(&self, scenario: &str) -> PathBuf {
        self.cfg.output_dir.join(scenario)
    }

    pub fn aperture(&self, kind: ApertureKind) -> AppResult<Aperture> {
        let mask = standard_mask(&self.geom, kind)?;
        if mask.imbalance() > IMBALANCE_WARN {
            warn!(
                "{}: inner/outer imbalance {:.3} ({} / {})",
                kind.name(),
                mask.imbalance(),
                mask.n_inner,
                mask.n_outer
            );
        }
        let set = nsi_windows(&mask, self.cfg.dc)?;
        let s = &self.cfg.sequence;
        let plan = build_plan(&mask, &self.geom, &virtual_sources(s.standoff, s.tilt_deg)?)?;
        Ok(Aperture { kind, mask, set, plan })
    }

    pub fn simulate(&self, ap: &Aperture, phantom: &Phantom, grid: &VoxelGrid) -> AppResult<RfDataset> {
        let pulse = self.cfg.pulse()?;
        let c = self.cfg.sequence.sound_speed;
        let window = RfWindow::covering(grid.origin, grid.max_corner(), &ap.plan, &self.geom, &pulse, c)?;
        let options = SimOptions {
            noise_std: self.cfg.phantom.noise_std,
            noise_seed: self.cfg.seed,
        };
        Ok(simulate_acquisition(&ap.plan, phantom, &self.geom, &pulse, window, c, options)?)
    }

    pub fn settings(&self) -> BeamformSettings {
        BeamformSettings {
            sound_speed: self.cfg.sequence.sound_speed,
            upsample: self.cfg.pulse.upsample,
            compounding: self.cfg.compounding.into(),
        }
    }

    pub fn beamformer(&self, ds: &RfDataset) -> AppResult<Beamformer> {
        Ok(Beamformer::new(ds, &self.geom, self.settings())?)
    }

    fn write_csv(&self, scenario: &str, name: &str, headers: &[&str], rows: &[Vec<String>]) -> AppResult<PathBuf> {
        let path = self.dir(scenario).join(name);
        io::write_csv(&path, &self.meta, headers, rows)?;
        Ok(path)
    }
}

fn mm(x: f64) -> String {
    num(x * 1e3)
}

// ---------------------------------------------------------------- design

#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub kind: ApertureKind,
    pub n_elements: usize,
    pub n_inner: usize,
    pub n_outer: usize,
    pub zm_sum: f64,
    pub imbalance: f64,
    pub events_per_angle: usize,
    pub n_events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignReport {
    pub rows: Vec<DesignRow>,
}

pub fn design(exp: &Experiment) -> AppResult<DesignReport> {
    const S: &str = "design";
    let g = &exp.geom;
    let rows: Vec<Vec<String>> = g
        .elements()
        .iter()
        .map(|e| {
            vec![
                e.id.to_string(),
                e.col.to_string(),
                e.active_row.to_string(),
                e.physical_row.to_string(),
                mm(e.position.x),
                mm(e.position.y),
                e.bank.to_string(),
                e.channel.to_string(),
            ]
        })
        .collect();
    exp.write_csv(
        S,
        "geometry.csv",
        &["id", "col", "active_row", "physical_row", "x_mm", "y_mm", "bank", "channel"],
        &rows,
    )?;

    let mut report = DesignReport { rows: Vec::new() };
    for kind in exp.cfg.aperture.kinds() {
        let ap = exp.aperture(kind)?;
        let name = kind.name();
        let m = &ap.mask;
        let s = &ap.set;
        let rows: Vec<Vec<String>> = m
            .element_ids
            .iter()
            .enumerate()
            .map(|(i, &id)| {
                let e = &g.elements()[id];
                vec![
                    id.to_string(),
                    e.col.to_string(),
                    e.physical_row.to_string(),
                    mm(e.position.x),
                    mm(e.position.y),
                    mm(e.radial_distance),
                    if m.inner[i] { "inner" } else { "outer" }.to_string(),
                    num(s.w_rect[i]),
                    num(s.w_zm[i]),
                    num(s.w_dc1[i]),
                    num(s.w_dc2[i]),
                ]
            })
            .collect();
        exp.write_csv(
            S,
            &format!("{name}_apodization.csv"),
            &["id", "col", "physical_row", "x_mm", "y_mm", "radius_mm", "region", "w_rect", "w_zm", "w_dc1", "w_dc2"],
            &rows,
        )?;

        let opt = |b: Option<usize>| b.map_or_else(|| "all".to_string(), |b| b.to_string());
        let rows: Vec<Vec<String>> = ap
            .plan
            .events
            .iter()
            .map(|e| {
                vec![
                    e.event_index.to_string(),
                    e.angle_index.to_string(),
                    num(e.source.azimuth_deg),
                    num(e.source.elevation_deg),
                    opt(e.tx_bank),
                    opt(e.rx_bank),
                    e.tx_elements.len().to_string(),
                    e.rx_elements.len().to_string(),
                ]
            })
            .collect();
        exp.write_csv(
            S,
            &format!("{name}_plan.csv"),
            &["event", "angle", "azimuth_deg", "elevation_deg", "tx_bank", "rx_bank", "n_tx", "n_rx"],
            &rows,
        )?;

        for (w, tag) in [
            (Window::Rect, "rect"),
            (Window::ZeroMean, "zm"),
            (Window::Dc1, "dc1"),
            (Window::Dc2, "dc2"),
        ] {
            let (wd, ht, px) = io::weight_raster(g, &s.window(w));
            io::write_pgm(&exp.dir(S).join(format!("{name}_{tag}.pgm")), wd, ht, 255, &px)?;
        }

        report.rows.push(DesignRow {
            kind,
            n_elements: m.len(),
            n_inner: m.n_inner,
            n_outer: m.n_outer,
            zm_sum: s.w_zm.iter().sum(),
            imbalance: m.imbalance(),
            events_per_angle: ap.plan.events_per_angle,
            n_events: ap.plan.len(),
        });
        info!("design {name}: {} elements ({} inner / {} outer)", m.len(), m.n_inner, m.n_outer);
    }
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.kind.name().to_string(),
                r.n_elements.to_string(),
                r.n_inner.to_string(),
                r.n_outer.to_string(),
                num(r.zm_sum),
                num(r.imbalance),
                r.events_per_angle.to_string(),
                r.n_events.to_string(),
            ]
        })
        .collect();
    exp.write_csv(
        S,
        "summary.csv",
        &["aperture", "elements", "inner", "outer", "zm_sum", "imbalance", "events_per_angle", "events"],
        &rows,
    )?;
    Ok(report)
}

// ----------------------------------------------------------------- rates

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub kind: ApertureKind,
    pub n_elements: usize,
    pub accounting: VolumeAccounting,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatesReport {
    pub depth: f64,
    pub rows: Vec<RateRow>,
}

pub fn rates(exp: &Experiment) -> AppResult<RatesReport> {
    let s = &exp.cfg.sequence;
    let mut rows = Vec::new();
    for kind in exp.cfg.aperture.kinds() {
        let ap = exp.aperture(kind)?;
        let accounting = ap
            .plan
            .accounting(s.depth, s.sound_speed, exp.cfg.pulse.sampling_rate, s.bytes_per_sample)?;
        rows.push(RateRow {
            kind,
            n_elements: ap.mask.len(),
            accounting,
        });
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let a = &r.accounting;
            vec![
                r.kind.name().to_string(),
                r.n_elements.to_string(),
                a.n_events.to_string(),
                num(a.event_duration * 1e6),
                num(a.max_volume_rate),
                a.samples_per_event.to_string(),
                a.rf_bytes_per_volume.to_string(),
                num(a.rf_bytes_per_volume as f64 / 1e6),
            ]
        })
        .collect();
    exp.write_csv(
        "rates",
        "rates.csv",
        &[
            "aperture",
            "elements",
            "events",
            "event_duration_us",
            "volume_rate_hz",
            "samples_per_channel",
            "rf_bytes_per_volume",
            "rf_mb_per_volume",
        ],
        &table,
    )?;
    Ok(RatesReport { depth: s.depth, rows })
}

// ---------------------------------------------------------------- points

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LobeMetrics {
    pub fwhm_az: f64,
    pub fwhm_el: f64,
    pub fwhm_axial: f64,
    pub smer_az: Smer,
    pub smer_el: Smer,
}

impl LobeMetrics {
    pub fn of(vol: &EnvelopeVolume) -> AppResult<Self> {
        let az = profile_through_max(vol, Axis::Azimuth)?;
        let el = profile_through_max(vol, Axis::Elevation)?;
        let ax = profile_through_max(vol, Axis::Axial)?;
        Ok(LobeMetrics {
            fwhm_az: fwhm(&az)?,
            fwhm_el: fwhm(&el)?,
            fwhm_axial: fwhm(&ax)?,
            smer_az: smer(&az)?,
            smer_el: smer(&el)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointRow {
    pub kind: ApertureKind,
    pub depth: f64,
    pub das: LobeMetrics,
    pub nsi: LobeMetrics,
}

impl PointRow {
    pub fn fwhm_ratio(&self) -> (f64, f64) {
        (self.nsi.fwhm_az / self.das.fwhm_az, self.nsi.fwhm_el / self.das.fwhm_el)
    }

    pub fn area_reduction(&self) -> f64 {
        area_reduction((self.das.fwhm_az, self.das.fwhm_el), (self.nsi.fwhm_az, self.nsi.fwhm_el))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointsReport {
    pub rows: Vec<PointRow>,
}

/// The z-slab `[lo, hi]` of a volume.
pub fn crop_z(vol: &EnvelopeVolume, lo: f64, hi: f64) -> AppResult<EnvelopeVolume> {
    let g = &vol.grid;
    let [nx, ny, nz] = g.dims;
    let zs = g.axis_coords(2);
    let keep: Vec<usize> = (0..nz).filter(|&i| zs[i] >= lo && zs[i] <= hi).collect();
    let (Some(&a), Some(&b)) = (keep.first(), keep.last()) else {
        return Err(AppError::Config(format!(
            "depth range [{lo}, {hi}] m is outside the voxel grid"
        )));
    };
    let n = b - a + 1;
    let grid = VoxelGrid::new(
        Vec3::new(g.origin.x, g.origin.y, zs[a]),
        g.spacing,
        [nx, ny, n],
    )?;
    let mut values = Vec::with_capacity(grid.len());
    for ix in 0..nx {
        for iy in 0..ny {
            let base = g.index(ix, iy, a);
            values.extend_from_slice(&vol.values[base..base + n]);
        }
    }
    Ok(EnvelopeVolume {
        grid,
        values,
        label: vol.label,
    })
}

/// z-slab half-height used to isolate each point target.
const POINT_SLAB: f64 = 5e-3;

fn write_slices(exp: &Experiment, scenario: &str, stem: &str, vol: &EnvelopeVolume, at: [usize; 3]) -> AppResult<()> {
    let dr = exp.cfg.dynamic_range_db;
    let db = log_compress(vol, dr)?;
    for (plane, idx) in [(Plane::Xz, at[1]), (Plane::Yz, at[0]), (Plane::Xy, at[2])] {
        let (w, h, px) = io::slice_pgm(&db, &vol.grid, plane, idx, dr);
        io::write_pgm(
            &exp.dir(scenario).join(format!("{stem}_{}.pgm", plane.name())),
            w,
            h,
            u16::MAX,
            &px,
        )?;
    }
    Ok(())
}

fn dump_volumes(exp: &Experiment, scenario: &str, name: &str, v: &NsiVolumes, at: [usize; 3]) -> AppResult<()> {
    for vol in [&v.das, &v.nsi] {
        let tag = match vol.label {
            VolumeLabel::Das => "das",
            _ => "nsi",
        };
        let stem = format!("{name}_{tag}");
        io::write_volume(&exp.dir(scenario).join(&stem), vol, &exp.meta, exp.cfg.dynamic_range_db)?;
        write_slices(exp, scenario, &stem, vol, at)?;
    }
    Ok(())
}

fn profile_rows(depth: f64, das: &BeamProfile, nsi: &BeamProfile, out: &mut Vec<Vec<String>>) {
    let db = |a: f64| num(nsi3d_core::math::db20(a.max(1e-12)));
    for i in 0..das.coords.len() {
        out.push(vec![
            mm(depth),
            das.axis.name().to_string(),
            mm(das.coords[i]),
            num(das.amplitudes[i]),
            num(nsi.amplitudes[i]),
            db(das.amplitudes[i]),
            db(nsi.amplitudes[i]),
        ]);
    }
}

fn warn_clamped(kind: ApertureKind, depth: f64, label: &str, m: &LobeMetrics) {
    for (axis, s) in [("azimuth", &m.smer_az), ("elevation", &m.smer_el)] {
        if s.clamped {
            warn!(
                "{} {label} at {:.1} mm: {axis} SMER bound clamped to the profile end",
                kind.name(),
                depth * 1e3
            );
        }
    }
}

pub fn points(exp: &Experiment, dump_rf: bool) -> AppResult<PointsReport> {
    const S: &str = "points";
    let grid = exp.cfg.voxel_grid()?;
    let depths = exp.cfg.phantom.point_depths.clone();
    let phantom = make_point_phantom(&depths)?;
    let mut report = PointsReport { rows: Vec::new() };
    for kind in exp.cfg.aperture.kinds() {
        let ap = exp.aperture(kind)?;
        let name = kind.name();
        let ds = exp.simulate(&ap, &phantom, &grid)?;
        if dump_rf {
            io::write_rf(&exp.dir(S).join(format!("{name}_rf")), &ds, &exp.meta)?;
        }
        let v = exp.beamformer(&ds)?.nsi(&ap.set, &grid)?;
        let peak = v.das.argmax().ok_or(nsi3d_core::Error::ZeroInput("points"))?;
        dump_volumes(exp, S, name, &v, grid.unravel(peak))?;

        let mut profiles = Vec::new();
        for &d in &depths {
            let das = crop_z(&v.das, d - POINT_SLAB, d + POINT_SLAB)?;
            let nsi = crop_z(&v.nsi, d - POINT_SLAB, d + POINT_SLAB)?;
            let row = PointRow {
                kind,
                depth: d,
                das: LobeMetrics::of(&das)?,
                nsi: LobeMetrics::of(&nsi)?,
            };
            warn_clamped(kind, d, "DAS", &row.das);
            warn_clamped(kind, d, "NSI", &row.nsi);
            for axis in [Axis::Azimuth, Axis::Elevation] {
                profile_rows(
                    d,
                    &profile_through_max(&das, axis)?,
                    &profile_through_max(&nsi, axis)?,
                    &mut profiles,
                );
            }
            let (ra, re) = row.fwhm_ratio();
            info!(
                "points {name} {:.1} mm: FWHM ratio az {ra:.3} el {re:.3}, area reduction {:.1}%",
                d * 1e3,
                100.0 * row.area_reduction()
            );
            report.rows.push(row);
        }
        exp.write_csv(
            S,
            &format!("{name}_profiles.csv"),
            &["depth_mm", "axis", "coord_mm", "das", "nsi", "das_db", "nsi_db"],
            &profiles,
        )?;
    }

    let mut table = Vec::new();
    for r in &report.rows {
        for (label, m) in [("DAS", &r.das), ("NSI", &r.nsi)] {
            table.push(vec![
                r.kind.name().to_string(),
                mm(r.depth),
                label.to_string(),
                mm(m.fwhm_az),
                mm(m.fwhm_el),
                mm(m.fwhm_axial),
                num(m.smer_az.db),
                num(m.smer_el.db),
                (m.smer_az.clamped || m.smer_el.clamped).to_string(),
            ]);
        }
    }
    exp.write_csv(
        S,
        "metrics.csv",
        &[
            "aperture",
            "depth_mm",
            "method",
            "fwhm_az_mm",
            "fwhm_el_mm",
            "fwhm_axial_mm",
            "smer_az_db",
            "smer_el_db",
            "smer_clamped",
        ],
        &table,
    )?;
    let summary: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let (ra, re) = r.fwhm_ratio();
            vec![
                r.kind.name().to_string(),
                mm(r.depth),
                num(ra),
                num(re),
                num(r.area_reduction()),
                num(r.nsi.smer_az.db - r.das.smer_az.db),
                num(r.nsi.smer_el.db - r.das.smer_el.db),
            ]
        })
        .collect();
    exp.write_csv(
        S,
        "summary.csv",
        &[
            "aperture",
            "depth_mm",
            "fwhm_ratio_az",
            "fwhm_ratio_el",
            "area_reduction",
            "smer_delta_az_db",
            "smer_delta_el_db",
        ],
        &summary,
    )?;
    Ok(report)
}

// ------------------------------------------------------------------ cyst

#[derive(Debug, Clone, PartialEq)]
pub struct CystRow {
    pub kind: ApertureKind,
    pub n_scatterers: usize,
    pub das: ContrastStats,
    pub nsi: ContrastStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CystReport {
    pub cell_volume: f64,
    pub rows: Vec<CystRow>,
}

/// Speckle cell of the circular DAS beam at the cyst depth.
pub fn speckle_cell_volume(exp: &Experiment) -> AppResult<f64> {
    let mask = standard_mask(&exp.geom, ApertureKind::Circular)?;
    let set = nsi_windows(&mask, exp.cfg.dc)?;
    let cell = resolution_cell(&set.window(Window::Rect), &exp.geom, &exp.cfg.pulse()?, exp.cfg.cyst_center().z)?;
    info!(
        "speckle cell {:.3} × {:.3} × {:.3} mm",
        cell.axial * 1e3,
        cell.azimuth * 1e3,
        cell.elevation * 1e3
    );
    Ok(cell.volume())
}

pub fn cyst_spec(exp: &Experiment, cell_volume: f64) -> CystPhantomSpec {
    let p = &exp.cfg.phantom;
    let v = |a: [f64; 3]| Vec3::new(a[0], a[1], a[2]);
    CystPhantomSpec {
        box_center: v(p.box_center),
        box_size: v(p.box_size),
        cyst_center: v(p.cyst_center),
        cyst_diameter: p.cyst_diameter,
        scatterers_per_cell: p.scatterers_per_cell,
        cell_volume,
        inside_amp_ratio: p.inside_amp_ratio,
        seed: exp.cfg.seed,
    }
}

fn nearest_index(grid: &VoxelGrid, p: Vec3) -> [usize; 3] {
    let f = |axis: usize, v: f64| {
        let (o, s) = match axis {
            0 => (grid.origin.x, grid.spacing.x),
            1 => (grid.origin.y, grid.spacing.y),
            _ => (grid.origin.z, grid.spacing.z),
        };
        (((v - o) / s).round().max(0.0) as usize).min(grid.dims[axis] - 1)
    };
    [f(0, p.x), f(1, p.y), f(2, p.z)]
}

pub fn cyst(exp: &Experiment, dump_rf: bool) -> AppResult<CystReport> {
    const S: &str = "cyst";
    let grid = exp.cfg.voxel_grid()?;
    let cell_volume = speckle_cell_volume(exp)?;
    let spec = cyst_spec(exp, cell_volume);
    let phantom = make_cyst_phantom(&spec)?;
    info!("cyst phantom: {} scatterers", phantom.len());
    let (inside, outside) = Region::cyst_pair(spec.cyst_center, spec.cyst_diameter / 2.0);
    let at = nearest_index(&grid, spec.cyst_center);
    let mut report = CystReport {
        cell_volume,
        rows: Vec::new(),
    };
    for kind in exp.cfg.aperture.kinds() {
        let ap = exp.aperture(kind)?;
        let name = kind.name();
        let ds = exp.simulate(&ap, &phantom, &grid)?;
        if dump_rf {
            io::write_rf(&exp.dir(S).join(format!("{name}_rf")), &ds, &exp.meta)?;
        }
        let v = exp.beamformer(&ds)?.nsi(&ap.set, &grid)?;
        dump_volumes(exp, S, name, &v, at)?;
        let row = CystRow {
            kind,
            n_scatterers: phantom.len(),
            das: contrast(&v.das, &inside, &outside)?,
            nsi: contrast(&v.nsi, &inside, &outside)?,
        };
        info!(
            "cyst {name}: CR {:.3} -> {:.3}, CNR {:.3} -> {:.3}",
            row.das.cr, row.nsi.cr, row.das.cnr, row.nsi.cnr
        );
        report.rows.push(row);
    }
    let mut table = Vec::new();
    for r in &report.rows {
        for (label, c) in [("DAS", &r.das), ("NSI", &r.nsi)] {
            table.push(vec![
                r.kind.name().to_string(),
                label.to_string(),
                num(c.cr),
                num(c.cnr),
                num(c.mu_i),
                num(c.mu_o),
                num(c.sigma_i),
                num(c.sigma_o),
                c.n_i.to_string(),
                c.n_o.to_string(),
                r.n_scatterers.to_string(),
            ]);
        }
    }
    exp.write_csv(
        S,
        "metrics.csv",
        &[
            "aperture",
            "method",
            "cr",
            "cnr",
            "mu_inside",
            "mu_outside",
            "sigma_inside",
            "sigma_outside",
            "n_inside",
            "n_outside",
            "scatterers",
        ],
        &table,
    )?;
    Ok(report)
}

// ----------------------------------------------------------- beampattern

#[derive(Debug, Clone, PartialEq)]
pub struct PatternRow {
    pub kind: ApertureKind,
    pub das_fwhm: (f64, f64),
    pub nsi_fwhm: (f64, f64),
    pub das_smer: (f64, f64),
    pub nsi_smer: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeampatternReport {
    pub depth: f64,
    pub rows: Vec<PatternRow>,
}

/// Samples of the dense 1-D cuts used for widths.
const PATTERN_LINE_SAMPLES: usize = 2401;

fn pattern_pgm(p: &BeamPattern2D, dr: f64) -> (usize, usize, Vec<u16>) {
    let peak = p.peak();
    let db = if peak > 0.0 {
        p.db(peak, -dr)
    } else {
        vec![-dr; p.values.len()]
    };
    let (nx, ny) = (p.xs.len(), p.ys.len());
    let mut px = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            px.push((((db[ix * ny + iy] + dr) / dr).clamp(0.0, 1.0) * 65535.0).round() as u16);
        }
    }
    (nx, ny, px)
}

pub fn beampattern(exp: &Experiment) -> AppResult<BeampatternReport> {
    const S: &str = "beampattern";
    let b = &exp.cfg.beampattern;
    let half = b.depth * b.sweep_deg.to_radians().tan();
    let plane = PatternPlane {
        depth: b.depth,
        half_width: half,
        n: b.samples,
    };
    let dr = exp.cfg.dynamic_range_db;
    let mut report = BeampatternReport {
        depth: b.depth,
        rows: Vec::new(),
    };
    for kind in exp.cfg.aperture.kinds() {
        let ap = exp.aperture(kind)?;
        let name = kind.name();
        let p = nsi_pattern(&ap.set, &exp.geom, plane)?;
        let pats = [(&p.rect, "rect"), (&p.zm, "zm"), (&p.dc1, "dc1"), (&p.dc2, "dc2"), (&p.nsi, "nsi")];
        let mags: Vec<Vec<f64>> = pats.iter().map(|(q, _)| q.magnitudes()).collect();
        let (nx, ny) = (p.rect.xs.len(), p.rect.ys.len());
        let mut rows = Vec::with_capacity(nx * ny);
        for ix in 0..nx {
            for iy in 0..ny {
                let k = ix * ny + iy;
                let mut r = vec![mm(p.rect.xs[ix]), mm(p.rect.ys[iy])];
                r.extend(mags.iter().map(|m| num(m[k])));
                rows.push(r);
            }
        }
        exp.write_csv(
            S,
            &format!("{name}_grid.csv"),
            &["x_mm", "y_mm", "rect", "zm", "dc1", "dc2", "nsi"],
            &rows,
        )?;
        for (q, tag) in pats {
            let (w, h, px) = pattern_pgm(q, dr);
            io::write_pgm(&exp.dir(S).join(format!("{name}_{tag}.pgm")), w, h, u16::MAX, &px)?;
        }

        let mut widths = [(0.0, 0.0); 2];
        let mut smers = [(0.0, 0.0); 2];
        for (i, axis) in [Axis::Azimuth, Axis::Elevation].into_iter().enumerate() {
            let (d, n) = line_profiles(&ap.set, &exp.geom, b.depth, axis, half, PATTERN_LINE_SAMPLES)?;
            widths[i] = (fwhm(&d)?, fwhm(&n)?);
            smers[i] = (smer(&d)?.db, smer(&n)?.db);
        }
        let row = PatternRow {
            kind,
            das_fwhm: (widths[0].0, widths[1].0),
            nsi_fwhm: (widths[0].1, widths[1].1),
            das_smer: (smers[0].0, smers[1].0),
            nsi_smer: (smers[0].1, smers[1].1),
        };
        info!(
            "beampattern {name}: width ratio az {:.3} el {:.3}",
            row.nsi_fwhm.0 / row.das_fwhm.0,
            row.nsi_fwhm.1 / row.das_fwhm.1
        );
        report.rows.push(row);
    }
    let table: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.kind.name().to_string(),
                mm(report.depth),
                mm(r.das_fwhm.0),
                mm(r.das_fwhm.1),
                mm(r.nsi_fwhm.0),
                mm(r.nsi_fwhm.1),
                num(r.nsi_fwhm.0 / r.das_fwhm.0),
                num(r.nsi_fwhm.1 / r.das_fwhm.1),
                num(r.das_smer.0),
                num(r.das_smer.1),
                num(r.nsi_smer.0),
                num(r.nsi_smer.1),
            ]
        })
        .collect();
    exp.write_csv(
        S,
        "summary.csv",
        &[
            "aperture",
            "depth_mm",
            "das_fwhm_az_mm",
            "das_fwhm_el_mm",
            "nsi_fwhm_az_mm",
            "nsi_fwhm_el_mm",
            "ratio_az",
            "ratio_el",
            "das_smer_az_db",
            "das_smer_el_db",
            "nsi_smer_az_db",
            "nsi_smer_el_db",
        ],
        &table,
    )?;
    Ok(report)
}

// --------------------------------------------------------------- metrics

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeMetrics {
    pub label: VolumeLabel,
    pub lobes: LobeMetrics,
    pub contrast: Option<ContrastStats>,
}

/// Recomputes metrics from a dumped volume; contrast uses the configured
/// cyst geometry.
pub fn volume_metrics(exp: &Experiment, header: &std::path::Path, with_cyst: bool) -> AppResult<VolumeMetrics> {
    let (h, vol) = io::read_volume(header)?;
    let lobes = LobeMetrics::of(&vol)?;
    let contrast = if with_cyst {
        let (i, o) = Region::cyst_pair(exp.cfg.cyst_center(), exp.cfg.phantom.cyst_diameter / 2.0);
        Some(contrast(&vol, &i, &o)?)
    } else {
        None
    };
    let mut headers = vec![
        "label",
        "fwhm_az_mm",
        "fwhm_el_mm",
        "fwhm_axial_mm",
        "smer_az_db",
        "smer_el_db",
        "smer_clamped",
    ];
    let mut row = vec![
        vol.label.name().to_string(),
        mm(lobes.fwhm_az),
        mm(lobes.fwhm_el),
        mm(lobes.fwhm_axial),
        num(lobes.smer_az.db),
        num(lobes.smer_el.db),
        (lobes.smer_az.clamped || lobes.smer_el.clamped).to_string(),
    ];
    if let Some(c) = &contrast {
        headers.extend(["cr", "cnr"]);
        row.extend([num(c.cr), num(c.cnr)]);
    }
    let meta = Meta {
        config_hash: h.config_hash,
        seed: h.seed,
    };
    let stem = header.file_stem().map_or_else(|| "volume".into(), |s| s.to_string_lossy().into_owned());
    io::write_csv(&exp.dir("metrics").join(format!("{stem}.csv")), &meta, &headers, &[row])?;
    Ok(VolumeMetrics {
        label: vol.label,
        lobes,
        contrast,
    })
}
