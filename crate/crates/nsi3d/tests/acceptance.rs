//! End-to-end acceptance run on the desk preset. Prints one line per
//! criterion and fails if any criterion fails.

use std::time::Instant;

use nsi3d::bench::bench;
use nsi3d::config::{ApertureChoice, ExperimentConfig, Preset};
use nsi3d::core::aperture::{circular_mask, nsi_windows, standard_mask, ApertureKind, Window};
use nsi3d::core::beamform::{log_compress, BeamformSettings, Beamformer, VoxelGrid};
use nsi3d::core::beampattern::cw_response;
use nsi3d::core::geometry::ArrayGeometry;
use nsi3d::core::metrics::{fwhm, Axis, BeamProfile};
use nsi3d::core::sequence::{build_plan, virtual_sources, DEFAULT_STANDOFF, DEFAULT_TILT_DEG};
use nsi3d::core::signal::Pulse;
use nsi3d::core::sim::{make_point_phantom, simulate_acquisition, Phantom, RfWindow, Scatterer, SimOptions};
use nsi3d::core::Vec3;
use nsi3d::scenario::{self, Experiment};

// Criterion 1
const FWHM_RATIO_BAND: (f64, f64) = (0.72, 0.88);
const MIN_AREA_REDUCTION: f64 = 0.28;
const POINT_RUNTIME_LIMIT_S: f64 = 300.0;
// Criterion 2
const MIN_SMER_GAIN_DB: f64 = 1.5;
// Criterion 3
const MIN_CR_GAIN: f64 = 1.10;
// Criterion 4
const MULTIPLEXED_EVENTS: usize = 144;
const MULTIPLEXED_RATE: (f64, f64) = (76.0, 1.0);
const NO_REUSE_EVENTS: usize = 9;
const NO_REUSE_RATE: (f64, f64) = (1222.0, 5.0);
const RATE_ORACLE_TOL: f64 = 1e-9;
// Criterion 5
const CIRCULAR_COUNTS: (usize, usize, usize) = (812, 408, 404);
const SPIRAL_TARGET: (usize, usize) = (132, 124);
const SPIRAL_SLACK: usize = 12;
const NO_REUSE_BAND: (usize, usize) = (220, 256);
const NO_REUSE_MAX_SPLIT: usize = 16;
// Criterion 6
const MAX_BENCH_RATIO: f64 = 3.5;
const BENCH_REPEATS: usize = 2;
// Criterion 7
const ZM_NULL_DB: f64 = 40.0;
const SUPERPOSITION_TOL: f64 = 1e-12;
const GAUSSIAN_FWHM_TOL: f64 = 0.01;
const PROPERTY_RUNTIME_LIMIT_S: f64 = 60.0;

struct Outcome {
    id: u8,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(out: &mut Vec<Outcome>, id: u8, name: &'static str, pass: bool, detail: String) {
    println!("[{}] {id}. {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    out.push(Outcome { id, name, pass, detail });
}

fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    x >= lo && x <= hi
}

fn desk(aperture: ApertureChoice, out: &std::path::Path) -> Experiment {
    let mut cfg = ExperimentConfig::preset(Preset::Desk);
    cfg.aperture = aperture;
    cfg.output_dir = out.to_path_buf();
    Experiment::new(cfg).unwrap()
}

fn resolution_and_sidelobes(out: &mut Vec<Outcome>, dir: &std::path::Path) {
    let exp = desk(ApertureChoice::Circular, dir);
    let t = Instant::now();
    let rep = scenario::points(&exp, false).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let r = &rep.rows[0];
    let (ra, re) = r.fwhm_ratio();
    let area = r.area_reduction();
    report(
        out,
        1,
        "resolution ratio",
        within(ra, FWHM_RATIO_BAND) && within(re, FWHM_RATIO_BAND) && area >= MIN_AREA_REDUCTION && secs < POINT_RUNTIME_LIMIT_S,
        format!(
            "FWHM NSI/DAS az {ra:.3} ({:.3}/{:.3} mm), el {re:.3} ({:.3}/{:.3} mm), band [{}, {}]; \
             area reduction {:.1}% (>= {:.0}%); {secs:.0} s (< {POINT_RUNTIME_LIMIT_S:.0} s)",
            r.nsi.fwhm_az * 1e3,
            r.das.fwhm_az * 1e3,
            r.nsi.fwhm_el * 1e3,
            r.das.fwhm_el * 1e3,
            FWHM_RATIO_BAND.0,
            FWHM_RATIO_BAND.1,
            100.0 * area,
            100.0 * MIN_AREA_REDUCTION
        ),
    );
    let (da, de) = (r.das.smer_az.db - r.nsi.smer_az.db, r.das.smer_el.db - r.nsi.smer_el.db);
    report(
        out,
        2,
        "side-lobe suppression",
        da >= MIN_SMER_GAIN_DB && de >= MIN_SMER_GAIN_DB,
        format!(
            "SMER az {:.2} -> {:.2} dB (gain {da:.2}), el {:.2} -> {:.2} dB (gain {de:.2}), need >= {MIN_SMER_GAIN_DB} dB",
            r.das.smer_az.db, r.nsi.smer_az.db, r.das.smer_el.db, r.nsi.smer_el.db
        ),
    );
}

fn contrast(out: &mut Vec<Outcome>, dir: &std::path::Path) {
    let exp = desk(ApertureChoice::Circular, dir);
    let rep = scenario::cyst(&exp, false).unwrap();
    let r = &rep.rows[0];
    let gain = r.nsi.cr / r.das.cr;
    report(
        out,
        3,
        "contrast",
        gain >= MIN_CR_GAIN && r.nsi.cnr < r.das.cnr,
        format!(
            "CR {:.3} -> {:.3} (x{gain:.3}, need >= {MIN_CR_GAIN}); CNR {:.3} -> {:.3} (must decrease); {} scatterers",
            r.das.cr, r.nsi.cr, r.das.cnr, r.nsi.cnr, r.n_scatterers
        ),
    );
}

fn volume_rates(out: &mut Vec<Outcome>, dir: &std::path::Path) {
    let exp = desk(ApertureChoice::All, dir);
    let rep = scenario::rates(&exp).unwrap();
    let c = exp.cfg.sequence.sound_speed;
    let d = rep.depth;
    let mut pass = (d - 0.07).abs() < 1e-12 && (c - 1540.0).abs() < 1e-12;
    let mut parts = Vec::new();
    for r in &rep.rows {
        let a = &r.accounting;
        let oracle = 1.0 / (a.n_events as f64 * 2.0 * d / c);
        let (events, (rate, tol)) = match r.kind {
            ApertureKind::SpiralNoReuse => (NO_REUSE_EVENTS, NO_REUSE_RATE),
            _ => (MULTIPLEXED_EVENTS, MULTIPLEXED_RATE),
        };
        pass &= a.n_events == events
            && (a.max_volume_rate - rate).abs() <= tol
            && (a.max_volume_rate - oracle).abs() <= RATE_ORACLE_TOL * oracle;
        parts.push(format!("{} {} events {:.1} vol/s", r.kind.name(), a.n_events, a.max_volume_rate));
    }
    let circ = rep.rows.iter().find(|r| r.kind == ApertureKind::Circular).unwrap().accounting;
    let nr = rep.rows.iter().find(|r| r.kind == ApertureKind::SpiralNoReuse).unwrap().accounting;
    let ratio = nr.max_volume_rate / circ.max_volume_rate;
    pass &= circ.n_events == 16 * nr.n_events && (ratio - 16.0).abs() <= RATE_ORACLE_TOL;
    report(out, 4, "volume-rate accounting", pass, format!("{}; rate ratio {ratio:.6}", parts.join(", ")));
}

fn aperture_counts(out: &mut Vec<Outcome>) {
    let g = ArrayGeometry::matrix_1024();
    let circ = standard_mask(&g, ApertureKind::Circular).unwrap();
    let sp = standard_mask(&g, ApertureKind::Spiral).unwrap();
    let nr = standard_mask(&g, ApertureKind::SpiralNoReuse).unwrap();
    let conflicts = g.channel_conflicts(&nr.element_ids).unwrap();
    let pass = (circ.len(), circ.n_inner, circ.n_outer) == CIRCULAR_COUNTS
        && sp.n_inner.abs_diff(SPIRAL_TARGET.0) <= SPIRAL_SLACK
        && sp.n_outer.abs_diff(SPIRAL_TARGET.1) <= SPIRAL_SLACK
        && (NO_REUSE_BAND.0..=NO_REUSE_BAND.1).contains(&nr.len())
        && conflicts.is_empty()
        && nr.n_inner.abs_diff(nr.n_outer) <= NO_REUSE_MAX_SPLIT;
    report(
        out,
        5,
        "aperture counts",
        pass,
        format!(
            "circular {} ({}/{}); spiral {}/{} (target {}/{} +-{SPIRAL_SLACK}); no-reuse {} ({}/{}), {} channel conflicts",
            circ.len(),
            circ.n_inner,
            circ.n_outer,
            sp.n_inner,
            sp.n_outer,
            SPIRAL_TARGET.0,
            SPIRAL_TARGET.1,
            nr.len(),
            nr.n_inner,
            nr.n_outer,
            conflicts.len()
        ),
    );
}

fn compute_cost(out: &mut Vec<Outcome>, dir: &std::path::Path) {
    let exp = desk(ApertureChoice::Circular, dir);
    let r = bench(&exp, BENCH_REPEATS).unwrap();
    report(
        out,
        6,
        "compute-cost bound",
        r.ratio() <= MAX_BENCH_RATIO,
        format!(
            "{} voxels: DAS {:.2} s, NSI {:.2} s, ratio {:.3} (<= {MAX_BENCH_RATIO}); shared prep {:.2} s",
            r.voxels,
            r.das_s,
            r.nsi_s,
            r.ratio(),
            r.prep_s
        ),
    );
}

fn properties(out: &mut Vec<Outcome>) {
    let t = Instant::now();
    let g = ArrayGeometry::matrix_1024();
    let mut failures: Vec<String> = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };

    for kind in [ApertureKind::Circular, ApertureKind::Spiral, ApertureKind::SpiralNoReuse] {
        let m = standard_mask(&g, kind).unwrap();
        let sum: f64 = m.zm_weights().iter().sum();
        check(sum.abs() == m.n_outer.abs_diff(m.n_inner) as f64, "zero-mean residual");
        for dc in [0.25, 1.0, 3.0] {
            let s = nsi_windows(&m, dc).unwrap();
            check(
                s.w_dc1.iter().zip(&s.w_dc2).all(|(a, b)| (a + b - 2.0 * dc).abs() <= 1e-12),
                "dc windows sum",
            );
        }
    }

    let circ = nsi_windows(&standard_mask(&g, ApertureKind::Circular).unwrap(), 1.0).unwrap();
    let focus = Vec3::new(0.0, 0.0, 40e-3);
    let zm = cw_response(&circ.window(Window::ZeroMean), &g, 40e-3, focus).unwrap().norm();
    let dc = cw_response(&circ.window(Window::Dc1), &g, 40e-3, focus).unwrap().norm();
    let null_db = 20.0 * (dc / zm).log10();
    check(null_db >= ZM_NULL_DB, "ZM focal null");

    // small aperture and grid for the reconstruction properties
    let p = g.pitch();
    let small = nsi_windows(&circular_mask(&g, 4.0 * p, 2.9 * p).unwrap(), 1.0).unwrap();
    let plan = build_plan(&small.mask, &g, &virtual_sources(DEFAULT_STANDOFF, DEFAULT_TILT_DEG).unwrap()).unwrap();
    let grid = VoxelGrid::half_open((-2e-3, 2e-3), (-2e-3, 2e-3), (18e-3, 22e-3), [10, 10, 12]).unwrap();
    let pulse = Pulse::simulation_default();
    let window = RfWindow::covering(grid.origin, grid.max_corner(), &plan, &g, &pulse, 1540.0).unwrap();
    let sim = |ph: &Phantom| simulate_acquisition(&plan, ph, &g, &pulse, window, 1540.0, SimOptions::default()).unwrap();
    let a = Phantom {
        scatterers: vec![
            Scatterer { position: Vec3::new(0.4e-3, -0.2e-3, 19.5e-3), amplitude: 1.0 },
            Scatterer { position: Vec3::new(-1.1e-3, 0.8e-3, 20.7e-3), amplitude: 0.6 },
        ],
        rng_seed: None,
    };
    let b = make_point_phantom(&[20e-3]).unwrap();
    let (ra, rb, rab) = (sim(&a), sim(&b), sim(&a.merged(&b)));
    let peak = rab.events.iter().flat_map(|e| &e.data).fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for (k, e) in rab.events.iter().enumerate() {
        for (i, v) in e.data.iter().enumerate() {
            worst = worst.max((v - ra.events[k].data[i] - rb.events[k].data[i]).abs() / peak);
        }
    }
    check(worst <= SUPERPOSITION_TOL, "superposition");

    let settings = BeamformSettings::default();
    let bf = Beamformer::new(&rab, &g, settings).unwrap();
    let v = bf.nsi(&small, &grid).unwrap();
    check(v.nsi.values.iter().all(|&x| x >= 0.0), "E_NSI >= 0");
    let swapped = bf.nsi_only(&small.swapped(), &grid).unwrap();
    check(swapped.values == v.nsi.values, "sign-convention swap");

    let images = |scale: f64| {
        let bf = Beamformer::new(&rab.scaled(scale), &g, settings).unwrap();
        let v = bf.nsi(&small, &grid).unwrap();
        (log_compress(&v.das, 50.0).unwrap(), log_compress(&v.nsi, 50.0).unwrap())
    };
    let base = images(1.0);
    check(images(2f64.powi(-13)) == base && images(2f64.powi(9)) == base, "image scale invariance (power of two)");
    let other = images(1e3);
    let drift = base.0.iter().zip(&other.0).chain(base.1.iter().zip(&other.1)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    check(drift <= 1e-9, "image scale invariance");

    let sigma: f64 = 1e-3;
    for step in [sigma / 10.0, sigma / 50.0] {
        let n = (8.0 * sigma / step).round() as i64;
        let coords: Vec<f64> = (-n..=n).map(|i| i as f64 * step).collect();
        let amps = coords.iter().map(|x| (-x * x / (2.0 * sigma * sigma)).exp()).collect();
        let w = fwhm(&BeamProfile::new(Axis::Azimuth, coords, amps).unwrap()).unwrap();
        check((w - 2.354_82e-3).abs() / 2.354_82e-3 <= GAUSSIAN_FWHM_TOL, "Gaussian FWHM");
    }

    let secs = t.elapsed().as_secs_f64();
    check(secs < PROPERTY_RUNTIME_LIMIT_S, "property runtime");
    let pass = failures.is_empty();
    report(
        out,
        7,
        "property suites",
        pass,
        format!(
            "ZM null {null_db:.1} dB, superposition {worst:.1e}, scale drift {drift:.1e} dB, {secs:.1} s{}",
            if pass { String::new() } else { format!("; failed: {}", failures.join(", ")) }
        ),
    );
}

#[test]
fn acceptance_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let mut out = Vec::new();
    resolution_and_sidelobes(&mut out, dir.path());
    contrast(&mut out, dir.path());
    volume_rates(&mut out, dir.path());
    aperture_counts(&mut out);
    compute_cost(&mut out, dir.path());
    properties(&mut out);
    out.sort_by_key(|o| o.id);
    let failed: Vec<String> = out.iter().filter(|o| !o.pass).map(|o| format!("{}. {} ({})", o.id, o.name, o.detail)).collect();
    println!("acceptance: {}/{} criteria passed", out.len() - failed.len(), out.len());
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
