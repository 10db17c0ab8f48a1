use nsi3d_core::aperture::{circular_mask, nsi_windows, ApodizationSet};
use nsi3d_core::beamform::{log_compress, nsi_combine, BeamformSettings, Beamformer, EnvelopeVolume, VolumeLabel, VoxelGrid};
use nsi3d_core::geometry::ArrayGeometry;
use nsi3d_core::metrics::{contrast, fwhm, smer, Axis, BeamProfile, Region};
use nsi3d_core::sequence::{build_plan, virtual_sources, AcquisitionPlan, DEFAULT_STANDOFF, DEFAULT_TILT_DEG};
use nsi3d_core::signal::Pulse;
use nsi3d_core::sim::{simulate_acquisition, Phantom, RfDataset, RfWindow, Scatterer, SimOptions};
use nsi3d_core::Vec3;
use proptest::prelude::*;

const C: f64 = 1540.0;

/// A small circular aperture (about 50 elements) with its full plan.
fn small_setup() -> (ArrayGeometry, ApodizationSet, AcquisitionPlan) {
    let g = ArrayGeometry::matrix_1024();
    let p = g.pitch();
    let mask = circular_mask(&g, 4.0 * p, 2.9 * p).unwrap();
    let set = nsi_windows(&mask, 1.0).unwrap();
    let plan = build_plan(&mask, &g, &virtual_sources(DEFAULT_STANDOFF, DEFAULT_TILT_DEG).unwrap()).unwrap();
    (g, set, plan)
}

fn small_grid() -> VoxelGrid {
    VoxelGrid::half_open((-2e-3, 2e-3), (-2e-3, 2e-3), (18e-3, 22e-3), [8, 8, 10]).unwrap()
}

fn simulate(g: &ArrayGeometry, plan: &AcquisitionPlan, ph: &Phantom, grid: &VoxelGrid) -> RfDataset {
    let pulse = Pulse::simulation_default();
    let w = RfWindow::covering(grid.origin, grid.max_corner(), plan, g, &pulse, C).unwrap();
    simulate_acquisition(plan, ph, g, &pulse, w, C, SimOptions::default()).unwrap()
}

fn scatterers() -> impl Strategy<Value = Phantom> {
    prop::collection::vec(
        ((-2e-3..2e-3f64), (-2e-3..2e-3f64), (18e-3..22e-3f64), (0.1..2.0f64)),
        1..4,
    )
    .prop_map(|v| Phantom {
        scatterers: v
            .into_iter()
            .map(|(x, y, z, a)| Scatterer {
                position: Vec3::new(x, y, z),
                amplitude: a,
            })
            .collect(),
        rng_seed: None,
    })
}

fn envelope(values: Vec<f64>) -> EnvelopeVolume {
    let n = values.len();
    EnvelopeVolume {
        grid: VoxelGrid::new(Vec3::new(0.0, 0.0, 1e-3), Vec3::new(1e-4, 1e-4, 1e-4), [1, 1, n]).unwrap(),
        values,
        label: VolumeLabel::Das,
    }
}

fn gaussian_profile(sigma: f64, step: f64, offset: f64) -> BeamProfile {
    let n = (8.0 * sigma / step).ceil() as i64;
    let coords: Vec<f64> = (-n..=n).map(|i| i as f64 * step + offset).collect();
    let amps = coords.iter().map(|x| (-x * x / (2.0 * sigma * sigma)).exp()).collect();
    BeamProfile::new(Axis::Azimuth, coords, amps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_mean_residual_equals_count_difference(r_out in 3.0..16.0f64, frac in 0.4..0.9f64) {
        let g = ArrayGeometry::matrix_1024();
        let p = g.pitch();
        let mask = circular_mask(&g, r_out * p, frac * r_out * p).unwrap();
        prop_assume!(mask.n_inner > 0 && mask.n_outer > 0);
        let sum: f64 = mask.zm_weights().iter().sum();
        prop_assert_eq!(sum.abs(), (mask.n_outer as f64 - mask.n_inner as f64).abs());
    }

    #[test]
    fn dc_windows_sum_to_twice_dc(dc in 0.01..10.0f64) {
        let g = ArrayGeometry::matrix_1024();
        let p = g.pitch();
        let set = nsi_windows(&circular_mask(&g, 16.0 * p, 11.5 * p).unwrap(), dc).unwrap();
        for (a, b) in set.w_dc1.iter().zip(&set.w_dc2) {
            prop_assert!((a + b - 2.0 * dc).abs() <= 4.0 * f64::EPSILON * (2.0 * dc + 1.0));
        }
    }

    #[test]
    fn combine_is_nonnegative_and_bounded(
        v in prop::collection::vec((0.0..10.0f64, 0.0..10.0f64, 0.0..10.0f64), 1..64),
        dc in 0.05..5.0f64,
    ) {
        let zm = envelope(v.iter().map(|t| t.0).collect());
        let a = envelope(v.iter().map(|t| t.1).collect());
        let b = envelope(v.iter().map(|t| t.2).collect());
        let n = nsi_combine(&zm, &a, &b, dc).unwrap();
        for (i, &x) in n.values.iter().enumerate() {
            prop_assert!(x >= 0.0);
            prop_assert!(x <= (a.values[i] + b.values[i]) / (4.0 * dc) * (1.0 + 1e-15));
        }
    }

    #[test]
    fn gaussian_fwhm_converges_under_refinement(sigma in 0.2e-3..3e-3f64, offset in -0.5..0.5f64) {
        let exact = 2.0 * (2.0 * 2f64.ln()).sqrt() * sigma;
        let coarse = fwhm(&gaussian_profile(sigma, sigma / 2.0, offset * sigma / 2.0)).unwrap();
        let fine = fwhm(&gaussian_profile(sigma, sigma / 20.0, offset * sigma / 20.0)).unwrap();
        prop_assert!((fine - exact).abs() / exact < 0.01);
        prop_assert!((fine - exact).abs() <= (coarse - exact).abs() + 1e-12 * exact);
    }

    #[test]
    fn widening_gaussian_widens_fwhm(sigma in 0.2e-3..3e-3f64, grow in 1.01..2.0f64) {
        let step = 0.02e-3;
        let a = fwhm(&gaussian_profile(sigma, step, 0.0)).unwrap();
        let b = fwhm(&gaussian_profile(sigma * grow, step, 0.0)).unwrap();
        prop_assert!(b > a);
    }

    #[test]
    fn profile_metrics_ignore_global_scale(
        amps in prop::collection::vec(0.0..1.0f64, 9..40),
        exp in prop::sample::select(vec![-6i32, 6]),
    ) {
        let mut amps = amps;
        let mid = amps.len() / 2;
        amps[mid] = 2.0;
        amps[0] = 0.0;
        let last = amps.len() - 1;
        amps[last] = 0.0;
        let coords: Vec<f64> = (0..amps.len()).map(|i| i as f64 * 1e-4).collect();
        let alpha = 10f64.powi(exp);
        let p = BeamProfile::new(Axis::Azimuth, coords.clone(), amps.clone()).unwrap();
        let q = BeamProfile::new(Axis::Azimuth, coords, amps.iter().map(|a| a * alpha).collect()).unwrap();
        let (f1, f2) = (fwhm(&p).unwrap(), fwhm(&q).unwrap());
        prop_assert!((f1 - f2).abs() <= 1e-12 * f1);
        let (s1, s2) = (smer(&p).unwrap().db, smer(&q).unwrap().db);
        prop_assert!((s1 - s2).abs() <= 1e-9);
    }

    #[test]
    fn contrast_ranges(inside in 0.0..5.0f64, outside in 0.0..5.0f64, spread in 0.0..1.0f64, alpha_exp in -6i32..=6) {
        let grid = VoxelGrid::half_open((-5e-3, 5e-3), (-5e-3, 5e-3), (5e-3, 15e-3), [20, 20, 20]).unwrap();
        let center = Vec3::new(0.0, 0.0, 10e-3);
        let (ri, ro) = Region::cyst_pair(center, 3e-3);
        let values: Vec<f64> = (0..grid.len())
            .map(|k| {
                let [a, b, c] = grid.unravel(k);
                let p = grid.position(a, b, c);
                let base = if p.distance(center) < 3e-3 { inside } else { outside };
                base * (1.0 + spread * if k % 2 == 0 { 1.0 } else { -1.0 } * 0.5)
            })
            .collect();
        let alpha = 10f64.powi(alpha_exp);
        let v = EnvelopeVolume { grid, values: values.clone(), label: VolumeLabel::Das };
        let s = EnvelopeVolume { grid, values: values.iter().map(|x| x * alpha).collect(), label: VolumeLabel::Das };
        prop_assume!(inside + outside > 0.0);
        let c = contrast(&v, &ri, &ro).unwrap();
        let cs = contrast(&s, &ri, &ro).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c.cr));
        if c.mu_o >= c.mu_i {
            prop_assert!(c.cnr >= 0.0);
        }
        prop_assert!((c.cr - cs.cr).abs() <= 1e-12);
        if c.cnr.is_finite() {
            prop_assert!((c.cnr - cs.cnr).abs() <= 1e-9 * c.cnr.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn forward_model_is_linear(a in scatterers(), b in scatterers(), s in 0.1..10.0f64) {
        let (g, _, plan) = small_setup();
        let grid = small_grid();
        let ab = simulate(&g, &plan, &a.merged(&b), &grid);
        let ra = simulate(&g, &plan, &a, &grid);
        let rb = simulate(&g, &plan, &b, &grid);
        let rs = simulate(&g, &plan, &a.scaled(s), &grid);
        let peak = ab.events.iter().flat_map(|e| e.data.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        let peak_a = ra.events.iter().flat_map(|e| e.data.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        for (k, e) in ab.events.iter().enumerate() {
            for (i, &v) in e.data.iter().enumerate() {
                let sum = ra.events[k].data[i] + rb.events[k].data[i];
                prop_assert!((v - sum).abs() <= 1e-12 * peak);
                prop_assert!((rs.events[k].data[i] - s * ra.events[k].data[i]).abs() <= 1e-12 * s * peak_a);
            }
        }
    }

    #[test]
    fn sign_swap_leaves_nsi_unchanged(ph in scatterers()) {
        let (g, set, plan) = small_setup();
        let grid = small_grid();
        let bf = Beamformer::new(&simulate(&g, &plan, &ph, &grid), &g, BeamformSettings::default()).unwrap();
        let a = bf.nsi_only(&set, &grid).unwrap();
        let b = bf.nsi_only(&set.swapped(), &grid).unwrap();
        prop_assert_eq!(a.values, b.values);
    }

    #[test]
    fn displayed_images_ignore_rf_scale(ph in scatterers(), k in -20i32..20, alpha in 1e-3..1e3f64) {
        let (g, set, plan) = small_setup();
        let grid = small_grid();
        let ds = simulate(&g, &plan, &ph, &grid);
        let images = |d: &RfDataset| {
            let bf = Beamformer::new(d, &g, BeamformSettings::default()).unwrap();
            let v = bf.nsi(&set, &grid).unwrap();
            (log_compress(&v.das, 50.0).unwrap(), log_compress(&v.nsi, 50.0).unwrap())
        };
        let base = images(&ds);
        let pow2 = images(&ds.scaled(2f64.powi(k)));
        prop_assert_eq!(&base, &pow2);
        let any = images(&ds.scaled(alpha));
        for (x, y) in base.0.iter().zip(&any.0).chain(base.1.iter().zip(&any.1)) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }
}

#[test]
fn nsi_is_nonnegative_and_below_dc_mean_on_simulated_data() {
    let (g, set, plan) = small_setup();
    let grid = small_grid();
    let ph = Phantom {
        scatterers: vec![
            Scatterer { position: Vec3::new(0.3e-3, -0.4e-3, 20e-3), amplitude: 1.0 },
            Scatterer { position: Vec3::new(-1e-3, 1e-3, 21e-3), amplitude: 0.5 },
        ],
        rng_seed: None,
    };
    let bf = Beamformer::new(&simulate(&g, &plan, &ph, &grid), &g, BeamformSettings::default()).unwrap();
    let v = bf.nsi(&set, &grid).unwrap();
    for i in 0..grid.len() {
        let n = v.nsi.values[i];
        assert!(n >= 0.0);
        assert!(n <= (v.dc1.values[i] + v.dc2.values[i]) / (4.0 * set.dc) * (1.0 + 1e-12));
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let (g, set, plan) = small_setup();
    let grid = small_grid();
    let ph = Phantom {
        scatterers: vec![Scatterer { position: Vec3::new(0.0, 0.0, 20e-3), amplitude: 1.0 }],
        rng_seed: None,
    };
    let run = || {
        let bf = Beamformer::new(&simulate(&g, &plan, &ph, &grid), &g, BeamformSettings::default()).unwrap();
        bf.nsi(&set, &grid).unwrap()
    };
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(run);
    for (a, b) in one.nsi.values.iter().zip(&many.nsi.values) {
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-30));
    }
    assert_eq!(one.das.values, many.das.values);
}
