use nsi3d::core::aperture::{nsi_windows, standard_mask, ApertureKind, Window};
use nsi3d::core::beamform::{EnvelopeVolume, VolumeLabel, VoxelGrid};
use nsi3d::core::geometry::ArrayGeometry;
use nsi3d::core::sequence::VirtualSource;
use nsi3d::core::sim::{EventRf, RfDataset};
use nsi3d::io::{self, Meta, Plane, BLANK_ROW_GRAY, UNUSED_GRAY};
use nsi3d::AppError;

fn meta() -> Meta {
    Meta {
        config_hash: "0123456789abcdef".into(),
        seed: 42,
    }
}

fn ramp_volume() -> EnvelopeVolume {
    let grid = VoxelGrid::half_open((-1e-3, 1e-3), (-2e-3, 2e-3), (10e-3, 13e-3), [4, 5, 6]).unwrap();
    EnvelopeVolume {
        grid,
        values: (0..grid.len()).map(|k| k as f64 * 0.25).collect(),
        label: VolumeLabel::Nsi,
    }
}

#[test]
fn volume_round_trips_through_header_and_floats() {
    let dir = tempfile::tempdir().unwrap();
    let vol = ramp_volume();
    let header = io::write_volume(&dir.path().join("v"), &vol, &meta(), 50.0).unwrap();
    assert_eq!(header.file_name().unwrap(), "v.toml");
    let bytes = std::fs::read(dir.path().join("v.f32")).unwrap();
    assert_eq!(bytes.len(), 4 * vol.grid.len());
    // z-fastest: the second float is voxel (0, 0, 1)
    assert_eq!(f32::from_le_bytes(bytes[4..8].try_into().unwrap()), vol.values[vol.grid.index(0, 0, 1)] as f32);
    let (h, back) = io::read_volume(&header).unwrap();
    assert_eq!(h.label, "E_NSI");
    assert_eq!(h.dims, [4, 5, 6]);
    assert_eq!(h.config_hash, meta().config_hash);
    assert_eq!(back.label, VolumeLabel::Nsi);
    assert_eq!(back.grid, vol.grid);
    assert_eq!(back.values, vol.values);
}

#[test]
fn truncated_volume_data_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let header = io::write_volume(&dir.path().join("v"), &ramp_volume(), &meta(), 50.0).unwrap();
    let data = dir.path().join("v.f32");
    let bytes = std::fs::read(&data).unwrap();
    std::fs::write(&data, &bytes[..bytes.len() - 4]).unwrap();
    assert!(matches!(io::read_volume(&header), Err(AppError::Format { .. })));
}

#[test]
fn rf_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let ev = |i: usize, az: f64, els: Vec<usize>, n: usize| EventRf {
        event_index: i,
        angle_index: i,
        source: VirtualSource::steered(az, -az, 17.4e-3),
        t0: 1e-5 * i as f64,
        n_samples: n,
        data: (0..els.len() * n).map(|k| (k as f64 * 0.5).sin()).collect(),
        rx_elements: els,
    };
    let ds = RfDataset {
        sampling_rate: 40e6,
        sound_speed: 1540.0,
        events: vec![ev(0, 0.0, vec![3, 7, 11], 5), ev(1, 5.0, vec![1, 2], 8)],
    };
    let header = io::write_rf(&dir.path().join("rf"), &ds, &meta()).unwrap();
    let back = io::read_rf(&header).unwrap();
    assert_eq!(back.events.len(), 2);
    for (a, b) in ds.events.iter().zip(&back.events) {
        assert_eq!(a.rx_elements, b.rx_elements);
        assert_eq!((a.t0, a.n_samples, a.angle_index), (b.t0, b.n_samples, b.angle_index));
        assert!((a.source.position - b.source.position).norm() < 1e-15);
        for (x, y) in a.data.iter().zip(&b.data) {
            assert_eq!(*x as f32 as f64, *y);
        }
    }
}

#[test]
fn pgm_round_trips_at_both_depths() {
    let dir = tempfile::tempdir().unwrap();
    let p8 = dir.path().join("a.pgm");
    io::write_pgm(&p8, 3, 2, 255, &[0, 1, 2, 128, 254, 255]).unwrap();
    let a = io::read_pgm(&p8).unwrap();
    assert_eq!((a.width, a.height, a.maxval), (3, 2, 255));
    assert_eq!(a.pixels, vec![0, 1, 2, 128, 254, 255]);
    assert_eq!(std::fs::metadata(&p8).unwrap().len() as usize, b"P5\n3 2\n255\n".len() + 6);

    let p16 = dir.path().join("b.pgm");
    io::write_pgm(&p16, 2, 2, 65535, &[0, 256, 65535, 1]).unwrap();
    let raw = std::fs::read(&p16).unwrap();
    let body = &raw[raw.len() - 8..];
    assert_eq!(body, &[0, 0, 1, 0, 255, 255, 0, 1]);
    assert_eq!(io::read_pgm(&p16).unwrap().pixels, vec![0, 256, 65535, 1]);
}

#[test]
fn weight_raster_marks_blank_rows_and_unused_elements() {
    let g = ArrayGeometry::matrix_1024();
    let set = nsi_windows(&standard_mask(&g, ApertureKind::Circular).unwrap(), 1.0).unwrap();
    let (w, h, px) = io::weight_raster(&g, &set.window(Window::ZeroMean));
    assert_eq!((w, h), (32, 35));
    for &row in &g.config().blank_rows {
        assert!(px[(row - 1) * w..row * w].iter().all(|&p| p == BLANK_ROW_GRAY as u16));
    }
    let count = |v: u8| px.iter().filter(|&&p| p == v as u16).count();
    assert_eq!(count(io::weight_gray(-1.0)), set.mask.n_inner);
    assert_eq!(count(io::weight_gray(1.0)), set.mask.n_outer);
    assert_eq!(count(UNUSED_GRAY), 1024 - 812);
}

#[test]
fn slices_put_depth_down_the_image() {
    let vol = ramp_volume();
    let g = vol.grid;
    let db: Vec<f64> = (0..g.len()).map(|k| -((g.unravel(k)[2] * 10) as f64)).collect();
    let (w, h, px) = io::slice_pgm(&db, &g, Plane::Xz, 2, 50.0);
    assert_eq!((w, h), (4, 6));
    assert!(px[..w].iter().all(|&p| p == 65535));
    assert!(px[w * 5..].iter().all(|&p| p == 0));
    let (w, h, px) = io::slice_pgm(&db, &g, Plane::Xy, 1, 50.0);
    assert_eq!((w, h), (4, 5));
    let expected = ((40.0 / 50.0) * 65535.0_f64).round() as u16;
    assert!(px.iter().all(|&p| p == expected));
    assert_eq!(io::slice_pgm(&db, &g, Plane::Yz, 0, 50.0).0, 5);
}

#[test]
fn csv_carries_provenance_and_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sub").join("t.csv");
    let rows = vec![vec!["a".to_string(), io::num(1.5)], vec!["b".to_string(), io::num(-2.0)]];
    io::write_csv(&path, &meta(), &["name", "value"], &rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# config_hash=0123456789abcdef seed=42\nname,value\n"));
    let t = io::read_csv(&path).unwrap();
    assert_eq!(t.meta, Some(meta()));
    assert_eq!(t.headers, vec!["name", "value"]);
    assert_eq!(t.value(1, "value"), Some("-2.000000"));
}
