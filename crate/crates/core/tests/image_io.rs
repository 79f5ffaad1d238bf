use vtalign::inspect::synthetic_scene;
use vtalign::{load_image, save_image, Error, Raster};

#[test]
fn png_and_pgm_round_trip_8_bit_content() {
    let dir = tempfile::tempdir().unwrap();
    let img = synthetic_scene(33, 21, 4).map(|v| v.round());
    for name in ["frame.png", "frame.pgm"] {
        let path = dir.path().join(name);
        save_image(&img, &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), img, "{name}");
    }
}

#[test]
fn sixteen_bit_binary_pgm_keeps_raw_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("thermal.pgm");
    let mut bytes = b"P5\n3 1\n65535\n".to_vec();
    for v in [0u16, 30000, 65535] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    std::fs::write(&path, bytes).unwrap();
    let r = load_image(&path).unwrap();
    assert_eq!(r.data(), [0.0, 30000.0, 65535.0]);
}

#[test]
fn format_is_sniffed_not_guessed_from_extension() {
    let dir = tempfile::tempdir().unwrap();
    let img = Raster::from_fn(8, 8, |x, y| (x * 8 + y) as f64);
    let png = dir.path().join("a.png");
    save_image(&img, &png).unwrap();
    let disguised = dir.path().join("a.pgm.bin");
    std::fs::copy(&png, &disguised).unwrap();
    assert_eq!(load_image(&disguised).unwrap(), img);

    std::fs::write(dir.path().join("x.png"), b"GIF89a").unwrap();
    assert!(matches!(load_image(dir.path().join("x.png")), Err(Error::Format { .. })));
}
