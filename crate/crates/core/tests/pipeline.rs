use mdensity::density::io::{read_characteristic, read_density, write_characteristic, write_density};
use mdensity::density::{characteristic_grid, invert_to_density, GridConfig, Rect};
use mdensity::empirical::{rectangle_frequency, sample_random_model, Histogram2D};
use mdensity::LFunctionSpec;

fn small_grid() -> (mdensity::density::CharacteristicGrid, mdensity::density::DensityGrid) {
    let g = characteristic_grid(&LFunctionSpec::zeta(), &GridConfig::new(1.2, 40.0, 128, 1000)).unwrap();
    let d = invert_to_density(&g).unwrap();
    (g, d)
}

#[test]
fn binary_roundtrip_keeps_values_and_digest() {
    let (g, d) = small_grid();
    let digest = [7u8; 32];

    let mut buf = Vec::new();
    write_characteristic(&mut buf, &g, Some(digest)).unwrap();
    let (g2, dg) = read_characteristic(&mut buf.as_slice()).unwrap();
    assert_eq!(dg, digest);
    assert_eq!(g2.values, g.values);
    assert_eq!(g2.abs_error, g.abs_error);

    let mut buf = Vec::new();
    write_density(&mut buf, &d, Some(digest)).unwrap();
    let (d2, _) = read_density(&mut buf.as_slice()).unwrap();
    assert_eq!(d2.values, d.values);
    assert_eq!(d2.diagnostics, d.diagnostics);
}

#[test]
fn truncated_file_is_rejected() {
    let (_, d) = small_grid();
    let mut buf = Vec::new();
    write_density(&mut buf, &d, None).unwrap();
    buf.truncate(buf.len() - 8);
    assert!(read_density(&mut buf.as_slice()).is_err());
}

#[test]
fn reflected_rectangles_have_equal_mass() {
    let (_, d) = small_grid();
    let r = Rect::new(-0.5, 1.0, 0.2, 1.3);
    let a = d.rectangle_mass(&r).unwrap();
    let b = d.rectangle_mass(&r.reflect_y()).unwrap();
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
}

#[test]
fn model_cloud_tracks_density_masses() {
    let (_, d) = small_grid();
    let n = 100_000;
    // p_max of the grid is X^2 = 1000 here too, up to flooring
    let cloud = sample_random_model(&LFunctionSpec::zeta(), 1.2, 1000f64.sqrt(), n, 3).unwrap();
    for r in [Rect::new(-1.0, 1.0, -1.0, 1.0), Rect::new(0.0, 2.0, -0.5, 0.5)] {
        let freq = rectangle_frequency(&cloud, &r).unwrap();
        let mass = d.rectangle_mass(&r).unwrap();
        let se = (mass * (1.0 - mass) / n as f64).sqrt();
        assert!((freq - mass).abs() < 5.0 * se + 1e-3, "{freq} vs {mass}");
    }
}

#[test]
fn histogram_accounts_for_every_point() {
    let cloud = sample_random_model(&LFunctionSpec::zeta(), 1.0, 10.0, 5000, 9).unwrap();
    let range = Rect::new(-2.0, 2.0, -2.0, 2.0);
    let h = Histogram2D::new(&cloud, &range, 16, 8).unwrap();
    assert_eq!(h.total, 5000);
    let inside = cloud.points.iter().filter(|w| range.contains(**w)).count();
    assert_eq!(h.inside, inside);
    let total: f64 = h.masses.iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
}
