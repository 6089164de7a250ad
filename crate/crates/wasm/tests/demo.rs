use varimix_wasm::{hapke_curve, Demo};

#[test]
fn demo_scene_unmixes() {
    let mut d = Demo::new(12, 30, 40.0, 0.5, 3).unwrap();
    assert_eq!(d.size(), 12);
    assert_eq!(d.truth_rgba().len(), 12 * 12 * 4);
    assert!(d.estimate_rgba().is_empty());
    let e = d.unmix("fcls", 10).unwrap();
    assert!(e < 0.2, "{e}");
    assert_eq!(d.estimate_rgba().len(), 12 * 12 * 4);
    let a = d.estimate_abundances(2, 3);
    assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert_eq!(d.pixel_spectrum(0, 0).len(), 30);
    assert_eq!(d.wavelengths().len(), 30);
    assert_eq!(d.variants(1).len(), 30 * 5);
    assert!(d.variants(7).is_empty());
}

#[test]
fn variability_solvers_beat_uniform_guessing() {
    let mut d = Demo::new(10, 24, 35.0, 0.8, 1).unwrap();
    for algo in ["mesma", "elmm", "plmm", "sparse-l1"] {
        let e = d.unmix(algo, 20).unwrap();
        // uniform guessing on three classes sits well above this
        assert!(e < 0.25, "{algo}: {e}");
    }
}

#[test]
fn same_seed_same_scene() {
    let a = Demo::new(8, 20, 30.0, 0.3, 9).unwrap();
    let b = Demo::new(8, 20, 30.0, 0.3, 9).unwrap();
    let c = Demo::new(8, 20, 30.0, 0.3, 10).unwrap();
    assert_eq!(a.truth_rgba(), b.truth_rgba());
    assert_eq!(a.pixel_spectrum(3, 4), b.pixel_spectrum(3, 4));
    assert_ne!(a.pixel_spectrum(3, 4), c.pixel_spectrum(3, 4));
    assert_eq!(hapke_curve(0.7, 0.4, 4).unwrap().len(), 5);
}
