use nalgebra::DMatrix;
use proptest::prelude::*;

use varimix::spectra::{
    load_abundances, load_field, load_image, load_library, save_abundances, save_field, save_image,
    save_library,
};
use varimix::{AbundanceMap, EndmemberField, SpectralImage, SpectralLibrary};

fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..5, 1usize..5, 1usize..7)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn image_and_field_survive_a_round_trip(
        (h, w, l) in dims(),
        p in 1usize..4,
        seed in any::<u64>(),
    ) {
        // arbitrary finite bit patterns, including subnormals and -0.0
        let mut state = seed | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let v = f64::from_bits(state);
            if v.is_finite() { v } else { (state >> 11) as f64 * 1e-300 }
        };
        let data: Vec<f64> = (0..h * w * l).map(|_| next()).collect();
        let dir = tempfile::tempdir().unwrap();
        let image = SpectralImage::new("scene", h, w, l, data).unwrap();
        save_image(&image, dir.path().join("scene.json")).unwrap();
        let back = load_image(dir.path().join("scene.json")).unwrap();
        prop_assert_eq!(back.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        image.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!((back.height(), back.width(), back.bands()), (h, w, l));

        let n = h * w;
        let field = DMatrix::from_fn(l * p, n, |_, _| next().abs().min(1e6));
        let field = EndmemberField::new(l, p, field).unwrap();
        save_field(&field, h, w, dir.path().join("field.json")).unwrap();
        prop_assert_eq!(load_field(dir.path().join("field.json")).unwrap(), field);
    }

    #[test]
    fn text_formats_are_lossless(
        sizes in prop::collection::vec(1usize..4, 1..4),
        l in 1usize..6,
        values in prop::collection::vec(0.0f64..10.0, 64),
        weights in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..20),
    ) {
        let mut it = values.iter().cycle().copied();
        let classes: Vec<(String, Vec<Vec<f64>>)> = sizes
            .iter()
            .enumerate()
            .map(|(c, &k)| (format!("m{c}"), (0..k).map(|_| it.by_ref().take(l).collect()).collect()))
            .collect();
        let lib = SpectralLibrary::new(l, classes).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_library(&lib, dir.path().join("lib.csv")).unwrap();
        prop_assert_eq!(load_library(dir.path().join("lib.csv")).unwrap(), lib);

        let rows: Vec<Vec<f64>> = weights
            .iter()
            .map(|w| {
                let s: f64 = w.iter().sum::<f64>() + 1e-3;
                let mut r: Vec<f64> = w.iter().map(|v| (v + 1e-3 / 3.0) / s).collect();
                let tail: f64 = r[..2].iter().sum();
                r[2] = 1.0 - tail;
                r
            })
            .collect();
        let a = AbundanceMap::from_rows(&rows, true).unwrap();
        save_abundances(&a, dir.path().join("a.csv")).unwrap();
        prop_assert_eq!(load_abundances(dir.path().join("a.csv"), true).unwrap(), a);
    }
}
