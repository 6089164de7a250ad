use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng as _;

use super::abundance::{sample_abundances_dirichlet, sample_abundances_grf};
use super::builtin::builtin_wavelengths;
use super::config::{
    AbundanceFieldConfig, AbundanceGenerator, BaseSpectra, ClassVariability, SceneConfig, VariabilityConfig,
};
use super::radiative::{atmospheric_reflectance, hapke_reflectance};
use super::variants::{scaling_variants, ScalingMode};
use crate::error::{dim_err, param_err, Result};
use crate::rng::{derive, substream, tag};
use crate::spectra::{
    add_noise, mix_forward, AbundanceMap, EndmemberField, LibraryClass, SceneTruth, SpectralImage,
    SpectralLibrary,
};

fn class_variants(m0: &[f64], mode: &ClassVariability, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = substream(seed, tag::VARIANTS, 0);
    match mode {
        ClassVariability::None => Ok(vec![m0.to_vec(); k]),
        ClassVariability::Hapke { mu1, mu2 } => (0..k)
            .map(|_| {
                let a = mu1.sample(&mut rng);
                let b = mu2.sample(&mut rng);
                hapke_reflectance(m0, a, b)
            })
            .collect(),
        ClassVariability::Atmospheric {
            mu1,
            mu2,
            e_sun,
            e_sky,
        } => (0..k)
            .map(|_| atmospheric_reflectance(m0, mu1.sample(&mut rng), *mu2, &[*e_sun], &[*e_sky]))
            .collect(),
        ClassVariability::ElmmScaling { psi } => {
            scaling_variants(m0, ScalingMode::Elmm { psi: *psi }, k, seed)
        }
        ClassVariability::GlmmScaling { psi, smoothness } => scaling_variants(
            m0,
            ScalingMode::Glmm {
                psi: *psi,
                smoothness: *smoothness,
            },
            k,
            seed,
        ),
    }
}

/// `K` variants per class of `base` (first signature of each class).
pub fn generate_variants(
    base: &SpectralLibrary,
    cfg: &VariabilityConfig,
    seed: u64,
) -> Result<SpectralLibrary> {
    cfg.validate()?;
    if cfg.classes.len() != base.n_classes() {
        return Err(dim_err(format!(
            "{} variability entries for {} classes",
            cfg.classes.len(),
            base.n_classes()
        )));
    }
    let l = base.bands();
    let var_seed = derive(seed, cfg.seed ^ tag::VARIANTS);
    let classes = base
        .classes()
        .iter()
        .zip(&cfg.classes)
        .enumerate()
        .map(|(p, (class, mode))| {
            let m0 = class.signatures.column(0);
            let vs = class_variants(m0.as_slice(), mode, cfg.n_variants, derive(var_seed, p as u64))?;
            let flat: Vec<f64> = vs.into_iter().flatten().collect();
            Ok(LibraryClass {
                name: class.name.clone(),
                signatures: DMatrix::from_vec(l, cfg.n_variants, flat),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SpectralLibrary::from_classes(l, classes)
}

fn sample_abundances(
    cfg: &AbundanceFieldConfig,
    height: usize,
    width: usize,
    p: usize,
    seed: u64,
) -> Result<AbundanceMap> {
    let seed = derive(seed, cfg.seed ^ tag::ABUNDANCE);
    match &cfg.generator {
        AbundanceGenerator::Dirichlet { alpha } => {
            if alpha.len() != p {
                return Err(dim_err(format!("{} concentrations for {p} classes", alpha.len())));
            }
            sample_abundances_dirichlet(height * width, alpha, cfg.pure_pixel_fraction, seed)
        }
        AbundanceGenerator::Grf {
            correlation_length,
            sharpness,
        } => sample_abundances_grf(
            height,
            width,
            p,
            *correlation_length,
            *sharpness,
            cfg.pure_pixel_fraction,
            seed,
        ),
    }
}

/// Generates variants, draws one variant per class and pixel, mixes with
/// sampled abundances and adds noise (`snr_db = +inf` for none).
pub fn synthesize_scene(
    base: &SpectralLibrary,
    height: usize,
    width: usize,
    abund_cfg: &AbundanceFieldConfig,
    var_cfg: &VariabilityConfig,
    snr_db: f64,
    seed: u64,
) -> Result<SceneTruth> {
    if height == 0 || width == 0 {
        return Err(param_err("scene must have at least one pixel"));
    }
    let variants = generate_variants(base, var_cfg, seed)?;
    let (l, p, n) = (base.bands(), base.n_classes(), height * width);
    let k = var_cfg.n_variants;
    let draw_seed = derive(seed, var_cfg.seed ^ tag::DRAW);
    let selected: Vec<Vec<usize>> = (0..n)
        .map(|j| {
            let mut rng = substream(draw_seed, tag::DRAW, j as u64);
            (0..p).map(|_| rng.random_range(0..k)).collect()
        })
        .collect();
    let mut field = DMatrix::zeros(l * p, n);
    for (j, sel) in selected.iter().enumerate() {
        for (c, &v) in sel.iter().enumerate() {
            let sig = variants.classes()[c].signatures.column(v);
            field.view_mut((c * l, j), (l, 1)).copy_from(&sig);
        }
    }
    let endmembers = EndmemberField::new(l, p, field)?;
    let abundances =
        sample_abundances(abund_cfg, height, width, p, seed)?.with_class_names(base.class_names())?;
    let mut clean = mix_forward(&endmembers, &abundances, height, width)?;
    clean.name = "clean".into();
    let mut noisy = add_noise(&clean, snr_db, derive(seed, tag::NOISE))?;
    noisy.name = "scene".into();
    Ok(SceneTruth {
        image_noisy: noisy,
        image_clean: clean,
        abundances,
        endmembers,
        variants,
        selected_variants: selected,
        snr_db,
        seed,
    })
}

fn attach_wavelengths(img: SpectralImage, wl: &[f64]) -> Result<SpectralImage> {
    img.with_wavelengths(wl.to_vec())
}

/// Runs [`synthesize_scene`] from a config; file paths in it resolve against
/// `base_dir`.
pub fn synthesize_from_config(cfg: &SceneConfig, base_dir: &Path) -> Result<SceneTruth> {
    let base = cfg.base.load(base_dir)?;
    let snr = cfg.snr_db.unwrap_or(f64::INFINITY);
    let mut truth = synthesize_scene(
        &base,
        cfg.height,
        cfg.width,
        &cfg.abundances,
        &cfg.variability,
        snr,
        cfg.seed,
    )?;
    if let BaseSpectra::Builtin { bands } = cfg.base {
        let wl = builtin_wavelengths(bands);
        truth.image_clean = attach_wavelengths(truth.image_clean, &wl)?;
        truth.image_noisy = attach_wavelengths(truth.image_noisy, &wl)?;
    }
    Ok(truth)
}
