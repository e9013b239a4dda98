//! End-to-end exercise of the full library stack on a small scene:
//! synthesize, split, train a denoiser and the learned baselines, sample
//! priors both ways, and check the evaluation reports' structure and the
//! obvious orderings.

use std::time::Instant;

use beamdiff_core::baselines::{
    aoa_prior, baseline_examples, random_prior, train_baseline, uniform_prior, AngleSource,
    BaselineKind, BaselineTrainConfig,
};
use beamdiff_core::codebook::dft_codebook;
use beamdiff_core::dataset::{build_dataset, split_dataset, BeamDataset, UeRecord};
use beamdiff_core::diffusion::{
    linear_schedule, train_denoiser, training_set, Denoiser, DenoiserVariant, ScheduleSpec,
    TrainConfig,
};
use beamdiff_core::exec::Serial;
use beamdiff_core::features::FeatureNormalizer;
use beamdiff_core::mat::Mat;
use beamdiff_core::metrics::evaluate;
use beamdiff_core::rng::{self, Ns};
use beamdiff_core::sampler::{sample_priors_batch, SamplerConfig, SamplerKind};
use beamdiff_core::scene::{generate_scene, SceneConfig};

/// A wide-angle desk scene: users fan out to roughly +/-76 degrees of
/// boresight so optimal beams spread across the codebook instead of piling
/// onto the broadside beam. Light blockage keeps all-zero-gain users (whose
/// best beam degenerates to the argmax tie-break) rare.
fn wide_scene_config() -> SceneConfig {
    let mut cfg = SceneConfig::default();
    cfg.grid.x0 = 10.0;
    cfg.grid.x1 = 30.0;
    cfg.grid.y0 = -40.0;
    cfg.grid.y1 = 40.0;
    cfg.grid.step = 2.0;
    cfg.n_blockers = 2;
    cfg
}

fn small_dataset(seed: u64) -> (BeamDataset, SceneConfig) {
    let cfg = wide_scene_config();
    let scene = generate_scene(&cfg, seed).unwrap();
    let cb = dft_codebook(cfg.n_t, cfg.n_beam).unwrap();
    let mut ds = build_dataset(&scene, &cb, &Serial).unwrap();
    split_dataset(&mut ds, 0.8, seed).unwrap();
    (ds, cfg)
}

fn standardized_rows(records: &[&UeRecord], d: usize, norm: &FeatureNormalizer) -> Mat {
    let mut m = Mat::zeros(records.len(), d);
    for (i, r) in records.iter().enumerate() {
        m.row_mut(i)
            .copy_from_slice(&norm.apply(r.features_d(d)).unwrap());
    }
    m
}

#[test]
fn full_stack_produces_valid_reports_in_the_expected_order() {
    let (ds, cfg) = small_dataset(7);
    let cb = dft_codebook(cfg.n_t, cfg.n_beam).unwrap();
    let norm = FeatureNormalizer::fit(ds.train_records().map(|r| r.features.as_slice())).unwrap();
    let sched = linear_schedule(ScheduleSpec::default()).unwrap();

    let d = 5usize;
    let mut den = Denoiser::new(
        DenoiserVariant::MlpSmall,
        d,
        cfg.n_beam,
        &mut rng::substream(1, Ns::Init, 0),
    )
    .unwrap();
    let examples = training_set(ds.train_records(), d, &norm).unwrap();
    let tcfg = TrainConfig {
        epochs: 20,
        batch_size: 64,
        seed: 1,
        ..TrainConfig::default()
    };
    let trace = train_denoiser(&mut den, &sched, &examples, &tcfg, &Serial).unwrap();
    assert!(trace.last().unwrap() < &trace[0], "denoiser loss should drop");

    // Learned baselines on the same split.
    let bexamples = baseline_examples(ds.train_records(), d, &norm).unwrap();
    let bcfg = BaselineTrainConfig {
        epochs: 15,
        batch_size: 128,
        seed: 2,
        ..BaselineTrainConfig::default()
    };
    let (clf, _) =
        train_baseline(BaselineKind::Classifier, &bexamples, d, cfg.n_beam, &bcfg, &Serial)
            .unwrap();
    let (reg, _) =
        train_baseline(BaselineKind::Regressor, &bexamples, d, cfg.n_beam, &bcfg, &Serial)
            .unwrap();

    let val: Vec<_> = ds.val_records().collect();
    assert!(val.len() >= 60, "split should leave a real validation set");
    let x_val = standardized_rows(&val, d, &norm);

    // Sampled priors for every validation user: the fast ladder end to end,
    // the full ladder on a subset (its algebra is oracle-tested; here it
    // only needs to flow through the same plumbing).
    let ddim_cfg = SamplerConfig {
        kind: SamplerKind::Ddim,
        ddim_steps: 25,
        eta: 0.0,
        n_samples: 1,
    };
    let mut rngs: Vec<_> = val
        .iter()
        .map(|r| rng::substream(1, Ns::Sample, r.ue_id as u64))
        .collect();
    let (ddim_priors, _) = sample_priors_batch(&den, &sched, &x_val, &ddim_cfg, &mut rngs).unwrap();

    let ddpm_cfg = SamplerConfig {
        kind: SamplerKind::Ddpm,
        ..ddim_cfg
    };
    let sub: Vec<_> = val.iter().copied().take(25).collect();
    let x_sub = standardized_rows(&sub, d, &norm);
    let mut sub_rngs: Vec<_> = sub
        .iter()
        .map(|r| rng::substream(1, Ns::Sample, r.ue_id as u64))
        .collect();
    let (ddpm_priors, _) =
        sample_priors_batch(&den, &sched, &x_sub, &ddpm_cfg, &mut sub_rngs).unwrap();

    let row_of = |records: &[&UeRecord], id: usize| -> usize {
        records.iter().position(|r| r.ue_id == id).unwrap()
    };
    let ddim_report = evaluate(val.iter().copied(), |rec| {
        Ok(ddim_priors.row(row_of(&val, rec.ue_id)).to_vec())
    })
    .unwrap();
    let ddpm_report = evaluate(sub.iter().copied(), |rec| {
        Ok(ddpm_priors.row(row_of(&sub, rec.ue_id)).to_vec())
    })
    .unwrap();

    // Baseline reports over the same users.
    let clf_report = evaluate(val.iter().copied(), |rec| {
        clf.predict_prior(&norm.apply(rec.features_d(d)).unwrap())
    })
    .unwrap();
    let reg_report = evaluate(val.iter().copied(), |rec| {
        reg.predict_prior(&norm.apply(rec.features_d(d)).unwrap())
    })
    .unwrap();
    let aoa_report = evaluate(val.iter().copied(), |rec| {
        Ok(aoa_prior(rec, &cb, cfg.spacing_wl, AngleSource::Aod))
    })
    .unwrap();
    let uni_report =
        evaluate(val.iter().copied(), |rec| Ok(uniform_prior(rec.gains.len()))).unwrap();
    let mut prior_rng = rng::substream(3, Ns::RandomPrior, 0);
    let rand_report = evaluate(val.iter().copied(), |rec| {
        Ok(random_prior(&mut prior_rng, rec.gains.len()))
    })
    .unwrap();

    println!(
        "hit@1: ddim {:.3} ddpm {:.3} clf {:.3} reg {:.3} aoa {:.3} uni {:.3} rand {:.3}",
        ddim_report.hit[0],
        ddpm_report.hit[0],
        clf_report.hit[0],
        reg_report.hit[0],
        aoa_report.hit[0],
        uni_report.hit[0],
        rand_report.hit[0],
    );

    // Structure: every full-split report covers the same users; evaluate
    // itself asserts monotone curves and unit endpoints.
    for rep in [&ddim_report, &clf_report, &reg_report, &aoa_report, &uni_report, &rand_report] {
        assert_eq!(rep.total, val.len());
        assert_eq!(rep.n_beam, cfg.n_beam);
    }
    assert_eq!(ddpm_report.total, sub.len());

    // Ordering: the oracle saturates Hit@1, and everything informed beats
    // the uninformed floor at k = 1 on a wide-angle scene.
    let oracle = evaluate(val.iter().copied(), |rec| Ok(rec.prior.as_slice().to_vec())).unwrap();
    assert_eq!(oracle.hit[0], 1.0);
    assert_eq!(oracle.snr[0], 1.0);
    for (name, rep) in [
        ("ddim", &ddim_report),
        ("classifier", &clf_report),
        ("regressor", &reg_report),
        ("aoa", &aoa_report),
    ] {
        assert!(
            rep.hit[0] > uni_report.hit[0],
            "{name} Hit@1 {} should beat uniform {}",
            rep.hit[0],
            uni_report.hit[0]
        );
    }
}

/// Timing probe for sizing the heavier suites; run explicitly with
/// `cargo test -p beamdiff-core --test pipeline -- --ignored --nocapture`.
#[test]
#[ignore]
fn throughput_probe() {
    let t0 = Instant::now();
    let cfg = SceneConfig::default();
    let scene = generate_scene(&cfg, 7).unwrap();
    let cb = dft_codebook(cfg.n_t, cfg.n_beam).unwrap();
    let mut ds = build_dataset(&scene, &cb, &Serial).unwrap();
    split_dataset(&mut ds, 0.9, 7).unwrap();
    println!(
        "dataset: {} users ({} LOS) in {:.2?}",
        ds.len(),
        ds.los_count(),
        t0.elapsed()
    );

    let norm = FeatureNormalizer::fit(ds.train_records().map(|r| r.features.as_slice())).unwrap();
    let examples = training_set(ds.train_records(), 7, &norm).unwrap();
    let sched = linear_schedule(ScheduleSpec::default()).unwrap();

    for variant in [
        DenoiserVariant::MlpSmall,
        DenoiserVariant::MlpLarge,
        DenoiserVariant::Unet,
    ] {
        let mut den =
            Denoiser::new(variant, 7, cfg.n_beam, &mut rng::substream(1, Ns::Init, 0)).unwrap();
        let tcfg = TrainConfig {
            epochs: 1,
            batch_size: 128,
            seed: 1,
            ..TrainConfig::default()
        };
        let t = Instant::now();
        train_denoiser(&mut den, &sched, &examples, &tcfg, &Serial).unwrap();
        println!(
            "{variant:?} ({} params): 1 epoch over {} examples in {:.2?}",
            den.param_count(),
            examples.len(),
            t.elapsed()
        );

        let val: Vec<_> = ds.val_records().take(100).collect();
        let x_val = standardized_rows(&val, 7, &norm);
        for (name, scfg) in [
            (
                "ddpm-500",
                SamplerConfig {
                    kind: SamplerKind::Ddpm,
                    ddim_steps: 50,
                    eta: 0.0,
                    n_samples: 1,
                },
            ),
            (
                "ddim-50",
                SamplerConfig {
                    kind: SamplerKind::Ddim,
                    ddim_steps: 50,
                    eta: 0.0,
                    n_samples: 1,
                },
            ),
        ] {
            let mut rngs: Vec<_> = val
                .iter()
                .map(|r| rng::substream(1, Ns::Sample, r.ue_id as u64))
                .collect();
            let t = Instant::now();
            let (priors, _) = sample_priors_batch(&den, &sched, &x_val, &scfg, &mut rngs).unwrap();
            println!(
                "  {name}: {} users in {:.2?} (sum row0 = {:.3})",
                val.len(),
                t.elapsed(),
                priors.row(0).iter().sum::<f64>()
            );
        }
    }
}
