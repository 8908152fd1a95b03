//! End-to-end checks on a small synthetic dataset.

use std::fs;

use cheapseg::bundle::ModelBundle;
use cheapseg::codec::Codec;
use cheapseg::config::RunConfig;
use cheapseg::dataset::{generate_synthetic, load_dataset, presets, Dataset, Split};
use cheapseg::dstf::ClusterRecognizer;
use cheapseg::ilp::IlpModel;
use cheapseg::instrument::Counters;
use cheapseg::location::LocationPotentials;
use cheapseg::par;
use cheapseg::pipeline::{
    ablate, evaluate_samples, segment_image, sweep_omega, train_bundle, Appearance, Prior,
    SegmentOptions,
};
use cheapseg::stf::TextonForest;
use cheapseg::Error;

fn small() -> Dataset {
    let mut spec = presets::easy();
    spec.train = 16;
    spec.val = 4;
    spec.test = 4;
    spec.width = 32;
    spec.height = 32;
    generate_synthetic(&spec, 5).unwrap()
}

fn config(seed: u64) -> RunConfig {
    let mut c = RunConfig {
        seed,
        ..RunConfig::default()
    };
    c.stf.patch_size = 9;
    c.stf.trees = 3;
    c.stf.candidates = 60;
    c.dstf.cap_fraction = 0.5;
    c
}

fn saved_files(b: &ModelBundle) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    b.save(dir.path()).unwrap();
    let mut out: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

fn round_trip<T: Codec>(v: &T) {
    let bytes = v.to_bytes();
    let back = T::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes(), bytes);
    assert!(T::from_bytes(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let data = small();
    let a = par::with_threads(1, || train_bundle(&data, &config(3)).unwrap());
    let b = par::with_threads(4, || train_bundle(&data, &config(3)).unwrap());
    assert_eq!(saved_files(&a), saved_files(&b));
    let c = train_bundle(&data, &config(4)).unwrap();
    assert_ne!(c.stf.to_bytes(), a.stf.to_bytes());
}

#[test]
fn components_round_trip_through_the_codec() {
    let b = train_bundle(&small(), &config(1)).unwrap();
    round_trip::<TextonForest>(&b.stf);
    round_trip::<ClusterRecognizer>(&b.dstf.recognizer);
    round_trip::<LocationPotentials>(&b.location);
    round_trip::<IlpModel>(b.ilp_context.as_ref().unwrap());
    round_trip::<IlpModel>(b.ilp_multiclass.as_ref().unwrap());
    assert!(matches!(
        IlpModel::from_bytes(&b.stf.to_bytes()),
        Err(Error::Model(_))
    ));
}

#[test]
fn saved_bundle_predicts_identically() {
    let data = small();
    let b = train_bundle(&data, &config(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    b.save(dir.path()).unwrap();
    let loaded = ModelBundle::load(dir.path()).unwrap();
    let opts = SegmentOptions::full(&b);
    for s in data.split(Split::Test) {
        let x = segment_image(&b, &s.image, None, &opts, None).unwrap();
        let y = segment_image(&loaded, &s.image, None, &opts, None).unwrap();
        assert_eq!(x, y);
    }
    fs::remove_file(dir.path().join("recognizer.bin")).unwrap();
    assert!(matches!(
        ModelBundle::load(dir.path()),
        Err(Error::MissingComponent(_))
    ));
}

#[test]
fn one_route_per_image() {
    let data = small();
    let b = train_bundle(&data, &config(6)).unwrap();
    let opts = SegmentOptions::full(&b);
    for s in data.split(Split::Test) {
        let counters = Counters::new();
        segment_image(&b, &s.image, None, &opts, Some(&counters)).unwrap();
        let snap = counters.snapshot();
        assert_eq!(snap.recognizer_calls, 1);
        assert_eq!(snap.specialist_calls.iter().sum::<u64>(), 1);
        assert_eq!(
            snap.pixel_predictions,
            (s.image.width() * s.image.height()) as u64
        );
    }
}

#[test]
fn full_weight_on_location_skips_the_forests() {
    let data = small();
    let b = train_bundle(&data, &config(7)).unwrap();
    let val = data.split(Split::Val);
    let rows = sweep_omega(&b, &val, &[0.0, 1.0], &SegmentOptions::full(&b)).unwrap();
    assert_eq!(rows[0].appearance_evaluations, val.len() as u64);
    assert_eq!(rows[1].appearance_evaluations, 0);
}

#[test]
fn ablation_covers_every_cell() {
    let data = small();
    let b = train_bundle(&data, &config(8)).unwrap();
    let test = data.split(Split::Test);
    let priors = [Prior::None, Prior::Multiclass, Prior::Context, Prior::Ideal];
    let rows = ablate(&b, &test, &b.config().crf, &priors).unwrap();
    assert_eq!(rows.len(), 8);
    for a in [Appearance::Stf, Appearance::Dstf] {
        for p in priors {
            let row = rows
                .iter()
                .find(|r| r.appearance == a && r.prior == p)
                .unwrap();
            let direct = evaluate_samples(
                &b,
                &test,
                &SegmentOptions {
                    appearance: a,
                    prior: p,
                    crf: b.config().crf.clone(),
                },
                None,
            )
            .unwrap();
            assert_eq!(row.metrics, direct, "{a}/{p}");
        }
    }
}

#[test]
fn dataset_survives_save_and_load() {
    let data = small();
    let dir = tempfile::tempdir().unwrap();
    let manifest = data.save(dir.path()).unwrap();
    let back = load_dataset(&manifest).unwrap();
    assert_eq!(back.samples.len(), data.samples.len());
    for (a, b) in data.samples.iter().zip(&back.samples) {
        assert_eq!(a.image, b.image);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.split, b.split);
    }
    assert_eq!(back.classes, data.classes);
}
