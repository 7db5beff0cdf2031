//! Release acceptance suite: one test per criterion, each ending in a
//! single `criterion N: PASS (...)` line with the measured numbers
//! (visible with `--nocapture`; a failure panics with the discrepancy).
//!
//! Criteria covered:
//!   1. trainable-parameter counts, exact or within stated tolerance
//!   2. per-layer output shapes against the reference layer listings
//!   3. finite-difference gradient verification of every layer type
//!   4. segmentation contract over the full supported clip-length range
//!   5. loudness meter calibration and gain homogeneity
//!   6. augmentation corpus arithmetic, determinism, and pitch accuracy
//!   7. fold stratification, leakage exclusion, and sum-rule aggregation
//!   8. learning sanity on a synthetic two-genre fixture
//!   9. checkpoint round trip reproducing metrics bit-identically

use std::collections::{BTreeMap, BTreeSet};

use genre1d::audio::augment::pitch_shift;
use genre1d::audio::{
    self, canonicalize, measure_loudness, segment, AudioClip, AugmentationConfig, CLIP_LEN,
    MIN_CLIP_LEN, SEGMENTS_PER_CLIP, SEGMENT_HOP, SEGMENT_LEN,
};
use genre1d::models::{
    build_architecture, parameter_report, shape_trace, ArchName, Network, TraceShape, NUM_CLASSES,
};
use genre1d::persist::{
    config_digest, load_checkpoint, save_checkpoint, CheckpointMeta, DatasetManifest,
    ManifestEntry, ManifestHeader,
};
use genre1d::synth;
use genre1d::train::{
    aggregate_probabilities, assemble_round, make_folds, make_folds_flexible, predict_track,
    score_records, AggregationRule, SegmentSet, TrackClips, TrackRef, TrainConfig, TrainSession,
};
use genre1d::SAMPLE_RATE;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[path = "fdcases/mod.rs"]
mod fdcases;

fn pass(criterion: u32, detail: String) {
    println!("criterion {criterion}: PASS ({detail})");
}

// ── 1. Parameter counts ─────────────────────────────────────────────────

#[test]
fn criterion_1_parameter_counts() {
    let exact = [
        (ArchName::ResNet1d, 4_086_794u64),
        (ArchName::PonsScale, 373_898),
        (ArchName::Dieleman, 53_495),
        (ArchName::AbdoliEsc, 1_223_082),
    ];
    for (arch, want) in exact {
        let report = parameter_report(&build_architecture(arch)).unwrap();
        assert_eq!(
            report.trainable,
            want,
            "{}: counted {} trainable parameters, reference {}",
            arch.cli_name(),
            report.trainable,
            want
        );
        assert_eq!(report.discrepancy(), 0);
    }

    let near = [
        (ArchName::SampleCnn, 1_848_842u64, 0.001),
        (ArchName::Koerich, 1_707_506, 0.01),
    ];
    let mut rels = Vec::new();
    for (arch, reference, tol) in near {
        let report = parameter_report(&build_architecture(arch)).unwrap();
        assert_eq!(report.reference, reference);
        let rel = report.discrepancy().unsigned_abs() as f64 / reference as f64;
        assert!(
            rel < tol,
            "{}: relative discrepancy {rel:.5} exceeds {tol}",
            arch.cli_name()
        );
        assert_ne!(
            report.discrepancy(),
            0,
            "{}: the known count divergence must be reported, not hidden",
            arch.cli_name()
        );
        rels.push(format!("{} {:+.3}%", arch.cli_name(), 100.0 * rel));
    }

    pass(
        1,
        format!("four exact counts; near-miss reports: {}", rels.join(", ")),
    );
}

// ── 2. Shape traces ─────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Conv,
    Residual,
    MaxPool,
    AvgPool,
    Dense,
    Output,
}

use Kind::*;

type Row = (Kind, TraceShape);

fn m(kind: Kind, channels: usize, len: usize) -> Row {
    (kind, TraceShape::Map { channels, len })
}

fn f(kind: Kind, d: usize) -> Row {
    (kind, TraceShape::Flat(d))
}

/// The trace rows that correspond to reference-table rows. Flatten and
/// dropout are plumbing the tables do not list.
fn layer_rows(arch: ArchName) -> Vec<Row> {
    shape_trace(&build_architecture(arch))
        .unwrap()
        .iter()
        .filter_map(|row| {
            let kind = match row.label.split(' ').next().unwrap() {
                "conv" => Conv,
                "residual" => Residual,
                "maxpool" => MaxPool,
                "avgpool" => AvgPool,
                "dense" => Dense,
                "output" => Output,
                _ => return None,
            };
            Some((kind, row.shape))
        })
        .collect()
}

fn assert_rows(arch: ArchName, expected: &[Row]) {
    let got = layer_rows(arch);
    assert_eq!(
        got,
        expected,
        "{}: traced shapes diverge from the reference listing",
        arch.cli_name()
    );
}

#[test]
fn criterion_2_shape_traces() {
    assert_rows(ArchName::ResNet1d, &[
        m(Conv, 128, 36_750),
        m(Residual, 128, 36_750),
        m(MaxPool, 128, 12_250),
        m(Residual, 128, 12_250),
        m(MaxPool, 128, 4_083),
        m(Residual, 256, 4_083),
        m(MaxPool, 256, 1_361),
        m(Residual, 256, 1_361),
        m(MaxPool, 256, 453),
        m(Residual, 256, 453),
        m(MaxPool, 256, 151),
        m(Residual, 256, 151),
        m(MaxPool, 256, 50),
        m(Residual, 256, 50),
        m(MaxPool, 256, 16),
        m(Residual, 256, 16),
        m(MaxPool, 256, 5),
        m(Residual, 512, 5),
        m(MaxPool, 512, 1),
        m(Conv, 512, 1),
        f(Output, 10),
    ]);

    assert_rows(ArchName::PonsScale, &[
        m(Conv, 64, 36_750),
        m(Conv, 64, 36_748),
        m(MaxPool, 64, 12_249),
        m(Conv, 64, 12_247),
        m(MaxPool, 64, 4_082),
        m(Conv, 128, 4_080),
        m(MaxPool, 128, 1_360),
        m(Conv, 128, 1_358),
        m(MaxPool, 128, 452),
        m(Conv, 128, 450),
        m(MaxPool, 128, 150),
        m(Conv, 256, 148),
        m(MaxPool, 256, 49),
        f(Output, 10),
    ]);

    assert_rows(ArchName::Dieleman, &[
        m(Conv, 1, 430),
        m(Conv, 32, 212),
        m(Conv, 32, 205),
        m(MaxPool, 32, 51),
        m(Conv, 32, 44),
        m(MaxPool, 32, 11),
        f(Dense, 100),
        f(Output, 10),
    ]);

    assert_rows(ArchName::AbdoliEsc, &[
        m(Conv, 64, 109_739),
        m(MaxPool, 64, 13_717),
        m(Conv, 32, 6_859),
        m(MaxPool, 32, 857),
        m(Conv, 64, 429),
        m(Conv, 128, 215),
        m(Conv, 256, 108),
        m(MaxPool, 256, 27),
        f(Dense, 128),
        f(Dense, 64),
        f(Output, 10),
    ]);

    assert_rows(ArchName::Koerich, &[
        m(Conv, 32, 109_739),
        m(AvgPool, 32, 13_717),
        m(Conv, 16, 6_731),
        m(AvgPool, 16, 841),
        m(Conv, 32, 389),
        m(Conv, 64, 179),
        m(Conv, 128, 82),
        m(MaxPool, 128, 41),
        f(Dense, 256),
        f(Output, 10),
    ]);

    // The sample_cnn reference listing is internally inconsistent: it
    // shows one kernel-3 stride-1 convolution turning length 50 into 16
    // (impossible without the pool row it omits), leaving it a conv short
    // of its own prose. The builder realizes the corrected structure; the
    // verbatim listing must diverge from the trace at exactly that row,
    // and only the corrected listing may match.
    let verbatim = vec![
        m(Conv, 128, 36_750),
        m(Conv, 128, 36_750),
        m(MaxPool, 128, 12_250),
        m(Conv, 128, 12_250),
        m(MaxPool, 128, 4_083),
        m(Conv, 256, 4_083),
        m(MaxPool, 256, 1_361),
        m(Conv, 256, 1_361),
        m(MaxPool, 256, 453),
        m(Conv, 256, 453),
        m(MaxPool, 256, 151),
        m(Conv, 256, 151),
        m(MaxPool, 256, 50),
        m(Conv, 256, 16), // kernel-3 stride-1 same padding cannot shrink 50 to 16
        m(MaxPool, 256, 5),
        m(Conv, 512, 5),
        m(MaxPool, 512, 1),
        m(Conv, 512, 1),
        f(Output, 10),
    ];
    let corrected = {
        let mut rows = verbatim.clone();
        rows.splice(13..14, [m(Conv, 256, 50), m(MaxPool, 256, 16), m(Conv, 256, 16)]);
        rows
    };
    let got = layer_rows(ArchName::SampleCnn);
    assert_eq!(got, corrected, "sample_cnn: corrected reconstruction must match");
    let first_divergence = verbatim
        .iter()
        .zip(&got)
        .position(|(a, b)| a != b)
        .expect("the verbatim listing must diverge");
    assert_eq!(
        first_divergence, 13,
        "sample_cnn: the divergence must sit at the documented row"
    );
    assert_eq!(verbatim[13], m(Conv, 256, 16));
    assert_eq!(got[13], m(Conv, 256, 50));

    pass(
        2,
        format!(
            "five exact listings; sample_cnn flagged at row {first_divergence} \
             (listed 256 x 16, realizable 256 x 50)"
        ),
    );
}

// ── 3. Gradient verification ────────────────────────────────────────────

#[test]
fn criterion_3_gradient_verification() {
    use fdcases::*;

    macro_rules! both {
        ($label:literal, $case:expr) => {
            fd_check::<f32>(concat!($label, "_f32"), STEP32, TOL32, $case);
            fd_check::<f64>(concat!($label, "_f64"), STEP64, TOL64, $case);
        };
    }

    both!("conv1d", conv_case);
    both!("dense", dense_case);
    both!("maxpool", maxpool_case);
    both!("avgpool", avgpool_case);
    both!("batchnorm_train", batchnorm_train_case);
    both!("batchnorm_infer", batchnorm_infer_case);
    both!("softmax", softmax_case);
    both!("dropout", dropout_case);
    both!("cross_entropy", cross_entropy_case);
    both!("add", add_case);
    both!("flatten", flatten_case);
    both!("residual_block", residual_case);
    both!("layer_chain", chain_case);
    fd_check::<f32>("relu_f32", STEP32, TOL32, |s| activation_case(s, 0, STEP32));
    fd_check::<f64>("relu_f64", STEP64, TOL64, |s| activation_case(s, 0, STEP64));
    fd_check::<f32>("leaky_relu_f32", STEP32, TOL32, |s| activation_case(s, 1, STEP32));
    fd_check::<f64>("leaky_relu_f64", STEP64, TOL64, |s| activation_case(s, 1, STEP64));
    fd_check::<f32>("sigmoid_f32", STEP32, TOL32, |s| activation_case(s, 2, STEP32));
    fd_check::<f64>("sigmoid_f64", STEP64, TOL64, |s| activation_case(s, 2, STEP64));

    pass(
        3,
        "16 layer kinds x 2 precisions x 20 randomized tensors, rel err < 1e-3 (f32) / 1e-5 (f64)"
            .to_string(),
    );
}

// ── 4. Segmentation contract ────────────────────────────────────────────

fn ramp_clip(len: usize) -> AudioClip {
    let mut samples: Vec<f32> = (0..len).map(|i| i as f32).collect();
    canonicalize(&mut samples, "ramp").unwrap();
    AudioClip {
        samples,
        sample_rate: SAMPLE_RATE,
        track_id: "ramp".to_string(),
        genre_label: Some(0),
    }
}

#[test]
fn criterion_4_segmentation_contract() {
    // Exhaustive sweep of every supported raw length.
    for len in MIN_CLIP_LEN..=662_500 {
        let clip = ramp_clip(len);
        assert_eq!(clip.samples.len(), CLIP_LEN);
        let segments = segment(&clip).unwrap();
        assert_eq!(segments.len(), SEGMENTS_PER_CLIP, "length {len}");
        for s in &segments {
            assert_eq!(s.samples.len(), SEGMENT_LEN, "length {len}");
        }
    }

    // Window placement: on a ramp, segment k must start at k times the hop.
    for len in [MIN_CLIP_LEN, CLIP_LEN, 662_500] {
        let clip = ramp_clip(len);
        let segments = segment(&clip).unwrap();
        for (k, s) in segments.iter().enumerate() {
            assert_eq!(s.segment_index, k);
            let start = k * SEGMENT_HOP;
            assert_eq!(s.samples[0], start as f32, "length {len}, segment {k}");
            assert_eq!(
                s.samples[SEGMENT_LEN - 1],
                (start + SEGMENT_LEN - 1) as f32,
                "length {len}, segment {k}"
            );
            assert_eq!(s.genre_label, clip.genre_label);
        }
        // The last window must end exactly at the minimum clip length.
        assert_eq!(20 * SEGMENT_HOP + SEGMENT_LEN, MIN_CLIP_LEN);
    }

    // One sample below the supported range is rejected, not padded over.
    let mut short: Vec<f32> = vec![0.1; MIN_CLIP_LEN - 1];
    assert!(canonicalize(&mut short, "short").is_err());

    pass(
        4,
        format!(
            "lengths {MIN_CLIP_LEN}..=662500 all yield {SEGMENTS_PER_CLIP} x {SEGMENT_LEN} \
             at hop {SEGMENT_HOP}"
        ),
    );
}

// ── 5. Loudness meter ───────────────────────────────────────────────────

fn sine(freq: f64, amplitude: f64, seconds: usize) -> Vec<f32> {
    let n = seconds * SAMPLE_RATE as usize;
    (0..n)
        .map(|i| {
            (amplitude * (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE as f64).sin())
                as f32
        })
        .collect()
}

#[test]
fn criterion_5_loudness_meter() {
    let full = sine(997.0, 1.0, 10);
    let reference = measure_loudness(&full, SAMPLE_RATE).unwrap();
    assert!(
        (reference - (-3.01)).abs() <= 0.1,
        "997 Hz full-scale sine measured {reference:.3} LUFS, expected -3.01 +/- 0.1"
    );

    let mut worst: f64 = 0.0;
    for step in 1..=10 {
        let alpha = step as f64 / 10.0;
        let scaled: Vec<f32> = full.iter().map(|&v| (v as f64 * alpha) as f32).collect();
        let measured = measure_loudness(&scaled, SAMPLE_RATE).unwrap();
        let expected = reference + 20.0 * alpha.log10();
        let err = (measured - expected).abs();
        assert!(
            err <= 0.05,
            "gain homogeneity broke at alpha {alpha}: measured {measured:.4}, \
             expected {expected:.4}"
        );
        worst = worst.max(err);
    }

    pass(
        5,
        format!("997 Hz sine at {reference:.3} LUFS; homogeneity error <= {worst:.4} LU"),
    );
}

// ── 6. Augmentation corpus ──────────────────────────────────────────────

fn augmented_wav_digests(clips: &[AudioClip], config: &AugmentationConfig) -> Vec<(String, String)> {
    let dir = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    for clip in clips {
        for aug in audio::augment_clip(clip, config).unwrap() {
            let path = dir.path().join(format!("{}.wav", aug.clip.track_id));
            audio::wav::write_wav_16bit(&path, &aug.clip.samples, aug.clip.sample_rate).unwrap();
            let bytes = std::fs::read(&path).unwrap();
            let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
            digests.push((aug.clip.track_id.clone(), digest));
        }
    }
    digests
}

#[test]
fn criterion_6_augmentation_corpus() {
    // Corpus arithmetic at full scale, on manifest entries alone: 1,000
    // originals with five variants each make exactly 6,000 entries.
    let tags = ["noise", "gain", "loudness", "pitch", "stretch"];
    let mut entries = Vec::new();
    for genre in 0..NUM_CLASSES {
        for i in 0..100 {
            let id = format!("g{genre}.t{i:05}");
            entries.push(ManifestEntry {
                track_id: id.clone(),
                path: format!("{id}.wav"),
                genre,
                duration: CLIP_LEN as u64,
                origin: None,
                transform: None,
                parameter: None,
            });
            for tag in tags {
                entries.push(ManifestEntry {
                    track_id: format!("{id}.{tag}"),
                    path: format!("{id}.{tag}.wav"),
                    genre,
                    duration: CLIP_LEN as u64,
                    origin: Some(id.clone()),
                    transform: Some(tag.to_string()),
                    parameter: Some(1.0),
                });
            }
        }
    }
    let manifest = DatasetManifest {
        header: ManifestHeader {
            seed: 0,
            config_digest: String::new(),
            genres: Vec::new(),
        },
        entries,
    };
    manifest.validate().unwrap();
    assert_eq!(manifest.entries.len(), 6_000);
    assert_eq!(manifest.originals().count(), 1_000);

    // The audio path on a tiny fixture: five variants per clip, and the
    // same seed reproduces every output file byte for byte.
    let clips = synth::fixture_corpus(2, 33);
    let config = AugmentationConfig {
        seed: 11,
        ..AugmentationConfig::default()
    };
    let first = augmented_wav_digests(&clips, &config);
    assert_eq!(first.len(), 5 * clips.len());
    let second = augmented_wav_digests(&clips, &config);
    assert_eq!(first, second, "identical seeds must give identical digests");
    let reseeded = augmented_wav_digests(
        &clips,
        &AugmentationConfig {
            seed: 12,
            ..AugmentationConfig::default()
        },
    );
    assert_ne!(first, reseeded, "a new seed must draw new parameters");

    // Pitch accuracy: one octave up doubles a sine's spectral peak.
    let tone = AudioClip {
        samples: sine(440.0, 0.6, 3),
        sample_rate: SAMPLE_RATE,
        track_id: "tone".to_string(),
        genre_label: None,
    };
    let shifted = pitch_shift(&tone, 12.0);
    let peak = fft_peak_hz(&shifted.samples, SAMPLE_RATE as f64);
    let rel = (peak - 880.0).abs() / 880.0;
    assert!(rel < 0.01, "octave shift peaked at {peak:.1} Hz");

    pass(
        6,
        format!(
            "6,000-entry manifest validates; {} fixture files digest-stable; \
             octave peak at {peak:.1} Hz ({:+.2}%)",
            first.len(),
            100.0 * (peak - 880.0) / 880.0
        ),
    );
}

fn fft_peak_hz(samples: &[f32], rate: f64) -> f64 {
    use rustfft::num_complex::Complex;
    use rustfft::FftPlanner;

    let n = 16_384.min(samples.len());
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> = samples[..n]
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos();
            Complex::new(v as f64 * hann, 0.0)
        })
        .collect();
    fft.process(&mut buf);
    let peak = buf[..n / 2]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    peak as f64 * rate / n as f64
}

// ── 7. Protocol invariants ──────────────────────────────────────────────

#[test]
fn criterion_7_protocol_invariants() {
    // Stratification: every seed splits 1,000 tracks into 340/330/330
    // with 34/33/33 of each genre.
    let refs: Vec<TrackRef> = (0..NUM_CLASSES)
        .flat_map(|genre| {
            (0..100).map(move |i| TrackRef {
                track_id: format!("g{genre}.t{i:05}"),
                genre,
            })
        })
        .collect();
    let genre_of: BTreeMap<&str, usize> =
        refs.iter().map(|r| (r.track_id.as_str(), r.genre)).collect();
    for seed in 0..100u64 {
        let plan = make_folds(&refs, seed).unwrap();
        let sizes: Vec<usize> = (0..3).map(|i| plan.fold(i).len()).collect();
        assert_eq!(sizes, vec![340, 330, 330], "seed {seed}");
        for fold in 0..3 {
            let mut per_genre = [0usize; NUM_CLASSES];
            for id in plan.fold(fold) {
                per_genre[genre_of[id.as_str()]] += 1;
            }
            let want = [34, 33, 33][fold];
            assert!(
                per_genre.iter().all(|&c| c == want),
                "seed {seed} fold {fold}: per-genre counts {per_genre:?}"
            );
        }
    }

    // Leakage: augments may only ever enter through the training fold.
    let dummy = |id: &str, genre: usize| AudioClip {
        samples: vec![0.0; 4],
        sample_rate: SAMPLE_RATE,
        track_id: id.to_string(),
        genre_label: Some(genre),
    };
    let tags = ["noise", "gain", "loudness", "pitch", "stretch"];
    let tracks: Vec<TrackClips> = (0..2usize)
        .flat_map(|genre| {
            (0..6).map(move |i| {
                let id = format!("g{genre}.t{i}");
                TrackClips {
                    original: dummy(&id, genre),
                    augments: tags.iter().map(|t| dummy(&format!("{id}.{t}"), genre)).collect(),
                }
            })
        })
        .collect();
    let augment_ids: BTreeSet<&str> = tracks
        .iter()
        .flat_map(|t| t.augments.iter().map(|c| c.track_id.as_str()))
        .collect();
    let track_refs = genre1d::train::track_refs(&tracks).unwrap();
    for seed in 0..100u64 {
        let plan = make_folds_flexible(&track_refs, seed).unwrap();
        for round in 0..3 {
            let sets = assemble_round(&plan, &tracks, round, true).unwrap();
            for clip in &sets.val {
                assert!(
                    !augment_ids.contains(clip.track_id.as_str()),
                    "seed {seed} round {round}: augmented clip {} reached validation",
                    clip.track_id
                );
            }
            let test_ids: BTreeSet<&str> =
                sets.test.iter().map(|t| t.track_id()).collect();
            let val_ids: BTreeSet<&str> =
                sets.val.iter().map(|c| c.track_id.as_str()).collect();
            let train_origin_ids: BTreeSet<&str> = sets
                .train
                .iter()
                .map(|c| c.track_id.split('.').take(2).collect::<Vec<_>>().join("."))
                .map(|id| {
                    tracks
                        .iter()
                        .find(|t| t.track_id() == id)
                        .map(|t| t.track_id())
                        .unwrap()
                })
                .collect();
            assert!(train_origin_ids.is_disjoint(&val_ids), "seed {seed} round {round}");
            assert!(train_origin_ids.is_disjoint(&test_ids), "seed {seed} round {round}");
            assert!(val_ids.is_disjoint(&test_ids), "seed {seed} round {round}");
            assert_eq!(
                train_origin_ids.len() + val_ids.len() + test_ids.len(),
                tracks.len(),
                "seed {seed} round {round}: folds must partition the tracks"
            );
            // Each training track contributes its original plus every augment.
            assert_eq!(sets.train.len(), train_origin_ids.len() * (1 + tags.len()));
        }
    }

    // Sum rule equals argmax of the element-wise sum, exactly.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    for _ in 0..1_000 {
        let segments = rng.random_range(1..=8);
        let rows: Vec<Vec<f64>> = (0..segments)
            .map(|_| (0..NUM_CLASSES).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let picked = aggregate_probabilities(&rows, AggregationRule::Sum).unwrap();
        let mut totals = vec![0.0f64; NUM_CLASSES];
        for row in &rows {
            for (t, v) in totals.iter_mut().zip(row) {
                *t += v;
            }
        }
        let expected = totals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        assert_eq!(picked, expected);
    }

    pass(
        7,
        "stratification 340/330/330 and 34/33/33 over 100 seeds; no augment leakage \
         over 100 seeds x 3 rounds; sum rule exact on 1,000 random records"
            .to_string(),
    );
}

// ── 8. Learning sanity ──────────────────────────────────────────────────

/// Desk-scale check: the residual network must fit a 2-genre, 20-clip
/// synthetic fixture to at least 95% training-segment accuracy within 50
/// epochs. Batch size 8 keeps the training tape inside the memory budget
/// of a small machine; the batch size does not feature in the criterion.
#[test]
fn criterion_8_learning_sanity() {
    let clips = synth::fixture_corpus(10, 4242);
    assert_eq!(clips.len(), 20);
    let train_set = SegmentSet::from_clips(clips.iter()).unwrap();
    assert_eq!(train_set.len(), 20 * SEGMENTS_PER_CLIP);

    let mut config = TrainConfig::new(ArchName::ResNet1d);
    config.seed = 4242;
    config.batch_size = 8;
    config.max_epochs = 50;
    let mut session: TrainSession<f32> = TrainSession::new(config, 0, train_set, None).unwrap();

    for epoch in 1..=50 {
        let stats = session.run_epoch().unwrap();
        eprintln!(
            "criterion 8: epoch {epoch}, train loss {:.4}, accuracy {:.1}%",
            stats.train_loss,
            100.0 * stats.train_accuracy
        );
        if stats.train_accuracy >= 0.95 {
            pass(
                8,
                format!(
                    "resnet1d hit {:.1}% training-segment accuracy in epoch {epoch} of 50",
                    100.0 * stats.train_accuracy
                ),
            );
            return;
        }
    }
    panic!("resnet1d failed to reach 95% training-segment accuracy within 50 epochs");
}

/// Full-corpus reference run. This is a multi-day job on a plain CPU (3
/// rounds, up to 100 epochs, tens of thousands of 110,250-sample training
/// segments), so it is ignored by default and excluded from CI. Point
/// GENRE1D_GTZAN_MANIFEST at a prepared (optionally augmented) manifest of
/// the 1,000-track, 10-genre corpus and run it explicitly to compare
/// against the published reference accuracy: aggregated 80.93 with
/// augmentation, 76.02 without, at a tolerance of 4 accuracy points.
#[test]
#[ignore = "full-corpus run; multi-day on CPU, needs GENRE1D_GTZAN_MANIFEST"]
fn criterion_8_full_scale_reference_run() {
    let manifest_path = std::env::var("GENRE1D_GTZAN_MANIFEST")
        .expect("set GENRE1D_GTZAN_MANIFEST to a prepared manifest");
    let manifest_path = std::path::PathBuf::from(manifest_path);
    let manifest = DatasetManifest::load(&manifest_path).unwrap();
    let base = manifest_path.parent().unwrap_or(std::path::Path::new("."));

    let load = |entry: &ManifestEntry| -> AudioClip {
        let path = {
            let p = std::path::PathBuf::from(&entry.path);
            if p.is_absolute() { p } else { base.join(p) }
        };
        let mut clip = audio::ingest(&path, entry.track_id.clone(), Some(entry.genre)).unwrap();
        canonicalize(&mut clip.samples, &clip.track_id).unwrap();
        clip
    };
    let mut tracks: BTreeMap<String, TrackClips> = manifest
        .originals()
        .map(|e| (e.track_id.clone(), TrackClips::original_only(load(e))))
        .collect();
    let augmented = manifest.augmented().count() > 0;
    for entry in manifest.augmented() {
        let origin = entry.origin.as_ref().unwrap();
        tracks.get_mut(origin).unwrap().augments.push(load(entry));
    }
    let tracks: Vec<TrackClips> = tracks.into_values().collect();

    let mut config = TrainConfig::new(ArchName::ResNet1d);
    config.augment = augmented;
    let plan = make_folds(&genre1d::train::track_refs(&tracks).unwrap(), config.seed).unwrap();
    let (outputs, summary) =
        genre1d::train::evaluate_rounds::<f32>(&plan, &tracks, &config).unwrap();
    for o in &outputs {
        let r = &o.result;
        eprintln!(
            "round {}: segment {:.4}, majority {:.4}, sum {:.4}",
            r.round, r.segment_accuracy, r.track_accuracy_majority, r.track_accuracy_sum
        );
    }
    let reference = if augmented { 80.93 } else { 76.02 };
    let got = 100.0 * summary.sum_mean;
    assert!(
        (got - reference).abs() <= 4.0,
        "aggregated accuracy {got:.2} vs reference {reference:.2} (tolerance 4.0)"
    );
    pass(8, format!("full-scale aggregated accuracy {got:.2} vs {reference:.2}"));
}

// ── 9. Checkpoint round trip ────────────────────────────────────────────

#[test]
fn criterion_9_checkpoint_round_trip() {
    let clips = synth::fixture_corpus(3, 99);
    let tracks: Vec<TrackClips> = clips.into_iter().map(TrackClips::original_only).collect();
    let refs = genre1d::train::track_refs(&tracks).unwrap();
    let mut config = TrainConfig::new(ArchName::Dieleman);
    config.seed = 7;
    config.max_epochs = 1;
    config.batch_size = 16;
    let plan = make_folds_flexible(&refs, config.seed).unwrap();

    let output = genre1d::train::run_round::<f32>(&plan, &tracks, 0, &config).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("round0.ckpt");
    let meta = CheckpointMeta {
        epoch: output.result.best_epoch as u64,
        seed: config.seed,
        config_digest: config_digest(&config),
        genres: synth::FIXTURE_GENRES.iter().map(|s| s.to_string()).collect(),
    };
    save_checkpoint(&path, &output.network, &meta).unwrap();
    let (restored, loaded_meta): (Network<f32>, _) = load_checkpoint(&path).unwrap();
    assert_eq!(loaded_meta, meta);

    // Re-evaluate the test fold with the restored network.
    let sets = assemble_round(&plan, &tracks, 0, false).unwrap();
    let records: Vec<_> = sets
        .test
        .iter()
        .map(|t| predict_track(&restored, &t.original).unwrap())
        .collect();
    let (seg, majority, sum) = score_records(&records).unwrap();

    assert_eq!(
        seg.to_bits(),
        output.result.segment_accuracy.to_bits(),
        "segment accuracy must survive the round trip bit for bit"
    );
    assert_eq!(majority.to_bits(), output.result.track_accuracy_majority.to_bits());
    assert_eq!(sum.to_bits(), output.result.track_accuracy_sum.to_bits());

    pass(
        9,
        format!(
            "segment {seg:.4}, majority {majority:.4}, sum {sum:.4} reproduced bit-identically"
        ),
    );
}
