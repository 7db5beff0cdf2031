//! Implementations of the command-line verbs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use genre1d::audio::{self, AudioError, AugmentationConfig};
use genre1d::models::{
    build_architecture, parameter_report, shape_trace, ArchName, ModelError, Network,
    NUM_CLASSES,
};
use genre1d::persist::{
    self, load_checkpoint, save_checkpoint, CheckpointMeta, DatasetManifest, ManifestEntry,
    ManifestHeader, PersistError,
};
use genre1d::train::{
    self, aggregate_probabilities, folds::TRACKS_PER_GENRE, predict_probabilities,
    AggregationRule, EpochStats, FoldPlan, MetricsReport, RoundResult, TrackClips, TrainConfig,
    TrainError,
};

/// Errors grouped by exit code: usage 64, data 2, numeric 70.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 70,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<AudioError> for CliError {
    fn from(e: AudioError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PersistError> for CliError {
    fn from(e: PersistError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::UnknownArch(_) => CliError::Usage(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            TrainError::Tensor(_) => CliError::Numeric(e.to_string()),
            TrainError::Model(m) => m.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    persist::atomic_write(path, text.as_bytes())?;
    Ok(())
}

/// Entry paths are stored relative to the manifest that names them.
fn resolve(manifest_path: &Path, entry_path: &str) -> PathBuf {
    let p = Path::new(entry_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest_path
            .parent()
            .filter(|d| !d.as_os_str().is_empty())
            .map(|d| d.join(p))
            .unwrap_or_else(|| p.to_path_buf())
    }
}

fn load_clip(manifest_path: &Path, entry: &ManifestEntry) -> Result<audio::AudioClip, CliError> {
    let path = resolve(manifest_path, &entry.path);
    let mut clip = audio::ingest(&path, entry.track_id.clone(), Some(entry.genre))?;
    audio::canonicalize(&mut clip.samples, &clip.track_id)?;
    clip.sample_rate = genre1d::SAMPLE_RATE;
    Ok(clip)
}

/// Ingests every original (and, when asked, its augments) into memory.
fn load_track_clips(
    manifest: &DatasetManifest,
    manifest_path: &Path,
    with_augments: bool,
) -> Result<Vec<TrackClips>, CliError> {
    let mut augments_by_origin: BTreeMap<&str, Vec<&ManifestEntry>> = BTreeMap::new();
    if with_augments {
        for e in manifest.augmented() {
            augments_by_origin
                .entry(e.origin.as_deref().unwrap())
                .or_default()
                .push(e);
        }
    }
    let mut tracks = Vec::new();
    for entry in manifest.originals() {
        let original = load_clip(manifest_path, entry)?;
        let mut augments = Vec::new();
        for aug in augments_by_origin
            .get(entry.track_id.as_str())
            .map(Vec::as_slice)
            .unwrap_or(&[])
        {
            augments.push(load_clip(manifest_path, aug)?);
        }
        tracks.push(TrackClips { original, augments });
    }
    Ok(tracks)
}

/// Strict stratification when the corpus matches the full protocol
/// (exactly 100 tracks per genre), proportional stratification otherwise.
fn build_plan(tracks: &[TrackClips], seed: u64) -> Result<FoldPlan, CliError> {
    let refs = train::track_refs(tracks)?;
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for r in &refs {
        *counts.entry(r.genre).or_default() += 1;
    }
    let full_protocol = counts.values().all(|&c| c == TRACKS_PER_GENRE);
    let plan = if full_protocol {
        train::make_folds(&refs, seed)?
    } else {
        eprintln!(
            "note: corpus is not 100 tracks per genre; folds are split proportionally"
        );
        train::make_folds_flexible(&refs, seed)?
    };
    Ok(plan)
}

fn genre_name(genres: &[String], class: usize) -> String {
    genres
        .get(class)
        .cloned()
        .unwrap_or_else(|| format!("class_{class}"))
}

fn commas(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn print_summary(report: &MetricsReport) {
    let s = &report.summary;
    println!(
        "{} ({} augmentation), {} round(s):",
        report.architecture,
        if report.augmentation { "with" } else { "without" },
        report.rounds.len()
    );
    println!(
        "  segment accuracy   {:.2} ± {:.2} %",
        100.0 * s.segment_mean,
        100.0 * s.segment_std
    );
    println!(
        "  track accuracy     {:.2} ± {:.2} % (majority)",
        100.0 * s.majority_mean,
        100.0 * s.majority_std
    );
    println!(
        "  track accuracy     {:.2} ± {:.2} % (sum)",
        100.0 * s.sum_mean,
        100.0 * s.sum_std
    );
}

fn write_metrics(
    out_dir: &Path,
    stem: &str,
    arch: ArchName,
    augment: bool,
    seed: u64,
    rounds: &[RoundResult],
) -> Result<(), CliError> {
    if rounds.is_empty() {
        return Ok(());
    }
    let report = MetricsReport {
        architecture: arch.cli_name().to_string(),
        augmentation: augment,
        seed,
        rounds: rounds.to_vec(),
        summary: train::summarize(rounds)?,
    };
    let json = serde_json::to_string_pretty(&report).expect("metrics serialize");
    write_text(&out_dir.join(format!("{stem}.json")), &json)?;
    write_text(
        &out_dir.join(format!("{stem}.csv")),
        &train::metrics_csv(arch.cli_name(), augment, rounds),
    )?;
    print_summary(&report);
    Ok(())
}

// ── prepare ─────────────────────────────────────────────────────────────

pub fn prepare(data_dir: &Path, out: &Path, lenient: bool) -> Result<(), CliError> {
    let mut genre_dirs: Vec<(String, PathBuf)> = std::fs::read_dir(data_dir)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", data_dir.display())))?
        .filter_map(|r| r.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .collect();
    genre_dirs.sort();
    if genre_dirs.is_empty() {
        return Err(CliError::Data(format!(
            "{} holds no genre directories",
            data_dir.display()
        )));
    }
    if genre_dirs.len() > NUM_CLASSES {
        return Err(CliError::Data(format!(
            "{} genre directories; at most {NUM_CLASSES} classes are supported",
            genre_dirs.len()
        )));
    }

    let mut entries = Vec::new();
    let mut warnings = 0usize;
    for (genre_idx, (_, dir)) in genre_dirs.iter().enumerate() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", dir.display())))?
            .filter_map(|r| r.ok())
            .map(|e| e.path())
            .filter(|p| {
                p.extension()
                    .map(|x| x.eq_ignore_ascii_case("wav"))
                    .unwrap_or(false)
            })
            .collect();
        files.sort();
        for file in files {
            let track_id = file
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            match audio::ingest(&file, track_id.clone(), Some(genre_idx)) {
                Ok(clip) => {
                    if clip.samples.len() < audio::MIN_CLIP_LEN {
                        eprintln!(
                            "warning: {} is {} samples, shorter than the {}-sample minimum",
                            file.display(),
                            clip.samples.len(),
                            audio::MIN_CLIP_LEN
                        );
                        warnings += 1;
                        continue;
                    }
                    entries.push(ManifestEntry {
                        track_id,
                        path: file.display().to_string(),
                        genre: genre_idx,
                        duration: clip.samples.len() as u64,
                        origin: None,
                        transform: None,
                        parameter: None,
                    });
                }
                Err(e) => {
                    eprintln!("warning: skipping {}: {e}", file.display());
                    warnings += 1;
                }
            }
        }
    }
    if entries.is_empty() {
        return Err(CliError::Data(format!(
            "no readable 30 s WAV files under {}",
            data_dir.display()
        )));
    }

    let manifest = DatasetManifest {
        header: ManifestHeader {
            seed: 0,
            config_digest: String::new(),
            genres: genre_dirs.iter().map(|(name, _)| name.clone()).collect(),
        },
        entries,
    };
    manifest.save(out)?;
    println!(
        "wrote {} with {} tracks across {} genres",
        out.display(),
        manifest.entries.len(),
        genre_dirs.len()
    );

    if !lenient {
        let counts = manifest.genre_counts();
        let bad: Vec<String> = genre_dirs
            .iter()
            .enumerate()
            .filter(|&(i, _)| counts[i] != TRACKS_PER_GENRE)
            .map(|(i, (name, _))| format!("{name}: {} tracks", counts[i]))
            .collect();
        if warnings > 0 || !bad.is_empty() {
            for line in &bad {
                eprintln!("strict mode: {line} (expected {TRACKS_PER_GENRE})");
            }
            return Err(CliError::Data(format!(
                "corpus fails the full-protocol contract ({warnings} warning(s), {} genre(s) off-count); \
                 re-run with --lenient to accept it",
                bad.len()
            )));
        }
    }
    Ok(())
}

// ── augment ─────────────────────────────────────────────────────────────

pub fn augment(
    manifest_path: &Path,
    out_dir: &Path,
    out_manifest: Option<&Path>,
    config: AugmentationConfig,
) -> Result<(), CliError> {
    let manifest = DatasetManifest::load(manifest_path)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
    let out_manifest = out_manifest
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out_dir.join("manifest.jsonl"));

    let mut entries: Vec<ManifestEntry> = Vec::new();
    let mut warnings = 0usize;
    for entry in manifest.originals() {
        // Carry originals forward with paths that stay valid from the new
        // manifest's location.
        entries.push(ManifestEntry {
            path: resolve(manifest_path, &entry.path).display().to_string(),
            ..entry.clone()
        });
        let clip = load_clip(manifest_path, entry)?;
        for aug in audio::augment_clip(&clip, &config)? {
            if let Some(w) = &aug.warning {
                eprintln!("warning: {w}");
                warnings += 1;
            }
            let wav_path = out_dir.join(format!("{}.wav", aug.clip.track_id));
            audio::wav::write_wav_16bit(&wav_path, &aug.clip.samples, aug.clip.sample_rate)?;
            entries.push(ManifestEntry {
                track_id: aug.clip.track_id.clone(),
                path: wav_path.display().to_string(),
                genre: entry.genre,
                duration: aug.clip.samples.len() as u64,
                origin: Some(aug.origin),
                transform: Some(aug.transform.tag().to_string()),
                parameter: Some(aug.parameter),
            });
        }
    }

    let augmented = DatasetManifest {
        header: ManifestHeader {
            seed: config.seed,
            config_digest: persist::config_digest(&config),
            genres: manifest.header.genres.clone(),
        },
        entries,
    };
    augmented.save(&out_manifest)?;
    println!(
        "wrote {} with {} entries ({} originals x 6){}",
        out_manifest.display(),
        augmented.entries.len(),
        manifest.originals().count(),
        if warnings > 0 {
            format!(", {warnings} warning(s)")
        } else {
            String::new()
        }
    );
    Ok(())
}

// ── train ───────────────────────────────────────────────────────────────

fn log_epoch(round: usize, stats: &EpochStats) {
    let val = match (stats.val_loss, stats.val_accuracy) {
        (Some(l), Some(a)) => format!(", val loss {l:.4} acc {:.1}%", 100.0 * a),
        _ => String::new(),
    };
    eprintln!(
        "round {round} epoch {:>3}: train loss {:.4} acc {:.1}%{val}",
        stats.epoch,
        stats.train_loss,
        100.0 * stats.train_accuracy
    );
}

pub fn train(
    manifest_path: &Path,
    config: TrainConfig,
    rounds: usize,
    out_dir: &Path,
) -> Result<(), CliError> {
    if !(1..=3).contains(&rounds) {
        return Err(CliError::Usage(format!(
            "--rounds must be 1 to 3, got {rounds}"
        )));
    }
    let manifest = DatasetManifest::load(manifest_path)?;
    if config.augment && manifest.augmented().next().is_none() {
        return Err(CliError::Data(
            "manifest holds no augmented entries; run `genre1d augment` first".to_string(),
        ));
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;

    eprintln!("loading {} ...", manifest_path.display());
    let tracks = load_track_clips(&manifest, manifest_path, config.augment)?;
    let plan = build_plan(&tracks, config.seed)?;
    let digest = persist::config_digest(&config);

    let mut results: Vec<RoundResult> = Vec::new();
    let mut failure: Option<TrainError> = None;
    for round in 0..rounds {
        eprintln!("round {round}: training {} ...", config.arch.cli_name());
        let run: Result<train::RoundOutput<f32>, TrainError> =
            train::run_round_with(&plan, &tracks, round, &config, |s| log_epoch(round, s));
        match run {
            Ok(output) => {
                let ckpt = out_dir.join(format!("{}_round{round}.ckpt", config.arch.cli_name()));
                save_checkpoint(
                    &ckpt,
                    &output.network,
                    &CheckpointMeta {
                        epoch: output.result.best_epoch as u64,
                        seed: config.seed,
                        config_digest: digest.clone(),
                        genres: manifest.header.genres.clone(),
                    },
                )?;
                eprintln!(
                    "round {round}: test segment accuracy {:.1}%, checkpoint {}",
                    100.0 * output.result.segment_accuracy,
                    ckpt.display()
                );
                results.push(output.result);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }

    // Partial results are still written when a later round fails.
    write_metrics(
        out_dir,
        "metrics",
        config.arch,
        config.augment,
        config.seed,
        &results,
    )?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

// ── evaluate ────────────────────────────────────────────────────────────

pub fn evaluate(
    manifest_path: &Path,
    checkpoints: &[PathBuf],
    seed_override: Option<u64>,
    out_dir: &Path,
) -> Result<(), CliError> {
    if checkpoints.is_empty() || checkpoints.len() > 3 {
        return Err(CliError::Usage(format!(
            "evaluate takes 1 to 3 checkpoints, one per round; got {}",
            checkpoints.len()
        )));
    }
    let mut loaded: Vec<(Network<f32>, CheckpointMeta)> = Vec::new();
    for path in checkpoints {
        loaded.push(load_checkpoint(path)?);
    }
    let arch = loaded[0].0.spec().name;
    if loaded.iter().any(|(n, _)| n.spec().name != arch) {
        return Err(CliError::Data(
            "checkpoints come from different architectures".to_string(),
        ));
    }
    let seed = match seed_override {
        Some(s) => s,
        None => {
            let seeds: Vec<u64> = loaded.iter().map(|(_, m)| m.seed).collect();
            if seeds.windows(2).any(|w| w[0] != w[1]) {
                return Err(CliError::Data(format!(
                    "checkpoints disagree on the corpus seed ({seeds:?}); pass --seed"
                )));
            }
            seeds[0]
        }
    };

    let manifest = DatasetManifest::load(manifest_path)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
    let tracks = load_track_clips(&manifest, manifest_path, false)?;
    let plan = build_plan(&tracks, seed)?;
    let by_id: BTreeMap<&str, &TrackClips> =
        tracks.iter().map(|t| (t.track_id(), t)).collect();

    let mut results = Vec::new();
    for (round, (net, meta)) in loaded.iter().enumerate() {
        let (_, _, test_fold) = plan.rounds()[round];
        let mut records = Vec::new();
        for id in plan.fold(test_fold) {
            let track = by_id.get(id.as_str()).ok_or_else(|| {
                CliError::Data(format!("fold plan names track {id} but the manifest lacks it"))
            })?;
            records.push(train::predict_track(net, &track.original)?);
        }
        let (seg, maj, sum) = train::score_records(&records)?;
        results.push(RoundResult {
            round,
            segment_accuracy: seg,
            track_accuracy_majority: maj,
            track_accuracy_sum: sum,
            epochs_run: meta.epoch as usize,
            best_epoch: meta.epoch as usize,
        });
    }
    write_metrics(out_dir, "evaluate_metrics", arch, false, seed, &results)
}

// ── predict ─────────────────────────────────────────────────────────────

#[derive(serde::Serialize)]
struct Decision {
    class: usize,
    genre: String,
}

#[derive(serde::Serialize)]
struct Prediction {
    file: String,
    architecture: String,
    majority: Decision,
    sum: Decision,
    segments: usize,
    probabilities: Vec<Vec<f64>>,
}

pub fn predict(checkpoint: &Path, wav: &Path) -> Result<(), CliError> {
    let (net, meta): (Network<f32>, _) = load_checkpoint(checkpoint)?;
    let track_id = wav
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut clip = audio::ingest(wav, track_id, None)?;
    audio::canonicalize(&mut clip.samples, &clip.track_id)?;
    let probabilities = predict_probabilities(&net, &clip)?;
    let decision = |rule| -> Result<Decision, CliError> {
        let class = aggregate_probabilities(&probabilities, rule)?;
        Ok(Decision {
            class,
            genre: genre_name(&meta.genres, class),
        })
    };
    let output = Prediction {
        file: wav.display().to_string(),
        architecture: net.spec().name.cli_name().to_string(),
        majority: decision(AggregationRule::Majority)?,
        sum: decision(AggregationRule::Sum)?,
        segments: probabilities.len(),
        probabilities,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&output).expect("prediction serializes")
    );
    Ok(())
}

// ── arch-info ───────────────────────────────────────────────────────────

pub fn arch_info(arch: Option<&str>) -> Result<(), CliError> {
    let names: Vec<ArchName> = match arch {
        Some(name) => vec![ArchName::from_cli_name(name)?],
        None => ArchName::ALL.to_vec(),
    };
    for (i, name) in names.iter().enumerate() {
        if i > 0 {
            println!();
        }
        let spec = build_architecture(*name);
        let report = parameter_report(&spec)?;
        let trace = shape_trace(&spec)?;
        println!("{}", name.cli_name());
        let reference = report.reference;
        if report.discrepancy() == 0 {
            println!("  parameters: {} (matches the reference count)", commas(report.trainable));
        } else {
            println!(
                "  parameters: {} (reference {}, discrepancy {:+} = {:+.3}%)",
                commas(report.trainable),
                commas(reference),
                report.discrepancy(),
                100.0 * report.discrepancy() as f64 / reference as f64
            );
        }
        if let Some(frozen) = report.frozen_frontend {
            println!(
                "  with the filterbank front end frozen: {} trainable",
                commas(frozen)
            );
        }
        let label_width = trace.iter().map(|r| r.label.len()).max().unwrap_or(0);
        println!("  {:<label_width$}  {:>14}  {:>10}", "layer", "output", "params");
        for row in &trace {
            println!(
                "  {:<label_width$}  {:>14}  {:>10}",
                row.label,
                row.shape.to_string(),
                commas(row.params)
            );
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comma_grouping() {
        assert_eq!(commas(0), "0");
        assert_eq!(commas(999), "999");
        assert_eq!(commas(1_000), "1,000");
        assert_eq!(commas(4_086_794), "4,086,794");
    }

    #[test]
    fn relative_paths_resolve_against_the_manifest_directory() {
        let m = Path::new("/data/corpus/manifest.jsonl");
        assert_eq!(resolve(m, "blues/x.wav"), Path::new("/data/corpus/blues/x.wav"));
        assert_eq!(resolve(m, "/abs/x.wav"), Path::new("/abs/x.wav"));
    }

    #[test]
    fn error_kinds_map_to_the_documented_exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 64);
        assert_eq!(CliError::Data(String::new()).exit_code(), 2);
        assert_eq!(CliError::Numeric(String::new()).exit_code(), 70);
        let unknown: CliError = ModelError::UnknownArch("x".into()).into();
        assert_eq!(unknown.exit_code(), 64);
        let nonfinite: CliError = TrainError::NonFinite {
            epoch: 1,
            batch: 0,
            steps: 5,
        }
        .into();
        assert_eq!(nonfinite.exit_code(), 70);
    }
}
