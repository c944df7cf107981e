//! Benchmark orchestration: seeded corpora, a method x attack grid, balanced
//! detection metrics, and delimited reports.
//!
//! A run is described by one [`BenchConfig`]. Each dataset is a seeded
//! single-domain corpus; its clips are split deterministically into a
//! watermarked and a clean half. Every method is embedded, attacked, and
//! detected per clip, with failures recorded per clip rather than aborting
//! the table. Rows are keyed by (dataset, method, attack).

use std::io::Write as _;
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{baseline_additive, baseline_detected, baseline_score, Attack, AttackSpec};
use crate::audio::{self, Waveform};
use crate::codec::{make_codec, CodecSpec, SurrogateCodec};
use crate::detect::{score_ensemble_with, LatentView};
use crate::embed::{embed_joint, embed_single, EmbedConfig};
use crate::key::{calibrate, derive_axis, AxisMethod, SecretKey};
use crate::synth::{self, Domain};
use crate::{Error, Result};

/// One seeded synthetic corpus standing in for a dataset, together with the
/// disjoint null corpus its detector thresholds are calibrated on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub domain: Domain,
    pub rate: u32,
    pub seconds: f64,
    /// Number of evaluation clips; seeds `seed..seed+count`.
    pub count: usize,
    pub seed: u64,
    /// Number of calibration clips; seeds `null_seed..null_seed+null_count`.
    pub null_count: usize,
    pub null_seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("dataset name must be non-empty".into()));
        }
        if self.rate == 0 || !(self.seconds.is_finite() && self.seconds > 0.0) {
            return Err(Error::Config(format!(
                "dataset {} needs a positive rate and duration",
                self.name
            )));
        }
        if self.count < 2 || self.null_count < 2 {
            return Err(Error::Config(format!(
                "dataset {} needs at least 2 evaluation and 2 calibration clips",
                self.name
            )));
        }
        // Calibrating on evaluation clips would leak the answer into the
        // threshold; insist the seed ranges cannot collide.
        let eval = self.seed..self.seed + self.count as u64;
        let null = self.null_seed..self.null_seed + self.null_count as u64;
        if eval.start < null.end && null.start < eval.end {
            return Err(Error::Config(format!(
                "dataset {}: evaluation and calibration seed ranges overlap",
                self.name
            )));
        }
        Ok(())
    }

    pub fn corpus(&self) -> Result<Vec<Waveform>> {
        (0..self.count)
            .map(|i| synth::corpus_clip(self.domain, self.rate, self.seconds, self.seed + i as u64))
            .collect()
    }

    pub fn nulls(&self) -> Result<Vec<Waveform>> {
        (0..self.null_count)
            .map(|i| {
                synth::corpus_clip(
                    self.domain,
                    self.rate,
                    self.seconds,
                    self.null_seed + i as u64,
                )
            })
            .collect()
    }
}

/// One watermarking method under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodSpec {
    /// Latent-axis embedding. `joint` optimizes against the whole committee,
    /// otherwise the first codec only; detection always takes the committee
    /// median. The axis seed only matters for the random axis and is offset
    /// by the codec's committee index so members get distinct draws.
    Latent {
        axis: AxisMethod,
        #[serde(default)]
        axis_seed: u64,
        #[serde(default)]
        joint: bool,
    },
    /// Additive time-domain pattern with matched-filter detection; the
    /// pattern seed is offset by the clip's corpus index.
    Baseline { sdr_db: f64, seed: u64 },
}

impl MethodSpec {
    pub fn label(&self) -> String {
        match self {
            MethodSpec::Latent { axis, joint, .. } => {
                let name = match axis {
                    AxisMethod::Cluster => "cluster",
                    AxisMethod::Pca => "pca",
                    AxisMethod::Random => "random",
                };
                if *joint {
                    format!("{name}-joint")
                } else {
                    name.into()
                }
            }
            MethodSpec::Baseline { .. } => "baseline".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let MethodSpec::Baseline { sdr_db, .. } = self {
            if !sdr_db.is_finite() {
                return Err(Error::Config(format!(
                    "baseline method needs a finite sdr, got {sdr_db}"
                )));
            }
        }
        Ok(())
    }
}

/// Detector settings shared by every latent method in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    /// Threshold offset in null standard deviations (tau = mu + k sigma).
    pub k: f64,
    /// Which latents detection projects.
    #[serde(default = "default_view")]
    pub view: LatentView,
}

fn default_view() -> LatentView {
    LatentView::PreQuant
}

impl Default for DetectorSpec {
    fn default() -> Self {
        DetectorSpec {
            k: 1.5,
            view: LatentView::PreQuant,
        }
    }
}

/// Deterministic corpus split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    /// Clips in the watermarked half; the rest of the corpus is the clean
    /// half. `None` takes half the corpus, `Some(0)` runs a null experiment
    /// (everything clean, TPR reported as absent).
    #[serde(default)]
    pub per_class: Option<usize>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            seed: 0x5e_ed,
            per_class: None,
        }
    }
}

/// Everything a benchmark run depends on; serializes to one config file and
/// is embedded verbatim in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub datasets: Vec<DatasetSpec>,
    /// Surrogate committee; the first entry is the single-embed target.
    pub codecs: Vec<CodecSpec>,
    pub methods: Vec<MethodSpec>,
    pub attacks: Vec<AttackSpec>,
    #[serde(default)]
    pub detector: DetectorSpec,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub embed: EmbedConfig,
    /// Worker threads for the per-clip fan-out; `None` uses the global pool.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("bench needs at least one dataset".into()));
        }
        if self.codecs.is_empty() {
            return Err(Error::Config("bench needs at least one codec".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("bench needs at least one method".into()));
        }
        if self.attacks.is_empty() {
            return Err(Error::Config("bench needs at least one attack".into()));
        }
        for ds in &self.datasets {
            ds.validate()?;
        }
        for codec in &self.codecs {
            codec.validate()?;
        }
        for method in &self.methods {
            method.validate()?;
        }
        for attack in &self.attacks {
            attack.validate()?;
        }
        if !(self.detector.k.is_finite()) {
            return Err(Error::Config(format!(
                "detector k must be finite, got {}",
                self.detector.k
            )));
        }
        self.embed.validate()?;
        for ds in &self.datasets {
            let per_class = self.split.per_class.unwrap_or(ds.count / 2);
            if ds.count < 2 * per_class {
                return Err(Error::Config(format!(
                    "dataset {}: {} clips cannot cover 2 x {per_class} per class",
                    ds.name, ds.count
                )));
            }
        }
        Ok(())
    }
}

/// One (dataset, method, attack) cell. Clean-path detectability (TPR, FPR,
/// accuracy) and embedding fidelity repeat across a method's attack rows;
/// survivability and the score shift are per attack. Absent values (for
/// example TPR in an all-clean null run) serialize as `NA` in the delimited
/// report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub dataset: String,
    pub method: String,
    pub attack: String,
    /// Clean-path detection rate on watermarked clips.
    pub tpr: Option<f64>,
    /// Clean-path detection rate on unmarked clips.
    pub fpr: Option<f64>,
    /// (TP + TN) / (P + N) over the balanced clean-path split.
    pub accuracy: Option<f64>,
    /// Detection rate on watermarked clips after this attack.
    pub survivability: Option<f64>,
    /// Mean si-snr of the watermarked clip against its original, dB.
    pub mean_dsisnr: Option<f64>,
    /// Mean detector-score shift the mark retains after this attack:
    /// score(attacked marked) - score(attacked original).
    pub mean_dscore: Option<f64>,
    /// Clips that completed the watermarked path without error.
    pub watermarked: usize,
    /// Clips that completed the clean path without error.
    pub clean: usize,
}

/// A per-clip failure: recorded, excluded from the rates, never fatal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipError {
    pub dataset: String,
    pub method: String,
    /// Index of the clip in its dataset corpus.
    pub clip: usize,
    /// Pipeline stage that failed (embed, detect, or an attack label).
    pub stage: String,
    pub message: String,
}

/// The full result of a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub errors: Vec<ClipError>,
    /// The exact configuration the numbers came from.
    pub config: BenchConfig,
}

/// Seeded Fisher-Yates split: the first `per_class` shuffled indices form
/// the watermarked half, the rest the clean half.
pub(crate) fn split_indices(len: usize, split: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let per_class = split.per_class.unwrap_or(len / 2);
    if len < 2 * per_class {
        return Err(Error::Config(format!(
            "{len} clips cannot cover 2 x {per_class} per class"
        )));
    }
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(split.seed);
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let watermarked = order[..per_class].to_vec();
    let clean = order[per_class..].to_vec();
    Ok((watermarked, clean))
}

/// Everything one clip produces on the watermarked path.
struct MarkedOutcome {
    clip: usize,
    /// None when embedding failed (the error is in `errors`).
    clean_detected: Option<bool>,
    dsisnr: Option<f64>,
    /// Per attack: survived? and score shift. None where that attack failed.
    per_attack: Vec<Option<(bool, f64)>>,
    errors: Vec<(String, String)>,
}

/// Per-method embedding and detection, shared by the marked and clean paths.
enum MethodRunner<'a> {
    Latent {
        committee: Vec<(&'a SurrogateCodec, Vec<SecretKey>)>,
        joint: bool,
        view: LatentView,
        embed_cfg: &'a EmbedConfig,
    },
    Baseline {
        sdr_db: f64,
        seed: u64,
    },
}

impl<'a> MethodRunner<'a> {
    fn new(
        method: &MethodSpec,
        codecs: &'a [SurrogateCodec],
        nulls: &[Waveform],
        detector: &DetectorSpec,
        embed_cfg: &'a EmbedConfig,
    ) -> Result<Self> {
        match method {
            MethodSpec::Latent {
                axis,
                axis_seed,
                joint,
            } => {
                let mut committee = Vec::with_capacity(codecs.len());
                for (i, codec) in codecs.iter().enumerate() {
                    let axis = derive_axis(codec, *axis, axis_seed.wrapping_add(i as u64))?;
                    let stats = calibrate(codec, &axis, nulls, detector.k)?;
                    let key = SecretKey {
                        axis,
                        stats: Some(stats),
                        gamma: embed_cfg.gamma,
                    };
                    committee.push((codec, vec![key]));
                }
                Ok(MethodRunner::Latent {
                    committee,
                    joint: *joint,
                    view: detector.view,
                    embed_cfg,
                })
            }
            MethodSpec::Baseline { sdr_db, seed } => Ok(MethodRunner::Baseline {
                sdr_db: *sdr_db,
                seed: *seed,
            }),
        }
    }

    fn embed(&self, clip: usize, wave: &Waveform) -> Result<Waveform> {
        match self {
            MethodRunner::Latent {
                committee,
                joint,
                embed_cfg,
                ..
            } => {
                if *joint {
                    let pairs: Vec<(&SurrogateCodec, &SecretKey)> =
                        committee.iter().map(|(c, k)| (*c, &k[0])).collect();
                    Ok(embed_joint(wave, &pairs, embed_cfg)?.0)
                } else {
                    let (codec, keys) = &committee[0];
                    Ok(embed_single(wave, codec, &keys[0], embed_cfg)?.0)
                }
            }
            MethodRunner::Baseline { sdr_db, seed } => {
                Ok(baseline_additive(wave, seed.wrapping_add(clip as u64), *sdr_db)?.0)
            }
        }
    }

    /// Detector verdict and raw score for one clip.
    fn detect(&self, clip: usize, wave: &Waveform) -> Result<(bool, f64)> {
        match self {
            MethodRunner::Latent {
                committee, view, ..
            } => {
                let pairs: Vec<(&SurrogateCodec, &SecretKey)> =
                    committee.iter().map(|(c, k)| (*c, &k[0])).collect();
                let verdict = score_ensemble_with(wave, &pairs, *view)?;
                Ok((verdict.detected, verdict.score))
            }
            MethodRunner::Baseline { sdr_db, seed } => {
                let score = baseline_score(wave, seed.wrapping_add(clip as u64), *sdr_db)?;
                Ok((baseline_detected(score), score))
            }
        }
    }
}

fn run_marked_clip(
    runner: &MethodRunner,
    clip: usize,
    original: &Waveform,
    attacks: &[Attack],
) -> MarkedOutcome {
    let mut out = MarkedOutcome {
        clip,
        clean_detected: None,
        dsisnr: None,
        per_attack: vec![None; attacks.len()],
        errors: Vec::new(),
    };
    let marked = match runner.embed(clip, original) {
        Ok(w) => w,
        Err(e) => {
            out.errors.push(("embed".into(), e.to_string()));
            return out;
        }
    };
    match audio::si_snr(original, &marked) {
        Ok(v) => out.dsisnr = Some(v),
        Err(e) => out.errors.push(("fidelity".into(), e.to_string())),
    }
    match runner.detect(clip, &marked) {
        Ok((hit, _)) => out.clean_detected = Some(hit),
        Err(e) => {
            out.errors.push(("detect".into(), e.to_string()));
            return out;
        }
    }
    for (a, attack) in attacks.iter().enumerate() {
        let result = attack.apply(&marked).and_then(|attacked_marked| {
            let attacked_original = attack.apply(original)?;
            let (hit, marked_score) = runner.detect(clip, &attacked_marked)?;
            let (_, original_score) = runner.detect(clip, &attacked_original)?;
            Ok((hit, marked_score - original_score))
        });
        match result {
            Ok(cell) => out.per_attack[a] = Some(cell),
            Err(e) => out.errors.push((attack.label(), e.to_string())),
        }
    }
    out
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Run one dataset's corpus through every method and attack.
///
/// `corpus` is split by `split` into a watermarked and a clean half; `nulls`
/// feeds threshold calibration and must be disjoint from the corpus. Rows
/// come back keyed (dataset, method, attack); per-clip failures are recorded
/// in the error list and excluded from the rates.
#[allow(clippy::too_many_arguments)]
pub fn run_benchmark(
    dataset: &str,
    corpus: &[Waveform],
    nulls: &[Waveform],
    codecs: &[SurrogateCodec],
    methods: &[MethodSpec],
    attacks: &[AttackSpec],
    detector: &DetectorSpec,
    split: &SplitSpec,
    embed_cfg: &EmbedConfig,
) -> Result<(Vec<BenchRow>, Vec<ClipError>)> {
    if corpus.is_empty() {
        return Err(Error::Empty("benchmark corpus"));
    }
    if codecs.is_empty() {
        return Err(Error::Config("bench needs at least one codec".into()));
    }
    if attacks.is_empty() {
        return Err(Error::Config("bench needs at least one attack".into()));
    }
    let resolved: Vec<Attack> = attacks.iter().map(AttackSpec::resolve).collect::<Result<_>>()?;
    let (marked_idx, clean_idx) = split_indices(corpus.len(), split)?;

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for method in methods {
        let runner = MethodRunner::new(method, codecs, nulls, detector, embed_cfg)?;
        let marked_outcomes: Vec<MarkedOutcome> = marked_idx
            .par_iter()
            .map(|&clip| run_marked_clip(&runner, clip, &corpus[clip], &resolved))
            .collect();
        let clean_outcomes: Vec<(usize, Result<(bool, f64)>)> = clean_idx
            .par_iter()
            .map(|&clip| (clip, runner.detect(clip, &corpus[clip])))
            .collect();

        for outcome in &marked_outcomes {
            for (stage, message) in &outcome.errors {
                errors.push(ClipError {
                    dataset: dataset.into(),
                    method: method.label(),
                    clip: outcome.clip,
                    stage: stage.clone(),
                    message: message.clone(),
                });
            }
        }
        let mut clean_hits = 0usize;
        let mut clean_ok = 0usize;
        for (clip, verdict) in &clean_outcomes {
            match verdict {
                Ok((hit, _)) => {
                    clean_ok += 1;
                    clean_hits += usize::from(*hit);
                }
                Err(e) => errors.push(ClipError {
                    dataset: dataset.into(),
                    method: method.label(),
                    clip: *clip,
                    stage: "detect-clean".into(),
                    message: e.to_string(),
                }),
            }
        }

        let detected: Vec<bool> = marked_outcomes
            .iter()
            .filter_map(|o| o.clean_detected)
            .collect();
        let marked_ok = detected.len();
        let tpr = if marked_ok > 0 {
            Some(detected.iter().filter(|&&d| d).count() as f64 / marked_ok as f64)
        } else {
            None
        };
        let fpr = if clean_ok > 0 {
            Some(clean_hits as f64 / clean_ok as f64)
        } else {
            None
        };
        let accuracy = match (tpr, fpr) {
            (Some(tpr), Some(fpr)) => {
                let tp = tpr * marked_ok as f64;
                let tn = (1.0 - fpr) * clean_ok as f64;
                Some((tp + tn) / (marked_ok + clean_ok) as f64)
            }
            _ => None,
        };
        let dsisnr = mean(
            &marked_outcomes
                .iter()
                .filter_map(|o| o.dsisnr)
                .collect::<Vec<_>>(),
        );

        for (a, attack) in resolved.iter().enumerate() {
            let cells: Vec<(bool, f64)> = marked_outcomes
                .iter()
                .filter_map(|o| o.per_attack[a])
                .collect();
            let survivability = if cells.is_empty() {
                None
            } else {
                Some(cells.iter().filter(|(hit, _)| *hit).count() as f64 / cells.len() as f64)
            };
            let dscore = mean(&cells.iter().map(|(_, d)| *d).collect::<Vec<_>>());
            rows.push(BenchRow {
                dataset: dataset.into(),
                method: method.label(),
                attack: attack.label(),
                tpr,
                fpr,
                accuracy,
                survivability,
                mean_dsisnr: dsisnr,
                mean_dscore: dscore,
                watermarked: marked_ok,
                clean: clean_ok,
            });
        }
    }
    Ok((rows, errors))
}

/// Run the whole configured suite: every dataset through [`run_benchmark`],
/// on the configured worker pool, into one report carrying the config.
pub fn run_suite(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let run = || -> Result<BenchReport> {
        let codecs: Vec<SurrogateCodec> =
            config.codecs.iter().map(make_codec).collect::<Result<_>>()?;
        let mut rows = Vec::new();
        let mut errors = Vec::new();
        for ds in &config.datasets {
            let corpus = ds.corpus()?;
            let nulls = ds.nulls()?;
            let (mut r, mut e) = run_benchmark(
                &ds.name,
                &corpus,
                &nulls,
                &codecs,
                &config.methods,
                &config.attacks,
                &config.detector,
                &config.split,
                &config.embed,
            )?;
            rows.append(&mut r);
            errors.append(&mut e);
        }
        Ok(BenchReport {
            rows,
            errors,
            config: config.clone(),
        })
    };
    match config.workers {
        Some(workers) => {
            if workers == 0 {
                return Err(Error::Config("workers must be positive".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
            pool.install(run)
        }
        None => run(),
    }
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "NA".into(),
    }
}

/// The report as tab-separated text with a fixed, documented column order:
/// dataset, method, attack, TPR, FPR, Acc, Sur, dSISNR, dScore.
pub fn tsv_string(report: &BenchReport) -> String {
    let mut out = String::from("dataset\tmethod\tattack\ttpr\tfpr\tacc\tsur\tdsisnr\tdscore\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            row.dataset,
            row.method,
            row.attack,
            cell(row.tpr),
            cell(row.fpr),
            cell(row.accuracy),
            cell(row.survivability),
            cell(row.mean_dsisnr),
            cell(row.mean_dscore),
        ));
    }
    out
}

pub fn write_tsv(report: &BenchReport, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(tsv_string(report).as_bytes())?;
    Ok(())
}

/// The full report (rows, errors, config snapshot) as pretty JSON.
pub fn write_json(report: &BenchReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}
