use std::path::{Path, PathBuf};

use rayon::prelude::*;

use reguider::align::{AlignmentConfig, Metric, Projector};
use reguider::dataset::{MultivariateSeries, WindowPair};
use reguider::embeddings::EmbeddingCache;
use reguider::models::{
    pretrain_teacher_on, Checkpoint, DeskTeacher, Geometry, StudentConfig, StudentForecaster, StudentKind, TeacherHandle, TeacherLayer,
    TeacherSource,
};
use reguider::train::{
    check_reguider_loss, evaluate, export_embeddings, fit, Batch, GradCheckOptions, Guidance, Metrics, RunRecord, TrainConfig, WindowSplits,
};

use crate::config::{DatasetSource, ExperimentConfig, TeacherSpec, Variant};
use crate::error::{CliError, CliResult};
use crate::report::{collect_summaries, fmt6, Report, RunSummary, METRIC_REPORT_FILE, REPORT_FILE, SUMMARY_FILE};

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Refuses to replace an existing output unless `overwrite` is set.
fn claim(path: &Path, overwrite: bool) -> CliResult<()> {
    if !path.exists() {
        return Ok(());
    }
    if !overwrite {
        return Err(CliError::config(format!(
            "{} already exists; pass --overwrite to replace it",
            path.display()
        )));
    }
    let removed = if path.is_dir() {
        std::fs::remove_dir_all(path)
    } else {
        std::fs::remove_file(path)
    };
    removed.map_err(|e| CliError::io(path, e))
}

fn geometry(cfg: &ExperimentConfig, series: &MultivariateSeries, horizon: usize) -> CliResult<Geometry> {
    Ok(Geometry::new(series.channels(), cfg.lookback, horizon)?)
}

/// Windows the teacher is pretrained on: the `teacher_data` pool when set,
/// else the experiment series.
fn teacher_windows(cfg: &ExperimentConfig, series: &MultivariateSeries, horizon: usize) -> CliResult<WindowSplits> {
    let pool: Vec<MultivariateSeries> = match &cfg.teacher_data {
        None => vec![series.clone()],
        Some(DatasetSource::Synth(spec)) => (0..cfg.teacher_pool as u64)
            .map(|i| {
                let mut draw = spec.clone();
                draw.seed += i;
                draw.generate()
            })
            .collect::<Result<_, _>>()?,
        Some(source) => vec![source.load()?],
    };
    if let Some(bad) = pool.iter().find(|s| s.channels() != series.channels()) {
        return Err(CliError::config(format!(
            "teacher data has {} channels, the dataset has {}",
            bad.channels(),
            series.channels()
        )));
    }
    Ok(WindowSplits::from_pool(
        &pool,
        cfg.split,
        cfg.lookback,
        horizon,
        cfg.teacher_stride,
    )?)
}

/// Pretrains a desk teacher for one horizon and returns it with its record.
pub fn pretrain(cfg: &ExperimentConfig, series: &MultivariateSeries, horizon: usize) -> CliResult<(TeacherHandle, RunRecord)> {
    let data = teacher_windows(cfg, series, horizon)?;
    let g = geometry(cfg, series, horizon)?;
    Ok(pretrain_teacher_on(&data, g, cfg.teacher_config, &cfg.teacher_train)?)
}

pub fn teacher_checkpoint_path(cfg: &ExperimentConfig, horizon: usize) -> PathBuf {
    cfg.out.join(format!("teacher_T{horizon}.rgm"))
}

/// `pretrain-teacher`: writes the checkpoint and a per-epoch log next to it.
pub fn cmd_pretrain_teacher(cfg: &ExperimentConfig, horizon: Option<usize>, out: Option<PathBuf>, overwrite: bool) -> CliResult<PathBuf> {
    let horizon = horizon.unwrap_or(cfg.horizons[0]);
    let path = out.unwrap_or_else(|| teacher_checkpoint_path(cfg, horizon));
    let log = path.with_extension("log.csv");
    claim(&path, overwrite)?;
    claim(&log, overwrite)?;
    let series = cfg.dataset.load()?;
    let (teacher, record) = pretrain(cfg, &series, horizon)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write(&path, teacher.to_checkpoint()?.to_bytes())?;
    write(&log, record.epochs_csv())?;
    println!(
        "teacher T={horizon}: {} epochs, test mse {} mae {}, checksum {}",
        record.epochs.len(),
        fmt6(record.test.mse),
        fmt6(record.test.mae),
        teacher.frozen_checksum()
    );
    println!("wrote {}", path.display());
    Ok(path)
}

fn check_teacher_geometry(teacher: &TeacherHandle, g: &Geometry) -> CliResult<()> {
    if let TeacherSource::Desk(t) = teacher.source() {
        let tg = t.geometry();
        if tg.channels != g.channels || tg.lookback != g.lookback {
            return Err(CliError::config(format!(
                "teacher expects C={} L={}, the experiment uses C={} L={}",
                tg.channels, tg.lookback, g.channels, g.lookback
            )));
        }
    }
    Ok(())
}

/// The teacher for one horizon, from the configured source.
fn acquire_teacher(cfg: &ExperimentConfig, series: &MultivariateSeries, horizon: usize) -> CliResult<TeacherHandle> {
    let teacher = match &cfg.teacher {
        TeacherSpec::Pretrain => {
            let path = teacher_checkpoint_path(cfg, horizon);
            let (teacher, record) = pretrain(cfg, series, horizon)?;
            write(&path, teacher.to_checkpoint()?.to_bytes())?;
            write(&path.with_extension("log.csv"), record.epochs_csv())?;
            teacher
        }
        TeacherSpec::Checkpoint(p) => TeacherHandle::from_checkpoint(&Checkpoint::load(p)?)?,
        TeacherSpec::Cache(p) => TeacherHandle::from_cache(EmbeddingCache::load(p)?),
    };
    check_teacher_geometry(&teacher, &geometry(cfg, series, horizon)?)?;
    Ok(teacher)
}

pub fn run_dir(cfg: &ExperimentConfig, variant: Variant, horizon: usize, seed: u64) -> PathBuf {
    cfg.out.join(format!("{}_T{horizon}_seed{seed}", variant.label()))
}

fn run_cell(
    cfg: &ExperimentConfig,
    data: &WindowSplits,
    g: Geometry,
    teacher: Option<&TeacherHandle>,
    variant: Variant,
    seed: u64,
) -> CliResult<RunSummary> {
    let train = cfg.train_config(variant, seed);
    let mut student = StudentForecaster::new(cfg.student, g, seed)?;
    let record = match variant {
        Variant::Base => fit(&mut student, None, data, &train)?,
        Variant::Reguider(_) => {
            let teacher = teacher.ok_or_else(|| CliError::config("guided run without a teacher"))?;
            let mut guidance = Guidance::new(teacher, &student, seed)?;
            fit(&mut student, Some(&mut guidance), data, &train)?
        }
    };
    if record.teacher_checksum_before != record.teacher_checksum_after {
        return Err(CliError::Check("teacher parameters changed during training".into()));
    }
    let summary = RunSummary {
        dataset: cfg.dataset_name.clone(),
        variant: match variant {
            Variant::Base => "base".into(),
            Variant::Reguider(_) => "reguider".into(),
        },
        metric: match variant {
            Variant::Base => None,
            Variant::Reguider(m) => Some(m),
        },
        horizon: g.horizon,
        seed,
        test_mse: record.test.mse,
        test_mae: record.test.mae,
        epochs: record.epochs.len(),
        best_epoch: record.best_epoch,
        teacher_checksum: record.teacher_checksum_after.clone(),
    };

    let dir = run_dir(cfg, variant, g.horizon, seed);
    create_dir(&dir)?;
    let snapshot = format!(
        "{}# run\n# variant = {}\n# horizon = {}\n# seed = {seed}\n",
        cfg.raw.render(),
        variant.label(),
        g.horizon
    );
    write(&dir.join("config.txt"), snapshot)?;
    write(&dir.join("record.csv"), record.epochs_csv())?;
    write(&dir.join(SUMMARY_FILE), summary.to_csv())?;
    write(&dir.join("student.rgm"), student.to_checkpoint().to_bytes())?;
    Ok(summary)
}

/// `train`: every variant for every `(T, seed)` cell. Cells run on `jobs`
/// threads; results come back in cell order.
pub fn cmd_train(cfg: &ExperimentConfig, jobs: usize, overwrite: bool) -> CliResult<Vec<RunSummary>> {
    if cfg.guided() {
        cfg.validate_teacher()?;
    }
    let series = cfg.dataset.load()?;
    for &t in &cfg.horizons {
        for &seed in &cfg.seeds {
            for &v in &cfg.variants {
                claim(&run_dir(cfg, v, t, seed), overwrite)?;
            }
        }
        if cfg.guided() && cfg.teacher == TeacherSpec::Pretrain {
            let path = teacher_checkpoint_path(cfg, t);
            claim(&path, overwrite)?;
            claim(&path.with_extension("log.csv"), overwrite)?;
        }
    }
    create_dir(&cfg.out)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    let mut summaries = Vec::new();
    for &horizon in &cfg.horizons {
        let g = geometry(cfg, &series, horizon)?;
        let data = WindowSplits::from_series(&series, cfg.split, cfg.lookback, horizon, cfg.stride)?;
        let teacher = if cfg.guided() {
            Some(acquire_teacher(cfg, &series, horizon)?)
        } else {
            None
        };
        let cells: Vec<CliResult<Vec<RunSummary>>> = pool.install(|| {
            cfg.seeds
                .par_iter()
                .map(|&seed| {
                    cfg.variants
                        .iter()
                        .map(|&v| run_cell(cfg, &data, g, teacher.as_ref(), v, seed))
                        .collect()
                })
                .collect()
        });
        for cell in cells {
            summaries.extend(cell?);
        }
    }
    Ok(summaries)
}

/// `report`: aggregates the run directory into `report.csv`, plus
/// `report_metrics.csv` when more than one metric was run.
pub fn cmd_report(dir: &Path, preferred: Metric) -> CliResult<Report> {
    if !dir.is_dir() {
        return Err(CliError::config(format!("run directory {} does not exist", dir.display())));
    }
    let summaries = collect_summaries(dir)?;
    if summaries.is_empty() {
        return Err(CliError::config(format!("no runs found in {}", dir.display())));
    }
    let report = Report::build(&summaries, preferred)?;
    write(&dir.join(REPORT_FILE), report.main_csv())?;
    if report.has_metric_table() {
        write(&dir.join(METRIC_REPORT_FILE), report.metric_csv())?;
    }
    Ok(report)
}

/// One line of the gradient check report.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckLine {
    pub student: StudentKind,
    pub metric: Metric,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: String,
    pub teacher_grad_abs_max: f64,
    pub passed: bool,
}

/// Deterministic toy batch: C=2, L=8, T=4, B=3.
fn toy_batch() -> CliResult<Batch> {
    let windows: Vec<WindowPair> = (0..3)
        .map(|b| {
            let wave = |c: usize, t: usize| {
                let k = (b * 31 + c * 7 + t) as f64;
                (0.7 * k).sin() + 0.3 * (1.3 * k + c as f64).cos() + 0.1 * b as f64
            };
            WindowPair {
                x: (0..2).map(|c| (0..8).map(|t| wave(c, t)).collect()).collect(),
                y: (0..2).map(|c| (8..12).map(|t| wave(c, t)).collect()).collect(),
                origin: b * 5,
            }
        })
        .collect();
    Ok(Batch::from_windows(&windows, &[0, 1, 2])?)
}

/// Gradient check of the full objective on the toy geometry (d_f=6, d_g=5),
/// for both student kinds and all three metrics.
pub fn gradcheck(tol: f64) -> CliResult<Vec<GradcheckLine>> {
    let g = Geometry::new(2, 8, 4)?;
    let batch = toy_batch()?;
    let shell = StudentForecaster::new(
        StudentConfig {
            kind: StudentKind::PatchMlp,
            d_f: 5,
            hidden: 7,
            patch_len: 4,
        },
        g,
        1,
    )?;
    let teacher = TeacherHandle::from_desk(DeskTeacher::from_student(&shell, TeacherLayer::Output)?);
    let projector = Projector::new(6, 5, 2)?;
    let opts = GradCheckOptions {
        tol,
        ..GradCheckOptions::default()
    };
    let mut lines = Vec::new();
    for kind in [StudentKind::TwoStageLinear, StudentKind::PatchMlp] {
        let student = StudentForecaster::new(
            StudentConfig {
                kind,
                d_f: 6,
                hidden: 7,
                patch_len: 4,
            },
            g,
            0,
        )?;
        for metric in Metric::ALL {
            let cfg = TrainConfig {
                alignment: AlignmentConfig { metric, lambda: 0.5 },
                ..TrainConfig::default()
            };
            let check = check_reguider_loss(&student, &teacher, &projector, &batch, &cfg, opts)?;
            let r = &check.report;
            let worst = match (&r.failure, r.worst) {
                (Some(f), _) => f.clone(),
                (None, Some(w)) => format!(
                    "{}[{}] analytic {} numeric {}",
                    check.names[w.tensor],
                    w.index,
                    fmt6(w.analytic),
                    fmt6(w.numeric)
                ),
                (None, None) => "no coordinates".into(),
            };
            lines.push(GradcheckLine {
                student: kind,
                metric,
                checked: r.checked,
                max_rel_error: r.max_rel_error(),
                worst,
                teacher_grad_abs_max: check.teacher_grad_abs_max,
                passed: r.passed && check.teacher_grad_abs_max == 0.0,
            });
        }
    }
    Ok(lines)
}

/// `gradcheck`: prints one line per (student, metric); fails if any check fails.
pub fn cmd_gradcheck(tol: f64) -> CliResult<Vec<GradcheckLine>> {
    let lines = gradcheck(tol)?;
    for l in &lines {
        println!(
            "{} {:<16} {:<9} coords {:>3}  max rel err {:<12} teacher grad {}  worst {}",
            if l.passed { "PASS" } else { "FAIL" },
            l.student.to_string(),
            l.metric.to_string(),
            l.checked,
            fmt6(l.max_rel_error),
            fmt6(l.teacher_grad_abs_max),
            l.worst
        );
    }
    let failed = lines.iter().filter(|l| !l.passed).count();
    if failed > 0 {
        return Err(CliError::Check(format!(
            "{failed} of {} gradient checks failed at tol {tol:e}",
            lines.len()
        )));
    }
    Ok(lines)
}

fn load_student(cfg: &ExperimentConfig) -> CliResult<StudentForecaster> {
    let ck_path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::config("checkpoint = <student checkpoint> is required"))?;
    if !ck_path.exists() {
        return Err(CliError::config(format!("checkpoint {} does not exist", ck_path.display())));
    }
    Ok(StudentForecaster::from_checkpoint(&Checkpoint::load(ck_path)?)?)
}

/// Student checkpoint plus the dataset windowed at its geometry.
fn student_and_windows(cfg: &ExperimentConfig) -> CliResult<(StudentForecaster, Vec<WindowPair>)> {
    let student = load_student(cfg)?;
    let g = *student.geometry();
    let series = cfg.dataset.load()?;
    if series.channels() != g.channels {
        return Err(CliError::config(format!(
            "checkpoint expects {} channels, the dataset has {}",
            g.channels,
            series.channels()
        )));
    }
    let data = WindowSplits::from_series(&series, cfg.split, g.lookback, g.horizon, cfg.stride)?;
    let windows = match cfg.export_split.as_str() {
        "train" => data.train,
        "val" => data.val,
        _ => data.test,
    };
    Ok((student, windows))
}

/// `evaluate`: test metrics of a saved student. Never builds a teacher.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> CliResult<Metrics> {
    let (student, windows) = student_and_windows(cfg)?;
    let m = evaluate(&student, &windows)?;
    println!(
        "{} windows: mse {} mae {} (bits {:016x} {:016x})",
        cfg.export_split,
        fmt6(m.mse),
        fmt6(m.mae),
        m.mse.to_bits(),
        m.mae.to_bits()
    );
    Ok(m)
}

/// `export-embeddings`: student (and teacher, when one is configured by
/// checkpoint or cache) embeddings for one split.
pub fn cmd_export_embeddings(cfg: &ExperimentConfig, out: &Path, overwrite: bool) -> CliResult<usize> {
    claim(out, overwrite)?;
    let (student, windows) = student_and_windows(cfg)?;
    let teacher = match &cfg.teacher {
        TeacherSpec::Pretrain => None,
        TeacherSpec::Checkpoint(p) => Some(TeacherHandle::from_checkpoint(&Checkpoint::load(p)?)?),
        TeacherSpec::Cache(p) => Some(TeacherHandle::from_cache(EmbeddingCache::load(p)?)),
    };
    if let Some(t) = &teacher {
        check_teacher_geometry(t, student.geometry())?;
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let count = export_embeddings(&student, teacher.as_ref(), &windows, out)?;
    println!("wrote {count} records to {}", out.display());
    Ok(count)
}
