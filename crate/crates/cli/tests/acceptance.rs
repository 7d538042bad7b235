//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

#![allow(clippy::needless_range_loop)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reguider::align::{pred_loss_mse, sim_cosine, sim_euclidean, sim_kl, tsra_loss, AlignmentConfig, Metric, Projector};
use reguider::dataset::{chronological_split, epoch_batches, make_windows, window_count, MultivariateSeries, SplitSpec, WindowPair};
use reguider::embeddings::EmbeddingCache;
use reguider::models::{Checkpoint, DeskTeacher, Geometry, StudentConfig, StudentForecaster, StudentKind, TeacherHandle, TeacherLayer};
use reguider::tensor::{Tape, Tensor};
use reguider::train::{evaluate, export_embeddings, fit, train_step, Adam, Batch, Guidance, TrainConfig, WindowSplits};

use reguider_cli::commands;
use reguider_cli::config::ExperimentConfig;
use reguider_cli::report::{collect_summaries, Report, METRIC_REPORT_FILE, SUMMARY_FILE};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'a str, Box<dyn Fn() -> Outcome>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn config(overrides: &[&str]) -> Result<ExperimentConfig, String> {
    let args: Vec<String> = overrides.iter().map(|s| format!("--{s}")).collect();
    ExperimentConfig::resolve(None, &args).map_err(err)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn random_windows(rng: &mut ChaCha8Rng, n: usize, c: usize, l: usize, t: usize) -> Vec<WindowPair> {
    (0..n)
        .map(|i| WindowPair {
            x: (0..c).map(|_| uniform(rng, l, 3.0)).collect(),
            y: (0..c).map(|_| uniform(rng, t, 3.0)).collect(),
            origin: i,
        })
        .collect()
}

fn toy_student(kind: StudentKind, d_f: usize, seed: u64) -> StudentForecaster {
    let config = StudentConfig {
        kind,
        d_f,
        hidden: 7,
        patch_len: 4,
    };
    StudentForecaster::new(config, Geometry::new(2, 8, 4).unwrap(), seed).unwrap()
}

fn toy_teacher(d_g: usize, seed: u64) -> TeacherHandle {
    let shell = toy_student(StudentKind::PatchMlp, d_g, seed);
    TeacherHandle::from_desk(DeskTeacher::from_student(&shell, TeacherLayer::Output).unwrap())
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn gradient_integrity() -> Outcome {
    let start = Instant::now();
    let lines = commands::gradcheck(1e-4).map_err(err)?;
    let elapsed = start.elapsed().as_secs_f64();
    let worst = lines.iter().map(|l| l.max_rel_error).fold(0.0, f64::max);
    ensure(lines.len() == 6, || format!("expected 6 checks, got {}", lines.len()))?;
    for l in &lines {
        ensure(l.passed && l.max_rel_error < 1e-4, || {
            format!("{} {}: {}", l.student, l.metric, l.worst)
        })?;
    }
    ensure(elapsed < 30.0, || format!("took {elapsed:.1}s"))?;
    Ok(format!("3 metrics x 2 students, max rel err {worst:.2e}, {elapsed:.2}s"))
}

fn oracle_distance(metric: Metric, a: &[f64], b: &[f64]) -> f64 {
    match metric {
        Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
        Metric::Cosine => {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for i in 0..a.len() {
                dot += a[i] * b[i];
                na += a[i] * a[i];
                nb += b[i] * b[i];
            }
            1.0 - dot / (na.sqrt().max(1e-12) * nb.sqrt().max(1e-12))
        }
        Metric::Kl => {
            let softmax = |v: &[f64]| {
                let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|x| x / s).collect::<Vec<_>>()
            };
            let (p, q) = (softmax(a), softmax(b));
            (0..p.len()).map(|i| p[i] * (p[i].max(1e-12).ln() - q[i].max(1e-12).ln())).sum()
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()))
}

fn loss_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..120 {
        let metric = Metric::ALL[case % 3];
        let b = rng.random_range(1..=16);
        let d_f = rng.random_range(1..=32);
        let d_g = rng.random_range(2..=32);
        let (h_f, h_g) = (uniform(&mut rng, b * d_f, 2.0), uniform(&mut rng, b * d_g, 2.0));
        let (w, bias) = (uniform(&mut rng, d_f * d_g, 1.0), uniform(&mut rng, d_g, 0.5));
        let projector = Projector::from_parts(
            Tensor::from_vec(vec![d_f, d_g], w.clone()).unwrap(),
            Tensor::from_vec(vec![d_g], bias.clone()).unwrap(),
        )
        .map_err(err)?;
        let mut tape = Tape::new();
        let pv = projector.bind(&mut tape);
        let f = tape.constant_from(vec![b, d_f], h_f.clone()).unwrap();
        let g = tape.constant_from(vec![b, d_g], h_g.clone()).unwrap();
        let loss = tsra_loss(&mut tape, metric, &projector, &pv, f, g).map_err(err)?;
        let mut expected = 0.0;
        for r in 0..b {
            let mut projected = bias.clone();
            for j in 0..d_g {
                for k in 0..d_f {
                    projected[j] += h_f[r * d_f + k] * w[k * d_g + j];
                }
            }
            expected += oracle_distance(metric, &projected, &h_g[r * d_g..(r + 1) * d_g]);
        }
        expected /= b as f64;
        ensure(close(tape.scalar(loss), expected), || format!("tsra case {case}"))?;
    }

    for case in 0..120 {
        let (b, c, t) = (rng.random_range(1..=16), rng.random_range(1..=4), rng.random_range(1..=32));
        let n = b * c * t;
        let (y_hat, y) = (uniform(&mut rng, n, 5.0), uniform(&mut rng, n, 5.0));
        let mut tape = Tape::new();
        let a = tape.constant_from(vec![b, c, t], y_hat.clone()).unwrap();
        let z = tape.constant_from(vec![b, c, t], y.clone()).unwrap();
        let loss = pred_loss_mse(&mut tape, a, z).map_err(err)?;
        let expected = (0..n).map(|i| (y_hat[i] - y[i]) * (y_hat[i] - y[i])).sum::<f64>() / n as f64;
        ensure(close(tape.scalar(loss), expected), || format!("mse case {case}"))?;
    }

    for case in 0..100 {
        let (c, l, t) = (rng.random_range(1..=3), rng.random_range(2..=12), rng.random_range(1..=8));
        let d_f = rng.random_range(1..=32);
        let n = rng.random_range(1..=16);
        let config = StudentConfig {
            kind: StudentKind::TwoStageLinear,
            d_f,
            ..StudentConfig::default()
        };
        let student = StudentForecaster::new(config, Geometry::new(c, l, t).unwrap(), case).map_err(err)?;
        let windows = random_windows(&mut rng, n, c, l, t);
        let got = evaluate(&student, &windows).map_err(err)?;
        let (mut sq, mut abs) = (0.0, 0.0);
        for w in &windows {
            let f = linear_forecast(&student, w);
            for ch in 0..c {
                for s in 0..t {
                    let e = f[ch][s] - w.y[ch][s];
                    sq += e * e;
                    abs += e.abs();
                }
            }
        }
        let count = (n * c * t) as f64;
        ensure(close(got.mse, sq / count) && close(got.mae, abs / count), || {
            format!("evaluate case {case}")
        })?;
    }
    Ok("tsra 120, mse 120, evaluate 100 instances within 1e-10".into())
}

/// Two-stage linear forecast written out as loops.
fn linear_forecast(student: &StudentForecaster, w: &WindowPair) -> Vec<Vec<f64>> {
    let g = student.geometry();
    let (c, l, t, d_f) = (g.channels, g.lookback, g.horizon, student.d_f());
    let enc = student.encoder_params();
    let head = student.head_params();
    let (ew, eb) = (enc.get("enc.w").unwrap().data(), enc.get("enc.b").unwrap().data());
    let (hw, hb) = (head.get("head.w").unwrap().data(), head.get("head.b").unwrap().data());
    let mut stats = Vec::new();
    let mut flat = Vec::new();
    for ch in 0..c {
        let m = w.x[ch].iter().sum::<f64>() / l as f64;
        let sd = (w.x[ch].iter().map(|v| (v - m) * (v - m)).sum::<f64>() / l as f64).sqrt().max(1e-8);
        stats.push((m, sd));
        flat.extend(w.x[ch].iter().map(|v| (v - m) / sd));
    }
    let h: Vec<f64> = (0..d_f)
        .map(|j| (eb[j] + (0..c * l).map(|k| flat[k] * ew[k * d_f + j]).sum::<f64>()).max(0.0))
        .collect();
    (0..c)
        .map(|ch| {
            (0..t)
                .map(|s| {
                    let col = ch * t + s;
                    let v = hb[col] + (0..d_f).map(|j| h[j] * hw[j * c * t + col]).sum::<f64>();
                    v * stats[ch].1 + stats[ch].0
                })
                .collect()
        })
        .collect()
}

fn analytic_values() -> Outcome {
    let e = sim_euclidean(&[1.0, 2.0], &[3.0, 4.0]).map_err(err)?;
    let c = sim_cosine(&[3.0, 4.0], &[4.0, 3.0]).map_err(err)?;
    let k = sim_kl(&[2f64.ln(), 0.0], &[0.0, 0.0]).map_err(err)?;
    ensure(e == 8.0, || format!("euclidean {e}"))?;
    ensure((c - 0.04).abs() <= 1e-12, || format!("cosine {c}"))?;
    ensure((k - 0.0566).abs() <= 1e-4, || format!("kl {k}"))?;
    Ok(format!("euclidean {e}, cosine {c:.12}, kl {k:.6}"))
}

fn guided_cfg(metric: Metric, lambda: f64) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        epochs: 1,
        batch_size: 4,
        seed: 3,
        alignment: AlignmentConfig { metric, lambda },
        early_stop_patience: 0,
    }
}

fn freeze() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let windows = random_windows(&mut rng, 40, 2, 8, 4);
    let teacher = toy_teacher(5, 12);
    let digest = teacher.current_checksum();
    let mut steps_total = 0;
    for metric in Metric::ALL {
        let cfg = guided_cfg(metric, 0.5);
        let mut s = toy_student(StudentKind::PatchMlp, 6, 3);
        let mut guidance = Guidance::new(&teacher, &s, 4).map_err(err)?;
        let mut opt = Adam::new(cfg.learning_rate);
        let mut steps = 0;
        let mut epoch = 0;
        while steps < 100 {
            for indices in epoch_batches(windows.len(), cfg.batch_size, cfg.seed, epoch) {
                let batch = Batch::from_windows(&windows, &indices).map_err(err)?;
                let losses = train_step(&mut s, Some(&mut guidance), &batch, &mut opt, &cfg).map_err(err)?;
                ensure(losses.teacher_grad_abs_max == 0.0, || {
                    format!("{metric} step {steps}: teacher gradient {}", losses.teacher_grad_abs_max)
                })?;
                steps += 1;
            }
            epoch += 1;
        }
        ensure(teacher.current_checksum() == digest, || format!("{metric}: teacher digest changed"))?;
        steps_total += steps;
    }
    Ok(format!(
        "{steps_total} guided steps over 3 metrics, digest unchanged, teacher gradient 0"
    ))
}

fn plug_in_strictness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let windows = random_windows(&mut rng, 24, 2, 8, 4);
    let teacher = toy_teacher(5, 11);
    let mut steps = 0;
    for metric in Metric::ALL {
        for kind in [StudentKind::TwoStageLinear, StudentKind::PatchMlp] {
            let cfg = guided_cfg(metric, 0.0);
            let mut base = toy_student(kind, 6, 1);
            let mut guided = base.clone();
            let mut guidance = Guidance::new(&teacher, &guided, 2).map_err(err)?;
            let (mut opt_a, mut opt_b) = (Adam::new(cfg.learning_rate), Adam::new(cfg.learning_rate));
            for epoch in 0..4 {
                for indices in epoch_batches(windows.len(), cfg.batch_size, cfg.seed, epoch) {
                    let batch = Batch::from_windows(&windows, &indices).map_err(err)?;
                    train_step(&mut base, None, &batch, &mut opt_a, &cfg).map_err(err)?;
                    train_step(&mut guided, Some(&mut guidance), &batch, &mut opt_b, &cfg).map_err(err)?;
                    ensure(bits(&base.flat_params()) == bits(&guided.flat_params()), || {
                        format!("{kind} {metric}: trajectories differ at step {steps}")
                    })?;
                    steps += 1;
                }
            }
        }
    }
    ensure(steps >= 20 * 6, || format!("only {steps} steps"))?;
    Ok(format!("{steps} steps bit-identical across 3 metrics x 2 students"))
}

fn inference_independence(dir: &Path) -> Outcome {
    let cfg = config(&["dataset=synth:length=600", "lookback=24", "horizons=12", "epochs=3", "d_f=16"])?;
    let series = cfg.dataset.load().map_err(err)?;
    let g = Geometry::new(series.channels(), 24, 12).map_err(err)?;
    let data = WindowSplits::from_series(&series, cfg.split, 24, 12, 1).map_err(err)?;
    let mut student = StudentForecaster::new(cfg.student, g, 0).map_err(err)?;
    fit(&mut student, None, &data, &cfg.train_config(reguider_cli::config::Variant::Base, 0)).map_err(err)?;
    let ck = dir.join("student.rgm");
    student.to_checkpoint().save(&ck).map_err(err)?;

    // This process holds a live teacher while evaluating.
    let shell = StudentForecaster::new(
        StudentConfig {
            kind: StudentKind::PatchMlp,
            d_f: 8,
            hidden: 8,
            patch_len: 12,
        },
        g,
        1,
    )
    .map_err(err)?;
    let teacher = TeacherHandle::from_desk(DeskTeacher::from_student(&shell, TeacherLayer::Output).map_err(err)?);
    let _guidance = Guidance::new(&teacher, &student, 0).map_err(err)?;
    let with_teacher = evaluate(&student, &data.test).map_err(err)?;

    // A fresh process that never constructs one.
    let out = Command::new(env!("CARGO_BIN_EXE_reguider"))
        .args(["evaluate", "--dataset", "synth:length=600", "--checkpoint"])
        .arg(&ck)
        .output()
        .map_err(err)?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    ensure(out.status.success(), || {
        format!("evaluate failed: {}", String::from_utf8_lossy(&out.stderr))
    })?;
    let expected = format!("(bits {:016x} {:016x})", with_teacher.mse.to_bits(), with_teacher.mae.to_bits());
    ensure(stdout.contains(&expected), || {
        format!("teacher-free process printed {stdout:?}, expected {expected}")
    })?;
    Ok(format!(
        "mse {:.6} mae {:.6} bit-identical with and without a teacher process",
        with_teacher.mse, with_teacher.mae
    ))
}

fn directional_benefit(dir: &Path) -> Outcome {
    let start = Instant::now();
    let out = dir.to_str().unwrap();
    let mut cfg = config(&[
        "dataset=synth",
        "lookback=96",
        "horizons=96",
        "teacher_data=synth:seed=1007",
        "teacher_pool=4",
        "teacher_stride=2",
        "teacher_patch_len=96",
        "teacher_hidden=32",
        "d_g=16",
        "teacher_lr=0.01",
        "teacher_epochs=60",
        "epochs=40",
        "seeds=0,1,2,3",
        "metrics=euclidean",
        "lambda=0.5",
    ])?;
    cfg.out = out.into();
    let runs = commands::cmd_train(&cfg, 1, true).map_err(err)?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in 0..4 {
        let pick = |variant: &str| runs.iter().find(|r| r.seed == seed && r.variant == variant).map(|r| r.test_mse);
        let (base, guided) = (
            pick("base").ok_or("missing base run")?,
            pick("reguider").ok_or("missing guided run")?,
        );
        if guided <= base {
            wins += 1;
        }
        detail.push(format!("{guided:.4}/{base:.4}"));
    }
    let summary = format!("{wins}/4 seeds guided <= base ({}), {elapsed:.0}s", detail.join(" "));
    ensure(wins >= 3 && elapsed < 600.0, || summary.clone())?;
    Ok(summary)
}

fn metric_ablation(dir: &Path) -> Outcome {
    let mut cfg = config(&[
        "dataset=synth:length=900",
        "lookback=24",
        "horizons=12",
        "d_f=16",
        "d_g=8",
        "teacher_hidden=8",
        "teacher_patch_len=12",
        "teacher_epochs=3",
        "epochs=3",
        "seeds=0,1,2",
        "metrics=euclidean,cosine,kl",
    ])?;
    cfg.out = dir.into();
    commands::cmd_train(&cfg, 2, true).map_err(err)?;
    let report = commands::cmd_report(dir, Metric::Euclidean).map_err(err)?;

    let table = std::fs::read_to_string(dir.join(METRIC_REPORT_FILE)).map_err(err)?;
    let listed: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').nth(2).unwrap_or("")).collect();
    ensure(listed == ["euclidean", "cosine", "kl"], || format!("table rows {listed:?}"))?;
    ensure(report.metric_rows.len() == 3, || {
        format!("{} metric rows", report.metric_rows.len())
    })?;

    // Recompute means straight from the per-run files.
    let mut checked = 0;
    for row in &report.metric_rows {
        let (mut mse, mut mae, mut n) = (0.0, 0.0, 0usize);
        for entry in std::fs::read_dir(dir).map_err(err)? {
            let path = entry.map_err(err)?.path().join(SUMMARY_FILE);
            let Ok(text) = std::fs::read_to_string(&path) else { continue };
            let mut lines = text.lines();
            let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
            let values: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
            let field = |name: &str| values[header.iter().position(|h| *h == name).unwrap()];
            if field("metric") == row.metric.to_string() {
                mse += field("test_mse").parse::<f64>().map_err(err)?;
                mae += field("test_mae").parse::<f64>().map_err(err)?;
                n += 1;
            }
        }
        ensure(n == 3, || format!("{}: {n} runs", row.metric))?;
        let (mse, mae) = (mse / n as f64, mae / n as f64);
        ensure(
            (mse - row.reguider.mse).abs() <= 1e-12 && (mae - row.reguider.mae).abs() <= 1e-12,
            || {
                format!(
                    "{}: report {} {} vs recomputed {mse} {mae}",
                    row.metric, row.reguider.mse, row.reguider.mae
                )
            },
        )?;
        checked += 1;
    }
    let summaries = collect_summaries(dir).map_err(err)?;
    let rebuilt = Report::build(&summaries, Metric::Euclidean).map_err(err)?;
    ensure(rebuilt == report, || "report is not reproducible from the run files".into())?;
    Ok(format!("{checked} metrics x 3 seeds, means match recomputation within 1e-12"))
}

fn format_round_trips(dir: &Path) -> Outcome {
    for kind in [StudentKind::TwoStageLinear, StudentKind::PatchMlp] {
        let s = toy_student(kind, 6, 21);
        let path = dir.join(format!("{kind}.rgm"));
        s.to_checkpoint().save(&path).map_err(err)?;
        let back = StudentForecaster::from_checkpoint(&Checkpoint::load(&path).map_err(err)?).map_err(err)?;
        ensure(bits(&back.flat_params()) == bits(&s.flat_params()), || {
            format!("{kind} parameters differ")
        })?;
    }
    let teacher = toy_teacher(5, 3);
    let path = dir.join("teacher.rgm");
    teacher.to_checkpoint().map_err(err)?.save(&path).map_err(err)?;
    let back = TeacherHandle::from_checkpoint(&Checkpoint::load(&path).map_err(err)?).map_err(err)?;
    ensure(back == teacher, || "teacher checkpoint differs".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let windows = random_windows(&mut rng, 12, 2, 8, 4);
    let emb = dir.join("emb.rge");
    export_embeddings(&toy_student(StudentKind::TwoStageLinear, 6, 1), Some(&teacher), &windows, &emb).map_err(err)?;
    let cached = TeacherHandle::from_cache(EmbeddingCache::load(&emb).map_err(err)?);
    let ids: Vec<usize> = (0..windows.len()).collect();
    let batch = Batch::from_windows(&windows, &ids).map_err(err)?;
    let h_g = |t: &TeacherHandle| -> Result<Vec<f64>, String> {
        let mut tape = Tape::new();
        let x = tape.constant(&batch.x);
        let out = t.encode(&mut tape, x, &batch.ids).map_err(err)?;
        Ok(tape.value(out.embedding).to_vec())
    };
    ensure(bits(&h_g(&cached)?) == bits(&h_g(&teacher)?), || "cached H_g differs".into())?;
    Ok("RGM1 student/teacher parameters and RGE1 cached H_g bit-exact".into())
}

fn dataset_invariants() -> Outcome {
    let series = |c: usize, n: usize| {
        let values = (0..c)
            .map(|ch| (0..n).map(|t| (t * 7 + ch * 13) as f64 % 11.0 - 5.0).collect())
            .collect();
        MultivariateSeries::new((0..c).map(|ch| format!("c{ch}")).collect(), values).unwrap()
    };
    let mut cases = 0;
    for n in 2..=50 {
        let s = series(1, n);
        for l in 1..n {
            for t in 1..=(n - l) {
                for stride in 1..=4 {
                    let brute = (0..n).step_by(stride).filter(|&o| o + l + t <= n).count();
                    ensure(window_count(n, l, t, stride) == brute, || format!("N={n} L={l} T={t} s={stride}"))?;
                    ensure(make_windows(&s, l, t, stride).map_err(err)?.len() == brute, || {
                        format!("windows N={n} L={l} T={t}")
                    })?;
                    cases += 1;
                }
            }
        }
    }
    let mut splits_checked = 0;
    for n in [30, 47, 100, 333] {
        for l in [1, 4, 8] {
            let s = series(3, n);
            let Ok(parts) = chronological_split(&s, SplitSpec::default(), l) else {
                continue;
            };
            for ch in 0..3 {
                let mut rebuilt = parts.train.channel(ch).to_vec();
                rebuilt.extend_from_slice(&parts.val.channel(ch)[parts.context..]);
                rebuilt.extend_from_slice(&parts.test.channel(ch)[parts.context..]);
                ensure(rebuilt == s.channel(ch), || format!("split N={n} L={l} does not reconstruct"))?;
            }
            splits_checked += 1;
        }
    }
    Ok(format!("{cases} window-count cases, {splits_checked} split reconstructions"))
}

fn main() {
    let scratch = tempfile::tempdir().expect("temporary directory");
    let sub = |name: &str| {
        let p = scratch.path().join(name);
        std::fs::create_dir_all(&p).unwrap();
        p
    };
    let (d6, d7, d8, d9) = (sub("inference"), sub("directional"), sub("ablation"), sub("formats"));
    let criteria: Vec<Criterion> = vec![
        ("gradient integrity", Box::new(gradient_integrity)),
        ("loss-formula oracles", Box::new(loss_oracles)),
        ("analytic loss values", Box::new(analytic_values)),
        ("stop-gradient and freeze", Box::new(freeze)),
        ("plug-in strictness", Box::new(plug_in_strictness)),
        ("inference independence", Box::new(move || inference_independence(&d6))),
        ("directional benefit", Box::new(move || directional_benefit(&d7))),
        ("metric ablation table", Box::new(move || metric_ablation(&d8))),
        ("format round-trips", Box::new(move || format_round_trips(&d9))),
        ("dataset invariants", Box::new(dataset_invariants)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
