//! End-to-end acceptance checks. Run with
//! `cargo test -p pitchpose-core --test acceptance`; prints one PASS/FAIL
//! line per criterion and fails if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use pitchpose_core::config::PipelineConfig;
use pitchpose_core::eval::{classification_metrics, confusion_matrix, ConfusionRow};
use pitchpose_core::events::{detect_events, infer_handedness, EventConfig};
use pitchpose_core::features::{
    assemble, biomech_features, feature_names, uniform_feature_names, uniform_sampling_features, FeatureSet,
    BIOMECH_LEN, DELTA_LEN, EVENT_NAMES, FEATURE_LEN, METRIC_NAMES, POSE_LEN,
};
use pitchpose_core::geometry::interior_angle;
use pitchpose_core::io::FeatureTable;
use pitchpose_core::pipeline::{self, extract, extract_uniform, make_split, train_model, RunOutput};
use pitchpose_core::pose::{PitchType, PoseSequence, Vec3};
use pitchpose_core::signal::savgol_smooth;
use pitchpose_core::synth::{generate_dataset, is_signature_feature, SynthConfig, SynthEpisode};
use pitchpose_gbdt::{DenseMatrix, GbdtModel, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DATASET_SEED: u64 = 7;
const DATASET_SIZE: usize = 5000;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn synth(n: usize, noise: f64, seed: u64) -> Vec<SynthEpisode> {
    generate_dataset(&SynthConfig {
        n_episodes: n,
        noise_std: noise,
        seed,
        ..SynthConfig::default()
    })
    .expect("synthetic dataset")
}

fn sequences(eps: Vec<SynthEpisode>) -> Vec<PoseSequence> {
    eps.into_iter().map(|e| e.sequence).collect()
}

fn within(d: Duration, limit: Duration) -> String {
    format!("runtime {:.1}s (limit {:.0}s)", d.as_secs_f64(), limit.as_secs_f64())
}

/// Least-squares cubic through a window, evaluated at its centre.
fn window_fit(y: &[f64], order: usize) -> f64 {
    let half = (y.len() / 2) as f64;
    let a = DMatrix::from_fn(y.len(), order + 1, |i, j| (i as f64 - half).powi(j as i32));
    let b = DVector::from_column_slice(y);
    let coef = a.svd(true, true).solve(&b, 1e-14).expect("svd solve");
    coef[0]
}

fn c1_signal_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(21..=300);
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let sm = savgol_smooth(&s, 21, 3).map_err(|e| e.to_string())?;
        for i in 10..n - 10 {
            worst = worst.max((sm[i] - window_fit(&s[i - 10..=i + 10], 3)).abs());
        }
    }
    let t = start.elapsed();
    check(
        worst < 1e-9 && t < Duration::from_secs(10),
        format!("max interior error {worst:.2e}, {}", within(t, Duration::from_secs(10))),
    )
}

fn law_of_cosines(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let ab = (a - b).norm();
    let cb = (c - b).norm();
    let ac = (a - c).norm();
    ((ab * ab + cb * cb - ac * ac) / (2.0 * ab * cb)).clamp(-1.0, 1.0).acos().to_degrees()
}

fn c2_geometry_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut n = 0;
    while n < 1000 {
        let mut p = || Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let (a, b, c) = (p(), p(), p());
        let oracle = law_of_cosines(&a, &b, &c);
        // acos amplifies rounding near 0 and 180 degrees, where the
        // distance-based oracle is itself unreliable
        if (a - b).norm() < 0.1 || (c - b).norm() < 0.1 || !(1.0..179.0).contains(&oracle) {
            continue;
        }
        let got = interior_angle(&a, &b, &c).map_err(|e| e.to_string())?;
        worst = worst.max((got - oracle).abs());
        n += 1;
    }
    check(worst < 1e-9, format!("1000 triples, max error {worst:.2e} deg"))
}

struct DetectionScore {
    n: usize,
    exact: usize,
    within2: usize,
    hand_ok: usize,
    agree: usize,
}

fn score_detection(eps: &[SynthEpisode]) -> DetectionScore {
    let cfg = EventConfig::default();
    let mut s = DetectionScore {
        n: eps.len(),
        exact: 0,
        within2: 0,
        hand_ok: 0,
        agree: 0,
    };
    for e in eps {
        let report = infer_handedness(&e.sequence);
        s.hand_ok += usize::from(report.handedness == e.truth_handedness);
        s.agree += usize::from(report.methods_agree);
        if let Ok((_, ev)) = detect_events(&e.sequence, &cfg) {
            let d = ev
                .frames()
                .iter()
                .zip(e.truth_events.frames())
                .map(|(a, b)| a.abs_diff(b))
                .max()
                .unwrap_or(usize::MAX);
            s.exact += usize::from(d == 0);
            s.within2 += usize::from(d <= 2);
        }
    }
    s
}

fn c3_c4_detection() -> (Outcome, Outcome) {
    let start = Instant::now();
    let noisy = score_detection(&synth(500, 0.02, 3));
    let clean = score_detection(&synth(500, 0.0, 3));
    let t = start.elapsed();
    let limit = Duration::from_secs(60);
    let c3 = check(
        noisy.within2 * 100 >= noisy.n * 95 && clean.exact == clean.n && t < limit,
        format!(
            "noise 0.02: {}/{} within 2 frames; noise 0: {}/{} exact; {}",
            noisy.within2,
            noisy.n,
            clean.exact,
            clean.n,
            within(t, limit)
        ),
    );
    let c4 = check(
        noisy.hand_ok == noisy.n && clean.hand_ok == clean.n && noisy.agree == noisy.n && clean.agree == clean.n,
        format!(
            "handedness correct {}/{}, methods agree {}/{}",
            noisy.hand_ok + clean.hand_ok,
            noisy.n + clean.n,
            noisy.agree + clean.agree,
            noisy.n + clean.n
        ),
    );
    (c3, c4)
}

fn c5_dimensions() -> Outcome {
    let eps = synth(4, 0.02, 5);
    let s = &eps[0].sequence;
    let (rep, ev) = detect_events(s, &EventConfig::default()).map_err(|e| e.to_string())?;
    let v = assemble(s, &ev, rep.handedness).map_err(|e| e.to_string())?;
    let u = uniform_sampling_features(s, 3, rep.handedness).map_err(|e| e.to_string())?;
    let names = feature_names();
    let count = |p: &str| names.iter().filter(|n| n.starts_with(p)).count();
    let blocks = [count("pose."), count("bio."), count("delta."), count("meta.")];
    let ok = v.len() == 229
        && names.len() == 229
        && FEATURE_LEN == 229
        && u.len() == 154
        && uniform_feature_names(3).len() == 154
        && blocks == [153, 45, 30, 1]
        && [POSE_LEN, BIOMECH_LEN, DELTA_LEN] == [153, 45, 30]
        && FeatureSet::PoseOnly.len() == 154;
    check(
        ok,
        format!("assemble {} values, uniform k=3 {} values, blocks {:?}", v.len(), u.len(), blocks),
    )
}

fn c6_invariance() -> Outcome {
    let eps = synth(20, 0.02, 6);
    let cfg = EventConfig::default();
    let shift = Vec3::new(3.7, -12.2, 0.8);
    let scale = 1.9;
    let tilt_idx: Vec<usize> = (0..EVENT_NAMES.len())
        .map(|e| e * METRIC_NAMES.len() + METRIC_NAMES.iter().position(|m| *m == "trunk_lateral_tilt").unwrap())
        .collect();
    let mut worst_affine = 0.0f64;
    let mut worst_mirror = 0.0f64;
    for e in &eps {
        let s = &e.sequence;
        let (rep, ev) = detect_events(s, &cfg).map_err(|e| e.to_string())?;
        let h = rep.handedness;
        let base = assemble(s, &ev, h).map_err(|e| e.to_string())?;
        for moved in [
            s.map_points(|p| p + shift).unwrap(),
            s.map_points(|p| p * scale).unwrap(),
            s.map_points(|p| (p + shift) * scale).unwrap(),
        ] {
            let v = assemble(&moved, &ev, h).map_err(|e| e.to_string())?;
            for (a, b) in base.iter().zip(&v) {
                worst_affine = worst_affine.max((a - b).abs());
            }
        }
        let m = s.mirrored();
        let bio = biomech_features(s, &ev, h).map_err(|e| e.to_string())?;
        let bio_m = biomech_features(&m, &ev, h.flipped()).map_err(|e| e.to_string())?;
        for &i in &tilt_idx {
            worst_mirror = worst_mirror.max((bio[i] - bio_m[i]).abs());
        }
    }
    check(
        worst_affine < 1e-9 && worst_mirror < 1e-9,
        format!("translation/scale max deviation {worst_affine:.2e}, mirror lateral tilt deviation {worst_mirror:.2e}"),
    )
}

struct Main {
    seqs: Vec<PoseSequence>,
    table: FeatureTable,
    cfg: PipelineConfig,
    full: RunOutput,
    elapsed: Duration,
}

fn main_run() -> Main {
    let start = Instant::now();
    let seqs = sequences(synth(DATASET_SIZE, 0.02, DATASET_SEED));
    let ex = extract(&seqs, &EventConfig::default());
    let cfg = PipelineConfig::with_seed(DATASET_SEED);
    let full = pipeline::run(&ex.table, &cfg).expect("pipeline run");
    Main {
        seqs,
        table: ex.table,
        cfg,
        full,
        elapsed: start.elapsed(),
    }
}

fn c7_classifier(m: &Main) -> Outcome {
    let acc = m.full.report.metrics.accuracy;
    let log = &m.full.log;
    let mut prev = log.initial_loss;
    let mut rises = 0;
    for &l in &log.round_loss {
        rises += usize::from(l > prev);
        prev = l;
    }
    let (again, log2) = train_model(&m.table, &m.full.split, &m.cfg).map_err(|e| e.to_string())?;
    let mut a = Vec::new();
    let mut b = Vec::new();
    m.full.model.to_writer(&mut a).map_err(|e| e.to_string())?;
    again.to_writer(&mut b).map_err(|e| e.to_string())?;
    let identical = a == b && log2 == *log;
    let limit = Duration::from_secs(15 * 60);
    check(
        acc >= 0.90 && rises == 0 && identical && m.elapsed < limit && m.full.log.round_loss.len() == 300,
        format!(
            "accuracy {acc:.4} on {} held-out episodes, {rises} loss increases over {} rounds, re-run identical: {identical}, {}",
            m.full.report.n_test,
            log.round_loss.len(),
            within(m.elapsed, limit)
        ),
    )
}

fn run_set(m: &Main, set: FeatureSet) -> Result<f64, String> {
    let mut cfg = m.cfg.clone();
    cfg.feature_set = set;
    Ok(pipeline::run(&m.table, &cfg).map_err(|e| e.to_string())?.report.metrics.accuracy)
}

fn c8_ablation(m: &Main) -> Outcome {
    let full = m.full.report.metrics.accuracy;
    let pb = run_set(m, FeatureSet::PoseBiomech)?;
    let po = run_set(m, FeatureSet::PoseOnly)?;
    let tol = 0.005;
    check(
        full >= pb - tol && pb >= po - tol,
        format!("pose {po:.4}, pose+biomech {pb:.4}, pose+biomech+delta {full:.4}"),
    )
}

fn c9_sampling(m: &Main) -> Outcome {
    let event = run_set(m, FeatureSet::PoseOnly)?;
    let u = extract_uniform(&m.seqs, 3);
    if !u.failures.is_empty() {
        return Err(format!("{} uniform extractions failed", u.failures.len()));
    }
    let uniform = pipeline::run(&u.table, &m.cfg).map_err(|e| e.to_string())?.report.metrics.accuracy;
    check(
        event - uniform >= 0.03,
        format!("event-based 3 frames {event:.4}, evenly spaced 3 frames {uniform:.4}"),
    )
}

fn c10_twins() -> Outcome {
    let cfg = SynthConfig {
        n_episodes: DATASET_SIZE,
        seed: DATASET_SEED,
        twin_classes: Some([PitchType::FF, PitchType::FT]),
        class_distribution: vec![1.0 / 8.0; 8],
        ..SynthConfig::default()
    };
    let seqs = sequences(generate_dataset(&cfg).map_err(|e| e.to_string())?);
    let ex = extract(&seqs, &EventConfig::default());
    let out = pipeline::run(&ex.table, &PipelineConfig::with_seed(DATASET_SEED)).map_err(|e| e.to_string())?;
    let c = &out.report.confusion;
    let (ff, ft) = (PitchType::FF.ordinal(), PitchType::FT.ordinal());
    let ff_ft = c.rate(ff, ft).unwrap_or(0.0);
    let ft_ff = c.rate(ft, ff).unwrap_or(0.0);
    let others: Vec<(PitchType, f64)> = PitchType::ALL
        .iter()
        .filter(|p| ![PitchType::FF, PitchType::FT].contains(p))
        .map(|&p| (p, c.rate(p.ordinal(), p.ordinal()).unwrap_or(0.0)))
        .collect();
    let min_other = others.iter().map(|(_, r)| *r).fold(1.0, f64::min);
    check(
        ff_ft > 0.35 && ft_ff > 0.35 && min_other >= 0.85,
        format!("FF->FT {ff_ft:.3}, FT->FF {ft_ff:.3}, lowest other recall {min_other:.3}"),
    )
}

fn c11_importance(m: &Main) -> Outcome {
    let agg = m.full.report.importance.as_ref().ok_or("no importance in report")?;
    let sums = [&agg.by_category, &agg.by_joint, &agg.by_region, &agg.by_event]
        .map(|v| v.iter().map(|s| s.share).sum::<f64>());
    let sums_ok = sums.iter().all(|s| (s - 1.0).abs() < 1e-9);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (d, signal) = (12, 7);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..1200 {
        let c = i % 3;
        let mut row: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        row[signal] = c as f64 + rng.random_range(-0.3..0.3);
        rows.push(row);
        y.push(c);
    }
    let x = DenseMatrix::from_rows(&rows).map_err(|e| e.to_string())?;
    let names: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
    let classes: Vec<String> = (0..3).map(|i| format!("c{i}")).collect();
    let (model, _) = GbdtModel::fit(&x, &y, &classes, &names, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let single = model.gain_importance().map_err(|e| e.to_string())?[signal];

    let imp = m.full.model.gain_importance().map_err(|e| e.to_string())?;
    let family: f64 = m
        .full
        .model
        .feature_names()
        .iter()
        .zip(&imp)
        .filter(|(n, _)| is_signature_feature(n))
        .map(|(_, v)| v)
        .sum();
    check(
        sums_ok && single > 0.9 && family >= 0.5,
        format!(
            "aggregation sums {:?}, single informative feature {single:.3}, signature families {family:.3}",
            sums.map(|s| format!("{s:.12}"))
        ),
    )
}

fn c12_metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let classes: Vec<String> = PitchType::codes();
    let k = classes.len();
    let mut worst_row = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..400);
        let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let rep = classification_metrics(&t, &p, &classes).map_err(|e| e.to_string())?;
        let cm = confusion_matrix(&t, &p, &classes).map_err(|e| e.to_string())?;
        let correct = t.iter().zip(&p).filter(|(a, b)| a == b).count();
        if rep.accuracy != correct as f64 / n as f64 {
            return Err("accuracy differs from direct count".into());
        }
        for c in 0..k {
            let tp = (0..n).filter(|&i| t[i] == c && p[i] == c).count();
            let fp = (0..n).filter(|&i| t[i] != c && p[i] == c).count();
            let fneg = (0..n).filter(|&i| t[i] == c && p[i] != c).count();
            let prec = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let rec = if tp + fneg == 0 { 0.0 } else { tp as f64 / (tp + fneg) as f64 };
            let f1 = if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
            let m = &rep.per_class[c];
            if m.precision != prec || m.recall != rec || m.f1 != f1 || m.support != tp + fneg {
                return Err(format!("class {c} metrics differ from direct count"));
            }
            for q in 0..k {
                let cnt = (0..n).filter(|&i| t[i] == c && p[i] == q).count();
                if cm.counts[c][q] != cnt {
                    return Err(format!("confusion count ({c},{q}) differs"));
                }
            }
            match &cm.normalized[c] {
                ConfusionRow::Recall(r) => worst_row = worst_row.max((r.iter().sum::<f64>() - 1.0).abs()),
                ConfusionRow::NotAvailable(_) if tp + fneg == 0 => {}
                ConfusionRow::NotAvailable(_) => return Err(format!("row {c} flagged but has support")),
            }
        }
    }
    check(worst_row < 1e-9, format!("100 label vectors exact, worst row-sum error {worst_row:.2e}"))
}

fn c13_standardization(m: &Main) -> Outcome {
    let on = m.cfg.clone();
    let mut off = m.cfg.clone();
    off.train.standardize = false;
    let split = make_split(&m.table, &on).map_err(|e| e.to_string())?;
    let (model_off, _) = train_model(&m.table, &split, &off).map_err(|e| e.to_string())?;
    let rows: Vec<&[f64]> = m.table.rows.iter().map(|r| r.as_slice()).collect();
    let x = DenseMatrix::from_rows(&rows).map_err(|e| e.to_string())?;
    let a = m.full.model.predict_matrix(&x).map_err(|e| e.to_string())?;
    let b = model_off.predict_matrix(&x).map_err(|e| e.to_string())?;
    let differ = a.iter().zip(&b).filter(|(p, q)| p != q).count();
    check(
        differ == 0 && m.full.model.stats().is_some() && model_off.stats().is_none(),
        format!("{} predictions compared, {differ} differ", a.len()),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    })
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |id: u32, name: &'static str, o: Outcome| results.push((id, name, o));
    report(1, "signal oracle equivalence", guarded(c1_signal_oracle));
    report(2, "geometry oracle equivalence", guarded(c2_geometry_oracle));
    let (c3, c4) = catch_unwind(c3_c4_detection).unwrap_or_else(|_| (Err("panicked".into()), Err("panicked".into())));
    report(3, "event detection on synthetic truth", c3);
    report(4, "handedness", c4);
    report(5, "dimension contracts", guarded(c5_dimensions));
    report(6, "invariance suite", guarded(c6_invariance));
    match catch_unwind(main_run) {
        Ok(m) => {
            report(7, "classifier sanity", guarded(|| c7_classifier(&m)));
            report(8, "ablation direction", guarded(|| c8_ablation(&m)));
            report(9, "sampling direction", guarded(|| c9_sampling(&m)));
            report(11, "importance machinery", guarded(|| c11_importance(&m)));
            report(13, "standardization invariance", guarded(|| c13_standardization(&m)));
        }
        Err(_) => {
            for (id, name) in [
                (7, "classifier sanity"),
                (8, "ablation direction"),
                (9, "sampling direction"),
                (11, "importance machinery"),
                (13, "standardization invariance"),
            ] {
                report(id, name, Err("main synthetic run panicked".into()));
            }
        }
    }
    report(10, "grip-twin ceiling", guarded(c10_twins));
    report(12, "metrics oracle", guarded(c12_metrics_oracle));
    results.sort_by_key(|r| r.0);
    for (id, name, o) in &results {
        match o {
            Ok(d) => println!("PASS {id:>2} {name}: {d}"),
            Err(d) => println!("FAIL {id:>2} {name}: {d}"),
        }
    }
    let failed: Vec<u32> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed",
        results.len() - failed.len(),
        failed.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
