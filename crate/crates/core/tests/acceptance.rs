//! Acceptance checks. Prints one PASS/FAIL line per check and exits nonzero
//! if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use selftomo::joint::{
    calibration_tables, decompose, inferred_distribution, invert, reconstruct_outcome_vectors,
    JointPovm, JointTomographyOptions, OUTCOMES,
};
use selftomo::onoff::{
    click_probabilities_closed, click_probabilities_oracle, fit_onoff, OnOffParams,
    SqueezedVacuumParams,
};
use selftomo::protocol::{
    calibration_settings, derive_seed, joint_statistics_closed, joint_statistics_oracle,
    sample_counts, ProtocolSetting, RotationChoice, ShotRecord, Sign,
};
use selftomo::quantum::{BlochVector, MeasurementBasis};
use selftomo::reconstruction::{
    forward_probabilities, perturbation_robustness, reconstruct_bloch, reconstruct_from_counts,
    CountOptions, ReconstructionOptions,
};

struct Verdict {
    pass: bool,
    detail: String,
}

type Check = fn() -> Verdict;

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let checks: [(&str, Check); 9] = [
        ("qubit closed form vs Born-rule oracle", oracle_equivalence),
        ("worked example", worked_example),
        ("exact round trip", exact_round_trip),
        ("finite-shot scaling", finite_shot_scaling),
        ("mismatched-detector robustness", mismatch_robustness),
        ("on/off closed form, Fock oracle and fit", onoff),
        ("joint-POVM tomography round trip", joint_tomography),
        ("Bell negativity", bell_negativity),
        ("CLI determinism", cli_determinism),
    ];
    let mut failures = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let v =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| verdict(false, "panicked"));
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "{tag}  {name}: {} [{:.2} s]",
            v.detail,
            start.elapsed().as_secs_f64()
        );
        failures += usize::from(!v.pass);
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        checks.len() - failures
    );
    if failures > 0 {
        std::process::exit(1);
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn oracle_equivalence() -> Verdict {
    let ((max_dev, n), elapsed) = timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut max_dev: f64 = 0.0;
        let n = 1000;
        for i in 0..n {
            let s1 = common::in_ball(&mut rng, 1.0);
            let s2 = common::in_ball(&mut rng, 1.0);
            let rotation = match i % 3 {
                0 => RotationChoice::R0.rotation(),
                1 => RotationChoice::R1.rotation(),
                _ => common::rotation(&mut rng),
            };
            let setting = ProtocolSetting::new(common::basis(&mut rng), rotation);
            let closed = joint_statistics_closed(&s1, &s2, &setting)
                .unwrap()
                .entries();
            let oracle = joint_statistics_oracle(&s1, &s2, &setting)
                .unwrap()
                .entries();
            for k in 0..4 {
                max_dev = max_dev.max((closed[k] - oracle[k]).abs());
            }
        }
        (max_dev, n)
    });
    let pass = max_dev <= 1e-12 && elapsed < Duration::from_secs(2);
    verdict(
        pass,
        format!(
            "{n} cases, max deviation {max_dev:.1e} (tol 1e-12), {:.3} s (limit 2 s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn worked_example() -> Verdict {
    let s = BlochVector::new(0.3, -0.4, 0.5);
    let p = forward_probabilities(&s).to_array();
    let expected = [0.25, 0.33, 0.295, 0.3075, 0.1325, 0.2675];
    let prob_dev = p
        .iter()
        .zip(expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let mut oracle_dev: f64 = 0.0;
    for ((b, r), e) in calibration_settings().iter().zip(expected) {
        let t = joint_statistics_oracle(&s, &s, &ProtocolSetting::new(*b, r.rotation())).unwrap();
        oracle_dev = oracle_dev.max((0.5 * (t.pp + t.mm) - e).abs());
    }

    let report = reconstruct_bloch(
        &forward_probabilities(&s),
        &ReconstructionOptions::default(),
    )
    .unwrap();
    let est = report.estimate.0;
    let sign = est[2].signum();
    let rec_dev = [0.3, -0.4, 0.5]
        .iter()
        .zip(est)
        .map(|(a, b)| (a - sign * b).abs())
        .fold(0.0, f64::max);
    let pass = prob_dev <= 1e-12 && oracle_dev <= 1e-12 && rec_dev <= 1e-12;
    verdict(
        pass,
        format!(
            "probabilities within {prob_dev:.1e}, oracle within {oracle_dev:.1e}, recovered S within {rec_dev:.1e} (tol 1e-12)"
        ),
    )
}

fn exact_round_trip() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let options = ReconstructionOptions::default();
    let mut worst: f64 = 0.0;
    let mut fallback = 0;
    let n = 1000;
    for i in 0..n {
        let mut s = common::in_ball(&mut rng, 0.99);
        if i % 10 == 0 {
            // pivot fallback: the third component vanishes
            s = BlochVector::new(s.0[0], s.0[1], 0.0);
            fallback += 1;
        }
        let report = reconstruct_bloch(&forward_probabilities(&s), &options).unwrap();
        worst = worst.max(report.estimate.sign_resolved_distance(&s));
    }
    verdict(
        worst <= 1e-9,
        format!("{n} vectors ({fallback} with S3 = 0), worst error {worst:.1e} (tol 1e-9)"),
    )
}

fn shot_error(s: &BlochVector, shots: u64, seed: u64) -> f64 {
    let records: [ShotRecord; 6] = std::array::from_fn(|i| {
        let (b, r) = calibration_settings()[i];
        let table = joint_statistics_closed(s, s, &ProtocolSetting::new(b, r.rotation())).unwrap();
        sample_counts(&table, shots, derive_seed(seed, i as u64))
    });
    reconstruct_from_counts(&records, &CountOptions::default())
        .unwrap()
        .estimate
        .sign_resolved_distance(s)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn finite_shot_scaling() -> Verdict {
    let s = BlochVector::new(0.3, -0.4, 0.5);
    let ((high, low), elapsed) = timed(|| {
        let high = median(
            (0..100u64)
                .into_par_iter()
                .map(|k| shot_error(&s, 1_000_000, k))
                .collect(),
        );
        let low = median(
            (0..100u64)
                .into_par_iter()
                .map(|k| shot_error(&s, 10_000, k))
                .collect(),
        );
        (high, low)
    });
    let ratio = low / high;
    let pass = high <= 5e-3 && (3.3..=30.0).contains(&ratio) && elapsed < Duration::from_secs(60);
    verdict(
        pass,
        format!(
            "median error {high:.2e} at 1e6 shots (tol 5e-3), 1e4/1e6 ratio {ratio:.2} (range [3.3, 30]), {:.1} s (limit 60 s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn mismatch_robustness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut detectors = vec![
        BlochVector::new(0.3, -0.4, 0.5),
        BlochVector::new(0.0, 0.0, 0.9),
    ];
    while detectors.len() < 10 {
        let s = common::in_ball(&mut rng, 0.95);
        if s.0.iter().any(|c| c.abs() >= 0.5) {
            detectors.push(s);
        }
    }
    let (mut worst_ratio, mut min_scale, mut max_scale): (f64, f64, f64) =
        (0.0, f64::INFINITY, 0.0);
    for (i, s) in detectors.iter().enumerate() {
        let coarse = perturbation_robustness(s, 1e-3, 100, 100 + i as u64).unwrap();
        let fine = perturbation_robustness(s, 1e-4, 100, 100 + i as u64).unwrap();
        worst_ratio = worst_ratio.max(coarse.max_error / 1e-3);
        let scale = coarse.mean_error / fine.mean_error;
        min_scale = min_scale.min(scale);
        max_scale = max_scale.max(scale);
    }
    let pass = worst_ratio <= 10.0 && min_scale >= 5.0 && max_scale <= 20.0;
    verdict(
        pass,
        format!(
            "{} detectors with pivot >= 0.5: max error {worst_ratio:.2}δ at δ = 1e-3 (tol 10δ), \
             mean-error ratio 1e-3/1e-4 in [{min_scale:.2}, {max_scale:.2}] (range [5, 20])",
            detectors.len()
        ),
    )
}

fn onoff() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut oracle_dev: f64 = 0.0;
    for _ in 0..200 {
        let d = OnOffParams::new(rng.random_range(0.0..=1.0), rng.random_range(0.0..0.5)).unwrap();
        let s = SqueezedVacuumParams::from_xi(rng.random_range(0.0..0.99)).unwrap();
        let closed = click_probabilities_closed(&d, &s);
        let oracle = click_probabilities_oracle(&d, &s, 1e-12).unwrap();
        oracle_dev = oracle_dev.max(closed.max_abs_diff(&oracle));
    }
    let mut fit_dev: f64 = 0.0;
    let mut points = 0;
    for eta in (1..=9).map(|i| i as f64 / 10.0) {
        for p_dark in [0.0, 0.01, 0.1] {
            for nbar in [0.5, 2.0, 10.0] {
                let d = OnOffParams::new(eta, p_dark).unwrap();
                let table =
                    click_probabilities_closed(&d, &SqueezedVacuumParams::from_nbar(nbar).unwrap());
                let fit = fit_onoff(&table, nbar).unwrap();
                fit_dev = fit_dev
                    .max((fit.params.eta - eta).abs())
                    .max((fit.params.p_dark - p_dark).abs());
                points += 1;
            }
        }
    }
    verdict(
        oracle_dev <= 1e-10 && fit_dev <= 1e-6,
        format!("200 cases within {oracle_dev:.1e} (tol 1e-10), {points}-point fit grid within {fit_dev:.1e} (tol 1e-6)"),
    )
}

fn joint_tomography() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let options = JointTomographyOptions::default();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..200 {
        let j = common::joint_povm(&mut rng);
        match reconstruct_outcome_vectors(&calibration_tables(&j), &options) {
            Ok(report) => {
                worst = worst.max(decompose(&report.vectors).povm.flip_resolved_distance(&j))
            }
            Err(_) => failures += 1,
        }
    }
    verdict(
        failures == 0 && worst <= 1e-9,
        format!("200 POVMs, {failures} rejected, worst parameter error {worst:.1e} up to global flip (tol 1e-9)"),
    )
}

fn bell_negativity() -> Verdict {
    let g = 1.0 / 3f64.sqrt();
    let e = |i: usize| {
        let mut v = [0.0; 3];
        v[i] = 1.0;
        BlochVector(v)
    };
    let j = JointPovm::new(e(0), e(1), e(2), g, g, g).unwrap();
    let q = invert(&j).unwrap();
    let t = inferred_distribution(
        &q,
        &ProtocolSetting::new(MeasurementBasis::Z, RotationChoice::R0.rotation()),
    );
    let target = -(1.0 + g * g / (g * g * g * g)) / 16.0;
    let flip = |s: Sign| {
        if s == Sign::Plus {
            Sign::Minus
        } else {
            Sign::Plus
        }
    };
    let entry_dev = OUTCOMES
        .iter()
        .map(|&(x, y)| (t.get(x, y, flip(x), y) - target).abs())
        .fold(0.0, f64::max);
    let eig = q
        .elements()
        .iter()
        .map(|e| e.min_eigenvalue().unwrap())
        .fold(f64::INFINITY, f64::min);
    let eig_dev = (eig - (1.0 - 5f64.sqrt()) / 4.0).abs();
    verdict(
        entry_dev <= 1e-12 && eig_dev <= 1e-12 && (target + 0.25).abs() <= 1e-15,
        format!(
            "entries at (x, y, -x, y) equal {target:.12} within {entry_dev:.1e}, min element eigenvalue {eig:.6} within {eig_dev:.1e} (tol 1e-12)"
        ),
    )
}

fn cli_determinism() -> Verdict {
    let configs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().unwrap();
    let runs = [
        ("simulate-qubit", "qubit.toml"),
        ("simulate-onoff", "onoff.toml"),
        ("joint-tomo", "joint-bell.toml"),
        ("bell-negativity", "joint-bell.toml"),
    ];
    let mut identical = 0;
    for (command, config) in runs {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = dir.path().join(format!("{command}-{rep}.json"));
            let status = Command::new(env!("CARGO_BIN_EXE_selftomo"))
                .arg(command)
                .arg("--config")
                .arg(configs.join(config))
                .args(["--shots", "20000", "--seed", "99", "--out"])
                .arg(&out)
                .status()
                .unwrap();
            if !status.success() {
                return verdict(false, format!("{command} exited with {status}"));
            }
            outputs.push(std::fs::read(&out).unwrap());
        }
        identical += usize::from(outputs[0] == outputs[1] && !outputs[0].is_empty());
    }
    verdict(
        identical == runs.len(),
        format!(
            "{identical}/{} subcommands byte-identical across repeated runs",
            runs.len()
        ),
    )
}
