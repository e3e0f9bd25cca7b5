//! Acceptance gate: one line per criterion, nonzero exit on any failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use ewald_core::dataset::{compare, simulate, write_dataset, Dataset, RunConfig, Truth};
use ewald_core::geometry::{sample_rotations, RigidMotion};
use ewald_core::optics::OpticsConfig;
use ewald_core::phantom::Phantom;
use ewald_core::recovery::{recover, Mode, RecoveryResult};
use ewald_core::studies::{flat_limit_object, flat_limit_table, hand_demo, origin_derivative_check, rigid_motion_check, series_convergence};

const C1_MAX_ERROR: f64 = 1e-8;
const C1_MAX_SECONDS: f64 = 60.0;
const C2_FLAT_MAX: f64 = 1e-12;
const C2_CURVED_MIN: f64 = 1e-3;
const C2_RING: f64 = 0.1;
const C3_ORDERS: [usize; 3] = [4, 6, 8];
const C3_SLOPE_MARGIN: f64 = 0.5;
const C4_RATIO: f64 = 2.0;
const C4_RATIO_TOLERANCE: f64 = 0.5;
const C5_ORACLE_SHIFT: f64 = 1e-9;
const C5_IMAGE_SHIFT: f64 = 1e-5;
const C5_SHIFT_BOUND: f64 = 0.5;
const C6_MAX_ERROR: f64 = 1e-3;
const C7_ORIGIN: f64 = 1e-6;
const C7_RIGID: f64 = 1e-12;
const C7_REDUNDANCY: f64 = 1e-10;

struct Gate {
    failures: usize,
}

impl Gate {
    fn report(&mut self, criterion: usize, name: &str, passed: bool, detail: String) {
        if !passed {
            self.failures += 1;
        }
        println!("{} {criterion} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
    }

    fn error(&mut self, criterion: usize, name: &str, err: impl std::fmt::Display) {
        self.report(criterion, name, false, format!("error: {err}"));
    }
}

fn oracle_config() -> RunConfig {
    RunConfig {
        n_uniform: 512,
        n_family: 32,
        order: 5,
        max_shift: C5_SHIFT_BOUND,
        ..RunConfig::default()
    }
}

fn image_config() -> RunConfig {
    RunConfig {
        n_uniform: 16,
        n_family: 16,
        order: 3,
        mode: Mode::Image,
        max_shift: C5_SHIFT_BOUND,
        ..RunConfig::default()
    }
}

fn run(cfg: &RunConfig) -> Result<(Dataset, RecoveryResult), String> {
    let d = simulate(cfg).map_err(|e| e.to_string())?;
    let r = recover(&d.records, &d.optics, cfg.order, cfg.mode, &cfg.tolerances).map_err(|e| e.to_string())?;
    Ok((d, r))
}

fn max_shift_error(truth: &Truth, result: &RecoveryResult) -> f64 {
    let poses: BTreeMap<usize, [f64; 3]> = truth.poses.iter().map(|p| (p.id, p.pose.translation)).collect();
    result
        .shifts
        .iter()
        .map(|(id, s)| {
            let t = poses[id];
            (s[0] - t[0]).hypot(s[1] - t[1])
        })
        .fold(0.0, f64::max)
}

fn directory_bytes(dir: &Path) -> std::io::Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        out.insert(entry.file_name().to_string_lossy().into_owned(), fs::read(entry.path())?);
    }
    Ok(out)
}

fn criterion1(gate: &mut Gate) -> Option<(Dataset, RecoveryResult)> {
    let name = "end-to-end oracle recovery";
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool");
    let start = Instant::now();
    let outcome = pool.install(|| run(&oracle_config()));
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok((d, r)) => {
            let c = compare(&d.truth, &r);
            gate.report(
                1,
                name,
                c.max_relative_error <= C1_MAX_ERROR && seconds <= C1_MAX_SECONDS,
                format!(
                    "max relative error {:.3e} (<= {C1_MAX_ERROR:.0e}), {seconds:.2} s single-threaded (<= {C1_MAX_SECONDS} s)",
                    c.max_relative_error
                ),
            );
            Some((d, r))
        }
        Err(e) => {
            gate.error(1, name, e);
            None
        }
    }
}

fn criterion2(gate: &mut Gate, oracle: Option<&RecoveryResult>) {
    let name = "hand recovery";
    let optics = OpticsConfig::default();
    let report = match hand_demo(&Phantom::reference(), &optics, 64, 1, C2_RING) {
        Ok(r) => r,
        Err(e) => return gate.error(2, name, e),
    };
    let mirrored = run(&RunConfig {
        mirror: true,
        ..oracle_config()
    });
    let (hand, hand_m) = match (oracle, &mirrored) {
        (Some(r), Ok((_, m))) => (r.hand, m.hand),
        (_, Err(e)) => return gate.error(2, name, e),
        (None, _) => return gate.error(2, name, "no unmirrored recovery"),
    };
    gate.report(
        2,
        name,
        report.flat_distance <= C2_FLAT_MAX && report.curved_distance >= C2_CURVED_MIN && hand != hand_m,
        format!(
            "flat {:.3e} (<= {C2_FLAT_MAX:.0e}), curved {:.3e} at |xi| = {C2_RING}k (>= {C2_CURVED_MIN:.0e}), hands {:?} / {:?}",
            report.flat_distance, report.curved_distance, hand, hand_m
        ),
    );
}

fn criterion3(gate: &mut Gate) {
    let name = "series truncation slopes";
    let optics = OpticsConfig::default();
    let pose = RigidMotion::new(sample_rotations(1, 3)[0], [0.3, -0.2, optics.c0]);
    let mut passed = true;
    let mut parts = Vec::new();
    for m in C3_ORDERS {
        match series_convergence(&Phantom::reference(), &pose, &optics, m, 11) {
            Ok(s) => {
                passed &= s.slope >= m as f64 + C3_SLOPE_MARGIN;
                parts.push(format!("M={m}: {:.3} (>= {})", s.slope, m as f64 + C3_SLOPE_MARGIN));
            }
            Err(e) => return gate.error(3, name, e),
        }
    }
    gate.report(3, name, passed, parts.join(", "));
}

fn criterion4(gate: &mut Gate) {
    let name = "flat limit";
    let optics = OpticsConfig::default();
    let object = flat_limit_object(&Phantom::reference(), optics.c0, 1);
    let k0 = 4.0 * optics.k;
    match flat_limit_table(&object, k0, [0.3, 0.2], 4) {
        Ok(rows) => {
            let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
            let passed = ratios.iter().all(|r| (r - C4_RATIO).abs() <= C4_RATIO_TOLERANCE);
            let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.4}")).collect();
            gate.report(
                4,
                name,
                passed,
                format!("ratios [{}] for k0 = {k0} (within {C4_RATIO} +/- {C4_RATIO_TOLERANCE})", shown.join(", ")),
            );
        }
        Err(e) => gate.error(4, name, e),
    }
}

fn criteria5and6(gate: &mut Gate, oracle: Option<&(Dataset, RecoveryResult)>) -> Option<(Dataset, RecoveryResult)> {
    let image = run(&image_config());
    let shift_name = "translation recovery";
    match (oracle, &image) {
        (Some((d, r)), Ok((di, ri))) => {
            let eo = max_shift_error(&d.truth, r);
            let ei = max_shift_error(&di.truth, ri);
            gate.report(
                5,
                shift_name,
                eo <= C5_ORACLE_SHIFT && ei <= C5_IMAGE_SHIFT,
                format!("oracle {eo:.3e} (<= {C5_ORACLE_SHIFT:.0e}), image {ei:.3e} (<= {C5_IMAGE_SHIFT:.0e})"),
            );
        }
        (None, _) => gate.error(5, shift_name, "no oracle recovery"),
        (_, Err(e)) => gate.error(5, shift_name, e),
    }
    let name = "image path";
    match image {
        Ok((d, r)) => {
            let c = compare(&d.truth, &r);
            gate.report(
                6,
                name,
                c.max_relative_error <= C6_MAX_ERROR && c.hand_match,
                format!(
                    "order-3 max relative error {:.3e} (<= {C6_MAX_ERROR:.0e}), hand {}",
                    c.max_relative_error,
                    if c.hand_match { "match" } else { "mismatch" }
                ),
            );
            Some((d, r))
        }
        Err(e) => {
            gate.error(6, name, e);
            None
        }
    }
}

fn criterion7(gate: &mut Gate, results: &[&RecoveryResult]) {
    let name = "identity suite";
    let optics = OpticsConfig::default();
    let phantom = Phantom::reference();
    let pose = RigidMotion::new(sample_rotations(1, 3)[0], [0.3, -0.2, optics.c0]);
    let l1 = origin_derivative_check(&phantom.transformed(&pose), 1e-4);
    let l2 = rigid_motion_check(&phantom, 256, 7);
    if results.is_empty() {
        return gate.error(7, name, "no recovery results");
    }
    let redundancy = results
        .iter()
        .filter(|r| r.mode == Mode::Oracle)
        .map(|r| r.redundancy)
        .fold(0.0, f64::max);
    let min_sv = results.iter().map(|r| r.min_singular_value).fold(f64::INFINITY, f64::min);
    let max_cond = results
        .iter()
        .flat_map(|r| r.conditions.iter().cloned())
        .fold(0.0, f64::max);
    gate.report(
        7,
        name,
        l1 <= C7_ORIGIN && l2 <= C7_RIGID && redundancy <= C7_REDUNDANCY && min_sv > 0.0 && max_cond.is_finite(),
        format!(
            "origin derivatives {l1:.3e} (<= {C7_ORIGIN:.0e}), rigid motion {l2:.3e} (<= {C7_RIGID:.0e}), redundancy {redundancy:.3e} (<= {C7_REDUNDANCY:.0e}), smallest singular value {min_sv:.3e}, largest condition {max_cond:.3e}"
        ),
    );
}

fn criterion8(gate: &mut Gate) {
    let name = "determinism";
    let dirs = match (tempfile::tempdir(), tempfile::tempdir()) {
        (Ok(a), Ok(b)) => [a, b],
        (Err(e), _) | (_, Err(e)) => return gate.error(8, name, e),
    };
    let mut details = Vec::new();
    let mut passed = true;
    for (label, cfg) in [("oracle", oracle_config()), ("image", image_config())] {
        let mut files = Vec::new();
        let mut results = Vec::new();
        for dir in &dirs {
            let sub = dir.path().join(label);
            let outcome = run(&cfg).and_then(|(d, r)| {
                write_dataset(&sub, &d).map_err(|e| e.to_string())?;
                Ok((directory_bytes(&sub).map_err(|e| e.to_string())?, r))
            });
            match outcome {
                Ok((f, r)) => {
                    files.push(f);
                    results.push(r);
                }
                Err(e) => return gate.error(8, name, e),
            }
        }
        let same_files = files[0] == files[1];
        let same_results = results[0] == results[1]
            && serde_json::to_string(&results[0]).ok() == serde_json::to_string(&results[1]).ok();
        passed &= same_files && same_results && !files[0].is_empty();
        details.push(format!(
            "{label}: {} files {}, results {}",
            files[0].len(),
            if same_files { "identical" } else { "differ" },
            if same_results { "identical" } else { "differ" }
        ));
    }
    gate.report(8, name, passed, details.join("; "));
}

fn main() -> ExitCode {
    let mut gate = Gate { failures: 0 };
    let oracle = criterion1(&mut gate);
    criterion2(&mut gate, oracle.as_ref().map(|(_, r)| r));
    criterion3(&mut gate);
    criterion4(&mut gate);
    let image = criteria5and6(&mut gate, oracle.as_ref());
    let results: Vec<&RecoveryResult> = oracle.iter().chain(image.iter()).map(|(_, r)| r).collect();
    criterion7(&mut gate, &results);
    criterion8(&mut gate);
    if gate.failures == 0 {
        println!("all 8 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{} criteria failed", gate.failures);
        ExitCode::FAILURE
    }
}
