use std::path::Path;

use odp_core::cli::{run_eval, run_prep, run_synth, run_train};
use odp_core::config::RunConfig;
use odp_core::training::{MetricsReport, Task};

use crate::Outcome;

const RATIO: f64 = 1.05;
const EXACT_TOL: f64 = 1e-9;
const DETERMINISM_TOL: f64 = 1e-6;
const TRAIN_EPOCHS: usize = 30;
const DETERMINISM_EPOCHS: usize = 3;

/// 3 × 3 grid over central Manhattan, 1-hour slots, 21 days of exact
/// periodic requests.
fn synthetic_config(dir: &Path, extra: &[(&str, String)]) -> RunConfig {
    let mut sets = vec![
        format!("data={}", dir.join("trips.csv").display()),
        format!("workspace={}", dir.join("ws").display()),
        "lat_min=40.70".into(),
        "lat_max=40.79".into(),
        "lng_min=-74.02".into(),
        "lng_max=-73.93".into(),
        "rows=3".into(),
        "cols=3".into(),
        "slot_hours=1".into(),
        "synth_days=21".into(),
        "synth_profile=periodic".into(),
        "synth_noise=none".into(),
        "history=7".into(),
        "thresholds=0,3,5".into(),
        "seed=7".into(),
    ];
    sets.extend(extra.iter().map(|(k, v)| format!("{k}={v}")));
    RunConfig::load(None, std::iter::empty(), &sets).expect("valid acceptance config")
}

fn with_model(dir: &Path, name: &str, extra: &[(&str, String)]) -> RunConfig {
    let mut all = vec![("out", dir.join(name).display().to_string())];
    all.extend(extra.iter().cloned());
    synthetic_config(dir, &all)
}

fn rmse0(report: &MetricsReport, task: Task) -> f64 {
    report
        .get(task, 0.0)
        .and_then(|r| r.metrics)
        .map_or(f64::NAN, |m| m.rmse)
}

fn trace(losses: &[f64]) -> String {
    losses
        .iter()
        .enumerate()
        .filter(|(e, _)| *e == 0 || (e + 1) % 5 == 0)
        .map(|(e, l)| format!("{}:{l:.4}", e + 1))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn synthetic() -> Outcome {
    let tmp = tempfile::tempdir().expect("temp dir");
    let dir = tmp.path();
    let base = synthetic_config(dir, &[]);
    let result = (|| -> odp_core::Result<Outcome> {
        let requests = run_synth(&base)?;
        run_prep(&base)?;
        let hap = run_eval(&with_model(dir, "hap", &[("model", "hap".into())]))?;
        let hat = run_eval(&with_model(dir, "hat", &[("model", "hat".into())]))?;
        let ha_plus = run_eval(&with_model(dir, "ha_plus", &[("model", "ha+".into())]))?;

        let train = |name: &str, tuning: &str| -> odp_core::Result<(MetricsReport, Vec<f64>)> {
            let cfg = with_model(
                dir,
                name,
                &[
                    ("model", "bgarn".into()),
                    ("tuning", tuning.into()),
                    ("baseline", "ha+".into()),
                    ("epochs", TRAIN_EPOCHS.to_string()),
                ],
            );
            let outcome = run_train(&cfg)?;
            let losses = outcome.report.map(|r| r.epochs.iter().map(|e| e.train_loss).collect()).unwrap_or_default();
            Ok((run_eval(&cfg)?, losses))
        };
        let (bgarn, tuned_losses) = train("bgarn", "mult")?;
        let (notune, notune_losses) = train("notune", "none")?;

        let (hap_d, hat_d) = (rmse0(&hap, Task::Demand), rmse0(&hat, Task::Demand));
        let (ref_d, ref_o) = (rmse0(&ha_plus, Task::Demand), rmse0(&ha_plus, Task::Od));
        let (bg_d, bg_o) = (rmse0(&bgarn, Task::Demand), rmse0(&bgarn, Task::Od));
        println!("  note: {requests} requests, {} test targets", bgarn.samples);
        println!("  note: mult tuning train loss by epoch  {}", trace(&tuned_losses));
        println!("  note: no tuning train loss by epoch    {}", trace(&notune_losses));
        println!(
            "  note: no tuning test RMSE-0 demand {:.4} OD {:.4}",
            rmse0(&notune, Task::Demand),
            rmse0(&notune, Task::Od)
        );
        let ok = hap_d <= EXACT_TOL && hat_d > 0.0 && bg_d <= RATIO * ref_d && bg_o <= RATIO * ref_o;
        Ok(Outcome::check(
            ok,
            format!(
                "HAp demand RMSE-0 {hap_d:.2e}, HAt {hat_d:.4}; BGARN demand {bg_d:.4} vs HA+ {ref_d:.4} (ratio {:.3}), OD {bg_o:.4} vs {ref_o:.4} (ratio {:.3}), limit {RATIO}",
                bg_d / ref_d,
                bg_o / ref_o
            ),
        ))
    })();
    result.unwrap_or_else(|e| Outcome::Fail(format!("pipeline error: {e}")))
}

fn full_run(dir: &Path) -> odp_core::Result<MetricsReport> {
    let cfg = with_model(
        dir,
        "out",
        &[
            ("synth_days", "10".into()),
            ("history", "3".into()),
            ("synth_noise", "poisson".into()),
            ("epochs", DETERMINISM_EPOCHS.to_string()),
            ("seed", "11".into()),
        ],
    );
    run_synth(&cfg)?;
    run_prep(&cfg)?;
    run_train(&cfg)?;
    run_eval(&cfg)
}

pub fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().expect("temp dir"), tempfile::tempdir().expect("temp dir"));
    let (ra, rb) = match (full_run(a.path()), full_run(b.path())) {
        (Ok(ra), Ok(rb)) => (ra, rb),
        (Err(e), _) | (_, Err(e)) => return Outcome::Fail(format!("pipeline error: {e}")),
    };
    let mut worst = 0.0f64;
    let mut shape_ok = ra.rows.len() == rb.rows.len() && ra.samples == rb.samples;
    for (x, y) in ra.rows.iter().zip(&rb.rows) {
        match (x.metrics, y.metrics) {
            (Some(m), Some(n)) if x.task == y.task && x.threshold == y.threshold && m.count == n.count => {
                worst = worst
                    .max((m.rmse - n.rmse).abs())
                    .max((m.mape - n.mape).abs())
                    .max((m.mae - n.mae).abs());
            }
            (None, None) => {}
            _ => shape_ok = false,
        }
    }
    let identical = ra.render() == rb.render();
    Outcome::check(
        shape_ok && worst <= DETERMINISM_TOL,
        format!(
            "{} rows over {} targets, max diff {worst:.2e} (tol {DETERMINISM_TOL:e}); byte-identical reports: {identical}",
            ra.rows.len(),
            ra.samples
        ),
    )
}

const NYC_HAP_DEMAND: f64 = 203.6360;
const NYC_HAP_OD: f64 = 26.6731;
const NYC_BAND: f64 = 0.15;

pub fn nyc() -> Outcome {
    let Some(path) = std::env::var_os("NYC_TRIPS_CSV") else {
        return Outcome::Skip("set NYC_TRIPS_CSV to a 2016 Q1 Yellow Taxi trip file to run".into());
    };
    let tmp = tempfile::tempdir().expect("temp dir");
    let sets = vec![
        format!("data={}", Path::new(&path).display()),
        format!("workspace={}", tmp.path().join("ws").display()),
        format!("out={}", tmp.path().join("out").display()),
        "model=hap".to_string(),
        "history=7".to_string(),
        "thresholds=0".to_string(),
    ];
    let run = || -> odp_core::Result<MetricsReport> {
        let cfg = RunConfig::load(None, std::iter::empty(), &sets)?;
        run_prep(&cfg)?;
        run_eval(&cfg)
    };
    match run() {
        Ok(report) => {
            let (d, o) = (rmse0(&report, Task::Demand), rmse0(&report, Task::Od));
            let within = |v: f64, r: f64| (v - r).abs() <= NYC_BAND * r;
            Outcome::check(
                within(d, NYC_HAP_DEMAND) && within(o, NYC_HAP_OD),
                format!("HAp demand RMSE-0 {d:.4} (reference {NYC_HAP_DEMAND}), OD RMSE-0 {o:.4} (reference {NYC_HAP_OD}), band ±{}%", NYC_BAND * 100.0),
            )
        }
        Err(e) => Outcome::Fail(format!("pipeline error: {e}")),
    }
}
