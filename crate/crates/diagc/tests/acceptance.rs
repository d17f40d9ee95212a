//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any gated criterion fails.
//!
//! Set `DIAGC_ACM_MANIFEST` to a dataset manifest to include the
//! informational reproduction run (criterion 8); it never gates.

use std::process::ExitCode;
use std::time::Instant;

use diagc::verify;
use diagc_core::graphdata::generate_synthetic;
use diagc_core::trainer::{ablate_with_clock, TrainHistory};
use diagc_core::{metrics, MetricsReport, MultiViewGraph, SyntheticSpec, TrainConfig, Variant};

const SEEDS: u64 = 5;

struct Line {
    id: u32,
    passed: bool,
    gated: bool,
    text: String,
}

impl Line {
    fn print(&self) {
        let tag = match (self.gated, self.passed) {
            (false, _) => "INFO",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        };
        println!("criterion {} [{tag}] {}", self.id, self.text);
    }
}

fn from_oracles(id: u32, budget: Option<f64>, results: &[verify::OracleResult]) -> Line {
    let seconds: f64 = results.iter().map(|r| r.seconds).sum();
    let passed = results.iter().all(|r| r.passed) && budget.is_none_or(|b| seconds < b);
    let mut text = match budget {
        Some(b) => format!("{seconds:.2}s of {b}s budget"),
        None => format!("{seconds:.2}s"),
    };
    for r in results {
        text.push_str("\n    ");
        text.push_str(&r.line());
    }
    Line {
        id,
        passed,
        gated: true,
        text,
    }
}

fn gradients() -> Line {
    let inst = verify::grad_instance(0);
    let names: Vec<&str> = inst.params.names().collect();
    let covers = ["encoder.", "mlp.w", "sir.", "head.mu"]
        .iter()
        .all(|p| names.iter().any(|n| n.starts_with(p)));
    let mut line = from_oracles(1, Some(30.0), &[verify::gradient_oracle(20, 0), verify::sign_flip_fixture(0)]);
    if !covers {
        line.passed = false;
        line.text.push_str(&format!("\n    parameter set incomplete: {names:?}"));
    }
    line
}

fn metric_oracles() -> Line {
    let mut line = from_oracles(
        2,
        Some(20.0),
        &[
            verify::accuracy_oracle(1000, 0),
            verify::ari_oracle(200, 0),
            verify::nmi_oracle(200, 0),
        ],
    );
    let identical = metrics::nmi(&[0, 0, 1, 1, 2, 2], &[0, 0, 1, 1, 2, 2]).unwrap();
    let constant = metrics::nmi(&[0, 1, 2, 0, 1, 2], &[0; 6]).unwrap();
    line.passed &= identical == 1.0 && constant == 0.0;
    line.text.push_str(&format!("\n    NMI(identical) = {identical}, NMI(balanced, constant) = {constant}"));
    line
}

/// The planted two-view benchmark: n=300, c=3, p_in=0.2, p_out=0.01,
/// feature signal 2.0.
fn planted() -> MultiViewGraph {
    generate_synthetic(&SyntheticSpec::planted(300, 3, 2, 0.2, 0.01, 2.0, 0)).unwrap()
}

struct Run {
    metrics: MetricsReport,
    history: TrainHistory,
    seconds: f64,
}

fn runs(data: &MultiViewGraph, variant: Variant) -> Vec<Run> {
    (0..SEEDS)
        .map(|seed| {
            let cfg = TrainConfig {
                clusters: 3,
                iterations: 200,
                seed,
                ..TrainConfig::default()
            };
            let start = Instant::now();
            let (metrics, history) = ablate_with_clock(data, &cfg, variant, &mut || start.elapsed().as_secs_f64()).unwrap();
            Run {
                metrics,
                history,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn recovery(full: &[Run]) -> Line {
    let acc = median(full.iter().map(|r| r.metrics.acc).collect());
    let nmi = median(full.iter().map(|r| r.metrics.nmi).collect());
    let slowest = full.iter().map(|r| r.seconds).fold(0.0, f64::max);
    Line {
        id: 5,
        passed: acc >= 0.95 && nmi >= 0.85 && slowest < 180.0,
        gated: true,
        text: format!("planted recovery over {SEEDS} seeds: median ACC {acc:.4} (>= 0.95), median NMI {nmi:.4} (>= 0.85), slowest run {slowest:.1}s (< 180s)"),
    }
}

fn ablation(by_variant: &[(Variant, Vec<Run>)]) -> Line {
    let medians: Vec<(Variant, f64)> = by_variant
        .iter()
        .map(|(v, runs)| (*v, median(runs.iter().map(|r| r.metrics.nmi).collect())))
        .collect();
    let full = medians[0].1;
    let passed = medians[1..].iter().all(|&(_, nmi)| full >= nmi - 0.02);
    let text = medians
        .iter()
        .map(|(v, nmi)| format!("{} {nmi:.4}", v.as_str()))
        .collect::<Vec<_>>()
        .join(", ");
    Line {
        id: 6,
        passed,
        gated: true,
        text: format!("median NMI by variant: {text}; full must be >= each other - 0.02"),
    }
}

fn convergence(full: &[Run]) -> Line {
    let mut passed = true;
    let mut parts = Vec::new();
    for r in full {
        let finite = r.history.records.iter().all(|x| x.total.is_finite() && x.mim.is_finite() && x.recon.is_finite() && x.kl.is_finite());
        let (first, last) = (r.history.initial_loss().unwrap(), r.history.final_loss().unwrap());
        passed &= finite && last < first && r.history.len() == 200;
        parts.push(format!("seed {}: {first:.1} -> {last:.1}{}", r.metrics.seed, if finite { "" } else { " (non-finite)" }));
    }
    Line {
        id: 7,
        passed,
        gated: true,
        text: format!("final < initial total loss, all finite: {}", parts.join(", ")),
    }
}

fn reproduction() -> Line {
    let Ok(manifest) = std::env::var("DIAGC_ACM_MANIFEST") else {
        return Line {
            id: 8,
            passed: true,
            gated: false,
            text: "not run: DIAGC_ACM_MANIFEST not set (informational; see scripts/reproduce_acm.sh)".into(),
        };
    };
    let text = match diagc::formats::load_dataset(manifest.as_ref()) {
        Ok(data) => {
            let cfg = TrainConfig {
                clusters: data.num_clusters().unwrap_or(0),
                ..TrainConfig::default()
            };
            match ablate_with_clock(&data, &cfg, Variant::Full, &mut || 0.0) {
                Ok((m, _)) => format!("ACC {:.4} (reference 0.9170 +/- 0.05: {})", m.acc, if (m.acc - 0.917).abs() <= 0.05 { "within" } else { "outside" }),
                Err(e) => format!("training failed: {e}"),
            }
        }
        Err(e) => format!("could not load {manifest}: {e}"),
    };
    Line {
        id: 8,
        passed: true,
        gated: false,
        text,
    }
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters pass through; this suite is a
    // single unit, so honour only the listing request.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let mut lines = vec![gradients(), metric_oracles()];
    lines.push(from_oracles(3, None, &[verify::distribution_oracle(1000, 0)]));
    lines.push(from_oracles(4, None, &[verify::normalization_oracle(100, 0)]));

    let data = planted();
    let by_variant: Vec<(Variant, Vec<Run>)> = [Variant::Full, Variant::NoMim, Variant::NoSir, Variant::NoSc]
        .into_iter()
        .map(|v| (v, runs(&data, v)))
        .collect();
    lines.push(recovery(&by_variant[0].1));
    lines.push(ablation(&by_variant));
    lines.push(convergence(&by_variant[0].1));
    lines.push(reproduction());

    lines.sort_by_key(|l| l.id);
    for l in &lines {
        l.print();
    }
    let failed: Vec<u32> = lines.iter().filter(|l| l.gated && !l.passed).map(|l| l.id).collect();
    if failed.is_empty() {
        println!("acceptance: all gated criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
