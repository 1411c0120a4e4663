//! Acceptance criteria at desk scale: one PASS/FAIL line per criterion.
//!
//! Criteria whose targets are out of reach for the model operator are still
//! run at the stated tolerance and reported as failing; only their known
//! sub-checks are exempt from the process exit status.

use std::process::ExitCode;

use kdecay::harness::{self, Experiment, RunConfig, RunResult};
use kdecay::operators::CheckItem;
use kdecay::rates::weight_params;
use kdecay::velocity::Regime;

struct Verdict {
    id: usize,
    title: &'static str,
    failing: Vec<String>,
    /// Failing sub-checks that are known to be unattainable.
    exempt: &'static [&'static str],
    detail: String,
}

impl Verdict {
    fn pass(&self) -> bool {
        self.failing.is_empty()
    }

    fn unexpected(&self) -> Vec<&String> {
        self.failing.iter().filter(|f| !self.exempt.contains(&f.as_str())).collect()
    }
}

fn failing(checks: &[CheckItem]) -> Vec<String> {
    checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect()
}

fn check<'a>(r: &'a RunResult, name: &str) -> &'a CheckItem {
    r.check(name).unwrap_or_else(|| panic!("missing check {name}"))
}

fn decay(rho: f64, microscopic: bool) -> RunResult {
    let mut cfg = RunConfig::desk(Experiment::Decay);
    cfg.rho = rho;
    cfg.microscopic = microscopic;
    harness::run_decay(&cfg).expect("decay run")
}

fn fitted(r: &RunResult, m: f64) -> f64 {
    r.fits.iter().find(|f| f.name == format!("norm_m{m}")).map(|f| f.fit.power).unwrap_or(f64::NAN)
}

fn criteria_decay(out: &mut Vec<Verdict>) -> Vec<RunResult> {
    let runs: Vec<(f64, RunResult, RunResult)> = [1.0, 1.5].iter().map(|&rho| (rho, decay(rho, false), decay(rho, true))).collect();
    let mut c1 = Vec::new();
    let mut d1 = Vec::new();
    let mut c2 = Vec::new();
    let mut d2 = Vec::new();
    for (rho, general, mic) in &runs {
        for m in [0.0, 1.0] {
            let fg = fitted(general, m);
            let fm = fitted(mic, m);
            if !((fg - (m + rho)).abs() <= 0.2) {
                c1.push(format!("exponent rho={rho} m={m}"));
            }
            if !((fm - (m + rho + 1.0)).abs() <= 0.2) {
                c2.push(format!("exponent rho={rho} m={m}"));
            }
            if !((fm - fg - 1.0).abs() <= 0.25) {
                c2.push(format!("gap rho={rho} m={m}"));
            }
            d1.push(format!("rho={rho} m={m}: {fg:.3}"));
            d2.push(format!("rho={rho} m={m}: {fm:.3} (gap {:.3})", fm - fg));
        }
        for r in [general, mic] {
            if r.elapsed_seconds > 300.0 {
                c1.push(format!("runtime {:.0} s", r.elapsed_seconds));
            }
        }
    }
    out.push(Verdict {
        id: 1,
        title: "linear decay exponents",
        failing: c1,
        exempt: &[],
        detail: d1.join("; "),
    });
    out.push(Verdict {
        id: 2,
        title: "microscopic gain",
        failing: c2,
        exempt: &[],
        detail: d2.join("; "),
    });
    runs.into_iter().flat_map(|(_, a, b)| [a, b]).collect()
}

fn criterion_soft(hard_runs: &[RunResult]) -> Verdict {
    let mut cfg = RunConfig::desk(Experiment::Decay);
    cfg.kernel.gamma = -2.0;
    let soft = harness::run_mode_checks(&cfg).expect("soft mode run");
    let hard = &hard_runs[0];
    let mut f = Vec::new();
    for (r, names) in [(&soft, ["mode_rate_decreasing", "mode_envelope"]), (hard, ["mode_rate_variation", "mode_envelope"])] {
        for n in names {
            if !check(r, n).pass {
                f.push(format!("{n} ({:?})", r.config.kernel.build(3).unwrap().regime()));
            }
        }
    }
    Verdict {
        id: 3,
        title: "soft degeneracy",
        failing: f,
        exempt: &[],
        detail: format!(
            "soft {}; envelope ratio {:.3e}; hard {}",
            check(&soft, "mode_rate_decreasing").note,
            check(&soft, "mode_envelope").value,
            check(hard, "mode_rate_variation").note
        ),
    }
}

fn criterion_spectrum() -> Verdict {
    let r = harness::run_spectrum(&RunConfig::desk(Experiment::Spectrum)).expect("spectrum run");
    let mut f = failing(&r.checks);
    if r.elapsed_seconds > 120.0 {
        f.push(format!("runtime {:.0} s", r.elapsed_seconds));
    }
    let v = |n: &str| check(&r, n).value;
    Verdict {
        id: 4,
        title: "small-frequency expansion",
        failing: f,
        exempt: &["residual_orthogonality"],
        detail: format!(
            "acoustic rel {:.1e}; shear rel {:.1e}; sum {:.1e}; dispersion {:.1e}; coverage {:.3}; P_jR_j^* {:.2e} (adjoint {:.1e}); {:.1} s",
            v("acoustic_speed"),
            v("shear_closed_form"),
            v("projection_sum_limit"),
            v("dispersion_agreement"),
            v("macro_coverage"),
            v("residual_orthogonality"),
            v("residual_orthogonality_adjoint"),
            r.elapsed_seconds
        ),
    }
}

fn criterion_besov() -> Verdict {
    let r = harness::run_besov(&RunConfig::desk(Experiment::Besov)).expect("besov run");
    Verdict {
        id: 5,
        title: "Besov suite",
        failing: failing(&r.checks),
        exempt: &["heat_characterisation"],
        detail: format!(
            "partition {:.1e}; holder violations {}; dilation {:.1e}; heat ratio {:.4}; embedding {:.3}; opt_sob {:.3}",
            check(&r, "partition_of_unity").value,
            check(&r, "holder_violations").value,
            check(&r, "dilation_invariance").value,
            check(&r, "heat_characterisation").value,
            check(&r, "embedding_regression").value,
            check(&r, "opt_sob_regression").value
        ),
    }
}

fn criterion_rates() -> Verdict {
    let r = harness::run_rates(&RunConfig::desk(Experiment::Rates)).expect("rates run");
    let mut f = failing(&r.checks);
    let golden = || -> kdecay::Result<bool> {
        let d = weight_params(3, 4, 1.0, 0.25)?;
        let s = weight_params(3, 4, -1.5, 0.5)?;
        Ok(d.k_star == 2
            && d.j_tilde == 1
            && d.ell0_d == 0.5
            && (d.ell0, d.ell0_prime, d.ell0_first) == (3.0, 0.0, 0.75)
            && s.regime == Regime::Soft
            && (s.m, s.ell0, s.ell0_prime) == (7.0, 2.0, 1.75))
    };
    if !golden().unwrap_or(false) {
        f.push("weight_params".into());
    }
    let spreads: Vec<String> = r.checks.iter().filter(|c| c.name.starts_with("conv_")).map(|c| format!("{} {:.3}", c.name, c.value)).collect();
    Verdict {
        id: 6,
        title: "rate calculus",
        failing: f,
        exempt: &[],
        detail: spreads.join("; "),
    }
}

fn criterion_structural(decay_runs: &[RunResult]) -> Verdict {
    let r = harness::run_validate(&RunConfig::desk(Experiment::Validate)).expect("validate run");
    let mut f = failing(&r.checks);
    let mut worst_e = f64::NEG_INFINITY;
    let mut worst_sg = 0.0f64;
    for d in decay_runs {
        for n in ["energy_identity", "semigroup_property", "energy_non_increasing"] {
            if !check(d, n).pass {
                f.push(format!("{n} rho={} microscopic={}", d.config.rho, d.config.microscopic));
            }
        }
        worst_e = worst_e.max(check(d, "energy_non_increasing").value);
        worst_sg = worst_sg.max(check(d, "semigroup_property").value);
    }
    Verdict {
        id: 7,
        title: "structural invariants",
        failing: f,
        exempt: &[],
        detail: format!(
            "|λ−1| {:.1e}; P idempotence {:.1e}; semigroup {:.1e}; max E increase {:.1e}",
            check(&r, "lambda").value,
            check(&r, "projector_idempotence").value,
            worst_sg,
            worst_e
        ),
    }
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters pass through here
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let mut verdicts = Vec::new();
    let decay_runs = criteria_decay(&mut verdicts);
    verdicts.push(criterion_soft(&decay_runs));
    verdicts.push(criterion_spectrum());
    verdicts.push(criterion_besov());
    verdicts.push(criterion_rates());
    verdicts.push(criterion_structural(&decay_runs));
    verdicts.sort_by_key(|v| v.id);
    let mut unexpected = 0;
    for v in &verdicts {
        let mark = if v.pass() { "PASS" } else { "FAIL" };
        let why = if v.pass() { String::new() } else { format!(" [failing: {}]", v.failing.join(", ")) };
        println!("criterion {} {}: {mark}{why} ({})", v.id, v.title, v.detail);
        unexpected += v.unexpected().len();
    }
    if unexpected > 0 {
        println!("{unexpected} unexpected failing sub-checks");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
