//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fail.

mod common;

use std::time::Instant;

use jjdefects_core::density::junction_density_errorbar;
use jjdefects_core::field::{screening_study, ScreeningConfig};
use jjdefects_core::geometry::{sample_ensemble, EnsemblePriors, PlantedDensities};
use jjdefects_core::paper::PaperDataset;
use jjdefects_core::pipeline::{roundtrip, RoundTripConfig};
use jjdefects_core::report::fit_paper;
use jjdefects_core::spectroscopy::{AlternatingPlan, SweepChannel};
use jjdefects_core::tls::transition_energy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target.abs()
}

fn c1_area_edge() -> Outcome {
    let t = Instant::now();
    let r = fit_paper(&PaperDataset::embedded(), 2.0, false).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let f = &r.area_edge;
    let pass = (1.2..=1.8).contains(&f.rho_area.value)
        && f.rho_open.consistent_with_zero()
        && f.rho_covered.consistent_with_zero()
        && secs < 1.0;
    outcome(
        pass,
        format!(
            "rho_A {:.3} +- {:.3}; open {:.0} +- {:.0}; covered {:.0} +- {:.0}; {secs:.3} s",
            f.rho_area.value,
            f.rho_area.sigma.unwrap_or(f64::NAN),
            f.rho_open.value,
            f.rho_open.sigma.unwrap_or(f64::NAN),
            f.rho_covered.value,
            f.rho_covered.sigma.unwrap_or(f64::NAN)
        ),
    )
}

fn c2_total_edge() -> Outcome {
    let t = Instant::now();
    let r = fit_paper(&PaperDataset::embedded(), 2.0, false).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let f = &r.total_edge;
    let pass = (1.4..=1.6).contains(&f.rho_area.value)
        && f.rho_total_edge.consistent_with_zero()
        && secs < 1.0;
    outcome(
        pass,
        format!(
            "rho_A {:.3}; edge {:.0} +- {:.0}; {secs:.3} s",
            f.rho_area.value,
            f.rho_total_edge.value,
            f.rho_total_edge.sigma.unwrap_or(f64::NAN)
        ),
    )
}

fn c3_surface() -> Outcome {
    let t = Instant::now();
    let r = fit_paper(&PaperDataset::embedded(), 2.0, false).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let expected = [(1, 2.34, -0.25), (2, 3.37, 0.62)];
    let mut pass = secs < 1.0;
    let mut parts = Vec::new();
    for (chip, open, covered) in expected {
        let fit = &r.surface.iter().find(|s| s.chip == chip).unwrap().fit;
        let ok = within(fit.rho_open.value, open, 0.1) && within(fit.rho_covered.value, covered, 0.1);
        pass &= ok;
        parts.push(format!(
            "chip {chip}: ({:.3}, {:.3}) vs ({open}, {covered})",
            fit.rho_open.value, fit.rho_covered.value
        ));
    }
    outcome(pass, format!("{}; {secs:.3} s", parts.join("; ")))
}

fn c4_volume_density() -> Outcome {
    let r = fit_paper(&PaperDataset::embedded(), 2.0, false).unwrap();
    let vs: Vec<f64> = r.qubits.iter().map(|q| q.volume_density_per_ghz_um3).collect();
    let pass = vs.len() == 6 && vs.iter().all(|v| (690.0..=840.0).contains(v));
    let lo = vs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    outcome(pass, format!("{} qubits, range [{lo:.1}, {hi:.1}]", vs.len()))
}

fn c5_errorbar() -> Outcome {
    let got = junction_density_errorbar(3.5, 18.8, 10.0).unwrap();
    let want = 3.5 * 18.8 / 28.8;
    let rel = ((got - want) / want).abs();
    outcome(rel <= 1e-12, format!("{got} vs {want} (rel {rel:.1e})"))
}

fn c6_roundtrip() -> Outcome {
    let t = Instant::now();
    let s = roundtrip(&common::chips(), &RoundTripConfig::default()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let pass = s.seeds.len() >= 20 && s.area_recovered() && s.edges_consistent_with_zero() && secs < 300.0;
    outcome(
        pass,
        format!(
            "{} seeds: rho_A {:.3} (combined se {:.3}, planted {}); open {:.0} +- {:.0}; covered {:.0} +- {:.0}; {secs:.1} s",
            s.seeds.len(),
            s.rho_area.mean,
            s.rho_area.se_combined,
            s.planted_rho_area,
            s.rho_open.mean,
            s.rho_open.sigma_fit_mean,
            s.rho_covered.mean,
            s.rho_covered.sigma_fit_mean
        ),
    )
}

fn c7_screening() -> Outcome {
    let t = Instant::now();
    let cfg = ScreeningConfig::default();
    let study = screening_study(&cfg, true).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let d = cfg.junction.barrier_nm;
    let decay = study.ac.decay_length_nm;
    let change = study.refinement.unwrap();
    let pass = study.dc.ratio < 1e-3
        && decay.is_some_and(|l| l >= d / 3.0 && l <= 3.0 * d)
        && change.max() < 0.02
        && secs < 60.0;
    outcome(
        pass,
        format!(
            "dc ratio {:.2e}; decay length {:?} nm (d = {d} nm); refinement change dc {:.2}% decay {:.2}% ac {:.2}%; {secs:.1} s",
            study.dc.ratio,
            decay.map(|l| (l * 1e3).round() / 1e3),
            change.dc_ratio * 100.0,
            change.decay_length * 100.0,
            change.ac_profile * 100.0
        ),
    )
}

fn c8_classification() -> Outcome {
    let mut pass = true;
    let mut worst = (1.0f64, 1.0f64);
    for gate_lever in [3e-3, 5e-3, -4e-3] {
        let cmp = common::separated_comparison(8, gate_lever);
        for s in [cmp.junction, cmp.surface] {
            worst.0 = worst.0.min(s.precision());
            worst.1 = worst.1.min(s.recall());
        }
        pass &= cmp.junction.truth_total == 4 && cmp.surface.truth_total == 4;
    }
    pass &= worst == (1.0, 1.0);
    let widths = [0.5, 1.0, 2.0, 3.0];
    let dead: Vec<f64> = widths.iter().map(|&w| common::dead_fraction(w, 3.0, 7)).collect();
    let monotone = dead.windows(2).all(|p| p[1] >= p[0]);
    pass &= monotone;
    outcome(
        pass,
        format!(
            "min precision {} min recall {}; dead fraction at piezo steps {widths:?} V: {:?}",
            worst.0,
            worst.1,
            dead.iter().map(|x| (x * 1e3).round() / 1e3).collect::<Vec<_>>()
        ),
    )
}

fn c9_tunneling() -> Outcome {
    let e345 = transition_energy(3.0, 4.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut even = true;
    let mut bounded = true;
    for _ in 0..100_000 {
        let delta = rng.gen_range(1e-6..50.0);
        let eps = rng.gen_range(-50.0..50.0);
        let a = transition_energy(delta, eps).unwrap();
        let b = transition_energy(delta, -eps).unwrap();
        even &= a == b;
        bounded &= a >= delta;
    }

    // Junction defects along every gate sweep of the default plan.
    let plan = AlternatingPlan::default().build().unwrap();
    let step_ghz = plan.freq.step_ghz;
    let chips = common::chips();
    let rec = chips.qubit("1.4").unwrap();
    let rho = PlantedDensities {
        rho_area: 1.5,
        rho_open_edge: 200.0,
        rho_covered_edge: 200.0,
        rho_small_junction: 0.8,
        ..PlantedDensities::default()
    };
    let mut max_dev = 0.0f64;
    let mut n = 0;
    for seed in 0..20 {
        let e = sample_ensemble(
            &rec.geometry().unwrap(),
            &rec.qubit_params(),
            &rho,
            plan.window(),
            seed,
            &EnsemblePriors::default(),
        )
        .unwrap();
        for def in e.defects.iter().filter(|d| d.tls.location.is_junction()) {
            n += 1;
            for seg in plan.segments.iter().filter(|s| s.channel == SweepChannel::Gate) {
                let f: Vec<f64> = seg.biases().iter().map(|&b| def.tls.frequency(&def.arms, b)).collect();
                let dev = f.iter().map(|x| (x - f[0]).abs()).fold(0.0, f64::max);
                max_dev = max_dev.max(dev);
            }
        }
    }
    let pass = e345 == 5.0 && even && bounded && n > 0 && max_dev < step_ghz;
    outcome(
        pass,
        format!(
            "E(3,4) = {e345}; even {even}; E >= delta on 1e5 draws {bounded}; max gate deviation {max_dev:.1e} GHz over {n} junction defects (grid step {step_ghz} GHz)"
        ),
    )
}

type Check = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("1 area/edge refit of the device table", c1_area_edge),
        ("2 area/total-edge refit", c2_total_edge),
        ("3 two-pass surface fit", c3_surface),
        ("4 volume density", c4_volume_density),
        ("5 error-bar formula", c5_errorbar),
        ("6 planted-density round trip", c6_roundtrip),
        ("7 screening properties", c7_screening),
        ("8 classification properties", c8_classification),
        ("9 tunneling-model properties", c9_tunneling),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
