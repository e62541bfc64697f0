//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with the measured worst error, tolerance, and wall time. Run with
//! `cargo test --test acceptance -- --nocapture` to see every line.

use exosum::chars::MultChar;
use exosum::etale::EtaleAlgebra;
use exosum::expsums::{CompositeChar, SumCtx};
use exosum::fields::FieldTower;
use exosum::mks::MksCtx;
use exosum::verify::{run_check, CheckParams, Env};
use std::time::Instant;

struct Outcome {
    name: &'static str,
    err: f64,
    tol: f64,
    cases: usize,
    secs: f64,
    limit_secs: f64,
}

impl Outcome {
    fn report(&self) -> bool {
        let pass = self.err <= self.tol && self.secs < self.limit_secs;
        println!(
            "criterion {:44} {}  cases={} err={:.3e} tol={:.1e} time={:.2}s (limit {}s)",
            self.name,
            if pass { "PASS" } else { "FAIL" },
            self.cases,
            self.err,
            self.tol,
            self.secs,
            self.limit_secs
        );
        pass
    }
}

fn run_registered(name: &'static str, id: &str, qs: &[Option<u64>], limit_secs: f64) -> Outcome {
    let start = Instant::now();
    let mut env = Env::new();
    let mut err = 0.0f64;
    let mut tol = f64::INFINITY;
    let mut cases = 0;
    for &q in qs {
        let params = CheckParams {
            q,
            ..Default::default()
        };
        let rep = run_check(&mut env, id, &params).expect(id);
        err = err.max(rep.abs_err);
        tol = tol.min(rep.tolerance);
        cases += rep.cases;
    }
    Outcome {
        name,
        err,
        tol,
        cases,
        secs: start.elapsed().as_secs_f64(),
        limit_secs,
    }
}

#[test]
fn criterion_01_gauss_modulus_and_hasse_davenport() {
    let out = run_registered(
        "1 Gauss modulus + Hasse-Davenport",
        "HD-GAUSS",
        &[None],
        5.0,
    );
    assert!(out.report());
}

#[test]
fn criterion_02_exotic_gauss_dual_path() {
    // defining sum (histogram over all units) equals the product formula for
    // every character pair, all (k,m) with lcm <= 4, q in {2,3}
    let start = Instant::now();
    let mut err = 0.0f64;
    let mut cases = 0usize;
    for q in [2u64, 3] {
        let tower = FieldTower::build(q, 1, 4).unwrap();
        let ctx = SumCtx::new(&tower);
        for k in 1..=4usize {
            for m in 1..=4usize {
                if num_integer::lcm(k, m) > 4 {
                    continue;
                }
                let hist = ctx.exotic_gauss_histogram(k, m).unwrap();
                for a in 0..tower.units(k) {
                    for c in 0..tower.units(m) {
                        let lhs = hist.eval(a, c);
                        let rhs = ctx
                            .exotic_gauss_product(
                                MultChar::new(&tower, k, a),
                                m,
                                MultChar::new(&tower, m, c),
                            )
                            .unwrap();
                        err = err.max((lhs - rhs).norm());
                        cases += 1;
                    }
                }
            }
        }
    }
    let out = Outcome {
        name: "2 exotic Gauss defining = product",
        err,
        tol: 1e-6,
        cases,
        secs: start.elapsed().as_secs_f64(),
        limit_secs: 60.0,
    };
    assert!(out.report());
}

#[test]
fn criterion_03_l_polynomiality_and_purity() {
    let out = run_registered(
        "3 L-polynomiality + purity",
        "L-PURITY",
        &[None],
        300.0,
    );
    assert!(out.report());
}

#[test]
fn criterion_04_kondo_brute_vs_closed() {
    let start = Instant::now();
    let a = run_registered("4a Kondo k=1", "KONDO", &[None], 600.0);
    let b = run_registered("4b exotic Kondo k=2,3", "EXOTIC-KONDO", &[None], 600.0);
    let out = Outcome {
        name: "4 Kondo + exotic Kondo",
        err: a.err.max(b.err),
        tol: a.tol.min(b.tol),
        cases: a.cases + b.cases,
        secs: start.elapsed().as_secs_f64(),
        limit_secs: 600.0,
    };
    assert!(out.report());
}

#[test]
fn criterion_05_mks_main_theorem() {
    let out = run_registered(
        "5 matrix Kloosterman: convolution = HL",
        "MKS-HL",
        &[None],
        600.0,
    );
    assert!(out.report());
}

#[test]
fn criterion_06_definitional_characterization() {
    let out = run_registered(
        "6 definitional characterization",
        "MKS-DEF",
        &[None],
        600.0,
    );
    assert!(out.report());
}

#[test]
fn criterion_07_bessel_speh_bridge_q2() {
    // q=2, k=c=2: the 16-element unipotent average of the Speh character
    // against K*(alpha^{-1}, psi, (-1)^{k-1} h^{-1}) on all 3 classes
    let start = Instant::now();
    let tower = FieldTower::build(2, 1, 6).unwrap();
    let ctx = MksCtx::new(&tower);
    let alpha = CompositeChar::new(
        EtaleAlgebra::new(vec![2]),
        vec![MultChar::new(&tower, 2, 1)],
    );
    let ainv = alpha.inverse(&tower);
    let kf = ctx.mks_convolve(&ainv, 2, 100_000_000).unwrap();
    let pairs = ctx.bessel_speh_bridge(&alpha, 2, &kf).unwrap();
    let mut err = 0.0f64;
    for (lhs, rhs) in &pairs {
        err = err.max((lhs - rhs).norm());
    }
    let out = Outcome {
        name: "7 Bessel-Speh bridge q=2 k=c=2",
        err,
        tol: 1e-6,
        cases: pairs.len(),
        secs: start.elapsed().as_secs_f64(),
        limit_secs: 1.0,
    };
    assert!(out.report());
}

#[test]
fn criterion_08_appendix_table() {
    let out = run_registered(
        "8 Speh character vs Appendix table",
        "APPENDIX-TABLE",
        &[Some(2)],
        60.0,
    );
    assert!(out.report());
}

#[test]
fn criterion_09_identity_battery() {
    // multiplicativity, Whittaker transform, generating series, zero-cycle
    // identity, and the flag-count bounds, on their declared grids
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut cases = 0usize;
    let mut all_pass = true;
    for (name, id) in [
        ("9a multiplicativity", "MKS-MULT"),
        ("9b Whittaker transform", "WHITTAKER"),
        ("9c generating series", "GENSERIES"),
        ("9d zero-cycle identity", "ZEROCYCLE"),
        ("9e flag-count bounds", "BOUNDS"),
    ] {
        let mut env = Env::new();
        let rep = run_check(&mut env, id, &CheckParams::default()).expect(id);
        println!(
            "  {:28} {} cases={} err={:.3e} tol={:.1e}",
            name,
            if rep.pass { "PASS" } else { "FAIL" },
            rep.cases,
            rep.abs_err,
            rep.tolerance
        );
        all_pass &= rep.pass;
        worst = worst.max(rep.abs_err / rep.tolerance);
        cases += rep.cases;
    }
    let secs = start.elapsed().as_secs_f64();
    let out = Outcome {
        name: "9 identities (4.6, 6.2, 6.4/6.5, zero-cycle, bounds)",
        err: worst,
        tol: 1.0, // already expressed relative to each check's tolerance
        cases,
        secs,
        limit_secs: 900.0,
    };
    assert!(out.report() && all_pass);
}

#[test]
fn criterion_10_global_truncation() {
    let out = run_registered(
        "10 global truncation (both Euler products)",
        "GLOBAL-G",
        &[None],
        600.0,
    );
    assert!(out.report());
}
