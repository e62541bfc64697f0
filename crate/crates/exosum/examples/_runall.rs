use exosum::verify::{run_all, CheckParams, Env};
fn main() {
    let mut env = Env::new();
    let params = CheckParams::default();
    let t0 = std::time::Instant::now();
    for rep in run_all(&mut env, &params) {
        match rep {
            Ok(r) => println!(
                "{:20} {} cases={} err={:.3e} tol={:.1e} {:.1}s",
                r.id,
                if r.pass { "PASS" } else { "FAIL" },
                r.cases,
                r.abs_err,
                r.tolerance,
                r.wall_ms / 1000.0
            ),
            Err(e) => println!("ERROR: {e}"),
        }
    }
    println!("total {:?}", t0.elapsed());
}
