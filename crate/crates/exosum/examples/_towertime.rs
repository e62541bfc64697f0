use exosum::fields::FieldTower;
fn main() {
    let t0 = std::time::Instant::now();
    let t = FieldTower::build(3, 1, 12).unwrap();
    println!("q=3 depth 12: {:?}, |F^x| top = {}", t0.elapsed(), t.units(12));
    let t0 = std::time::Instant::now();
    let t2 = FieldTower::build(2, 1, 12).unwrap();
    println!("q=2 depth 12: {:?} units {}", t0.elapsed(), t2.units(12));
    let t0 = std::time::Instant::now();
    let t3 = FieldTower::build(2, 2, 6).unwrap();
    println!("q=4 depth 6: {:?} units {}", t0.elapsed(), t3.units(6));
    // sanity: norm compat at every divisor pair of 12
    for n in 1..=12usize {
        for m in (1..=n).filter(|m| n % m == 0) {
            assert_eq!(t.norm(t.generator(n), m).unwrap(), t.generator(m));
        }
    }
    println!("norm-compatible generators verified");
}
