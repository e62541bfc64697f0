use exosum::fields::FieldTower;
fn main() {
    let t0 = std::time::Instant::now();
    let levels: Vec<usize> = (1..=12).chain([15]).collect();
    let t = FieldTower::build_levels(3, 1, &levels).unwrap();
    println!("q=3 sparse {{1..12,15}}: {:?}", t0.elapsed());
    assert!(t.has_level(15) && t.has_level(5) && !t.has_level(13));
    assert_eq!(t.norm(t.generator(15), 5).unwrap(), t.generator(5));
    assert_eq!(t.norm(t.generator(15), 3).unwrap(), t.generator(3));
    let t0 = std::time::Instant::now();
    let t2 = FieldTower::build_levels(2, 1, &levels).unwrap();
    println!("q=2 sparse: {:?}", t0.elapsed());
    assert!(t2.has_level(15));
}
