fn main() {
    let (out, code) = exosum::cli::run(std::env::args());
    if !out.is_empty() {
        println!("{out}");
    }
    std::process::exit(code);
}
