fn main() {
    std::process::exit(rvelab::cli::run(std::env::args()));
}
