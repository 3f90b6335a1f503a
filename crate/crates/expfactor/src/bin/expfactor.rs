fn main() {
    std::process::exit(expfactor::cli::run(std::env::args()));
}
