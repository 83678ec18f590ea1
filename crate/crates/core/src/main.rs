fn main() {
    std::process::exit(polydiv::cli::main_with_args(std::env::args().collect()));
}
