fn main() {
    std::process::exit(lacuna_cli::main_with_args(std::env::args().collect()));
}
