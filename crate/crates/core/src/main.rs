fn main() {
    std::process::exit(factor_paradox::cli::run(std::env::args_os()));
}
