fn main() {
    std::process::exit(tradeoff_forge::cli::run(std::env::args_os()));
}
