fn main() {
    laban_guide::cli::init_logging();
    std::process::exit(laban_guide::cli::run(std::env::args_os()));
}
