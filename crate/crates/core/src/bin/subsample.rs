fn main() {
    std::process::exit(subsample::cli::run(std::env::args_os()));
}
