fn main() {
    std::process::exit(crossadapt::cli::run(std::env::args_os()));
}
