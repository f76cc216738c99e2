fn main() {
    std::process::exit(epiforecast::cli::run(std::env::args_os()));
}
