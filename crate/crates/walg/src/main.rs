fn main() {
    std::process::exit(walg::cli::run(std::env::args_os()));
}
