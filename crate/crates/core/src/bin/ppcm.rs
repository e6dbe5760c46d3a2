fn main() {
    std::process::exit(ppcm::cli::run(std::env::args_os()));
}
