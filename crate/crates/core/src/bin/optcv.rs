fn main() {
    std::process::exit(optcv::cli::run(std::env::args_os()));
}
