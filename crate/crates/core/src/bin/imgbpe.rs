fn main() {
    std::process::exit(imgbpe::cli::run(std::env::args_os()));
}
