fn main() {
    std::process::exit(conelab::cli::run(std::env::args_os()));
}
