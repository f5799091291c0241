fn main() {
    std::process::exit(modkit::cli::run(std::env::args_os()));
}
