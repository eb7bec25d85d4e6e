fn main() {
    std::process::exit(boolcd::cli::run(std::env::args_os()));
}
