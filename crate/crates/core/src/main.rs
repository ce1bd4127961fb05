fn main() {
    std::process::exit(layoutforge::cli::run(std::env::args_os()));
}
