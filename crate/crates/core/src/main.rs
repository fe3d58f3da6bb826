fn main() {
    std::process::exit(evalmine::cli::run(std::env::args_os()));
}
