fn main() {
    std::process::exit(nullframe::cli::run(std::env::args_os()));
}
