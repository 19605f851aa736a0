fn main() {
    std::process::exit(franklin::cli::run(std::env::args_os()));
}
