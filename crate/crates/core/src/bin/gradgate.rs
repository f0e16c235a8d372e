fn main() {
    std::process::exit(gradgate::cli::run(std::env::args_os()));
}
