fn main() {
    std::process::exit(dgn::cli::run(std::env::args_os()));
}
