fn main() {
    std::process::exit(sentixrl::cli::run(std::env::args_os()));
}
