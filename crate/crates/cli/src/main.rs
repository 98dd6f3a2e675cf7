fn main() {
    std::process::exit(leitsatz_cli::run(std::env::args_os(), std::env::vars().collect()));
}
