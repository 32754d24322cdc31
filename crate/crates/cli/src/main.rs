fn main() {
    std::process::exit(edpcausal_cli::run(std::env::args_os()));
}
