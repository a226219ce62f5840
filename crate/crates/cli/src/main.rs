fn main() {
    std::process::exit(fedselect_cli::run_cli(std::env::args_os()));
}
