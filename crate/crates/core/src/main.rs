fn main() {
    std::process::exit(ecotruck::scenarios::cli::run_cli(std::env::args_os()));
}
