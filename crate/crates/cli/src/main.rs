fn main() {
    std::process::exit(sivo_cli::run_from_args(std::env::args_os()));
}
