fn main() {
    std::process::exit(gnslab_cli::run_cli(std::env::args_os()));
}
