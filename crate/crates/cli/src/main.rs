fn main() {
    std::process::exit(pullin_cli::main_with_args(std::env::args_os()));
}
