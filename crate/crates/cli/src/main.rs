fn main() {
    std::process::exit(weylflow_cli::app::main_with_args(std::env::args_os()));
}
