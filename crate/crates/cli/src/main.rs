fn main() {
    std::process::exit(ecbench_cli::app::main_with_args(std::env::args_os()));
}
