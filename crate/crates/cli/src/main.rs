fn main() {
    std::process::exit(epictrl_cli::main_with_args(std::env::args_os()));
}
