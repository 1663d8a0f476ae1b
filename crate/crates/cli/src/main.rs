fn main() {
    std::process::exit(ergolab_cli::main_with_args(std::env::args_os()));
}
