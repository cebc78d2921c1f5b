fn main() {
    std::process::exit(densekit_cli::main_with_args(std::env::args_os()));
}
