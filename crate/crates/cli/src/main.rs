fn main() {
    std::process::exit(bggan_cli::main_with_args(std::env::args_os()));
}
