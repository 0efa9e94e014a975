fn main() {
    std::process::exit(scgan::cli::main_with_args(std::env::args_os()));
}
