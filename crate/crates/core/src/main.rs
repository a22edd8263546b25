fn main() {
    std::process::exit(ldgan::cli::main_with_args(std::env::args_os()));
}
