fn main() {
    std::process::exit(mitoseg::cli::main_with_args(std::env::args_os()));
}
