fn main() {
    std::process::exit(linetrace::cli::main_with_args(std::env::args_os()));
}
