fn main() {
    std::process::exit(slln_lab::cli::main_with_args(std::env::args_os()));
}
