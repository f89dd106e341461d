fn main() {
    std::process::exit(qpwalk::cli::main_with_args(std::env::args_os()));
}
