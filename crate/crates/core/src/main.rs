fn main() {
    std::process::exit(eo2sar::cli::main_with_args(std::env::args_os()));
}
