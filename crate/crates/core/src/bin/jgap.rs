fn main() {
    std::process::exit(jgap::cli::main_with_args(std::env::args_os()));
}
