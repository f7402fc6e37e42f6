fn main() {
    std::process::exit(kerrcat::cli::main_with_args(std::env::args_os()));
}
