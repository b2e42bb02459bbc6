fn main() {
    std::process::exit(gpaml::cli::main_with_args(std::env::args_os()));
}
