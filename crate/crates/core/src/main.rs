fn main() {
    std::process::exit(faml::cli::main_with_args(std::env::args_os()));
}
