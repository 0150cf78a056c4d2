fn main() {
    std::process::exit(opcurl::cli::main_with(std::env::args_os()));
}
