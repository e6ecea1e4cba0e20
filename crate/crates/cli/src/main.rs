fn main() {
    std::process::exit(wardsource_cli::run(std::env::args_os()));
}
