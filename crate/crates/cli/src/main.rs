fn main() {
    std::process::exit(mmag_cli::run(std::env::args_os()));
}
