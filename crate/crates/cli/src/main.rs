fn main() {
    std::process::exit(pluralism_cli::run(std::env::args_os()));
}
