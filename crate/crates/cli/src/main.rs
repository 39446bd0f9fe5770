fn main() {
    std::process::exit(pss_cli::run(std::env::args_os()));
}
