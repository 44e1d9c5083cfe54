fn main() {
    std::process::exit(dpmnl_cli::run(std::env::args_os()));
}
