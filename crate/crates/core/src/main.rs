fn main() {
    std::process::exit(droplet_bo::cli::run_cli(std::env::args_os()));
}
