fn main() {
    std::process::exit(geoloc_cli::run_cli(std::env::args_os()));
}
