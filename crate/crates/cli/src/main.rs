fn main() {
    std::process::exit(rarecast_cli::run_command(std::env::args_os()));
}
