fn main() {
    std::process::exit(spikefield_cli::run(std::env::args_os()));
}
