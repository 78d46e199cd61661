fn main() {
    std::process::exit(harvester_cli::main_with_args(std::env::args_os()));
}
