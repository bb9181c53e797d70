fn main() {
    std::process::exit(specmon_cli::main_with_args(std::env::args_os()));
}
