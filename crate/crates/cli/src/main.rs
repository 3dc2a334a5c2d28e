fn main() {
    std::process::exit(hvrbf_cli::main_with(std::env::args_os()));
}
