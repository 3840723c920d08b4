fn main() {
    std::process::exit(clc_cli::run(std::env::args_os()));
}
