fn main() {
    std::process::exit(pndr_cli::main_with(std::env::args_os()));
}
