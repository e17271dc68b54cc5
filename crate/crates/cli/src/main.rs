fn main() {
    std::process::exit(cellsplit_cli::run(std::env::args_os()));
}
