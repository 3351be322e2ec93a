fn main() {
    std::process::exit(greenzonal_cli::run(std::env::args_os()));
}
