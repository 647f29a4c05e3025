fn main() {
    std::process::exit(rbmts::cli::run(std::env::args_os()));
}
