fn main() {
    std::process::exit(nfed::cli::main_with_args(std::env::args_os()));
}
