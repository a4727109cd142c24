fn main() {
    std::process::exit(ergoflow::cli::main_with(std::env::args_os()));
}
