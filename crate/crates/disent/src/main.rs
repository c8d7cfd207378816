fn main() {
    std::process::exit(disent::cli::main_with_args(std::env::args_os()));
}
