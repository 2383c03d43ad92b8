fn main() {
    std::process::exit(perturbmc::cli::main_with_args(std::env::args_os()));
}
