fn main() {
    std::process::exit(cntnet::cli::main_with(std::env::args_os()));
}
