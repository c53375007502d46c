fn main() {
    let code = cpw_resonator::cli::run(std::env::args_os());
    std::process::exit(code);
}
