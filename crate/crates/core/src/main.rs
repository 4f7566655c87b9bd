fn main() {
    let code = carryover::cli::dispatch(std::env::args_os());
    std::process::exit(code);
}
