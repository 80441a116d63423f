fn main() {
    std::process::exit(aadtt::cli::main_with_args(std::env::args_os()));
}
