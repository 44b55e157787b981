fn main() {
    std::process::exit(transport_rc::cli::run(std::env::args_os()));
}
