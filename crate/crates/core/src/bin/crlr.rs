fn main() {
    std::process::exit(crlr::cli::run(std::env::args_os()));
}
