fn main() {
    std::process::exit(serocs::cli::run(std::env::args_os()));
}
