fn main() {
    std::process::exit(hdm::cli::main_with_args());
}
