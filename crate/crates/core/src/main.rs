fn main() {
    std::process::exit(storebench::cli::main());
}
