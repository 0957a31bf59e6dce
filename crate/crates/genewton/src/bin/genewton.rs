fn main() {
    std::process::exit(genewton::cli::run());
}
