fn main() {
    std::process::exit(phaseobs::cli::run());
}
