fn main() {
    std::process::exit(bloch_homog::cli::main_entry());
}
