fn main() {
    std::process::exit(hvp::cli::main_entry());
}
