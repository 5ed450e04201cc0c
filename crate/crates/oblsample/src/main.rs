fn main() {
    std::process::exit(oblsample::cli::main());
}
