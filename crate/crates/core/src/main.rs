fn main() {
    std::process::exit(fuseconv::cli::main());
}
