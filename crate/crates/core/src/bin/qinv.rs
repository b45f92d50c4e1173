fn main() {
    std::process::exit(qinv::cli::main());
}
