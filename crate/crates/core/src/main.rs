fn main() {
    std::process::exit(semrec::cli::main());
}
