fn main() {
    std::process::exit(shardledger::cli::run())
}
