fn main() {
    std::process::exit(rebalance_forge::cli::dispatch(std::env::args()));
}
