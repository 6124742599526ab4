fn main() { std::process::exit(dimcon::cli::dispatch(std::env::args().skip(1))); }
