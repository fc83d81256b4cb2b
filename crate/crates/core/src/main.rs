fn main() {
    std::process::exit(na_lattice::cli::dispatch(std::env::args_os()));
}
