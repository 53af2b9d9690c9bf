fn main() {
    std::process::exit(thinmpi::cli::dispatch(std::env::args_os()));
}
