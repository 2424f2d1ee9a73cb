fn main() {
    std::process::exit(optregime::cli::dispatch(std::env::args_os()));
}
