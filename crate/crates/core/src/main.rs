fn main() {
    std::process::exit(probanon::cli::run(std::env::args_os()));
}
