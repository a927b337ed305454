fn main() {
    std::process::exit(zfcert::cli::run(std::env::args_os()));
}
