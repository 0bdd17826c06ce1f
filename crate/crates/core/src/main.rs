fn main() {
    std::process::exit(nredit::cli::cli_main(std::env::args_os()));
}
