fn main() {
    std::process::exit(covtransport::cli::cli_main(std::env::args_os()));
}
