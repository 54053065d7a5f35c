fn main() {
    std::process::exit(invgan_cli::cli_dispatch(std::env::args_os()));
}
