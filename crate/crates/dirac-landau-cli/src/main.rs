fn main() {
    std::process::exit(dirac_landau_cli::run(std::env::args_os()));
}
