fn main() {
    std::process::exit(lpsmooth::cli::main_entry());
}
