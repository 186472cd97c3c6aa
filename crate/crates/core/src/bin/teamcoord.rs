fn main() {
    std::process::exit(teamcoord::cli::main_from_env());
}
