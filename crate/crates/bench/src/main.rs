fn main() {
    std::process::exit(tsmm_bench::cli::main());
}
