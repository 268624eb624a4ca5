fn main() {
    std::process::exit(contrastive_workbench::workbench::cli::run(std::env::args_os()));
}
