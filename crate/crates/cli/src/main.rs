fn main() {
    std::process::exit(ct_gossip_cli::cli::run(std::env::args_os()));
}
