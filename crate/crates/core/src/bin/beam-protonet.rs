fn main() -> std::process::ExitCode {
    beam_protonet::cli::main()
}
