#![no_main]

use clap::Parser;
use libfuzzer_sys::fuzz_target;
use quadinv::cli::{Cli, Command};

// Parse only; running would write files.
fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    let args = std::iter::once("quadinv").chain(s.split('\0'));
    if let Ok(Cli {
        command: Command::Run(a),
    }) = Cli::try_parse_from(args)
    {
        let _ = a.into_run().validate();
    }
});
