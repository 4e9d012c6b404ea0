//! Minimal scorer for the external-critic line protocol. Serves stdin/stdout
//! by default, or TCP connections with `--listen` (the bound address is
//! printed as `LISTENING <addr>` on the first stdout line).

use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Score = SMILES length.
    Length,
    /// Reply `nan`.
    Nan,
    /// Reply `ERR`.
    Error,
    /// Answer with the wrong id.
    Mismatch,
    /// Never answer.
    Stall,
}

#[derive(Debug, Parser)]
#[command(name = "molrnn-stub-scorer", about = "Test scorer for the external-critic protocol")]
struct Args {
    #[arg(long, value_enum, default_value = "length")]
    mode: Mode,
    /// Serve TCP on this address instead of stdio, e.g. 127.0.0.1:0.
    #[arg(long)]
    listen: Option<String>,
    /// Drop each connection after this many replies.
    #[arg(long)]
    drop_after: Option<u64>,
}

fn reply(mode: Mode, line: &str) -> Option<String> {
    let mut parts = line.splitn(3, ' ');
    let (verb, id, smiles) = (parts.next()?, parts.next()?, parts.next().unwrap_or(""));
    let Ok(id) = id.parse::<u64>() else {
        return Some("ERR 0 bad request id\n".into());
    };
    if verb != "SCORE" {
        return Some(format!("ERR {id} unknown verb\n"));
    }
    match mode {
        Mode::Length => Some(format!("OK {id} {}\n", smiles.trim_end().len())),
        Mode::Nan => Some(format!("OK {id} nan\n")),
        Mode::Error => Some(format!("ERR {id} refusing {smiles}\n")),
        Mode::Mismatch => Some(format!("OK {} 1\n", id + 1)),
        Mode::Stall => None,
    }
}

fn serve(args: &Args, input: impl BufRead, mut output: impl Write) -> io::Result<()> {
    let mut answered = 0;
    for line in input.lines() {
        let line = line?;
        match reply(args.mode, &line) {
            Some(r) => {
                output.write_all(r.as_bytes())?;
                output.flush()?;
                answered += 1;
                if args.drop_after == Some(answered) {
                    return Ok(());
                }
            }
            None => thread::sleep(Duration::from_secs(3600)),
        }
    }
    Ok(())
}

fn main() -> io::Result<()> {
    let args = Args::parse();
    let Some(addr) = &args.listen else {
        return serve(&args, io::stdin().lock(), io::stdout().lock());
    };
    let listener = TcpListener::bind(addr)?;
    println!("LISTENING {}", listener.local_addr()?);
    io::stdout().flush()?;
    let args = std::sync::Arc::new(args);
    for stream in listener.incoming() {
        let stream = stream?;
        let args = args.clone();
        thread::spawn(move || {
            let reader = BufReader::new(stream.try_clone()?);
            serve(&args, reader, stream)
        });
    }
    Ok(())
}
