//! JSON-lines logging on stderr. Run events already carry a JSON body and
//! are written verbatim; everything else is wrapped into an object.

use lforge_core::events;
use log::LevelFilter;
use std::io::Write;

pub fn init(verbosity: u8, quiet: bool) {
    let level = match (quiet, verbosity) {
        (true, _) => LevelFilter::Warn,
        (false, 0) => LevelFilter::Info,
        (false, 1) => LevelFilter::Debug,
        _ => LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("LFORGE_LOG")
        .format(|buf, record| {
            if record.target() == events::TARGET {
                writeln!(buf, "{}", record.args())
            } else {
                let line = serde_json::json!({
                    "event": "log",
                    "level": record.level().as_str().to_lowercase(),
                    "target": record.target(),
                    "detail": record.args().to_string(),
                });
                writeln!(buf, "{line}")
            }
        })
        .init();
}
