//! Builds latency and accuracy metrics from an event log.
//!
//! With an argument, reads every `*.jsonl` matching the glob; otherwise uses
//! a small hand-written log.

use edgefl::metrics::{build_report, read_events_glob, EventKind, RoundEvent};

fn sample() -> Vec<RoundEvent> {
    use EventKind::*;
    vec![
        RoundEvent::new("node-1", 0, TrainStart, 0),
        RoundEvent::new("node-2", 0, TrainStart, 0),
        RoundEvent::new("node-1", 0, Deploy, 40).with_version(1),
        RoundEvent::new("node-2", 0, Deploy, 45).with_version(1),
        RoundEvent::new("node-1", 0, Evaluate, 50).with_accuracy(0.71),
        RoundEvent::new("node-2", 0, Evaluate, 52).with_accuracy(0.64),
        RoundEvent::new("node-1", 1, Send, 100).with_counterpart("node-2", 1),
        RoundEvent::new("node-2", 1, Receive, 112).with_counterpart("node-1", 1),
        RoundEvent::new("node-2", 1, Send, 101).with_counterpart("node-1", 1),
        RoundEvent::new("node-1", 1, Receive, 109).with_counterpart("node-2", 1),
        RoundEvent::new("node-1", 1, TrainStart, 110),
        RoundEvent::new("node-2", 1, TrainStart, 113),
        RoundEvent::new("node-1", 1, Deploy, 150).with_version(2),
        RoundEvent::new("node-2", 1, Deploy, 155).with_version(2),
        RoundEvent::new("node-1", 1, Evaluate, 160).with_accuracy(0.83),
        RoundEvent::new("node-2", 1, Evaluate, 161).with_accuracy(0.80),
    ]
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let events = match std::env::args().nth(1) {
        Some(pattern) => read_events_glob(&pattern)?,
        None => sample(),
    };
    let report = build_report(&events);
    print!("{}", report.to_csv());
    println!("{}", serde_json::to_string_pretty(&report.summary)?);
    Ok(())
}
