//! Parse a small click log and build its layered distance skeleton: one
//! layer per click rank, nearest-neighbor edges within a layer, thread
//! edges along each stream.
//!
//! Run with: cargo run --example parse_and_skeleton

use std::io::Cursor;

use reality_forge::clicklog::{parse_log, LogFormat};
use reality_forge::prespace::{build_skeleton, DistanceScheme, EdgeKind};

const LOG: &str = r#"{"stream_id":"ada","seq":0,"timestamp_ms":0,"query":"rust borrow checker","response":"ownership and borrowing guide"}
{"stream_id":"ada","seq":1,"timestamp_ms":40,"query":"rust lifetimes","response":"lifetime annotations explained"}
{"stream_id":"ada","seq":2,"timestamp_ms":90,"query":"rust lifetime elision","response":"elision rules reference"}
{"stream_id":"grace","seq":0,"timestamp_ms":5,"query":"python asyncio","response":"event loop basics"}
{"stream_id":"grace","seq":1,"timestamp_ms":55,"query":"python await syntax","response":"awaitables and coroutines"}
{"stream_id":"grace","seq":2,"timestamp_ms":80,"query":"python task groups","response":"structured concurrency"}
{"stream_id":"linus","seq":0,"timestamp_ms":9,"query":"rust async runtime","response":"executor comparison"}
{"stream_id":"linus","seq":1,"timestamp_ms":61,"query":"rust tokio select","response":"select macro patterns"}
{"stream_id":"linus","seq":2,"timestamp_ms":99,"query":"rust cancellation","response":"cooperative cancellation"}
"#;

fn main() {
    let collection = parse_log(Cursor::new(LOG), LogFormat::Jsonl).expect("valid log");
    println!(
        "{} streams, {} clicks, {} distinct terms",
        collection.streams().len(),
        collection.num_clicks(),
        collection.vocabulary().len()
    );

    let skeleton = build_skeleton(&collection, DistanceScheme::Cosine, 2);
    println!(
        "skeleton: {} points in {} layers, {} edges",
        skeleton.num_points(),
        skeleton.layers.len(),
        skeleton.edges.len()
    );

    for edge in &skeleton.edges {
        let name = |p: reality_forge::prespace::PointRef| {
            format!(
                "{}#{}",
                collection.click(p.stream_index, p.seq).stream_id,
                p.seq
            )
        };
        let kind = match edge.kind {
            EdgeKind::Thread => "thread  ",
            EdgeKind::Neighbor => "neighbor",
        };
        println!("{kind} {:>8} -- {:<8} d = {:.3}", name(edge.a), name(edge.b), edge.length);
    }

    // The rust-focused streams sit closer to each other than to the python
    // one inside every layer.
    println!("\nserialized skeleton starts with:");
    for line in skeleton.to_json().lines().take(6) {
        println!("  {line}");
    }
}
