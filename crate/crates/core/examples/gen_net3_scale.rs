//! Writes the Net3-scale fixture: `cargo run --example gen_net3_scale -- [path] [seed]`.

#[path = "../tests/common/net3.rs"]
mod net3;

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "fixtures/net3_scale.json".into());
    let seed = args.next().map_or(net3::NET3_SEED, |s| s.parse().expect("seed must be an integer"));
    let doc = net3::net3_scale(seed);
    std::fs::write(&path, serde_json::to_string_pretty(&doc).expect("serializes") + "\n")?;
    println!("wrote {path}");
    Ok(())
}
