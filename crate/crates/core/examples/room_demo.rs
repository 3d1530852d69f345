//! Writes a small synthetic project for the `splatinsert` CLI: the room
//! scene, its editing box, 16 training cameras and a config file.
//!
//! ```text
//! cargo run --release -p splatinsert --example room_demo -- demo
//! cargo run --release -p splatinsert-cli -- run-all -c demo/config.toml
//! ```

use std::fs;
use std::path::PathBuf;

use splatinsert::camera::{cameras_to_json, Intrinsics};
use splatinsert::ply::save_ply;
use splatinsert::synthetic::{ring_cameras, room_bbox, room_scene};

const CONFIG: &str = r#"scene = "scene.ply"
bbox = "bbox.json"
output = "out"
prompt = "a toy"
seed = 7
endpoint = "mock"
training_cameras = "cameras.json"
schedule = "toy"

[trajectory]
width = 128
height = 128
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    fs::create_dir_all(&dir)?;
    save_ply(&room_scene(0), dir.join("scene.ply"))?;
    fs::write(dir.join("bbox.json"), room_bbox().to_json()?)?;
    let cameras = ring_cameras(Intrinsics::from_fov(128, 128, 60.0), 16, 2.4, 1.4)?;
    fs::write(dir.join("cameras.json"), cameras_to_json(&cameras)?)?;
    fs::write(dir.join("config.toml"), CONFIG)?;
    println!("wrote demo project to {}", dir.display());
    Ok(())
}
