//! Example systems shipped with the crate.

use crate::dynamics::Model;
use crate::error::{Error, Result};
use crate::spec_file::parse_str;

pub const NAMES: [&str; 8] = ["tent_std", "tent_half", "doubling", "halving", "loop1", "loops2", "fullshift2", "loop_tail"];

pub fn text(name: &str) -> Option<&'static str> {
    Some(match name {
        "tent_std" => include_str!("../specs/tent_std.json"),
        "tent_half" => include_str!("../specs/tent_half.json"),
        "doubling" => include_str!("../specs/doubling.json"),
        "halving" => include_str!("../specs/halving.json"),
        "loop1" => include_str!("../specs/loop1.json"),
        "loops2" => include_str!("../specs/loops2.json"),
        "fullshift2" => include_str!("../specs/fullshift2.json"),
        "loop_tail" => include_str!("../specs/loop_tail.json"),
        _ => return None,
    })
}

pub fn load(name: &str) -> Result<Model> {
    let t = text(name).ok_or_else(|| Error::Parse(format!("no bundled spec named `{name}`")))?;
    parse_str(t)
}

/// A loop `e` at `v` with a tail edge `f` from `v` into `u`.
pub fn tail_loop() -> Model {
    load("loop_tail").expect("bundled spec parses")
}
