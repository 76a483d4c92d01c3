//! `rxai inspect`: layer table with shapes, parameters and split points.

use std::fmt::Write as _;

use anyhow::Result;
use clap::Args;
use rxai_core::Model;

use crate::{setup, ModelArgs};

#[derive(Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

fn shape(s: &[usize]) -> String {
    s.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

/// One row per layer. `*` marks layers whose output is a valid split point;
/// `default` marks the deepest one.
pub fn layer_table(model: &Model) -> String {
    let splits = model.valid_split_points();
    let default = model.default_split();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "model: {}  input: {}",
        model.name,
        shape(&model.input_shape)
    );
    let _ = writeln!(
        s,
        "{:>3}  {:<16} {:>10} {:>10} {:>9}  split",
        "#", "layer", "in", "out", "params"
    );
    for (i, (layer, shapes)) in model.layers.iter().zip(model.layer_shapes()).enumerate() {
        let mark = match i + 1 {
            n if Some(n) == default => format!("* {n} (default)"),
            n if splits.contains(&n) => format!("* {n}"),
            _ => String::new(),
        };
        let row = format!(
            "{:>3}  {:<16} {:>10} {:>10} {:>9}  {mark}",
            i,
            layer.kind(),
            shape(&shapes.input),
            shape(&shapes.output),
            layer.param_count(),
        );
        let _ = writeln!(s, "{}", row.trim_end());
    }
    let points = splits
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(", ");
    let _ = writeln!(s, "valid split points: {points}");
    let _ = writeln!(s, "classes: {}", model.num_classes());
    let _ = writeln!(s, "total params: {}", model.param_count());
    s
}

pub fn run(args: &InspectArgs) -> Result<()> {
    let model = setup::load(&args.model)?;
    print!("{}", layer_table(&model));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny8_table() {
        let model = rxai_core::make_reference_model(42, "tiny8").unwrap();
        let table = layer_table(&model);
        let rows: Vec<_> = table
            .lines()
            .filter(|l| l.trim_start().starts_with(char::is_numeric))
            .collect();
        assert_eq!(rows.len(), 8);
        assert!(rows[5].ends_with("* 6 (default)"));
        let sum: usize = rows
            .iter()
            .map(|r| {
                r.split_whitespace()
                    .nth(4)
                    .unwrap()
                    .parse::<usize>()
                    .unwrap()
            })
            .sum();
        assert_eq!(sum, model.param_count());
        assert!(table.contains(&format!("total params: {sum}")));
    }
}
