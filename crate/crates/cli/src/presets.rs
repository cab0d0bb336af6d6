//! Benchmark layers and network shapes used by the reference evaluation.

use permdnn_core::LayerShape;
use permdnn_sim::LayerWorkload;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub block: usize,
    pub activation_density: f64,
}

/// The six evaluated FC layers. NMT inputs are fully dense.
pub const PRESETS: [Preset; 6] = [
    Preset { name: "alex-fc6", rows: 4096, cols: 9216, block: 10, activation_density: 0.358 },
    Preset { name: "alex-fc7", rows: 4096, cols: 4096, block: 10, activation_density: 0.206 },
    Preset { name: "alex-fc8", rows: 1000, cols: 4096, block: 4, activation_density: 0.444 },
    Preset { name: "nmt-1", rows: 2048, cols: 1024, block: 8, activation_density: 1.0 },
    Preset { name: "nmt-2", rows: 2048, cols: 1536, block: 8, activation_density: 1.0 },
    Preset { name: "nmt-3", rows: 2048, cols: 2048, block: 8, activation_density: 1.0 },
];

pub fn preset(name: &str) -> Option<&'static Preset> {
    let key = name.to_ascii_lowercase().replace('_', "-");
    PRESETS.iter().find(|p| p.name == key)
}

impl Preset {
    pub fn workload(&self) -> LayerWorkload {
        LayerWorkload::new(self.name, self.rows, self.cols, self.block, self.activation_density)
            .expect("preset table entries are valid")
    }
}

/// AlexNet's three FC layers at block sizes 10, 10 and 4.
pub fn alexnet_fc() -> Vec<LayerShape> {
    vec![
        LayerShape::fc("fc6", 4096, 9216, 10),
        LayerShape::fc("fc7", 4096, 4096, 10),
        LayerShape::fc("fc8", 1000, 4096, 4),
    ]
}

/// 32 FC matrices of the NMT model at p = 8, drawn from its three shapes.
/// The per-shape counts are not published; 12/4/16 reproduces the stated
/// dense and compressed sizes.
pub fn nmt_fc() -> Vec<LayerShape> {
    let mut v = Vec::with_capacity(32);
    for (count, p) in [(12, &PRESETS[3]), (4, &PRESETS[4]), (16, &PRESETS[5])] {
        for i in 0..count {
            v.push(LayerShape::fc(format!("{}.{i}", p.name), p.rows, p.cols, 8));
        }
    }
    v
}

pub fn network(name: &str) -> Option<Vec<LayerShape>> {
    match name.to_ascii_lowercase().as_str() {
        "alexnet" | "alexnet-fc" => Some(alexnet_fc()),
        "nmt" => Some(nmt_fc()),
        other => preset(other).map(|p| vec![LayerShape::fc(p.name, p.rows, p.cols, p.block)]),
    }
}
