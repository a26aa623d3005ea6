use std::fmt;

use crate::network::Network;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCompression {
    pub name: String,
    pub weights: usize,
    pub kept_weights: usize,
    pub biases: usize,
}

impl LayerCompression {
    /// Weights plus biases.
    pub fn total(&self) -> usize {
        self.weights + self.biases
    }

    /// Mask-one weights plus biases (never pruned).
    pub fn kept(&self) -> usize {
        self.kept_weights + self.biases
    }

    pub fn percent(&self) -> f64 {
        100.0 * self.kept() as f64 / self.total() as f64
    }
}

/// Per-layer parameter accounting of a masked network.
///
/// Counts follow the mask, so a weight that happens to be exactly zero but is
/// unmasked still counts as kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressionReport {
    pub layers: Vec<LayerCompression>,
}

pub fn compression_report(net: &Network) -> CompressionReport {
    let layers = net
        .learnable_names()
        .into_iter()
        .zip(net.params.iter().zip(&net.biases))
        .map(|(name, (p, b))| LayerCompression {
            name: name.to_string(),
            weights: p.len(),
            kept_weights: p.kept(),
            biases: b.len(),
        })
        .collect();
    CompressionReport { layers }
}

impl CompressionReport {
    pub fn total(&self) -> usize {
        self.layers.iter().map(LayerCompression::total).sum()
    }

    pub fn kept(&self) -> usize {
        self.layers.iter().map(LayerCompression::kept).sum()
    }

    pub fn pruned(&self) -> usize {
        self.total() - self.kept()
    }

    pub fn percent(&self) -> f64 {
        100.0 * self.kept() as f64 / self.total() as f64
    }

    /// Total over kept parameters.
    pub fn compression_rate(&self) -> f64 {
        self.total() as f64 / self.kept() as f64
    }

    /// Same ratio restricted to connection weights.
    pub fn weight_compression_rate(&self) -> f64 {
        let w: usize = self.layers.iter().map(|l| l.weights).sum();
        let k: usize = self.layers.iter().map(|l| l.kept_weights).sum();
        w as f64 / k as f64
    }

    /// `layer,total,kept,percent` with a closing `total` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,total,kept,percent\n");
        for l in &self.layers {
            out.push_str(&format!("{},{},{},{:.3}\n", l.name, l.total(), l.kept(), l.percent()));
        }
        out.push_str(&format!("total,{},{},{:.3}\n", self.total(), self.kept(), self.percent()));
        out
    }
}

fn human(n: usize) -> String {
    if n >= 1_000_000 {
        format!("{:.2}M", n as f64 / 1e6)
    } else if n >= 1000 {
        format!("{:.1}K", n as f64 / 1e3)
    } else {
        n.to_string()
    }
}

impl fmt::Display for CompressionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>10} {:>10} {:>9}", "Layer", "Params.", "Kept", "Params.%")?;
        for l in &self.layers {
            writeln!(
                f,
                "{:<10} {:>10} {:>10} {:>8.2}%",
                l.name,
                human(l.total()),
                human(l.kept()),
                l.percent()
            )?;
        }
        writeln!(
            f,
            "{:<10} {:>10} {:>10} {:>8.2}%",
            "Total",
            human(self.total()),
            human(self.kept()),
            self.percent()
        )?;
        write!(f, "Compression: {:.1}x", self.compression_rate())
    }
}
