//! Architecture strings.
//!
//! Layers are joined by `-`; whitespace is ignored.
//!
//! | token        | layer                                              |
//! |--------------|----------------------------------------------------|
//! | `c{x}k{y}s{z}` | Conv2D, `x` output channels, kernel `y`, stride `z` |
//! | `MPk{y}s{z}` | spike max-pooling                                  |
//! | `APk{y}s{z}` | average pooling over features (voting layer)       |
//! | `BN`         | batch normalization                                |
//! | `FC{m}`      | fully connected, `m` output features               |
//! | `DP`, `DP{r}`| spiking dropout, default or explicit rate          |
//! | `LIF`, `SIT`, `SITB`, `IZH`, `QIF` | spiking neurons              |
//! | `{...}*n`    | the enclosed block repeated `n` times              |

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NeuronKind {
    Lif,
    Sit,
    SitBursting,
    Izhikevich,
    Qif,
}

impl NeuronKind {
    pub const ALL: [NeuronKind; 5] = [
        NeuronKind::Lif,
        NeuronKind::Sit,
        NeuronKind::SitBursting,
        NeuronKind::Izhikevich,
        NeuronKind::Qif,
    ];

    pub fn token(self) -> &'static str {
        match self {
            NeuronKind::Lif => "LIF",
            NeuronKind::Sit => "SIT",
            NeuronKind::SitBursting => "SITB",
            NeuronKind::Izhikevich => "IZH",
            NeuronKind::Qif => "QIF",
        }
    }

    /// Key of this neuron in [`crate::neuron::NeuronRegistry::builtin`].
    pub fn registry_name(self) -> &'static str {
        match self {
            NeuronKind::Lif => "lif",
            NeuronKind::Sit => "sit",
            NeuronKind::SitBursting => "sit-bursting",
            NeuronKind::Izhikevich => "izhikevich",
            NeuronKind::Qif => "qif",
        }
    }

    fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.token() == token)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    BatchNorm,
    Spiking(NeuronKind),
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    /// `None` takes the configured default rate.
    Dropout(Option<f64>),
    FullyConnected {
        features: usize,
    },
    AvgPoolVoting {
        kernel: usize,
        stride: usize,
    },
}

impl LayerSpec {
    pub fn is_spiking(&self) -> bool {
        matches!(self, LayerSpec::Spiking(_))
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
            } => write!(f, "c{out_channels}k{kernel}s{stride}"),
            LayerSpec::BatchNorm => f.write_str("BN"),
            LayerSpec::Spiking(kind) => f.write_str(kind.token()),
            LayerSpec::MaxPool { kernel, stride } => write!(f, "MPk{kernel}s{stride}"),
            LayerSpec::Dropout(None) => f.write_str("DP"),
            LayerSpec::Dropout(Some(rate)) => write!(f, "DP{rate}"),
            LayerSpec::FullyConnected { features } => write!(f, "FC{features}"),
            LayerSpec::AvgPoolVoting { kernel, stride } => write!(f, "APk{kernel}s{stride}"),
        }
    }
}

/// Joins layers with `-`. Repeats are already expanded, so the result parses
/// back to the same list.
pub fn format_architecture(layers: &[LayerSpec]) -> String {
    layers
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("-")
}

pub fn parse_architecture(spec: &str) -> Result<Vec<LayerSpec>> {
    let mut parser = Parser {
        src: spec.as_bytes(),
        pos: 0,
    };
    let layers = parser.sequence(0)?;
    parser.skip_ws();
    if parser.pos < parser.src.len() {
        return Err(parser.error("unexpected `}`"));
    }
    Ok(layers)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            position: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    /// Items separated by `-` until end of input or a closing `}`.
    fn sequence(&mut self, depth: usize) -> Result<Vec<LayerSpec>> {
        let mut layers = Vec::new();
        if matches!(self.peek(), None | Some(b'}')) {
            if depth > 0 && self.peek().is_some() {
                return Err(self.error("empty repeat block"));
            }
            return Ok(layers);
        }
        loop {
            self.item(depth, &mut layers)?;
            match self.peek() {
                Some(b'-') => self.pos += 1,
                None | Some(b'}') => return Ok(layers),
                Some(_) => return Err(self.error("expected `-` between layers")),
            }
        }
    }

    fn item(&mut self, depth: usize, out: &mut Vec<LayerSpec>) -> Result<()> {
        if self.peek() == Some(b'{') {
            self.pos += 1;
            let block = self.sequence(depth + 1)?;
            if self.peek() != Some(b'}') {
                return Err(self.error("unclosed `{`"));
            }
            self.pos += 1;
            if self.peek() != Some(b'*') {
                return Err(self.error("repeat block must be followed by `*n`"));
            }
            self.pos += 1;
            let times = self.number()?;
            for _ in 0..times {
                out.extend_from_slice(&block);
            }
            return Ok(());
        }
        let start = self.pos;
        while self.pos < self.src.len() && !matches!(self.src[self.pos], b'-' | b'{' | b'}')
            && !self.src[self.pos].is_ascii_whitespace()
        {
            self.pos += 1;
        }
        let token = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        let layer = layer_token(token).ok_or_else(|| Error::Parse {
            position: start,
            message: if token.is_empty() {
                "missing layer".to_string()
            } else {
                format!("unknown layer token `{token}`")
            },
        })?;
        out.push(layer);
        Ok(())
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse {
                position: start,
                message: "expected a repeat count".into(),
            })
    }
}

fn layer_token(token: &str) -> Option<LayerSpec> {
    if let Some(kind) = NeuronKind::from_token(token) {
        return Some(LayerSpec::Spiking(kind));
    }
    match token {
        "BN" => return Some(LayerSpec::BatchNorm),
        "DP" => return Some(LayerSpec::Dropout(None)),
        _ => {}
    }
    if let Some(rest) = token.strip_prefix("DP") {
        let rate: f64 = rest.parse().ok()?;
        return (0.0..1.0).contains(&rate).then_some(LayerSpec::Dropout(Some(rate)));
    }
    if let Some(rest) = token.strip_prefix("FC") {
        let features = positive(rest)?;
        return Some(LayerSpec::FullyConnected { features });
    }
    if let Some(rest) = token.strip_prefix("MP") {
        let (kernel, stride) = kernel_stride(rest)?;
        return Some(LayerSpec::MaxPool { kernel, stride });
    }
    if let Some(rest) = token.strip_prefix("AP") {
        let (kernel, stride) = kernel_stride(rest)?;
        return Some(LayerSpec::AvgPoolVoting { kernel, stride });
    }
    if let Some(rest) = token.strip_prefix('c') {
        let (channels, rest) = rest.split_once('k')?;
        let (kernel, stride) = kernel_stride(&format!("k{rest}"))?;
        return Some(LayerSpec::Conv {
            out_channels: positive(channels)?,
            kernel,
            stride,
        });
    }
    None
}

fn kernel_stride(s: &str) -> Option<(usize, usize)> {
    let (kernel, stride) = s.strip_prefix('k')?.split_once('s')?;
    Some((positive(kernel)?, positive(stride)?))
}

fn positive(s: &str) -> Option<usize> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok().filter(|&n| n > 0)
}

/// The six architectures of the reference experiments, one per dataset.
pub const REFERENCE_ARCHITECTURES: [(&str, &str); 6] = [
    (
        "MNIST",
        "c128k3s1-BN-LIF-MPk2s2-c128k3s1-BN-SIT-MPk2s2-DP-FC2048-LIF-DP-FC100-LIF-APk10s10",
    ),
    (
        "Fashion-MNIST",
        "c128k3s1-BN-LIF-MPk2s2-c128k3s1-BN-SIT-MPk2s2-DP-FC2048-LIF-DP-FC10-LIF",
    ),
    (
        "CIFAR-10",
        "c256k3s1-BN-LIF-c256k3s1-BN-SIT-c256k3s1-BN-LIF- MPk2s2-{c256k3s1-BN-LIF}*3- MPk2s2-DP-FC2048-LIF- DP-FC100-LIF-APk10s10",
    ),
    (
        "N-MNIST",
        "c128k3s1-BN-LIF-MPk2s2-c128k3s1-BN-SIT-MPk2s2-DP-FC2048-LIF-DP-FC100-LIF-APk10s10",
    ),
    (
        "CIFAR10-DVS",
        "c128k3s1-BN-LIF-MPk2s2-c128k3s1-BN-SIT-MPk2s2-{c128k3s1-BN-LIF-MPk2s2}*2-DP-FC512-LIF-DP-FC100-LIF-APk10s10",
    ),
    (
        "DVS128 Gesture",
        "{c128k3s1-BN-LIF-MPk2s2}*2-c128k3s1-BN-SIT-MPk2s2-{c128k3s1-BN-LIF-MPk2s2}*2-DP-FC512-LIF-DP-FC110-LIF-APk10s10",
    ),
];
