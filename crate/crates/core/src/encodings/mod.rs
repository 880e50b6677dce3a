//! Image genomes: direct per-pixel genes and CPPN graphs.

mod cppn;
mod direct;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use cppn::{
    cppn_init, cppn_mutate, cppn_render, sigmoid, Activation, ActivationParams, Connection, CppnConfig, CppnGenome,
    Node, NodeKind, INPUT_BIAS, INPUT_X, INPUT_Y,
};
pub use direct::{
    direct_init, direct_mutate, mutation_rate, perturb_gene, polynomial_delta, DirectGenome, MutationSchedule,
};

use crate::dataset::Image;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Direct,
    Cppn,
}

impl std::str::FromStr for Encoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "direct" => Ok(Encoding::Direct),
            "cppn" => Ok(Encoding::Cppn),
            other => Err(Error::Range(format!("unknown encoding {other:?} (expected direct or cppn)"))),
        }
    }
}

impl std::fmt::Display for Encoding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Encoding::Direct => "direct",
            Encoding::Cppn => "cppn",
        })
    }
}

/// Everything needed to create, mutate, and render genomes of one encoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub encoding: Encoding,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    #[serde(default)]
    pub schedule: MutationSchedule,
    #[serde(default)]
    pub cppn: CppnConfig,
}

impl EncodingConfig {
    pub fn new(encoding: Encoding, width: usize, height: usize, channels: usize) -> Self {
        EncodingConfig {
            encoding,
            width,
            height,
            channels,
            schedule: MutationSchedule::default(),
            cppn: CppnConfig::default(),
        }
    }

    pub fn mnist(encoding: Encoding) -> Self {
        EncodingConfig::new(encoding, 28, 28, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Range("genome images need positive dimensions".into()));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Range(format!("channels must be 1 or 3, got {}", self.channels)));
        }
        if !(self.schedule.initial_rate > 0.0 && self.schedule.initial_rate <= 1.0) || self.schedule.eta < 0.0 {
            return Err(Error::Range("mutation schedule out of range".into()));
        }
        self.cppn.validate()
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Genome> {
        Ok(match self.encoding {
            Encoding::Direct => Genome::Direct(direct_init(self.width, self.height, self.channels, rng)?),
            Encoding::Cppn => Genome::Cppn(cppn_init(self.channels, &self.cppn, rng)?),
        })
    }

    pub fn mutate<R: Rng + ?Sized>(&self, g: &Genome, generation: u64, rng: &mut R) -> Genome {
        match g {
            Genome::Direct(d) => Genome::Direct(direct_mutate(d, generation, &self.schedule, rng)),
            Genome::Cppn(c) => Genome::Cppn(cppn_mutate(c, &self.cppn, rng)),
        }
    }

    pub fn render(&self, g: &Genome) -> Image {
        g.render(self.width, self.height)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "encoding", rename_all = "lowercase")]
pub enum Genome {
    Direct(DirectGenome),
    Cppn(CppnGenome),
}

impl Genome {
    pub fn encoding(&self) -> Encoding {
        match self {
            Genome::Direct(_) => Encoding::Direct,
            Genome::Cppn(_) => Encoding::Cppn,
        }
    }

    /// Direct genomes have a fixed size and ignore the requested resolution.
    pub fn render(&self, width: usize, height: usize) -> Image {
        match self {
            Genome::Direct(d) => d.render(),
            Genome::Cppn(c) => cppn_render(c, width, height),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("genomes always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(format!("genome: {e}")))
    }
}

/// Convert an HSV image (hue byte spans the full circle) to RGB.
pub fn hsv_to_rgb(image: &Image) -> Result<Image> {
    if image.channels() != 3 {
        return Err(Error::shape(format!("HSV conversion needs 3 channels, got {}", image.channels())));
    }
    let mut data = Vec::with_capacity(image.data().len());
    for px in image.data().chunks_exact(3) {
        let h = f64::from(px[0]) / 255.0 * 6.0;
        let s = f64::from(px[1]) / 255.0;
        let v = f64::from(px[2]) / 255.0;
        let c = v * s;
        let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
        let (r, g, b) = match h as u32 {
            0 => (c, x, 0.0),
            1 => (x, c, 0.0),
            2 => (0.0, c, x),
            3 => (0.0, x, c),
            4 => (x, 0.0, c),
            _ => (c, 0.0, x),
        };
        let m = v - c;
        data.extend([r, g, b].map(|u| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    Image::new(image.width(), image.height(), 3, data)
}
