use serde::{Deserialize, Serialize};

use super::ModelError;

/// Classification target: CGPA in four bands, left-closed, with the top
/// band closed on the right as well.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CgpaBand {
    #[serde(rename = "<2.50")]
    Below250,
    #[serde(rename = "2.50-2.99")]
    From250,
    #[serde(rename = "3.00-3.49")]
    From300,
    #[serde(rename = "3.50-4.00")]
    From350,
}

/// Serializable band description stored in model artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
}

impl CgpaBand {
    pub const ALL: [CgpaBand; 4] = [
        CgpaBand::Below250,
        CgpaBand::From250,
        CgpaBand::From300,
        CgpaBand::From350,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CgpaBand::Below250 => "<2.50",
            CgpaBand::From250 => "2.50-2.99",
            CgpaBand::From300 => "3.00-3.49",
            CgpaBand::From350 => "3.50-4.00",
        }
    }

    /// `[lo, hi)` except the top band, which includes 4.0.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            CgpaBand::Below250 => (0.0, 2.5),
            CgpaBand::From250 => (2.5, 3.0),
            CgpaBand::From300 => (3.0, 3.5),
            CgpaBand::From350 => (3.5, 4.0),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<CgpaBand> {
        Self::ALL.get(i).copied()
    }

    pub fn labels() -> Vec<String> {
        Self::ALL.iter().map(|b| b.label().to_string()).collect()
    }

    pub fn specs() -> Vec<BandSpec> {
        Self::ALL
            .iter()
            .map(|b| {
                let (lo, hi) = b.bounds();
                BandSpec {
                    label: b.label().into(),
                    lo,
                    hi,
                }
            })
            .collect()
    }
}

impl std::fmt::Display for CgpaBand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

pub fn bin_cgpa(cgpa: f64) -> Result<CgpaBand, ModelError> {
    if !(0.0..=4.0).contains(&cgpa) {
        return Err(ModelError::OutOfRange(cgpa));
    }
    Ok(if cgpa < 2.5 {
        CgpaBand::Below250
    } else if cgpa < 3.0 {
        CgpaBand::From250
    } else if cgpa < 3.5 {
        CgpaBand::From300
    } else {
        CgpaBand::From350
    })
}
