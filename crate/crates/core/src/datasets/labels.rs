use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "4G")]
    Lte,
    #[serde(rename = "5G NR")]
    Nr,
    #[serde(rename = "802.11a")]
    Wifi,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Lte, Protocol::Nr, Protocol::Wifi];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Lte => "4G",
            Protocol::Nr => "5G NR",
            Protocol::Wifi => "802.11a",
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "4G" | "4G LTE" | "LTE" => Ok(Protocol::Lte),
            "5G NR" | "5G" | "5G-NR" | "NR" => Ok(Protocol::Nr),
            "802.11a" | "IEEE 802.11a" | "WiFi" | "wifi" => Ok(Protocol::Wifi),
            other => Err(Error::Vocabulary {
                kind: "protocol",
                value: other.to_string(),
            }),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transmitter {
    Bes,
    Browning,
    Honors,
    Meb,
}

impl Transmitter {
    pub const ALL: [Transmitter; 4] = [
        Transmitter::Bes,
        Transmitter::Browning,
        Transmitter::Honors,
        Transmitter::Meb,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Transmitter::Bes => "bes",
            Transmitter::Browning => "browning",
            Transmitter::Honors => "honors",
            Transmitter::Meb => "meb",
        }
    }
}

impl FromStr for Transmitter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bes" | "behavioral" => Ok(Transmitter::Bes),
            "browning" => Ok(Transmitter::Browning),
            "honors" => Ok(Transmitter::Honors),
            "meb" => Ok(Transmitter::Meb),
            _ => Err(Error::Vocabulary {
                kind: "transmitter",
                value: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Transmitter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
