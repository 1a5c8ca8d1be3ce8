use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::painter::{MeanFillPainter, OraclePainter, Painter, RemotePainter};
use crate::projector::{IdentityProjector, PatchStatsProjector, Projector, RemoteProjector};
use crate::protocol::DEFAULT_CANVAS;
use crate::scene::SceneSpec;

/// `oracle`, `meanfill` or `remote:<url>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PainterSpec {
    Oracle,
    MeanFill,
    Remote(String),
}

/// `identity`, `patchstats[:<window>]` or `remote:<url>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProjectorSpec {
    Identity,
    PatchStats(usize),
    Remote(String),
}

fn remote_url(s: &str) -> Option<Result<String>> {
    let url = s.strip_prefix("remote:")?;
    Some(
        if url.starts_with("http://") || url.starts_with("https://") {
            Ok(url.to_string())
        } else {
            Err(Error::InvalidConfig(format!(
                "remote backend needs an http(s) URL, got {url:?}"
            )))
        },
    )
}

impl FromStr for PainterSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(url) = remote_url(s) {
            return url.map(Self::Remote);
        }
        match s {
            "oracle" => Ok(Self::Oracle),
            "meanfill" => Ok(Self::MeanFill),
            _ => Err(Error::InvalidConfig(format!(
                "unknown painter {s:?} (oracle|meanfill|remote:URL)"
            ))),
        }
    }
}

impl FromStr for ProjectorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(url) = remote_url(s) {
            return url.map(Self::Remote);
        }
        match s.split_once(':') {
            None if s == "identity" => Ok(Self::Identity),
            None if s == "patchstats" => Ok(Self::PatchStats(PatchStatsProjector::DEFAULT_WINDOW)),
            Some(("patchstats", w)) => w
                .parse()
                .ok()
                .filter(|w| *w > 0)
                .map(Self::PatchStats)
                .ok_or_else(|| Error::InvalidConfig(format!("bad patchstats window {w:?}"))),
            _ => Err(Error::InvalidConfig(format!(
                "unknown projector {s:?} (identity|patchstats[:W]|remote:URL)"
            ))),
        }
    }
}

impl fmt::Display for PainterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Oracle => f.write_str("oracle"),
            Self::MeanFill => f.write_str("meanfill"),
            Self::Remote(u) => write!(f, "remote:{u}"),
        }
    }
}

impl fmt::Display for ProjectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => f.write_str("identity"),
            Self::PatchStats(w) => write!(f, "patchstats:{w}"),
            Self::Remote(u) => write!(f, "remote:{u}"),
        }
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                String::deserialize(d)?
                    .parse()
                    .map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(PainterSpec);
string_serde!(ProjectorSpec);

impl PainterSpec {
    /// The oracle needs the scene the image was rendered from.
    pub fn build(&self, scene: Option<&SceneSpec>, timeout: Duration) -> Result<Box<dyn Painter>> {
        Ok(match self {
            Self::Oracle => {
                let scene = scene.ok_or_else(|| {
                    Error::InvalidConfig("the oracle painter needs a scene description".into())
                })?;
                Box::new(OraclePainter::new(scene.clone()))
            }
            Self::MeanFill => Box::new(MeanFillPainter),
            Self::Remote(url) => {
                Box::new(RemotePainter::with_options(url, timeout, DEFAULT_CANVAS)?)
            }
        })
    }
}

impl ProjectorSpec {
    pub fn build(&self, timeout: Duration) -> Result<Box<dyn Projector>> {
        Ok(match self {
            Self::Identity => Box::new(IdentityProjector),
            Self::PatchStats(w) => Box::new(PatchStatsProjector::new(*w)?),
            Self::Remote(url) => {
                Box::new(RemoteProjector::with_options(url, timeout, DEFAULT_CANVAS)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backends {
    pub painter: PainterSpec,
    pub projector: ProjectorSpec,
    #[serde(with = "secs")]
    pub timeout: Duration,
}

impl Default for Backends {
    fn default() -> Self {
        Self {
            painter: PainterSpec::Oracle,
            projector: ProjectorSpec::Identity,
            timeout: Duration::from_secs(120),
        }
    }
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}
