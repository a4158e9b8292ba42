use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::LabanSeries;

/// One of the four controlled Laban components, in channel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    Weight,
    Time,
    Flow,
    Shape,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::Weight,
        Component::Time,
        Component::Flow,
        Component::Shape,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::Weight => "weight",
            Component::Time => "time",
            Component::Flow => "flow",
            Component::Shape => "shape",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == name.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown Laban component `{name}`")))
    }

    /// `(small tag, small scale, large tag, large scale)`.
    pub fn tags(self) -> (&'static str, f64, &'static str, f64) {
        match self {
            Component::Weight => ("light", 0.5, "strong", 1.5),
            Component::Time => ("sustained", 0.8, "sudden", 1.2),
            Component::Flow => ("bound", 0.8, "free", 1.2),
            Component::Shape => ("near", 0.5, "far", 1.5),
        }
    }

    pub fn small_tag(self) -> &'static str {
        self.tags().0
    }

    pub fn large_tag(self) -> &'static str {
        self.tags().2
    }
}

/// Per-channel multipliers `[Weight, Time, Flow, Shape]`; 1.0 leaves a
/// channel unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleVector([f64; 4]);

impl Default for ScaleVector {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl ScaleVector {
    pub const IDENTITY: ScaleVector = ScaleVector([1.0; 4]);

    pub fn new(values: [f64; 4]) -> Result<Self> {
        if values.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "scale components must be positive, got {values:?}"
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> [f64; 4] {
        self.0
    }

    pub fn with(mut self, component: Component, value: f64) -> Result<Self> {
        self.0[component.index()] = value;
        Self::new(self.0)
    }

    pub fn is_identity(&self) -> bool {
        self.0 == [1.0; 4]
    }
}

fn lookup(tag: &str) -> Option<(Component, f64)> {
    let tag = tag.trim().to_ascii_lowercase();
    Component::ALL.into_iter().find_map(|c| {
        let (small, s, large, l) = c.tags();
        if tag == small {
            Some((c, s))
        } else if tag == large {
            Some((c, l))
        } else {
            None
        }
    })
}

/// Maps Laban tags to a scale vector; untagged components stay at 1.
pub fn tags_to_scale<S: AsRef<str>>(tags: &[S]) -> Result<ScaleVector> {
    let mut values = [1.0; 4];
    let mut seen: [Option<String>; 4] = Default::default();
    for tag in tags {
        let tag = tag.as_ref();
        let (component, scale) = lookup(tag).ok_or_else(|| Error::UnknownTag(tag.to_string()))?;
        let slot = &mut seen[component.index()];
        if let Some(first) = slot {
            return Err(Error::ConflictingTags {
                component: component.name(),
                first: first.clone(),
                second: tag.to_string(),
            });
        }
        *slot = Some(tag.to_string());
        values[component.index()] = scale;
    }
    ScaleVector::new(values)
}

/// `target[t][i] = s[i] * baseline[t][i]`.
pub fn make_target(baseline: &LabanSeries, s: &ScaleVector) -> LabanSeries {
    let s = s.values();
    LabanSeries::new(
        baseline
            .values()
            .iter()
            .map(|v| [s[0] * v[0], s[1] * v[1], s[2] * v[2], s[3] * v[3]])
            .collect(),
    )
    .expect("baseline series is non-empty")
}
