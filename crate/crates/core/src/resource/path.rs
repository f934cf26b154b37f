use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// `/object[/instance[/resource]]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResourcePath {
    pub object_id: u16,
    pub instance_id: Option<u16>,
    pub resource_id: Option<u16>,
}

impl ResourcePath {
    pub fn object(object_id: u16) -> Self {
        ResourcePath {
            object_id,
            instance_id: None,
            resource_id: None,
        }
    }

    pub fn instance(object_id: u16, instance_id: u16) -> Self {
        ResourcePath {
            object_id,
            instance_id: Some(instance_id),
            resource_id: None,
        }
    }

    pub fn resource(object_id: u16, instance_id: u16, resource_id: u16) -> Self {
        ResourcePath {
            object_id,
            instance_id: Some(instance_id),
            resource_id: Some(resource_id),
        }
    }

    /// Builds a path from CoAP Uri-Path segments.
    pub fn from_segments<S: AsRef<str>>(segments: &[S]) -> Result<Self, PathParseError> {
        let nums = segments
            .iter()
            .map(|s| {
                let s = s.as_ref();
                if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(PathParseError::BadSegment(s.to_string()));
                }
                s.parse::<u16>()
                    .map_err(|_| PathParseError::BadSegment(s.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        match nums.as_slice() {
            [o] => Ok(Self::object(*o)),
            [o, i] => Ok(Self::instance(*o, *i)),
            [o, i, r] => Ok(Self::resource(*o, *i, *r)),
            _ => Err(PathParseError::Depth(nums.len())),
        }
    }

    pub fn segments(&self) -> Vec<String> {
        let mut out = vec![self.object_id.to_string()];
        if let Some(i) = self.instance_id {
            out.push(i.to_string());
            if let Some(r) = self.resource_id {
                out.push(r.to_string());
            }
        }
        out
    }

    /// Path below the object, `/instance/resource`, as used in notify calls.
    pub fn instance_suffix(&self) -> String {
        let mut s = String::new();
        if let Some(i) = self.instance_id {
            s.push_str(&format!("/{i}"));
            if let Some(r) = self.resource_id {
                s.push_str(&format!("/{r}"));
            }
        }
        s
    }

    /// True when `other` equals this path or lies below it.
    pub fn covers(&self, other: &ResourcePath) -> bool {
        self.object_id == other.object_id
            && self.instance_id.is_none_or(|i| other.instance_id == Some(i))
            && self.resource_id.is_none_or(|r| other.resource_id == Some(r))
    }
}

impl fmt::Display for ResourcePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "/{}{}", self.object_id, self.instance_suffix())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathParseError {
    #[error("path must start with `/`")]
    NoLeadingSlash,
    #[error("bad path segment `{0}`")]
    BadSegment(String),
    #[error("paths have 1 to 3 segments, got {0}")]
    Depth(usize),
}

impl FromStr for ResourcePath {
    type Err = PathParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rest = s.strip_prefix('/').ok_or(PathParseError::NoLeadingSlash)?;
        let segs: Vec<&str> = rest.split('/').collect();
        Self::from_segments(&segs)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn renders() {
        assert_eq!(ResourcePath::resource(1663, 0, 7).to_string(), "/1663/0/7");
        assert_eq!(ResourcePath::instance(1664, 1).to_string(), "/1664/1");
        assert_eq!(ResourcePath::object(1665).to_string(), "/1665");
        assert_eq!(ResourcePath::resource(1663, 0, 7).instance_suffix(), "/0/7");
    }

    #[test]
    fn rejects_garbage() {
        assert_eq!("1663/0".parse::<ResourcePath>(), Err(PathParseError::NoLeadingSlash));
        assert!("/1663/x".parse::<ResourcePath>().is_err());
        assert!("/1663/0/0/0".parse::<ResourcePath>().is_err());
        assert!("/70000".parse::<ResourcePath>().is_err());
        assert!("/".parse::<ResourcePath>().is_err());
        assert!("/+1".parse::<ResourcePath>().is_err());
    }

    #[test]
    fn covers_prefixes() {
        let r = ResourcePath::resource(1664, 1, 5850);
        assert!(ResourcePath::object(1664).covers(&r));
        assert!(ResourcePath::instance(1664, 1).covers(&r));
        assert!(!ResourcePath::instance(1664, 0).covers(&r));
        assert!(!ResourcePath::object(1663).covers(&r));
    }

    fn path() -> impl Strategy<Value = ResourcePath> {
        (any::<u16>(), prop::option::of((any::<u16>(), prop::option::of(any::<u16>())))).prop_map(
            |(o, rest)| match rest {
                None => ResourcePath::object(o),
                Some((i, None)) => ResourcePath::instance(o, i),
                Some((i, Some(r))) => ResourcePath::resource(o, i, r),
            },
        )
    }

    proptest! {
        #[test]
        fn render_parse_roundtrip(p in path()) {
            prop_assert_eq!(p.to_string().parse::<ResourcePath>().unwrap(), p);
            prop_assert_eq!(ResourcePath::from_segments(&p.segments()).unwrap(), p);
        }
    }
}
