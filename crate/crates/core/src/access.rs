//! Role-based access policy: which role may read, update, or validate
//! which layers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Layer, LayerKind, Sensitivity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Admin,
    Planner,
    Crew,
    Public,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Admin, Role::Planner, Role::Crew, Role::Public];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Admin => "admin",
            Role::Planner => "planner",
            Role::Crew => "crew",
            Role::Public => "public",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown role `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    ReadPublic,
    ReadSensitive,
    Update,
    ResolveFlags,
}

impl Capability {
    pub const ALL: [Capability; 4] = [
        Capability::ReadPublic,
        Capability::ReadSensitive,
        Capability::Update,
        Capability::ResolveFlags,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Capability::ReadPublic => "read_public",
            Capability::ReadSensitive => "read_sensitive",
            Capability::Update => "update",
            Capability::ResolveFlags => "resolve_flags",
        }
    }
}

impl FromStr for Capability {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Capability::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown capability `{s}`"))
    }
}

/// A capability on one layer kind, or on every kind (`*`). Written as
/// `capability:kind`, e.g. `update:pipes` or `read_public:*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Grant {
    pub capability: Capability,
    pub kind: Option<LayerKind>,
}

impl Grant {
    pub fn any(capability: Capability) -> Self {
        Self {
            capability,
            kind: None,
        }
    }

    fn covers(&self, capability: Capability, kind: LayerKind) -> bool {
        self.capability == capability && self.kind.is_none_or(|k| k == kind)
    }
}

impl TryFrom<String> for Grant {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        let (cap, scope) = s.split_once(':').unwrap_or((&s, "*"));
        let kind = match scope {
            "*" => None,
            other => Some(other.parse()?),
        };
        Ok(Grant {
            capability: cap.parse()?,
            kind,
        })
    }
}

impl From<Grant> for String {
    fn from(g: Grant) -> Self {
        format!("{}:{}", g.capability.as_str(), g.kind.map_or("*", |k| k.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    /// The role holds no grant for this capability on this layer kind.
    NoGrant,
    /// The layer is sensitive and the role may not read sensitive data.
    SensitiveLayer,
}

impl DenyReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DenyReason::NoGrant => "no_grant",
            DenyReason::SensitiveLayer => "sensitive_layer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", content = "reason", rename_all = "snake_case")]
pub enum Decision {
    Allow,
    Deny(DenyReason),
}

impl Decision {
    pub fn is_allowed(&self) -> bool {
        matches!(self, Decision::Allow)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("role `public` may not hold `{0}`")]
    ForbiddenGrant(String),
    #[error("token maps to unknown role: {0}")]
    BadToken(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub token: Option<String>,
    pub role: Role,
}

/// Grant table plus the static token-to-role map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy", into = "RawPolicy")]
pub struct AccessPolicy {
    grants: BTreeMap<Role, BTreeSet<Grant>>,
    tokens: BTreeMap<String, Role>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawPolicy {
    #[serde(default)]
    grants: BTreeMap<Role, BTreeSet<Grant>>,
    #[serde(default)]
    tokens: BTreeMap<String, Role>,
}

impl TryFrom<RawPolicy> for AccessPolicy {
    type Error = PolicyError;

    fn try_from(raw: RawPolicy) -> Result<Self, Self::Error> {
        AccessPolicy::new(raw.grants, raw.tokens)
    }
}

impl From<AccessPolicy> for RawPolicy {
    fn from(p: AccessPolicy) -> Self {
        RawPolicy {
            grants: p.grants,
            tokens: p.tokens,
        }
    }
}

impl Default for AccessPolicy {
    /// admin: everything; planner: read all; crew: read all, update,
    /// resolve flags; public: read public layers only.
    fn default() -> Self {
        use Capability::*;
        let all = |caps: &[Capability]| caps.iter().map(|c| Grant::any(*c)).collect();
        let grants = BTreeMap::from([
            (Role::Admin, all(&Capability::ALL)),
            (Role::Planner, all(&[ReadPublic, ReadSensitive])),
            (Role::Crew, all(&[ReadPublic, ReadSensitive, Update, ResolveFlags])),
            (Role::Public, all(&[ReadPublic])),
        ]);
        AccessPolicy {
            grants,
            tokens: BTreeMap::new(),
        }
    }
}

impl AccessPolicy {
    pub fn new(
        grants: BTreeMap<Role, BTreeSet<Grant>>,
        tokens: BTreeMap<String, Role>,
    ) -> Result<Self, PolicyError> {
        if let Some(bad) = grants
            .get(&Role::Public)
            .into_iter()
            .flatten()
            .find(|g| g.capability != Capability::ReadPublic)
        {
            return Err(PolicyError::ForbiddenGrant(String::from(*bad)));
        }
        Ok(Self { grants, tokens })
    }

    pub fn with_tokens(mut self, tokens: BTreeMap<String, Role>) -> Self {
        self.tokens = tokens;
        self
    }

    pub fn tokens(&self) -> &BTreeMap<String, Role> {
        &self.tokens
    }

    /// Resolve a bearer token. Missing or unknown tokens act as `public`.
    pub fn session(&self, token: Option<&str>) -> Session {
        let role = token
            .and_then(|t| self.tokens.get(t))
            .copied()
            .unwrap_or(Role::Public);
        Session {
            token: token.map(str::to_string),
            role,
        }
    }

    pub fn holds(&self, role: Role, capability: Capability, kind: LayerKind) -> bool {
        self.grants
            .get(&role)
            .is_some_and(|gs| gs.iter().any(|g| g.covers(capability, kind)))
    }

    /// Pure function of role, capability, and the layer's kind and
    /// sensitivity. Every capability on a sensitive layer additionally
    /// needs `read_sensitive` for that kind.
    pub fn authorize(&self, role: Role, capability: Capability, layer: &Layer) -> Decision {
        if !self.holds(role, capability, layer.kind) {
            return Decision::Deny(DenyReason::NoGrant);
        }
        if layer.sensitivity == Sensitivity::Sensitive
            && !self.holds(role, Capability::ReadSensitive, layer.kind)
        {
            return Decision::Deny(DenyReason::SensitiveLayer);
        }
        Decision::Allow
    }

    /// Read access: `read_public` for the kind, plus `read_sensitive` when
    /// the layer is sensitive.
    pub fn can_read(&self, role: Role, layer: &Layer) -> Decision {
        self.authorize(role, Capability::ReadPublic, layer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pipes() -> Layer {
        Layer::new("pipes", LayerKind::Pipes, Sensitivity::Sensitive)
    }

    #[test]
    fn spec_cases() {
        let policy = AccessPolicy::default();
        assert_eq!(
            policy.authorize(Role::Public, Capability::ReadSensitive, &pipes()),
            Decision::Deny(DenyReason::NoGrant)
        );
        assert_eq!(
            policy.authorize(Role::Public, Capability::ReadPublic, &pipes()),
            Decision::Deny(DenyReason::SensitiveLayer)
        );
        assert!(policy.authorize(Role::Crew, Capability::ResolveFlags, &pipes()).is_allowed());
        for cap in Capability::ALL {
            assert!(policy.authorize(Role::Admin, cap, &pipes()).is_allowed());
        }
        assert!(!policy.authorize(Role::Planner, Capability::ResolveFlags, &pipes()).is_allowed());
    }

    #[test]
    fn unknown_token_is_public() {
        let policy = AccessPolicy::default()
            .with_tokens(BTreeMap::from([("t-crew".to_string(), Role::Crew)]));
        assert_eq!(policy.session(Some("t-crew")).role, Role::Crew);
        assert_eq!(policy.session(Some("nope")).role, Role::Public);
        assert_eq!(policy.session(None).role, Role::Public);
    }

    #[test]
    fn public_cannot_be_granted_update() {
        let raw = r#"{"grants": {"public": ["read_public:*", "update:pipes"]}}"#;
        let err = serde_json::from_str::<AccessPolicy>(raw).unwrap_err();
        assert!(err.to_string().contains("update:pipes"), "{err}");
    }

    #[test]
    fn grants_round_trip_as_strings() {
        let policy = AccessPolicy::default();
        let text = serde_json::to_string(&policy).unwrap();
        assert!(text.contains("\"read_public:*\""));
        assert_eq!(serde_json::from_str::<AccessPolicy>(&text).unwrap(), policy);
    }
}
