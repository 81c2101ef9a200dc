//! Cross-modality fuseLinks and their deployment.
//!
//! A link carries a fuseFilter of shape `c_input x c_output x w x h` that maps
//! the active layer's output channels onto the passive layer's input
//! channels. The fused feature is added element-wise to the passive layer's
//! own input. When the two spatial sizes differ the filter is assumed to run
//! with the stride (or after the nearest-neighbor resize) that aligns them;
//! the resize itself costs no MACs.
//!
//! Active endpoints attach to the last layer of their block, passive
//! endpoints to the first layer of theirs. Distance is
//! `passive.level - active.level` and must be at least 1, which keeps the
//! fused task graph acyclic even for mirrored pairs.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netspec::{DualNetwork, LayerSpec, Modality};

/// Upper bound on the number of deployments a single enumeration may emit.
pub const MAX_ENUMERATED_DEPLOYMENTS: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinkError {
    #[error("same modality: both endpoints are {0}")]
    SameModality(Modality),
    #[error("distance < 1: passive level {passive} is not after active level {active}")]
    DistanceTooSmall { active: usize, passive: usize },
    #[error("unresolvable endpoint: {modality} level {level} (network has {blocks} blocks)")]
    Unresolvable {
        modality: Modality,
        level: usize,
        blocks: usize,
    },
    #[error("fuseFilter kernel must be at least 1x1, got {0}x{1}")]
    ZeroKernel(u64, u64),
    #[error("enumeration policy has an empty {0} set")]
    EmptyPolicy(&'static str),
    #[error("policy level {level} is outside the network ({blocks} blocks)")]
    InvalidLevel { level: usize, blocks: usize },
    #[error("enumeration would produce more than {MAX_ENUMERATED_DEPLOYMENTS} deployments")]
    TooManyDeployments,
    #[error("deployment '{0}' does not belong to the given network")]
    MixedNetworks(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FilterDims {
    pub c_input: u64,
    pub c_output: u64,
    pub w: u64,
    pub h: u64,
}

impl FilterDims {
    pub fn param_count(&self) -> u64 {
        self.c_input * self.c_output * self.w * self.h
    }
}

/// Dimensions the fuseFilter needs to bridge `active_layer` into `passive_layer`.
pub fn derive_fusefilter(
    active_layer: &LayerSpec,
    passive_layer: &LayerSpec,
    kernel: (u64, u64),
) -> FilterDims {
    FilterDims {
        c_input: active_layer.out_channels,
        c_output: passive_layer.in_channels,
        w: kernel.0,
        h: kernel.1,
    }
}

/// A (modality, level) pair as written in deployment files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointRef {
    pub modality: Modality,
    pub level: usize,
}

impl EndpointRef {
    pub fn new(modality: Modality, level: usize) -> Self {
        EndpointRef { modality, level }
    }
}

impl fmt::Display for EndpointRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.modality, self.level)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LinkEndpoint {
    pub modality: Modality,
    pub level: usize,
    pub layer_id: String,
}

impl LinkEndpoint {
    pub fn as_ref(&self) -> EndpointRef {
        EndpointRef::new(self.modality, self.level)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FuseLink {
    pub id: String,
    pub active: LinkEndpoint,
    pub passive: LinkEndpoint,
    pub distance: i64,
    pub filter: FilterDims,
}

impl FuseLink {
    pub fn endpoint_pair(&self) -> (EndpointRef, EndpointRef) {
        (self.active.as_ref(), self.passive.as_ref())
    }

    /// The active layer (last layer of the active block).
    pub fn active_layer<'a>(&self, nets: &'a DualNetwork) -> Option<&'a LayerSpec> {
        nets.get(self.active.modality).last_layer(self.active.level)
    }

    /// The passive layer (first layer of the passive block).
    pub fn passive_layer<'a>(&self, nets: &'a DualNetwork) -> Option<&'a LayerSpec> {
        nets.get(self.passive.modality).first_layer(self.passive.level)
    }

    fn mirror_pair(&self) -> (EndpointRef, EndpointRef) {
        (
            EndpointRef::new(self.passive.modality, self.active.level),
            EndpointRef::new(self.active.modality, self.passive.level),
        )
    }
}

pub fn default_link_id(active: EndpointRef, passive: EndpointRef) -> String {
    format!("{active}-{passive}")
}

/// Builds a link between two blocks, deriving distance and fuseFilter shape.
pub fn make_link(
    active: EndpointRef,
    passive: EndpointRef,
    nets: &DualNetwork,
    kernel: (u64, u64),
) -> Result<FuseLink, LinkError> {
    if active.modality == passive.modality {
        return Err(LinkError::SameModality(active.modality));
    }
    if kernel.0 == 0 || kernel.1 == 0 {
        return Err(LinkError::ZeroKernel(kernel.0, kernel.1));
    }
    let resolve = |ep: EndpointRef, last: bool| {
        let net = nets.get(ep.modality);
        let layer = if last {
            net.last_layer(ep.level)
        } else {
            net.first_layer(ep.level)
        };
        layer.ok_or(LinkError::Unresolvable {
            modality: ep.modality,
            level: ep.level,
            blocks: net.block_count(),
        })
    };
    let active_layer = resolve(active, true)?;
    let passive_layer = resolve(passive, false)?;
    if passive.level <= active.level {
        return Err(LinkError::DistanceTooSmall {
            active: active.level,
            passive: passive.level,
        });
    }
    Ok(FuseLink {
        id: default_link_id(active, passive),
        active: LinkEndpoint {
            modality: active.modality,
            level: active.level,
            layer_id: active_layer.id.clone(),
        },
        passive: LinkEndpoint {
            modality: passive.modality,
            level: passive.level,
            layer_id: passive_layer.id.clone(),
        },
        distance: passive.level as i64 - active.level as i64,
        filter: derive_fusefilter(active_layer, passive_layer, kernel),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Deployment {
    pub name: String,
    pub links: Vec<FuseLink>,
}

impl Deployment {
    pub fn new(name: impl Into<String>, links: Vec<FuseLink>) -> Self {
        Deployment {
            name: name.into(),
            links,
        }
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Deployment::new(name, Vec::new())
    }

    pub fn link_ids(&self) -> Vec<String> {
        self.links.iter().map(|l| l.id.clone()).collect()
    }

    pub fn to_doc(&self) -> DeploymentDoc {
        DeploymentDoc {
            name: self.name.clone(),
            links: self
                .links
                .iter()
                .map(|l| LinkDoc {
                    id: l.id.clone(),
                    active: l.active.as_ref(),
                    passive: l.passive.as_ref(),
                    kernel: [l.filter.w, l.filter.h],
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("deployment serialization is infallible")
    }
}

/// On-disk deployment. Filter dimensions are derived when resolving.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentDoc {
    pub name: String,
    pub links: Vec<LinkDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    pub id: String,
    pub active: EndpointRef,
    pub passive: EndpointRef,
    #[serde(default = "default_kernel")]
    pub kernel: [u64; 2],
}

fn default_kernel() -> [u64; 2] {
    [1, 1]
}

pub fn parse_deployment(text: &str) -> Result<DeploymentDoc, serde_json::Error> {
    serde_json::from_str(text)
}

impl DeploymentDoc {
    /// Resolves every link against `nets`, collecting all violations.
    pub fn resolve(&self, nets: &DualNetwork) -> Result<Deployment, ValidationReport> {
        let mut report = ValidationReport::default();
        let mut links = Vec::with_capacity(self.links.len());
        for doc in &self.links {
            match make_link(doc.active, doc.passive, nets, (doc.kernel[0], doc.kernel[1])) {
                Ok(mut link) => {
                    link.id = doc.id.clone();
                    links.push(link);
                }
                Err(e) => report.push(&doc.id, ViolationKind::from_link_error(&e), e.to_string()),
            }
        }
        let dep = Deployment::new(self.name.clone(), links);
        report.violations.extend(validate_deployment(&dep, nets).violations);
        if report.is_clean() {
            Ok(dep)
        } else {
            Err(report)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    SameModality,
    DistanceTooSmall,
    DistanceInconsistent,
    UnresolvableEndpoint,
    EndpointLayerMismatch,
    FilterChannelMismatch,
    ZeroKernel,
    DuplicateEndpointPair,
    DuplicateLinkId,
}

impl ViolationKind {
    fn from_link_error(e: &LinkError) -> Self {
        match e {
            LinkError::SameModality(_) => ViolationKind::SameModality,
            LinkError::DistanceTooSmall { .. } => ViolationKind::DistanceTooSmall,
            LinkError::ZeroKernel(..) => ViolationKind::ZeroKernel,
            _ => ViolationKind::UnresolvableEndpoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub link_id: String,
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, link_id: &str, kind: ViolationKind, message: impl Into<String>) {
        self.violations.push(Violation {
            link_id: link_id.to_string(),
            kind,
            message: message.into(),
        });
    }
}

/// Checks every link invariant and pair uniqueness; violations are data.
pub fn validate_deployment(dep: &Deployment, nets: &DualNetwork) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut pairs = HashSet::new();
    let mut ids = HashSet::new();
    for link in &dep.links {
        let id = link.id.as_str();
        if !ids.insert(id) {
            report.push(id, ViolationKind::DuplicateLinkId, "duplicate link id");
        }
        if !pairs.insert(link.endpoint_pair()) {
            report.push(id, ViolationKind::DuplicateEndpointPair, "duplicate endpoint pair");
        }
        if link.active.modality == link.passive.modality {
            report.push(id, ViolationKind::SameModality, "same modality on both endpoints");
        }
        let expected = link.passive.level as i64 - link.active.level as i64;
        if link.distance != expected {
            report.push(
                id,
                ViolationKind::DistanceInconsistent,
                format!("distance {} but levels imply {expected}", link.distance),
            );
        }
        if expected < 1 {
            report.push(id, ViolationKind::DistanceTooSmall, "distance < 1");
        }
        if link.filter.w == 0 || link.filter.h == 0 {
            report.push(id, ViolationKind::ZeroKernel, "fuseFilter kernel must be at least 1x1");
        }
        let (active_layer, passive_layer) = match (link.active_layer(nets), link.passive_layer(nets)) {
            (Some(a), Some(p)) => (a, p),
            _ => {
                report.push(id, ViolationKind::UnresolvableEndpoint, "endpoint level out of range");
                continue;
            }
        };
        if active_layer.id != link.active.layer_id || passive_layer.id != link.passive.layer_id {
            report.push(
                id,
                ViolationKind::EndpointLayerMismatch,
                format!(
                    "endpoint layers must be '{}' and '{}'",
                    active_layer.id, passive_layer.id
                ),
            );
        }
        if link.filter.c_input != active_layer.out_channels
            || link.filter.c_output != passive_layer.in_channels
        {
            report.push(
                id,
                ViolationKind::FilterChannelMismatch,
                format!(
                    "filter/channel mismatch: filter is {}->{}, layers need {}->{}",
                    link.filter.c_input,
                    link.filter.c_output,
                    active_layer.out_channels,
                    passive_layer.in_channels
                ),
            );
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    UnidirectionalRgbToDepth,
    UnidirectionalDepthToRgb,
    Bidirectional,
}

impl Direction {
    fn tag(self) -> &'static str {
        match self {
            Direction::UnidirectionalRgbToDepth => "r2d",
            Direction::UnidirectionalDepthToRgb => "d2r",
            Direction::Bidirectional => "bi",
        }
    }

    fn sources(self) -> &'static [Modality] {
        match self {
            Direction::UnidirectionalRgbToDepth => &[Modality::Rgb],
            Direction::UnidirectionalDepthToRgb => &[Modality::Depth],
            Direction::Bidirectional => &[Modality::Rgb, Modality::Depth],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnumerationPolicy {
    pub direction: Direction,
    pub distances: BTreeSet<usize>,
    pub levels: BTreeSet<usize>,
    pub max_links: usize,
    #[serde(default = "default_kernel")]
    pub kernel: [u64; 2],
}

/// Enumerates every deployment formed from a non-empty subset of
/// (level, distance) slots whose link count fits `max_links`.
///
/// Output is ordered by number of slots, then lexicographically by slot
/// index, where slots are sorted by level and then distance.
pub fn enumerate_deployments(
    nets: &DualNetwork,
    policy: &EnumerationPolicy,
) -> Result<Vec<Deployment>, LinkError> {
    if policy.distances.is_empty() {
        return Err(LinkError::EmptyPolicy("distances"));
    }
    if policy.levels.is_empty() {
        return Err(LinkError::EmptyPolicy("levels"));
    }
    if policy.max_links == 0 {
        return Err(LinkError::EmptyPolicy("max_links"));
    }
    let blocks = nets.block_count();
    if let Some(&level) = policy.levels.iter().find(|&&l| l >= blocks) {
        return Err(LinkError::InvalidLevel { level, blocks });
    }
    let kernel = (policy.kernel[0], policy.kernel[1]);

    let mut slots: Vec<(String, Vec<FuseLink>)> = Vec::new();
    for &level in &policy.levels {
        for &distance in &policy.distances {
            if distance == 0 || level + distance >= blocks {
                continue;
            }
            let links = policy
                .direction
                .sources()
                .iter()
                .map(|&m| {
                    make_link(
                        EndpointRef::new(m, level),
                        EndpointRef::new(m.other(), level + distance),
                        nets,
                        kernel,
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            slots.push((format!("l{level}d{distance}"), links));
        }
    }

    let per_slot = policy.direction.sources().len();
    let max_slots = (policy.max_links / per_slot).min(slots.len());
    let mut out = Vec::new();
    for size in 1..=max_slots {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            if out.len() >= MAX_ENUMERATED_DEPLOYMENTS {
                return Err(LinkError::TooManyDeployments);
            }
            let name = format!(
                "{}_{}",
                policy.direction.tag(),
                combo.iter().map(|&i| slots[i].0.as_str()).collect::<Vec<_>>().join("-")
            );
            let links = combo.iter().flat_map(|&i| slots[i].1.iter().cloned()).collect();
            out.push(Deployment::new(name, links));
            if !next_combination(&mut combo, slots.len()) {
                break;
            }
        }
    }
    Ok(out)
}

fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let Some(i) = (0..k).rev().find(|&i| combo[i] < n - k + i) else {
        return false;
    };
    combo[i] += 1;
    for j in i + 1..k {
        combo[j] = combo[j - 1] + 1;
    }
    true
}

/// Exploration-ordering heuristic: favors low levels, distance 1 and
/// mirrored pairs. Not a predicted accuracy.
pub fn deployment_score(dep: &Deployment, block_count: usize) -> u64 {
    let pairs: HashSet<_> = dep.links.iter().map(FuseLink::endpoint_pair).collect();
    dep.links
        .iter()
        .map(|link| {
            let location = block_count.saturating_sub(link.active.level) as u64;
            let distance_weight = if link.distance == 1 { 2 } else { 1 };
            let mirrored = u64::from(pairs.contains(&link.mirror_pair()));
            location * distance_weight + mirrored
        })
        .sum()
}

/// Sorts deployments best-first by [`deployment_score`], then fewer links,
/// then name. Every deployment must be valid against `nets`.
pub fn rank_deployments(
    deps: Vec<Deployment>,
    nets: &DualNetwork,
) -> Result<Vec<(Deployment, u64)>, LinkError> {
    if let Some(bad) = deps.iter().find(|d| !validate_deployment(d, nets).is_clean()) {
        return Err(LinkError::MixedNetworks(bad.name.clone()));
    }
    let blocks = nets.block_count();
    let mut scored: Vec<(Deployment, u64)> = deps
        .into_iter()
        .map(|d| {
            let score = deployment_score(&d, blocks);
            (d, score)
        })
        .collect();
    scored.sort_by(|(a, sa), (b, sb)| {
        sb.cmp(sa)
            .then_with(|| a.links.len().cmp(&b.links.len()))
            .then_with(|| a.name.cmp(&b.name))
    });
    Ok(scored)
}
