//! Site topology and the per-link delay model.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::TransportError;

/// Site id of the orchestration engine; always matrix row/column 0.
pub const ENGINE_SITE: &str = "engine";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteAddr {
    pub id: String,
    /// `host:port`; port 0 asks a local launcher for an ephemeral port.
    pub addr: String,
}

/// Proxy sites plus symmetric-or-not link costs between every pair of
/// `{engine} ∪ sites`. Index 0 is the engine, index `i + 1` is `sites[i]`.
/// A bandwidth of 0 means the link is uncapped.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    sites: Vec<SiteAddr>,
    latency_ms: Vec<Vec<f64>>,
    bandwidth_bytes_per_s: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDoc {
    sites: Vec<SiteAddr>,
    latency_ms: Vec<Vec<f64>>,
    bandwidth_mbit: Vec<Vec<f64>>,
}

fn mbit_to_bytes(mbit: f64) -> f64 {
    mbit * 1_000_000.0 / 8.0
}

impl Topology {
    pub fn new(
        sites: Vec<SiteAddr>,
        latency_ms: Vec<Vec<f64>>,
        bandwidth_bytes_per_s: Vec<Vec<f64>>,
    ) -> Result<Self, TransportError> {
        let topo = Topology { sites, latency_ms, bandwidth_bytes_per_s };
        topo.validate()?;
        Ok(topo)
    }

    /// Every pair of distinct endpoints (engine included) gets the same
    /// latency and bandwidth; local links are free.
    pub fn uniform(site_ids: &[&str], latency_ms: f64, bandwidth_mbit: f64) -> Self {
        let n = site_ids.len() + 1;
        let cell = |v: f64| (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { v }).collect()).collect();
        Topology::new(
            site_ids.iter().map(|id| SiteAddr { id: id.to_string(), addr: "127.0.0.1:0".into() }).collect(),
            cell(latency_ms),
            cell(mbit_to_bytes(bandwidth_mbit)),
        )
        .expect("uniform topology is valid")
    }

    /// Zero latency, uncapped bandwidth everywhere.
    pub fn free(site_ids: &[&str]) -> Self {
        Topology::uniform(site_ids, 0.0, 0.0)
    }

    /// Default wide-area profile: 20 ms and 50 Mbit/s between distinct sites.
    pub fn default_wan(site_ids: &[&str]) -> Self {
        Topology::uniform(site_ids, 20.0, 50.0)
    }

    fn validate(&self) -> Result<(), TransportError> {
        let n = self.sites.len() + 1;
        let bad = |m: String| Err(TransportError::InvalidTopology(m));
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.sites {
            if s.id == ENGINE_SITE {
                return bad(format!("site id {ENGINE_SITE:?} is reserved for the engine"));
            }
            if !seen.insert(s.id.as_str()) {
                return bad(format!("duplicate site id {:?}", s.id));
            }
        }
        for (name, m) in [("latency_ms", &self.latency_ms), ("bandwidth", &self.bandwidth_bytes_per_s)] {
            if m.len() != n || m.iter().any(|row| row.len() != n) {
                return bad(format!("{name} must be {n}x{n} (engine + {} sites)", n - 1));
            }
            if m.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
                return bad(format!("{name} entries must be finite and non-negative"));
            }
            if (0..n).any(|i| m[i][i] != 0.0) {
                return bad(format!("{name} diagonal must be 0 (free local link)"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, TransportError> {
        let doc: TopologyDoc =
            serde_json::from_str(text).map_err(|e| TransportError::InvalidTopology(e.to_string()))?;
        let bw = doc.bandwidth_mbit.into_iter().map(|row| row.into_iter().map(mbit_to_bytes).collect()).collect();
        Topology::new(doc.sites, doc.latency_ms, bw)
    }

    pub fn load(path: &Path) -> Result<Self, TransportError> {
        let text = std::fs::read_to_string(path)?;
        Topology::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let doc = TopologyDoc {
            sites: self.sites.clone(),
            latency_ms: self.latency_ms.clone(),
            bandwidth_mbit: self
                .bandwidth_bytes_per_s
                .iter()
                .map(|row| row.iter().map(|b| b * 8.0 / 1_000_000.0).collect())
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("topology serializes")
    }

    pub fn sites(&self) -> &[SiteAddr] {
        &self.sites
    }

    pub fn site_ids(&self) -> impl Iterator<Item = &str> {
        self.sites.iter().map(|s| s.id.as_str())
    }

    fn index(&self, site: &str) -> Result<usize, TransportError> {
        if site == ENGINE_SITE {
            return Ok(0);
        }
        self.sites
            .iter()
            .position(|s| s.id == site)
            .map(|i| i + 1)
            .ok_or_else(|| TransportError::UnknownSite(site.to_string()))
    }

    pub fn contains(&self, site: &str) -> bool {
        self.index(site).is_ok()
    }

    pub fn addr(&self, site: &str) -> Result<&str, TransportError> {
        self.sites
            .iter()
            .find(|s| s.id == site)
            .map(|s| s.addr.as_str())
            .ok_or_else(|| TransportError::UnknownSite(site.to_string()))
    }

    pub fn set_addr(&mut self, site: &str, addr: String) -> Result<(), TransportError> {
        let s = self
            .sites
            .iter_mut()
            .find(|s| s.id == site)
            .ok_or_else(|| TransportError::UnknownSite(site.to_string()))?;
        s.addr = addr;
        Ok(())
    }

    pub fn latency_ms(&self, from: &str, to: &str) -> Result<f64, TransportError> {
        Ok(self.latency_ms[self.index(from)?][self.index(to)?])
    }

    pub fn bandwidth_bytes_per_s(&self, from: &str, to: &str) -> Result<f64, TransportError> {
        Ok(self.bandwidth_bytes_per_s[self.index(from)?][self.index(to)?])
    }

    /// True when every link has zero latency and uncapped bandwidth.
    pub fn is_free(&self) -> bool {
        self.latency_ms.iter().flatten().all(|v| *v == 0.0)
            && self.bandwidth_bytes_per_s.iter().flatten().all(|v| *v == 0.0)
    }
}

/// Time to deliver `n_bytes` from one site to another: link latency plus
/// serialization at the link bandwidth. Same-site delivery is free.
pub fn link_delay(
    topology: &Topology,
    from_site: &str,
    to_site: &str,
    n_bytes: u64,
) -> Result<Duration, TransportError> {
    let latency = topology.latency_ms(from_site, to_site)?;
    let bandwidth = topology.bandwidth_bytes_per_s(from_site, to_site)?;
    if from_site == to_site {
        return Ok(Duration::ZERO);
    }
    let serialization = if bandwidth == 0.0 { 0.0 } else { n_bytes as f64 / bandwidth };
    Ok(Duration::from_secs_f64(latency / 1000.0 + serialization))
}
