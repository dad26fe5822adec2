use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Ingested, Rejection};
use crate::{Error, Result};

/// Width of a supplied text embedding.
pub const EMBEDDING_DIM: usize = 50;

/// Static metadata of a crowdfunding project.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Project {
    pub id: String,
    /// Launch time, epoch seconds UTC.
    pub launch_time: i64,
    pub category: String,
    pub creator_type: String,
    pub currency: String,
    #[serde(rename = "duration_days")]
    pub declared_duration_days: u32,
    #[serde(rename = "goal")]
    pub pledged_goal: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl Project {
    /// End of the declared funding period (exclusive).
    pub fn end_time(&self) -> i64 {
        self.launch_time + i64::from(self.declared_duration_days) * super::DAY
    }

    /// Checks the record invariants, returning a short reason on failure.
    pub fn validate(&self) -> std::result::Result<(), &'static str> {
        if self.id.is_empty() {
            return Err("id");
        }
        if !(self.pledged_goal.is_finite() && self.pledged_goal > 0.0) {
            return Err("goal");
        }
        if self.declared_duration_days < 1 {
            return Err("duration");
        }
        match (&self.description, &self.embedding) {
            (None, None) => return Err("text"),
            (_, Some(e)) if e.len() != EMBEDDING_DIM || e.iter().any(|v| !v.is_finite()) => {
                return Err("embedding")
            }
            _ => {}
        }
        Ok(())
    }
}

/// Projects keyed by id, kept in ingestion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProjectCatalog {
    projects: Vec<Project>,
    index: HashMap<String, usize>,
}

impl ProjectCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a validated project. Duplicate ids and invalid records are refused.
    pub fn insert(&mut self, project: Project) -> std::result::Result<(), &'static str> {
        project.validate()?;
        if self.index.contains_key(&project.id) {
            return Err("duplicate id");
        }
        self.index.insert(project.id.clone(), self.projects.len());
        self.projects.push(project);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Project> {
        self.index.get(id).map(|&i| &self.projects[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.projects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projects.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Project> {
        self.projects.iter()
    }

    pub fn projects(&self) -> &[Project] {
        &self.projects
    }

    /// Fetches a project that callers know exists.
    pub(crate) fn expect(&self, id: &str) -> &Project {
        self.get(id)
            .unwrap_or_else(|| panic!("project {id} missing from catalog"))
    }
}

impl FromIterator<Project> for ProjectCatalog {
    /// Builds a catalog, silently skipping records `insert` would refuse.
    fn from_iter<I: IntoIterator<Item = Project>>(iter: I) -> Self {
        let mut catalog = ProjectCatalog::new();
        for p in iter {
            let _ = catalog.insert(p);
        }
        catalog
    }
}

/// Parses JSON-object lines into a catalog. Bad lines are rejected and
/// counted; ingestion continues.
pub fn parse_projects(text: &str) -> Ingested<ProjectCatalog> {
    let mut catalog = ProjectCatalog::new();
    let mut rejections = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let reason = match serde_json::from_str::<Project>(line) {
            Ok(p) => match catalog.insert(p) {
                Ok(()) => continue,
                Err(reason) => reason.to_string(),
            },
            Err(e) => format!("parse: {e}"),
        };
        rejections.push(Rejection {
            line: n + 1,
            reason,
        });
    }
    Ingested {
        value: catalog,
        rejections,
    }
}

pub fn ingest_projects(path: impl AsRef<Path>) -> Result<Ingested<ProjectCatalog>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_projects(&text))
}
