//! Routing of a question to the concept or the coding workflow.

use tutorloop_classifier::{ClassifierModel, Label};

use crate::session::SubTaskKind;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Route {
    pub kind: SubTaskKind,
    /// Probability of the coding class, when the router produces one.
    pub p_code: Option<f64>,
}

pub trait Router: Send + Sync {
    fn route(&self, text: &str) -> Result<Route, String>;
}

impl Router for ClassifierModel {
    fn route(&self, text: &str) -> Result<Route, String> {
        let p = self.predict(text).map_err(|e| e.to_string())?;
        let kind = match p.label() {
            Label::Concept => SubTaskKind::Concept,
            Label::Code => SubTaskKind::Code,
        };
        Ok(Route {
            kind,
            p_code: Some(p.p_code),
        })
    }
}

/// Sends every question down the same workflow.
#[derive(Debug, Clone, Copy)]
pub struct FixedRouter(pub SubTaskKind);

impl Router for FixedRouter {
    fn route(&self, _text: &str) -> Result<Route, String> {
        Ok(Route {
            kind: self.0,
            p_code: None,
        })
    }
}
