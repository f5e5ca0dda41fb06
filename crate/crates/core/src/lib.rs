//! Core of the wall-detailing workbench: the building model and its project
//! file, the XML exchange codec, the detailing rule oracle, the design
//! backends (LLM, rule, replay) and the evaluation harness.

pub mod classify;
pub mod eval;
pub mod model;
pub mod project;
pub mod xml;
pub mod fixture;
pub mod rules;
pub mod gaia;
pub mod session_log;
