//! Knowledge-base question answering by binding LLM-drafted logical forms.

pub mod binder;
pub mod draft_gen;
pub mod executor;
pub mod harness;
pub mod kb_store;
pub mod logical_form;
pub mod retrieval;
pub mod throttle;
