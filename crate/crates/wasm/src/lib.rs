//! Browser bindings for the demo page in `www/`.
//!
//! The logic lives in [`demo`] as plain functions so it can be tested
//! natively; the exported wrappers only turn errors into JS exceptions.

use wasm_bindgen::prelude::*;

pub mod demo;

/// Parses and compiles a policy, returning an indented view of the
/// condition tree.
#[wasm_bindgen(js_name = compilePolicy)]
pub fn compile_policy(text: &str) -> Result<String, JsError> {
    demo::compile_policy(text).map_err(|e| JsError::new(&e))
}

/// Runs key issuance, deployment and one request end to end under the
/// production group.
#[wasm_bindgen(js_name = evaluateRequest)]
pub fn evaluate_request(
    policy: &str,
    subject: &str,
    action: &str,
    target: &str,
    attributes: &str,
    seed: u32,
) -> Result<String, JsError> {
    demo::evaluate_request(policy, [subject, action, target], attributes, seed.into())
        .map_err(|e| JsError::new(&e))
}

/// Every intermediate value of one encryption and match in the 23/11 group.
#[wasm_bindgen(js_name = tinyTrace)]
pub fn tiny_trace() -> String {
    demo::tiny_trace()
}
