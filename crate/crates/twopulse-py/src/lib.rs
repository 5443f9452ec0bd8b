//! Python bindings; populated alongside the core crate.

use pyo3::prelude::*;

#[pymodule]
fn twopulse_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
