use pyo3::prelude::*;

#[pymodule]
fn anomsynth(_py: Python, _m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
