use pyo3::prelude::*;

#[pymodule]
fn vdt_py(_m: &Bound<PyModule>) -> PyResult<()> { Ok(()) }
