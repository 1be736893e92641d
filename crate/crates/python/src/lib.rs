//! Python bindings for `ponwm_core`.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ponwm_core::detectability::{self, OntPopulation, SyntheticOrlParams};
use ponwm_core::interference::{self, InterferenceSpec};
use ponwm_core::optics;
use ponwm_core::otdr::{self, OtdrSpec, TraceNoise};
use ponwm_core::raman::{self, RamanPair, RamanScenario};
use ponwm_core::topology::{self, budget_of, BudgetClass, BudgetClassName, PathElement, PonTopology};
use ponwm_core::PonError;

fn py_err(e: PonError) -> PyErr {
    match e {
        PonError::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn budget(name: &str) -> PyResult<BudgetClass> {
    let class: BudgetClassName = name.parse().map_err(py_err)?;
    Ok(budget_of(class))
}

/// OTDR instrument settings.
#[pyclass(name = "Otdr", module = "ponwm", from_py_object)]
#[derive(Clone)]
struct PyOtdr(OtdrSpec);

#[pymethods]
impl PyOtdr {
    #[new]
    #[pyo3(signature = (
        wavelength_nm,
        dr_datasheet_db,
        datasheet_pulse_ns = 20000.0,
        datasheet_averaging_s = 180.0,
        operating_pulse_ns = 30.0,
        operating_averaging_s = 180.0,
        dr_effective_override_db = None,
        sample_spacing_m = 1.0,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        wavelength_nm: f64,
        dr_datasheet_db: f64,
        datasheet_pulse_ns: f64,
        datasheet_averaging_s: f64,
        operating_pulse_ns: f64,
        operating_averaging_s: f64,
        dr_effective_override_db: Option<f64>,
        sample_spacing_m: f64,
    ) -> PyResult<Self> {
        let spec = OtdrSpec {
            wavelength_nm,
            dr_datasheet_db,
            datasheet_pulse_ns,
            datasheet_averaging_s,
            operating_pulse_ns,
            operating_averaging_s,
            dr_effective_override_db,
            sample_spacing_m,
        };
        spec.validate().map_err(py_err)?;
        Ok(Self(spec))
    }

    #[staticmethod]
    fn water_peak_1383() -> Self {
        Self(OtdrSpec::water_peak_1383())
    }

    #[staticmethod]
    fn u_band_1650() -> Self {
        Self(OtdrSpec::u_band_1650())
    }

    fn with_override(&self, dr_eff_db: f64) -> Self {
        Self(self.0.clone().with_override(dr_eff_db))
    }

    #[getter]
    fn wavelength_nm(&self) -> f64 {
        self.0.wavelength_nm
    }

    #[getter]
    fn operating_pulse_ns(&self) -> f64 {
        self.0.operating_pulse_ns
    }

    fn effective_dynamic_range(&self) -> f64 {
        otdr::effective_dynamic_range(&self.0)
    }

    #[pyo3(signature = (path_loss_db, backscatter_db, margin_db = 1.0))]
    fn min_detectable_reflectance(&self, path_loss_db: f64, backscatter_db: f64, margin_db: f64) -> PyResult<f64> {
        otdr::min_detectable_reflectance(&self.0, path_loss_db, backscatter_db, margin_db).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Otdr(wavelength_nm={}, dr_eff_db={:.3})",
            self.0.wavelength_nm,
            otdr::effective_dynamic_range(&self.0)
        )
    }
}

/// Ordered fiber path from the headend.
#[pyclass(name = "Topology", module = "ponwm", from_py_object)]
#[derive(Clone)]
struct PyTopology(PonTopology);

#[pymethods]
impl PyTopology {
    /// G.652.D feeder, 1:32 PLC splitter and a VOA at 0 dB.
    #[staticmethod]
    #[pyo3(signature = (feeder_km = 20.0))]
    fn reference(feeder_km: f64) -> Self {
        Self(PonTopology::reference(feeder_km))
    }

    fn path_loss(&self, wavelength_nm: f64) -> PyResult<f64> {
        topology::path_loss(&self.0, wavelength_nm).map_err(py_err)
    }

    /// Returns `(voa_setting_db, adjusted_topology)`.
    fn with_voa_for_budget(&self, budget_class: &str, wavelength_nm: f64) -> PyResult<(f64, Self)> {
        let (setting, top) =
            topology::set_voa_for_budget(&self.0, &budget(budget_class)?, wavelength_nm).map_err(py_err)?;
        Ok((setting, Self(top)))
    }

    fn with_ont(&self, orl_db: f64) -> PyResult<Self> {
        self.0
            .without_termination()
            .with_termination(PathElement::Ont { orl_db })
            .map(Self)
            .map_err(py_err)
    }

    fn with_vbr(&self, reflectance_db: f64) -> PyResult<Self> {
        self.0
            .without_termination()
            .with_termination(PathElement::Vbr { reflectance_db })
            .map(Self)
            .map_err(py_err)
    }

    fn kinds(&self) -> Vec<&'static str> {
        self.0.elements().iter().map(PathElement::kind).collect()
    }

    #[getter]
    fn total_length_km(&self) -> f64 {
        self.0.total_length_km()
    }

    fn __len__(&self) -> usize {
        self.0.elements().len()
    }
}

/// Synthesized OTDR trace.
#[pyclass(name = "Trace", module = "ponwm")]
struct PyTrace(otdr::Trace);

#[pymethods]
impl PyTrace {
    #[getter]
    fn levels(&self) -> Vec<f64> {
        self.0.levels().to_vec()
    }

    #[getter]
    fn distances(&self) -> Vec<f64> {
        (0..self.0.len()).map(|i| self.0.distance_m(i)).collect()
    }

    #[getter]
    fn noise_floor_db(&self) -> f64 {
        self.0.noise_floor_db()
    }

    #[getter]
    fn backscatter_db(&self) -> Option<f64> {
        self.0.backscatter_db()
    }

    /// Reflective events as `(distance_m, height_above_floor_db, reflectance_db or None)`.
    #[pyo3(signature = (margin_db = 1.0))]
    fn events(&self, margin_db: f64) -> PyResult<Vec<(f64, f64, Option<f64>)>> {
        Ok(otdr::detect_events(&self.0, margin_db)
            .map_err(py_err)?
            .into_iter()
            .map(|e| (e.distance_m, e.peak_height_above_floor_db, e.inferred_reflectance_db))
            .collect())
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        self.0.write_csv(std::io::BufWriter::new(file)).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// ONT population with per-wavelength ORL values.
#[pyclass(name = "Population", module = "ponwm")]
struct PyPopulation(OntPopulation);

#[pymethods]
impl PyPopulation {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        detectability::load_population(path).map(Self).map_err(py_err)
    }

    /// Truncated-normal reference population.
    #[staticmethod]
    #[pyo3(signature = (seed, count = 87))]
    fn reference(seed: u64, count: usize) -> PyResult<Self> {
        let mut params = SyntheticOrlParams::reference(seed);
        params.count = count;
        detectability::synth_population(&params).map(Self).map_err(py_err)
    }

    fn orls(&self, wavelength_nm: f64) -> PyResult<Vec<f64>> {
        self.0.orls_at(wavelength_nm).map_err(py_err)
    }

    fn unit_ids(&self) -> Vec<String> {
        self.0.records().iter().map(|r| r.unit_id.clone()).collect()
    }

    /// Fraction of units whose reflection clears the detection threshold.
    #[pyo3(signature = (otdr, topology, budget_class, margin_db = 1.0))]
    fn coverage(&self, otdr: &PyOtdr, topology: &PyTopology, budget_class: &str, margin_db: f64) -> PyResult<f64> {
        detectability::coverage(&self.0, &otdr.0, &topology.0, &budget(budget_class)?, margin_db)
            .map(|row| row.fraction)
            .map_err(py_err)
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        self.0.write_csv(std::io::BufWriter::new(file)).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyfunction]
#[pyo3(signature = (topology, otdr, noise_sigma_db = 0.0, seed = 0))]
fn synthesize_trace(topology: &PyTopology, otdr: &PyOtdr, noise_sigma_db: f64, seed: u64) -> PyResult<PyTrace> {
    let noise = if noise_sigma_db > 0.0 {
        TraceNoise::Jitter {
            sigma_db: noise_sigma_db,
            seed,
        }
    } else {
        TraceNoise::None
    };
    otdr::synthesize_trace(&topology.0, &otdr.0, noise)
        .map(PyTrace)
        .map_err(py_err)
}

#[pyfunction]
fn effective_length(attenuation_db_km: f64, length_km: f64) -> PyResult<f64> {
    optics::effective_length(attenuation_db_km, length_km).map_err(py_err)
}

#[pyfunction]
fn backscatter_level(b0_db: f64, pulse_ns: f64) -> PyResult<f64> {
    otdr::backscatter_level(b0_db, pulse_ns).map_err(py_err)
}

#[pyfunction]
fn peak_height_from_reflectance(reflectance_db: f64, backscatter_db: f64) -> f64 {
    otdr::peak_height_from_reflectance(reflectance_db, backscatter_db)
}

#[pyfunction]
fn reflectance_from_peak_height(height_db: f64, backscatter_db: f64) -> PyResult<f64> {
    otdr::reflectance_from_peak_height(height_db, backscatter_db).map_err(py_err)
}

fn raman_scenario(
    pair: &str,
    pump_dbm: f64,
    signal_dbm: f64,
    length_km: f64,
    photon_term: bool,
) -> PyResult<RamanScenario> {
    let pair: RamanPair = pair.parse().map_err(py_err)?;
    let mut s = RamanScenario::for_pair(pair, pump_dbm, signal_dbm, length_km).map_err(py_err)?;
    s.photon_term = photon_term;
    Ok(s)
}

/// Converged coupled-ODE result for a built-in pair.
#[pyfunction]
#[pyo3(signature = (pair, pump_dbm, signal_dbm, length_km = 22.0, photon_term = true))]
fn raman_integrate<'py>(
    py: Python<'py>,
    pair: &str,
    pump_dbm: f64,
    signal_dbm: f64,
    length_km: f64,
    photon_term: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let r = raman::integrate(&raman_scenario(pair, pump_dbm, signal_dbm, length_km, photon_term)?).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("on_off_gain_db", r.on_off_gain_db)?;
    d.set_item("pump_depletion_db", r.pump_depletion_db)?;
    d.set_item("signal_out_on_dbm", r.signal_out_on_dbm)?;
    d.set_item("signal_out_off_dbm", r.signal_out_off_dbm)?;
    d.set_item("pump_out_on_dbm", r.pump_out_on_dbm)?;
    d.set_item("pump_out_off_dbm", r.pump_out_off_dbm)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (pair, pump_dbm, length_km = 22.0))]
fn raman_analytic_gain(pair: &str, pump_dbm: f64, length_km: f64) -> PyResult<f64> {
    raman::analytic_onoff_gain(&raman_scenario(pair, pump_dbm, 0.0, length_km, true)?).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (penalty_free_post_splitter_dbm = -7.8, path_loss_db = 16.8))]
fn max_headend_power(penalty_free_post_splitter_dbm: f64, path_loss_db: f64) -> PyResult<f64> {
    interference::max_headend_power(&InterferenceSpec {
        penalty_free_post_splitter_dbm,
        path_loss_headend_to_post_splitter_db: path_loss_db,
        ..InterferenceSpec::default()
    })
    .map_err(py_err)
}

#[pyfunction]
fn receiver_interference(post_splitter_dbm: f64, isolation_db: f64) -> PyResult<f64> {
    interference::receiver_interference(post_splitter_dbm, isolation_db).map_err(py_err)
}

/// Runs the `ponwm` command line; returns `(exit_code, stdout, stderr)`.
#[pyfunction]
fn run_cli(args: Vec<String>) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = ponwm_core::cli::run(std::iter::once("ponwm".to_string()).chain(args), &mut out, &mut err);
    (
        code,
        String::from_utf8_lossy(&out).into_owned(),
        String::from_utf8_lossy(&err).into_owned(),
    )
}

#[pymodule]
fn ponwm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOtdr>()?;
    m.add_class::<PyTopology>()?;
    m.add_class::<PyTrace>()?;
    m.add_class::<PyPopulation>()?;
    m.add_function(wrap_pyfunction!(synthesize_trace, m)?)?;
    m.add_function(wrap_pyfunction!(effective_length, m)?)?;
    m.add_function(wrap_pyfunction!(backscatter_level, m)?)?;
    m.add_function(wrap_pyfunction!(peak_height_from_reflectance, m)?)?;
    m.add_function(wrap_pyfunction!(reflectance_from_peak_height, m)?)?;
    m.add_function(wrap_pyfunction!(raman_integrate, m)?)?;
    m.add_function(wrap_pyfunction!(raman_analytic_gain, m)?)?;
    m.add_function(wrap_pyfunction!(max_headend_power, m)?)?;
    m.add_function(wrap_pyfunction!(receiver_interference, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
