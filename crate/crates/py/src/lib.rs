//! Python bindings. Rates are in bit/s, sizes in bits, times in seconds.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use vidorder::data::{sample_synth_sets, BitrateMode};
use vidorder::fluid;
use vidorder::hardness::{construct_instance, Rates};
use vidorder::model::{self, interleaving_demo};
use vidorder::neural::{self, NetParams, Sharing, TrainConfig};
use vidorder::order::{self, Algorithm};

create_exception!(vidorder, VidorderError, PyValueError);

fn err(e: vidorder::Error) -> PyErr {
    VidorderError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = vidorder::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

#[pyclass(name = "Video", module = "vidorder", from_py_object)]
#[derive(Clone)]
pub struct PyVideo(pub model::Video);

#[pymethods]
impl PyVideo {
    /// The initial segment defaults to one second of playback.
    #[new]
    #[pyo3(signature = (id, duration_s, encoding_rate_bps, viewing_time_s, initial_segment_bits=None))]
    fn new(id: String, duration_s: f64, encoding_rate_bps: f64, viewing_time_s: f64, initial_segment_bits: Option<f64>) -> PyResult<Self> {
        let mut v = model::Video::new(id, duration_s, encoding_rate_bps, viewing_time_s).map_err(err)?;
        if let Some(bits) = initial_segment_bits {
            v = v.with_initial_segment(bits).map_err(err)?;
        }
        Ok(PyVideo(v))
    }

    #[getter]
    fn id(&self) -> &str {
        &self.0.id
    }
    #[getter]
    fn duration_s(&self) -> f64 {
        self.0.duration_s
    }
    #[getter]
    fn encoding_rate_bps(&self) -> f64 {
        self.0.encoding_rate_bps
    }
    #[getter]
    fn initial_segment_bits(&self) -> f64 {
        self.0.initial_segment_bits
    }
    #[getter]
    fn viewing_time_s(&self) -> f64 {
        self.0.viewing_time_s
    }

    fn __repr__(&self) -> String {
        let v = &self.0;
        format!(
            "Video(id={:?}, duration_s={}, encoding_rate_bps={}, viewing_time_s={})",
            v.id, v.duration_s, v.encoding_rate_bps, v.viewing_time_s
        )
    }
}

#[pyclass(name = "BucketConfig", module = "vidorder", from_py_object)]
#[derive(Clone)]
pub struct PyBucket(pub model::BucketConfig);

#[pymethods]
impl PyBucket {
    /// Starts full unless `initial_tokens_bits` is given.
    #[new]
    #[pyo3(signature = (capacity_bits, token_rate_bps, burst_rate_bps, initial_tokens_bits=None))]
    fn new(capacity_bits: f64, token_rate_bps: f64, burst_rate_bps: f64, initial_tokens_bits: Option<f64>) -> PyResult<Self> {
        model::BucketConfig::new(capacity_bits, token_rate_bps, burst_rate_bps, initial_tokens_bits.unwrap_or(capacity_bits))
            .map(PyBucket)
            .map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (capacity_mbits, token_rate_mbps, burst_rate_mbps=10.0, initial_mbits=None))]
    fn from_mbits(capacity_mbits: f64, token_rate_mbps: f64, burst_rate_mbps: f64, initial_mbits: Option<f64>) -> PyResult<Self> {
        model::BucketConfig::from_mbits(capacity_mbits, token_rate_mbps, burst_rate_mbps, initial_mbits.unwrap_or(capacity_mbits))
            .map(PyBucket)
            .map_err(err)
    }

    #[getter]
    fn capacity_bits(&self) -> f64 {
        self.0.capacity_bits
    }
    #[getter]
    fn token_rate_bps(&self) -> f64 {
        self.0.token_rate_bps
    }
    #[getter]
    fn burst_rate_bps(&self) -> f64 {
        self.0.burst_rate_bps
    }
    #[getter]
    fn initial_tokens_bits(&self) -> f64 {
        self.0.initial_tokens_bits
    }

    fn min_required_tokens(&self, segment_bits: f64) -> f64 {
        self.0.min_required_tokens(segment_bits)
    }

    fn __repr__(&self) -> String {
        let b = &self.0;
        format!(
            "BucketConfig(capacity_bits={}, token_rate_bps={}, burst_rate_bps={}, initial_tokens_bits={})",
            b.capacity_bits, b.token_rate_bps, b.burst_rate_bps, b.initial_tokens_bits
        )
    }
}

#[pyclass(name = "DelayReport", module = "vidorder", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyDelayReport(pub model::DelayReport);

#[pymethods]
impl PyDelayReport {
    #[getter]
    fn max_delay_s(&self) -> f64 {
        self.0.max_delay_s
    }
    /// Startup delay per list position.
    #[getter]
    fn delays(&self) -> Vec<f64> {
        self.0.delays().collect()
    }
    /// Tokens in the bucket when each video is requested.
    #[getter]
    fn tokens_bits(&self) -> Vec<f64> {
        self.0.per_video.iter().map(|d| d.tokens_at_start_bits).collect()
    }
    #[getter]
    fn video_ids(&self) -> Vec<String> {
        self.0.per_video.iter().map(|d| d.video_id.clone()).collect()
    }

    fn __len__(&self) -> usize {
        self.0.per_video.len()
    }

    fn __repr__(&self) -> String {
        format!("DelayReport(max_delay_s={}, videos={})", self.0.max_delay_s, self.0.per_video.len())
    }
}

#[pyclass(name = "OrderResult", module = "vidorder", frozen, skip_from_py_object)]
pub struct PyOrderResult(pub order::OrderResult);

#[pymethods]
impl PyOrderResult {
    #[getter]
    fn order(&self) -> Vec<usize> {
        self.0.list.as_slice().to_vec()
    }
    #[getter]
    fn algorithm(&self) -> &'static str {
        self.0.algorithm.as_str()
    }
    #[getter]
    fn max_delay_s(&self) -> f64 {
        self.0.max_delay_s()
    }
    /// True only when the exact search proved its list optimal.
    #[getter]
    fn optimal(&self) -> bool {
        self.0.optimal
    }
    #[getter]
    fn wall_time_s(&self) -> f64 {
        self.0.wall_time_s
    }
    #[getter]
    fn report(&self) -> PyDelayReport {
        PyDelayReport(self.0.report.clone())
    }

    fn __repr__(&self) -> String {
        format!("OrderResult(algorithm={}, order={:?}, max_delay_s={})", self.algorithm(), self.order(), self.max_delay_s())
    }
}

#[pyclass(name = "GainStats", module = "vidorder", frozen, skip_from_py_object)]
pub struct PyGainStats(pub model::GainStats);

#[pymethods]
impl PyGainStats {
    #[getter]
    fn min_required_tokens_bits(&self) -> f64 {
        self.0.min_required_tokens_bits
    }
    #[getter]
    fn net_increment_bits(&self) -> f64 {
        self.0.net_increment_bits
    }
    #[getter]
    fn is_positive_gain(&self) -> bool {
        self.0.is_positive_gain
    }

    fn __repr__(&self) -> String {
        let g = &self.0;
        format!(
            "GainStats(min_required_tokens_bits={}, net_increment_bits={}, is_positive_gain={})",
            g.min_required_tokens_bits,
            g.net_increment_bits,
            if g.is_positive_gain { "True" } else { "False" }
        )
    }
}

/// Pointer-network orderer with its critic.
#[pyclass(name = "Network", module = "vidorder", skip_from_py_object)]
#[derive(Clone)]
pub struct PyNetwork(pub NetParams);

#[pymethods]
impl PyNetwork {
    /// Untrained network with uniform random weights.
    #[new]
    #[pyo3(signature = (hidden=32, sharing="psac", seed=0))]
    fn new(hidden: usize, sharing: &str, seed: u64) -> PyResult<Self> {
        if hidden == 0 {
            return Err(VidorderError::new_err("hidden size must be positive"));
        }
        Ok(PyNetwork(NetParams::init(hidden, parse(sharing)?, seed)))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        NetParams::load(path).map(PyNetwork).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(err)
    }

    #[getter]
    fn hidden(&self) -> usize {
        self.0.hidden
    }
    #[getter]
    fn sharing(&self) -> &'static str {
        match self.0.sharing {
            Sharing::Psac => "psac",
            Sharing::Nsac => "nsac",
        }
    }

    fn param_count(&self) -> usize {
        self.0.param_count()
    }

    /// Greedy decoding.
    fn order(&self, videos: Vec<PyVideo>, bucket: &PyBucket) -> PyResult<PyOrderResult> {
        neural::order_neural(&self.0, &unwrap(videos), &bucket.0).map(PyOrderResult).map_err(err)
    }

    /// Critic estimate of the max startup delay of the set.
    fn predict_delay(&self, videos: Vec<PyVideo>) -> PyResult<f64> {
        if videos.is_empty() {
            return Err(VidorderError::new_err("video set is empty"));
        }
        Ok(neural::critic_predict(&self.0, &unwrap(videos)))
    }

    /// Continues training in place; returns the per-step mean max delay.
    #[pyo3(signature = (sets, bucket, steps=2000, batch=16, lr=1e-3, seed=0))]
    fn train(&mut self, sets: Vec<Vec<PyVideo>>, bucket: &PyBucket, steps: usize, batch: usize, lr: f64, seed: u64) -> PyResult<Vec<f64>> {
        let dataset: Vec<Vec<model::Video>> = sets.into_iter().map(unwrap).collect();
        let set_size = dataset.first().map_or(0, Vec::len);
        let mut cfg = TrainConfig {
            steps,
            batch,
            set_size,
            hidden: self.0.hidden,
            sharing: self.0.sharing,
            seed,
            ..TrainConfig::desk()
        };
        cfg.adam.lr = lr;
        let trained = neural::train_from(self.0.clone(), &dataset, &bucket.0, &cfg).map_err(err)?;
        self.0 = trained.params;
        Ok(trained.history.iter().map(|s| s.mean_delay_s).collect())
    }

    fn __repr__(&self) -> String {
        format!("Network(hidden={}, sharing={}, params={})", self.0.hidden, self.sharing(), self.0.param_count())
    }
}

fn unwrap(videos: Vec<PyVideo>) -> Vec<model::Video> {
    videos.into_iter().map(|v| v.0).collect()
}

fn to_list(order: Vec<usize>, n: usize) -> PyResult<model::VideoList> {
    model::VideoList::new(order, n).map_err(err)
}

/// Startup delay of a segment given the tokens available at request time.
#[pyfunction]
fn startup_delay(segment_bits: f64, tokens_bits: f64, bucket: &PyBucket) -> PyResult<f64> {
    model::startup_delay(segment_bits, tokens_bits, &bucket.0).map_err(err)
}

/// Tokens available when the video after `prev` is requested.
#[pyfunction]
fn next_tokens(prev: &PyVideo, prev_tokens_bits: f64, prev_delay_s: f64, bucket: &PyBucket) -> f64 {
    model::next_tokens(&prev.0, prev_tokens_bits, prev_delay_s, &bucket.0)
}

#[pyfunction]
fn gain_stats(video: &PyVideo, bucket: &PyBucket) -> PyGainStats {
    PyGainStats(model::gain_stats(&video.0, &bucket.0))
}

/// Delays of `videos` played in `order` (a permutation of indices).
#[pyfunction]
fn evaluate_list(videos: Vec<PyVideo>, order: Vec<usize>, bucket: &PyBucket) -> PyResult<PyDelayReport> {
    let videos = unwrap(videos);
    let list = to_list(order, videos.len())?;
    model::evaluate_list(&videos, &list, &bucket.0).map(PyDelayReport).map_err(err)
}

/// Orders a set with rand, intl, grdy or exact; psac and nsac go through
/// `Network.order`.
#[pyfunction]
#[pyo3(signature = (videos, bucket, algorithm="grdy", seed=0, node_budget=order::DEFAULT_NODE_BUDGET))]
fn order_videos(videos: Vec<PyVideo>, bucket: &PyBucket, algorithm: &str, seed: u64, node_budget: u64) -> PyResult<PyOrderResult> {
    let videos = unwrap(videos);
    let result = match parse::<Algorithm>(algorithm)? {
        Algorithm::Exact => order::order_exact(&videos, &bucket.0, node_budget),
        alg if alg.is_neural() => return Err(VidorderError::new_err(format!("{alg} needs a Network; use Network.order"))),
        alg => order::order_with(alg, &videos, &bucket.0, seed),
    };
    result.map(PyOrderResult).map_err(err)
}

/// Fluid simulation of one list: the report and the token trace as
/// (time_s, tokens_bits, phase) breakpoints.
#[pyfunction]
fn simulate(videos: Vec<PyVideo>, order: Vec<usize>, bucket: &PyBucket) -> PyResult<(PyDelayReport, Vec<(f64, f64, &'static str)>)> {
    let videos = unwrap(videos);
    let list = to_list(order, videos.len())?;
    let sim = fluid::simulate(&videos, &list, &bucket.0).map_err(err)?;
    let trace = sim.trace.breakpoints.iter().map(|b| (b.time_s, b.tokens_bits, b.phase.as_str())).collect();
    Ok((PyDelayReport(sim.report), trace))
}

/// Eight-video set where grouping the short views drains the bucket:
/// (videos, bucket, blocked order, interleaved order).
#[pyfunction]
fn demo_set() -> (Vec<PyVideo>, PyBucket, Vec<usize>, Vec<usize>) {
    let (videos, bucket, blocked, interleaved) = interleaving_demo();
    (
        videos.into_iter().map(PyVideo).collect(),
        PyBucket(bucket),
        blocked.into_inner(),
        interleaved.into_inner(),
    )
}

/// Sets sampled from a synthetic trace with the reference statistics.
#[pyfunction]
#[pyo3(signature = (set_size, count, bitrate_mode="fixed", seed=0))]
fn synth_sets(set_size: usize, count: usize, bitrate_mode: &str, seed: u64) -> PyResult<Vec<Vec<PyVideo>>> {
    let mode: BitrateMode = parse(bitrate_mode)?;
    let sets = sample_synth_sets(set_size, count, mode, seed).map_err(err)?;
    Ok(sets.into_iter().map(|s| s.into_iter().map(PyVideo).collect()).collect())
}

/// Hard instance: positives first, then negatives.
#[pyfunction]
#[pyo3(signature = (m, y, p_bits, token_rate_bps, burst_rate_bps, encoding_rate_bps, seed=0))]
fn hard_instance(
    m: usize,
    y: usize,
    p_bits: f64,
    token_rate_bps: f64,
    burst_rate_bps: f64,
    encoding_rate_bps: f64,
    seed: u64,
) -> PyResult<(Vec<PyVideo>, PyBucket)> {
    let rates = Rates {
        token_rate_bps,
        burst_rate_bps,
        encoding_rate_bps,
    };
    let inst = construct_instance(m, y, p_bits, rates, seed).map_err(err)?;
    Ok((inst.videos.into_iter().map(PyVideo).collect(), PyBucket(inst.bucket)))
}

#[pymodule]
#[pyo3(name = "vidorder")]
fn vidorder_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("VidorderError", m.py().get_type::<VidorderError>())?;
    m.add_class::<PyVideo>()?;
    m.add_class::<PyBucket>()?;
    m.add_class::<PyDelayReport>()?;
    m.add_class::<PyOrderResult>()?;
    m.add_class::<PyGainStats>()?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(startup_delay, m)?)?;
    m.add_function(wrap_pyfunction!(next_tokens, m)?)?;
    m.add_function(wrap_pyfunction!(gain_stats, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_list, m)?)?;
    m.add_function(wrap_pyfunction!(order_videos, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(demo_set, m)?)?;
    m.add_function(wrap_pyfunction!(synth_sets, m)?)?;
    m.add_function(wrap_pyfunction!(hard_instance, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrappers_agree_with_the_library() {
        let (videos, bucket, blocked, interleaved) = demo_set();
        let slow = evaluate_list(videos.clone(), blocked.clone(), &bucket).unwrap();
        let fast = evaluate_list(videos.clone(), interleaved, &bucket).unwrap();
        assert!(fast.max_delay_s() < slow.max_delay_s());
        let (report, trace) = simulate(videos.clone(), blocked, &bucket).unwrap();
        assert!((report.max_delay_s() - slow.max_delay_s()).abs() < 1e-9);
        assert!(trace.iter().any(|&(_, tokens, _)| tokens == 0.0));

        let exact = order_videos(videos.clone(), &bucket, "exact", 0, order::DEFAULT_NODE_BUDGET).unwrap();
        assert!(exact.optimal());
        assert!(exact.max_delay_s() <= fast.max_delay_s() + 1e-12);
    }

    #[test]
    fn network_orders_permutations() {
        let net = PyNetwork::new(8, "nsac", 3).unwrap();
        let (videos, bucket, _, _) = demo_set();
        let mut order = net.order(videos.clone(), &bucket).unwrap().order();
        order.sort_unstable();
        assert_eq!(order, (0..8).collect::<Vec<_>>());
        assert!(net.predict_delay(videos).unwrap().is_finite());
    }
}
