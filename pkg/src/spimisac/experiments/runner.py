"""Monte Carlo harness.

Every trial draws its scenario from random streams keyed by
``(seed, trial, stream)``, so a trial's numbers do not depend on which worker
runs it or on which other trials exist.  All sweep points of a trial share
the same scenario (common random numbers).  Aggregation sorts by trial index
before averaging, which makes the CSV bytes independent of the worker count.
"""

from __future__ import annotations

import csv
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..array_model import ArrayGeometry, CarrierGrid, array_gain, deg2dir, dir2deg
from ..beamforming import ao_beamformers, design_hybrid, enumerate_patterns, optimal_precoder
from ..channel import PathSet, channel_from_parameters, frequency_channel, generate_paths
from ..estimation import build_bsa_dictionary, bsa_omp, random_sounding, sound_channel
from ..metrics import beamformer_error, precoder_beampattern, se_mimo, se_spim
from ..radar import TargetSet, dft_combiner, doa_grid, estimate_target_doas, music_spectra, noise_subspace
from ..radar import sample_covariance, synthesize_echo
from .config import ExperimentConfig, SweepSpec

__all__ = [
    "METHODS",
    "WORKERS_ENV",
    "Row",
    "SweepResult",
    "run_experiment",
    "run_mismatch_sweep",
    "run_arraygain_demo",
    "simulate_trial",
    "ARRAYGAIN_CASES",
    "write_arraygain_cases",
]

METHODS = ("FD", "MIMO-ISAC hybrid", "SPIM hybrid", "SPIM BSA-hybrid", "SI-AO", "SD-AO")
WORKERS_ENV = "SPIMISAC_WORKERS"
ARRAYGAIN_CASES = ((3.5e9, 0.1e9), (28e9, 2e9), (300e9, 30e9))

_PATHS, _TARGETS, _SOUNDING, _RADAR, _MISMATCH = range(5)


def _rng(seed, trial, stream):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial, stream)))


@dataclass(frozen=True)
class Row:
    sweep_value: float
    method: str
    metric: str
    mean: float
    stderr: float
    trials: int


@dataclass
class SweepResult:
    """Aggregated rows plus optional curves (beampatterns, array gains).

    ``curves`` maps a curve label to ``(x, mean, stderr)`` arrays.
    """

    config: ExperimentConfig
    rows: list = field(default_factory=list)
    curves: dict = field(default_factory=dict)
    x_label: str = ""

    def methods(self) -> list[str]:
        seen = dict.fromkeys(r.method for r in self.rows)
        return list(seen)

    def metrics(self) -> list[str]:
        return list(dict.fromkeys(r.metric for r in self.rows))

    def series(self, metric: str) -> dict:
        """``{method: (x, mean, stderr)}`` for one metric."""
        out = {}
        for method in self.methods():
            sel = [r for r in self.rows if r.metric == metric and r.method == method]
            if sel:
                out[method] = tuple(np.array(v) for v in zip(*[(r.sweep_value, r.mean, r.stderr) for r in sel]))
        return out

    def value(self, sweep_value, method, metric) -> float:
        for r in self.rows:
            if r.sweep_value == sweep_value and r.method == method and r.metric == metric:
                return r.mean
        raise KeyError((sweep_value, method, metric))

    def write_csv(self, out_dir) -> list[Path]:
        """``results.csv`` and, if present, ``curves.csv``; floats written with ``repr``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = [out_dir / "results.csv"]
        with paths[0].open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sweep_value", "method", "metric", "mean", "stderr", "trials"])
            for r in self.rows:
                w.writerow([repr(float(r.sweep_value)), r.method, r.metric, repr(float(r.mean)), repr(float(r.stderr)), r.trials])
        if self.curves:
            paths.append(out_dir / "curves.csv")
            with paths[1].open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["curve", "x", "mean", "stderr"])
                for label, (x, mean, err) in self.curves.items():
                    for xi, mi, ei in zip(x, mean, err):
                        w.writerow([label, repr(float(xi)), repr(float(mi)), repr(float(ei))])
        return paths


# ---------------------------------------------------------------- scenario


@dataclass
class _Scenario:
    paths: PathSet
    targets: np.ndarray
    mismatch_z: np.ndarray  # standard normals for dod, doa, target perturbations


def _draw_scenario(cfg: ExperimentConfig, trial: int) -> _Scenario:
    s = cfg.system
    paths = generate_paths(
        _rng(cfg.seed, trial, _PATHS),
        s.n_paths,
        cfg.gain_mean,
        cfg.gain_std,
        cfg.delay_max,
        complex_gains=cfg.complex_gains,
    )
    if cfg.path_dods_deg is not None:
        paths.dod = deg2dir(np.array(cfg.path_dods_deg))
    if cfg.path_doas_deg is not None:
        paths.doa = deg2dir(np.array(cfg.path_doas_deg))
    if cfg.targets_deg is not None:
        targets = deg2dir(np.array(cfg.targets_deg))
    else:
        targets = np.sin(_rng(cfg.seed, trial, _TARGETS).uniform(-np.pi / 2, np.pi / 2, s.n_targets))
    z = _rng(cfg.seed, trial, _MISMATCH).standard_normal(2 * s.n_paths + s.n_targets)
    return _Scenario(paths, targets, z)


def _perturb(directions, delta_deg, z, ratio):
    # angle ~ N(angle + delta, (ratio * delta)^2), clipped to [-90, 90] degrees
    if delta_deg == 0:
        return np.array(directions, dtype=float)
    angle = dir2deg(directions) + delta_deg + ratio * delta_deg * z
    return deg2dir(np.clip(angle, -90.0, 90.0))


def _scale(cfg, n_paths):
    s = cfg.system
    return 1.0 if cfg.channel_scale == "unit" else float(np.sqrt(s.n_t * s.n_r / n_paths))


# ---------------------------------------------------------------- design


@dataclass
class _Design:
    precoders: dict  # method -> (S or None, M, N_T, N_S) arrays
    errors: dict  # method -> (comm, radar)


def _estimate_parameters(cfg, trial, channel, grid, tx, rx, noise_var, targets, n_selected):
    s = cfg.system
    n_rf = s.n_targets + n_selected
    # targets: BSA-MUSIC on the echo received through a chirped DFT combiner
    rng = _rng(cfg.seed, trial, _RADAR)
    echo = synthesize_echo(
        TargetSet(targets, np.ones(targets.size)),
        tx,
        grid,
        dft_combiner(s.n_t, n_rf),
        1.0,
        cfg.radar_snapshots,
        10 ** (-cfg.radar_snr_db / 10),
        rng,
    )
    dgrid = doa_grid(cfg.doa_grid_points)
    un = noise_subspace(sample_covariance(echo), s.n_targets)
    _, spectrum = music_spectra(un, dgrid, tx, echo.combiner, grid.eta, "bsa")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        est = estimate_target_doas(spectrum, dgrid, s.n_targets)
    t_hat = list(est.directions)
    for g in np.argsort(-spectrum, kind="stable"):
        if len(t_hat) >= s.n_targets:
            break
        if dgrid[g] not in t_hat:
            t_hat.append(dgrid[g])
    # paths: BSA-OMP on noisy pilots
    rng = _rng(cfg.seed, trial, _SOUNDING)
    setup = random_sounding(rng, s.n_t, s.n_r, cfg.pilot_tx, cfg.pilot_rx, n_rf_user=n_selected)
    y = sound_channel(channel, setup, noise_var, rng)
    n_grid = cfg.omp_grid or 2 * s.n_t
    dicts = [build_bsa_dictionary(tx, rx, grid, m, n_grid) for m in range(1, grid.n_subcarriers + 1)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ch = bsa_omp(y, setup, dicts, s.n_paths, rx, tx)
    order = np.argsort(-np.mean(np.abs(ch.gains), axis=0), kind="stable")
    return np.array(t_hat), ch.doa[order], ch.dod[order], ch.gains[:, order]


def _design(cfg, trial, scen, point):
    """Beamformers for one sweep point; ``point`` holds the design-relevant values."""
    s = cfg.system
    n_sel = point["n_selected"]
    grid = CarrierGrid(s.f_c, point["bandwidth"], s.n_subcarriers)
    tx, rx = ArrayGeometry(s.n_t), ArrayGeometry(s.n_r)
    scale = _scale(cfg, s.n_paths)
    actual = frequency_channel(scen.paths, grid, rx, tx, True, scale)
    true_gains = actual.path_gains
    ratio = cfg.mismatch_std_ratio
    L, K = s.n_paths, s.n_targets
    if cfg.estimation == "estimated":
        targets, doa, dod, gains = _estimate_parameters(
            cfg, trial, actual, grid, tx, rx, point["noise_var"], scen.targets, n_sel
        )
    else:
        targets, doa, dod, gains = scen.targets, scen.paths.doa, scen.paths.dod, true_gains
    dod = _perturb(dod, point["mismatch_dod"], scen.mismatch_z[:L], ratio)
    doa = _perturb(doa, point["mismatch_doa"], scen.mismatch_z[L:2 * L], ratio)
    targets = _perturb(targets, point["mismatch_target"], scen.mismatch_z[2 * L:], ratio)

    if cfg.fopt_channel == "design":
        design_h = channel_from_parameters(gains, doa, dod, np.ones(grid.n_subcarriers), rx, tx).matrices
    else:
        design_h = actual.matrices
    f_opt = optimal_precoder(design_h, n_sel)
    patterns = enumerate_patterns(L, n_sel)
    sets = [
        design_hybrid(targets, dod, p, tx, f_opt, point["epsilon"], grid.eta, cfg.alt_tol, cfg.alt_max_iter, cfg.sd_unwrap)
        for p in patterns
    ]
    M = grid.n_subcarriers
    hyb = np.stack([b.hybrid() for b in sets])
    bsa = np.stack([b.hybrid(beam_split_aware=True) for b in sets])
    si = np.stack([np.broadcast_to(ao_beamformers(b.analog, point["epsilon"], K, n_sel), (M, s.n_t, n_sel)) for b in sets])
    sd = np.stack([ao_beamformers(b.sd_analog, point["epsilon"], K, n_sel) for b in sets])
    fd = optimal_precoder(actual.matrices, n_sel)

    f_opt_bar = np.concatenate(list(f_opt), axis=1)
    errs = []
    for b in sets:
        f_bb_bar = np.concatenate(list(b.baseband), axis=1)
        errs.append(beamformer_error(b.analog, f_bb_bar, f_opt_bar, b.analog[:, :K], b.pi))
    errs = np.array(errs)
    precoders = {
        "FD": fd[None],
        "MIMO-ISAC hybrid": hyb[:1],
        "SPIM hybrid": hyb,
        "SPIM BSA-hybrid": bsa,
        "SI-AO": si,
        "SD-AO": sd,
    }
    errors = {"MIMO-ISAC hybrid": tuple(errs[0]), "SPIM hybrid": tuple(errs.mean(axis=0))}
    return _Design(precoders, errors), actual, grid, tx


def _points(cfg):
    """Expand the sweep into dicts of design and evaluation values."""
    s = cfg.system
    base = dict(
        n_selected=s.n_selected,
        bandwidth=s.bandwidth,
        epsilon=cfg.epsilon,
        snr_db=cfg.snr_db,
        mismatch_dod=0.0,
        mismatch_doa=0.0,
        mismatch_target=0.0,
    )
    axis = cfg.sweep.axis
    key = {"l_s": "n_selected", "beampattern": "epsilon"}.get(axis, axis)
    out = []
    for v in cfg.sweep.values:
        p = dict(base)
        p[key] = int(v) if key == "n_selected" else float(v)
        p["noise_var"] = 10 ** (-p["snr_db"] / 10)
        out.append((float(v), p))
    return out


def _design_key(cfg, p):
    keys = ["n_selected", "bandwidth", "epsilon", "mismatch_dod", "mismatch_doa", "mismatch_target"]
    if cfg.estimation == "estimated":
        keys.append("snr_db")
    return tuple(p[k] for k in keys)


def simulate_trial(cfg: ExperimentConfig, trial: int):
    """Metrics of one trial.

    Returns ``(values, curves)``: ``values`` maps ``(sweep_value, method,
    metric)`` to a float, ``curves`` maps a label to a y-array.
    """
    scen = _draw_scenario(cfg, trial)
    values, curves = {}, {}
    cache = {}
    for x, p in _points(cfg):
        key = _design_key(cfg, p)
        if key not in cache:
            cache = {key: _design(cfg, trial, scen, p)}
        design, actual, grid, tx = cache[key]
        if cfg.sweep.axis == "beampattern":
            _beampattern_metrics(cfg, x, design, scen, grid, tx, values, curves)
            continue
        h = actual.matrices
        nv = p["noise_var"]
        for method in METHODS:
            f = design.precoders[method]
            if method in ("FD", "MIMO-ISAC hybrid"):
                se = se_mimo(h, f[0], nv).mean
            else:
                se = se_spim(h, f, nv, cfg.se_variant).mean
            values[(x, method, "se")] = se
            gain = precoder_beampattern(f, scen.targets, tx, grid.eta)
            values[(x, method, "bf_gain")] = float(np.mean(gain))
        for method, (comm, radar) in design.errors.items():
            values[(x, method, "comm_error")] = comm
            values[(x, method, "radar_error")] = radar
    return values, curves


def _beampattern_metrics(cfg, x, design, scen, grid, tx, values, curves):
    angles = np.linspace(-90.0, 90.0, cfg.beampattern_points)
    dirs = deg2dir(angles)
    hyb = design.precoders["SPIM hybrid"]
    for i in range(hyb.shape[0]):
        label = f"SPIM hybrid pattern {i + 1}"
        curves[f"{label} eps={x!r}"] = precoder_beampattern(hyb[i], dirs, tx, grid.eta)
        values[(x, label, "bf_gain")] = float(np.mean(precoder_beampattern(hyb[i], scen.targets, tx, grid.eta)))


def _trial_entry(args):
    cfg, trial = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return simulate_trial(cfg, trial)


def _workers(workers):
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers < 1:
        raise ValueError(f"worker count must be >= 1, got {workers}")
    return workers


def _x_label(axis):
    return {
        "snr_db": "SNR [dB]",
        "epsilon": "epsilon",
        "l_s": "L_S",
        "bandwidth": "bandwidth [Hz]",
        "mismatch_dod": "DoD mismatch [deg]",
        "mismatch_doa": "DoA mismatch [deg]",
        "mismatch_target": "target DoA mismatch [deg]",
        "beampattern": "epsilon",
    }.get(axis, axis)


def _aggregate(values_per_trial, n):
    mat = np.array(values_per_trial, dtype=float)
    mean = float(np.mean(mat))
    err = float(np.std(mat, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return mean, err


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> SweepResult:
    """Run all trials of ``cfg`` (``arraygain`` sweeps go to :func:`run_arraygain_demo`)."""
    if cfg.sweep.axis == "arraygain":
        return run_arraygain_demo(cfg)
    workers = _workers(workers)
    jobs = [(cfg, t) for t in range(cfg.trials)]
    if workers == 1:
        results = [_trial_entry(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_entry, jobs))
    # ordered reduction: results are already in trial order
    keys = list(results[0][0].keys())
    rows = []
    n = cfg.trials
    for key in keys:
        mean, err = _aggregate([r[0][key] for r in results], n)
        rows.append(Row(key[0], key[1], key[2], mean, err, n))
    order = {m: i for i, m in enumerate(METHODS)}
    rows.sort(key=lambda r: (list(dict.fromkeys(k[0] for k in keys)).index(r.sweep_value), order.get(r.method, len(order)), r.method, r.metric))
    curves = {}
    if results[0][1]:
        x = np.linspace(-90.0, 90.0, cfg.beampattern_points)
        for label in results[0][1]:
            stack = np.stack([r[1][label] for r in results])
            err = stack.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(stack.shape[1])
            curves[label] = (x, stack.mean(axis=0), err)
    return SweepResult(cfg, rows, curves, _x_label(cfg.sweep.axis))


def run_mismatch_sweep(cfg: ExperimentConfig, which: str, deltas, workers: int | None = None) -> SweepResult:
    """Sweep the angular mismatch (degrees) of ``which`` in {"dod", "doa", "target"}."""
    if which not in ("dod", "doa", "target"):
        raise ValueError(f"mismatch target must be dod, doa or target, got {which!r}")
    return run_experiment(cfg.replace(sweep=dict(axis=f"mismatch_{which}", values=list(deltas))), workers)


def run_arraygain_demo(cfg: ExperimentConfig | None = None, cases=ARRAYGAIN_CASES, n_points: int = 2048) -> SweepResult:
    """Array gain vs spatial direction at the lowest, center and highest subcarriers.

    The beamformer points at ``arraygain_direction_deg``; "center" is the
    carrier itself.  One curve per (case, subcarrier); rows record the
    peak location and value.
    """
    cfg = cfg or ExperimentConfig(sweep=SweepSpec(axis="arraygain", values=()))
    n = cfg.arraygain_n
    M = cfg.system.n_subcarriers
    phi = float(deg2dir(cfg.arraygain_direction_deg))
    grid_dirs = doa_grid(n_points)
    rows, curves = [], {}
    for f_c, bw in cases:
        grid = CarrierGrid(f_c, bw, M)
        tag = f"fc={f_c / 1e9:g}GHz B={bw / 1e9:g}GHz"
        for name, eta in (("low", grid.eta[0]), ("center", 1.0), ("high", grid.eta[-1])):
            gain = array_gain(n, phi, grid_dirs, eta)
            label = f"{tag} {name}"
            curves[label] = (grid_dirs, gain, np.zeros_like(gain))
            k = int(np.argmax(gain))
            rows.append(Row(f_c, label, "peak_direction", float(grid_dirs[k]), 0.0, 1))
            rows.append(Row(f_c, label, "peak_gain", float(gain[k]), 0.0, 1))
            rows.append(Row(f_c, label, "gain_at_physical", float(array_gain(n, phi, phi, eta)), 0.0, 1))
    return SweepResult(cfg, rows, curves, "spatial direction")



def write_arraygain_cases(result: SweepResult, out_dir) -> list[Path]:
    """One CSV per (f_c, B) case with columns ``direction, low, center, high``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cases = dict.fromkeys(label.rsplit(" ", 1)[0] for label in result.curves)
    paths = []
    for tag in cases:
        cols = [result.curves[f"{tag} {name}"] for name in ("low", "center", "high")]
        name = tag.replace("=", "").replace(" ", "_")
        path = out_dir / f"arraygain_{name}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["direction", "low", "center", "high"])
            for i, x in enumerate(cols[0][0]):
                w.writerow([repr(float(x))] + [repr(float(c[1][i])) for c in cols])
        paths.append(path)
    return paths
