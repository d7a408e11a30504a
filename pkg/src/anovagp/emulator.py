"""Local GP emulators per ANOVA term, their assembly, and the S-GP baseline.

A local emulator compresses one term's outputs with PCA and models each
retained principal coefficient with an independent GP.  Training is active:
starting from the quadrature dataset of the decomposition, points are added
one at a time from a seeded uniform candidate pool, always taking the pool
point with the largest variance indicator (the eigenvalue-weighted average
of the per-mode predictive variances), until the training budget is reached.

The assembled emulator predicts the anchor output plus the sum of the local
predictive means; the S-GP baseline applies PCA + GPs directly to raw
simulator outputs over the full input dimension.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import gp as gp_mod
from .anova import (AnovaIndex, IndexSelection, SimCache, TermDataset,
                    index_order_key, term_value)
from .exceptions import UndefinedIndicatorError
from .gp import GpModel, GpTrainConfig, predict_batch, train_gp
from .pca import PcaModel, fit_pca, reconstruct
from .simulators import Simulator

ARCHIVE_SCHEMA_VERSION = 1


@dataclass
class LocalGpEmulator:
    """PCA model plus per-mode GPs for one nonempty ANOVA term.

    A rank-zero term carries no GPs and always predicts the PCA mean.
    """

    index: AnovaIndex
    pca: PcaModel
    mode_gps: list[GpModel]
    train_inputs: np.ndarray   # (N, |t|)
    train_values: np.ndarray   # (N, d)
    acquisition_trace: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.pca.rank


def variance_indicator(local: LocalGpEmulator, xi_t: np.ndarray) -> float:
    """Eigenvalue-weighted average of the per-mode predictive variances."""
    if local.rank == 0:
        raise UndefinedIndicatorError(
            f"term {local.index} is constant (rank 0); the variance "
            "indicator is undefined")
    xi_t = np.atleast_1d(np.asarray(xi_t, dtype=float))
    lam = local.pca.eigenvalues
    variances = np.array([gp_mod.predict(g, xi_t)[1] for g in local.mode_gps])
    return float(lam @ variances / lam.sum())


def _indicator_batch(pca: PcaModel, mode_gps: list[GpModel],
                     pool: np.ndarray) -> np.ndarray:
    lam = pca.eigenvalues
    variances = np.stack([predict_batch(g, pool)[1] for g in mode_gps])
    return lam @ variances / lam.sum()


def _train_modes(inputs, targets, base_config: GpTrainConfig,
                 previous: list[GpModel] | None, refit_seed: int) -> list[GpModel]:
    """Train one GP per PCA mode, warm-starting from the previous refit."""
    models = []
    for r in range(targets.shape[0]):
        cfg = GpTrainConfig(restarts=base_config.restarts,
                            max_iter=base_config.max_iter,
                            jitter_floor=base_config.jitter_floor,
                            optimize_jitter=base_config.optimize_jitter,
                            seed=base_config.seed + 977 * refit_seed + r)
        if previous is not None and r < len(previous):
            prev = previous[r].hyper
            theta = np.concatenate([prev.log_sq_lengths,
                                    [prev.log_signal_var, prev.log_jitter_var]])
            if np.all(np.isfinite(theta)):
                cfg.warm_starts = [theta]
                cfg.restarts = 1
        models.append(train_gp(inputs, targets[r], cfg))
    return models


def train_local(t: AnovaIndex, theta_t: TermDataset, n_train: int,
                sim: Simulator, c: np.ndarray, cache: SimCache,
                pool_size: int = 1000, tol_pca: float = 1e-2, seed: int = 0,
                gp_config: GpTrainConfig | None = None,
                record_trace: bool = False) -> LocalGpEmulator:
    """Build the local emulator for term t with active training.

    The training set starts as the decomposition dataset of t.  Each active
    step refits PCA and the mode GPs, then moves the pool point with the
    largest variance indicator into the training set (evaluating the term
    through the shared simulator cache), until ``n_train`` points are reached;
    a final full refit closes the loop.  Deterministic for a fixed seed.
    """
    t = tuple(t)
    if n_train < 1:
        raise ValueError("n_train must be >= 1")
    if pool_size <= n_train:
        raise ValueError("pool_size must exceed n_train")
    gp_config = gp_config or GpTrainConfig()

    inputs = np.array(theta_t.grid.points)
    values = np.array(theta_t.values)
    rng = np.random.default_rng(seed)
    pool = sim.uniform_sample(rng, pool_size, coords=t)

    trace = []
    previous_gps: list[GpModel] | None = None
    refit = 0
    while True:
        pca_model, targets = fit_pca(values, tol_pca)
        if pca_model.rank == 0:
            return LocalGpEmulator(index=t, pca=pca_model, mode_gps=[],
                                   train_inputs=inputs, train_values=values,
                                   acquisition_trace=trace)
        mode_gps = _train_modes(inputs, targets, gp_config, previous_gps, refit)
        if inputs.shape[0] >= n_train:
            break
        tau = _indicator_batch(pca_model, mode_gps, pool)
        pick = int(np.argmax(tau))
        xi_star = pool[pick]
        if record_trace:
            trace.append({"pool": pool.copy(), "chosen": pick,
                          "pca": pca_model, "mode_gps": mode_gps})
        y_star = term_value(t, xi_star, sim, c, cache)
        inputs = np.vstack([inputs, xi_star])
        values = np.vstack([values, y_star])
        pool = np.delete(pool, pick, axis=0)
        previous_gps = mode_gps
        refit += 1

    return LocalGpEmulator(index=t, pca=pca_model, mode_gps=mode_gps,
                           train_inputs=inputs, train_values=values,
                           acquisition_trace=trace)


def predict_local_mean(local: LocalGpEmulator, xi_t: np.ndarray) -> np.ndarray:
    """Predictive mean of the local model: V m' + mu."""
    if local.rank == 0:
        return np.array(local.pca.mean)
    xi_t = np.atleast_1d(np.asarray(xi_t, dtype=float))
    if xi_t.shape != (len(local.index),):
        raise ValueError(f"expected a point of the {len(local.index)}-dim "
                         f"subcube of {local.index}, got shape {xi_t.shape}")
    means = np.array([gp_mod.predict(g, xi_t)[0] for g in local.mode_gps])
    return reconstruct(local.pca, means)


@dataclass
class AnovaGpEmulator:
    """Assembled emulator: cached anchor output plus the local term models."""

    anchor_output: np.ndarray
    anchor: np.ndarray
    locals: dict[AnovaIndex, LocalGpEmulator]
    selection: IndexSelection

    def predict_mean(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        out = np.array(self.anchor_output)
        for t, local in self.locals.items():
            out += predict_local_mean(local, xi[[i - 1 for i in t]])
        return out

    def predict_variance(self, xi: np.ndarray) -> np.ndarray:
        """Per-component variance aggregate, terms treated as independent.

        Diagnostic only: sum over terms of V diag(v'_r) V^T restricted to
        the diagonal.
        """
        xi = np.asarray(xi, dtype=float)
        out = np.zeros_like(self.anchor_output)
        for t, local in self.locals.items():
            if local.rank == 0:
                continue
            xi_t = xi[[i - 1 for i in t]]
            for r, g in enumerate(local.mode_gps):
                _, var = gp_mod.predict(g, xi_t)
                out += var * local.pca.components[:, r] ** 2
        return out


def assemble(selection: IndexSelection, anchor_output: np.ndarray,
             locals_map: dict[AnovaIndex, LocalGpEmulator],
             anchor: np.ndarray) -> AnovaGpEmulator:
    """Assemble the overall emulator from the selection and the local models.

    Every selected nonempty index must have a local model; the empty term is
    the exact anchor output, never a GP.
    """
    wanted = {t for t in selection.indices if t}
    missing = wanted - set(locals_map)
    if missing:
        raise ValueError(f"missing local emulators for indices {sorted(missing)}")
    ordered = {t: locals_map[t] for t in sorted(wanted, key=index_order_key)}
    return AnovaGpEmulator(anchor_output=np.asarray(anchor_output, dtype=float),
                           anchor=np.asarray(anchor, dtype=float),
                           locals=ordered, selection=selection)


@dataclass
class SgpEmulator:
    """Baseline: PCA over raw outputs, GPs over the full input dimension."""

    pca: PcaModel
    mode_gps: list[GpModel]
    train_inputs: np.ndarray

    @property
    def rank(self) -> int:
        return self.pca.rank


def train_sgp(sim: Simulator, n: int, tol_pca: float = 1e-2, seed: int = 0,
              gp_config: GpTrainConfig | None = None,
              cache: SimCache | None = None) -> SgpEmulator:
    """Train the standard-GP baseline on n i.i.d. uniform input samples."""
    if n < 1:
        raise ValueError("n must be >= 1")
    gp_config = gp_config or GpTrainConfig()
    rng = np.random.default_rng(seed)
    inputs = sim.uniform_sample(rng, n)
    evaluate = cache.evaluate if cache is not None else sim.evaluate
    outputs = np.stack([np.asarray(evaluate(x), dtype=float) for x in inputs])
    pca_model, targets = fit_pca(outputs, tol_pca)
    mode_gps = []
    for r in range(pca_model.rank):
        cfg = GpTrainConfig(restarts=gp_config.restarts,
                            max_iter=gp_config.max_iter,
                            jitter_floor=gp_config.jitter_floor,
                            optimize_jitter=gp_config.optimize_jitter,
                            seed=gp_config.seed + r)
        mode_gps.append(train_gp(inputs, targets[r], cfg))
    return SgpEmulator(pca=pca_model, mode_gps=mode_gps, train_inputs=inputs)


def predict_sgp_mean(emulator: SgpEmulator, xi: np.ndarray) -> np.ndarray:
    """Predictive mean of the S-GP baseline: V m' + mu."""
    if emulator.rank == 0:
        return np.array(emulator.pca.mean)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    means = np.array([gp_mod.predict(g, xi)[0] for g in emulator.mode_gps])
    return reconstruct(emulator.pca, means)


# ---------------------------------------------------------------------------
# Serialization: a versioned npz archive with exact float preservation
# ---------------------------------------------------------------------------

def _hyper_to_array(hyper) -> np.ndarray:
    return np.concatenate([hyper.log_sq_lengths,
                           [hyper.log_signal_var, hyper.log_jitter_var]])


def _rebuild_gp(inputs: np.ndarray, targets: np.ndarray,
                loghyp: np.ndarray) -> GpModel:
    from scipy.linalg import cho_solve, cholesky

    hyper = gp_mod.Hyperparameters(
        log_sq_lengths=loghyp[:-2].copy(),
        log_signal_var=float(loghyp[-2]),
        log_jitter_var=float(loghyp[-1]))
    k, _ = gp_mod._kernel_matrix(gp_mod._pairwise_sqdists(inputs),
                                 hyper.sq_lengths, hyper.signal_var,
                                 hyper.jitter_var)
    low = cholesky(k, lower=True)
    w = cho_solve((low, True), targets)
    return GpModel(inputs=inputs, targets=targets, hyper=hyper,
                   chol_lower=low, weights=w,
                   final_nlml=gp_mod._nlml_from_parts(low, w, targets))


def _selection_to_meta(selection: IndexSelection) -> dict:
    return {
        "orders": {str(i): [list(t) for t in ts]
                   for i, ts in selection.orders.items()},
        "weights": {",".join(map(str, t)): w
                    for t, w in selection.weights.items()},
        "candidate_counts": {str(i): n
                             for i, n in selection.candidate_counts.items()},
    }


def _selection_from_meta(meta: dict) -> IndexSelection:
    orders = {int(i): [tuple(t) for t in ts]
              for i, ts in meta["orders"].items()}
    weights = {tuple(int(x) for x in key.split(",")): float(w)
               for key, w in meta["weights"].items() if key}
    counts = {int(i): int(n) for i, n in meta["candidate_counts"].items()}
    return IndexSelection(orders=orders, weights=weights,
                          candidate_counts=counts)


def save_emulator(emulator, path: str) -> None:
    """Write an emulator (ANOVA-GP or S-GP) to a versioned npz archive."""
    arrays: dict[str, np.ndarray] = {}
    if isinstance(emulator, AnovaGpEmulator):
        meta = {"schema_version": ARCHIVE_SCHEMA_VERSION, "kind": "anova-gp",
                "terms": [], "selection": _selection_to_meta(emulator.selection)}
        arrays["anchor_output"] = emulator.anchor_output
        arrays["anchor"] = emulator.anchor
        for i, (t, local) in enumerate(emulator.locals.items()):
            meta["terms"].append({"coords": list(t), "rank": local.rank})
            arrays[f"t{i}_mean"] = local.pca.mean
            arrays[f"t{i}_components"] = local.pca.components
            arrays[f"t{i}_eigenvalues"] = local.pca.eigenvalues
            arrays[f"t{i}_total_variance"] = np.float64(local.pca.total_variance)
            arrays[f"t{i}_inputs"] = local.train_inputs
            arrays[f"t{i}_values"] = local.train_values
            for r, g in enumerate(local.mode_gps):
                arrays[f"t{i}_m{r}_targets"] = g.targets
                arrays[f"t{i}_m{r}_loghyp"] = _hyper_to_array(g.hyper)
    elif isinstance(emulator, SgpEmulator):
        meta = {"schema_version": ARCHIVE_SCHEMA_VERSION, "kind": "sgp",
                "rank": emulator.rank}
        arrays["sgp_mean"] = emulator.pca.mean
        arrays["sgp_components"] = emulator.pca.components
        arrays["sgp_eigenvalues"] = emulator.pca.eigenvalues
        arrays["sgp_total_variance"] = np.float64(emulator.pca.total_variance)
        arrays["sgp_inputs"] = emulator.train_inputs
        for r, g in enumerate(emulator.mode_gps):
            arrays[f"sgp_m{r}_targets"] = g.targets
            arrays[f"sgp_m{r}_loghyp"] = _hyper_to_array(g.hyper)
    else:
        raise TypeError(f"cannot serialize {type(emulator).__name__}")
    arrays["meta"] = np.array(json.dumps(meta))
    np.savez(path, **arrays)


def load_emulator(path: str):
    """Load an emulator archive written by ``save_emulator``."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta["schema_version"] != ARCHIVE_SCHEMA_VERSION:
            raise ValueError(
                f"unsupported archive version {meta['schema_version']}")
        if meta["kind"] == "anova-gp":
            locals_map: dict[AnovaIndex, LocalGpEmulator] = {}
            for i, term_meta in enumerate(meta["terms"]):
                t = tuple(term_meta["coords"])
                pca_model = PcaModel(
                    mean=data[f"t{i}_mean"],
                    components=data[f"t{i}_components"],
                    eigenvalues=data[f"t{i}_eigenvalues"],
                    total_variance=float(data[f"t{i}_total_variance"]))
                inputs = data[f"t{i}_inputs"]
                mode_gps = [
                    _rebuild_gp(inputs, data[f"t{i}_m{r}_targets"],
                                data[f"t{i}_m{r}_loghyp"])
                    for r in range(term_meta["rank"])]
                locals_map[t] = LocalGpEmulator(
                    index=t, pca=pca_model, mode_gps=mode_gps,
                    train_inputs=inputs, train_values=data[f"t{i}_values"])
            return AnovaGpEmulator(
                anchor_output=data["anchor_output"], anchor=data["anchor"],
                locals=locals_map,
                selection=_selection_from_meta(meta["selection"]))
        if meta["kind"] == "sgp":
            pca_model = PcaModel(
                mean=data["sgp_mean"], components=data["sgp_components"],
                eigenvalues=data["sgp_eigenvalues"],
                total_variance=float(data["sgp_total_variance"]))
            inputs = data["sgp_inputs"]
            mode_gps = [
                _rebuild_gp(inputs, data[f"sgp_m{r}_targets"],
                            data[f"sgp_m{r}_loghyp"])
                for r in range(meta["rank"])]
            return SgpEmulator(pca=pca_model, mode_gps=mode_gps,
                               train_inputs=inputs)
        raise ValueError(f"unknown archive kind {meta['kind']!r}")
