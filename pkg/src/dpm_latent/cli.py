"""Experiment runner: ``dpm-latent run <config.toml>`` and ``dpm-latent selftest``.

A config is a TOML file.  Top-level keys ``kind`` and ``seed`` select the
experiment and its global seed; the tables used are

``[schedule]``      T, beta_start, beta_end
``[model]``         type ("analytic" | "denoiser"), kind, eta, optional ``[model.train]``
``[domains.NAME]``  domain specs (see :class:`dpm_latent.data.DomainSpec`)
``[source]``, ``[target]``  domain = NAME, optional cond (mixture label) or side ("a" | "b")
``[run]``           n_samples, T_es, T_sd, T_g, lambdas, save_samples, ...
``[guidance]``      Langevin settings for ``kind = "guide"``
``[edit]``          direction-search settings for ``kind = "local-edit"``

Outputs land in ``<outdir>/report.json``, ``<outdir>/metrics.csv``,
``<outdir>/traces/*.csv`` and optionally ``<outdir>/samples.bin``.  Exit
codes: 0 success, 2 config error, 3 numerical failure.
"""

import argparse
import copy
import hashlib
import json
import os
import struct
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from . import guidance as gd
from . import metrics as mt
from .data import (
    DomainSpec,
    images_to_vectors,
    make_gaussian_mixture_domain,
    make_toy_image_domains,
    vectors_to_images,
)
from .encoder import dpm_encode
from .errors import ConfigError, DPMError
from .models import TrainConfig, denoiser_train, gm_mean_estimator
from .models.estimators import KINDS as MODEL_KINDS
from .models.estimators import EpsilonMeanEstimator
from .rng import make_rng
from .sampler import DeterministicGenerator, IdentityGenerator, StochasticGenerator, generate
from .schedule import NoiseSchedule
from .selftest import selftest
from .translation import (
    cycle_translate,
    ddib_translate,
    estimate_condition_gap,
    estimate_lipschitz,
    probe_region,
    propagate_bound,
    sdedit_refine,
)

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

EXPERIMENT_KINDS = (
    "reconstruct",
    "translate",
    "sdedit",
    "ddib",
    "guide",
    "bound-check",
    "local-edit",
    "metrics-selftest",
)
SAMPLES_MAGIC = b"DPMI"
_SAMPLES_HEADER = struct.Struct("<4sIIII")

# stream keys: make_rng(seed, key, task_index)
_K_TASK, _K_TRAIN, _K_DATA = 11, 12, 13

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


# -- config access ----------------------------------------------------------

_REQUIRED = object()


def _get(table, key, path, default=_REQUIRED, types=None, check=None, why=""):
    """Fetch ``table[key]`` with a field-path diagnostic on failure."""
    where = f"{path}.{key}" if path else key
    if key not in table:
        if default is _REQUIRED:
            raise ConfigError(f"config field '{where}': missing")
        return default
    value = table[key]
    if types is not None and (not isinstance(value, types) or isinstance(value, bool) and bool not in _as_tuple(types)):
        raise ConfigError(f"config field '{where}': expected {_type_names(types)}, got {value!r}")
    if check is not None and not check(value):
        raise ConfigError(f"config field '{where}': invalid value {value!r}{' (' + why + ')' if why else ''}")
    return value


def _as_tuple(t):
    return t if isinstance(t, tuple) else (t,)


def _type_names(types):
    return " or ".join(t.__name__ for t in _as_tuple(types))


def _table(cfg, key, path="", required=True):
    where = f"{path}.{key}" if path else key
    if key not in cfg:
        if required:
            raise ConfigError(f"config table '[{where}]': missing")
        return {}
    if not isinstance(cfg[key], dict):
        raise ConfigError(f"config field '{where}': expected a table")
    return cfg[key]


def _int_list(value):
    return [value] if isinstance(value, int) else list(value)


def load_config(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


# -- wiring -----------------------------------------------------------------


class Endpoint:
    """A model plus the data it was built for: estimator, sampler, condition, image shape."""

    def __init__(self, model, sample, cond=None, image_shape=None, peak=1.0):
        self.model = model
        self.sample = sample  # sample(n, rng) -> (n, d) data vectors
        self.cond = cond
        self.image_shape = image_shape
        self.peak = peak

    def to_images(self, vectors):
        return vectors_to_images(vectors, self.image_shape, self.peak)


class Experiment:
    def __init__(self, cfg):
        self.cfg = cfg
        self.kind = _get(cfg, "kind", "", types=str, check=lambda k: k in EXPERIMENT_KINDS, why=f"one of {EXPERIMENT_KINDS}")
        self.seed = _get(cfg, "seed", "", types=int, check=lambda v: v >= 0)
        self.run = _table(cfg, "run", required=False)
        self._schedule = None
        self._models = {}
        self._domains = {}

    # schedule / model -----------------------------------------------------
    @property
    def schedule(self):
        if self._schedule is None:
            sc = _table(self.cfg, "schedule")
            T = _get(sc, "T", "schedule", types=int, check=lambda v: v >= 1)
            b0 = _get(sc, "beta_start", "schedule", 1e-4, (int, float))
            b1 = _get(sc, "beta_end", "schedule", 0.02, (int, float))
            if "betas" in sc:
                self._schedule = NoiseSchedule(sc["betas"])
                if self._schedule.T != T:
                    raise ConfigError("config field 'schedule.betas': length differs from schedule.T")
            else:
                self._schedule = NoiseSchedule.from_config({"T": T, "beta_start": b0, "beta_end": b1})
        return self._schedule

    def model_block(self):
        mb = _table(self.cfg, "model")
        mtype = _get(mb, "type", "model", "analytic", str, lambda v: v in ("analytic", "denoiser"))
        kind = _get(mb, "kind", "model", "ddim", str, lambda v: v in MODEL_KINDS, f"one of {MODEL_KINDS}")
        eta = float(_get(mb, "eta", "model", 0.0, (int, float), lambda v: v >= 0))
        return mtype, kind, eta

    def domain_spec(self, name, path):
        domains = _table(self.cfg, "domains")
        if name not in domains:
            raise ConfigError(f"config field '{path}': unknown domain {name!r}")
        if name not in self._domains:
            try:
                self._domains[name] = DomainSpec.from_dict(dict(domains[name]))
            except TypeError as exc:
                raise ConfigError(f"config table '[domains.{name}]': {exc}") from None
            except ConfigError as exc:
                raise ConfigError(f"config table '[domains.{name}]': {exc}") from None
        return self._domains[name]

    def endpoint(self, role):
        block = _table(self.cfg, role)
        name = _get(block, "domain", role, types=str)
        spec = self.domain_spec(name, f"{role}.domain")
        mtype, kind, eta = self.model_block()
        s = self.schedule
        if spec.kind == "gaussian-mixture":
            if mtype != "analytic":
                raise ConfigError("config field 'model.type': mixture domains use the analytic model")
            gm, sampler = make_gaussian_mixture_domain(spec)
            cond = _get(block, "cond", role, None, int)
            if cond is not None and cond not in gm.condition_set:
                raise ConfigError(f"config field '{role}.cond': label {cond} not in {gm.condition_set}")
            key = (name, kind, eta)
            if key not in self._models:
                self._models[key] = gm_mean_estimator(gm, s, kind, eta)
            return Endpoint(self._models[key], lambda n, rng: sampler(n, rng, cond), cond)
        side = _get(block, "side", role, "a", str, lambda v: v in ("a", "b"))
        if mtype != "denoiser":
            raise ConfigError("config field 'model.type': toy-image domains need type = \"denoiser\"")
        pair = make_toy_image_domains(spec)
        dom = pair.a if side == "a" else pair.b
        key = (name, side, kind, eta)
        if key not in self._models:
            self._models[key] = EpsilonMeanEstimator(self._train(name, side, dom, spec), s, kind, eta)

        def sample(n, rng):
            return images_to_vectors(dom.sample(n, rng), spec.peak)

        return Endpoint(self._models[key], sample, None, dom.image_shape, spec.peak)

    def _train(self, name, side, dom, spec):
        tb = _table(_table(self.cfg, "model"), "train", "model", required=False)
        known = {f.name for f in fields(TrainConfig)} | {"n_train"}
        unknown = set(tb) - known
        if unknown:
            raise ConfigError(f"config table '[model.train]': unknown field(s) {sorted(unknown)}")
        n_train = _get(tb, "n_train", "model.train", 4096, int, lambda v: v > 0)
        names = sorted(_table(self.cfg, "domains"))
        stream = 2 * names.index(name) + (side == "b")
        data = images_to_vectors(dom.sample(n_train, make_rng(self.seed, _K_TRAIN, stream)), spec.peak)
        params = {k: v for k, v in tb.items() if k != "n_train"}
        params.setdefault("seed", self.seed * 1000 + stream)
        return denoiser_train(data, self.schedule, TrainConfig(**params))

    def n_samples(self, default=100):
        return _get(self.run, "n_samples", "run", default, int, lambda v: v >= 1)

    def sweep(self, key, default):
        v = _get(self.run, key, "run", default, (int, list))
        vals = _int_list(v)
        T = self.schedule.T
        if not vals or any(not isinstance(x, int) or not 0 <= x <= T for x in vals):
            raise ConfigError(f"config field 'run.{key}': entries must be integers in 0..{T}")
        return vals

    def task_rng(self, idx):
        return make_rng(self.seed, _K_TASK, idx)

    def data_rng(self, idx=0):
        return make_rng(self.seed, _K_DATA, idx)


def _threads():
    try:
        return max(1, int(os.environ.get("DPM_LATENT_THREADS", "1")))
    except ValueError:
        return 1


def _map_tasks(fn, items):
    """Run ``fn(index, item)`` over items; results keep item order whatever the worker count."""
    n = min(_threads(), len(items))
    if n <= 1:
        return [fn(i, it) for i, it in enumerate(items)]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, range(len(items)), items))


def _faithfulness_rows(run_id, src, out, ep):
    rows = [(run_id, "mean_l2", float(np.mean(np.linalg.norm(out - src, axis=-1))))]
    rows.append((run_id, "max_abs_diff", float(np.max(np.abs(out - src)))))
    if ep.image_shape is not None:
        a, b = ep.to_images(src), ep.to_images(out)
        ss = [mt.ssim(x, y, peak=ep.peak) for x, y in zip(a, b)]
        ps = [mt.psnr(x, y, peak=ep.peak) for x, y in zip(a, b)]
        rows += [(run_id, "ssim_mean", float(np.mean(ss))), (run_id, "psnr_mean", float(np.mean(ps)))]
        rows += [(f"{run_id}/sample={i}", "ssim", v) for i, v in enumerate(ss)]
    return rows


def _distribution_rows(run_id, out, ref):
    return [(run_id, "mmd2_to_target", mt.mmd2(out, ref))]


# -- experiment kinds -------------------------------------------------------


def _reconstruct(ex, art):
    src = ex.endpoint("source")
    x0 = src.sample(ex.n_samples(), ex.data_rng())
    z = dpm_encode(src.model, x0, ex.task_rng(0), src.cond)
    xr = generate(src.model, z, src.cond)
    err = np.abs(xr - x0)
    art["samples"] = (src, xr)
    return [
        ("reconstruct", "max_abs_recon_error", float(err.max())),
        ("reconstruct", "mean_abs_recon_error", float(err.mean())),
    ]


def _translate(ex, art):
    src, tgt = ex.endpoint("source"), ex.endpoint("target")
    x0 = src.sample(ex.n_samples(), ex.data_rng())
    ref = tgt.sample(ex.n_samples(), ex.data_rng(1))
    sweep = ex.sweep("T_es", ex.schedule.T)

    def task(i, T_es):
        res = cycle_translate(src.model, tgt.model, x0, T_es, ex.task_rng(i), src.cond, tgt.cond, seed=ex.seed)
        return res

    results = _map_tasks(task, sweep)
    rows = []
    for T_es, res in zip(sweep, results):
        rid = f"T_es={T_es}"
        rows += _faithfulness_rows(rid, x0, res.output, src) + _distribution_rows(rid, res.output, ref)
        art["traces"][f"distances_T_es_{T_es}.csv"] = res.to_csv
    art["samples"] = (tgt, results[-1].output)
    return rows


def _sdedit(ex, art):
    src, tgt = ex.endpoint("source"), ex.endpoint("target")
    x0 = src.sample(ex.n_samples(), ex.data_rng())
    ref = tgt.sample(ex.n_samples(), ex.data_rng(1))
    sweep = ex.sweep("T_sd", ex.schedule.T // 2)
    outs = _map_tasks(lambda i, T_sd: sdedit_refine(tgt.model, x0, T_sd, ex.task_rng(i), tgt.cond), sweep)
    rows = []
    for T_sd, out in zip(sweep, outs):
        rid = f"T_sd={T_sd}"
        rows += _faithfulness_rows(rid, x0, out, src) + _distribution_rows(rid, out, ref)
    art["samples"] = (tgt, outs[-1])
    return rows


def _ddib(ex, art):
    src, tgt = ex.endpoint("source"), ex.endpoint("target")
    x0 = src.sample(ex.n_samples(), ex.data_rng())
    ref = tgt.sample(ex.n_samples(), ex.data_rng(1))
    T_g = _get(ex.run, "T_g", "run", ex.schedule.T, int, lambda v: 1 <= v <= ex.schedule.T)
    out = ddib_translate(src.model, tgt.model, x0, T_g, src.cond, tgt.cond)
    back = ddib_translate(tgt.model, src.model, out, T_g, tgt.cond, src.cond)
    rid = f"T_g={T_g}"
    rows = _faithfulness_rows(rid, x0, out, src) + _distribution_rows(rid, out, ref)
    rows.append((rid, "cycle_max_abs_error", float(np.max(np.abs(back - x0)))))
    art["samples"] = (tgt, out)
    return rows


def _guide(ex, art):
    g = _table(ex.cfg, "guidance")
    gen_kind = _get(g, "generator", "guidance", "identity", str, lambda v: v in ("identity", "stochastic", "deterministic"))
    if gen_kind == "identity":
        gen = IdentityGenerator(_get(g, "dim", "guidance", 1, int, lambda v: v >= 1))
    else:
        src = ex.endpoint("source")
        d = src.sample(1, ex.data_rng()).shape[-1]
        if gen_kind == "stochastic":
            if ex.schedule.T > 10:
                raise ConfigError("config field 'schedule.T': full-latent guidance is capped at T <= 10")
            gen = StochasticGenerator(src.model, d, src.cond)
        else:
            gen = DeterministicGenerator(src.model, d, _get(g, "T_g", "guidance", None, int), src.cond)
    energy_kind = _get(g, "energy", "guidance", "quadratic", str, lambda v: v in ("quadratic", "indicator"))
    if energy_kind == "quadratic":
        energy = gd.QuadraticEnergy(np.asarray(_get(g, "center", "guidance", 0.0, (int, float, list)), dtype=float))
    else:
        energy = gd.IndicatorEnergy(_get(g, "lo", "guidance", types=(int, float)), _get(g, "hi", "guidance", types=(int, float)))
    lambdas = _get(ex.run, "lambdas", "run", [1.0], list)
    if not lambdas or any(not isinstance(v, (int, float)) or v < 0 for v in lambdas):
        raise ConfigError("config field 'run.lambdas': nonnegative numbers required")
    base = dict(
        n_steps=_get(g, "n_steps", "guidance", 200, int, lambda v: v >= 0),
        step_size=float(_get(g, "step_size", "guidance", 0.05, (int, float), lambda v: v > 0)),
        n_chains=_get(g, "n_chains", "guidance", 256, int, lambda v: v >= 1),
    )

    def task(i, lam):
        cfg = gd.GuidanceConfig(lam=float(lam), seed=ex.seed, **base)
        z = gd.langevin_guide(gen, energy, cfg, rng=ex.task_rng(i))
        return z, energy.value(gen(z))

    rows = []
    for lam, (z, e) in zip(lambdas, _map_tasks(task, lambdas)):
        rid = f"lambda={lam}"
        rows += [
            (rid, "mean_energy", float(np.mean(e))),
            (rid, "std_energy", float(np.std(e))),
            (rid, "latent_mean0", float(np.mean(z[:, 0]))),
            (rid, "latent_var0", float(np.var(z[:, 0]))),
        ]
    return rows


def _bound_check(ex, art):
    src, tgt = ex.endpoint("source"), ex.endpoint("target")
    T_es = ex.sweep("T_es", ex.schedule.T)[0]
    x0 = src.sample(ex.n_samples(), ex.data_rng())
    res = cycle_translate(src.model, tgt.model, x0, T_es, ex.task_rng(0), src.cond, tgt.cond)
    n_probes = _get(ex.run, "n_probes", "run", 256, int, lambda v: v >= 2)
    spec = ex.domain_spec(_table(ex.cfg, "source")["domain"], "source.domain")
    gm, _ = make_gaussian_mixture_domain(spec)
    K, S = [], []
    for t in range(T_es, 0, -1):
        region = probe_region(gm, ex.schedule, t)
        K.append(estimate_lipschitz(tgt.model, t, tgt.cond, region, n_probes, ex.task_rng(t), gm.dim))
        S.append(
            estimate_condition_gap(src.model, t, src.cond, tgt.cond, region, n_probes, ex.task_rng(t), gm.dim, m_b=tgt.model)
        )
    prof = propagate_bound(K, S, res.distances)
    art["traces"]["bound.csv"] = prof.to_csv
    flat = np.asarray(res.distances).reshape(T_es + 1, -1)
    ratio = np.max(flat, axis=1) / np.maximum(prof.B, 1e-300)
    return [
        (f"T_es={T_es}", "violations", float(len(prof.violations))),
        (f"T_es={T_es}", "B_0", float(prof.B[-1])),
        (f"T_es={T_es}", "max_final_distance", float(np.max(flat[-1]))),
        (f"T_es={T_es}", "max_ratio_measured_to_bound", float(np.max(ratio[1:]))),
    ]


def _local_edit(ex, art):
    e = _table(ex.cfg, "edit", required=False)
    src = ex.endpoint("source")
    d = src.sample(1, ex.data_rng()).shape[-1]
    gen = DeterministicGenerator(src.model, d, _get(e, "T_g", "edit", min(10, ex.schedule.T), int), src.cond)
    w = np.asarray(_get(e, "classifier_w", "edit", [1.0] * d, list), dtype=float)
    if w.shape != (d,):
        raise ConfigError(f"config field 'edit.classifier_w': need {d} entries")
    clf = gd.LinearSoftmaxClassifier.binary(w, float(_get(e, "classifier_bias", "edit", 0.0, (int, float))))
    cls_energy = gd.classifier_energy(clf, 1)
    embed = gd.RandomFeatureMap(d, _get(e, "embed_dim", "edit", 16, int), seed=make_rng(ex.seed, _K_TASK, 99))
    base_z = ex.data_rng().standard_normal((ex.n_samples(8), d))
    r = float(_get(e, "radius", "edit", 1.0, (int, float), lambda v: v > 0))
    lam = float(_get(e, "lambda_cls", "edit", 1.0, (int, float), lambda v: v >= 0))
    steps = _get(e, "steps", "edit", 100, int, lambda v: v >= 0)
    lr = float(_get(e, "lr", "edit", 0.1, (int, float), lambda v: v > 0))
    n0 = ex.task_rng(0).standard_normal(d)
    n0 *= r / np.linalg.norm(n0)
    before, _ = gd.edit_objective(gen, cls_energy, embed, n0, base_z, lam)
    n = gd.optimize_edit_direction(gen, cls_energy, embed, r, lam, base_z, steps, lr, n0=n0)
    after, _ = gd.edit_objective(gen, cls_energy, embed, n, base_z, lam)
    p_before = clf.probs(gen(base_z))[:, 1]
    p_after = clf.probs(gen(base_z + n))[:, 1]
    return [
        ("edit", "objective_initial", before),
        ("edit", "objective_final", after),
        ("edit", "direction_norm", float(np.linalg.norm(n))),
        ("edit", "target_prob_unedited", float(np.mean(p_before))),
        ("edit", "target_prob_edited", float(np.mean(p_after))),
    ]


def _metrics_selftest(ex, art):
    rng = ex.task_rng(0)
    board = (np.indices((8, 8)).sum(0) % 2).astype(float)
    X, Y = rng.standard_normal((500, 2)), rng.standard_normal((500, 2))
    return [
        ("metrics", "psnr_mse1_peak255", mt.psnr(np.zeros(10), np.ones(10), peak=255.0)),
        ("metrics", "psnr_mse0.01_peak1", mt.psnr(np.zeros(10), np.full(10, 0.1))),
        ("metrics", "psnr_identical", mt.psnr(board, board)),
        ("metrics", "ssim_identical", mt.ssim(board, board)),
        ("metrics", "ssim_checkerboard_vs_inverse", mt.ssim(board, 1.0 - board)),
        ("metrics", "mmd2_hand_case", mt.mmd2([0.0], [1.0], bandwidth=1.0)),
        ("metrics", "mmd2_same_gaussian", mt.mmd2(X, Y)),
        ("metrics", "sliced_w1_1d_pair", mt.sliced_w1([0.0], [1.0], 8, rng)),
    ]


_RUNNERS = {
    "reconstruct": _reconstruct,
    "translate": _translate,
    "sdedit": _sdedit,
    "ddib": _ddib,
    "guide": _guide,
    "bound-check": _bound_check,
    "local-edit": _local_edit,
    "metrics-selftest": _metrics_selftest,
}


# -- output -----------------------------------------------------------------


def write_samples(path, images):
    """Image tensor dump: header (magic, count, h, w, c) then little-endian float32 pixels."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[..., None]
    n, h, w, c = images.shape
    with open(path, "wb") as fh:
        fh.write(_SAMPLES_HEADER.pack(SAMPLES_MAGIC, n, h, w, c))
        fh.write(images.astype("<f4").tobytes())


def read_samples(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, n, h, w, c = _SAMPLES_HEADER.unpack_from(blob)
    if magic != SAMPLES_MAGIC:
        raise ConfigError(f"{path}: not an image tensor dump")
    return np.frombuffer(blob, dtype="<f4", offset=_SAMPLES_HEADER.size).reshape(n, h, w, c)


def run_experiment(config, outdir=None, seed_override=None, quiet=True):
    """Run one experiment; ``config`` is a path or an already-parsed dict.

    Returns the report dict and writes it (plus CSVs) under ``outdir``
    (default: ``run.outdir`` from the config, else ``./runs/<kind>``).
    """
    cfg = load_config(config) if isinstance(config, (str, Path)) else copy.deepcopy(config)
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    ex = Experiment(cfg)
    start = time.time()
    art = {"traces": {}, "samples": None}
    rows = _RUNNERS[ex.kind](ex, art)
    elapsed = time.time() - start
    report = {
        "software": {"package": "dpm_latent", "version": __version__, "numpy": np.__version__},
        "config_sha256": config_hash(cfg),
        "config": cfg,
        "rows": [[rid, name, float(v)] for rid, name, v in rows],
        "runtime": {"started_unix": start, "elapsed_seconds": elapsed, "threads": _threads()},
    }
    out = Path(outdir or ex.run.get("outdir", Path("runs") / ex.kind))
    (out / "traces").mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    mt.write_metric_rows(out / "metrics.csv", rows)
    for name, writer in sorted(art["traces"].items()):
        writer(out / "traces" / name)
    if _get(ex.run, "save_samples", "run", False, bool) and art["samples"] is not None:
        ep, vecs = art["samples"]
        if ep.image_shape is None:
            raise ConfigError("config field 'run.save_samples': only image domains can be dumped")
        write_samples(out / "samples.bin", ep.to_images(vecs))
    if not quiet:
        for rid, name, v in rows:
            print(f"{rid:28s} {name:28s} {v!r}")
        print(f"wrote {out}/report.json ({len(rows)} rows, {elapsed:.2f} s)")
    return report


def report_body(report):
    """Report without the runtime field, i.e. the part that must replay bit-identically."""
    return {k: v for k, v in report.items() if k != "runtime"}


def main(argv=None):
    parser = argparse.ArgumentParser(prog="dpm-latent", description=__doc__.split("\n")[0])
    parser.add_argument("--quiet", action="store_true", help="suppress the metric listing")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--outdir")
    p_run.add_argument("--seed-override", type=int)
    p_run.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    p_self = sub.add_parser("selftest", help="run the built-in smoke suite")
    p_self.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    args = parser.parse_args(argv)

    if args.command == "selftest":
        ok, _ = selftest(out=None if args.quiet else print)
        return EXIT_OK if ok else 1
    try:
        run_experiment(args.config, args.outdir, args.seed_override, args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DPMError as exc:
        payload = {"module": exc.module, "error": type(exc).__name__, "message": str(exc)}
        payload["diagnostics"] = getattr(exc, "diagnostics", {})
        print("numerical error: " + json.dumps(payload), file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
