"""Experiment configuration: parsing, defaults, validation and round-tripping.

Config text is a list of ``key=value`` pairs separated by whitespace or
newlines (``#`` starts a comment), or a JSON object.

Variational model structure has its own JSON text form; see
:func:`format_model`.
"""

import hashlib
import json
import shlex
import warnings
from dataclasses import dataclass, fields, replace
from typing import Optional, Tuple

from .errors import ConfigError, InvalidModelError
from .variational import Categorical, Gaussian, RecognitionBernoulli, VariationalModel

EXPERIMENTS = ("gauss-fit", "logreg", "sbn", "variance-study")
ESTIMATORS = ("legrad", "ldgrad", "regrad")
CONTINUOUS = ("gauss-fit", "logreg")

# keys that change how a run executes but never what it computes
EXECUTION_ONLY = ("workers", "out")

# per-experiment defaults for step size and schedule
EXPERIMENT_DEFAULTS = {
    "gauss-fit": dict(eta=0.1, T=300_000, schedule="robbins-monro", tau=240.0, trace_every=100),
    "logreg": dict(eta=1.3e-4, T=240, schedule="constant", tau=1000.0, trace_every=1),
    "sbn": dict(eta=0.05, T=2000, schedule="constant", tau=1000.0, trace_every=1),
    "variance-study": dict(eta=0.1, T=0, schedule="robbins-monro", tau=240.0, trace_every=1),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    estimator: str = "legrad"
    S: Optional[int] = None
    K: int = 5
    eta: Optional[float] = None
    T: Optional[int] = None
    schedule: Optional[str] = None
    tau: Optional[float] = None
    seed: int = 0
    window: int = 10
    trace_every: Optional[int] = None
    tracked: Tuple[int, ...] = (0,)
    n: int = 100
    features: int = 20
    examples: Optional[int] = None
    hidden: int = 20
    pixels: int = 64
    prior_variance: float = 1.0
    data: str = "synthetic"
    images: Optional[str] = None
    labels: Optional[str] = None
    classes: Tuple[int, ...] = (2, 7)
    limit: Optional[int] = None
    problem: str = "gauss-fit"
    estimators: Tuple[str, ...] = ("legrad", "regrad", "ldgrad")
    calls: int = 2000
    variance_calls: int = 200
    incremental: bool = True
    workers: int = 1
    out: Optional[str] = None

    @property
    def dimension(self):
        """Number of Gaussian coordinates of the continuous problem."""
        problem = self.problem if self.experiment == "variance-study" else self.experiment
        if problem == "logreg":
            return (self.pixels if self.data == "idx" else self.features) + 1
        return self.n

    def budget_samples(self):
        """LdGrad sample count matching LeGrad's ``n K`` evaluations per step."""
        return self.dimension * self.K


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _parse_bool(key, text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _convert(key, value):
    kind = _FIELDS[key].type
    if value is None:
        return None
    text = value if isinstance(value, str) else None
    try:
        if kind in (int, Optional[int]):
            if isinstance(value, bool) or (text is None and float(value) != int(value)):
                raise ValueError
            return int(text) if text is not None else int(value)
        if kind in (float, Optional[float]):
            return float(value)
        if kind is bool:
            return _parse_bool(key, text) if text is not None else bool(value)
        if kind == Tuple[int, ...]:
            items = text.split(",") if text is not None else value
            return tuple(int(v) for v in items if str(v).strip() != "")
        if kind == Tuple[str, ...]:
            items = text.split(",") if text is not None else value
            return tuple(str(v).strip() for v in items if str(v).strip())
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: invalid value {value!r}") from None


def _pairs(text):
    text = text.strip()
    if text.startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from None
        return list(obj.items())
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        for token in shlex.split(line):
            if "=" not in token:
                raise ConfigError(f"expected key=value, got {token!r}")
            key, value = token.split("=", 1)
            out.append((key.strip(), value.strip()))
    return out


def from_mapping(pairs):
    """Build a validated config (defaults filled) from key/value pairs."""
    values = {}
    for key, value in pairs:
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _convert(key, value)
    if values.get("experiment") is None:
        raise ConfigError("missing required key 'experiment'")
    return validate(ExperimentConfig(**values))


def parse_config(text):
    return from_mapping(_pairs(text))


def validate(cfg):
    """Check invariants and resolve experiment-dependent defaults."""
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment: expected one of {EXPERIMENTS}, got {cfg.experiment!r}")
    if cfg.estimator not in ESTIMATORS:
        raise ConfigError(f"estimator: expected one of {ESTIMATORS}, got {cfg.estimator!r}")
    for spec in cfg.estimators:
        kind, sep, samples = spec.partition(":")
        if kind not in ESTIMATORS:
            raise ConfigError(f"estimators: unknown estimator {kind!r}")
        if sep and not (samples.isdigit() and int(samples) >= 1):
            raise ConfigError(f"estimators: invalid sample count in {spec!r}")
    if cfg.experiment == "variance-study" and cfg.problem not in CONTINUOUS:
        raise ConfigError(f"problem: expected one of {CONTINUOUS}, got {cfg.problem!r}")
    if cfg.experiment == "sbn" and cfg.estimator == "regrad":
        raise ConfigError("estimator: regrad needs continuous latent variables; sbn is discrete")
    if cfg.data not in ("synthetic", "idx"):
        raise ConfigError(f"data: expected 'synthetic' or 'idx', got {cfg.data!r}")
    if cfg.data == "idx" and not (cfg.images and cfg.labels):
        raise ConfigError("images/labels: both paths are required when data=idx")
    for key in ("K", "n", "features", "hidden", "pixels", "window", "calls", "variance_calls", "workers"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"{key}: must be >= 1")
    if not 1 <= cfg.K <= 64:
        raise ConfigError("K: must lie in [1, 64]")
    if cfg.window < 2:
        raise ConfigError("window: must be >= 2")
    if cfg.calls < 2 or cfg.variance_calls < 2:
        raise ConfigError("calls: must be >= 2")
    if cfg.prior_variance <= 0:
        raise ConfigError("prior_variance: must be positive")

    updates = {}
    for key, value in EXPERIMENT_DEFAULTS[cfg.experiment].items():
        if getattr(cfg, key) is None:
            updates[key] = value
    if cfg.examples is None:
        updates["examples"] = {"logreg": 500, "sbn": 200}.get(cfg.experiment, 500)
    if cfg.out is not None and cfg.out == "":
        updates["out"] = None
    cfg = replace(cfg, **updates)

    if cfg.schedule not in ("constant", "robbins-monro"):
        raise ConfigError(f"schedule: expected 'constant' or 'robbins-monro', got {cfg.schedule!r}")
    if cfg.eta < 0:
        raise ConfigError("eta: must be nonnegative")
    if cfg.tau <= 0:
        raise ConfigError("tau: must be positive")
    if cfg.T < (0 if cfg.experiment == "variance-study" else 1):
        raise ConfigError("T: must be >= 1")
    if cfg.trace_every < 1:
        raise ConfigError("trace_every: must be >= 1")

    if cfg.estimator == "legrad" and cfg.S is not None and cfg.experiment != "variance-study":
        warnings.warn("S is ignored by legrad", stacklevel=3)
        cfg = replace(cfg, S=None)
    elif cfg.S is None and cfg.estimator != "legrad":
        if cfg.estimator == "regrad" or cfg.experiment == "sbn":
            cfg = replace(cfg, S=1)
        else:
            cfg = replace(cfg, S=cfg.budget_samples())
    if cfg.S is not None and cfg.S < 1:
        raise ConfigError("S: must be >= 1")
    return cfg


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(cfg, exclude=()):
    """Canonical ``key=value`` text; parsing it gives back an equal config."""
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if value is None or f.name in exclude:
            continue
        text = _format_value(value)
        if any(c.isspace() for c in text) or "#" in text or text == "":
            text = shlex.quote(text)
        lines.append(f"{f.name}={text}")
    return "\n".join(lines) + "\n"


def config_hash(cfg):
    canon = format_config(cfg, exclude=EXECUTION_ONLY)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def format_model(model):
    """JSON text of a model's structure and current parameters.

    Schema: ``{"factors": [...], "parents": [[int, ...], ...], "params": [float, ...]}``
    where each factor is one of

    * ``{"kind": "gaussian", "mu": float, "ell": float}``
    * ``{"kind": "categorical", "weights": [[float, ...], ...]}`` (one row per parent config)
    * ``{"kind": "recognition", "weights": [float, ...], "input": [float, ...], "tie": int | str | null}``

    ``params`` is the flat parameter vector and wins over the per-factor
    values, so a round trip is exact.
    """
    factors = []
    for i, fac in enumerate(model.factors):
        slots = model.factor_slots(i)
        if isinstance(fac, Gaussian):
            mu, ell = model.params[slots]
            factors.append({"kind": "gaussian", "mu": float(mu), "ell": float(ell)})
        elif isinstance(fac, Categorical):
            factors.append({"kind": "categorical", "weights": model.table(i, model.params).tolist()})
        else:
            if fac.tie is not None and not isinstance(fac.tie, (int, str)):
                raise InvalidModelError(f"factor {i}: tie key {fac.tie!r} is not an int or str")
            factors.append({
                "kind": "recognition",
                "weights": model.params[slots].tolist(),
                "input": fac.input.tolist(),
                "tie": fac.tie,
            })
    doc = {"factors": factors, "parents": [list(p) for p in model.parents], "params": model.params.tolist()}
    return json.dumps(doc) + "\n"


def parse_model(text):
    """Inverse of :func:`format_model`."""
    try:
        doc = json.loads(text)
        specs = doc["factors"]
        factors = []
        for spec in specs:
            kind = spec["kind"]
            if kind == "gaussian":
                factors.append(Gaussian(float(spec["mu"]), float(spec["ell"])))
            elif kind == "categorical":
                factors.append(Categorical(spec["weights"]))
            elif kind == "recognition":
                factors.append(RecognitionBernoulli(spec["weights"], spec["input"], spec.get("tie")))
            else:
                raise InvalidModelError(f"unknown factor kind {kind!r}")
        model = VariationalModel(factors, doc.get("parents"))
        if "params" in doc:
            model.params = doc["params"]
        return model
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InvalidModelError(f"invalid model text: {exc}") from None
