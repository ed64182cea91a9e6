"""Data generation and ingestion.

Simulation: a linear-interaction outcome model with known potential outcomes
(y0 = alpha + gamma'x + e, y1 = alpha + beta + (gamma+omega)'x + e, shared
residual e per person), randomized treatment in the source, plus two target
subsampling schemes — uniform random, and a biased scheme that reassigns
treatment with P(T=1) = expit(y0), breaking ignorability on purpose.

Empirical: CSV ingestion against a small column schema, with
standardization as an explicit, invertible step.
"""

import csv
import json

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


def expit(z):
    return 1.0 / (1.0 + np.exp(-z))


@dataclass
class Dataset:
    X: np.ndarray
    t: np.ndarray
    y: np.ndarray
    y0: np.ndarray = None
    y1: np.ndarray = None
    tau: np.ndarray = None
    origin: str = "external-csv"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.t = np.asarray(self.t, dtype=np.float64)
        n = len(self.X)
        if len(self.t) != n or (self.y is not None and len(self.y) != n):
            raise DataError("X, t, y lengths differ")
        if not np.all((self.t == 0) | (self.t == 1)):
            raise DataError("treatment must be binary 0/1")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.float64)
        for name in ("y0", "y1", "tau"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=np.float64)
                if len(v) != n:
                    raise DataError(f"{name} length differs from X")
                setattr(self, name, v)

    @property
    def n(self):
        return len(self.X)

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def has_truth(self):
        return self.y0 is not None and self.y1 is not None

    def treated_mask(self):
        return self.t == 1

    def subset(self, idx, origin=None):
        take = lambda v: None if v is None else v[idx]
        return Dataset(self.X[idx], self.t[idx], take(self.y), take(self.y0),
                       take(self.y1), take(self.tau), origin or self.origin)


@dataclass
class DgpParams:
    d: int = 5
    alpha: float = 0.0
    beta: float = 1.0
    gamma: np.ndarray = None  # default 0.5 per covariate
    omega: np.ndarray = None  # default 0.5 per covariate
    sigma: float = 1.0

    def __post_init__(self):
        if self.gamma is None:
            self.gamma = np.full(self.d, 0.5)
        if self.omega is None:
            self.omega = np.full(self.d, 0.5)
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        self.omega = np.asarray(self.omega, dtype=np.float64)
        if len(self.gamma) != self.d or len(self.omega) != self.d:
            raise DataError("gamma/omega length must equal d")
        if self.sigma <= 0:
            raise DataError("sigma must be positive")

    def to_dict(self):
        return {"d": self.d, "alpha": self.alpha, "beta": self.beta,
                "gamma": list(self.gamma), "omega": list(self.omega),
                "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d):
        return cls(d=d["d"], alpha=d["alpha"], beta=d["beta"],
                   gamma=np.asarray(d["gamma"]), omega=np.asarray(d["omega"]),
                   sigma=d["sigma"])


def gen_source(n, params, seed):
    """Randomized-treatment source draw with both potential outcomes kept."""
    if n < 2:
        raise DataError("need n >= 2")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, params.d))
    t = rng.binomial(1, 0.5, size=n).astype(np.float64)
    eps = rng.normal(0.0, params.sigma, size=n)
    y0 = params.alpha + X @ params.gamma + eps
    y1 = params.alpha + params.beta + X @ (params.gamma + params.omega) + eps
    y = t * y1 + (1 - t) * y0
    return Dataset(X, t, y, y0, y1, y1 - y0, origin="source")


def subsample_random(source, n_t, seed):
    """Uniform subsample without replacement, all columns carried over."""
    if n_t > source.n:
        raise DataError(f"n_t={n_t} exceeds source size {source.n}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(source.n, size=n_t, replace=False)
    return source.subset(idx, origin="target-random")


def subsample_biased(source, n_t, seed):
    """Subsample, then reassign treatment with P(T=1) = expit(y0) and
    recompute the observed outcome from the stored potential outcomes."""
    if not source.has_truth:
        raise DataError("biased subsampling needs potential outcomes y0, y1")
    if n_t > source.n:
        raise DataError(f"n_t={n_t} exceeds source size {source.n}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(source.n, size=n_t, replace=False)
    sub = source.subset(idx)
    t_new = (rng.uniform(size=n_t) < expit(sub.y0)).astype(np.float64)
    y_new = t_new * sub.y1 + (1 - t_new) * sub.y0
    return Dataset(sub.X, t_new, y_new, sub.y0, sub.y1, sub.tau,
                   origin="target-biased")


@dataclass
class CsvSchema:
    treatment: str
    outcome: str
    covariates: list

    def __post_init__(self):
        names = [self.treatment, self.outcome] + list(self.covariates)
        if len(set(names)) != len(names):
            raise DataError("duplicate column names in schema")

    def to_dict(self):
        return {"treatment": self.treatment, "outcome": self.outcome,
                "covariates": list(self.covariates)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["treatment"], d["outcome"], list(d["covariates"]))


def load_csv(path, schema, delimiter=","):
    """Load a dataset from CSV; rows with missing required values are
    dropped (and counted on the returned dataset as .dropped_rows)."""
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f, delimiter=delimiter)
            if reader.fieldnames is None:
                raise DataError(f"{path}: empty file")
            missing = [c for c in [schema.treatment, schema.outcome] + list(schema.covariates)
                       if c not in reader.fieldnames]
            if missing:
                raise DataError(f"{path}: missing columns {missing}")
            rows = list(reader)
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e

    X, t, y = [], [], []
    dropped = 0
    needed = [schema.treatment, schema.outcome] + list(schema.covariates)
    for row in rows:
        vals = [row.get(c, "") for c in needed]
        if any(v is None or v.strip() == "" for v in vals):
            dropped += 1
            continue
        try:
            parsed = [float(v) for v in vals]
        except ValueError as e:
            raise DataError(f"{path}: unparseable value: {e}") from e
        t.append(parsed[0])
        y.append(parsed[1])
        X.append(parsed[2:])
    if not X:
        raise DataError(f"{path}: all rows dropped")
    t = np.asarray(t)
    if not np.all(np.isin(t, (0.0, 1.0))):
        raise DataError(f"{path}: treatment column {schema.treatment!r} is not binary")
    ds = Dataset(np.asarray(X), t, np.asarray(y), origin="external-csv")
    ds.dropped_rows = dropped
    return ds


def save_csv(dataset, path, schema=None, delimiter=","):
    """Write a dataset to CSV (headers t, y, x1..xd unless a schema names
    them); truth columns y0/y1/tau are appended when present."""
    if schema is None:
        t_col, y_col = "t", "y"
        x_cols = [f"x{i + 1}" for i in range(dataset.d)]
    else:
        t_col, y_col = schema.treatment, schema.outcome
        x_cols = list(schema.covariates)
    header = [t_col, y_col] + x_cols
    truth = dataset.has_truth
    if truth:
        header += ["y0", "y1", "tau"]
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, delimiter=delimiter)
        w.writerow(header)
        for i in range(dataset.n):
            row = [repr(float(dataset.t[i])), repr(float(dataset.y[i]))]
            row += [repr(float(v)) for v in dataset.X[i]]
            if truth:
                row += [repr(float(dataset.y0[i])), repr(float(dataset.y1[i])),
                        repr(float(dataset.tau[i]))]
            w.writerow(row)


def write_sidecar(path, params, seed, origin, extra=None):
    """Provenance metadata next to a dataset CSV."""
    doc = {"origin": origin, "seed": seed,
           "dgp": params.to_dict() if params is not None else None}
    if extra:
        doc.update(extra)
    with open(str(path) + ".meta.json", "w", encoding="utf-8") as f:
        json.dump(doc, f, sort_keys=True, indent=1)


@dataclass
class StandardizeTransform:
    x_mean: np.ndarray
    x_sd: np.ndarray
    y_mean: float = 0.0
    y_sd: float = 1.0

    def inverse_ite(self, tau_hat):
        """Map ITEs from standardized-outcome units back to original units."""
        return np.asarray(tau_hat) * self.y_sd


def standardize(dataset, scale_outcome=False):
    """Center/scale covariates to mean 0, SD 1 (optionally the outcome too).
    Returns (dataset, transform); the transform supports inverse mapping."""
    if dataset.n < 2:
        raise DataError("need at least 2 rows to standardize")
    x_mean = dataset.X.mean(axis=0)
    x_sd = dataset.X.std(axis=0, ddof=1)
    bad = np.where(x_sd <= 0)[0]
    if bad.size:
        raise DataError(f"zero-variance covariate column(s): {list(bad)}")
    X = (dataset.X - x_mean) / x_sd
    y_mean, y_sd = 0.0, 1.0
    y = dataset.y
    if scale_outcome:
        y_mean = float(dataset.y.mean())
        y_sd = float(dataset.y.std(ddof=1))
        if y_sd <= 0:
            raise DataError("zero-variance outcome")
        y = (dataset.y - y_mean) / y_sd
    scale_y = lambda v: None if v is None else (v - y_mean) / y_sd
    out = Dataset(X, dataset.t, y, scale_y(dataset.y0), scale_y(dataset.y1),
                  None if dataset.tau is None else dataset.tau / y_sd,
                  origin=dataset.origin)
    return out, StandardizeTransform(x_mean, x_sd, y_mean, y_sd)
