"""Logical error rates, threshold crossings and latency fits."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import rng
from .lattice import build_layout
from .matching import build_graph, decode_batch
from .noise import NoiseConfig
from .pipeline import Decoder, DecoderSpec
from .propagation import logical_flip, simulate

CSV_COLUMNS = (
    "variant", "graph_mode", "basis", "d", "p_prime", "shots", "failures", "ler", "ci_lo", "ci_hi", "seed",
)


def wilson_interval(failures: int, shots: int, z: float = 1.959963984540054) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if shots <= 0:
        return 0.0, 1.0
    phat = failures / shots
    denom = 1.0 + z * z / shots
    centre = (phat + z * z / (2 * shots)) / denom
    half = z * math.sqrt(phat * (1 - phat) / shots + z * z / (4 * shots * shots)) / denom
    lo = 0.0 if failures == 0 else max(0.0, centre - half)
    hi = 1.0 if failures == shots else min(1.0, centre + half)
    return lo, hi


@dataclass
class LerPoint:
    p_prime: float
    shots: int
    failures: int
    seed: int = 0
    ler: Optional[float] = None
    ci_lo: float = field(init=False)
    ci_hi: float = field(init=False)

    def __post_init__(self):
        if self.failures > self.shots:
            raise ValueError("failures cannot exceed shots")
        if self.ler is None:
            self.ler = self.failures / self.shots if self.shots else 0.0
        self.ci_lo, self.ci_hi = wilson_interval(self.failures, self.shots)


@dataclass
class LerCurve:
    """LER against p' for one distance, basis and decoder (``cycles == distance``)."""

    distance: int
    basis: str
    points: List[LerPoint] = field(default_factory=list)
    variant: str = "matching"
    graph_mode: str = "uniform"

    def __post_init__(self):
        ps = [pt.p_prime for pt in self.points]
        if any(b <= a for a, b in zip(ps, ps[1:])):
            raise ValueError("p' values must be strictly increasing")

    @classmethod
    def from_rates(cls, distance, basis, p_values, rates, **kw) -> "LerCurve":
        points = [LerPoint(p, 0, 0, ler=r) for p, r in zip(p_values, rates)]
        return cls(distance, basis, points, **kw)

    @property
    def p_values(self) -> np.ndarray:
        return np.array([pt.p_prime for pt in self.points])

    @property
    def rates(self) -> np.ndarray:
        return np.array([pt.ler for pt in self.points])

    def rows(self) -> List[Dict]:
        return [
            {
                "variant": self.variant,
                "graph_mode": self.graph_mode,
                "basis": self.basis,
                "d": self.distance,
                "p_prime": pt.p_prime,
                "shots": pt.shots,
                "failures": pt.failures,
                "ler": pt.ler,
                "ci_lo": pt.ci_lo,
                "ci_hi": pt.ci_hi,
                "seed": pt.seed,
            }
            for pt in self.points
        ]


# ----------------------------------------------------------------------------
# Monte Carlo


def count_failures(
    specs: Sequence[DecoderSpec],
    distance: int,
    p_prime: float,
    shots: int,
    basis: str = "Z",
    seed: int = 0,
    chunk: int = 20_000,
    decoders: Optional[Sequence[Decoder]] = None,
) -> List[int]:
    """Failures of several decoders on one shared stream of shots."""
    layout = build_layout(distance)
    cycles = distance
    cfg = NoiseConfig(p_prime, cycles, basis, seed)
    if decoders is None:
        graph_p = p_prime if p_prime > 0 else None
        decoders = []
        for spec in specs:
            if spec.graph_mode == "weighted" and graph_p is None:
                # No noise means no events; any valid weighting decodes them.
                graph_p = 1e-3
            decoders.append(Decoder(spec, layout, cycles, basis, graph_p))
    failures = [0] * len(decoders)
    for lo in range(0, shots, chunk):
        n = min(chunk, shots - lo)
        vol, syn = simulate(layout, cfg, n, start=lo)
        truth = logical_flip(vol, basis)
        for i, dec in enumerate(decoders):
            flips, _ = dec.decode_batch(syn)
            failures[i] += int(np.count_nonzero(flips != truth))
    return failures


def estimate_ler(
    spec: DecoderSpec, d: int, p_prime: float, shots: int, basis: str = "Z", seed: int = 0, **kw
) -> LerPoint:
    """Monte-Carlo LER over ``d`` cycles with a Wilson 95% interval."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    (failures,) = count_failures([spec], d, p_prime, shots, basis, seed, **kw)
    return LerPoint(p_prime, shots, failures, seed)


def sweep(
    specs: Sequence[DecoderSpec],
    distances: Iterable[int],
    p_values: Iterable[float],
    shots: int,
    basis: str = "Z",
    seed: int = 0,
    progress=None,
) -> Dict[Tuple[str, int], LerCurve]:
    """LER curves keyed by (spec label, distance); decoders share shots per point."""
    curves: Dict[Tuple[str, int], LerCurve] = {}
    p_values = list(p_values)
    for d in distances:
        for spec in specs:
            curves[(spec.label(), d)] = LerCurve(d, basis, [], spec.variant, spec.graph_mode)
        for p in p_values:
            fails = count_failures(specs, d, p, shots, basis, seed)
            for spec, f in zip(specs, fails):
                curves[(spec.label(), d)].points.append(LerPoint(p, shots, f, seed))
            if progress:
                progress(d, p, fails)
    return curves


# ----------------------------------------------------------------------------
# Crossings


def intersect_status(a: LerCurve, b: LerCurve) -> Tuple[Optional[float], str]:
    """Crossing p' of two LER curves and a status string.

    Only p' values present in both curves with non-zero rates are used.  The
    crossing is found between the two grid points bracketing the first sign
    change of ``log La - log Lb``, by intersecting the straight lines through
    those points on the log-log plot.  Status is ``"ok"``, ``"degenerate"``
    (identical curves), ``"parallel"``, ``"no-crossing"`` or
    ``"insufficient"``.
    """
    ra = {pt.p_prime: pt.ler for pt in a.points if pt.ler > 0}
    rb = {pt.p_prime: pt.ler for pt in b.points if pt.ler > 0}
    common = sorted(set(ra) & set(rb))
    if len(common) < 2:
        return None, "insufficient"
    x = np.log(common)
    ya = np.log([ra[p] for p in common])
    yb = np.log([rb[p] for p in common])
    diff = ya - yb
    if np.all(diff == 0):
        return None, "degenerate"
    sign = np.sign(diff)
    for i in range(len(common)):
        if sign[i] == 0:
            return float(common[i]), "ok"
        if i + 1 < len(common) and sign[i] * sign[i + 1] < 0:
            dx = x[i + 1] - x[i]
            slope_a = (ya[i + 1] - ya[i]) / dx
            slope_b = (yb[i + 1] - yb[i]) / dx
            if slope_a == slope_b:
                return None, "parallel"
            # Solve ya[i] + sa t = yb[i] + sb t for the offset t = log p - x[i].
            t = (yb[i] - ya[i]) / (slope_a - slope_b)
            return float(math.exp(x[i] + t)), "ok"
    if np.allclose(diff, diff[0], rtol=1e-12, atol=1e-12):
        return None, "parallel"
    return None, "no-crossing"


def intersect_curves(a: LerCurve, b: LerCurve) -> Optional[float]:
    return intersect_status(a, b)[0]


def crossing_spread(a: LerCurve, b: LerCurve, replicates: int = 400, seed: int = 0) -> Tuple[Optional[float], float]:
    """Crossing estimate and its parametric-bootstrap standard deviation."""
    centre = intersect_curves(a, b)
    if centre is None:
        return None, math.nan
    gen = rng.generator(seed, rng.STREAM_MIX)
    samples = []
    for _ in range(replicates):
        ca = _resample(a, gen)
        cb = _resample(b, gen)
        value = intersect_curves(ca, cb)
        if value is not None:
            samples.append(value)
    if len(samples) < replicates // 2:
        return centre, math.inf
    return centre, float(np.std(samples, ddof=1))


def _resample(curve: LerCurve, gen) -> LerCurve:
    pts = [LerPoint(pt.p_prime, pt.shots, int(gen.binomial(pt.shots, pt.failures / pt.shots))) for pt in curve.points]
    return LerCurve(curve.distance, curve.basis, pts, curve.variant, curve.graph_mode)


def intersection_matrix(curves: Dict[int, LerCurve]) -> Tuple[List[int], np.ndarray]:
    """Pairwise crossings (NaN where none) for curves keyed by distance."""
    ds = sorted(curves)
    mat = np.full((len(ds), len(ds)), np.nan)
    for i, da in enumerate(ds):
        for j, db in enumerate(ds):
            if i != j:
                value = intersect_curves(curves[da], curves[db])
                mat[i, j] = np.nan if value is None else value
    return ds, mat


def crossing_trend(ds: List[int], mat: np.ndarray) -> str:
    """Whether crossings with the smallest distance grow with distance (reported only)."""
    row = [mat[0, j] for j in range(1, len(ds)) if np.isfinite(mat[0, j])]
    if len(row) < 2:
        return "undetermined"
    return "increasing" if all(b >= a for a, b in zip(row, row[1:])) else "mixed"


# ----------------------------------------------------------------------------
# Latency

LATENCY_BATCHES = (32, 64, 128, 192, 256)


@dataclass
class LatencyFit:
    per_shot: float
    overhead: float
    residual: float
    slope_stderr: float


def fit_latency(samples: Sequence[Tuple[int, float]]) -> LatencyFit:
    """Least-squares line ``seconds = overhead + per_shot * batch``."""
    batches = np.array([s[0] for s in samples], dtype=float)
    seconds = np.array([s[1] for s in samples], dtype=float)
    if len(np.unique(batches)) < 2:
        raise ValueError("need at least two distinct batch sizes")
    design = np.column_stack([np.ones_like(batches), batches])
    coef, *_ = np.linalg.lstsq(design, seconds, rcond=None)
    resid = seconds - design @ coef
    dof = len(batches) - 2
    rss = float(resid @ resid)
    if dof > 0:
        sxx = float(((batches - batches.mean()) ** 2).sum())
        stderr = math.sqrt(rss / dof / sxx)
    else:
        stderr = 0.0
    return LatencyFit(float(coef[1]), float(coef[0]), math.sqrt(rss / len(batches)), stderr)


@dataclass
class TimingRecord:
    label: str
    distance: int
    p_prime: float
    samples: List[Tuple[int, float]]
    fit: LatencyFit
    stage: str = "total"

    def as_dict(self) -> Dict:
        out = asdict(self)
        out["samples"] = [list(s) for s in self.samples]
        return out


def _workload(distance, p_prime, shots, basis, seed):
    layout = build_layout(distance)
    _, syn = simulate(layout, NoiseConfig(p_prime, distance, basis, seed), shots)
    return layout, syn


def time_decoder(
    spec: DecoderSpec,
    distance: int,
    p_prime: float,
    batches: Sequence[int] = LATENCY_BATCHES,
    basis: str = "Z",
    seed: int = 0,
    repeats: int = 3,
    stage: str = "total",
) -> TimingRecord:
    """Time decoding at each batch size (best of ``repeats``) and fit the slope."""
    layout, syn = _workload(distance, p_prime, max(batches), basis, seed)
    decoder = Decoder(spec, layout, distance, basis, p_prime)
    decoder.decode_batch(syn[: min(batches)])  # warm caches
    samples = []
    for b in batches:
        best = math.inf
        for _ in range(repeats):
            _, stats = decoder.decode_batch(syn[:b])
            ns = {"total": stats.total_ns, "matching": stats.matching_ns, "local": stats.local_ns}[stage]
            best = min(best, ns * 1e-9)
        samples.append((int(b), best))
    return TimingRecord(spec.label(), distance, p_prime, samples, fit_latency(samples), stage)


def relative_matching_time(
    spec_with_ann: DecoderSpec,
    spec_plain: DecoderSpec,
    distance: int,
    p_prime: float,
    shots: int = 256,
    basis: str = "Z",
    seed: int = 0,
    repeats: int = 3,
) -> float:
    """Mop-up matching time with the local stage over plain matching time.

    Both are measured on the same seeded syndromes; identical specs share one
    measurement, so the ratio is exactly one.
    """
    if spec_with_ann.graph_mode != spec_plain.graph_mode:
        raise ValueError("both specs must use the same graph mode")
    layout, syn = _workload(distance, p_prime, shots, basis, seed)
    graph_p = p_prime if spec_plain.graph_mode == "weighted" else None
    graph = build_graph(layout, distance, spec_plain.graph_mode, graph_p, basis)

    def matching_seconds(spec):
        decoder = Decoder(spec, layout, distance, basis, p_prime, graph=graph)
        _, residual = decoder.local(syn)
        decode_batch(graph, residual[:8])
        best = math.inf
        for _ in range(repeats):
            t0 = time.perf_counter_ns()
            decode_batch(graph, residual)
            best = min(best, time.perf_counter_ns() - t0)
        return best

    if spec_with_ann == spec_plain:
        return 1.0
    return matching_seconds(spec_with_ann) / matching_seconds(spec_plain)


# ----------------------------------------------------------------------------
# Emission


def write_ler_csv(path, curves: Iterable[LerCurve], config: Optional[Dict] = None) -> None:
    with open(path, "w", newline="") as fh:
        for line in config_lines(config):
            fh.write(line)
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for curve in curves:
            for row in curve.rows():
                writer.writerow({k: _fmt(v) for k, v in row.items()})


def write_matrix_csv(path, ds: List[int], mat: np.ndarray, config: Optional[Dict] = None) -> None:
    with open(path, "w", newline="") as fh:
        for line in config_lines(config):
            fh.write(line)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["d"] + ds)
        for d, row in zip(ds, mat):
            writer.writerow([d] + ["" if not np.isfinite(v) else _fmt(float(v)) for v in row])


def write_json(path, payload: Dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def config_lines(config):
    if not config:
        return []
    return [f"# {k} = {v}\n" for k, v in sorted(config.items())]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v
