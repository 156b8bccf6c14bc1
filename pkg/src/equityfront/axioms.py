"""Randomized property checks of inequality measures against the axioms.

Each axiom is exercised on random workload vectors (2 to 8 outcomes in
(0, 100]).  A verdict either holds on all trials or carries a counterexample,
and is compared with the measure's published classification.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .measures import Measure, evaluate, lex_compare, lex_key, pd_transfer

INVARIANCE_RTOL = 1e-9
ORDER_SLACK = 1e-12

SCALE_FACTORS = (0.5, 2.0, 7.3)
REPLICATIONS = (2, 3)

AXIOMS = (
    "inequality_relevance",
    "transitivity",
    "scale_invariance",
    "translation_invariance",
    "population_independence",
    "anonymity",
    "monotonicity",
    "pigou_dalton",
)


@dataclass
class AxiomVerdict:
    measure: str
    axiom: str
    expected: str
    verdict: str  # "holds", "counterexample" or "holds-by-construction"
    matches: bool
    witness: Optional[dict] = None
    # for graded axioms: evidence that the strict version fails (or holds where required)
    strictness: Optional[dict] = None


@dataclass
class AxiomReport:
    measure: str
    trials: int
    seed: int
    verdicts: list[AxiomVerdict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(v.matches for v in self.verdicts)

    def failures(self) -> list[AxiomVerdict]:
        return [v for v in self.verdicts if not v.matches]

    def to_dict(self) -> dict:
        return {
            "measure": self.measure,
            "trials": self.trials,
            "seed": self.seed,
            "ok": self.ok,
            "verdicts": [asdict(v) for v in self.verdicts],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class _Probe:
    """Uniform value access for scalar measures and the lexicographic order."""

    def __init__(self, measure: Measure, evaluator: Optional[Callable] = None):
        self.measure = measure
        self.lex = measure is Measure.LEX and evaluator is None
        self._eval = evaluator or (lambda x: evaluate(measure, x))

    def value(self, x):
        if self.lex:
            return lex_key(x)
        return float(self._eval(x))

    def tol(self, *vals) -> float:
        scale = max([1.0] + [abs(v) for v in vals if not isinstance(v, tuple)])
        return INVARIANCE_RTOL * scale

    def same(self, a, b) -> bool:
        if self.lex:
            return len(a) == len(b) and all(
                abs(p - q) <= INVARIANCE_RTOL * max(1.0, abs(p), abs(q)) for p, q in zip(a, b)
            )
        return abs(a - b) <= self.tol(a, b)

    def order(self, a, b) -> int:
        """-1 if a is strictly more equitable than b, 1 if strictly less, else 0."""
        if self.lex:
            return lex_compare(a, b)
        slack = ORDER_SLACK * max(1.0, abs(a), abs(b))
        if a < b - slack:
            return -1
        if a > b + slack:
            return 1
        return 0

    def is_zero(self, val) -> bool:
        if self.lex:
            return all(v == 0 for v in val)
        return abs(val) <= self.tol()


def _plain(val):
    return list(val) if isinstance(val, tuple) else val


def _witness(x, y, vx, vy, **extra) -> dict:
    out = {
        "x": [float(v) for v in x],
        "transformed": [float(v) for v in y],
        "values": [_plain(vx), _plain(vy)],
    }
    out.update(extra)
    return out


def _random_vector(rng: np.random.Generator) -> np.ndarray:
    n = int(rng.integers(2, 9))
    return 100.0 - rng.uniform(0.0, 100.0, size=n)


def check_axioms(
    measure: Measure | str,
    trials: int = 1000,
    rng_seed: int = 0,
    evaluator: Optional[Callable[[Sequence[float]], float]] = None,
) -> AxiomReport:
    """Test every axiom on ``trials`` random vectors and compare with the classification.

    ``evaluator`` substitutes the scalar function while keeping the expected
    classification of ``measure``; it exists for mutation testing.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    measure = Measure(measure)
    props = measure.props
    probe = _Probe(measure, evaluator)
    rng = np.random.default_rng(rng_seed)
    report = AxiomReport(measure.value, trials, rng_seed)

    def add(axiom, expected_holds, witness):
        verdict = "holds" if witness is None else "counterexample"
        report.verdicts.append(
            AxiomVerdict(
                measure.value,
                axiom,
                "holds" if expected_holds else "fails",
                verdict,
                (witness is None) == expected_holds,
                witness,
            )
        )

    # inequality relevance: zero exactly on constant vectors, positive otherwise
    witness = None
    for _ in range(trials):
        x = _random_vector(rng)
        c = np.full(x.size, x[0])
        vc, vx = probe.value(c), probe.value(x)
        if not probe.is_zero(vc):
            witness = _witness(c, c, vc, vc, reason="constant vector has nonzero value")
            break
        if np.ptp(x) > 0 and (probe.is_zero(vx) or (not probe.lex and vx < 0)):
            witness = _witness(x, x, vx, vx, reason="unequal vector has non-positive value")
            break
    add("inequality_relevance", props.inequality_relevant, witness)

    report.verdicts.append(
        AxiomVerdict(measure.value, "transitivity", "holds", "holds-by-construction", props.transitive)
    )

    witness = None
    for _ in range(trials):
        x = _random_vector(rng)
        lam = SCALE_FACTORS[int(rng.integers(len(SCALE_FACTORS)))]
        vx, vy = probe.value(x), probe.value(lam * x)
        if not probe.same(vx, vy):
            witness = _witness(x, lam * x, vx, vy, factor=lam)
            break
    add("scale_invariance", props.scale_invariant, witness)

    witness = None
    for _ in range(trials):
        x = _random_vector(rng)
        choices = (-x.min() / 2.0, 1.0, 13.7)
        alpha = float(choices[int(rng.integers(3))])
        y = x + alpha
        vx, vy = probe.value(x), probe.value(y)
        if not probe.same(vx, vy):
            witness = _witness(x, y, vx, vy, shift=alpha)
            break
    add("translation_invariance", props.translation_invariant, witness)

    witness = None
    for _ in range(trials):
        x = _random_vector(rng)
        k = REPLICATIONS[int(rng.integers(len(REPLICATIONS)))]
        y = np.tile(x, k)
        if probe.lex:
            other = 100.0 - rng.uniform(0.0, 100.0, size=x.size)
            before = lex_compare(lex_key(x), lex_key(other))
            after = lex_compare(lex_key(y), lex_key(np.tile(other, k)))
            if before != after:
                witness = _witness(x, y, before, after, other=other.tolist(), copies=k)
                break
        else:
            vx, vy = probe.value(x), probe.value(y)
            if not probe.same(vx, vy):
                witness = _witness(x, y, vx, vy, copies=k)
                break
    add("population_independence", props.population_independent, witness)

    witness = None
    for _ in range(trials):
        x = _random_vector(rng)
        y = rng.permutation(x)
        vx, vy = probe.value(x), probe.value(y)
        if vx != vy:
            witness = _witness(x, y, vx, vy)
            break
    add("anonymity", props.anonymous, witness)

    _check_monotonicity(report, measure, probe, rng, trials)
    _check_pigou_dalton(report, measure, probe, rng, trials)
    return report


def _graded(report, measure, axiom, grade, violation, non_strict, strict_required_ok=True):
    """Record a verdict for an axiom graded none/weak/weak_plus/strong."""
    if grade == "none":
        matches = violation is not None
    elif grade == "strong":
        matches = violation is None and non_strict is None
    elif grade == "weak_plus":
        matches = violation is None and non_strict is not None and strict_required_ok
    else:
        matches = violation is None and non_strict is not None
    report.verdicts.append(
        AxiomVerdict(
            measure.value,
            axiom,
            grade,
            "holds" if violation is None else "counterexample",
            matches,
            violation,
            non_strict,
        )
    )


def _check_monotonicity(report, measure, probe, rng, trials):
    violation = non_strict = None
    for _ in range(trials):
        x = _random_vector(rng)
        mask = rng.random(x.size) < 0.5
        mask[int(rng.integers(x.size))] = True
        delta = np.where(mask, rng.uniform(0.01, 20.0, size=x.size), 0.0)
        y = x + delta
        vx, vy = probe.value(x), probe.value(y)
        order = probe.order(vy, vx)
        if order < 0 and violation is None:
            violation = _witness(x, y, vx, vy, increase=delta.tolist())
        if order == 0 and non_strict is None:
            non_strict = _witness(x, y, vx, vy, increase=delta.tolist())
        if violation is not None and non_strict is not None:
            break
    _graded(report, measure, "monotonicity", measure.props.monotonicity, violation, non_strict)


def _check_pigou_dalton(report, measure, probe, rng, trials):
    violation = non_strict = crossing_flat = None
    done = 0
    while done < trials:
        x = _random_vector(rng)
        i, j = (int(k) for k in rng.choice(x.size, size=2, replace=False))
        if x[i] > x[j]:
            i, j = j, i
        gap = x[j] - x[i]
        if gap < 1.0:
            continue
        done += 1
        delta = float(rng.uniform(0.01, 0.99) * gap)
        y = pd_transfer(x, i, j, delta)
        vx, vy = probe.value(x), probe.value(y)
        order = probe.order(vy, vx)
        if order > 0 and violation is None:
            violation = _witness(x, y, vx, vy, receiver=i, donor=j, delta=delta)
        if order == 0:
            mean = x.mean()
            crosses = x[i] < mean < x[j]
            if crosses and crossing_flat is None:
                crossing_flat = _witness(x, y, vx, vy, receiver=i, donor=j, delta=delta)
            if non_strict is None:
                non_strict = _witness(x, y, vx, vy, receiver=i, donor=j, delta=delta)
    _graded(
        report,
        measure,
        "pigou_dalton",
        measure.props.pd,
        violation,
        non_strict,
        strict_required_ok=crossing_flat is None,
    )


def check_all(
    measures: Sequence[Measure], trials: int = 1000, rng_seed: int = 0
) -> list[AxiomReport]:
    return [check_axioms(m, trials, rng_seed) for m in measures]
