"""Two-group hypothesis testing between diagnosis groups.

Each comparison first checks both groups for Gaussianity (Shapiro-Wilk,
alpha 0.05). Two Gaussian groups get an unpaired Student's t-test, anything
else gets a two-sided Mann-Whitney U test.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from math import comb
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import special
from scipy import stats as sps

from coughxai.errors import ConfigError, DataError, DegenerateInputError
from coughxai.features import FEATURE_NAMES

ALPHA = 0.05
EXACT_MAX_N = 25


class TestKind(str, enum.Enum):
    __test__ = False
    STUDENT_T = "student_t"
    WELCH_T = "welch_t"
    MANN_WHITNEY_U = "mann_whitney_u"


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    test_kind: TestKind
    statistic: float
    p_value: float
    group: str | None = None
    feature: str | None = None
    threshold: float | None = None

    def __post_init__(self):
        p = float(self.p_value)
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p-value {p} outside [0, 1]")
        object.__setattr__(self, "p_value", p)
        object.__setattr__(self, "statistic", float(self.statistic))
        object.__setattr__(self, "test_kind", TestKind(self.test_kind))

    @property
    def significant(self) -> bool:
        return self.p_value < ALPHA

    def labelled(self, group: str, feature: str, threshold: float) -> "TestResult":
        return replace(self, group=group, feature=feature, threshold=threshold)


class ShapiroResult(NamedTuple):
    statistic: float
    p_value: float


# -- Shapiro-Wilk (Royston's approximation, algorithm AS R94) -----------------

_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(coefs, x: float) -> float:
    return sum(c * x ** i for i, c in enumerate(coefs))


def shapiro_coefficients(n: int) -> np.ndarray:
    """Antisymmetric weights for the ascending order statistics of n samples."""
    half = n // 2
    if n == 3:
        upper = np.array([math.sqrt(0.5)])
    else:
        m = -special.ndtri((np.arange(1, half + 1) - 0.375) / (n + 0.25))
        summ2 = 2.0 * float(np.sum(m * m))
        ssumm2 = math.sqrt(summ2)
        rsn = 1.0 / math.sqrt(n)
        upper = m / ssumm2
        a1 = _poly(_C1, rsn) + m[0] / ssumm2
        if n > 5:
            a2 = _poly(_C2, rsn) + m[1] / ssumm2
            fac = math.sqrt((summ2 - 2 * m[0] ** 2 - 2 * m[1] ** 2) / (1 - 2 * a1 ** 2 - 2 * a2 ** 2))
            upper = m / fac
            upper[0], upper[1] = a1, a2
        else:
            fac = math.sqrt((summ2 - 2 * m[0] ** 2) / (1 - 2 * a1 ** 2))
            upper = m / fac
            upper[0] = a1
    a = np.zeros(n)
    a[:half] = -upper
    a[n - half:] = upper[::-1]
    return a


def shapiro_wilk(x: Sequence[float]) -> ShapiroResult:
    """W statistic and p-value for the hypothesis that ``x`` is Gaussian."""
    x = np.sort(np.asarray(x, dtype=np.float64))
    n = x.size
    if n < 3:
        raise ValueError(f"Shapiro-Wilk needs at least 3 observations, got {n}")
    if n > 5000:
        raise ValueError("Shapiro-Wilk approximation is only valid up to n = 5000")
    if x[-1] == x[0]:
        raise DegenerateInputError("Shapiro-Wilk is undefined for a constant sample")
    a = shapiro_coefficients(n)
    xc = (x - x.mean()) / (x[-1] - x[0])
    ac = a - a.mean()
    w = float(np.dot(ac, xc) ** 2 / (np.dot(ac, ac) * np.dot(xc, xc)))
    w = min(w, 1.0)

    if n == 3:
        p = 6.0 / math.pi * (math.asin(math.sqrt(w)) - math.pi / 3.0)
        return ShapiroResult(w, min(max(p, 0.0), 1.0))
    w1 = 1.0 - w
    if w1 <= 0.0:
        return ShapiroResult(w, 1.0)
    y = math.log(w1)
    if n <= 11:
        gamma = _poly(_G, n)
        if y >= gamma:
            return ShapiroResult(w, 0.0)
        y = -math.log(gamma - y)
        m = _poly(_C3, n)
        s = math.exp(_poly(_C4, n))
    else:
        ln = math.log(n)
        m = _poly(_C5, ln)
        s = math.exp(_poly(_C6, ln))
    return ShapiroResult(w, float(special.ndtr(-(y - m) / s)))


# -- t-tests -----------------------------------------------------------------


def student_t_unpaired(a: Sequence[float], b: Sequence[float], welch: bool = False) -> TestResult:
    """Two-sided unpaired t-test; pooled variance unless ``welch``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise ValueError("each sample needs at least two observations for a t-test")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    diff = a.mean() - b.mean()
    if welch:
        se2 = va / na + vb / nb
        if se2 <= 0:
            raise DegenerateInputError("both samples are constant")
        df = se2 ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
        kind = TestKind.WELCH_T
    else:
        df = na + nb - 2
        pooled = ((na - 1) * va + (nb - 1) * vb) / df
        if pooled <= 0:
            raise DegenerateInputError("pooled variance is zero")
        se2 = pooled * (1.0 / na + 1.0 / nb)
        kind = TestKind.STUDENT_T
    t = diff / math.sqrt(se2)
    p = 2.0 * float(sps.t.sf(abs(t), df))
    return TestResult(kind, t, min(p, 1.0))


# -- Mann-Whitney U ----------------------------------------------------------


def _doubled_midranks(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Twice the midranks (integers) and the tie-group sizes."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks2 = np.empty(values.size, dtype=np.int64)
    ties = []
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        # positions i..j hold ranks i+1..j+1, midrank (i+j+2)/2
        ranks2[order[i:j + 1]] = i + j + 2
        ties.append(j - i + 1)
        i = j + 1
    return ranks2, np.asarray(ties)


def _rank_sum_counts(ranks2: np.ndarray, k: int) -> np.ndarray:
    """counts[s] = number of k-subsets whose doubled ranks sum to s."""
    total = int(ranks2.sum())
    ways = np.zeros((k + 1, total + 1), dtype=np.int64)
    ways[0, 0] = 1
    for r in ranks2:
        r = int(r)
        ways[1:, r:] = ways[1:, r:] + ways[:-1, :total + 1 - r]
    return ways[k]


def mann_whitney_u(a: Sequence[float], b: Sequence[float], exact_max_n: int = EXACT_MAX_N) -> TestResult:
    """Two-sided Mann-Whitney U test with midranks for ties.

    Up to ``exact_max_n`` pooled observations the p-value is the exact
    fraction of all C(n, n_a) group labelings whose U lies at least as far
    from its mean as the observed one. Larger samples use the normal
    approximation with tie and continuity corrections. The reported
    statistic is U for ``a``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = a.size, b.size
    if na < 1 or nb < 1:
        raise ValueError("Mann-Whitney U needs non-empty samples")
    n = na + nb
    ranks2, ties = _doubled_midranks(np.concatenate([a, b]))
    t2 = int(ranks2[:na].sum())
    u = (t2 - na * (na + 1)) / 2.0

    if n <= exact_max_n:
        counts = _rank_sum_counts(ranks2, na)
        # doubled ranks keep every rank sum and its mean n_a (n+1) integral
        centre2 = na * (n + 1)
        dev = np.abs(np.arange(counts.size) - centre2)
        extreme = int(counts[dev >= abs(t2 - centre2)].sum())
        return TestResult(TestKind.MANN_WHITNEY_U, u, min(extreme / comb(n, na), 1.0))

    mu = na * nb / 2.0
    tie_term = float(np.sum(ties ** 3 - ties)) / (n * (n - 1))
    sigma = math.sqrt(na * nb / 12.0 * ((n + 1) - tie_term))
    if sigma == 0:
        return TestResult(TestKind.MANN_WHITNEY_U, u, 1.0)
    z = max(abs(u - mu) - 0.5, 0.0) / sigma
    return TestResult(TestKind.MANN_WHITNEY_U, u, min(2.0 * float(special.ndtr(-z)), 1.0))


# -- protocol ----------------------------------------------------------------


def is_gaussian(x: Sequence[float], alpha: float = ALPHA) -> bool:
    """Shapiro-Wilk fails to reject at ``alpha``; constant samples are not Gaussian."""
    try:
        return shapiro_wilk(x).p_value >= alpha
    except DegenerateInputError:
        return False


def run_protocol(a: Sequence[float], b: Sequence[float], alpha: float = ALPHA, welch: bool = False) -> TestResult:
    """t-test when both groups pass Shapiro-Wilk, Mann-Whitney U otherwise.

    Groups with fewer than three observations go straight to Mann-Whitney.
    """
    if len(a) >= 3 and len(b) >= 3 and is_gaussian(a, alpha) and is_gaussian(b, alpha):
        return student_t_unpaired(a, b, welch=welch)
    return mann_whitney_u(a, b)


# -- groups ------------------------------------------------------------------


@dataclass(frozen=True)
class GroupSpec:
    name: str
    group_a: frozenset
    group_b: frozenset
    label_a: str = "a"
    label_b: str = "b"

    def __post_init__(self):
        object.__setattr__(self, "group_a", frozenset(self.group_a))
        object.__setattr__(self, "group_b", frozenset(self.group_b))
        if not self.group_a or not self.group_b:
            raise ValueError(f"group {self.name}: both sides must be non-empty")
        overlap = self.group_a & self.group_b
        if overlap:
            raise ValueError(f"group {self.name}: patients on both sides: {sorted(overlap)}")


@dataclass
class GroupConfig:
    """Diagnoses per patient, named diagnosis categories, and group rules.

    Text format, one statement per line (``#`` starts a comment)::

        patient   <id> <diagnosis>
        category  <name> <diagnosis> [<diagnosis> ...]
        group     <name> <terms> vs <terms>

    A term is ``all``, a category, or a diagnosis; ``-term`` removes its
    patients from the side being built. Terms apply left to right.
    """

    diagnoses: dict
    categories: dict
    rules: list

    @classmethod
    def parse(cls, text: str, source: str = "<groups>") -> "GroupConfig":
        diagnoses, categories, rules = {}, {}, []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            where = f"{source}:{lineno}"
            parts = line.split()
            keyword = parts[0]
            if keyword == "patient":
                if len(parts) != 3:
                    raise ConfigError(f"{where}: expected 'patient <id> <diagnosis>'")
                if parts[1] in diagnoses:
                    raise ConfigError(f"{where}: patient {parts[1]} listed twice")
                diagnoses[parts[1]] = parts[2]
            elif keyword == "category":
                if len(parts) < 3:
                    raise ConfigError(f"{where}: expected 'category <name> <diagnosis>...'")
                categories[parts[1]] = frozenset(parts[2:])
            elif keyword == "group":
                if "vs" not in parts or len(parts) < 5:
                    raise ConfigError(f"{where}: expected 'group <name> <terms> vs <terms>'")
                split = parts.index("vs")
                side_a, side_b = parts[2:split], parts[split + 1:]
                if not side_a or not side_b:
                    raise ConfigError(f"{where}: both sides of 'vs' need terms")
                rules.append((parts[1], tuple(side_a), tuple(side_b)))
            else:
                raise ConfigError(f"{where}: unknown statement {keyword!r}")
        if not rules:
            raise ConfigError(f"{source}: no group rules defined")
        return cls(diagnoses, categories, rules)

    @classmethod
    def read(cls, path) -> "GroupConfig":
        with open(path) as fh:
            return cls.parse(fh.read(), str(path))

    def _term_patients(self, term: str, pool: Iterable[str]) -> set:
        pool = set(pool)
        if term == "all":
            return pool
        if term in self.categories:
            labels = self.categories[term]
        elif term in set(self.diagnoses.values()):
            labels = {term}
        else:
            raise ConfigError(f"unknown group term {term!r}")
        return {p for p in pool if self.diagnoses[p] in labels}

    def _resolve_side(self, terms, pool) -> set:
        members = set()
        for term in terms:
            if term.startswith("-"):
                members -= self._term_patients(term[1:], pool)
            else:
                members |= self._term_patients(term, pool)
        return members

    def groups(self, patients: Iterable[str] | None = None) -> list[GroupSpec]:
        """Resolve every rule over ``patients`` (default: all listed)."""
        pool = set(self.diagnoses) if patients is None else set(patients)
        unknown = pool - set(self.diagnoses)
        if unknown:
            raise ConfigError(f"patients without a diagnosis: {sorted(unknown)}")
        specs = []
        for name, side_a, side_b in self.rules:
            a = self._resolve_side(side_a, pool)
            b = self._resolve_side(side_b, pool)
            try:
                specs.append(GroupSpec(name, a, b, " ".join(side_a), " ".join(side_b)))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        return specs

    def empty_sides(self, patients: Iterable[str]) -> list[str]:
        """Names of rules that leave a side empty over ``patients``."""
        pool = set(patients)
        return [
            name for name, side_a, side_b in self.rules
            if not self._resolve_side(side_a, pool) or not self._resolve_side(side_b, pool)
        ]


def compare_groups(
    features: Mapping,
    groups: Sequence[GroupSpec],
    thresholds: Sequence[float],
    feature_names: Sequence[str] = FEATURE_NAMES,
    alpha: float = ALPHA,
    welch: bool = False,
) -> list[TestResult]:
    """One protocol result per (group, threshold, feature).

    ``features`` maps ``(patient_id, threshold)`` to a SpectralFeatures (or
    any object with the feature attributes). Rows come back ordered by
    group rule order, threshold, then feature order.
    """
    rows = []
    for spec in groups:
        for th in thresholds:
            sides = []
            for side in (spec.group_a, spec.group_b):
                vectors = []
                for pid in sorted(side):
                    try:
                        vectors.append(features[(pid, th)])
                    except KeyError:
                        raise DataError(
                            f"group {spec.name}: no features for patient {pid} at threshold {th}"
                        ) from None
                sides.append(vectors)
            for name in feature_names:
                a = [getattr(v, name) for v in sides[0]]
                b = [getattr(v, name) for v in sides[1]]
                rows.append(run_protocol(a, b, alpha, welch).labelled(spec.name, name, th))
    return rows


# -- boxplots ----------------------------------------------------------------


@dataclass(frozen=True)
class BoxplotSummary:
    median: float
    q1: float
    q3: float
    whisker_lo: float
    whisker_hi: float
    outliers: tuple

    def as_dict(self) -> dict:
        return {
            "median": self.median,
            "q1": self.q1,
            "q3": self.q3,
            "whisker_lo": self.whisker_lo,
            "whisker_hi": self.whisker_hi,
            "outliers": list(self.outliers),
        }


def boxplot_summary(x: Sequence[float]) -> BoxplotSummary:
    """Quartiles by linear interpolation; whiskers reach the most extreme
    points within 1.5 IQR of the box."""
    x = np.sort(np.asarray(x, dtype=np.float64))
    if x.size == 0:
        raise ValueError("boxplot_summary needs at least one value")
    q1, median, q3 = (float(v) for v in np.percentile(x, [25, 50, 75]))
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    outliers = tuple(float(v) for v in x[(x < lo_fence) | (x > hi_fence)])
    return BoxplotSummary(median, q1, q3, float(inside.min()), float(inside.max()), outliers)
