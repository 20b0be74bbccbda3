"""Finitely generated subgroups: word and translation lengths, semibounded
norms of the cocycle and the distortion bound built from them."""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

import numpy as np

from .cocycle import FIXED_POINT_TOL, G, CocycleContext, IsotopySpec, action_difference, _require_fixed
from .errors import ConfigurationError
from .symplectomap import HamiltonianFlowMap, Identity, SympMap, Word, power

BFS_CAP = 8
TRANSLATION_CAVEAT = (
    "translation length is estimated as an infimum over a finite range of powers; "
    "for free groups this is the exact limit, otherwise only an upper estimate"
)
POLTEROVICH_CAVEAT = (
    "diagnostic only: generator norms are sampled lower bounds, so the quotient "
    "over-estimates the certified lower bound on the translation length"
)

_TOKEN = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)(?:\^(-?\d+))?$")


@dataclass(frozen=True)
class GroupWord:
    """Letters ``(name, +1 | -1)`` read left to right as a product."""

    letters: tuple = ()

    @classmethod
    def parse(cls, text: str) -> "GroupWord":
        letters = []
        for tok in text.replace("*", " ").split():
            m = _TOKEN.match(tok)
            if not m:
                raise ValueError(f"bad word token {tok!r}")
            name, exp = m.group(1), int(m.group(2) or 1)
            letters.extend([(name, 1 if exp > 0 else -1)] * abs(exp))
        return cls(tuple(letters))

    def __str__(self):
        return " ".join(n if e > 0 else f"{n}^-1" for n, e in self.letters)

    def __len__(self):
        return len(self.letters)

    def __mul__(self, other: "GroupWord") -> "GroupWord":
        return GroupWord(self.letters + other.letters)

    def inverse(self) -> "GroupWord":
        return GroupWord(tuple((n, -e) for n, e in reversed(self.letters)))

    def power(self, n: int) -> "GroupWord":
        base = self if n >= 0 else self.inverse()
        return GroupWord(base.letters * abs(n))

    def reduced(self) -> "GroupWord":
        stack = []
        for n, e in self.letters:
            if stack and stack[-1] == (n, -e):
                stack.pop()
            else:
                stack.append((n, e))
        return GroupWord(tuple(stack))


@dataclass(frozen=True)
class GeneratingSet:
    generators: dict
    structure: str = "free"

    def __post_init__(self):
        if self.structure not in ("free", "unknown"):
            raise ValueError("structure must be 'free' or 'unknown'")
        if not self.generators:
            raise ValueError("empty generating set")
        object.__setattr__(self, "generators", dict(self.generators))

    @property
    def names(self) -> list:
        return list(self.generators)

    @property
    def dim(self) -> int:
        return next(iter(self.generators.values())).dim

    def letter_map(self, name, sign) -> SympMap:
        if name not in self.generators:
            raise KeyError(f"unknown generator {name!r}")
        g = self.generators[name]
        return g if sign > 0 else g.inverse()

    def evaluate(self, w: GroupWord) -> SympMap:
        if not w.letters:
            return Identity(self.dim)
        return Word(tuple(self.letter_map(n, e) for n, e in w.letters))

    def letters(self):
        return [(n, s) for n in self.generators for s in (1, -1)]


@dataclass(frozen=True)
class WordLength:
    value: int
    exact: bool
    note: str = ""

    def __int__(self):
        return self.value


def _fingerprint(images, scale=1e-7):
    return tuple(np.round(images.ravel() / scale).astype(np.int64).tolist())


def word_length(w: GroupWord, S: GeneratingSet, cap: int = BFS_CAP, probe=None) -> WordLength:
    """Word length of ``w``: exact by free reduction for free groups; otherwise a
    breadth-first search of the Cayley ball up to radius ``cap``, where group
    elements are identified by their images of a few probe points."""
    for n, _ in w.letters:
        if n not in S.generators:
            raise KeyError(f"unknown generator {n!r}")
    red = w.reduced()
    if S.structure == "free" or len(red) == 0:
        return WordLength(len(red), True)
    if probe is None:
        rng = np.random.default_rng(12345)
        probe = 0.3 * rng.standard_normal((4, S.dim))
    target = _fingerprint(S.evaluate(red).apply(probe))
    start = _fingerprint(probe)
    if target == start:
        return WordLength(0, True, "identified numerically on probe points")
    seen = {start}
    frontier = [np.asarray(probe, float)]
    for radius in range(1, min(cap, len(red)) + 1):
        nxt = []
        for images in frontier:
            for n, s in S.letters():
                im = S.letter_map(n, s).apply(images)
                fp = _fingerprint(im)
                if fp == target:
                    return WordLength(radius, True, "identified numerically on probe points")
                if fp not in seen:
                    seen.add(fp)
                    nxt.append(im)
        frontier = nxt
    if len(red) <= cap:
        return WordLength(len(red), True, "no shorter word within the Cayley ball")
    return WordLength(len(red), False, f"upper bound: Cayley ball explored to radius {cap}")


@dataclass
class TranslationLength:
    value: float
    table: list  # [(n, |g^n|_S, ratio, exact)]
    exact: bool
    caveat: str = TRANSLATION_CAVEAT


def translation_length_estimate(g: GroupWord, S: GeneratingSet, n_max: int = 16, cap: int = BFS_CAP) -> TranslationLength:
    """``inf_{1 <= n <= n_max} |g^n|_S / n`` with the full table."""
    table = []
    for n in range(1, n_max + 1):
        wl = word_length(g.power(n), S, cap)
        table.append((n, wl.value, wl.value / n, wl.exact))
    best = min(r for _, _, r, _ in table)
    return TranslationLength(best, table, all(e for *_, e in table))


# ---------------------------------------------------------------------------
# semibounded norms


def semibounded_norm_estimate(ctx: CocycleContext, g: SympMap, sample) -> float:
    """``max_{h in sample} |G(g, h)|``, a lower bound for the sup-norm."""
    if not sample:
        raise ValueError("sample must be nonempty")
    if isinstance(g, Identity):
        return 0.0
    return max(abs(G(ctx, g, h)) for h in sample)


def semibounded_upper_bound(ctx: CocycleContext, g: HamiltonianFlowMap) -> float:
    """``2 C max Length + 2 max |H|`` for the flow of a bump Hamiltonian.

    ``C`` bounds the primitive on the support ball (the only region where
    trajectories move), and the trajectory length is at most ``time * sup|X|``.
    """
    if not isinstance(g, HamiltonianFlowMap) or g.h.support is None:
        raise ConfigurationError("analytic bound needs a compactly supported Hamiltonian flow")
    h = g.h
    C = ctx.model.primitive_bound(h.support_center, h.support_radius)
    length = abs(g.time) * h.max_speed(ctx.model)
    return 2.0 * C * length + 2.0 * abs(g.time) * h.max_abs_value()


def lemma_two_check(ctx, f, g, sample) -> float:
    """``max_h |G(fg,h)| - |G(f,g)| - |G(f,gh)| - |G(g,h)|`` (never positive in exact arithmetic)."""
    if not sample:
        raise ValueError("sample must be nonempty")
    fg = Word((f, g))
    Gfg = abs(G(ctx, f, g))
    worst = -np.inf
    for h in sample:
        gh = h if isinstance(g, Identity) else Word((g, h))
        worst = max(worst, abs(G(ctx, fg, h)) - Gfg - abs(G(ctx, f, gh)) - abs(G(ctx, g, h)))
    return float(worst)


@dataclass
class LipschitzReport:
    max_length: int
    n_words: int
    generator_bounds: dict
    slope: float  # 2 max_s upper(s)
    worst_margin: float  # max over words of norm_est(w) - slope |w|_S
    max_quadrature_error: float
    by_length: list  # [(length, count, max norm_est, slope * length)]
    holds: bool


def word_norm_table(ctx, S: GeneratingSet, sample, max_length: int, tol: float | None = None):
    """Sampled norms ``max_h |G(w, h)|`` for every reduced word of length <= max_length.

    Words grow by left multiplication through the one-cocycle relation
    ``G(s w, h) = G(w, h) + K(s)(w h x) - K(s)(w x)``, so only the smooth forms
    ``s^* lambda - lambda`` of single generators are ever integrated (along
    straight chart segments from the basepoint, which is legitimate for closed
    forms).  Integrating ``w^* lambda - lambda`` directly is hopeless for long
    words: compositions of overlapping twists stretch exponentially.

    Yields ``(word, norm_est, accumulated_quadrature_error)``.
    """
    from .quadrature import batch_segment_integrals
    from .symplectomap import pullback_form

    tol = ctx.tol if tol is None else tol
    x = ctx.x
    m = len(sample)
    Y0 = np.vstack([x] + [h.apply(x) for h in sample])
    forms = {(n, s): (S.letter_map(n, s), pullback_form(S.letter_map(n, s), ctx.model)) for n, s in S.letters()}
    level = [((), Y0, np.zeros(m), 0.0)]
    yield GroupWord(), 0.0, 0.0
    for _ in range(max_length):
        nxt = []
        for (n, s), (gen, form) in forms.items():
            parents = [item for item in level if not (item[0] and item[0][0] == (n, -s))]
            if not parents:
                continue
            Y = np.concatenate([item[1] for item in parents])
            K, err = batch_segment_integrals(form, x, Y, tol)
            K = K.reshape(len(parents), m + 1)
            err = err.reshape(len(parents), m + 1)
            images = gen.apply(Y).reshape(len(parents), m + 1, -1)
            for j, (word, _, Gw, e) in enumerate(parents):
                Gnew = Gw + K[j, 1:] - K[j, 0]
                enew = e + float(np.max(err[j, 1:]) + err[j, 0])
                new = ((n, s),) + word
                nxt.append((new, images[j], Gnew, enew))
        nxt.sort(key=lambda item: item[0])
        for word, _, Gw, e in nxt:
            yield GroupWord(word), float(np.max(np.abs(Gw))), e
        level = nxt


def lipschitz_check(ctx, S: GeneratingSet, sample, max_length: int = 8, slack: float = 1e-5) -> LipschitzReport:
    """Check ``norm_est(w) <= 2 max_s upper(s) |w|_S + slack`` over all reduced words."""
    bounds = {n: semibounded_upper_bound(ctx, g) for n, g in S.generators.items()}
    slope = 2.0 * max(bounds.values())
    worst = -np.inf
    qerr = 0.0
    rows = {}
    count = 0
    for w, est, err in word_norm_table(ctx, S, sample, max_length):
        L = word_length(w, S).value
        worst = max(worst, est - slope * L)
        qerr = max(qerr, err)
        c, mx = rows.get(len(w), (0, 0.0))
        rows[len(w)] = (c + 1, max(mx, est))
        count += 1
    by_length = [(L, c, mx, slope * L) for L, (c, mx) in sorted(rows.items())]
    return LipschitzReport(max_length, count, bounds, slope, float(worst), qerr, by_length, bool(worst <= slack))


# ---------------------------------------------------------------------------
# distortion


@dataclass
class PolterovichReport:
    G_gh: float
    action_diff: float
    cross_check_residual: float
    linearity: list  # [(n, G(g^n, h), n * G(g, h), relative deviation)]
    max_relative_deviation: float
    monotone_growth: bool
    generator_norms: dict
    translation_lower_bound: float
    caveat: str = POLTEROVICH_CAVEAT
    fixed_points: tuple = field(default=())


def polterovich_report(ctx, iso: IsotopySpec, h: SympMap, S: GeneratingSet | None = None,
                       n_max: int = 16, sample=None, tol: float = FIXED_POINT_TOL) -> PolterovichReport:
    """Cocycle growth along powers of a doubly fixed Hamiltonian map ``g``.

    ``p`` is the context basepoint and ``q = h(p)``; both must be fixed by
    ``g``.  With a generating set and a sample, the diagnostic bound
    ``|G(g,h)| / (2 max_s norm_est(s))`` is included.
    """
    g = iso.time_one_map(ctx.model)
    p = ctx.x
    q = h.apply(p)
    _require_fixed(g, p, "p", tol)
    _require_fixed(g, q, "q = h(p)", tol)
    Ggh = G(ctx, g, h)
    ad = action_difference(ctx, iso, p, q, tol)
    rows = []
    for n in range(1, n_max + 1):
        val = G(ctx, power(g, n), h)
        ref = n * Ggh
        dev = abs(val - ref) / abs(ref) if ref != 0 else abs(val)
        rows.append((n, val, ref, dev))
    mags = [abs(v) for _, v, _, _ in rows]
    monotone = all(b > a for a, b in itertools.pairwise(mags)) if abs(Ggh) > 0 else False
    norms = {}
    bound = 0.0
    if S is not None and sample:
        norms = {n: semibounded_norm_estimate(ctx, s, sample) for n, s in S.generators.items()}
        top = max(norms.values())
        # sampled norms at roundoff level carry no information
        if top > 1e-12:
            bound = abs(Ggh) / (2.0 * top)
        else:
            bound = 0.0 if abs(Ggh) <= 1e-12 else float("inf")
    return PolterovichReport(
        G_gh=Ggh,
        action_diff=ad,
        cross_check_residual=abs(Ggh - ad),
        linearity=rows,
        max_relative_deviation=max(d for *_, d in rows),
        monotone_growth=monotone,
        generator_norms=norms,
        translation_lower_bound=bound,
        fixed_points=(tuple(p.tolist()), tuple(np.asarray(q).tolist())),
    )
