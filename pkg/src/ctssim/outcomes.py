"""Potential-outcome schedules for hypothetical violence-reduction programs.

For every unit we build latent act counts under control (``y0``) and under
treatment (``y1``).  Units with no violence on the targeted acts under
control stay violence free under treatment (programs are assumed not to
initiate violence).  Each remaining ("violent") unit draws one of four
response types: no effect, cessation (all targeted violence stops),
reduction (each positive targeted count drops by a fixed amount), or
increase (each positive targeted count rises by that amount).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

import numpy as np

from . import coding
from .joint import ActSpec


class ResponseType(IntEnum):
    NEVER_VIOLENT = 0
    NO_EFFECT = 1
    CESSATION = 2
    REDUCTION = 3
    INCREASE = 4


TARGET_PRESETS = ("all", "physical", "sexual", "moderate")


@dataclass(frozen=True)
class EffectScenario:
    """Distribution of response types and how effects are applied.

    Attributes:
        probs: probabilities of (no effect, cessation, reduction, increase)
            among violent units; must sum to 1.
        magnitude: fixed count change for reduction/increase types (>= 1).
        target: which acts the program affects: "all", "physical", "sexual",
            "moderate", or an explicit sequence of 1-based act indices.
        floor: lower bound for reduced counts.  The default 1 keeps
            "reduction" disjoint from "cessation" (violence continues);
            set 0 to let large reductions reach zero.
        name: optional preset label for reports.
    """

    probs: tuple[float, float, float, float]
    magnitude: int = 2
    target: str | tuple[int, ...] = "all"
    floor: int = 1
    name: str | None = None

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (4,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("probs must be 4 non-negative values summing to 1")
        object.__setattr__(self, "probs", tuple(float(x) for x in p))
        if int(self.magnitude) != self.magnitude or self.magnitude < 1:
            raise ValueError("magnitude must be a positive integer")
        if self.floor not in (0, 1):
            raise ValueError("floor must be 0 or 1")
        if isinstance(self.target, str):
            if self.target not in TARGET_PRESETS:
                raise ValueError(f"unknown target preset {self.target!r}")
        else:
            object.__setattr__(self, "target", tuple(int(i) for i in self.target))
            if not self.target:
                raise ValueError("explicit target index list is empty")


def target_columns(acts: Sequence[ActSpec], target) -> np.ndarray:
    """0-based column indices of the acts a scenario affects."""
    if isinstance(target, str):
        if target == "all":
            cols = [i for i in range(len(acts))]
        elif target in ("physical", "sexual"):
            cols = [i for i, a in enumerate(acts) if a.category == target]
        elif target == "moderate":
            cols = [i for i, a in enumerate(acts) if a.severity == "moderate"]
        else:
            raise ValueError(f"unknown target preset {target!r}")
    else:
        by_index = {a.index: i for i, a in enumerate(acts)}
        try:
            cols = [by_index[int(i)] for i in target]
        except KeyError as exc:
            raise ValueError(f"target act index {exc.args[0]} not in act table") from None
    if not cols:
        raise ValueError(f"target {target!r} selects no acts in this act table")
    return np.asarray(cols, dtype=np.intp)


@dataclass
class PotentialOutcomeTable:
    """Per-unit latent schedule: counts under control/treatment, response
    type, and treatment assignment."""

    y0: np.ndarray
    y1: np.ndarray
    s: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        self.y0 = np.asarray(self.y0, dtype=np.int64)
        self.y1 = np.asarray(self.y1, dtype=np.int64)
        self.s = np.asarray(self.s, dtype=np.int8)
        self.z = np.asarray(self.z, dtype=np.int8)
        n = self.y0.shape[0]
        if self.y0.ndim != 2 or self.y1.shape != self.y0.shape:
            raise ValueError("y0 and y1 must be matching n x K matrices")
        if self.s.shape != (n,) or self.z.shape != (n,):
            raise ValueError("s and z must be length-n vectors")
        if not np.isin(self.z, (0, 1)).all():
            raise ValueError("z must be binary")

    @property
    def n_units(self) -> int:
        return self.y0.shape[0]

    def observed(self) -> np.ndarray:
        """Revealed counts: treated units show y1, controls show y0."""
        return np.where(self.z[:, None] == 1, self.y1, self.y0)

    def check(self, scenario: EffectScenario, acts: Sequence[ActSpec]):
        """Verify the schedule invariants; raises on violation."""
        cols = target_columns(acts, scenario.target)
        t0, t1 = self.y0[:, cols], self.y1[:, cols]
        never = self.s == ResponseType.NEVER_VIOLENT
        if np.any(t0[never].sum(axis=1) > 0):
            raise AssertionError("never-violent unit has targeted violence under control")
        if not np.array_equal(self.y1[never], self.y0[never]):
            raise AssertionError("never-violent unit changed under treatment")
        if np.any((t1 > 0) & (t0 == 0)):
            raise AssertionError("treatment initiated a previously-zero targeted act")
        cess = self.s == ResponseType.CESSATION
        if np.any(t1[cess] != 0):
            raise AssertionError("cessation unit keeps targeted violence")
        red = self.s == ResponseType.REDUCTION
        r0, r1 = t0[red], t1[red]
        # entries already at the floor cannot drop further
        if np.any(r1[r0 > scenario.floor] >= r0[r0 > scenario.floor]):
            raise AssertionError("reduction did not lower a positive targeted count")
        at_floor = (r0 > 0) & (r0 <= scenario.floor)
        if np.any(r1[at_floor] != r0[at_floor]):
            raise AssertionError("reduction changed a count already at the floor")
        inc = self.s == ResponseType.INCREASE
        pos = t0[inc] > 0
        if np.any(t1[inc][pos] <= t0[inc][pos]):
            raise AssertionError("increase did not raise a positive targeted count")
        untargeted = np.setdiff1d(np.arange(self.y0.shape[1]), cols)
        if not np.array_equal(self.y1[:, untargeted], self.y0[:, untargeted]):
            raise AssertionError("untargeted acts changed under treatment")


def assign_response_types(
    y0: np.ndarray,
    scenario: EffectScenario,
    acts: Sequence[ActSpec],
    rng: np.random.Generator,
) -> np.ndarray:
    """Label each unit: never-violent, or one of the four drawn types.

    A unit is "violent" (eligible for a type draw) if any targeted act is
    positive under control; untargeted violence never triggers effects.
    """
    cols = target_columns(acts, scenario.target)
    violent = (np.asarray(y0)[:, cols] > 0).any(axis=1)
    s = np.full(y0.shape[0], ResponseType.NEVER_VIOLENT, dtype=np.int8)
    n_violent = int(violent.sum())
    if n_violent:
        draws = rng.choice(
            np.array(
                [ResponseType.NO_EFFECT, ResponseType.CESSATION,
                 ResponseType.REDUCTION, ResponseType.INCREASE],
                dtype=np.int8,
            ),
            size=n_violent,
            p=scenario.probs,
        )
        s[violent] = draws
    return s


def apply_effects(
    y0: np.ndarray,
    s: np.ndarray,
    scenario: EffectScenario,
    acts: Sequence[ActSpec],
) -> np.ndarray:
    """Build treated counts from control counts and response types.

    Only positive targeted entries change; zero entries within a violent
    unit's row stay zero (treatment never initiates an act).  Reductions
    stop at ``scenario.floor`` rather than silently becoming cessations.
    """
    y0 = np.asarray(y0, dtype=np.int64)
    s = np.asarray(s)
    cols = target_columns(acts, scenario.target)
    violent = (y0[:, cols] > 0).any(axis=1)
    if np.any(violent != (s != ResponseType.NEVER_VIOLENT)):
        raise ValueError("response-type labels inconsistent with y0 and target")
    y1 = y0.copy()
    x = int(scenario.magnitude)

    sub = y1[np.ix_(s == ResponseType.CESSATION, cols)]
    sub[:] = 0
    y1[np.ix_(s == ResponseType.CESSATION, cols)] = sub

    sub = y1[np.ix_(s == ResponseType.REDUCTION, cols)]
    pos = sub > 0
    sub[pos] = np.maximum(sub[pos] - x, scenario.floor)
    y1[np.ix_(s == ResponseType.REDUCTION, cols)] = sub

    sub = y1[np.ix_(s == ResponseType.INCREASE, cols)]
    pos = sub > 0
    sub[pos] = sub[pos] + x
    y1[np.ix_(s == ResponseType.INCREASE, cols)] = sub
    return y1


def true_estimands(table: PotentialOutcomeTable) -> dict[str, float]:
    """Finite-sample coded average treatment effects of a schedule.

    Means of coded(y1) - coded(y0) over all units, for the binary and
    normalized-sum codings applied to categorized counts.  Exact (no
    sampling involved).
    """
    c0 = coding.categorize(table.y0)
    c1 = coding.categorize(table.y1)
    return {
        "binary": float(np.mean(coding.code_binary(c1) - coding.code_binary(c0))),
        "sum": float(np.mean(coding.code_sum(c1) - coding.code_sum(c0))),
    }


def randomize(n: int, rng: np.random.Generator) -> np.ndarray:
    """Complete randomization: exactly floor(n/2) treated, uniformly."""
    if n < 2:
        raise ValueError("need at least 2 units to randomize")
    z = np.zeros(n, dtype=np.int8)
    z[rng.permutation(n)[: n // 2]] = 1
    return z
