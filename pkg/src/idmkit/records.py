"""Per-subject observation data and observation-pattern classification."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .exceptions import InvalidRecordError


class ObservationPattern(enum.Enum):
    """How a subject's path through the illness-death states was observed."""

    HEALTHY_CENSORED = "healthy-censored"
    ILL_CENSORED = "ill-censored"
    ILL_THEN_DEAD = "ill-then-dead"
    DEAD_INCONCLUSIVE = "dead-inconclusive"
    HEALTHY_THEN_DEAD_CONCLUSIVE = "healthy-then-dead-conclusive"


@dataclass(frozen=True)
class SubjectRecord:
    """One participant's longitudinal observation summary.

    Parameters
    ----------
    id : str
        Opaque subject identifier.
    entry_age : float
        Age at the first disease-free assessment used for left truncation.
    last_healthy_age : float
        Last assessment age known disease-free (L).
    onset_exact : float, optional
        Exact onset age when a review pinned the onset date.
    onset_interval : (float, float), optional
        Half-open onset interval (L, R] when onset is interval-censored.
        Mutually exclusive with ``onset_exact``.
    death_age : float, optional
        Age at death; ``None`` means alive at ``last_alive_age``.
    last_alive_age : float
        Age at last study contact.
    covariates : dict
        Named numeric covariates (e.g. sex, education).
    birth_year : int, optional
        Calendar birth year, used for cohort assignment and the census.
    conclusive_at_death : bool
        True when a post-mortem review closed the onset window of an
        undiagnosed death.
    last_assessment_age : float, optional
        Age at the most recent cognitive assessment of any outcome;
        defaults to ``last_healthy_age``.
    """

    id: str
    entry_age: float
    last_healthy_age: float
    onset_exact: float | None = None
    onset_interval: tuple[float, float] | None = None
    death_age: float | None = None
    last_alive_age: float | None = None
    covariates: dict = field(default_factory=dict)
    birth_year: int | None = None
    conclusive_at_death: bool = False
    last_assessment_age: float | None = None

    def __post_init__(self):
        if self.last_alive_age is None:
            terminal = self.death_age if self.death_age is not None else self.last_healthy_age
            object.__setattr__(self, "last_alive_age", float(terminal))
        if self.last_assessment_age is None:
            object.__setattr__(self, "last_assessment_age", float(self.last_healthy_age))
        if self.onset_exact is not None and self.onset_interval is not None:
            raise InvalidRecordError(f"subject {self.id!r}: both exact and interval onset set")
        if not self.entry_age <= self.last_healthy_age + 1e-12:
            raise InvalidRecordError(
                f"subject {self.id!r}: entry_age {self.entry_age} after "
                f"last_healthy_age {self.last_healthy_age}"
            )
        terminal = self.death_age if self.death_age is not None else self.last_alive_age
        if self.last_healthy_age > terminal + 1e-12:
            raise InvalidRecordError(
                f"subject {self.id!r}: last_healthy_age {self.last_healthy_age} "
                f"after terminal age {terminal}"
            )
        if self.onset_interval is not None:
            lo, hi = self.onset_interval
            if not lo < hi:
                raise InvalidRecordError(
                    f"subject {self.id!r}: onset interval ({lo}, {hi}] is empty"
                )
            if hi > terminal + 1e-12:
                raise InvalidRecordError(
                    f"subject {self.id!r}: onset interval end {hi} beyond "
                    f"terminal age {terminal}"
                )
        if self.onset_exact is not None:
            if self.onset_exact < self.last_healthy_age - 1e-12:
                raise InvalidRecordError(
                    f"subject {self.id!r}: exact onset {self.onset_exact} before "
                    f"last_healthy_age {self.last_healthy_age}"
                )
            if self.onset_exact > terminal + 1e-12:
                raise InvalidRecordError(
                    f"subject {self.id!r}: exact onset {self.onset_exact} beyond "
                    f"terminal age {terminal}"
                )

    @property
    def diagnosed(self) -> bool:
        return self.onset_exact is not None or self.onset_interval is not None

    @property
    def dead(self) -> bool:
        return self.death_age is not None

    @property
    def terminal_age(self) -> float:
        """Death age if dead, else the censoring age for the post-onset clock."""
        return self.death_age if self.dead else self.last_alive_age


def classify_pattern(rec: SubjectRecord, dementia_conclusive_at_death: bool | None = None
                     ) -> ObservationPattern:
    """Assign the observation pattern that fixes a record's likelihood form.

    Undiagnosed deaths split on the conclusive-at-death flag: a closing
    post-mortem review makes the death a conclusive disease-free one,
    otherwise onset may hide in ``(last_healthy_age, death_age]``.
    The flag defaults to the record's own ``conclusive_at_death``.
    """
    if dementia_conclusive_at_death is None:
        dementia_conclusive_at_death = rec.conclusive_at_death
    if rec.diagnosed:
        return ObservationPattern.ILL_THEN_DEAD if rec.dead else ObservationPattern.ILL_CENSORED
    if rec.dead:
        if dementia_conclusive_at_death:
            return ObservationPattern.HEALTHY_THEN_DEAD_CONCLUSIVE
        return ObservationPattern.DEAD_INCONCLUSIVE
    return ObservationPattern.HEALTHY_CENSORED
