"""Who holds what: hospitals own sample ranges, omics centers own features."""

from __future__ import annotations

from dataclasses import dataclass, field


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    """Hospitals with their sample IDs, and per-hospital provider feature maps.

    `serving[hospital][provider]` is the tuple of feature indices that
    provider supplies for that hospital's patients; for each hospital the
    provider subsets must partition the full feature set.
    """

    federator: str
    hospitals: dict[str, tuple[str, ...]]  # hospital id -> sample ids
    serving: dict[str, dict[str, tuple[int, ...]]]
    n_features: int

    def __post_init__(self):
        if not self.hospitals:
            raise TopologyError("topology needs at least one hospital")
        seen: set[str] = set()
        for h, ids in self.hospitals.items():
            dup = seen.intersection(ids)
            if dup:
                raise TopologyError(f"sample ids owned by several hospitals: {sorted(dup)[:5]}")
            if len(set(ids)) != len(ids):
                raise TopologyError(f"duplicate sample ids within hospital {h}")
            seen.update(ids)
        full = set(range(self.n_features))
        for h in self.hospitals:
            if h not in self.serving:
                raise TopologyError(f"no provider map for hospital {h}")
            covered: list[int] = []
            for feats in self.serving[h].values():
                covered.extend(feats)
            if len(covered) != len(set(covered)):
                raise TopologyError(f"overlapping provider features for hospital {h}")
            if set(covered) != full:
                raise TopologyError(f"provider features for hospital {h} do not cover all {self.n_features} features")

    @property
    def hospital_ids(self) -> list[str]:
        return sorted(self.hospitals)

    @property
    def provider_ids(self) -> list[str]:
        out: set[str] = set()
        for m in self.serving.values():
            out.update(m)
        return sorted(out)

    @property
    def n_hospitals(self) -> int:
        return len(self.hospitals)


def even_topology(sample_ids, n_features: int, n_hospitals: int, n_providers: int, federator: str = "federator") -> Topology:
    """Contiguous even split of samples over hospitals and features over providers.

    Every provider serves the same feature slice to every hospital.
    """
    ids = list(sample_ids)
    if n_hospitals < 1 or n_hospitals > len(ids):
        raise TopologyError(f"cannot split {len(ids)} samples over {n_hospitals} hospitals")
    if n_providers < 1 or n_providers > n_features:
        raise TopologyError(f"cannot split {n_features} features over {n_providers} providers")
    hospitals = {}
    bounds = [round(i * len(ids) / n_hospitals) for i in range(n_hospitals + 1)]
    for i in range(n_hospitals):
        hospitals[f"h{i}"] = tuple(ids[bounds[i] : bounds[i + 1]])
    fbounds = [round(i * n_features / n_providers) for i in range(n_providers + 1)]
    providers = {f"o{i}": tuple(range(fbounds[i], fbounds[i + 1])) for i in range(n_providers)}
    serving = {h: dict(providers) for h in hospitals}
    return Topology(federator=federator, hospitals=hospitals, serving=serving, n_features=n_features)
